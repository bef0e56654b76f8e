"""Agent identity: on-chain AgentIDs, recursive session proofs and scoped credentials."""

from .crypto import canonical_encode, digest, keygen
from .engine import ProofEnvelope, commit_prog, prove, setup, verify, verify_chain_tail
from .identity import AgentIdentifier, EmbeddingVector, ProfileConfig, make_agent_id, profile_hash
from .ledger import LedgerState, genesis, get_storage_proof
from .phases import FinalAttestation, finalize_session, verify_attestation
from .credentials import PermissionCredential, issue_credential, validate_credential
from .runtime import ScenarioConfig, adversary_suite, handle_verification_request, run_scenario

__version__ = "0.1.0"

__all__ = [
    "AgentIdentifier",
    "EmbeddingVector",
    "FinalAttestation",
    "LedgerState",
    "PermissionCredential",
    "ProfileConfig",
    "ProofEnvelope",
    "ScenarioConfig",
    "adversary_suite",
    "canonical_encode",
    "commit_prog",
    "digest",
    "finalize_session",
    "genesis",
    "get_storage_proof",
    "handle_verification_request",
    "issue_credential",
    "keygen",
    "make_agent_id",
    "profile_hash",
    "prove",
    "run_scenario",
    "setup",
    "validate_credential",
    "verify",
    "verify_attestation",
    "verify_chain_tail",
]
