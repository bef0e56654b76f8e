"""Owner-signed permission credentials and their four-step validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from . import crypto, engine
from .crypto import hash_parts
from .engine import ProofEnvelope, VerifyingKey
from .errors import AuthGateFailed, EncodingError, InputError
from .identity import ProfileConfig, canonical_json
from .phases import BIOMETRIC_PROGRAM, TRUE, parse_biometric_claim


@dataclass(frozen=True)
class PermissionCredential:
    agent_id: str
    user_id: str
    task_id: str
    task_definition: str
    security_level: int
    scope: tuple[tuple[str, int], ...]
    valid_from: int
    valid_until: int
    revocation_id: bytes
    owner_signature: bytes = b""

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple((str(a), int(n)) for a, n in self.scope))
        if not self.valid_from < self.valid_until:
            raise InputError("valid_from must precede valid_until")

    def body(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "user_id": self.user_id,
            "task_id": self.task_id,
            "task_definition": self.task_definition,
            "security_level": self.security_level,
            "scope": [{"action": a, "limit": n} for a, n in self.scope],
            "valid_from": self.valid_from,
            "valid_until": self.valid_until,
            "revocation_id": self.revocation_id.hex(),
        }

    def signing_bytes(self) -> bytes:
        return canonical_json(self.body())

    def limit_for(self, action: str) -> int | None:
        for a, n in self.scope:
            if a == action:
                return n
        return None

    def to_json(self) -> dict:
        return dict(self.body(), owner_signature=self.owner_signature.hex())

    @classmethod
    def from_json(cls, obj: dict) -> "PermissionCredential":
        return cls(
            obj["agent_id"],
            obj["user_id"],
            obj["task_id"],
            obj["task_definition"],
            int(obj["security_level"]),
            tuple((s["action"], int(s["limit"])) for s in obj["scope"]),
            int(obj["valid_from"]),
            int(obj["valid_until"]),
            crypto.from_hex(obj["revocation_id"]),
            crypto.from_hex(obj.get("owner_signature", "")),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def loads(cls, text: str) -> "PermissionCredential":
        return cls.from_json(json.loads(text))


def revocation_id_for(agent_id: str, task_id: str, valid_from: int) -> bytes:
    return hash_parts(b"baid/revocation", agent_id, task_id, crypto.encode_int(valid_from))


def issue_credential(
    cfg: ProfileConfig,
    owner_secret: bytes,
    vk: VerifyingKey,
    phase1_result: ProofEnvelope,
    *,
    agent_id: str,
    user_id: str,
    task_id: str,
    task_definition: str,
    security_level: int,
    scope,
    valid_from: int,
    valid_until: int,
) -> PermissionCredential:
    """Sign a credential, gated on a fresh, verifying, positive phase-1 proof."""
    c_bio = BIOMETRIC_PROGRAM.commitment
    if not engine.verify(vk, c_bio, phase1_result.public_inputs, phase1_result.public_output, phase1_result):
        raise AuthGateFailed("phase-1 envelope does not verify")
    if phase1_result.public_output != TRUE:
        raise AuthGateFailed("operator biometric authentication failed")
    try:
        claimed_user = parse_biometric_claim(phase1_result.claim)["user_id"]
    except (EncodingError, ValueError) as exc:
        raise AuthGateFailed(f"unreadable phase-1 claim: {exc}") from exc
    if claimed_user != cfg.human_identifier:
        raise AuthGateFailed("phase-1 proof authenticates a different operator")
    vc = PermissionCredential(
        agent_id,
        user_id,
        task_id,
        task_definition,
        security_level,
        tuple(scope),
        valid_from,
        valid_until,
        revocation_id_for(agent_id, task_id, valid_from),
    )
    return replace(vc, owner_signature=crypto.sign(owner_secret, vc.signing_bytes()))


@dataclass(frozen=True)
class RevocationList:
    revoked: frozenset = frozenset()
    list_signature: bytes = b""

    def signing_bytes(self) -> bytes:
        return canonical_json({"revoked": sorted(r.hex() for r in self.revoked)})

    def verify(self, owner_public: bytes) -> bool:
        return crypto.verify_sig(owner_public, self.signing_bytes(), self.list_signature)

    def to_json(self) -> dict:
        return {"revoked": sorted(r.hex() for r in self.revoked), "list_signature": self.list_signature.hex()}

    @classmethod
    def from_json(cls, obj: dict) -> "RevocationList":
        return cls(frozenset(crypto.from_hex(r) for r in obj["revoked"]), crypto.from_hex(obj["list_signature"]))


def sign_revocations(owner_secret: bytes, revoked=()) -> RevocationList:
    rl = RevocationList(frozenset(revoked))
    return replace(rl, list_signature=crypto.sign(owner_secret, rl.signing_bytes()))


STEPS = ("signature", "validity", "scope", "revocation")


@dataclass
class ValidationReport:
    steps: dict[str, bool]
    reasons: dict[str, str] = field(default_factory=dict)

    @property
    def verdict(self) -> bool:
        return all(self.steps[s] for s in STEPS)

    @property
    def first_failure(self) -> str | None:
        return next((s for s in STEPS if not self.steps[s]), None)

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "steps": dict(self.steps), "reasons": dict(self.reasons)}


def validate_credential(
    vc: PermissionCredential,
    owner_pubkey: bytes,
    now: int,
    requested: tuple[str, int],
    revocations: RevocationList | None = None,
) -> ValidationReport:
    """Run all four checks; every step is evaluated even after a failure."""
    steps, reasons = {}, {}

    steps["signature"] = crypto.verify_sig(owner_pubkey, vc.signing_bytes(), vc.owner_signature)
    if not steps["signature"]:
        reasons["signature"] = "owner signature does not verify"

    steps["validity"] = vc.valid_from <= now < vc.valid_until
    if not steps["validity"]:
        reasons["validity"] = f"now={now} outside [{vc.valid_from}, {vc.valid_until})"

    action, amount = requested
    limit = vc.limit_for(action)
    steps["scope"] = limit is not None and 0 <= int(amount) <= limit
    if not steps["scope"]:
        reasons["scope"] = f"{action} {amount} not within scope" + ("" if limit is None else f" (limit {limit})")

    if revocations is None:
        steps["revocation"] = True
    elif not revocations.verify(owner_pubkey):
        steps["revocation"] = False
        reasons["revocation"] = "revocation list signature invalid"
    else:
        steps["revocation"] = vc.revocation_id not in revocations.revoked
        if not steps["revocation"]:
            reasons["revocation"] = "credential revoked"

    return ValidationReport(steps, reasons)
