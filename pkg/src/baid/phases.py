"""Guest programs of the authentication pipeline and the chain they build.

Phase 1 checks the operator's face embedding against the stored template,
phase 2 checks the local profile against the on-chain AgentID through a
storage proof, and each phase-3 turn checks the previous proof, the TLS
provenance of the service response, and the agent's state update. Every
envelope embeds the one before it, so the last envelope carries the whole
session.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable

from . import crypto, engine
from .crypto import canonical_decode, canonical_encode, decode_int, digest, encode_int
from .engine import GuestProgram, ProofEnvelope, ProgramRegistry, PublicParams, VerifyingKey
from .errors import CertChain, ConstraintViolation, EncodingError, InputError
from .identity import AgentIdentifier, EmbeddingVector, ProfileConfig, canonical_json, profile_hash
from .ledger import account_leaf, agentid_slot
from .tls import ProvenanceClaim, TlsTranscript, verify_provenance
from .trie import DEPTH, TriePath, trie_verify

DEFAULT_TAU = (3, 4)
TRUE, FALSE = b"\x01", b"\x00"


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConstraintViolation(message)


# -- phase 1: biometric -----------------------------------------------------


@dataclass(frozen=True)
class BiometricStatement:
    tau_num: int
    tau_den: int
    user_id: str
    template_commitment: bytes
    v_capture: EmbeddingVector = field(repr=False)
    v_stored: EmbeddingVector = field(repr=False)
    bound_user_id: str = ""

    def __post_init__(self):
        if not (0 < self.tau_num <= self.tau_den):
            raise InputError("threshold must satisfy 0 < tau_num <= tau_den")

    @classmethod
    def build(cls, cfg: ProfileConfig, v_capture: EmbeddingVector, tau=DEFAULT_TAU, user_id: str | None = None):
        if cfg.biometric_template is None:
            raise InputError("profile has no registered biometric template")
        return cls(
            tau[0],
            tau[1],
            cfg.human_identifier if user_id is None else user_id,
            digest(cfg.biometric_template.to_bytes()),
            v_capture,
            cfg.biometric_template,
            cfg.human_identifier,
        )

    def claim(self) -> bytes:
        return canonical_encode([encode_int(self.tau_num), encode_int(self.tau_den), self.user_id, self.template_commitment])


def cosine_at_least(vc, vs, tau_num: int, tau_den: int) -> bool:
    """cos(vc, vs) >= tau_num/tau_den, decided in exact integer arithmetic."""
    dot = sum(a * b for a, b in zip(vc, vs))
    nc = sum(a * a for a in vc)
    ns = sum(b * b for b in vs)
    _require(nc > 0 and ns > 0, "zero-norm embedding: cosine undefined")
    # both sides non-negative once dot > 0, so squaring preserves the order
    return dot > 0 and dot * dot * tau_den * tau_den >= tau_num * tau_num * nc * ns


def guest_biometric(statement: BiometricStatement) -> bool:
    _require(len(statement.v_capture.components) == 128, "capture must have 128 components")
    _require(statement.user_id == statement.bound_user_id, "user id is not the bound identifier")
    _require(digest(statement.v_stored.to_bytes()) == statement.template_commitment, "stored template does not match its commitment")
    return cosine_at_least(statement.v_capture.components, statement.v_stored.components, statement.tau_num, statement.tau_den)


def _eval_biometric(claim: bytes, witness: BiometricStatement, prior) -> tuple[bytes, int]:
    parts = canonical_decode(claim)
    _require(len(parts) == 4, "biometric claim has 4 fields")
    _require(parts == canonical_decode(witness.claim()), "witness statement differs from the public claim")
    ok = guest_biometric(witness)
    return (TRUE if ok else FALSE), 3 * 128 + 8


BIOMETRIC_PROGRAM = GuestProgram(
    "baid.phase1.biometric",
    engine.make_descriptor("baid.phase1.biometric", "1.0.0", "bio-claim/v1"),
    _eval_biometric,
    "bio-claim/v1",
)


def parse_biometric_claim(claim: bytes) -> dict:
    num, den, user_id, tpl = canonical_decode(claim)
    return {"tau_num": decode_int(num), "tau_den": decode_int(den), "user_id": user_id.decode(), "template_commitment": tpl}


# -- phase 2: configuration integrity ---------------------------------------


@dataclass(frozen=True)
class ConfigStatement:
    r_storage: bytes
    expected_profile_hash: bytes
    slot_key: bytes
    agent_program_commitment: bytes
    config_local: ProfileConfig = field(repr=False)
    agent_identifier: AgentIdentifier = field(repr=False)
    storage_path: TriePath = field(repr=False)
    account_path: TriePath = field(repr=False)
    state_root: bytes = field(repr=False)

    @classmethod
    def from_ledger(cls, proof, cfg: ProfileConfig, ident: AgentIdentifier) -> "ConfigStatement":
        """Build from a ``StorageProofBundle`` for the agent's AgentID slot."""
        return cls(
            proof.storage_root,
            ident.profile_hash,
            agentid_slot(ident.text),
            ident.program_commitment,
            cfg,
            ident,
            proof.storage_path,
            proof.account_path,
            proof.state_root,
        )

    def claim(self) -> bytes:
        return canonical_encode([self.r_storage, self.expected_profile_hash, self.slot_key, self.agent_program_commitment])


def parse_config_claim(claim: bytes) -> dict:
    r, ph, slot, cp = canonical_decode(claim)
    return {"r_storage": r, "expected_profile_hash": ph, "slot_key": slot, "agent_program_commitment": cp}


def guest_config(statement: ConfigStatement) -> bytes:
    """Return the verified AgentID slot value."""
    s = statement
    _require(profile_hash(s.config_local) == s.expected_profile_hash, "local profile hash differs from the anchored profile hash")
    _require(s.storage_path.key == s.slot_key, "storage path is for another slot")
    _require(trie_verify(s.r_storage, s.storage_path), "storage path does not reach r_storage")
    _require(s.account_path.value == account_leaf("agent", s.r_storage), "account leaf does not commit to r_storage")
    _require(trie_verify(s.state_root, s.account_path), "account path does not reach the state root")
    ident = s.agent_identifier
    _require(ident.profile_hash == s.expected_profile_hash, "identifier carries another profile hash")
    _require(ident.program_commitment == s.agent_program_commitment, "identifier carries another program commitment")
    _require(agentid_slot(ident.text) == s.slot_key, "slot key is not this AgentID's slot")
    _require(ident.id_digest == s.storage_path.value, "anchored AgentID differs from the recomputed identifier")
    return s.storage_path.value


def _eval_config(claim: bytes, witness: ConfigStatement, prior: ProofEnvelope) -> tuple[bytes, int]:
    _require(canonical_decode(claim) == canonical_decode(witness.claim()), "witness statement differs from the public claim")
    _require(prior.public_output == TRUE, "phase 1 did not authenticate the operator")
    bio = parse_biometric_claim(prior.claim)
    cfg = witness.config_local
    _require(bio["user_id"] == cfg.human_identifier, "phase 1 authenticated another user")
    _require(
        cfg.biometric_template is not None and digest(cfg.biometric_template.to_bytes()) == bio["template_commitment"],
        "phase 1 used a template other than the profile's",
    )
    return guest_config(witness), 2 * DEPTH + 16


CONFIG_PROGRAM = GuestProgram(
    "baid.phase2.config",
    engine.make_descriptor("baid.phase2.config", "1.0.0", "config-claim/v1"),
    _eval_config,
    "config-claim/v1",
    frozenset({BIOMETRIC_PROGRAM.commitment}),
)


# -- phase 3: turns ---------------------------------------------------------


@dataclass(frozen=True)
class SessionState:
    turn_index: int = 0
    history: tuple[tuple[bytes, bytes, bytes], ...] = ()

    def __post_init__(self):
        if self.turn_index != len(self.history):
            raise InputError("turn_index must equal history length")

    def to_bytes(self) -> bytes:
        flat = [x for entry in self.history for x in entry]
        return canonical_encode([b"baid/session", encode_int(self.turn_index), *flat])

    @classmethod
    def from_bytes(cls, data: bytes) -> "SessionState":
        parts = canonical_decode(data)
        if len(parts) < 2 or parts[0] != b"baid/session" or (len(parts) - 2) % 3:
            raise EncodingError("malformed session state")
        flat = parts[2:]
        history = tuple(tuple(flat[i : i + 3]) for i in range(0, len(flat), 3))
        return cls(decode_int(parts[1]), history)

    @property
    def commitment(self) -> bytes:
        return digest(self.to_bytes())

    def extend(self, q: bytes, a: bytes, o: bytes) -> "SessionState":
        return SessionState(self.turn_index + 1, self.history + ((q, a, o),))


# Tools are pure functions of (parsed action args, tool params) -> JSON-able result.
Tool = Callable[[dict, dict], Any]


def _check_inventory(args: dict, params: dict) -> dict:
    stock = int(params.get("inventory", {}).get(args["sku"], 0))
    qty = int(args.get("qty", 1))
    return {"sku": args["sku"], "qty": qty, "in_stock": stock, "available": stock >= qty}


def _compute_total(args: dict, params: dict) -> dict:
    price = int(params.get("prices", {}).get(args["sku"], args.get("unit_price", 0)))
    qty = int(args.get("qty", 1))
    return {"sku": args["sku"], "qty": qty, "unit_price": price, "total": price * qty}


def _make_payment(args: dict, params: dict) -> dict:
    return {"payee": args["payee"], "amount": int(args["amount"]), "currency": args.get("currency", "CNY")}


def _confirm_order(args: dict, params: dict) -> dict:
    order = canonical_json({k: args[k] for k in sorted(args)})
    return {"order_id": digest(order).hex()[:16], "status": "confirmed"}


def _reply(args: dict, params: dict) -> dict:
    return {"reply": args.get("text", "")}


TOOLS: dict[str, Tool] = {
    "check_inventory": _check_inventory,
    "compute_total": _compute_total,
    "make_payment": _make_payment,
    "confirm_order": _confirm_order,
    "reply": _reply,
}


def parse_action(response: bytes) -> tuple[str, dict]:
    """Responses are JSON ``{"action": name, "args": {...}}``; plain text is a reply."""
    try:
        obj = json.loads(response)
    except (UnicodeDecodeError, json.JSONDecodeError):
        return "reply", {"text": response.decode("utf-8", "replace")}
    if not isinstance(obj, dict) or "action" not in obj:
        return "reply", {"text": response.decode("utf-8", "replace")}
    return str(obj["action"]), dict(obj.get("args", {}))


def run_tool(response: bytes, tool_params: dict, tools: dict[str, Tool] = TOOLS) -> bytes:
    action, args = parse_action(response)
    _require(action in tools, f"unknown tool {action!r}")
    try:
        result = tools[action](args, tool_params or {})
    except (KeyError, ValueError, TypeError) as exc:
        raise ConstraintViolation(f"tool {action} failed: {exc}") from exc
    return canonical_json({"action": action, "result": result})


@dataclass(frozen=True)
class TurnStatement:
    turn_index: int
    h_prev: bytes
    query_commitment: bytes
    response_commitment: bytes
    provenance_claim: ProvenanceClaim
    h_next: bytes
    root_ca: bytes
    query: bytes = field(repr=False, default=b"")
    transcript: TlsTranscript | None = field(repr=False, default=None)
    state_prev: SessionState = field(repr=False, default_factory=SessionState)
    tool_params: dict = field(repr=False, default_factory=dict)

    def claim(self) -> bytes:
        return canonical_encode(
            [
                encode_int(self.turn_index),
                self.h_prev,
                self.query_commitment,
                self.response_commitment,
                self.provenance_claim.server_name,
                self.provenance_claim.data_commitment,
                self.h_next,
                self.root_ca,
            ]
        )


def parse_turn_claim(claim: bytes) -> dict:
    t, h_prev, qc, rc, server, dc, h_next, root = canonical_decode(claim)
    return {
        "turn_index": decode_int(t),
        "h_prev": h_prev,
        "query_commitment": qc,
        "response_commitment": rc,
        "server_name": server.decode(),
        "data_commitment": dc,
        "h_next": h_next,
        "root_ca": root,
    }


def parse_turn_output(output: bytes) -> dict:
    h_next, oc = canonical_decode(output)
    return {"h_next": h_next, "output_commitment": oc}


def build_turn(
    state_prev: SessionState,
    query: bytes,
    response: bytes,
    transcript: TlsTranscript,
    server_name: str,
    root_ca: bytes,
    tool_params: dict | None = None,
    tools: dict[str, Tool] = TOOLS,
) -> tuple[TurnStatement, SessionState]:
    """Honest statement for one turn, plus the successor state."""
    o = run_tool(response, tool_params or {}, tools)
    nxt = state_prev.extend(query, response, o)
    rc = digest(response)
    stmt = TurnStatement(
        state_prev.turn_index + 1,
        state_prev.commitment,
        digest(query),
        rc,
        ProvenanceClaim(server_name, rc),
        nxt.commitment,
        root_ca,
        query,
        transcript,
        state_prev,
        dict(tool_params or {}),
    )
    return stmt, nxt


def turn_evaluate(config_commitment: bytes, agent_commitment: bytes, tools: dict[str, Tool] = TOOLS):
    """Turn guest logic; ``agent_commitment`` is the C_P compiled into it."""

    def evaluate(claim: bytes, w: TurnStatement, prior: ProofEnvelope) -> tuple[bytes, int]:
        c = parse_turn_claim(claim)
        t = c["turn_index"]
        _require(t >= 1, "turn index starts at 1")
        # (1) recursive dependency: the prior itself was verified by the engine
        if t == 1:
            _require(prior.program_commitment == config_commitment, "turn 1 must extend the phase-2 proof")
            cfg_claim = parse_config_claim(prior.claim)
            _require(cfg_claim["agent_program_commitment"] == agent_commitment, "phase 2 anchored a different agent program")
        else:
            _require(prior.program_commitment != config_commitment, "turn must extend the previous turn")
            prev = parse_turn_claim(prior.claim)
            _require(prev["turn_index"] == t - 1, "prior is not the previous turn")
            _require(parse_turn_output(prior.public_output)["h_next"] == c["h_prev"], "h_prev does not match the prior turn's state")
        state = w.state_prev
        _require(state.turn_index == t - 1, "previous state has the wrong turn index")
        _require(state.commitment == c["h_prev"], "previous state does not match h_prev")
        _require(digest(w.query) == c["query_commitment"], "query does not match its commitment")
        # (2) provenance of the service response
        if w.transcript is None:
            raise CertChain("turn has no TLS transcript to check")
        _require(w.transcript.aad == digest(w.query), "TLS record answers a different request")
        _require(c["response_commitment"] == c["data_commitment"], "response commitment differs from the provenance claim")
        a_t = verify_provenance(w.transcript, ProvenanceClaim(c["server_name"], c["data_commitment"]), c["root_ca"])
        # (3) agent computation and state update
        o_t = run_tool(a_t, w.tool_params, tools)
        nxt = state.extend(w.query, a_t, o_t)
        _require(nxt.commitment == c["h_next"], "computed state commitment differs from h_next")
        return canonical_encode([nxt.commitment, digest(o_t)]), 24 + 4 * t

    return evaluate


def make_turn_program(
    agent_label: str,
    version: str = "1.0.0",
    tools: dict[str, Tool] = TOOLS,
    descriptor: bytes | None = None,
    program_id: str | None = None,
) -> GuestProgram:
    """The agent's own program; its commitment is the agent's C_P."""
    program_id = program_id or f"baid.agent.{agent_label}"
    descriptor = descriptor or engine.make_descriptor(program_id, version, "turn-claim/v1")
    own = digest(descriptor)
    return GuestProgram(
        program_id,
        descriptor,
        turn_evaluate(CONFIG_PROGRAM.commitment, own, tools),
        "turn-claim/v1",
        frozenset({CONFIG_PROGRAM.commitment, own}),
    )


def default_registry(*turn_programs: GuestProgram) -> ProgramRegistry:
    return ProgramRegistry([BIOMETRIC_PROGRAM, CONFIG_PROGRAM, *turn_programs])


engine.DEFAULT_REGISTRY.register(BIOMETRIC_PROGRAM)
engine.DEFAULT_REGISTRY.register(CONFIG_PROGRAM)


def _registry(registry: ProgramRegistry | None, program: GuestProgram) -> ProgramRegistry:
    if registry is not None:
        return registry
    if program.program_id not in engine.DEFAULT_REGISTRY:
        engine.DEFAULT_REGISTRY.register(program)
    return engine.DEFAULT_REGISTRY


def prove_phase1(pp: PublicParams, statement: BiometricStatement, registry: ProgramRegistry | None = None) -> ProofEnvelope:
    compiled = engine.compile(pp, BIOMETRIC_PROGRAM, _registry(registry, BIOMETRIC_PROGRAM))
    return engine.prove(pp, compiled, engine.embed_prior(None, statement.claim()), statement)


def prove_phase2(pp: PublicParams, statement: ConfigStatement, prior: ProofEnvelope, registry: ProgramRegistry | None = None) -> ProofEnvelope:
    compiled = engine.compile(pp, CONFIG_PROGRAM, _registry(registry, CONFIG_PROGRAM))
    return engine.prove(pp, compiled, engine.embed_prior(prior, statement.claim()), statement, prior)


def prove_turn(
    pp: PublicParams,
    t: int,
    statement: TurnStatement,
    prior: ProofEnvelope,
    program: GuestProgram,
    registry: ProgramRegistry | None = None,
) -> ProofEnvelope:
    if statement.turn_index != t:
        raise InputError(f"statement is for turn {statement.turn_index}, not {t}")
    compiled = engine.compile(pp, program, _registry(registry, program))
    return engine.prove(pp, compiled, engine.embed_prior(prior, statement.claim()), statement, prior)


# -- final attestation ------------------------------------------------------


@dataclass(frozen=True)
class FinalAttestation:
    envelope: ProofEnvelope
    claims: dict

    def to_json(self) -> dict:
        return {"envelope": self.envelope.to_bytes().hex(), "claims": self.claims}

    @classmethod
    def from_json(cls, obj: dict) -> "FinalAttestation":
        return cls(ProofEnvelope.from_bytes(crypto.from_hex(obj["envelope"])), obj["claims"])

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


def extract_claims(links: list[ProofEnvelope]) -> dict:
    """Public claims recoverable from a chain ordered head to tail."""
    if len(links) < 2:
        raise InputError("a session chain holds at least the phase-1 and phase-2 proofs")
    bio = parse_biometric_claim(links[0].claim)
    cfg = parse_config_claim(links[1].claim)
    turns = [parse_turn_claim(e.claim) for e in links[2:]]
    outputs = [parse_turn_output(e.public_output) for e in links[2:]]
    h0 = turns[0]["h_prev"] if turns else SessionState().commitment
    return {
        "agent_id": "agentid:" + links[1].public_output.hex(),
        "user_id": bio["user_id"],
        "tau": [bio["tau_num"], bio["tau_den"]],
        "operator_authenticated": links[0].public_output == TRUE,
        "agent_program_commitment": cfg["agent_program_commitment"].hex(),
        "profile_hash": cfg["expected_profile_hash"].hex(),
        "r_storage": cfg["r_storage"].hex(),
        "turns": len(turns),
        "state_commitments": [h0.hex()] + [o["h_next"].hex() for o in outputs],
        "response_commitments": [t["response_commitment"].hex() for t in turns],
        "servers": [t["server_name"] for t in turns],
        "root_cas": [t["root_ca"].hex() for t in turns],
        "output_commitments": [o["output_commitment"].hex() for o in outputs],
    }


def expected_commitments(agent_program_commitment: bytes, turns: int) -> list[bytes]:
    return [BIOMETRIC_PROGRAM.commitment, CONFIG_PROGRAM.commitment] + [agent_program_commitment] * turns


def finalize_session(vk: VerifyingKey, envelopes: list[ProofEnvelope]) -> FinalAttestation:
    """Bundle the last envelope with the claims recovered from its chain."""
    if not envelopes:
        raise InputError("no envelopes")
    final = envelopes[-1]
    links, _ = engine.unroll_chain(final)
    if [e.to_bytes() for e in links] != [e.to_bytes() for e in envelopes]:
        raise InputError("envelopes do not form the chain embedded in the final proof")
    claims = extract_claims(links)
    cp = crypto.from_hex(claims["agent_program_commitment"])
    report = engine.verify_chain_tail(vk, final, expected_commitments(cp, claims["turns"]))
    if not report.ok:
        raise InputError(f"chain broken at depth {report.first_failure_depth}")
    return FinalAttestation(final, claims)


@dataclass
class AttestationCheck:
    ok: bool
    reason: str
    report: engine.ChainReport | None = None
    claims: dict | None = None


def verify_attestation(vk: VerifyingKey, bundle: FinalAttestation, tau_min=DEFAULT_TAU, trusted_roots=None) -> AttestationCheck:
    """Check only the final proof: chain, recovered claims and the auth gate.

    ``trusted_roots`` (CA public keys) restricts which roots the turn
    guests may have checked server certificates against; None skips it.
    """
    links, intact = engine.unroll_chain(bundle.envelope)
    if not intact or len(links) < 2:
        return AttestationCheck(False, "malformed chain")
    try:
        claims = extract_claims(links)
    except (EncodingError, InputError, ValueError, UnicodeDecodeError) as exc:
        return AttestationCheck(False, f"unparseable claims: {exc}")
    cp = crypto.from_hex(claims["agent_program_commitment"])
    report = engine.verify_chain_tail(vk, bundle.envelope, expected_commitments(cp, claims["turns"]))
    if not report.ok:
        return AttestationCheck(False, f"chain verification failed at depth {report.first_failure_depth}", report, claims)
    if claims != bundle.claims:
        return AttestationCheck(False, "public claims do not match the proof chain", report, claims)
    if not claims["operator_authenticated"]:
        return AttestationCheck(False, "operator biometric authentication failed", report, claims)
    num, den = claims["tau"]
    if num * tau_min[1] < tau_min[0] * den:
        return AttestationCheck(False, "biometric threshold below policy", report, claims)
    if trusted_roots is not None:
        roots = {bytes(r).hex() for r in trusted_roots}
        if any(r not in roots for r in claims["root_cas"]):
            return AttestationCheck(False, "turn provenance checked against an untrusted root CA", report, claims)
    return AttestationCheck(True, "ok", report, claims)
