"""Two-agent e-commerce scenario: a buyer agent and a merchant agent
authenticate each other over a simulated network, then trade.

Each agent carries its profile, its identifier, its credentials and its
proof chain. Messages travel over an in-process bus that can drop,
duplicate or reorder deliveries from a seed, so adversarial runs are
reproducible byte for byte.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

from . import crypto, engine, ledger
from .credentials import PermissionCredential, RevocationList, issue_credential, validate_credential
from .crypto import KeyPair, digest
from .engine import GuestProgram, ProofEnvelope, ProgramRegistry, VerifyingKey
from .errors import BaidError, ProvenanceError
from .fixtures import noisy_capture, seeded_embedding
from .identity import AgentFacts, AgentIdentifier, ProfileConfig, bind_owner, canonical_json, make_agent_id, profile_hash
from .ledger import AgentAttribute, AgentStatus, LedgerState
from .phases import (
    CONFIG_PROGRAM,
    DEFAULT_TAU,
    TRUE,
    BiometricStatement,
    ConfigStatement,
    FinalAttestation,
    SessionState,
    build_turn,
    default_registry,
    extract_claims,
    make_turn_program,
    prove_phase1,
    prove_phase2,
    prove_turn,
    verify_attestation,
)
from .tls import MockServer, make_server

# verdict reason codes
ACCEPTED = "Accepted"
UNRESOLVABLE = "Unresolvable"
NOT_RUNNING = "NotRunning"
COMMITMENT_MISMATCH = "CommitmentMismatch"
CHAIN_INVALID = "ChainInvalid"
CLAIM_MISMATCH = "ClaimMismatch"
CREDENTIAL_INVALID = "CredentialInvalid"
REPLAY = "Replay"
PROVENANCE_REJECTED = "ProvenanceRejected"
OUTPUT_UNBOUND = "OutputUnbound"
OPERATOR_REJECTED = "OperatorRejected"
NO_MERCHANT = "NoMerchant"
TIMEOUT = "Timeout"
OUT_OF_STOCK = "OutOfStock"


class MessageKind(str, Enum):
    HELLO = "Hello"
    ATTESTATION_BUNDLE = "AttestationBundle"
    CREDENTIAL_PRESENTATION = "CredentialPresentation"
    ACCEPT = "Accept"
    REJECT = "Reject"
    ORDER = "Order"
    PAYMENT = "Payment"


class Attack(str, Enum):
    CODE_SUBSTITUTION = "code_substitution"
    REORDER = "reorder"
    REPLAY = "replay"
    FABRICATION = "fabrication"
    IMPERSONATION = "impersonation"


# reason each attack must be rejected with
ATTACK_REASONS = {
    Attack.CODE_SUBSTITUTION: COMMITMENT_MISMATCH,
    Attack.REORDER: CHAIN_INVALID,
    Attack.REPLAY: REPLAY,
    Attack.FABRICATION: PROVENANCE_REJECTED,
    Attack.IMPERSONATION: UNRESOLVABLE,
}


@dataclass(frozen=True)
class NetMessage:
    sender: str
    to: str
    kind: MessageKind
    payload: bytes
    seq: int

    def summary(self) -> dict:
        return {
            "from": self.sender,
            "to": self.to,
            "kind": self.kind.value,
            "seq": self.seq,
            "size": len(self.payload),
            "payload_digest": digest(self.payload).hex(),
        }


@dataclass
class AgentInstance:
    label: str
    profile: ProfileConfig
    agent_id: AgentIdentifier
    credentials: list = field(default_factory=list)
    session: SessionState | None = None
    inbox: deque = field(default_factory=deque)
    outbox: deque = field(default_factory=deque)
    # runtime wiring
    owner: KeyPair | None = None
    program: GuestProgram | None = None
    llm: MockServer | None = None
    vk: VerifyingKey | None = None
    now: int = 0
    tool_params: dict = field(default_factory=dict)
    revocations: RevocationList | None = None
    trusted_roots: tuple | None = None
    envelopes: list = field(default_factory=list)
    _next_seq: int = 1
    _last_seen: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.agent_id.profile_hash != profile_hash(self.profile):
            raise ValueError("agent identifier does not match the profile hash")

    @property
    def address(self) -> str:
        return self.agent_id.text

    def message(self, to: str, kind: MessageKind, payload: bytes) -> NetMessage:
        msg = NetMessage(self.address, to, kind, payload, self._next_seq)
        self._next_seq += 1
        self.outbox.append(msg)
        return msg

    def admit(self, msg: NetMessage) -> bool:
        """Per-sender sequence numbers must strictly increase."""
        if msg.seq <= self._last_seen.get(msg.sender, 0):
            return False
        self._last_seen[msg.sender] = msg.seq
        return True

    def bundle(self) -> FinalAttestation:
        # packaged as-is: checking the chain is the counterparty's job
        return FinalAttestation(self.envelopes[-1], extract_claims(self.envelopes))


class MessageBus:
    """Deterministic in-process bus with optional fault injectors.

    ``faults`` maps a message kind to "drop" or "duplicate", applied to
    every message of that kind. ``reorder`` shuffles each flush with the
    bus RNG.
    """

    def __init__(self, seed, faults: dict | None = None, reorder: bool = False):
        self.rng = random.Random(f"baid-bus:{seed}")
        self.faults = {MessageKind(k): v for k, v in (faults or {}).items()}
        self.reorder = reorder
        self.pending: list[NetMessage] = []
        self.log: list[dict] = []

    def send(self, msg: NetMessage) -> None:
        self.pending.append(msg)

    def flush(self, agents: dict[str, AgentInstance]) -> None:
        batch, self.pending = self.pending, []
        out = []
        for msg in batch:
            fault = self.faults.get(msg.kind)
            if fault == "drop":
                self.log.append(dict(msg.summary(), event="dropped"))
                continue
            out.append((msg, "delivered"))
            if fault == "duplicate":
                out.append((msg, "duplicated"))
        if self.reorder:
            self.rng.shuffle(out)
        for msg, event in out:
            self.log.append(dict(msg.summary(), event=event))
            if msg.to in agents:
                agents[msg.to].inbox.append(msg)


@dataclass
class Verdict:
    ok: bool
    reason: str
    detail: str = ""
    layer1: dict | None = None
    layer2: dict | None = None

    def to_json(self) -> dict:
        return {"ok": self.ok, "reason": self.reason, "detail": self.detail, "layer1": self.layer1, "layer2": self.layer2}


def check_on_chain(
    vk: VerifyingKey,
    bundle: FinalAttestation,
    ledger_view: LedgerState,
    *,
    expected_agent_id: str | None = None,
    tau_min=DEFAULT_TAU,
    trusted_roots=None,
):
    """Layer 1: the proof chain, cross-checked against the agent's contract.

    Returns (verdict, agent contract, owner contract); the contracts are
    None when the AgentID does not resolve.
    """
    links, intact = engine.unroll_chain(bundle.envelope)
    if not intact or len(links) < 2:
        return Verdict(False, CHAIN_INVALID, "malformed chain"), None, None
    agent_id = "agentid:" + links[1].public_output.hex()
    contract = ledger_view.find_agent(agent_id)
    owner = ledger_view.find_user(contract.attribute.user_id) if contract is not None else None
    if contract is None or owner is None:
        return Verdict(False, UNRESOLVABLE, f"{agent_id} is not registered"), None, None
    if expected_agent_id is not None and agent_id != expected_agent_id:
        return Verdict(False, CLAIM_MISMATCH, "attestation is for another agent than the one contacted"), contract, owner
    if contract.operational_status is not AgentStatus.RUNNING:
        return Verdict(False, NOT_RUNNING, contract.operational_status.value), contract, owner

    # the program that produced the latest proof must be the registered one
    on_chain_cp = contract.attribute.program_commitment
    if len(links) > 2 and links[-1].program_commitment != on_chain_cp:
        detail = "final proof comes from a program other than the registered one"
        return Verdict(False, COMMITMENT_MISMATCH, detail), contract, owner

    check = verify_attestation(vk, bundle, tau_min, trusted_roots)
    layer1 = {"ok": check.ok, "reason": check.reason, "chain": check.report.to_json() if check.report else None}
    if not check.ok:
        return Verdict(False, CHAIN_INVALID, check.reason, layer1), contract, owner
    claims = check.claims
    mismatches = []
    if claims["agent_program_commitment"] != on_chain_cp.hex():
        mismatches.append("program commitment")
    if claims["profile_hash"] != contract.attribute.profile_hash.hex():
        mismatches.append("profile hash")
    if claims["r_storage"] != ledger_view.storage_root(contract.address).hex():
        mismatches.append("storage root")
    if claims["user_id"] != contract.attribute.user_id:
        mismatches.append("user id")
    if links[1].public_output != contract.agent_id_digest:
        mismatches.append("AgentID digest")
    if mismatches:
        reason = COMMITMENT_MISMATCH if mismatches == ["program commitment"] else CLAIM_MISMATCH
        return Verdict(False, reason, "differs from chain: " + ", ".join(mismatches), layer1), contract, owner
    return Verdict(True, ACCEPTED, "", layer1), contract, owner


def handle_verification_request(
    agent: AgentInstance,
    bundle: FinalAttestation,
    vc: PermissionCredential | None,
    ledger_view: LedgerState,
    *,
    requested: tuple[str, int] = ("check_inventory", 0),
    expected_agent_id: str | None = None,
    revocations: RevocationList | None = None,
    tau_min=DEFAULT_TAU,
) -> Verdict:
    """Check a counterparty's final proof against the ledger, then its credential."""
    v, contract, owner = check_on_chain(
        agent.vk,
        bundle,
        ledger_view,
        expected_agent_id=expected_agent_id,
        tau_min=tau_min,
        trusted_roots=agent.trusted_roots,
    )
    if not v.ok:
        return v
    layer1 = v.layer1
    if vc is None:
        return Verdict(False, CREDENTIAL_INVALID, "no credential presented", layer1)
    if vc.agent_id != contract.attribute.agent_id or vc.user_id != contract.attribute.user_id:
        return Verdict(False, CREDENTIAL_INVALID, "credential issued to another subject", layer1)
    revocations = revocations if revocations is not None else agent.revocations
    report = validate_credential(vc, owner.owner_pubkey, agent.now, requested, revocations)
    layer2 = report.to_json()
    if not report.verdict:
        step = report.first_failure
        return Verdict(False, CREDENTIAL_INVALID, f"step {step}: {report.reasons[step]}", layer1, layer2)
    return Verdict(True, ACCEPTED, "", layer1, layer2)


def substitute_program(program: GuestProgram, index: int, mask: int = 0x01) -> GuestProgram:
    """Same guest logic under a descriptor with one byte changed."""
    if mask % 256 == 0:
        raise ValueError("mask must change the byte")
    d = bytearray(program.descriptor)
    d[index % len(d)] ^= mask % 256
    d = bytes(d)
    return GuestProgram(
        program.program_id + "~substituted",
        d,
        program.evaluate,
        program.io_schema,
        frozenset({CONFIG_PROGRAM.commitment, digest(d)}),
    )


# -- scenario ---------------------------------------------------------------


@dataclass
class ScenarioConfig:
    seed: int = 7
    price: int = 900
    limit: int = 1000
    sku: str = "laptop-x1"
    qty: int = 1
    stock: int = 5
    tau: tuple = DEFAULT_TAU
    now: int = 3_600
    valid_from: int = 0
    valid_until: int = 86_400
    attack: str | None = None
    faults: dict = field(default_factory=dict)
    reorder: bool = False
    buyer_user: str = "org:campusbuyers:cn:procurement"
    merchant_user: str = "org:laptopretail:cn:sales-division"

    def __post_init__(self):
        self.tau = tuple(self.tau)
        if self.attack is not None:
            self.attack = Attack(self.attack).value

    def to_json(self) -> dict:
        d = asdict(self)
        d["tau"] = list(self.tau)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "ScenarioConfig":
        known = {k: v for k, v in obj.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class ScenarioReport:
    config: dict
    completed: bool
    abort: dict | None
    verdicts: list
    gas_receipts: list
    messages: list
    chain_sizes: dict

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


class _Abort(Exception):
    def __init__(self, phase: str, counterparty: str, reason: str, detail: str = ""):
        super().__init__(f"{phase}: {reason}")
        self.info = {"phase": phase, "counterparty": counterparty, "reason": reason, "detail": detail}


@dataclass
class _Party:
    label: str
    name: str
    capabilities: tuple
    roles: tuple
    scope: tuple
    llm_name: str


BUYER = _Party(
    "buyer",
    "baid:agent:campusbuyers:purchaser",
    ("buy-laptops",),
    ("purchaser",),
    (),
    "llm.buyer-assistant.example",
)
MERCHANT = _Party(
    "merchant",
    "baid:agent:laptopretail:salesadvisor",
    ("sell-laptops", "check-inventory"),
    ("sales-advisor",),
    (),
    "llm.sales-assistant.example",
)


class _World:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        s = cfg.seed
        self.pp, self.vk = engine.setup(10_000, f"scenario:{s}:engine")
        self.ca = crypto.keygen(f"scenario:{s}:root-ca")
        self.issuer = crypto.keygen(f"scenario:{s}:kyc-issuer")
        self.ledger = ledger.genesis(self.issuer.public)
        self.facts: dict[str, AgentFacts] = {}
        self.verdicts: list[dict] = []
        self.bus = MessageBus(s, cfg.faults, cfg.reorder)
        self.agents: dict[str, AgentInstance] = {}
        self.registry: ProgramRegistry | None = None
        self.shadow_ledger: LedgerState | None = None
        self.contacted: dict[str, str] = {}
        self.presented: dict[tuple[str, str], dict] = {}
        self._turn_seed = 0

    def record(self, step: str, verifier: str, subject: str, verdict: Verdict) -> Verdict:
        self.verdicts.append({"step": step, "verifier": verifier, "subject": subject, **verdict.to_json()})
        return verdict

    def seed(self, label: str) -> str:
        return f"scenario:{self.cfg.seed}:{label}"

    def register(self, st: LedgerState, party: _Party, user_id: str, program: GuestProgram, variant: str = "", publish=True):
        """Register a user and its agent on ``st``; returns (state, AgentInstance)."""
        owner = crypto.keygen(self.seed(f"{party.label}{variant}:owner"))
        kyc = ledger.issue_kyc(self.issuer.secret, crypto.hash_parts(b"kyc-subject", user_id))
        if st.find_user(user_id) is None:
            st, _, _ = ledger.register_user(st, kyc, owner.public, user_id)
        uaddr = ledger.user_address(user_id)
        template = seeded_embedding(self.seed(f"{party.label}{variant}:operator"))
        profile = bind_owner(
            ProfileConfig(policy_rules=(f"act only for {user_id}",), operational_params={"role": party.label}),
            user_id,
            template,
        )
        ident = make_agent_id(party.name, program.commitment, profile, user_id, {"agent_version": "1.0.0"})
        attr = AgentAttribute.from_identifier(ident, party.capabilities, party.roles)
        url = f"https://{party.label}.example/agentfacts.json"
        sig = crypto.sign(owner.secret, ledger.add_agent_message(st, uaddr, ident, attr, url))
        st, _, _ = ledger.add_agent(st, sig, uaddr, ident, attr, url)
        if publish:
            self.facts[url] = AgentFacts(
                ident.text, party.capabilities, (("https", f"https://{party.label}.example/a2a"),), "kyc-verified"
            ).signed(owner.secret)
        agent = AgentInstance(
            party.label,
            profile,
            ident,
            owner=owner,
            program=program,
            llm=make_server(self.ca.secret, party.llm_name, self.seed(party.label)),
            vk=self.vk,
            now=self.cfg.now,
            trusted_roots=(self.ca.public,),
        )
        return st, agent

    # -- agent pipeline ----------------------------------------------------

    def authenticate(self, agent: AgentInstance, scope) -> None:
        """Phase 1 on a fresh operator capture, VC issuance, then phase 2."""
        rng = random.Random(self.seed(f"{agent.label}:capture"))
        capture = noisy_capture(agent.profile.biometric_template, rng, 0.2)
        stmt = BiometricStatement.build(agent.profile, capture, self.cfg.tau)
        env1 = prove_phase1(self.pp, stmt, self.registry)
        if env1.public_output != TRUE:
            raise _Abort("intake", agent.label, OPERATOR_REJECTED, "operator biometric below threshold")
        vc = issue_credential(
            agent.profile,
            agent.owner.secret,
            self.vk,
            env1,
            agent_id=agent.agent_id.text,
            user_id=agent.agent_id.user_id,
            task_id=f"{agent.label}-task-{self.cfg.seed}",
            task_definition=f"{agent.label} one {self.cfg.sku}",
            security_level=2,
            scope=scope,
            valid_from=self.cfg.valid_from,
            valid_until=self.cfg.valid_until,
        )
        agent.credentials.append(vc)
        st = self.proving_ledger(agent)
        contract = st.find_agent(agent.agent_id.text)
        proof = ledger.get_storage_proof(st, contract.address, ledger.agentid_slot(agent.agent_id.text))
        env2 = prove_phase2(self.pp, ConfigStatement.from_ledger(proof, agent.profile, agent.agent_id), env1, self.registry)
        agent.envelopes = [env1, env2]
        agent.session = SessionState()

    def proving_ledger(self, agent: AgentInstance) -> LedgerState:
        if self.shadow_ledger is not None and agent.label == "merchant":
            return self.shadow_ledger
        return self.ledger

    def turn(self, agent: AgentInstance, query: dict, action: dict, forge: dict | None = None) -> bytes:
        """One proven turn; returns the tool output o_t."""
        q = canonical_json(query)
        self._turn_seed += 1
        response, transcript = agent.llm.respond(q, self.seed(f"turn:{self._turn_seed}"), canonical_json(action))
        if forge is not None:
            response = canonical_json(forge)
        stmt, nxt = build_turn(agent.session, q, response, transcript, agent.llm.name, self.ca.public, agent.tool_params)
        try:
            env = prove_turn(self.pp, nxt.turn_index, stmt, agent.envelopes[-1], agent.program, self.registry)
        except ProvenanceError as exc:
            self.record("provenance", agent.label, agent.llm.name, Verdict(False, PROVENANCE_REJECTED, f"step {exc.step}: {exc}"))
            raise _Abort("provenance", agent.label, PROVENANCE_REJECTED, f"step {exc.step}: {exc}") from exc
        agent.envelopes.append(env)
        agent.session = nxt
        return nxt.history[-1][2]

    # -- messaging ---------------------------------------------------------

    def send(self, src: AgentInstance, dst: AgentInstance, kind: MessageKind, payload: dict) -> None:
        self.bus.send(src.message(dst.address, kind, canonical_json(payload)))

    def receive(self, step: str, dst: AgentInstance, src: AgentInstance, kind: MessageKind) -> dict:
        """Deliver pending traffic; exactly one fresh message of ``kind`` is expected."""
        self.bus.flush(self.agents)
        got = None
        while dst.inbox:
            msg = dst.inbox.popleft()
            if not dst.admit(msg):
                self.record(step, dst.label, src.label, Verdict(False, REPLAY, f"{msg.kind.value} seq {msg.seq} already seen"))
                continue
            if got is None and msg.kind is kind and msg.sender == src.address:
                got = msg
        if got is None:
            raise _Abort(step, src.label, TIMEOUT, f"no {kind.value} from {src.label}")
        return json.loads(got.payload)

    def check(
        self, step: str, verifier: AgentInstance, subject: AgentInstance, payload: dict, requested, outputs=()
    ) -> Verdict:
        """Verify a bundle + credential from ``payload`` and bind claimed tool outputs to it."""
        if "credential" in payload:
            self.presented[(verifier.label, subject.label)] = payload["credential"]
        try:
            bundle = FinalAttestation.from_json(payload["bundle"])
            held = self.presented.get((verifier.label, subject.label))
            vc = PermissionCredential.from_json(held) if held is not None else None
        except (BaidError, KeyError, ValueError) as exc:
            v = Verdict(False, CHAIN_INVALID, f"unreadable bundle: {exc}")
        else:
            v = handle_verification_request(
                verifier,
                bundle,
                vc,
                self.ledger,
                requested=requested,
                expected_agent_id=self.contacted.get(verifier.label),
            )
            if v.ok and outputs:
                proven = bundle.claims["output_commitments"][-len(outputs) :]
                if [digest(o.encode()).hex() for o in outputs] != proven:
                    v = Verdict(False, OUTPUT_UNBOUND, "message content is not the proven tool output", v.layer1, v.layer2)
        self.record(step, verifier.label, subject.label, v)
        if not v.ok:
            self.send(verifier, subject, MessageKind.REJECT, {"step": step, "reason": v.reason})
            self.bus.flush(self.agents)
            raise _Abort(step, subject.label, v.reason, v.detail)
        return v


def subject_vc(agent: AgentInstance) -> PermissionCredential | None:
    return agent.credentials[-1] if agent.credentials else None


def _build_world(cfg: ScenarioConfig):
    w = _World(cfg)
    attack = cfg.attack
    buyer_prog = make_turn_program("campusbuyers.purchaser")
    merchant_prog = make_turn_program("laptopretail.salesadvisor")
    st, buyer = w.register(w.ledger, BUYER, cfg.buyer_user, buyer_prog)
    st, merchant = w.register(st, MERCHANT, cfg.merchant_user, merchant_prog)
    w.ledger = st
    programs = [buyer_prog, merchant_prog]
    if attack == Attack.CODE_SUBSTITUTION.value:
        rng = random.Random(w.seed("substitution"))
        merchant.program = substitute_program(merchant_prog, rng.randrange(len(merchant_prog.descriptor)))
        programs.append(merchant.program)
    if attack == Attack.IMPERSONATION.value:
        # an impostor registered only on a ledger it controls answers for the merchant
        imp_prog = make_turn_program("laptopretail.salesadvisor-clone")
        shadow = ledger.genesis(w.issuer.public)
        shadow, merchant = w.register(shadow, MERCHANT, cfg.merchant_user, imp_prog, "-impostor", publish=False)
        w.shadow_ledger = shadow
        programs.append(imp_prog)
    w.registry = default_registry(*programs)
    buyer.tool_params = {}
    merchant.tool_params = {"inventory": {cfg.sku: cfg.stock}, "prices": {cfg.sku: cfg.price}}
    w.agents = {buyer.address: buyer, merchant.address: merchant}
    return w, buyer, merchant


def run_scenario(config: ScenarioConfig) -> ScenarioReport:
    cfg = config
    w, buyer, merchant = _build_world(cfg)
    gas_receipts = [r.to_json() for r in w.ledger.gas_log]
    abort = None
    completed = False
    try:
        _run(w, cfg, buyer, merchant)
        completed = True
    except _Abort as exc:
        abort = exc.info
    sizes = {a.label: [len(e.to_bytes()) for e in a.envelopes] for a in (buyer, merchant)}
    return ScenarioReport(cfg.to_json(), completed, abort, w.verdicts, gas_receipts, w.bus.log, sizes)


def _run(w: _World, cfg: ScenarioConfig, buyer: AgentInstance, merchant: AgentInstance) -> None:
    attack = cfg.attack
    # (1) request intake, gated by phase 1; merchant boots the same way
    w.authenticate(buyer, [("check_inventory", 0), ("make_payment", cfg.limit)])
    w.authenticate(merchant, [("check_inventory", 0), ("confirm_order", 1_000_000)])
    request = {"user_request": f"buy {cfg.qty} x {cfg.sku}", "budget": cfg.limit}
    w.turn(buyer, request, {"action": "reply", "args": {"text": "searching for a merchant"}})
    w.turn(merchant, {"event": "open for business"}, {"action": "reply", "args": {"text": "ready"}})

    # (2) discovery through the ledger
    hits = [h for h in ledger.discover_agent(w.ledger, "sell-laptops", w.facts) if h.trusted]
    discovered = Verdict(bool(hits), ACCEPTED if hits else NO_MERCHANT, f"{len(hits)} trusted hit(s)")
    w.record("discovery", buyer.label, "ledger", discovered)
    if not hits:
        raise _Abort("discovery", "ledger", NO_MERCHANT)
    w.contacted[buyer.label] = hits[0].contract.attribute.agent_id
    w.contacted[merchant.label] = buyer.address
    w.send(buyer, merchant, MessageKind.HELLO, {"agent_id": buyer.address, "intent": "purchase"})
    w.receive("hello", merchant, buyer, MessageKind.HELLO)
    w.send(merchant, buyer, MessageKind.HELLO, {"agent_id": merchant.address})
    w.receive("hello", buyer, merchant, MessageKind.HELLO)

    # (3) mutual verification
    w.send(buyer, merchant, MessageKind.ATTESTATION_BUNDLE, {"bundle": buyer.bundle().to_json()})
    w.send(buyer, merchant, MessageKind.CREDENTIAL_PRESENTATION, {"credential": subject_vc(buyer).to_json()})
    got = _receive_pair(w, "mutual-auth", merchant, buyer)
    w.check("mutual-auth", merchant, buyer, got, ("check_inventory", 0))
    w.send(merchant, buyer, MessageKind.ATTESTATION_BUNDLE, {"bundle": merchant.bundle().to_json()})
    w.send(merchant, buyer, MessageKind.CREDENTIAL_PRESENTATION, {"credential": subject_vc(merchant).to_json()})
    got = _receive_pair(w, "mutual-auth", buyer, merchant)
    w.check("mutual-auth", buyer, merchant, got, ("confirm_order", 0))
    w.send(buyer, merchant, MessageKind.ACCEPT, {"step": "mutual-auth"})
    w.send(merchant, buyer, MessageKind.ACCEPT, {"step": "mutual-auth"})
    w.bus.flush(w.agents)
    _drain(w, "mutual-auth", buyer, merchant)

    # (4) inventory check and quote on the merchant side
    order = {"sku": cfg.sku, "qty": cfg.qty, "buyer": buyer.address}
    w.send(buyer, merchant, MessageKind.ORDER, order)
    order = w.receive("inventory", merchant, buyer, MessageKind.ORDER)
    inv = w.turn(merchant, order, {"action": "check_inventory", "args": {"sku": cfg.sku, "qty": cfg.qty}})
    if not json.loads(inv)["result"]["available"]:
        w.send(merchant, buyer, MessageKind.REJECT, {"step": "inventory", "reason": OUT_OF_STOCK})
        w.bus.flush(w.agents)
        raise _Abort("inventory", merchant.label, OUT_OF_STOCK, f"{cfg.sku}: {cfg.stock} in stock, {cfg.qty} ordered")
    price_action = {"action": "compute_total", "args": {"sku": cfg.sku, "qty": cfg.qty}}
    forged = None
    if attack == Attack.FABRICATION.value:
        forged = {"action": "compute_total", "args": {"sku": cfg.sku, "qty": cfg.qty * 2}}
    quote = w.turn(merchant, {"quote_for": order}, price_action, forged)
    bundle = merchant.bundle()
    if attack == Attack.REORDER.value:
        links, _ = engine.unroll_chain(bundle.envelope)
        links[-1], links[-2] = links[-2], links[-1]
        bundle = FinalAttestation(engine.rechain(links), bundle.claims)
    w.send(merchant, buyer, MessageKind.ACCEPT, {"inventory": inv.decode(), "quote": quote.decode(), "bundle": bundle.to_json()})
    got = w.receive("inventory", buyer, merchant, MessageKind.ACCEPT)
    w.check("inventory", buyer, merchant, got, ("confirm_order", 0), (got["inventory"], got["quote"]))
    total = json.loads(got["quote"])["result"]["total"]

    # (5) payment within the credential's scope, checked by the merchant
    payment = w.turn(
        buyer,
        {"quote": json.loads(got["quote"])},
        {"action": "make_payment", "args": {"payee": merchant.address, "amount": total}},
    )
    amount = json.loads(payment)["result"]["amount"]
    payload = {"payment": payment.decode(), "bundle": buyer.bundle().to_json(), "credential": subject_vc(buyer).to_json()}
    w.send(buyer, merchant, MessageKind.PAYMENT, payload)
    got = w.receive("payment", merchant, buyer, MessageKind.PAYMENT)
    w.check("payment", merchant, buyer, got, ("make_payment", amount), (got["payment"],))

    # (6) order confirmation
    receipt = {"action": "confirm_order", "args": {"sku": cfg.sku, "qty": cfg.qty, "amount": amount, "buyer": buyer.address}}
    confirmation = w.turn(merchant, {"payment": json.loads(got["payment"])}, receipt)
    w.send(merchant, buyer, MessageKind.ACCEPT, {"order": confirmation.decode(), "bundle": merchant.bundle().to_json()})
    got = w.receive("confirmation", buyer, merchant, MessageKind.ACCEPT)
    w.check("confirmation", buyer, merchant, got, ("confirm_order", amount), (got["order"],))


def _receive_pair(w: _World, step: str, dst: AgentInstance, src: AgentInstance) -> dict:
    """Collect the bundle and credential messages sent back to back."""
    w.bus.flush(w.agents)
    out = {}
    while dst.inbox:
        msg = dst.inbox.popleft()
        if not dst.admit(msg):
            w.record(step, dst.label, src.label, Verdict(False, REPLAY, f"{msg.kind.value} seq {msg.seq} already seen"))
            continue
        body = json.loads(msg.payload)
        if msg.kind is MessageKind.ATTESTATION_BUNDLE:
            out["bundle"] = body["bundle"]
        elif msg.kind is MessageKind.CREDENTIAL_PRESENTATION:
            out["credential"] = body["credential"]
    if "bundle" not in out or "credential" not in out:
        raise _Abort(step, src.label, TIMEOUT, "bundle or credential missing")
    return out


def _drain(w: _World, step: str, *agents: AgentInstance) -> None:
    for a in agents:
        while a.inbox:
            msg = a.inbox.popleft()
            if not a.admit(msg):
                w.record(step, a.label, "network", Verdict(False, REPLAY, f"{msg.kind.value} seq {msg.seq} already seen"))


# -- adversary suite ----------------------------------------------------------


@dataclass
class SuiteReport:
    attack: str
    expected_reason: str
    observed_reasons: list
    rejected: bool
    completed: bool
    ok: bool

    def to_json(self) -> dict:
        return asdict(self)


def adversary_suite(scenario: ScenarioConfig, attack) -> SuiteReport:
    """Run ``scenario`` under one attack and check it is stopped for the mapped reason."""
    attack = Attack(attack)
    expected = ATTACK_REASONS[attack]
    cfg = replace(scenario, attack=attack.value, faults=dict(scenario.faults))
    if attack is Attack.REPLAY:
        cfg.faults[MessageKind.PAYMENT.value] = "duplicate"
    report = run_scenario(cfg)
    reasons = [v["reason"] for v in report.verdicts if not v["ok"]]
    if report.abort is not None:
        reasons.append(report.abort["reason"])
    if attack is Attack.REPLAY:
        # the duplicate is refused and the single genuine payment still settles
        payments = [v for v in report.verdicts if v["step"] == "payment" and v["ok"]]
        rejected = expected in reasons and len(payments) == 1
    else:
        rejected = not report.completed and bool(reasons) and reasons[0] == expected
    return SuiteReport(attack.value, expected, reasons, rejected, report.completed, rejected)


def run_adversary_suite(scenario: ScenarioConfig | None = None) -> list[SuiteReport]:
    scenario = scenario or ScenarioConfig()
    return [adversary_suite(scenario, a) for a in Attack]
