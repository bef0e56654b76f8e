"""Deterministic reference data: keys, embeddings and the laptop-retail agent."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from . import crypto, ledger
from .identity import EMBEDDING_DIM, EmbeddingVector, ProfileConfig, bind_owner, canonical_json, make_agent_id
from .ledger import AgentAttribute
from .phases import make_turn_program

REF_USER_ID = "org:laptopretail:cn:sales-division"
REF_AGENT_NAME = "baid:agent:laptopretail:salesadvisor"
REF_OTHERS = {"agent_version": "1.0.0"}
REF_FACTS_URL = "https://agents.laptopretail.example/salesadvisor/agentfacts.json"
REF_CAPABILITIES = ("sell-laptops", "check-inventory")
REF_ROLES = ("sales-advisor",)
REF_POLICY = ("never disclose customer data", "quote list prices only", "max discount 5%")


def random_embedding(rng: random.Random) -> EmbeddingVector:
    raw = [rng.gauss(0.0, 1.0) for _ in range(EMBEDDING_DIM)]
    norm = math.sqrt(sum(x * x for x in raw)) or 1.0
    return EmbeddingVector.from_floats([x / norm for x in raw])


def noisy_capture(template: EmbeddingVector, rng: random.Random, noise: float = 0.2) -> EmbeddingVector:
    """A fresh capture of the same face: template plus Gaussian noise, renormalized."""
    vals = [c / 2**14 + rng.gauss(0.0, noise / math.sqrt(EMBEDDING_DIM)) for c in template.components]
    norm = math.sqrt(sum(x * x for x in vals)) or 1.0
    return EmbeddingVector.from_floats([x / norm for x in vals])


def seeded_embedding(seed) -> EmbeddingVector:
    return random_embedding(random.Random(f"baid-embedding:{seed}"))


@dataclass
class LifecycleRun:
    states: list
    receipts: dict


def reference_profile(user_id: str = REF_USER_ID, seed="laptopretail") -> ProfileConfig:
    cfg = ProfileConfig(policy_rules=REF_POLICY, operational_params={"currency": "CNY", "region": "cn"})
    return bind_owner(cfg, user_id, seeded_embedding(seed))


def reference_lifecycle(seed: str = "reference") -> LifecycleRun:
    """register_user -> add_agent -> update_agent -> remove_agent on the laptop-retail reference agent."""
    issuer = crypto.keygen(f"{seed}:kyc-issuer")
    owner = crypto.keygen(f"{seed}:owner")
    st = ledger.genesis(issuer.public)
    kyc = ledger.issue_kyc(issuer.secret, crypto.hash_parts(b"kyc-subject", seed))
    st1, uaddr, r_reg = ledger.register_user(st, kyc, owner.public, REF_USER_ID)

    program = make_turn_program("laptopretail.salesadvisor")
    cfg = reference_profile()
    ident = make_agent_id(REF_AGENT_NAME, program.commitment, cfg, REF_USER_ID, REF_OTHERS)
    attr = AgentAttribute.from_identifier(ident, REF_CAPABILITIES, REF_ROLES)
    sig = crypto.sign(owner.secret, ledger.add_agent_message(st1, uaddr, ident, attr, REF_FACTS_URL))
    st2, aaddr, r_add = ledger.add_agent(st1, sig, uaddr, ident, attr, REF_FACTS_URL)

    attr2 = AgentAttribute.from_identifier(ident, REF_CAPABILITIES + ("quote-prices",), REF_ROLES)
    url2 = REF_FACTS_URL.replace(".json", "-v2.json")
    sig = crypto.sign(owner.secret, ledger.update_agent_message(st2, aaddr, attr2, url2))
    st3, r_upd = ledger.update_agent(st2, sig, aaddr, attr2, url2)

    sig = crypto.sign(owner.secret, ledger.remove_agent_message(st3, aaddr))
    st4, r_rem = ledger.remove_agent(st3, sig, aaddr)
    return LifecycleRun(
        [st, st1, st2, st3, st4],
        {"register_user": r_reg, "add_agent": r_add, "update_agent": r_upd, "remove_agent": r_rem},
    )


def unit_counts(receipt) -> dict[str, int]:
    return {item: units for item, units, _ in receipt.breakdown}


@dataclass
class ReferenceSession:
    pp: object
    vk: object
    ledger: object
    cfg: ProfileConfig
    ident: object
    program: object
    ca: crypto.KeyPair
    server: object
    capture: EmbeddingVector
    envelopes: list
    statements: list
    states: list
    owner: crypto.KeyPair


REF_TURNS = (
    ({"q": "is the x1 laptop in stock?"}, {"action": "check_inventory", "args": {"sku": "laptop-x1", "qty": 1}}),
    ({"q": "what does one cost?"}, {"action": "compute_total", "args": {"sku": "laptop-x1", "qty": 1}}),
    ({"q": "confirm it"}, {"action": "confirm_order", "args": {"sku": "laptop-x1", "qty": 1, "amount": 900}}),
    ({"q": "thanks"}, {"action": "reply", "args": {"text": "you are welcome"}}),
)
REF_TOOL_PARAMS = {"inventory": {"laptop-x1": 5}, "prices": {"laptop-x1": 900}}


def reference_session(turns: int = 3, seed: str = "reference", tau=(3, 4), max_steps: int = 10_000) -> ReferenceSession:
    """Register the reference agent and prove phase 1, phase 2 and ``turns`` turns."""
    from . import engine
    from .phases import BiometricStatement, ConfigStatement, SessionState, build_turn, prove_phase1, prove_phase2, prove_turn
    from .tls import make_server

    issuer = crypto.keygen(f"{seed}:kyc-issuer")
    owner = crypto.keygen(f"{seed}:owner")
    st = ledger.genesis(issuer.public)
    kyc = ledger.issue_kyc(issuer.secret, crypto.hash_parts(b"kyc-subject", seed))
    st, uaddr, _ = ledger.register_user(st, kyc, owner.public, REF_USER_ID)
    program = make_turn_program("laptopretail.salesadvisor")
    cfg = reference_profile(seed=f"{seed}:operator")
    ident = make_agent_id(REF_AGENT_NAME, program.commitment, cfg, REF_USER_ID, REF_OTHERS)
    attr = AgentAttribute.from_identifier(ident, REF_CAPABILITIES, REF_ROLES)
    sig = crypto.sign(owner.secret, ledger.add_agent_message(st, uaddr, ident, attr, REF_FACTS_URL))
    st, aaddr, _ = ledger.add_agent(st, sig, uaddr, ident, attr, REF_FACTS_URL)

    pp, vk = engine.setup(max_steps, f"{seed}:engine")
    capture = noisy_capture(cfg.biometric_template, random.Random(f"{seed}:capture"), 0.2)
    env1 = prove_phase1(pp, BiometricStatement.build(cfg, capture, tau))
    proof = ledger.get_storage_proof(st, aaddr, ledger.agentid_slot(ident.text))
    stmt2 = ConfigStatement.from_ledger(proof, cfg, ident)
    env2 = prove_phase2(pp, stmt2, env1)

    ca = crypto.keygen(f"{seed}:root-ca")
    server = make_server(ca.secret, "llm.sales-assistant.example", seed)
    envs, stmts, states = [env1, env2], [stmt2], [SessionState()]
    for t in range(1, turns + 1):
        query, action = REF_TURNS[(t - 1) % len(REF_TURNS)]
        q = canonical_json(dict(query, turn=t))
        response, transcript = server.respond(q, f"{seed}:turn:{t}", canonical_json(action))
        stmt, nxt = build_turn(states[-1], q, response, transcript, server.name, ca.public, REF_TOOL_PARAMS)
        envs.append(prove_turn(pp, t, stmt, envs[-1], program))
        stmts.append(stmt)
        states.append(nxt)
    return ReferenceSession(pp, vk, st, cfg, ident, program, ca, server, capture, envs, stmts, states, owner)
