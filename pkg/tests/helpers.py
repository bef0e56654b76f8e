import random

from baid import engine
from baid.crypto import digest
from baid.engine import GuestProgram, ProgramRegistry


def flip_bit(data: bytes, bit: int) -> bytes:
    b = bytearray(data)
    b[(bit // 8) % len(b)] ^= 1 << (bit % 8)
    return bytes(b)


def identity_program(label="test.identity", steps=1, accepts_self=True, also=()):
    """Echo the claim. With ``accepts_self`` the program extends its own proofs (and those in ``also``)."""
    descriptor = engine.make_descriptor(label, "1.0.0", "identity/v1")

    def evaluate(claim, witness, prior):
        return claim, steps

    prior = frozenset({digest(descriptor), *also}) if accepts_self else None
    return GuestProgram(label, descriptor, evaluate, "identity/v1", prior)


HEAD = identity_program("test.identity.head", accepts_self=False)


def asserting_program(label="test.assert"):
    def evaluate(claim, witness, prior):
        assert witness, "guest assertion failed"
        return b"ok", 1

    return GuestProgram(label, engine.make_descriptor(label, "1.0.0", "assert/v1"), evaluate, "assert/v1")


def identity_chain(pp, n, program=None, claim=b"x"):
    """n identity envelopes (a head, then the body program), each embedding the previous."""
    program = program or identity_program(also=[HEAD.commitment])
    reg = ProgramRegistry([HEAD, program])
    head, body = engine.compile(pp, HEAD, reg), engine.compile(pp, program, reg)
    envs, prior = [], None
    for i in range(n):
        c = claim if isinstance(claim, bytes) else claim(i)
        env = engine.prove(pp, body if prior else head, engine.embed_prior(prior, c), None, prior)
        envs.append(env)
        prior = env
    return envs


def rng(seed=0):
    return random.Random(seed)


def extend_session(ref, program, turns=1, registry=None):
    """Prove ``turns`` reference turns on top of ref's phase-2 proof under ``program``."""
    from baid.fixtures import REF_TOOL_PARAMS, REF_TURNS
    from baid.identity import canonical_json
    from baid.phases import build_turn, default_registry, prove_turn

    registry = registry or default_registry(program)
    envs, state = list(ref.envelopes[:2]), ref.states[0]
    for t in range(1, turns + 1):
        query, action = REF_TURNS[(t - 1) % len(REF_TURNS)]
        q = canonical_json(dict(query, turn=t))
        response, transcript = ref.server.respond(q, f"extend:{t}", canonical_json(action))
        stmt, state = build_turn(state, q, response, transcript, ref.server.name, ref.ca.public, REF_TOOL_PARAMS)
        envs.append(prove_turn(ref.pp, t, stmt, envs[-1], program, registry))
    return envs


def issue_reference_vc(ref, **kw):
    from baid.credentials import issue_credential

    fields = dict(
        agent_id=ref.ident.text,
        user_id=ref.ident.user_id,
        task_id="task-1",
        task_definition="sell one laptop",
        security_level=2,
        scope=(("check_inventory", 0), ("confirm_order", 1000)),
        valid_from=0,
        valid_until=86_400,
    )
    fields.update(kw)
    return issue_credential(ref.cfg, ref.owner.secret, ref.vk, ref.envelopes[0], **fields)


def verifier_for(ref, now=3_600, trusted_roots=None):
    from baid.runtime import AgentInstance

    return AgentInstance("verifier", ref.cfg, ref.ident, vk=ref.vk, now=now, trusted_roots=trusted_roots)
