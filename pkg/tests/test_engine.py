import json

import pytest

from baid import engine
from baid.crypto import digest
from baid.engine import GuestProgram, ProgramRegistry, ProofEnvelope
from baid.errors import BrokenChain, ConstraintViolation, EncodingError, InputError, RegistryError, StepBound
from helpers import HEAD, asserting_program, flip_bit, identity_chain, identity_program, rng


@pytest.fixture(scope="module")
def params():
    return engine.setup(1000, "test-engine")


def _prove_identity(pp, claim=b"x", program=None):
    program = program or identity_program(accepts_self=False)
    compiled = engine.compile(pp, program, ProgramRegistry([program]))
    return compiled, engine.prove(pp, compiled, engine.embed_prior(None, claim), None)


def test_setup_rejects_zero():
    with pytest.raises(InputError):
        engine.setup(0)


def test_completeness(params):
    pp, vk = params
    compiled, env = _prove_identity(pp)
    assert env.public_output == b"x"
    assert engine.verify(vk, compiled.commitment, env.public_inputs, env.public_output, env)


def test_cross_setup_receipts_fail(params):
    pp, _ = params
    _, other_vk = engine.setup(1000, "another")
    compiled, env = _prove_identity(pp)
    assert not engine.verify(other_vk, compiled.commitment, env.public_inputs, env.public_output, env)


def test_step_bound():
    pp, _ = engine.setup(1)
    program = identity_program(steps=2, accepts_self=False)
    compiled = engine.compile(pp, program, ProgramRegistry([program]))
    with pytest.raises(StepBound):
        engine.prove(pp, compiled, engine.embed_prior(None, b"x"), None)


def test_commitment_deterministic_and_sized():
    a = identity_program()
    assert engine.commit_prog(a) == engine.commit_prog(identity_program())
    assert len(engine.commit_prog(a)) == 32
    assert engine.commit_prog(a) == digest(a.descriptor)


def test_version_bump_changes_commitment():
    d1 = engine.make_descriptor("p", "1.0.0", "s")
    d2 = engine.make_descriptor("p", "1.0.1", "s")
    ev = lambda c, w, p: (c, 1)
    assert engine.commit_prog(GuestProgram("p", d1, ev, "s")) != engine.commit_prog(GuestProgram("p", d2, ev, "s"))


def test_descriptor_byte_change_changes_commitment():
    p = identity_program()
    for i in range(len(p.descriptor)):
        q = GuestProgram(p.program_id, flip_bit(p.descriptor, i * 8), p.evaluate, p.io_schema)
        assert engine.commit_prog(q) != engine.commit_prog(p)


def test_empty_descriptor_rejected():
    with pytest.raises(InputError):
        engine.commit_prog(GuestProgram("e", b"", lambda c, w, p: (c, 1), "s"))


def test_compile_idempotent(params):
    pp, _ = params
    p = identity_program()
    reg = ProgramRegistry([p])
    assert engine.compile(pp, p, reg).commitment == engine.compile(pp, p, reg).commitment


def test_compile_unregistered(params):
    pp, _ = params
    with pytest.raises(RegistryError):
        engine.compile(pp, identity_program("nobody.knows"), ProgramRegistry())


def test_registry_rejects_conflicting_descriptor():
    reg = ProgramRegistry([identity_program("p")])
    other = GuestProgram("p", b"different", lambda c, w, p: (c, 1), "s")
    with pytest.raises(RegistryError):
        reg.register(other)


def test_guest_assertion_is_constraint_violation(params):
    pp, _ = params
    p = asserting_program()
    compiled = engine.compile(pp, p, ProgramRegistry([p]))
    with pytest.raises(ConstraintViolation):
        engine.prove(pp, compiled, engine.embed_prior(None, b""), False)
    assert engine.prove(pp, compiled, engine.embed_prior(None, b""), True).public_output == b"ok"


def test_malformed_public_inputs(params):
    pp, _ = params
    p = identity_program(accepts_self=False)
    compiled = engine.compile(pp, p, ProgramRegistry([p]))
    with pytest.raises(InputError):
        engine.prove(pp, compiled, b"\x00\x00", None)


def test_flipped_prior_receipt_breaks_chain(params):
    pp, _ = params
    p = identity_program(also=[HEAD.commitment])
    compiled = engine.compile(pp, p, ProgramRegistry([HEAD, p]))
    first = identity_chain(pp, 1)[0]
    bad = ProofEnvelope(first.program_commitment, first.public_inputs, first.public_output, None,
                        flip_bit(first.receipt, 0))
    with pytest.raises(BrokenChain):
        engine.prove(pp, compiled, engine.embed_prior(bad, b"y"), None, bad)


def test_prior_must_be_embedded(params):
    pp, _ = params
    p = identity_program(also=[HEAD.commitment])
    compiled = engine.compile(pp, p, ProgramRegistry([HEAD, p]))
    first = identity_chain(pp, 1)[0]
    with pytest.raises(BrokenChain):
        engine.prove(pp, compiled, engine.embed_prior(None, b"y"), None, first)
    with pytest.raises(BrokenChain):
        engine.prove(pp, compiled, engine.embed_prior(first, b"y"), None, None)
    # a program with accepted predecessors cannot start a chain
    with pytest.raises(BrokenChain):
        engine.prove(pp, compiled, engine.embed_prior(None, b"y"), None)


def test_prior_from_unaccepted_program(params):
    pp, _ = params
    a = identity_program("a", accepts_self=False)
    b = identity_program("b")
    reg = ProgramRegistry([a, b])
    env_a = engine.prove(pp, engine.compile(pp, a, reg), engine.embed_prior(None, b"x"), None)
    with pytest.raises(BrokenChain):
        engine.prove(pp, engine.compile(pp, b, reg), engine.embed_prior(env_a, b"y"), None, env_a)


def test_program_without_prior_support(params):
    pp, _ = params
    a = identity_program("a", accepts_self=False)
    compiled = engine.compile(pp, a, ProgramRegistry([a]))
    first = engine.prove(pp, compiled, engine.embed_prior(None, b"x"), None)
    with pytest.raises(BrokenChain):
        engine.prove(pp, compiled, engine.embed_prior(first, b"y"), None, first)


def test_verify_different_commitment(params):
    pp, vk = params
    _, env = _prove_identity(pp)
    assert not engine.verify(vk, digest(b"other"), env.public_inputs, env.public_output, env)


def test_verify_swapped_output(params):
    pp, vk = params
    compiled, env = _prove_identity(pp, claim=b"xy")
    swapped = ProofEnvelope(env.program_commitment, env.public_inputs, b"yx", env.prior_digest, env.receipt)
    assert not engine.verify(vk, compiled.commitment, swapped.public_inputs, b"yx", swapped)


def test_verify_never_raises_on_garbage(params):
    _, vk = params
    junk = ProofEnvelope(b"", b"\xff\xff", b"", b"", b"")
    assert engine.verify(vk, b"", b"\xff\xff", b"", junk) is False


def test_tamper_evidence_500_mutations(params):
    pp, vk = params
    envs = identity_chain(pp, 3, claim=lambda i: b"claim-%d" % i)
    r = rng(10)
    fields = ["program_commitment", "public_inputs", "public_output", "prior_digest", "receipt"]
    for n in range(500):
        env = envs[1 + n % 2]
        values = {f: getattr(env, f) for f in fields}
        f = fields[n % len(fields)]
        values[f] = flip_bit(values[f], r.randrange(len(values[f]) * 8))
        bad = ProofEnvelope(**values)
        # the verifier is handed the honest statement and the mutated envelope
        assert not engine.verify(vk, env.program_commitment, env.public_inputs, env.public_output, bad)
        assert not engine.verify_chain_tail(vk, bad).ok


def test_envelope_roundtrip(params):
    pp, _ = params
    env = identity_chain(pp, 3)[-1]
    assert ProofEnvelope.from_bytes(env.to_bytes()) == env
    assert ProofEnvelope.from_json(env.to_json()) == env
    assert set(json.loads(env.dumps())) == {"envelope"}
    with pytest.raises(EncodingError):
        ProofEnvelope.from_bytes(env.to_bytes()[:-3])


def test_three_link_chain(params):
    pp, vk = params
    envs = identity_chain(pp, 3)
    report = engine.verify_chain_tail(vk, envs[-1], [e.program_commitment for e in envs])
    assert report.length == 3
    assert report.link_valid == [True, True, True]
    assert report.ok
    assert report.total_embedded_size == len(envs[0].to_bytes()) + len(envs[1].to_bytes())


def test_link_two_receipt_mutated(params):
    pp, vk = params
    p = identity_program(also=[HEAD.commitment])
    compiled = engine.compile(pp, p, ProgramRegistry([HEAD, p]))
    e1, e2, e3 = identity_chain(pp, 3, program=p)
    bad2 = ProofEnvelope(e2.program_commitment, e2.public_inputs, e2.public_output, e2.prior_digest,
                         flip_bit(e2.receipt, 5))
    # re-sign the tail over the tampered middle so only link 2 is at fault
    e3b = _forced_tail(pp, compiled, bad2)
    report = engine.verify_chain_tail(vk, e3b)
    assert report.first_failure_depth == 2
    assert report.link_valid == [True, False, True]


def _forced_tail(pp, compiled, prior):
    from baid import crypto

    pi = engine.embed_prior(prior, b"x")
    pd = digest(prior.to_bytes())
    stmt = engine.statement_digest(compiled.commitment, pi, b"x", pd)
    return ProofEnvelope(compiled.commitment, pi, b"x", pd, crypto.sign(pp.attestation_secret, stmt))


def test_single_envelope_chain(params):
    pp, vk = params
    report = engine.verify_chain_tail(vk, identity_chain(pp, 1)[0])
    assert report.length == 1 and report.ok and report.total_embedded_size == 0


def test_expected_commitment_mismatch_depth(params):
    pp, vk = params
    envs = identity_chain(pp, 3)
    h, c = envs[0].program_commitment, envs[1].program_commitment
    assert engine.verify_chain_tail(vk, envs[-1], [h, c, c]).ok
    assert engine.verify_chain_tail(vk, envs[-1], [h, digest(b"z"), c]).first_failure_depth == 2
    assert engine.verify_chain_tail(vk, envs[-1], [h, c]).first_failure_depth == 3
    assert engine.verify_chain_tail(vk, envs[-1], [h, c, c, c]).first_failure_depth == 4


def test_order_unforgeability(params):
    pp, vk = params
    e1, e2 = identity_chain(pp, 2, claim=lambda i: b"S%d" % i)
    others = identity_chain(pp, 3, claim=lambda i: b"T%d" % i) + identity_chain(*engine.setup(1000, "o")[:1], 1)
    for other in others:
        if other == e1:
            continue
        pi = engine.embed_prior(other, e2.claim)
        forged = ProofEnvelope(e2.program_commitment, pi, e2.public_output, digest(other.to_bytes()), e2.receipt)
        assert not engine.verify_chain_tail(vk, forged).ok
        forged2 = ProofEnvelope(e2.program_commitment, pi, e2.public_output, e2.prior_digest, e2.receipt)
        assert not engine.verify_chain_tail(vk, forged2).ok


def test_embedded_size_linear(params):
    pp, _ = params
    envs = identity_chain(pp, 5)
    sizes = [len(e.to_bytes()) for e in envs]
    # each link holds the previous envelope verbatim plus fixed framing and its own fields
    for k in range(1, 5):
        assert envs[k - 1].to_bytes() in envs[k].public_inputs
    increments = {sizes[k] - sizes[k - 1] for k in range(1, 5)}
    assert len(increments) == 1
    assert sizes == sorted(sizes) and sizes[0] > 0


def test_rechain_swaps_are_detected(params):
    pp, vk = params
    envs = identity_chain(pp, 3, claim=lambda i: b"c%d" % i)
    links, _ = engine.unroll_chain(envs[-1])
    assert engine.verify_chain_tail(vk, engine.rechain(links)).ok
    swapped = engine.rechain([links[0], links[2], links[1]])
    assert not engine.verify_chain_tail(vk, swapped).ok
    with pytest.raises(InputError):
        engine.rechain([])
