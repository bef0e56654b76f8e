import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from baid import crypto, ledger
from baid.errors import AlreadyBound, AlreadyRegistered, KycRejected, NotFound, TerminalState, Unauthorized
from baid.fixtures import REF_AGENT_NAME, REF_CAPABILITIES, REF_FACTS_URL, REF_OTHERS, REF_USER_ID, reference_profile
from baid.identity import AgentFacts, make_agent_id
from baid.ledger import AgentAttribute, AgentStatus
from baid.trie import ZERO

ISSUER = crypto.keygen("issuer")
OWNER = crypto.keygen("owner")
C_P = crypto.digest(b"program")


def _registered(user_id=REF_USER_ID, subject=b"subject"):
    st0 = ledger.genesis(ISSUER.public)
    kyc = ledger.issue_kyc(ISSUER.secret, crypto.digest(subject))
    st1, uaddr, receipt = ledger.register_user(st0, kyc, OWNER.public, user_id)
    return st1, uaddr, receipt


def _ident(name=REF_AGENT_NAME):
    return make_agent_id(name, C_P, reference_profile(), REF_USER_ID, REF_OTHERS)


def _with_agent(name=REF_AGENT_NAME, caps=REF_CAPABILITIES):
    st1, uaddr, _ = _registered()
    ident = _ident(name)
    attr = AgentAttribute.from_identifier(ident, caps)
    sig = crypto.sign(OWNER.secret, ledger.add_agent_message(st1, uaddr, ident, attr, REF_FACTS_URL))
    st2, aaddr, receipt = ledger.add_agent(st1, sig, uaddr, ident, attr, REF_FACTS_URL)
    return st2, uaddr, aaddr, ident, attr, receipt


def _update(st, aaddr, attr, url="https://x.example/v2", signer=OWNER):
    sig = crypto.sign(signer.secret, ledger.update_agent_message(st, aaddr, attr, url))
    return ledger.update_agent(st, sig, aaddr, attr, url)


def _remove(st, aaddr, signer=OWNER):
    return ledger.remove_agent(st, crypto.sign(signer.secret, ledger.remove_agent_message(st, aaddr)), aaddr)


def test_register_user():
    st1, uaddr, receipt = _registered()
    user = st1.get_user(uaddr)
    assert user.owner_pubkey == OWNER.public
    assert user.user_id == REF_USER_ID
    assert st1.block_number == 1
    assert receipt.gas_used == sum(u * c for _, u, c in receipt.breakdown)


def test_kyc_not_sanctioned_rejected():
    st0 = ledger.genesis(ISSUER.public)
    kyc = ledger.issue_kyc(ISSUER.secret, crypto.digest(b"s"), not_sanctioned=False)
    with pytest.raises(KycRejected):
        ledger.register_user(st0, kyc, OWNER.public, "u")


def test_kyc_wrong_issuer_rejected():
    st0 = ledger.genesis(ISSUER.public)
    kyc = ledger.issue_kyc(crypto.keygen("rogue").secret, crypto.digest(b"s"))
    with pytest.raises(KycRejected):
        ledger.register_user(st0, kyc, OWNER.public, "u")


def test_kyc_has_no_personal_fields():
    kyc = ledger.issue_kyc(ISSUER.secret, crypto.digest(b"s"))
    assert set(kyc.to_json()) <= {"subject_commitment", "issuer_signature", "predicate_flags"}


def test_duplicate_user_id():
    st1, _, _ = _registered()
    kyc = ledger.issue_kyc(ISSUER.secret, crypto.digest(b"other-subject"))
    with pytest.raises(AlreadyRegistered):
        ledger.register_user(st1, kyc, OWNER.public, REF_USER_ID)


def test_add_agent():
    st2, uaddr, aaddr, ident, attr, _ = _with_agent()
    agent = st2.get_agent(aaddr)
    assert agent.operational_status is AgentStatus.RUNNING
    assert agent.owner_user == uaddr
    assert st2.get_user(uaddr).agent_binding_list == (ident.text,)
    assert st2.storage[aaddr].get(ledger.agentid_slot(ident.text)) == ident.id_digest
    assert st2.find_agent(ident.text) == agent


def test_agentid_slot_derivation():
    aid = _ident().text
    assert ledger.agentid_slot(aid) == crypto.digest(crypto.canonical_encode(["agentid_slot", aid]))


def test_add_agent_wrong_signer():
    st1, uaddr, _ = _registered()
    ident = _ident()
    attr = AgentAttribute.from_identifier(ident)
    sig = crypto.sign(crypto.keygen("mallory").secret, ledger.add_agent_message(st1, uaddr, ident, attr, "u"))
    with pytest.raises(Unauthorized):
        ledger.add_agent(st1, sig, uaddr, ident, attr, "u")


def test_readd_same_agent():
    st2, uaddr, _, ident, attr, _ = _with_agent()
    sig = crypto.sign(OWNER.secret, ledger.add_agent_message(st2, uaddr, ident, attr, REF_FACTS_URL))
    with pytest.raises(AlreadyBound):
        ledger.add_agent(st2, sig, uaddr, ident, attr, REF_FACTS_URL)


def test_signature_not_replayable():
    st1, uaddr, _ = _registered()
    ident = _ident()
    attr = AgentAttribute.from_identifier(ident)
    sig = crypto.sign(OWNER.secret, ledger.add_agent_message(st1, uaddr, ident, attr, "u"))
    st2, _, _ = ledger.add_agent(st1, sig, uaddr, ident, attr, "u")
    other = _ident("baid:agent:laptopretail:second")
    attr2 = AgentAttribute.from_identifier(other)
    # the nonce has moved on, so an old signature never authorizes a new call
    with pytest.raises(Unauthorized):
        ledger.add_agent(st2, sig, uaddr, other, attr2, "u")


def test_update_increments_version():
    st2, _, aaddr, ident, attr, _ = _with_agent()
    attr2 = AgentAttribute.from_identifier(ident, REF_CAPABILITIES + ("quote-prices",))
    st3, receipt = _update(st2, aaddr, attr2)
    a = st3.get_agent(aaddr)
    assert a.version == st2.get_agent(aaddr).version + 1
    assert a.attribute == attr2
    assert a.updated_at == st3.block_number
    assert dict((i, u) for i, u, _ in receipt.breakdown).get("sstore_new", 0) == 0


def test_update_wrong_signer():
    st2, _, aaddr, _, attr, _ = _with_agent()
    with pytest.raises(Unauthorized):
        _update(st2, aaddr, attr, signer=crypto.keygen("mallory"))


def test_update_after_deregister():
    st2, _, aaddr, _, attr, _ = _with_agent()
    st3, _ = _remove(st2, aaddr)
    with pytest.raises(TerminalState):
        _update(st3, aaddr, attr)


def test_remove_keeps_record():
    st2, uaddr, aaddr, ident, _, _ = _with_agent()
    st3, _ = _remove(st2, aaddr)
    assert st3.get_agent(aaddr).operational_status is AgentStatus.DEREGISTERED
    assert ident.text not in st3.get_user(uaddr).agent_binding_list
    with pytest.raises(TerminalState):
        _remove(st3, aaddr)


def test_unknown_contract():
    st1, _, _ = _registered()
    with pytest.raises(NotFound):
        st1.get_agent(b"\x00" * 32)
    with pytest.raises(NotFound):
        ledger.get_storage_proof(st1, b"\x00" * 32, b"\x00" * 32)


def test_storage_proof_fresh_slot():
    st2, _, aaddr, ident, _, _ = _with_agent()
    proof = ledger.get_storage_proof(st2, aaddr, ledger.agentid_slot(ident.text))
    assert proof.verify()
    assert proof.value == ident.id_digest
    assert proof.state_root == st2.state_root


def test_storage_proof_stale_root():
    st2, _, aaddr, ident, attr, _ = _with_agent()
    proof = ledger.get_storage_proof(st2, aaddr, ledger.agentid_slot(ident.text))
    st3, _ = _update(st2, aaddr, attr)
    assert not proof.verify(st3.state_root)
    assert ledger.get_storage_proof(st3, aaddr, ledger.agentid_slot(ident.text)).verify()


def test_storage_proof_absent_slot():
    st2, _, aaddr, _, _, _ = _with_agent()
    proof = ledger.get_storage_proof(st2, aaddr, crypto.digest(b"nothing here"))
    assert proof.value == ZERO
    assert proof.verify()


def test_storage_proof_json_roundtrip():
    st2, _, aaddr, ident, _, _ = _with_agent()
    proof = ledger.get_storage_proof(st2, aaddr, ledger.agentid_slot(ident.text))
    assert ledger.StorageProofBundle.from_json(proof.to_json()) == proof


def test_state_root_binding_every_tx():
    st2, uaddr, aaddr, ident, attr, _ = _with_agent()
    slot = ledger.agentid_slot(ident.text)
    roots = [st2.state_root]
    st = st2
    for i in range(4):
        st, _ = _update(st, aaddr, attr, url=f"https://x.example/v{i}")
        proof = ledger.get_storage_proof(st, aaddr, slot)
        assert proof.verify(st.state_root)
        for old in roots:
            assert not proof.verify(old)
        roots.append(st.state_root)
    assert [r.block_number for r in st.gas_log] == list(range(1, st.block_number + 1))


def test_discover_one_match():
    st2, _, aaddr, ident, _, _ = _with_agent()
    facts = AgentFacts(ident.text, REF_CAPABILITIES).signed(OWNER.secret)
    hits = ledger.discover_agent(st2, "sell-laptops", {REF_FACTS_URL: facts})
    assert len(hits) == 1
    assert hits[0].contract.address == aaddr
    assert hits[0].trusted


def test_discover_untrusted_facts_listed():
    st2, _, _, ident, _, _ = _with_agent()
    facts = AgentFacts(ident.text, REF_CAPABILITIES).signed(crypto.keygen("x").secret)
    hits = ledger.discover_agent(st2, "sell-laptops", {REF_FACTS_URL: facts})
    assert len(hits) == 1 and not hits[0].trusted


def test_discover_excludes_deregistered():
    st2, _, aaddr, _, _, _ = _with_agent()
    st3, _ = _remove(st2, aaddr)
    assert ledger.discover_agent(st3, "sell-laptops") == []


def test_discover_empty_ledger():
    assert ledger.discover_agent(ledger.genesis(ISSUER.public), "sell-laptops") == []


def test_snapshot_roundtrip():
    st2, _, aaddr, _, _, _ = _with_agent()
    again = ledger.LedgerState.loads(st2.dumps())
    assert again.state_root == st2.state_root
    assert again.block_number == st2.block_number
    assert again.gas_log == st2.gas_log
    assert again.get_agent(aaddr) == st2.get_agent(aaddr)


def test_status_transition_table():
    R, S, D = AgentStatus.RUNNING, AgentStatus.STOPPED, AgentStatus.DEREGISTERED
    assert ledger.can_transition(R, S) and ledger.can_transition(S, R)
    assert ledger.can_transition(R, D) and ledger.can_transition(S, D)
    assert not any(ledger.can_transition(D, x) for x in (R, S, D))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from(["update", "stop", "start", "remove"]), max_size=8))
def test_lifecycle_sequences(ops):
    state, _, aaddr, ident, attr, _ = _with_agent()
    for i, op in enumerate(ops):
        before = state.get_agent(aaddr).operational_status
        try:
            if op == "update":
                state, _ = _update(state, aaddr, attr, url=f"u{i}")
            elif op == "remove":
                state, _ = _remove(state, aaddr)
            else:
                target = AgentStatus.STOPPED if op == "stop" else AgentStatus.RUNNING
                msg = ledger.set_status_message(state, aaddr, target)
                state, _ = ledger.set_status(state, crypto.sign(OWNER.secret, msg), aaddr, target)
        except TerminalState:
            assert before is AgentStatus.DEREGISTERED
            continue
        except ValueError:
            # InputError for a same-state toggle
            assert op in ("stop", "start")
            continue
        after = state.get_agent(aaddr).operational_status
        assert after == before or ledger.can_transition(before, after)
        assert before is not AgentStatus.DEREGISTERED
