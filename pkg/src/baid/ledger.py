"""Single-node identity registry with storage proofs and gas metering.

Every transaction goes through the entrypoint functions below, which check
authorization before touching contract state. Contract storage is derived
from the contract records, so a transaction's gas bill follows from the
storage diff it causes: fresh slots, rewritten slots and cleared slots.

``LedgerState`` values are immutable; each transaction returns a new one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from types import MappingProxyType
from typing import Callable, Mapping

from . import crypto, gas
from .crypto import canonical_encode, digest, hash_parts
from .errors import (
    AlreadyBound,
    AlreadyRegistered,
    InputError,
    KycRejected,
    NotFound,
    TerminalState,
    Unauthorized,
)
from .gas import GasReceipt, make_receipt
from .identity import AgentFacts, AgentIdentifier, canonical_json
from .trie import ZERO, SparseTrie, TriePath, trie_prove, trie_update, trie_verify

ENTRYPOINT_ADDRESS = hash_parts(b"baid/entrypoint")


class AgentStatus(str, Enum):
    RUNNING = "Running"
    STOPPED = "Stopped"
    DEREGISTERED = "Deregistered"


_ALLOWED = {
    AgentStatus.RUNNING: {AgentStatus.STOPPED, AgentStatus.DEREGISTERED},
    AgentStatus.STOPPED: {AgentStatus.RUNNING, AgentStatus.DEREGISTERED},
    AgentStatus.DEREGISTERED: set(),
}


def can_transition(src: AgentStatus, dst: AgentStatus) -> bool:
    return dst in _ALLOWED[src]


def user_address(user_id: str) -> bytes:
    return hash_parts(b"baid/user", user_id)


def agent_address(user_addr: bytes, agent_id: str) -> bytes:
    return hash_parts(b"baid/agent", user_addr, agent_id)


def agentid_slot(agent_id: str) -> bytes:
    return digest(canonical_encode(["agentid_slot", agent_id]))


def field_slot(name: str) -> bytes:
    return hash_parts(b"baid/field", name)


def _word(value) -> bytes:
    if isinstance(value, (bytes, bytearray)):
        data = bytes(value)
    elif isinstance(value, int):
        data = crypto.encode_int(value)
    else:
        data = str(value).encode("utf-8")
    return digest(data)


# -- records ----------------------------------------------------------------


@dataclass(frozen=True)
class KycCredential:
    subject_commitment: bytes
    is_legal_entity: bool
    not_sanctioned: bool
    issuer_signature: bytes = b""

    def body(self) -> bytes:
        return canonical_encode(
            [b"baid/zkkyc", self.subject_commitment, b"1" if self.is_legal_entity else b"0", b"1" if self.not_sanctioned else b"0"]
        )

    def verify(self, issuer_public: bytes) -> bool:
        return crypto.verify_sig(issuer_public, self.body(), self.issuer_signature)

    def to_json(self) -> dict:
        return {
            "subject_commitment": self.subject_commitment.hex(),
            "predicate_flags": {"is_legal_entity": self.is_legal_entity, "not_sanctioned": self.not_sanctioned},
            "issuer_signature": self.issuer_signature.hex(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "KycCredential":
        flags = obj["predicate_flags"]
        return cls(
            crypto.from_hex(obj["subject_commitment"]),
            bool(flags["is_legal_entity"]),
            bool(flags["not_sanctioned"]),
            crypto.from_hex(obj["issuer_signature"]),
        )


def issue_kyc(issuer_secret: bytes, subject_commitment: bytes, is_legal_entity=True, not_sanctioned=True) -> KycCredential:
    cred = KycCredential(subject_commitment, is_legal_entity, not_sanctioned)
    return replace(cred, issuer_signature=crypto.sign(issuer_secret, cred.body()))


@dataclass(frozen=True)
class AgentAttribute:
    name: str
    program_commitment: bytes
    profile_hash: bytes
    user_id: str
    agent_id: str
    capabilities: tuple[str, ...] = ()
    roles: tuple[str, ...] = ()

    @classmethod
    def from_identifier(cls, ident: AgentIdentifier, capabilities=(), roles=()) -> "AgentAttribute":
        return cls(ident.name, ident.program_commitment, ident.profile_hash, ident.user_id, ident.text, tuple(capabilities), tuple(roles))

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "program_commitment": self.program_commitment.hex(),
            "profile_hash": self.profile_hash.hex(),
            "user_id": self.user_id,
            "agent_id": self.agent_id,
            "capabilities": list(self.capabilities),
            "roles": list(self.roles),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AgentAttribute":
        return cls(
            obj["name"],
            crypto.from_hex(obj["program_commitment"]),
            crypto.from_hex(obj["profile_hash"]),
            obj["user_id"],
            obj["agent_id"],
            tuple(obj.get("capabilities", ())),
            tuple(obj.get("roles", ())),
        )

    def to_bytes(self) -> bytes:
        return canonical_json(self.to_json())


@dataclass(frozen=True)
class UserIdentityContract:
    address: bytes
    owner_pubkey: bytes
    user_id: str
    kyc_subject: bytes
    agent_binding_list: tuple[str, ...] = ()
    nonce: int = 1

    def storage(self) -> dict[bytes, bytes]:
        slots = {
            field_slot("Owner"): _word(self.owner_pubkey),
            field_slot("userID"): _word(self.user_id),
            field_slot("kyc"): _word(self.kyc_subject),
            field_slot("nonce"): _word(self.nonce),
        }
        if self.agent_binding_list:
            slots[field_slot("Agent_Binding_List.length")] = _word(len(self.agent_binding_list))
        for i, aid in enumerate(self.agent_binding_list):
            slots[hash_parts(b"baid/binding", crypto.encode_int(i))] = _word(aid)
        return slots

    def to_json(self) -> dict:
        return {
            "address": self.address.hex(),
            "owner_pubkey": self.owner_pubkey.hex(),
            "user_id": self.user_id,
            "kyc_subject": self.kyc_subject.hex(),
            "agent_binding_list": list(self.agent_binding_list),
            "nonce": self.nonce,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "UserIdentityContract":
        return cls(
            crypto.from_hex(obj["address"]),
            crypto.from_hex(obj["owner_pubkey"]),
            obj["user_id"],
            crypto.from_hex(obj["kyc_subject"]),
            tuple(obj["agent_binding_list"]),
            obj["nonce"],
        )


@dataclass(frozen=True)
class AgentIdentityContract:
    address: bytes
    owner_user: bytes
    operational_status: AgentStatus
    attribute: AgentAttribute
    agent_facts_url: str
    version: int = 1
    updated_at: int = 0
    agent_id_digest: bytes = b""

    def storage(self) -> dict[bytes, bytes]:
        a = self.attribute
        return {
            field_slot("Owner_User"): _word(self.owner_user),
            field_slot("OperationalStatus"): _word(self.operational_status.value),
            field_slot("Attribute.name"): _word(a.name),
            field_slot("Attribute.program_commitment"): _word(a.program_commitment),
            field_slot("Attribute.profile_hash"): _word(a.profile_hash),
            field_slot("Attribute.userID"): _word(a.user_id),
            field_slot("Attribute.agentID"): _word(a.agent_id),
            field_slot("Attribute.capabilities"): _word(canonical_encode(a.capabilities)),
            field_slot("Attribute.roles"): _word(canonical_encode(a.roles)),
            field_slot("AgentFactsURL"): _word(self.agent_facts_url),
            field_slot("version"): _word(self.version),
            field_slot("updated_at"): _word(self.updated_at),
            agentid_slot(a.agent_id): self.agent_id_digest,
        }

    def to_json(self) -> dict:
        return {
            "address": self.address.hex(),
            "owner_user": self.owner_user.hex(),
            "operational_status": self.operational_status.value,
            "attribute": self.attribute.to_json(),
            "agent_facts_url": self.agent_facts_url,
            "version": self.version,
            "updated_at": self.updated_at,
            "agent_id_digest": self.agent_id_digest.hex(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AgentIdentityContract":
        return cls(
            crypto.from_hex(obj["address"]),
            crypto.from_hex(obj["owner_user"]),
            AgentStatus(obj["operational_status"]),
            AgentAttribute.from_json(obj["attribute"]),
            obj["agent_facts_url"],
            obj["version"],
            obj["updated_at"],
            crypto.from_hex(obj["agent_id_digest"]),
        )


def _frozen(d: dict) -> MappingProxyType:
    return MappingProxyType(dict(d))


def _entrypoint_storage(users: Mapping, agents: Mapping) -> dict[bytes, bytes]:
    slots = {hash_parts(b"baid/index/user", u.user_id): u.address for u in users.values()}
    for a in agents.values():
        slots[hash_parts(b"baid/index/agent", a.attribute.agent_id)] = a.address
    return slots


def account_leaf(kind: str, storage_root: bytes) -> bytes:
    return hash_parts(b"baid/account", kind, storage_root)


def _build_trie(slots: dict[bytes, bytes]) -> SparseTrie:
    t = SparseTrie()
    for k, v in slots.items():
        t = trie_update(t, k, v)
    return t


@dataclass(frozen=True)
class LedgerState:
    kyc_issuer: bytes
    block_number: int = 0
    users: Mapping = field(default_factory=lambda: _frozen({}))
    agents: Mapping = field(default_factory=lambda: _frozen({}))
    storage: Mapping = field(default_factory=lambda: _frozen({ENTRYPOINT_ADDRESS: SparseTrie()}))
    gas_log: tuple[GasReceipt, ...] = ()
    kyc_registry: frozenset = frozenset()

    def account_kind(self, addr: bytes) -> str:
        if addr == ENTRYPOINT_ADDRESS:
            return "entrypoint"
        if addr in self.users:
            return "user"
        if addr in self.agents:
            return "agent"
        raise NotFound(f"no contract at {addr.hex()}")

    def account_trie(self) -> SparseTrie:
        leaves = {addr: account_leaf(self.account_kind(addr), t.root) for addr, t in self.storage.items()}
        return SparseTrie(MappingProxyType(leaves))

    @property
    def state_root(self) -> bytes:
        cached = self.__dict__.get("_state_root")
        if cached is None:
            cached = self.account_trie().root
            object.__setattr__(self, "_state_root", cached)
        return cached

    def storage_root(self, addr: bytes) -> bytes:
        try:
            return self.storage[addr].root
        except KeyError:
            raise NotFound(f"no contract at {addr.hex()}") from None

    def get_user(self, addr: bytes) -> UserIdentityContract:
        try:
            return self.users[addr]
        except KeyError:
            raise NotFound(f"no user contract at {addr.hex()}") from None

    def get_agent(self, addr: bytes) -> AgentIdentityContract:
        try:
            return self.agents[addr]
        except KeyError:
            raise NotFound(f"no agent contract at {addr.hex()}") from None

    def find_user(self, user_id: str) -> UserIdentityContract | None:
        return self.users.get(user_address(user_id))

    def find_agent(self, agent_id: str) -> AgentIdentityContract | None:
        for a in self.agents.values():
            if a.attribute.agent_id == agent_id:
                return a
        return None

    # -- snapshot file ------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "state_root": self.state_root.hex(),
            "block_number": self.block_number,
            "kyc_issuer": self.kyc_issuer.hex(),
            "kyc_registry": sorted(s.hex() for s in self.kyc_registry),
            "contracts": {
                "users": [u.to_json() for u in sorted(self.users.values(), key=lambda u: u.address)],
                "agents": [a.to_json() for a in sorted(self.agents.values(), key=lambda a: a.address)],
            },
            "gas_log": [r.to_json() for r in self.gas_log],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, obj: dict) -> "LedgerState":
        users = {u.address: u for u in map(UserIdentityContract.from_json, obj["contracts"]["users"])}
        agents = {a.address: a for a in map(AgentIdentityContract.from_json, obj["contracts"]["agents"])}
        storage = {ENTRYPOINT_ADDRESS: _build_trie(_entrypoint_storage(users, agents))}
        storage.update({addr: _build_trie(u.storage()) for addr, u in users.items()})
        storage.update({addr: _build_trie(a.storage()) for addr, a in agents.items()})
        st = cls(
            crypto.from_hex(obj["kyc_issuer"]),
            obj["block_number"],
            _frozen(users),
            _frozen(agents),
            _frozen(storage),
            tuple(GasReceipt.from_json(r) for r in obj["gas_log"]),
            frozenset(crypto.from_hex(s) for s in obj["kyc_registry"]),
        )
        if "state_root" in obj and st.state_root.hex() != obj["state_root"]:
            raise InputError("ledger snapshot state_root does not match its contents")
        return st

    @classmethod
    def loads(cls, text: str) -> "LedgerState":
        return cls.from_json(json.loads(text))


def genesis(kyc_issuer_public: bytes) -> LedgerState:
    return LedgerState(kyc_issuer=kyc_issuer_public)


# -- transaction plumbing ---------------------------------------------------


def _diff_units(old: dict, new: dict) -> dict[str, int]:
    fresh = mod = 0
    for k in set(old) | set(new):
        before, after = old.get(k, ZERO), new.get(k, ZERO)
        if before == after:
            continue
        if before == ZERO:
            fresh += 1
        else:
            mod += 1
    return {gas.SSTORE_NEW: fresh, gas.SSTORE_MOD: mod}


def _commit(
    st: LedgerState,
    op_name: str,
    calldata: bytes,
    units: dict,
    users: dict | None = None,
    agents: dict | None = None,
    kyc_registry: frozenset | None = None,
) -> tuple[LedgerState, GasReceipt]:
    users = dict(st.users) if users is None else users
    agents = dict(st.agents) if agents is None else agents
    storage = dict(st.storage)
    totals = {gas.TX_BASE: 1, gas.CALLDATA_BYTE: len(calldata), gas.SSTORE_NEW: 0, gas.SSTORE_MOD: 0}

    touched: dict[bytes, dict] = {ENTRYPOINT_ADDRESS: _entrypoint_storage(users, agents)}
    for addr, rec in list(users.items()) + list(agents.items()):
        old = st.users.get(addr) or st.agents.get(addr)
        if old is not rec:
            touched[addr] = rec.storage()
    for addr, slots in touched.items():
        before = dict(st.storage[addr].leaves) if addr in st.storage else {}
        if before == slots:
            continue
        for item, n in _diff_units(before, slots).items():
            totals[item] += n
        storage[addr] = _build_trie(slots)

    for item, n in units.items():
        totals[item] = totals.get(item, 0) + n
    block = st.block_number + 1
    receipt = make_receipt(op_name, totals, block)
    new = LedgerState(
        st.kyc_issuer,
        block,
        _frozen(users),
        _frozen(agents),
        _frozen(storage),
        st.gas_log + (receipt,),
        st.kyc_registry if kyc_registry is None else kyc_registry,
    )
    return new, receipt


def call_message(op: str, target: bytes, nonce: int, *args: bytes | str) -> bytes:
    """Bytes the owner signs to authorize an entrypoint call."""
    return canonical_encode([b"baid/call", op, target, crypto.encode_int(nonce), *args])


def add_agent_message(st: LedgerState, user_addr: bytes, agent: AgentIdentifier, attribute: AgentAttribute, facts_url: str) -> bytes:
    user = st.get_user(user_addr)
    return call_message("addAgent", user_addr, user.nonce, agent.to_bytes(), attribute.to_bytes(), facts_url)


def update_agent_message(st: LedgerState, agent_addr: bytes, new_attribute: AgentAttribute, new_facts_url: str) -> bytes:
    a = st.get_agent(agent_addr)
    user = st.get_user(a.owner_user)
    return call_message("updateAgent", agent_addr, user.nonce, new_attribute.to_bytes(), new_facts_url)


def remove_agent_message(st: LedgerState, agent_addr: bytes) -> bytes:
    a = st.get_agent(agent_addr)
    user = st.get_user(a.owner_user)
    return call_message("removeAgent", agent_addr, user.nonce)


def set_status_message(st: LedgerState, agent_addr: bytes, status: AgentStatus) -> bytes:
    a = st.get_agent(agent_addr)
    user = st.get_user(a.owner_user)
    return call_message("setStatus", agent_addr, user.nonce, status.value)


# -- entrypoint operations --------------------------------------------------


def register_user(st: LedgerState, kyc: KycCredential, owner_pubkey: bytes, user_id: str):
    if not user_id:
        raise InputError("user_id must be non-empty")
    crypto.require_len(owner_pubkey, crypto.KEY_SIZE, "owner public key")
    if not kyc.verify(st.kyc_issuer):
        raise KycRejected("zkKYC credential signature invalid")
    if not (kyc.is_legal_entity and kyc.not_sanctioned):
        raise KycRejected("zkKYC predicates not satisfied")
    addr = user_address(user_id)
    if addr in st.users:
        raise AlreadyRegistered(f"user id {user_id!r} already registered")
    if kyc.subject_commitment in st.kyc_registry:
        raise AlreadyRegistered("zkKYC credential already used")
    users = dict(st.users)
    users[addr] = UserIdentityContract(addr, bytes(owner_pubkey), user_id, kyc.subject_commitment)
    calldata = canonical_encode([kyc.body(), kyc.issuer_signature, owner_pubkey, user_id])
    units = {gas.KYC_VERIFY: 1, gas.INSTANTIATE: 1, gas.EVENT: 1}
    new, receipt = _commit(st, "register_user", calldata, units, users=users, kyc_registry=st.kyc_registry | {kyc.subject_commitment})
    return new, addr, receipt


def _authorize(user: UserIdentityContract, message: bytes, caller_sig: bytes) -> None:
    if not crypto.verify_sig(user.owner_pubkey, message, caller_sig):
        raise Unauthorized("caller signature does not verify under the user contract Owner key")


def _check_attribute(agent: AgentIdentifier, attribute: AgentAttribute) -> None:
    expected = AgentAttribute.from_identifier(agent, attribute.capabilities, attribute.roles)
    if attribute != expected:
        raise InputError("attribute does not match the agent identifier")


def add_agent(st: LedgerState, caller_sig: bytes, user_addr: bytes, agent: AgentIdentifier, attribute: AgentAttribute, facts_url: str):
    user = st.get_user(user_addr)
    message = add_agent_message(st, user_addr, agent, attribute, facts_url)
    _authorize(user, message, caller_sig)
    _check_attribute(agent, attribute)
    if agent.user_id != user.user_id:
        raise InputError("agent identifier names a different user id")
    if agent.text in user.agent_binding_list or st.find_agent(agent.text) is not None:
        raise AlreadyBound(f"{agent.text} already bound")
    addr = agent_address(user_addr, agent.text)
    users, agents = dict(st.users), dict(st.agents)
    agents[addr] = AgentIdentityContract(
        addr, user_addr, AgentStatus.RUNNING, attribute, facts_url, 1, st.block_number + 1, agent.id_digest
    )
    users[user_addr] = replace(user, agent_binding_list=user.agent_binding_list + (agent.text,), nonce=user.nonce + 1)
    units = {gas.AUTHORIZE: 1, gas.SIG_VERIFY: 1, gas.INSTANTIATE: 1, gas.EVENT: 1}
    new, receipt = _commit(st, "add_agent", message + caller_sig, units, users=users, agents=agents)
    return new, addr, receipt


def _digest_of(agent_id: str) -> bytes:
    if not agent_id.startswith("agentid:"):
        raise InputError(f"malformed agent id {agent_id!r}")
    value = crypto.from_hex(agent_id[len("agentid:") :])
    return crypto.require_len(value, crypto.DIGEST_SIZE, "agent id digest")


def _owned_agent(st: LedgerState, agent_addr: bytes) -> tuple[AgentIdentityContract, UserIdentityContract]:
    a = st.get_agent(agent_addr)
    return a, st.get_user(a.owner_user)


def update_agent(st: LedgerState, caller_sig: bytes, agent_addr: bytes, new_attribute: AgentAttribute, new_facts_url: str):
    a, user = _owned_agent(st, agent_addr)
    message = update_agent_message(st, agent_addr, new_attribute, new_facts_url)
    _authorize(user, message, caller_sig)
    if a.operational_status is AgentStatus.DEREGISTERED:
        raise TerminalState("agent is deregistered")
    if new_attribute.user_id != user.user_id:
        raise InputError("attribute names a different user id")
    binding = user.agent_binding_list
    id_digest = a.agent_id_digest
    if new_attribute.agent_id != a.attribute.agent_id:
        if st.find_agent(new_attribute.agent_id) is not None:
            raise AlreadyBound(f"{new_attribute.agent_id} already bound")
        # "others" never reach the chain, so the digest comes from the id text
        id_digest = _digest_of(new_attribute.agent_id)
        binding = tuple(new_attribute.agent_id if x == a.attribute.agent_id else x for x in binding)
    users, agents = dict(st.users), dict(st.agents)
    agents[agent_addr] = replace(
        a,
        attribute=new_attribute,
        agent_facts_url=new_facts_url,
        version=a.version + 1,
        updated_at=st.block_number + 1,
        agent_id_digest=id_digest,
    )
    users[user.address] = replace(user, agent_binding_list=binding, nonce=user.nonce + 1)
    units = {gas.AUTHORIZE: 1, gas.SIG_VERIFY: 1, gas.EVENT: 1}
    return _commit(st, "update_agent", message + caller_sig, units, users=users, agents=agents)


def set_status(st: LedgerState, caller_sig: bytes, agent_addr: bytes, status: AgentStatus):
    """Running <-> Stopped toggle; deregistration goes through ``remove_agent``."""
    a, user = _owned_agent(st, agent_addr)
    message = set_status_message(st, agent_addr, status)
    _authorize(user, message, caller_sig)
    if a.operational_status is AgentStatus.DEREGISTERED:
        raise TerminalState("agent is deregistered")
    if status is AgentStatus.DEREGISTERED or not can_transition(a.operational_status, status):
        raise InputError(f"invalid status transition {a.operational_status.value} -> {status.value}")
    users, agents = dict(st.users), dict(st.agents)
    agents[agent_addr] = replace(a, operational_status=status, updated_at=st.block_number + 1)
    users[user.address] = replace(user, nonce=user.nonce + 1)
    units = {gas.AUTHORIZE: 1, gas.SIG_VERIFY: 1, gas.EVENT: 1}
    return _commit(st, "set_status", message + caller_sig, units, users=users, agents=agents)


def remove_agent(st: LedgerState, caller_sig: bytes, agent_addr: bytes):
    a, user = _owned_agent(st, agent_addr)
    message = remove_agent_message(st, agent_addr)
    _authorize(user, message, caller_sig)
    if a.operational_status is AgentStatus.DEREGISTERED:
        raise TerminalState("agent already deregistered")
    binding = list(user.agent_binding_list)
    # swap-and-pop, as a Solidity array removal would
    i = binding.index(a.attribute.agent_id)
    binding[i] = binding[-1]
    binding.pop()
    users, agents = dict(st.users), dict(st.agents)
    agents[agent_addr] = replace(a, operational_status=AgentStatus.DEREGISTERED, updated_at=st.block_number + 1)
    users[user.address] = replace(user, agent_binding_list=tuple(binding), nonce=user.nonce + 1)
    units = {gas.AUTHORIZE: 1, gas.SIG_VERIFY: 1, gas.EVENT: 2}
    return _commit(st, "remove_agent", message + caller_sig, units, users=users, agents=agents)


# -- storage proofs ---------------------------------------------------------


@dataclass(frozen=True)
class StorageProofBundle:
    contract_addr: bytes
    slot_key: bytes
    block_number: int
    state_root: bytes
    storage_root: bytes
    account_kind: str
    account_path: TriePath
    storage_path: TriePath

    @property
    def value(self) -> bytes:
        return self.storage_path.value

    def verify(self, state_root: bytes | None = None) -> bool:
        root = self.state_root if state_root is None else state_root
        return (
            self.account_path.key == self.contract_addr
            and self.storage_path.key == self.slot_key
            and self.account_path.value == account_leaf(self.account_kind, self.storage_root)
            and trie_verify(root, self.account_path)
            and trie_verify(self.storage_root, self.storage_path)
        )

    def to_json(self) -> dict:
        return {
            "contract_addr": self.contract_addr.hex(),
            "slot_key": self.slot_key.hex(),
            "block_number": self.block_number,
            "state_root": self.state_root.hex(),
            "storage_root": self.storage_root.hex(),
            "account_kind": self.account_kind,
            "value": self.value.hex(),
            "account_path": self.account_path.to_json(),
            "storage_path": self.storage_path.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StorageProofBundle":
        return cls(
            crypto.from_hex(obj["contract_addr"]),
            crypto.from_hex(obj["slot_key"]),
            obj["block_number"],
            crypto.from_hex(obj["state_root"]),
            crypto.from_hex(obj["storage_root"]),
            obj["account_kind"],
            TriePath.from_json(obj["account_path"]),
            TriePath.from_json(obj["storage_path"]),
        )


def get_storage_proof(st: LedgerState, contract_addr: bytes, slot_key: bytes, block_number: int | None = None) -> StorageProofBundle:
    if block_number is not None and block_number != st.block_number:
        raise InputError("historical storage proofs are not supported")
    if contract_addr not in st.storage:
        raise NotFound(f"no contract at {contract_addr.hex()}")
    trie = st.storage[contract_addr]
    return StorageProofBundle(
        contract_addr,
        slot_key,
        st.block_number,
        st.state_root,
        trie.root,
        st.account_kind(contract_addr),
        trie_prove(st.account_trie(), contract_addr),
        trie_prove(trie, slot_key),
    )


# -- discovery --------------------------------------------------------------


@dataclass(frozen=True)
class DiscoveryHit:
    contract: AgentIdentityContract
    facts: AgentFacts | None
    trusted: bool


FactsResolver = Callable[[str], AgentFacts | dict | None]


def _resolve(resolver, url: str):
    try:
        doc = resolver(url) if callable(resolver) else resolver.get(url)
    except Exception:  # resolver failures just leave the entry untrusted
        return None
    if isinstance(doc, dict):
        try:
            doc = AgentFacts.from_json(doc)
        except (KeyError, ValueError):
            return None
    return doc


def discover_agent(st: LedgerState, query: str, resolver: FactsResolver | Mapping | None = None) -> list[DiscoveryHit]:
    hits = []
    for a in sorted(st.agents.values(), key=lambda a: a.address):
        if a.operational_status is not AgentStatus.RUNNING:
            continue
        if query not in a.attribute.capabilities and query != a.attribute.name and query not in a.attribute.roles:
            continue
        facts = _resolve(resolver, a.agent_facts_url) if resolver is not None else None
        owner = st.users.get(a.owner_user)
        trusted = bool(
            facts is not None
            and owner is not None
            and facts.agent_id == a.attribute.agent_id
            and facts.verify(owner.owner_pubkey)
        )
        hits.append(DiscoveryHit(a, facts, trusted))
    return hits
