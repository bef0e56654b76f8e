"""Agent identifiers, profile documents, biometric templates and AgentFacts."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from . import crypto
from .crypto import canonical_encode, digest
from .errors import BindingError, InputError

EMBEDDING_DIM = 128
FIXED_POINT_SCALE = 2**14
MAX_SQUARED_NORM = 2**62
AGENT_ID_PREFIX = "agentid:"


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


@dataclass(frozen=True)
class EmbeddingVector:
    """128 fixed-point components at scale 2**14."""

    components: tuple[int, ...]

    def __post_init__(self):
        comps = tuple(int(c) for c in self.components)
        if len(comps) != EMBEDDING_DIM:
            raise InputError(f"embedding must have {EMBEDDING_DIM} components, got {len(comps)}")
        if sum(c * c for c in comps) > MAX_SQUARED_NORM:
            raise InputError("embedding squared norm exceeds 2**62")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_floats(cls, values) -> "EmbeddingVector":
        return cls(tuple(round(float(v) * FIXED_POINT_SCALE) for v in values))

    def to_bytes(self) -> bytes:
        return canonical_encode([crypto.encode_int(c) for c in self.components])

    @classmethod
    def from_bytes(cls, data: bytes) -> "EmbeddingVector":
        return cls(tuple(crypto.decode_int(p) for p in crypto.canonical_decode(data)))

    def to_json(self) -> list[str]:
        return [str(c) for c in self.components]

    @classmethod
    def from_json(cls, obj) -> "EmbeddingVector":
        return cls(tuple(int(c) for c in obj))


@dataclass(frozen=True)
class ProfileConfig:
    human_identifier: str = ""
    biometric_template: EmbeddingVector | None = None
    policy_rules: tuple[str, ...] = ()
    operational_params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "policy_rules", tuple(self.policy_rules))
        object.__setattr__(self, "operational_params", dict(self.operational_params))

    @property
    def is_bound(self) -> bool:
        return bool(self.human_identifier) and self.biometric_template is not None

    def to_json(self) -> dict:
        return {
            "human_identifier": self.human_identifier,
            "biometric_template": None if self.biometric_template is None else self.biometric_template.to_json(),
            "policy_rules": list(self.policy_rules),
            "operational_params": {str(k): str(v) for k, v in self.operational_params.items()},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ProfileConfig":
        tpl = obj.get("biometric_template")
        return cls(
            obj.get("human_identifier", ""),
            None if tpl is None else EmbeddingVector.from_json(tpl),
            tuple(obj.get("policy_rules", ())),
            dict(obj.get("operational_params", {})),
        )

    def canonical_bytes(self) -> bytes:
        return canonical_json(self.to_json())

    def __hash__(self):
        return hash(self.canonical_bytes())


def profile_hash(cfg: ProfileConfig) -> bytes:
    return digest(cfg.canonical_bytes())


def bind_owner(cfg: ProfileConfig, user: str, template: EmbeddingVector, rebind: bool = False) -> ProfileConfig:
    if not isinstance(template, EmbeddingVector):
        raise InputError("template must be an EmbeddingVector")
    if not user:
        raise InputError("user identifier must be non-empty")
    if cfg.is_bound and not rebind:
        raise BindingError(f"profile already bound to {cfg.human_identifier!r}; pass rebind=True to change owner")
    return replace(cfg, human_identifier=user, biometric_template=template)


def _encode_others(others: dict) -> bytes:
    flat = []
    for k in sorted(others):
        flat += [str(k), str(others[k])]
    return canonical_encode(flat)


@dataclass(frozen=True)
class AgentIdentifier:
    name: str
    program_commitment: bytes
    profile_hash: bytes
    user_id: str
    others: dict = field(default_factory=dict)

    @property
    def id_digest(self) -> bytes:
        return digest(
            canonical_encode(
                [self.name, self.program_commitment, self.profile_hash, self.user_id, _encode_others(self.others)]
            )
        )

    @property
    def text(self) -> str:
        return AGENT_ID_PREFIX + self.id_digest.hex()

    def __str__(self) -> str:
        return self.text

    def __hash__(self):
        return hash(self.id_digest)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "program_commitment": self.program_commitment.hex(),
            "profile_hash": self.profile_hash.hex(),
            "user_id": self.user_id,
            "others": {str(k): str(v) for k, v in self.others.items()},
            "agent_id": self.text,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AgentIdentifier":
        ident = cls(
            obj["name"],
            crypto.from_hex(obj["program_commitment"]),
            crypto.from_hex(obj["profile_hash"]),
            obj["user_id"],
            dict(obj.get("others", {})),
        )
        if "agent_id" in obj and obj["agent_id"] != ident.text:
            raise InputError("agent_id does not match its components")
        return ident

    def to_bytes(self) -> bytes:
        return canonical_json(self.to_json())

    @classmethod
    def from_bytes(cls, data: bytes) -> "AgentIdentifier":
        return cls.from_json(json.loads(data))


def make_agent_id(name: str, c_p: bytes, cfg: ProfileConfig, user_id: str, others: dict | None = None) -> AgentIdentifier:
    if not name:
        raise InputError("agent name must be non-empty")
    return AgentIdentifier(name, bytes(c_p), profile_hash(cfg), user_id, dict(others or {}))


@dataclass(frozen=True)
class AgentFacts:
    agent_id: str
    capabilities: tuple[str, ...] = ()
    endpoints: tuple[tuple[str, str], ...] = ()
    trust_status: str = "unverified"
    context: str = "https://www.w3.org/ns/credentials/v2"
    signature: bytes = b""

    def body(self) -> dict:
        return {
            "@context": self.context,
            "agent_id": self.agent_id,
            "capabilities": list(self.capabilities),
            "endpoints": [{"protocol": p, "address": a} for p, a in self.endpoints],
            "trust_status": self.trust_status,
        }

    def signed(self, owner_secret: bytes) -> "AgentFacts":
        return replace(self, signature=crypto.sign(owner_secret, canonical_json(self.body())))

    def verify(self, owner_public: bytes) -> bool:
        return crypto.verify_sig(owner_public, canonical_json(self.body()), self.signature)

    def to_json(self) -> dict:
        return dict(self.body(), signature=self.signature.hex())

    @classmethod
    def from_json(cls, obj: dict) -> "AgentFacts":
        return cls(
            obj["agent_id"],
            tuple(obj.get("capabilities", ())),
            tuple((e["protocol"], e["address"]) for e in obj.get("endpoints", ())),
            obj.get("trust_status", "unverified"),
            obj.get("@context", ""),
            crypto.from_hex(obj.get("signature", "")),
        )
