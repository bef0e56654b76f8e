"""Proof engine: setup / commit_prog / compile / prove / verify.

The reference backend is an attestation prover. ``prove`` re-executes the
guest program and signs the statement tuple with a key held on the prover
side; ``verify`` checks that signature. That buys completeness,
tamper-evidence and witness hiding (witnesses never leave ``prove``), but
soundness holds only against parties that do not hold the attestation
secret. A succinct zkVM backend slots in behind the same five calls.

Recursion: when ``prove`` receives a prior envelope, the new envelope's
public inputs carry the complete serialized prior, and ``prove`` refuses
to run unless that prior verifies and comes from a program the guest
accepts as its predecessor.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Any, Callable

from . import crypto
from .crypto import canonical_decode, canonical_encode, digest
from .errors import (
    BrokenChain,
    ConstraintViolation,
    EncodingError,
    InputError,
    RegistryError,
    StepBound,
)

ENGINE_VERSION = "baid-attest/1"


@dataclass(frozen=True)
class PublicParams:
    max_steps: int
    attestation_secret: bytes = field(repr=False)

    @property
    def attestation_public(self) -> bytes:
        return crypto.public_from_secret(self.attestation_secret)

    def verifying_key(self) -> "VerifyingKey":
        return VerifyingKey(self.attestation_public, ENGINE_VERSION)


@dataclass(frozen=True)
class VerifyingKey:
    attestation_public: bytes
    engine_version: str = ENGINE_VERSION

    def to_json(self) -> dict:
        return {"attestation_public": self.attestation_public.hex(), "engine_version": self.engine_version}

    @classmethod
    def from_json(cls, obj: dict) -> "VerifyingKey":
        return cls(crypto.from_hex(obj["attestation_public"]), obj.get("engine_version", ENGINE_VERSION))


def setup(max_steps: int, seed: bytes | str | None = None) -> tuple[PublicParams, VerifyingKey]:
    if not isinstance(max_steps, int) or max_steps < 1:
        raise InputError("max_steps must be a positive integer")
    keys = crypto.keygen(None if seed is None else canonical_encode([b"baid/setup", seed]))
    pp = PublicParams(max_steps, keys.secret)
    return pp, pp.verifying_key()


# -- programs ---------------------------------------------------------------

# evaluate(claim, witness, prior) -> (public_output, step_count)
Evaluate = Callable[[bytes, Any, "ProofEnvelope | None"], tuple[bytes, int]]


def make_descriptor(program_id: str, version: str, io_schema: str) -> bytes:
    return canonical_encode([b"baid/program", program_id, version, io_schema])


@dataclass(frozen=True)
class GuestProgram:
    """A deterministic guest: descriptor bytes plus its evaluation function.

    ``prior_programs`` lists commitments of programs whose envelopes may be
    consumed as the prior; ``None`` means the guest takes no prior at all.
    """

    program_id: str
    descriptor: bytes
    evaluate: Evaluate = field(compare=False)
    io_schema: str = ""
    prior_programs: frozenset | None = None

    @property
    def commitment(self) -> bytes:
        return commit_prog(self)


def commit_prog(p: GuestProgram) -> bytes:
    if not p.descriptor:
        raise InputError("empty program descriptor")
    return digest(p.descriptor)


class ProgramRegistry:
    """Write-once map from program id to guest program."""

    def __init__(self, programs=()):
        self._programs: dict[str, GuestProgram] = {}
        self._lock = threading.Lock()
        for p in programs:
            self.register(p)

    def register(self, p: GuestProgram) -> GuestProgram:
        with self._lock:
            known = self._programs.get(p.program_id)
            if known is not None and known.descriptor != p.descriptor:
                raise RegistryError(f"program id {p.program_id!r} already registered with another descriptor")
            self._programs.setdefault(p.program_id, p)
        return p

    def get(self, program_id: str) -> GuestProgram:
        try:
            return self._programs[program_id]
        except KeyError:
            raise RegistryError(f"unknown program id {program_id!r}") from None

    def __contains__(self, program_id: str) -> bool:
        return program_id in self._programs

    def __iter__(self):
        return iter(list(self._programs.values()))


DEFAULT_REGISTRY = ProgramRegistry()


@dataclass(frozen=True)
class CompiledProgram:
    program: GuestProgram
    commitment: bytes
    io_schema: str

    @property
    def descriptor(self) -> bytes:
        return self.program.descriptor


def compile(pp: PublicParams, p: GuestProgram, registry: ProgramRegistry | None = None) -> CompiledProgram:
    registry = DEFAULT_REGISTRY if registry is None else registry
    known = registry.get(p.program_id)
    if known.descriptor != p.descriptor:
        raise RegistryError(f"descriptor of {p.program_id!r} does not match the registered program")
    return CompiledProgram(known, commit_prog(known), known.io_schema)


# -- envelopes --------------------------------------------------------------


@dataclass(frozen=True)
class ProofEnvelope:
    program_commitment: bytes
    public_inputs: bytes
    public_output: bytes
    prior_digest: bytes | None
    receipt: bytes

    def to_bytes(self) -> bytes:
        return canonical_encode(
            [
                self.program_commitment,
                self.public_inputs,
                self.public_output,
                self.prior_digest or b"",
                self.receipt,
            ]
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "ProofEnvelope":
        parts = canonical_decode(data)
        if len(parts) != 5:
            raise EncodingError(f"envelope has {len(parts)} fields, expected 5")
        cp, pi, po, prior, receipt = parts
        return cls(cp, pi, po, prior or None, receipt)

    @property
    def claim(self) -> bytes:
        return split_public_inputs(self.public_inputs)[1]

    def prior(self) -> "ProofEnvelope | None":
        prior_bytes = split_public_inputs(self.public_inputs)[0]
        return ProofEnvelope.from_bytes(prior_bytes) if prior_bytes else None

    def to_json(self) -> dict:
        return {"envelope": self.to_bytes().hex()}

    @classmethod
    def from_json(cls, obj: dict) -> "ProofEnvelope":
        return cls.from_bytes(crypto.from_hex(obj["envelope"]))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


def embed_prior(prior: ProofEnvelope | None, claim: bytes) -> bytes:
    """Public-input layout: [serialized prior or empty, claim]."""
    return canonical_encode([prior.to_bytes() if prior is not None else b"", claim])


def split_public_inputs(public_inputs: bytes) -> tuple[bytes, bytes]:
    parts = canonical_decode(public_inputs)
    if len(parts) != 2:
        raise EncodingError("public inputs must be [prior, claim]")
    return parts[0], parts[1]


def statement_digest(c_p: bytes, public_inputs: bytes, public_output: bytes, prior_digest: bytes | None) -> bytes:
    return digest(canonical_encode([c_p, public_inputs, public_output, prior_digest or b""]))


def prove(
    pp: PublicParams,
    compiled: CompiledProgram,
    public_inputs: bytes,
    private_witness: Any,
    prior: ProofEnvelope | None = None,
) -> ProofEnvelope:
    program = compiled.program
    try:
        prior_bytes, claim = split_public_inputs(public_inputs)
    except EncodingError as exc:
        raise InputError(f"public inputs do not follow the io layout: {exc}") from exc

    prior_digest = None
    if prior is not None:
        if program.prior_programs is None:
            raise BrokenChain(f"{program.program_id} does not accept a prior proof")
        # P_rec: the prior must verify and come from an accepted predecessor
        if prior_bytes != prior.to_bytes():
            raise BrokenChain("public inputs do not embed the prior envelope")
        if prior.program_commitment not in program.prior_programs:
            raise BrokenChain("prior envelope comes from a program this guest does not accept")
        if not verify(pp.verifying_key(), prior.program_commitment, prior.public_inputs, prior.public_output, prior):
            raise BrokenChain("prior envelope fails verification")
        prior_digest = digest(prior_bytes)
    elif prior_bytes:
        raise BrokenChain("public inputs embed a prior that was not supplied")
    elif program.prior_programs:
        raise BrokenChain(f"{program.program_id} requires a prior proof")

    try:
        output, steps = program.evaluate(claim, private_witness, prior)
    except ConstraintViolation:
        raise
    except EncodingError as exc:
        raise InputError(f"inputs do not match io schema {compiled.io_schema!r}: {exc}") from exc
    except (AssertionError, ValueError, KeyError, TypeError, IndexError) as exc:
        raise ConstraintViolation(f"{program.program_id}: {exc}") from exc
    if steps > pp.max_steps:
        raise StepBound(f"{program.program_id} ran {steps} steps, bound is {pp.max_steps}")

    stmt = statement_digest(compiled.commitment, public_inputs, output, prior_digest)
    receipt = crypto.sign(pp.attestation_secret, stmt)
    return ProofEnvelope(compiled.commitment, public_inputs, output, prior_digest, receipt)


def verify(vk: VerifyingKey, c_p: bytes, public_inputs: bytes, public_output: bytes, env: ProofEnvelope) -> bool:
    try:
        if env.program_commitment != c_p:
            return False
        if env.public_inputs != public_inputs or env.public_output != public_output:
            return False
        if vk.engine_version != ENGINE_VERSION:
            return False
        prior_bytes, _ = split_public_inputs(env.public_inputs)
        if prior_bytes:
            if env.prior_digest != digest(prior_bytes):
                return False
        elif env.prior_digest is not None:
            return False
        stmt = statement_digest(c_p, public_inputs, public_output, env.prior_digest)
        return crypto.verify_sig(vk.attestation_public, stmt, env.receipt)
    except (EncodingError, TypeError, AttributeError):
        return False


@dataclass
class ChainReport:
    length: int
    commitments: list[bytes]
    link_valid: list[bool]
    first_failure_depth: int | None
    total_embedded_size: int
    final_size: int

    @property
    def ok(self) -> bool:
        return self.first_failure_depth is None

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "length": self.length,
            "commitments": [c.hex() for c in self.commitments],
            "link_valid": self.link_valid,
            "first_failure_depth": self.first_failure_depth,
            "total_embedded_size": self.total_embedded_size,
            "final_size": self.final_size,
        }


def unroll_chain(final_env: ProofEnvelope) -> tuple[list[ProofEnvelope], bool]:
    """Links ordered head -> tail; the flag is False if an embedded prior is malformed."""
    links = [final_env]
    intact = True
    while True:
        try:
            prior = links[-1].prior()
        except EncodingError:
            intact = False
            break
        if prior is None:
            break
        links.append(prior)
    links.reverse()
    return links, intact


def verify_chain_tail(vk: VerifyingKey, final_env: ProofEnvelope, expected_c_p_per_phase=None) -> ChainReport:
    """Verify the final envelope and every envelope embedded beneath it.

    Depths are 1-based from the chain head; ``first_failure_depth`` names
    the earliest link that fails its own check, its linkage to the
    previous link, or the expected commitment at its position.
    """
    links, intact = unroll_chain(final_env)
    valid = []
    for i, env in enumerate(links):
        ok = verify(vk, env.program_commitment, env.public_inputs, env.public_output, env)
        if i == 0:
            ok = ok and intact and env.prior_digest is None
        else:
            ok = ok and env.prior_digest == digest(links[i - 1].to_bytes())
        if expected_c_p_per_phase is not None:
            ok = ok and i < len(expected_c_p_per_phase) and env.program_commitment == expected_c_p_per_phase[i]
        valid.append(ok)
    first = next((i + 1 for i, ok in enumerate(valid) if not ok), None)
    if first is None and expected_c_p_per_phase is not None and len(expected_c_p_per_phase) != len(links):
        first = len(links) + 1
    final_size = len(final_env.to_bytes())
    embedded = sum(len(env.to_bytes()) for env in links[:-1])
    return ChainReport(len(links), [e.program_commitment for e in links], valid, first, embedded, final_size)


def rechain(links: list[ProofEnvelope]) -> ProofEnvelope:
    """Re-nest ``links`` (head first) so each embeds the one before it.

    Receipts are carried over untouched, so any reordering, omission or
    splice yields a chain that no longer verifies. Used to model chain
    manipulation by a party without the attestation secret.
    """
    if not links:
        raise InputError("no links")
    prev = None
    for env in links:
        pi = embed_prior(prev, env.claim)
        prev = ProofEnvelope(
            env.program_commitment,
            pi,
            env.public_output,
            None if prev is None else digest(prev.to_bytes()),
            env.receipt,
        )
    return prev
