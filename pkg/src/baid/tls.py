"""TLS-lite transcripts and the four provenance checks run inside a guest.

The handshake is deliberately simplified: the server signs the two hello
randoms as key confirmation, and the pre-master secret is a shared witness
rather than the result of a key exchange. Each record additionally
carries a server signature, checked together with the AEAD tag, so a
party that knows the session key still cannot mint records the server
never sent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from . import crypto
from .crypto import canonical_encode, digest, hash_parts
from .errors import AeadAuth, CertChain, CommitmentMismatch, InputError, KeyConfirm, ServerIdentity

KEY_LABEL = b"key expansion"
PMS_SIZE = 48
RANDOM_SIZE = 32


@dataclass(frozen=True)
class Certificate:
    subject_name: str
    server_pubkey: bytes
    issuer_signature: bytes = b""

    def body(self) -> bytes:
        return canonical_encode([b"baid/tls/cert", self.subject_name, self.server_pubkey])

    def to_json(self) -> dict:
        return {
            "subject_name": self.subject_name,
            "server_pubkey": self.server_pubkey.hex(),
            "issuer_signature": self.issuer_signature.hex(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Certificate":
        return cls(obj["subject_name"], crypto.from_hex(obj["server_pubkey"]), crypto.from_hex(obj["issuer_signature"]))


def issue_certificate(ca_secret: bytes, subject_name: str, server_pubkey: bytes) -> Certificate:
    cert = Certificate(subject_name, server_pubkey)
    return replace(cert, issuer_signature=crypto.sign(ca_secret, cert.body()))


@dataclass(frozen=True)
class ServerKey:
    certificate: Certificate
    secret: bytes = field(repr=False)


def _confirm_message(client_random: bytes, server_random: bytes) -> bytes:
    return canonical_encode([b"baid/tls/key-confirm", client_random, server_random])


def _record_message(nonce: bytes, ciphertext: bytes, tag: bytes, aad: bytes) -> bytes:
    return canonical_encode([b"baid/tls/record", nonce, ciphertext, tag, aad])


@dataclass(frozen=True)
class TlsTranscript:
    certificate: Certificate
    client_random: bytes
    server_random: bytes
    pms: bytes = field(repr=False)
    key_confirmation: bytes
    nonce: bytes
    ciphertext: bytes
    tag: bytes
    aad: bytes
    record_signature: bytes

    _HEX = ("client_random", "server_random", "pms", "key_confirmation", "nonce", "ciphertext", "tag", "aad", "record_signature")

    def to_json(self) -> dict:
        out = {"certificate": self.certificate.to_json()}
        out.update({name: getattr(self, name).hex() for name in self._HEX})
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "TlsTranscript":
        fields = {name: crypto.from_hex(obj[name]) for name in cls._HEX}
        return cls(certificate=Certificate.from_json(obj["certificate"]), **fields)

    def to_bytes(self) -> bytes:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def from_bytes(cls, data: bytes) -> "TlsTranscript":
        return cls.from_json(json.loads(data))


@dataclass(frozen=True)
class ProvenanceClaim:
    server_name: str
    data_commitment: bytes


def session_key(pms: bytes, client_random: bytes, server_random: bytes) -> bytes:
    return crypto.prf_expand(pms, client_random + server_random, KEY_LABEL)


def make_session(server: ServerKey, request: bytes, response_plaintext: bytes, rng_seed) -> TlsTranscript:
    seed = canonical_encode([b"baid/tls/seed", str(rng_seed)])
    client_random = hash_parts(b"client_random", seed)
    server_random = hash_parts(b"server_random", seed, server.certificate.subject_name)
    pms = (hash_parts(b"pms/0", seed) + hash_parts(b"pms/1", seed))[:PMS_SIZE]
    nonce = hash_parts(b"nonce", seed)[: crypto.NONCE_SIZE]
    aad = digest(request)
    key = session_key(pms, client_random, server_random)
    ciphertext, tag = crypto.aead_seal(key, nonce, response_plaintext, aad)
    return TlsTranscript(
        certificate=server.certificate,
        client_random=client_random,
        server_random=server_random,
        pms=pms,
        key_confirmation=crypto.sign(server.secret, _confirm_message(client_random, server_random)),
        nonce=nonce,
        ciphertext=ciphertext,
        tag=tag,
        aad=aad,
        record_signature=crypto.sign(server.secret, _record_message(nonce, ciphertext, tag, aad)),
    )


def verify_provenance(t: TlsTranscript, claim: ProvenanceClaim, root_ca: bytes) -> bytes:
    """Run checks (a) to (d) in order; the raised error names the first failure."""
    cert = t.certificate
    # (a) certificate chain and server identity
    if not crypto.verify_sig(root_ca, cert.body(), cert.issuer_signature):
        raise CertChain("certificate not signed by the trusted root CA")
    if cert.subject_name != claim.server_name:
        raise ServerIdentity(f"certificate names {cert.subject_name!r}, claim names {claim.server_name!r}")
    # (b) session key derivation and key confirmation
    if len(t.client_random) != RANDOM_SIZE or len(t.server_random) != RANDOM_SIZE or len(t.pms) != PMS_SIZE:
        raise KeyConfirm("malformed handshake values")
    if not crypto.verify_sig(cert.server_pubkey, _confirm_message(t.client_random, t.server_random), t.key_confirmation):
        raise KeyConfirm("server key confirmation invalid")
    key = session_key(t.pms, t.client_random, t.server_random)
    # (c) record integrity
    try:
        plaintext = crypto.aead_open(key, t.nonce, t.ciphertext, t.tag, t.aad)
    except InputError as exc:
        raise AeadAuth(str(exc)) from exc
    if not crypto.verify_sig(cert.server_pubkey, _record_message(t.nonce, t.ciphertext, t.tag, t.aad), t.record_signature):
        raise AeadAuth("record not signed by the server")
    # (d) commitment binding
    if digest(plaintext) != claim.data_commitment:
        raise CommitmentMismatch("decrypted data does not match the committed digest")
    return plaintext


class MockServer:
    """Canned-response HTTPS stand-in (for example a scripted LLM endpoint)."""

    def __init__(self, key: ServerKey, responses: dict[bytes, bytes] | None = None):
        self.key = key
        self.responses = dict(responses or {})

    @property
    def name(self) -> str:
        return self.key.certificate.subject_name

    def respond(self, request: bytes, rng_seed, response: bytes | None = None) -> tuple[bytes, TlsTranscript]:
        if response is None:
            try:
                response = self.responses[request]
            except KeyError:
                raise InputError(f"{self.name}: no scripted response for request") from None
        return response, make_session(self.key, request, response, rng_seed)


def make_server(ca_secret: bytes, name: str, seed) -> MockServer:
    keys = crypto.keygen(canonical_encode([b"baid/tls/server", name, str(seed)]))
    return MockServer(ServerKey(issue_certificate(ca_secret, name, keys.public), keys.secret))


def load_server_registry(obj: dict, ca_secret: bytes) -> dict[str, MockServer]:
    """Mock-server registry file: ``{name: {"secret": hex, "responses": {req: resp}}}``."""
    out = {}
    for name, entry in obj.items():
        secret = crypto.from_hex(entry["secret"])
        cert = issue_certificate(ca_secret, name, crypto.public_from_secret(secret))
        responses = {k.encode(): v.encode() for k, v in entry.get("responses", {}).items()}
        out[name] = MockServer(ServerKey(cert, secret), responses)
    return out
