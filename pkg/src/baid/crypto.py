"""Deterministic primitives: framing, hashing, signatures, AEAD and a PRF.

Hash function is SHA-256 throughout. Signatures are Ed25519 (deterministic
by construction). AEAD is ChaCha20-Poly1305 with caller-supplied nonces, so
every output in this package is reproducible from its inputs.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    PublicFormat,
)

from .errors import AeadAuth, EncodingError, InputError

DIGEST_SIZE = 32
TAG_SIZE = 16
NONCE_SIZE = 12
KEY_SIZE = 32
SIGNATURE_SIZE = 64
_MAX_PART = 2**32 - 1


def canonical_encode(parts) -> bytes:
    """Length-prefix every part (4-byte big-endian) and concatenate."""
    out = bytearray()
    for part in parts:
        if isinstance(part, str):
            part = part.encode("utf-8")
        elif not isinstance(part, (bytes, bytearray, memoryview)):
            raise EncodingError(f"cannot encode part of type {type(part).__name__}")
        if len(part) > _MAX_PART:
            raise EncodingError("part exceeds 2**32-1 bytes")
        out += struct.pack(">I", len(part))
        out += part
    return bytes(out)


def canonical_decode(data: bytes) -> list[bytes]:
    """Inverse of :func:`canonical_encode`; raises on trailing or short data."""
    parts = []
    i, n = 0, len(data)
    while i < n:
        if n - i < 4:
            raise EncodingError("truncated length prefix")
        (size,) = struct.unpack_from(">I", data, i)
        i += 4
        if n - i < size:
            raise EncodingError("truncated part")
        parts.append(bytes(data[i : i + size]))
        i += size
    return parts


def encode_int(value: int) -> bytes:
    """Signed decimal text; unambiguous and independent of width."""
    return str(int(value)).encode("ascii")


def decode_int(data: bytes) -> int:
    try:
        return int(data.decode("ascii"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise EncodingError(f"not an integer: {data!r}") from exc


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def hash_parts(*parts) -> bytes:
    return digest(canonical_encode(parts))


def require_len(value: bytes, size: int, what: str) -> bytes:
    if not isinstance(value, (bytes, bytearray)) or len(value) != size:
        raise InputError(f"{what} must be {size} bytes")
    return bytes(value)


# -- signatures -------------------------------------------------------------


@dataclass(frozen=True)
class KeyPair:
    secret: bytes
    public: bytes


def public_from_secret(secret: bytes) -> bytes:
    key = Ed25519PrivateKey.from_private_bytes(require_len(secret, KEY_SIZE, "secret key"))
    return key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)


def keygen(seed: bytes | str | None = None) -> KeyPair:
    """Fresh key pair, or a deterministic one derived from ``seed``."""
    if seed is None:
        secret = os.urandom(KEY_SIZE)
    else:
        secret = hash_parts(b"baid/keygen", seed)
    return KeyPair(secret, public_from_secret(secret))


def sign(secret: bytes, message: bytes) -> bytes:
    key = Ed25519PrivateKey.from_private_bytes(require_len(secret, KEY_SIZE, "secret key"))
    return key.sign(message)


def verify_sig(public: bytes, message: bytes, signature: bytes) -> bool:
    """Never raises: malformed keys or signatures simply fail."""
    try:
        if len(public) != KEY_SIZE or len(signature) != SIGNATURE_SIZE:
            return False
        Ed25519PublicKey.from_public_bytes(bytes(public)).verify(bytes(signature), bytes(message))
    except (InvalidSignature, ValueError, TypeError):
        return False
    return True


# -- AEAD -------------------------------------------------------------------


def aead_seal(key: bytes, nonce: bytes, plaintext: bytes, aad: bytes) -> tuple[bytes, bytes]:
    require_len(key, KEY_SIZE, "AEAD key")
    require_len(nonce, NONCE_SIZE, "AEAD nonce")
    sealed = ChaCha20Poly1305(key).encrypt(nonce, plaintext, aad)
    return sealed[:-TAG_SIZE], sealed[-TAG_SIZE:]


def aead_open(key: bytes, nonce: bytes, ciphertext: bytes, tag: bytes, aad: bytes) -> bytes:
    require_len(key, KEY_SIZE, "AEAD key")
    if len(nonce) != NONCE_SIZE or len(tag) != TAG_SIZE:
        raise AeadAuth("malformed nonce or tag")
    try:
        return ChaCha20Poly1305(key).decrypt(bytes(nonce), bytes(ciphertext) + bytes(tag), aad)
    except InvalidTag as exc:
        raise AeadAuth("AEAD authentication tag mismatch") from exc


def prf_expand(secret: bytes, salt: bytes, label: bytes | str) -> bytes:
    return hash_parts(secret, salt, label)


def to_hex(data: bytes) -> str:
    return bytes(data).hex()


def from_hex(text: str) -> bytes:
    try:
        return bytes.fromhex(text)
    except (ValueError, TypeError) as exc:
        raise EncodingError(f"invalid hex: {text!r}") from exc
