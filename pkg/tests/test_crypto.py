import hashlib
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from baid import crypto
from baid.crypto import canonical_decode, canonical_encode, digest
from baid.errors import AeadAuth, EncodingError, InputError
from helpers import flip_bit, rng


def test_encode_empty_list():
    assert canonical_encode([]) == b""


def test_encode_single_part():
    assert canonical_encode(["A"]) == b"\x00\x00\x00\x01A"


def test_encode_split_ambiguity():
    a = canonical_encode(["ab", "c"])
    b = canonical_encode(["a", "bc"])
    assert a == b"\x00\x00\x00\x02ab\x00\x00\x00\x01c"
    assert b == b"\x00\x00\x00\x01a\x00\x00\x00\x02bc"
    assert a != b
    assert digest(a) != digest(b)


def test_encode_matches_struct_oracle():
    parts = [b"", b"\x00" * 300, "héllo".encode()]
    expected = b"".join(struct.pack(">I", len(p)) + p for p in parts)
    assert canonical_encode(parts) == expected


def test_encode_rejects_non_bytes():
    with pytest.raises(EncodingError):
        canonical_encode([1])


def test_encode_oversized_part():
    class Huge(bytes):
        def __len__(self):
            return 2**32

    with pytest.raises(EncodingError):
        canonical_encode([Huge(b"x")])


def test_decode_rejects_truncation():
    with pytest.raises(EncodingError):
        canonical_decode(b"\x00\x00\x00\x05ab")
    with pytest.raises(EncodingError):
        canonical_decode(b"\x00\x00")


def test_injectivity_1000_random_lists():
    r = rng(1)
    seen = {}
    while len(seen) < 1000:
        parts = tuple(bytes(r.randrange(3) for _ in range(r.randrange(4))) for _ in range(r.randrange(5)))
        seen[parts] = canonical_encode(list(parts))
    assert len(set(seen.values())) == len(seen)


@settings(max_examples=200)
@given(st.lists(st.binary(max_size=40), max_size=6))
def test_encode_decode_roundtrip(parts):
    assert canonical_decode(canonical_encode(parts)) == parts


def test_digest_empty_vector():
    # published SHA-256 test vector for the empty string
    assert digest(b"").hex() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def test_digest_abc_vector():
    assert digest(b"abc").hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_digest_deterministic():
    assert digest(b"x") == digest(b"x")
    assert len(digest(b"x")) == 32


def test_sign_roundtrip():
    kp = crypto.keygen("alice")
    assert crypto.verify_sig(kp.public, b"hello", crypto.sign(kp.secret, b"hello"))


def test_public_derivable_from_secret():
    kp = crypto.keygen("alice")
    assert crypto.public_from_secret(kp.secret) == kp.public
    assert crypto.keygen("alice") == kp
    assert crypto.keygen() != crypto.keygen()


def test_flipped_first_signature_bit():
    kp = crypto.keygen("alice")
    sig = crypto.sign(kp.secret, b"hello")
    assert not crypto.verify_sig(kp.public, b"hello", flip_bit(sig, 0))


def test_verify_under_other_key():
    a, b = crypto.keygen("a"), crypto.keygen("b")
    assert not crypto.verify_sig(b.public, b"hello", crypto.sign(a.secret, b"hello"))


def test_verify_malformed_inputs_returns_false():
    kp = crypto.keygen("a")
    sig = crypto.sign(kp.secret, b"m")
    assert crypto.verify_sig(b"short", b"m", sig) is False
    assert crypto.verify_sig(kp.public, b"m", sig[:10]) is False
    assert crypto.verify_sig(b"\xff" * 32, b"m", sig) is False


def test_signature_mutation_suite():
    kp = crypto.keygen("mut")
    msg = b"the quick brown fox"
    sig = crypto.sign(kp.secret, msg)
    r = rng(2)
    for _ in range(256):
        if r.random() < 0.5:
            assert not crypto.verify_sig(kp.public, flip_bit(msg, r.randrange(len(msg) * 8)), sig)
        else:
            assert not crypto.verify_sig(kp.public, msg, flip_bit(sig, r.randrange(512)))


KEY = bytes(range(32))
NONCE = bytes(12)


def test_aead_empty_roundtrip():
    ct, tag = crypto.aead_seal(KEY, NONCE, b"", b"aad")
    assert ct == b""
    assert crypto.aead_open(KEY, NONCE, ct, tag, b"aad") == b""


def test_aead_deterministic():
    assert crypto.aead_seal(KEY, NONCE, b"data", b"") == crypto.aead_seal(KEY, NONCE, b"data", b"")


def test_aead_ciphertext_flip():
    ct, tag = crypto.aead_seal(KEY, NONCE, b"payload", b"aad")
    with pytest.raises(AeadAuth):
        crypto.aead_open(KEY, NONCE, flip_bit(ct, 3), tag, b"aad")


def test_aead_mutation_suite():
    ct, tag = crypto.aead_seal(KEY, NONCE, b"some response body", b"request-digest")
    r = rng(3)
    for _ in range(256):
        which = r.randrange(3)
        args = [ct, tag, b"request-digest"]
        args[which] = flip_bit(args[which], r.randrange(len(args[which]) * 8))
        with pytest.raises(AeadAuth):
            crypto.aead_open(KEY, NONCE, *args)


def test_aead_key_and_nonce_sizes():
    with pytest.raises(InputError):
        crypto.aead_seal(KEY[:16], NONCE, b"", b"")
    with pytest.raises(InputError):
        crypto.aead_seal(KEY, NONCE[:8], b"", b"")


def test_prf_expand():
    a = crypto.prf_expand(b"pms", b"cr" + b"sr", b"key expansion")
    assert a == crypto.prf_expand(b"pms", b"cr" + b"sr", b"key expansion")
    assert a != crypto.prf_expand(b"pms", b"cr" + b"sX", b"key expansion")
    assert len(a) == 32
    oracle = hashlib.sha256(
        struct.pack(">I", 3) + b"pms" + struct.pack(">I", 4) + b"crsr" + struct.pack(">I", 13) + b"key expansion"
    ).digest()
    assert a == oracle


def test_hex_roundtrip():
    assert crypto.from_hex(crypto.to_hex(b"\x00\xab")) == b"\x00\xab"
    assert crypto.to_hex(b"\xab") == "ab"
    with pytest.raises(EncodingError):
        crypto.from_hex("zz")
