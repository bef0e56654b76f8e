"""Fixed-depth (256) sparse binary Merkle trie with inclusion paths.

Keys are 32-byte strings read most-significant bit first from the root.
A zero value is indistinguishable from an absent key, which is what lets
an empty subtree collapse to a precomputed per-height constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType

from .crypto import DIGEST_SIZE, digest
from .errors import InputError

DEPTH = 256
ZERO = bytes(DIGEST_SIZE)
EMPTY_LEAF = digest(b"")


def leaf_hash(key: bytes, value: bytes) -> bytes:
    if value == ZERO:
        return EMPTY_LEAF
    return digest(b"\x00" + key + value)


def node_hash(left: bytes, right: bytes) -> bytes:
    return digest(b"\x01" + left + right)


def _empty_hashes() -> list[bytes]:
    out = [EMPTY_LEAF]
    for _ in range(DEPTH):
        out.append(node_hash(out[-1], out[-1]))
    return out


# EMPTY[h] is the root of an empty subtree of height h.
EMPTY = _empty_hashes()
EMPTY_ROOT = EMPTY[DEPTH]


def _bit(key: bytes, depth: int) -> int:
    return (key[depth >> 3] >> (7 - (depth & 7))) & 1


def _check(key: bytes, value: bytes | None = None) -> None:
    if not isinstance(key, (bytes, bytearray)) or len(key) != DIGEST_SIZE:
        raise InputError("trie key must be 32 bytes")
    if value is not None and (not isinstance(value, (bytes, bytearray)) or len(value) != DIGEST_SIZE):
        raise InputError("trie value must be 32 bytes")


def _subtree(items: list[tuple[bytes, bytes]], depth: int) -> bytes:
    # items: (key, leaf digest), all sharing the first ``depth`` bits
    if not items:
        return EMPTY[DEPTH - depth]
    if len(items) == 1:
        key, h = items[0]
        for d in range(DEPTH - 1, depth - 1, -1):
            if _bit(key, d):
                h = node_hash(EMPTY[DEPTH - 1 - d], h)
            else:
                h = node_hash(h, EMPTY[DEPTH - 1 - d])
        return h
    left = [it for it in items if not _bit(it[0], depth)]
    right = [it for it in items if _bit(it[0], depth)]
    return node_hash(_subtree(left, depth + 1), _subtree(right, depth + 1))


@dataclass(frozen=True)
class TriePath:
    key: bytes
    value: bytes
    siblings: tuple[bytes, ...]  # leaf -> root, DEPTH entries

    def compute_root(self) -> bytes:
        h = leaf_hash(self.key, self.value)
        for level, sib in enumerate(self.siblings):
            d = DEPTH - 1 - level
            h = node_hash(sib, h) if _bit(self.key, d) else node_hash(h, sib)
        return h

    def to_json(self) -> dict:
        return {
            "key": self.key.hex(),
            "value": self.value.hex(),
            "siblings": [s.hex() for s in self.siblings],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TriePath":
        return cls(
            bytes.fromhex(obj["key"]),
            bytes.fromhex(obj["value"]),
            tuple(bytes.fromhex(s) for s in obj["siblings"]),
        )


@dataclass(frozen=True)
class SparseTrie:
    leaves: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))

    def get(self, key: bytes) -> bytes:
        return self.leaves.get(bytes(key), ZERO)

    @cached_property
    def root(self) -> bytes:
        items = sorted((k, leaf_hash(k, v)) for k, v in self.leaves.items())
        return _subtree(items, 0)

    def __len__(self) -> int:
        return len(self.leaves)


def trie_update(t: SparseTrie, key: bytes, value: bytes) -> SparseTrie:
    _check(key, value)
    leaves = dict(t.leaves)
    if value == ZERO:
        leaves.pop(bytes(key), None)
    else:
        leaves[bytes(key)] = bytes(value)
    return SparseTrie(MappingProxyType(leaves))


def trie_root(t: SparseTrie) -> bytes:
    return t.root


def trie_prove(t: SparseTrie, key: bytes) -> TriePath:
    _check(key)
    key = bytes(key)
    items = sorted((k, leaf_hash(k, v)) for k, v in t.leaves.items())
    top_down = []
    for depth in range(DEPTH):
        b = _bit(key, depth)
        same = [it for it in items if _bit(it[0], depth) == b]
        other = [it for it in items if _bit(it[0], depth) != b]
        top_down.append(_subtree(other, depth + 1))
        items = same
    return TriePath(key, t.get(key), tuple(reversed(top_down)))


def trie_verify(root: bytes, path: TriePath) -> bool:
    """True iff ``path`` recomputes to ``root``; malformed paths return False."""
    try:
        if len(path.key) != DIGEST_SIZE or len(path.value) != DIGEST_SIZE:
            return False
        if len(path.siblings) != DEPTH or any(len(s) != DIGEST_SIZE for s in path.siblings):
            return False
        return path.compute_root() == root
    except (TypeError, AttributeError):
        return False
