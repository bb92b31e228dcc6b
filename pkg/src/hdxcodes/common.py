"""Shared sentinels, random streams, keyed hashing and the route record."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any, Hashable, Sequence

import numpy as np


class _Sentinel:
    __slots__ = ("label",)

    def __init__(self, label: str) -> None:
        self.label = label

    def __repr__(self) -> str:
        return self.label

    def __reduce__(self):
        return (_sentinel, (self.label,))


_SENTINELS: dict[str, _Sentinel] = {}


def _sentinel(label: str) -> _Sentinel:
    if label not in _SENTINELS:
        _SENTINELS[label] = _Sentinel(label)
    return _SENTINELS[label]


FAIL = _sentinel("FAIL")
DEGENERATE = _sentinel("DEGENERATE")


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based Philox generator for the stream ``(seed, *stream)``.

    Streams with distinct keys are independent, and the result does not
    depend on the order in which streams are created.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))


def _as_bytes(x: Any) -> bytes:
    if isinstance(x, bytes):
        return x
    if isinstance(x, str):
        return x.encode()
    return repr(x).encode()


def hash_unit(key: Any, *parts: Any) -> float:
    """Keyed hash of ``parts`` mapped to a float in [0, 1)."""
    h = hashlib.blake2b(digest_size=8, key=_as_bytes(key)[:64])
    for p in parts:
        b = _as_bytes(p)
        h.update(len(b).to_bytes(4, "little"))
        h.update(b)
    return int.from_bytes(h.digest(), "little") / 2.0**64


def hash_int(key: Any, modulus: int, *parts: Any) -> int:
    return int(hash_unit(key, *parts) * modulus) % modulus


class HashSubset:
    """Membership predicate ``hash(key, x) < measure`` with analytic measure."""

    def __init__(self, key: Any, measure: float) -> None:
        self.key = key
        self.measure = float(measure)

    def __call__(self, x: Hashable) -> bool:
        if self.measure >= 1.0:
            return True
        if self.measure <= 0.0:
            return False
        return hash_unit(self.key, x) < self.measure


class HashEdgeSet(HashSubset):
    """Undirected edge predicate: the endpoints are sorted before hashing."""

    def __call__(self, a: Hashable, b: Hashable = None) -> bool:  # type: ignore[override]
        if b is None:
            a, b = a
        x, y = sorted((repr(a), repr(b)))
        return super().__call__((x, y))


@dataclass
class RoutePath:
    """A path of hyperedge names in a decoding graph.

    ``witnesses[k]``, when present, is a group element lying in both
    ``vertices[k]`` and ``vertices[k + 1]``.
    """

    names: list[Hashable]
    provenance: str
    fail: bool = False
    degenerate: bool = False
    vertices: list[Any] = field(default_factory=list)
    witnesses: list[Any] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def length(self) -> int:
        return max(len(self.names) - 1, 0)

    def edges(self) -> list[tuple[Hashable, Hashable]]:
        return list(zip(self.names[:-1], self.names[1:]))


def bits_to_ints(bits: str, width: int) -> list[int]:
    if width == 0:
        return []
    if len(bits) % width:
        raise ValueError("bit string length is not a multiple of the symbol width")
    return [int(bits[i:i + width], 2) for i in range(0, len(bits), width)]


def ints_to_bits(vals: Sequence[int], width: int) -> str:
    return "".join(format(v, f"0{width}b") for v in vals)


_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)


def mix64(values: np.ndarray | int, key: int) -> np.ndarray:
    """Vectorized keyed splitmix64 finalizer over uint64 values."""
    # in-place array arithmetic wraps silently, so no errstate guard is needed
    x = np.array(values, dtype=np.uint64, ndmin=1)
    x ^= np.uint64(int(key) & 0xFFFFFFFFFFFFFFFF)
    x += _GOLD
    x ^= x >> np.uint64(30)
    x *= _M1
    x ^= x >> np.uint64(27)
    x *= _M2
    x ^= x >> np.uint64(31)
    return x if np.ndim(values) else x.reshape(())


def mix_unit(values: np.ndarray | int, key: int) -> np.ndarray:
    """``mix64`` mapped to floats in [0, 1)."""
    return (mix64(values, key) >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def stable_id(x: Any) -> int:
    """A 63-bit identifier of ``repr(x)``, stable across processes."""
    return int.from_bytes(hashlib.blake2b(_as_bytes(x), digest_size=8).digest(), "little") >> 1
