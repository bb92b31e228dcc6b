"""Direct product codes over hypergraph systems.

A *system* exposes vertices, hyperedges, the inclusion relation between
them, a decoding graph on hyperedges and a router for it.  Three adapters
are provided: the subspace system, the swap-link system on a KMS coset
complex, and the complete k-uniform hypergraph (used for inner-code toys).

Vertices are identified by integer ids.  For systems that can be enumerated
the id is a dense index; for the KMS complex it is a stable 63-bit hash of
the canonical representative.  A local function is an integer vector over
the hyperedge's neighbour slots.

Words are lazy: a block is computed when asked for.  Channel decisions are
keyed hashes of block ids, so a word is a fixed object even though nothing
is materialized.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Hashable, Iterable, Protocol, Sequence

import numpy as np

from . import gf_arith as ga
from .common import (DEGENERATE, RoutePath, child_seed, make_rng, mix64, mix_unit,
                     stable_id)
from .kms_complex import CanonicalCoset, KmsComplex, KmsRouter, as_color
from .subspace_system import S as S_LEVEL
from .subspace_system import V as V_LEVEL
from .subspace_system import SubspaceRep, SubspaceSystem

FILLER = 0
_EMPTY = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))


class HypergraphSystemAccess(Protocol):
    system_id: str
    params: dict
    vertex_name_length: int
    hyperedge_name_length: int
    num_vertices: int | None
    num_hyperedges: int | None

    def degree(self, s) -> int: ...
    def vertex_id(self, v) -> int: ...
    def hyperedge_id(self, s) -> int: ...
    def hyperedge_key(self, s) -> str: ...
    def hyperedge_from_key(self, key: str): ...
    def local_vertices(self, s) -> np.ndarray: ...
    def nbr_down(self, s, i: int): ...
    def nbr_up(self, v, i: int): ...
    def up_degree(self, v) -> int: ...
    def inv_index(self, s, v) -> int: ...
    def shared_indices(self, s, s2) -> tuple[np.ndarray, np.ndarray]: ...
    def is_adjacent(self, s, s2) -> bool: ...
    def route(self, s, s2, rng: np.random.Generator) -> RoutePath: ...
    def random_vertex(self, rng: np.random.Generator): ...
    def random_hyperedge(self, rng: np.random.Generator): ...
    def random_hyperedge_containing(self, v, rng: np.random.Generator): ...


# ----------------------------------------------------------------------
# subspace system


class SubspaceAccess:
    """Adapter for :class:`SubspaceSystem`.

    Neighbour slot ``i`` of a hyperedge is the index tuple of
    ``nbr_S_to_V`` read as a base-q number, first symbol most significant.
    """

    def __init__(self, sys: SubspaceSystem, route_retries: int = 64) -> None:
        self.sys = sys
        q, d = sys.q, sys.d
        self.q, self.d = q, d
        self.system_id = "subspace"
        self.params = {"q": q, "d": d}
        self.vertex_name_length = sys.name_len
        self.hyperedge_name_length = sys.name_len
        self.num_vertices = q ** (d * d - 1)
        self.num_hyperedges = q ** (d * d - 1)
        self.route_retries = route_retries
        self._deg = sys.degree
        L = 2 * (d - 1)
        self._digits = np.array(list(itertools.product(range(q), repeat=L)), dtype=np.int64).reshape(-1, L)
        self._place = q ** np.arange(d * d - 2, -1, -1, dtype=np.int64)
        F = sys.F
        self._mul = np.array(F.mul_table if F.mul_table is not None else
                             [F.mul(a, b) for a in range(q) for b in range(q)], dtype=np.int64).reshape(q, q)
        self._add = None if F.p == 2 else np.array(
            [F.add(a, b) for a in range(q) for b in range(q)], dtype=np.int64).reshape(q, q)
        self._shared = lru_cache(maxsize=4096)(self._shared_uncached)
        self._local = lru_cache(maxsize=8192)(self._local_uncached)
        self._hyperplanes = [ga.nullspace(F, [list(c)]) for c in itertools.product(range(q), repeat=d)
                             if next((x for x in c if x), 0) == 1]

    def _addv(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a ^ b if self._add is None else self._add[a, b]

    def degree(self, s) -> int:
        return self._deg

    def vertex_id(self, v: SubspaceRep) -> int:
        return int(np.dot(np.asarray(v.m, dtype=np.int64), self._place))

    hyperedge_id = vertex_id

    def _from_id(self, level: str, idx: int) -> SubspaceRep:
        vals = []
        for _ in range(self.d * self.d - 1):
            idx, r = divmod(idx, self.q)
            vals.append(r)
        return SubspaceRep(level, tuple(reversed(vals)))

    def vertex_at(self, idx: int) -> SubspaceRep:
        return self._from_id(V_LEVEL, idx)

    def hyperedge_at(self, idx: int) -> SubspaceRep:
        return self._from_id(S_LEVEL, idx)

    def hyperedge_key(self, s: SubspaceRep) -> str:
        return self.sys.to_hex(s)

    def hyperedge_from_key(self, key: str) -> SubspaceRep:
        return self.sys.from_hex(key)

    def slot_digits(self, i: int) -> list[int]:
        return [int(x) for x in self._digits[i]]

    def local_vertices(self, s: SubspaceRep) -> np.ndarray:
        return self._local(s)

    def _local_uncached(self, s: SubspaceRep) -> np.ndarray:
        d = self.d
        ms = np.asarray(s.m, dtype=np.int64).reshape(d + 1, d - 1)
        D = self._digits
        cols = []
        for r in range(d - 1):
            a, b = D[:, 2 * r], D[:, 2 * r + 1]
            cols.append(a)
            cols.append(b)
            for c in range(d - 1):
                x = self._addv(self._mul[a, ms[d - 1, c]], self._mul[b, ms[d, c]])
                cols.append(self._addv(np.full_like(a, ms[r, c]), x))
        m = np.stack(cols, axis=1)
        out = m @ self._place
        out.flags.writeable = False
        return out

    def nbr_down(self, s: SubspaceRep, i: int) -> SubspaceRep:
        return self.sys.nbr_S_to_V(s, self.slot_digits(i))

    def nbr_up(self, v: SubspaceRep, i: int):
        return self.sys.nbr_V_to_S(v, self.slot_digits(i))

    def up_degree(self, v) -> int:
        return self._deg

    def inv_index(self, s: SubspaceRep, v: SubspaceRep) -> int:
        if not self.sys.contains(s, v):
            raise ValueError("vertex is not contained in hyperedge")
        return self._slot_of(v)

    def _slot_of(self, v: SubspaceRep) -> int:
        d, q = self.d, self.q
        idx = 0
        for r in range(d - 1):
            for c in range(2):
                idx = idx * q + v.m[r * (d + 1) + c]
        return idx

    def shared_indices(self, s: SubspaceRep, s2: SubspaceRep) -> tuple[np.ndarray, np.ndarray]:
        """Slots (in s, in s2) of every valid vertex inside both hyperedges."""
        return self._shared(s, s2)

    def _shared_uncached(self, s: SubspaceRep, s2: SubspaceRep):
        sys, F = self.sys, self.sys.F
        inter = ga.rowspace_intersect(F, sys.matrix(s), sys.matrix(s2))
        k = len(inter)
        if k == self.d + 1:
            return self._all_slots()
        if k < self.d - 1:
            return _EMPTY
        cands = [inter] if k == self.d - 1 else [ga.mat_mul(F, h, inter) for h in self._hyperplanes]
        slots = []
        for rows in cands:
            v = sys.from_rowspace(V_LEVEL, rows)
            if v is not DEGENERATE:
                slots.append(self._slot_of(v))
        a = np.asarray(sorted(slots), dtype=np.int64)
        return a, a.copy()

    def _all_slots(self):
        a = np.arange(self._deg, dtype=np.int64)
        return a, a.copy()

    def is_adjacent(self, s, s2) -> bool:
        return self.sys.is_adjacent(s, s2)

    def _meets_valid(self, s: SubspaceRep, s2: SubspaceRep) -> bool:
        """Whether s and s2 share a valid vertex; stops at the first one found."""
        sys, F = self.sys, self.sys.F
        inter = ga.rowspace_intersect(F, sys.matrix(s), sys.matrix(s2))
        k = len(inter)
        if k == self.d + 1:
            return True
        if k < self.d - 1:
            return False
        if k == self.d - 1:
            return sys.from_rowspace(V_LEVEL, inter) is not DEGENERATE
        return any(sys.from_rowspace(V_LEVEL, ga.mat_mul(F, h, inter)) is not DEGENERATE
                   for h in self._hyperplanes)

    def _usable(self, path: RoutePath) -> bool:
        return not path.degenerate and all(
            self._meets_valid(a, b) for a, b in zip(path.names[:-1], path.names[1:]))

    def route(self, s, s2, rng: np.random.Generator) -> RoutePath:
        """A decoding-graph path through valid hyperedges whose consecutive members share
        a valid vertex.

        The basis-exchange route is resampled up to ``route_retries`` times.
        When every sample has a step without a shared valid vertex (for
        instance when s and s2 are adjacent but meet outside the valid
        vertices), the path detours through a hyperedge sharing a valid
        vertex with one endpoint, keeping the length at most d; a detour
        through an arbitrary middle hyperedge is the last resort.
        """
        for attempt in range(1, self.route_retries + 1):
            path = self.sys.route(s, s2, rng)
            if self._usable(path):
                path.meta["attempts"] = attempt
                return path
        tries = self.route_retries
        for attempt in range(1, 2 * tries + 1):
            near = attempt <= tries
            if near:
                # a neighbour of whichever endpoint this attempt starts from
                end = s if attempt % 2 else s2
                verts = self.local_vertices(end)
                slots = np.flatnonzero(verts >= 0)
                mid = self.random_hyperedge_containing(self.nbr_down(end, int(rng.choice(slots))), rng)
                if mid is DEGENERATE:
                    continue
            else:
                mid = self.random_hyperedge(rng)
            first, second = self.sys.route(s, mid, rng), self.sys.route(mid, s2, rng)
            if not (self._usable(first) and self._usable(second)):
                continue
            if near and first.length + second.length > self.d:
                continue
            names = first.names + second.names[1:]
            vertices = first.vertices + second.vertices[1:]
            return RoutePath(names, "randomized", vertices=vertices,
                             meta={"attempts": tries + attempt, "detour": True})
        return RoutePath([], "randomized", fail=True, meta={"attempts": 3 * self.route_retries})

    def random_vertex(self, rng: np.random.Generator) -> SubspaceRep:
        return self.sys.random_valid(V_LEVEL, rng)

    def random_hyperedge(self, rng: np.random.Generator) -> SubspaceRep:
        return self.sys.random_valid(S_LEVEL, rng)

    def random_hyperedge_containing(self, v: SubspaceRep, rng: np.random.Generator, budget: int = 256):
        """Uniform valid hyperedge containing v: a uniform superspace, rejected until valid."""
        sys, F = self.sys, self.sys.F
        base = sys.matrix(v)
        for _ in range(budget):
            rows = [list(r) for r in base]
            while len(rows) < self.d + 1:
                x = F.random(rng, sys.n)
                if ga.rank(F, rows + [x]) > len(rows):
                    rows.append(x)
            s = sys.from_rowspace(S_LEVEL, rows)
            if s is not DEGENERATE:
                return s
        return DEGENERATE


# ----------------------------------------------------------------------
# KMS swap links


class KmsAccess:
    """Hyperedges are faces of colors C1 or C2; vertices are faces of color Cv.

    A vertex lies in a hyperedge when the two form a face (a swap-walk
    edge), so a hyperedge's vertices are the Cv faces of its link.  The
    decoding graph is the swap graph between C1 and C2.
    """

    def __init__(self, kms: KmsComplex, vertex_color, C1, C2) -> None:
        self.kms = kms
        self.Cv, self.C1, self.C2 = as_color(vertex_color), as_color(C1), as_color(C2)
        if set(self.Cv) & (set(self.C1) | set(self.C2)) or set(self.C1) & set(self.C2):
            raise ValueError("colors must be pairwise disjoint")
        self.router = KmsRouter(kms, self.C1, self.C2)
        self.edge_color = self.router.edge_color
        self.system_id = "kms"
        self.params = {"q": kms.q, "d": kms.d, "kappa": kms.kappa, "vertex_color": list(self.Cv),
                       "C1": list(self.C1), "C2": list(self.C2)}
        self.vertex_name_length = kms.name_length(self.Cv)
        self.hyperedge_name_length = max(kms.name_length(self.C1), kms.name_length(self.C2))
        self.num_vertices = None
        self.num_hyperedges = None
        self._local = lru_cache(maxsize=4096)(self._local_uncached)
        self._shared = lru_cache(maxsize=4096)(self._shared_uncached)

    def _union(self, *cols) -> tuple[int, ...]:
        return tuple(sorted(set().union(*cols)))

    def degree(self, s: CanonicalCoset) -> int:
        return self.kms.up_degree(s.color, self._union(s.color, self.Cv))

    def vertex_id(self, v: CanonicalCoset) -> int:
        return stable_id((v.color, v.canonical))

    hyperedge_id = vertex_id

    def hyperedge_key(self, s: CanonicalCoset) -> str:
        return self.kms.name(s)

    def hyperedge_from_key(self, key: str) -> CanonicalCoset:
        return self.kms.from_name(key)

    def _link(self, x: CanonicalCoset) -> list[CanonicalCoset]:
        n = self.kms.up_degree(x.color, self._union(x.color, self.Cv))
        return [self.kms.swap_neighbor(x, self.Cv, i) for i in range(n)]

    def _local_uncached(self, s: CanonicalCoset):
        verts = self._link(s)
        ids = np.asarray([self.vertex_id(v) for v in verts], dtype=np.int64)
        ids.flags.writeable = False
        return ids, {int(x): i for i, x in enumerate(ids)}

    def local_vertices(self, s: CanonicalCoset) -> np.ndarray:
        return self._local(s)[0]

    def nbr_down(self, s: CanonicalCoset, i: int) -> CanonicalCoset:
        return self.kms.swap_neighbor(s, self.Cv, i)

    def up_degree(self, v: CanonicalCoset) -> int:
        k = self.kms
        return (k.up_degree(v.color, self._union(v.color, self.C1))
                + k.up_degree(v.color, self._union(v.color, self.C2)))

    def nbr_up(self, v: CanonicalCoset, i: int) -> CanonicalCoset:
        n1 = self.kms.up_degree(v.color, self._union(v.color, self.C1))
        if i < n1:
            return self.kms.swap_neighbor(v, self.C1, i)
        return self.kms.swap_neighbor(v, self.C2, i - n1)

    def inv_index(self, s: CanonicalCoset, v: CanonicalCoset) -> int:
        idx = self._local(s)[1].get(self.vertex_id(v))
        if idx is None:
            raise ValueError("vertex is not in the hyperedge's link")
        return idx

    def shared_indices(self, s, s2):
        return self._shared(s, s2)

    def _shared_uncached(self, s: CanonicalCoset, s2: CanonicalCoset):
        if s == s2:
            n = len(self.local_vertices(s))
            a = np.arange(n, dtype=np.int64)
            return a, a.copy()
        if {s.color, s2.color} != {self.C1, self.C2}:
            return _EMPTY
        w = self.kms.coset_intersection(s, s2)
        if w is None:
            return _EMPTY
        edge = CanonicalCoset(self.edge_color, self.kms.canonize(w, self.edge_color))
        ia, ib = [], []
        ma, mb = self._local(s)[1], self._local(s2)[1]
        for v in self._link(edge):
            vid = self.vertex_id(v)
            ia.append(ma[vid])
            ib.append(mb[vid])
        return np.asarray(ia, dtype=np.int64), np.asarray(ib, dtype=np.int64)

    def is_adjacent(self, s, s2) -> bool:
        return {s.color, s2.color} == {self.C1, self.C2} and self.kms.is_face(s, s2)

    def route(self, s, s2, rng: np.random.Generator) -> RoutePath:
        if s == s2:
            return RoutePath([s], "randomized", vertices=[s])
        return self.router.route_randomized(s, s2, rng)

    def random_vertex(self, rng: np.random.Generator) -> CanonicalCoset:
        return self.kms.coset(self.kms.random_sl(rng), self.Cv)

    def random_hyperedge(self, rng: np.random.Generator) -> CanonicalCoset:
        color = self.C1 if rng.integers(2) == 0 else self.C2
        return self.kms.coset(self.kms.random_sl(rng), color)

    def random_hyperedge_containing(self, v: CanonicalCoset, rng: np.random.Generator):
        return self.nbr_up(v, int(rng.integers(self.up_degree(v))))


# ----------------------------------------------------------------------
# complete k-uniform hypergraph


def _rank_subset(s: Sequence[int]) -> int:
    """Colex rank of a sorted subset."""
    return sum(math.comb(x, i + 1) for i, x in enumerate(s))


def _unrank_subset(r: int, k: int) -> tuple[int, ...]:
    out = []
    for i in range(k, 0, -1):
        x = i - 1
        while math.comb(x + 1, i) <= r:
            x += 1
        out.append(x)
        r -= math.comb(x, i)
    return tuple(reversed(out))


class CompleteAccess:
    """All k-subsets of [n]; two hyperedges are adjacent when they share k-1 points."""

    def __init__(self, n: int, k: int) -> None:
        if not 1 <= k <= n:
            raise ValueError("need 1 <= k <= n")
        self.n, self.k = n, k
        self.system_id = "complete"
        self.params = {"n": n, "k": k}
        self.vertex_name_length = max(1, (n - 1).bit_length())
        self.hyperedge_name_length = self.vertex_name_length * k
        self.num_vertices = n
        self.num_hyperedges = math.comb(n, k)

    def degree(self, s) -> int:
        return self.k

    def vertex_id(self, v: int) -> int:
        return int(v)

    def hyperedge_id(self, s: tuple[int, ...]) -> int:
        return _rank_subset(s)

    def hyperedge_at(self, idx: int) -> tuple[int, ...]:
        return _unrank_subset(idx, self.k)

    def vertex_at(self, idx: int) -> int:
        return int(idx)

    def hyperedge_key(self, s) -> str:
        return ",".join(map(str, s))

    def hyperedge_from_key(self, key: str) -> tuple[int, ...]:
        return tuple(sorted(int(x) for x in key.split(",")))

    def local_vertices(self, s) -> np.ndarray:
        return np.asarray(s, dtype=np.int64)

    def nbr_down(self, s, i: int) -> int:
        return s[i]

    def up_degree(self, v) -> int:
        return math.comb(self.n - 1, self.k - 1)

    def nbr_up(self, v: int, i: int) -> tuple[int, ...]:
        rest = _unrank_subset(i, self.k - 1)
        return tuple(sorted([v] + [x if x < v else x + 1 for x in rest]))

    def inv_index(self, s, v) -> int:
        return s.index(v)

    def shared_indices(self, s, s2):
        pos2 = {x: i for i, x in enumerate(s2)}
        ia = [i for i, x in enumerate(s) if x in pos2]
        return np.asarray(ia, dtype=np.int64), np.asarray([pos2[s[i]] for i in ia], dtype=np.int64)

    def is_adjacent(self, s, s2) -> bool:
        return len(set(s) & set(s2)) == self.k - 1

    def route(self, s, s2, rng: np.random.Generator) -> RoutePath:
        """Swap the points of s outside s2 for those of s2 outside s, one at a time."""
        out = [x for x in s if x not in s2]
        inn = [x for x in s2 if x not in s]
        out = [out[i] for i in rng.permutation(len(out))]
        inn = [inn[i] for i in rng.permutation(len(inn))]
        cur = set(s)
        names = [tuple(s)]
        for a, b in zip(out, inn):
            cur.remove(a)
            cur.add(b)
            names.append(tuple(sorted(cur)))
        return RoutePath(names, "randomized", vertices=list(names))

    def random_vertex(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.n))

    def random_hyperedge(self, rng: np.random.Generator) -> tuple[int, ...]:
        return tuple(sorted(int(x) for x in rng.choice(self.n, self.k, replace=False)))

    def random_hyperedge_containing(self, v: int, rng: np.random.Generator) -> tuple[int, ...]:
        return self.nbr_up(v, int(rng.integers(self.up_degree(v))))


# ----------------------------------------------------------------------
# messages and words


@dataclass(frozen=True)
class Message:
    """A function from vertex ids to ``range(alphabet)``.

    Either a dense table indexed by vertex id, or a keyed hash (for systems
    whose vertices cannot be enumerated).
    """

    alphabet: int
    table: np.ndarray | None = None
    key: int | None = None

    def __post_init__(self) -> None:
        if self.table is None and self.key is None:
            raise ValueError("a message needs a table or a key")
        if self.table is not None and self.table.size and int(self.table.max()) >= self.alphabet:
            raise ValueError("message symbol outside the alphabet")

    @classmethod
    def random(cls, sys: HypergraphSystemAccess, alphabet: int, rng: np.random.Generator) -> "Message":
        if sys.num_vertices is not None and sys.num_vertices <= 1 << 24:
            return cls(alphabet, table=rng.integers(alphabet, size=sys.num_vertices).astype(np.int64))
        return cls(alphabet, key=child_seed(rng))

    @classmethod
    def constant(cls, sys: HypergraphSystemAccess, alphabet: int, value: int) -> "Message":
        if sys.num_vertices is None:
            raise ValueError("constant messages need an enumerable vertex set")
        return cls(alphabet, table=np.full(sys.num_vertices, value, dtype=np.int64))

    def lookup(self, ids: np.ndarray) -> np.ndarray:
        """Symbols at vertex ids; the id -1 (a degenerate neighbour) reads as the filler."""
        ids = np.asarray(ids, dtype=np.int64)
        bad = ids < 0
        safe = np.where(bad, 0, ids)
        if self.table is not None:
            out = self.table[safe]
        else:
            out = (mix64(safe.astype(np.uint64), self.key) % np.uint64(self.alphabet)).astype(np.int64)
        return np.where(bad, FILLER, out)

    def __call__(self, vid: int) -> int:
        return int(self.lookup(np.asarray([vid]))[0])


def encode_block(sys: HypergraphSystemAccess, f: Message, s) -> np.ndarray:
    """The local function of Enc^f at hyperedge s."""
    return f.lookup(sys.local_vertices(s))


def dp_encode(sys: HypergraphSystemAccess, f: Message, s, i: int) -> int:
    """Symbol i of the encoding at s: f at the i-th vertex of s (filler if degenerate)."""
    if not 0 <= i < sys.degree(s):
        raise IndexError("neighbour index out of range")
    return int(encode_block(sys, f, s)[i])


def _noise(alphabet: int, size: int, seed: int, *parts: int) -> np.ndarray:
    return make_rng(seed, *parts).integers(alphabet, size=size).astype(np.int64)


class Codeword:
    """Lazy map from blocks to local functions.

    ``layer`` is ``"S"`` for hyperedge blocks and ``"T"`` for the GI layer,
    whose blocks are vertices r and are read through their restriction to a
    hyperedge s containing r: ``block(r, s)``.
    """

    layer = "S"

    def __init__(self, sys: HypergraphSystemAccess, alphabet: int) -> None:
        self.sys = sys
        self.alphabet = alphabet

    def block_id(self, name) -> int:
        if isinstance(name, (int, np.integer)):
            return int(name)
        return self.sys.hyperedge_id(name) if self.layer == "S" else self.sys.vertex_id(name)

    def block(self, name, sub=None) -> np.ndarray:
        raise NotImplementedError

    def _sub_ids(self, sub) -> tuple[int, ...]:
        return () if sub is None else (self.sys.hyperedge_id(sub),)

    def _local_s(self, name, sub):
        return name if self.layer == "S" else sub


class EncodedWord(Codeword):
    """Enc^f on the hyperedges, or on the GI layer when ``layer="T"``."""

    def __init__(self, sys: HypergraphSystemAccess, f: Message, layer: str = "S") -> None:
        super().__init__(sys, f.alphabet)
        self.f = f
        self.layer = layer

    def block(self, name, sub=None) -> np.ndarray:
        return encode_block(self.sys, self.f, self._local_s(name, sub))


class NoisyWord(Codeword):
    """Each block keeps its base content with probability eps, else uniform noise."""

    def __init__(self, base: Codeword, eps: float, seed: int) -> None:
        super().__init__(base.sys, base.alphabet)
        self.base, self.eps, self.seed = base, float(eps), int(seed)
        self.layer = base.layer

    def kept(self, name) -> bool:
        if self.eps >= 1.0:
            return True
        return bool(mix_unit(np.uint64(self.block_id(name)), self.seed) < self.eps)

    def kept_set(self, names: Iterable) -> set[int]:
        return {self.block_id(n) for n in names if self.kept(n)}

    def block(self, name, sub=None) -> np.ndarray:
        if self.kept(name):
            return self.base.block(name, sub)
        size = self.sys.degree(self._local_s(name, sub))
        return _noise(self.alphabet, size, self.seed, self.block_id(name), *self._sub_ids(sub))


class PlantedWord(Codeword):
    """The two-message channel: f_{b} on the set D, the all-ones function elsewhere."""

    def __init__(self, sys: HypergraphSystemAccess, f1: Message, f2: Message, in_d: np.ndarray,
                 choice: np.ndarray, layer: str) -> None:
        super().__init__(sys, max(f1.alphabet, f2.alphabet))
        self.messages = (f1, f2)
        self.in_d = in_d
        self.choice = choice
        self.layer = layer

    def block(self, name, sub=None) -> np.ndarray:
        b = self.block_id(name)
        s = self._local_s(name, sub)
        if not self.in_d[b]:
            return np.ones(self.sys.degree(s), dtype=np.int64)
        return encode_block(self.sys, self.messages[self.choice[b] - 1], s)


def corrupt_random(w: Codeword, eps: float, rng: np.random.Generator) -> NoisyWord:
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    return NoisyWord(w, eps, child_seed(rng))


def corrupt_two_messages(sys: HypergraphSystemAccess, f1: Message, f2: Message, eps: float,
                         rng: np.random.Generator, layer: str = "S") -> PlantedWord:
    """Draw D of measure exactly 4*eps (without replacement) and a uniform b in {1,2}^blocks."""
    if not 0.0 < eps <= 0.25:
        raise ValueError("eps must lie in (0, 1/4]")
    n = sys.num_hyperedges if layer == "S" else sys.num_vertices
    if n is None:
        raise ValueError("the two-message channel needs an enumerable block set")
    m = int(round(4 * eps * n))
    in_d = np.zeros(n, dtype=bool)
    in_d[rng.choice(n, size=m, replace=False)] = True
    choice = rng.integers(1, 3, size=n)
    return PlantedWord(sys, f1, f2, in_d, choice, layer)


# ----------------------------------------------------------------------
# lists


class ListWord:
    """Lazy map from hyperedges to lists of at most ``ell_in`` local functions."""

    def __init__(self, sys: HypergraphSystemAccess, ell_in: int) -> None:
        self.sys = sys
        self.ell_in = ell_in
        self._cache: dict[Hashable, list[np.ndarray]] = {}

    def entries(self, s) -> list[np.ndarray]:
        key = self.sys.hyperedge_id(s)
        got = self._cache.get(key)
        if got is None:
            got = self._entries(s)
            if len(got) > self.ell_in:
                raise ValueError("list exceeds the declared size")
            if len(self._cache) > 1 << 16:
                self._cache.clear()
            self._cache[key] = got
        return got

    def _entries(self, s) -> list[np.ndarray]:
        raise NotImplementedError


class GiLists(ListWord):
    """Lists on S read off a GI-layer word at shared-seed sampler neighbours.

    The same neighbour slots are used for every hyperedge, so the family of
    lists is a deterministic function of ``shared_seed``.
    """

    def __init__(self, sys: HypergraphSystemAccess, w: Codeword, ell: int, shared_seed: int) -> None:
        super().__init__(sys, ell)
        if w.layer != "T":
            raise ValueError("GI lists are read from a GI-layer word")
        self.w = w
        self.shared_seed = int(shared_seed)
        self.raw_slots = make_rng(self.shared_seed).integers(1 << 62, size=ell)

    def slots(self, s) -> np.ndarray:
        return self.raw_slots % self.sys.degree(s)

    def _entries(self, s) -> list[np.ndarray]:
        verts = self.sys.local_vertices(s)
        return [self.w.block(int(verts[j]), s) for j in self.slots(s)]


def gi_compose_lists(sys: HypergraphSystemAccess, w: Codeword, ell: int, shared_seed: int) -> GiLists:
    return GiLists(sys, w, ell, shared_seed)


class PlantedLists(ListWord):
    """Synthetic lists: f's local function at a keyed-random position, uniform decoys elsewhere."""

    def __init__(self, sys: HypergraphSystemAccess, f: Message, size: int, seed: int,
                 coverage: float = 1.0) -> None:
        super().__init__(sys, size)
        self.f, self.size, self.seed, self.coverage = f, size, int(seed), float(coverage)

    def true_position(self, s) -> int | None:
        sid = self.sys.hyperedge_id(s)
        if self.coverage < 1.0 and mix_unit(np.uint64(sid), self.seed ^ 0x5A5A) >= self.coverage:
            return None
        return int(mix64(np.uint64(sid), self.seed) % np.uint64(self.size))

    def _entries(self, s) -> list[np.ndarray]:
        sid = self.sys.hyperedge_id(s)
        pos = self.true_position(s)
        deg = self.sys.degree(s)
        out = []
        for k in range(self.size):
            if k == pos:
                out.append(encode_block(self.sys, self.f, s))
            else:
                out.append(_noise(self.f.alphabet, deg, self.seed, sid, k))
        return out


# ----------------------------------------------------------------------
# truncated repetition


@dataclass(frozen=True)
class RepetitionLayout:
    """Message of length k_small repeated and truncated to length k_big."""

    k_small: int
    k_big: int

    def __post_init__(self) -> None:
        if not 1 <= self.k_small <= self.k_big:
            raise ValueError("need 1 <= k_small <= k_big")

    def pad(self, f: Sequence) -> Any:
        if len(f) != self.k_small:
            raise ValueError("message length must equal k_small")
        reps = -(-self.k_big // self.k_small)
        if isinstance(f, str):
            return (f * reps)[: self.k_big]
        if isinstance(f, np.ndarray):
            return np.tile(f, reps)[: self.k_big]
        return (list(f) * reps)[: self.k_big]

    def multiplicity(self, v: int) -> int:
        return len(range(v, self.k_big, self.k_small))

    def decode_sample(self, v: int, rng: np.random.Generator) -> int:
        """A uniformly random slot of the padded message holding symbol v."""
        if not 0 <= v < self.k_small:
            raise IndexError("index out of range")
        return v + self.k_small * int(rng.integers(self.multiplicity(v)))


def rep_pad(k_small: int, k_big: int, f: Sequence) -> Any:
    return RepetitionLayout(k_small, k_big).pad(f)


def rep_decode_sample(k_small: int, k_big: int, v: int, rng: np.random.Generator) -> int:
    return RepetitionLayout(k_small, k_big).decode_sample(v, rng)


# ----------------------------------------------------------------------
# binary container

_MAGIC = b"DPCW"
_VERSION = 1


def write_codeword(path: str | Path, w: Codeword, blocks: Iterable, subs: Iterable | None = None) -> dict:
    """Write the given blocks of w; returns the manifest (also saved as ``<path>.json``).

    Layout: magic, version, header length, JSON header, then per block a
    UTF-8 key, a symbol count and the symbols (uint16 or uint32, little endian).
    """
    sys = w.sys
    wide = w.alphabet > 1 << 16
    dtype = "<u4" if wide else "<u2"
    header = {"system": sys.system_id, "params": sys.params, "alphabet": w.alphabet,
              "layer": w.layer, "symbol_bytes": 4 if wide else 2}
    hb = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    count = 0
    digest = hashlib.sha256()
    with open(path, "wb") as fh:
        def put(b: bytes) -> None:
            fh.write(b)
            digest.update(b)

        put(_MAGIC + struct.pack("<HI", _VERSION, len(hb)) + hb)
        subs_it = iter(subs) if subs is not None else None
        for name in blocks:
            sub = next(subs_it) if subs_it is not None else None
            key = sys.hyperedge_key(name) if w.layer == "S" else str(sys.vertex_id(name))
            if sub is not None:
                key += "|" + sys.hyperedge_key(sub)
            kb = key.encode()
            sym = w.block(name, sub).astype(dtype)
            put(struct.pack("<H", len(kb)) + kb + struct.pack("<I", len(sym)) + sym.tobytes())
            count += 1
    manifest = dict(header, blocks=count, bytes=path.stat().st_size, sha256=digest.hexdigest(),
                    file=path.name)
    Path(str(path) + ".json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_codeword(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ValueError("not a codeword container")
    version, hlen = struct.unpack_from("<HI", data, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported container version {version}")
    pos = 10
    header = json.loads(data[pos:pos + hlen])
    pos += hlen
    dtype = "<u4" if header["symbol_bytes"] == 4 else "<u2"
    width = header["symbol_bytes"]
    out: dict[str, np.ndarray] = {}
    while pos < len(data):
        (klen,) = struct.unpack_from("<H", data, pos)
        key = data[pos + 2:pos + 2 + klen].decode()
        pos += 2 + klen
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        out[key] = np.frombuffer(data, dtype=dtype, count=n, offset=pos).astype(np.int64)
        pos += n * width
    return header, out
