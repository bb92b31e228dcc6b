"""The subspace hypergraph system over F_q^{2d}.

Vertices are (d-1)-dimensional subspaces, hyperedges are (d+1)-dimensional
subspaces, and a vertex belongs to a hyperedge when it is contained in it.
Only *valid* subspaces, whose RREF has the shape ``[I_k | M]``, carry
names; the name is ``M`` read row-major with ``log2 q`` bits per entry.
Both levels have ``d*d - 1`` entries in ``M``.

Two hyperedges are adjacent in the decoding graph when they meet in a
d-dimensional space.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import gf_arith as ga
from .common import DEGENERATE, FAIL, RoutePath, bits_to_ints, ints_to_bits

V, S = "V", "S"


class FormatError(ValueError):
    pass


class AdjacencyError(ValueError):
    pass


def _prime_power(q: int) -> tuple[int, int]:
    for p in range(2, q + 1):
        if q % p == 0:
            s, x = 0, q
            while x % p == 0:
                x //= p
                s += 1
            if x != 1:
                raise ValueError(f"{q} is not a prime power")
            return p, s
    raise ValueError(f"invalid field order {q}")


@dataclass(frozen=True)
class SubspaceRep:
    """A valid subspace: its level and the row-major entries of ``M``."""

    level: str
    m: tuple[int, ...]


class SubspaceSystem:
    def __init__(self, q: int, d: int) -> None:
        if d < 2:
            raise ValueError("d must be >= 2")
        p, s = _prime_power(q)
        self.q, self.d, self.n = q, d, 2 * d
        self.F = ga.galois_field(p, s)
        self.width = (q - 1).bit_length()
        self.name_len = (d * d - 1) * self.width
        self.idx_len = 2 * (d - 1) * self.width
        self.degree = q ** (2 * (d - 1))

    # ------------------------------------------------------------------
    # encodings

    def dim(self, level: str) -> int:
        return self.d - 1 if level == V else self.d + 1

    def mshape(self, level: str) -> tuple[int, int]:
        k = self.dim(level)
        return k, self.n - k

    def matrix(self, rep: SubspaceRep) -> ga.Matrix:
        k, c = self.mshape(rep.level)
        m = rep.m
        return [[1 if j == i else 0 for j in range(k)] + list(m[i * c:(i + 1) * c]) for i in range(k)]

    def name_to_subspace(self, level: str, name: str) -> SubspaceRep:
        if level not in (V, S):
            raise FormatError(f"unknown level {level!r}")
        if len(name) != self.name_len or set(name) - {"0", "1"}:
            raise FormatError(f"name must be {self.name_len} bits")
        vals = bits_to_ints(name, self.width)
        if any(v >= self.q for v in vals):
            raise FormatError("symbol out of field range")
        return SubspaceRep(level, tuple(vals))

    def subspace_to_name(self, rep: SubspaceRep) -> str:
        return ints_to_bits(rep.m, self.width)

    def to_hex(self, rep: SubspaceRep) -> str:
        digits = (self.width + 3) // 4
        return rep.level + ":" + "".join(format(x, f"0{digits}x") for x in rep.m)

    def from_hex(self, s: str) -> SubspaceRep:
        level, body = s.split(":", 1)
        digits = (self.width + 3) // 4
        vals = tuple(int(body[i:i + digits], 16) for i in range(0, len(body), digits))
        if len(vals) != self.d * self.d - 1:
            raise FormatError("wrong name length")
        return SubspaceRep(level, vals)

    def from_rowspace(self, level: str, rows: ga.Matrix) -> SubspaceRep | object:
        """Canonical rep of rowspace(rows), or DEGENERATE if not of the form [I | M]."""
        k = self.dim(level)
        red, r, piv = ga.rref(self.F, rows)
        if r != k:
            raise ValueError(f"rowspace has dimension {r}, expected {k}")
        if piv != list(range(k)):
            return DEGENERATE
        return SubspaceRep(level, tuple(x for row in red[:k] for x in row[k:]))

    def all_valid(self, level: str) -> Iterator[SubspaceRep]:
        k, c = self.mshape(level)
        for m in itertools.product(range(self.q), repeat=k * c):
            yield SubspaceRep(level, m)

    def random_valid(self, level: str, rng: np.random.Generator) -> SubspaceRep:
        k, c = self.mshape(level)
        return SubspaceRep(level, tuple(int(x) for x in rng.integers(self.q, size=k * c)))

    def _idx(self, idx: str | Sequence[int], count: int) -> list[int]:
        vals = bits_to_ints(idx, self.width) if isinstance(idx, str) else list(idx)
        if len(vals) != count or any(not 0 <= v < self.q for v in vals):
            raise FormatError(f"index must hold {count} field symbols")
        return vals

    # ------------------------------------------------------------------
    # neighbours in the inclusion graph

    def nbr_S_to_V(self, s: SubspaceRep, idx: str | Sequence[int]) -> SubspaceRep:
        """The vertex [I_{d-1} | M'] * A_s inside s.

        Its first d+1 coordinates are [I | M'], so it is always valid.
        """
        d = self.d
        mp = self._idx(idx, 2 * (d - 1))
        coef = [[1 if j == i else 0 for j in range(d - 1)] + mp[2 * i:2 * i + 2] for i in range(d - 1)]
        rows = ga.mat_mul(self.F, coef, self.matrix(s))
        return SubspaceRep(V, tuple(x for row in rows for x in row[d - 1:]))

    gi_sampler_nbr = nbr_S_to_V

    def _dual_basis(self, v: SubspaceRep) -> ga.Matrix:
        """Basis [-M^T | I_{d+1}] of the orthogonal complement of v = [I | M]."""
        F = self.F
        k, c = self.mshape(V)
        m = v.m
        return [[F.neg(m[j * c + i]) for j in range(k)] + [1 if jj == i else 0 for jj in range(c)]
                for i in range(c)]

    def nbr_V_to_S(self, v: SubspaceRep, idx: str | Sequence[int]) -> SubspaceRep | object:
        """Dual construction: s^perp = [M' | I_{d-1}] * (basis of v^perp)."""
        d = self.d
        mp = self._idx(idx, 2 * (d - 1))
        coef = [mp[2 * i:2 * i + 2] + [1 if j == i else 0 for j in range(d - 1)] for i in range(d - 1)]
        sperp = ga.mat_mul(self.F, coef, self._dual_basis(v))
        return self.from_rowspace(S, ga.orth_complement(self.F, sperp))

    def inv_index(self, a: SubspaceRep, b: SubspaceRep) -> str:
        """The index i with nbr(a, i) == b."""
        d = self.d
        if a.level == S and b.level == V:
            if not self.contains(a, b):
                raise AdjacencyError("vertex is not contained in hyperedge")
            c = self.mshape(V)[1]
            return ints_to_bits([b.m[i * c + j] for i in range(d - 1) for j in range(2)], self.width)
        if a.level == V and b.level == S:
            if not self.contains(b, a):
                raise AdjacencyError("vertex is not contained in hyperedge")
            sperp = ga.orth_complement(self.F, self.matrix(b))
            # coordinates in the dual basis are the last d+1 columns: [P | Q]
            coords = [row[d - 1:] for row in sperp]
            P = [row[:2] for row in coords]
            Q = [row[2:] for row in coords]
            _, qinv = ga.det_inv(self.F, Q)
            if qinv is None:
                raise AdjacencyError("not reachable by an index")  # pragma: no cover
            mp = ga.mat_mul(self.F, qinv, P)
            return ints_to_bits([x for row in mp for x in row], self.width)
        raise AdjacencyError("inclusion-graph neighbours must have different levels")

    def contains(self, big: SubspaceRep, small: SubspaceRep) -> bool:
        return ga.span_contains(self.F, self.matrix(big), self.matrix(small))

    # ------------------------------------------------------------------
    # decoding graph

    def intersection_dim(self, s: SubspaceRep, s2: SubspaceRep) -> int:
        return 2 * (self.d + 1) - ga.rank(self.F, self.matrix(s) + self.matrix(s2))

    def is_adjacent(self, s: SubspaceRep, s2: SubspaceRep) -> bool:
        return self.intersection_dim(s, s2) == self.d

    def edge_intersect(self, s: SubspaceRep, s2: SubspaceRep, idx: str | Sequence[int]):
        """The idx-th valid vertex inside s and s2, or FAIL."""
        d = self.d
        mp = self._idx(idx, d - 1)
        inter = ga.rowspace_intersect(self.F, self.matrix(s), self.matrix(s2))
        if len(inter) != d:
            return FAIL
        red, r, piv = ga.rref(self.F, inter)
        if piv != list(range(d)):
            return FAIL
        coef = [[1 if j == i else 0 for j in range(d - 1)] + [mp[i]] for i in range(d - 1)]
        rows = ga.mat_mul(self.F, coef, red)
        return SubspaceRep(V, tuple(x for row in rows for x in row[d - 1:]))

    def random_neighbor(self, s: SubspaceRep, rng: np.random.Generator, budget: int = 64):
        """Uniform valid decoding-graph neighbour of s (DEGENERATE if none found)."""
        F, d = self.F, self.d
        A = self.matrix(s)
        for _ in range(budget):
            while True:
                coef = [F.random(rng, d + 1) for _ in range(d)]
                if ga.rank(F, coef) == d:
                    break
            w = ga.mat_mul(F, coef, A)
            while True:
                x = F.random(rng, self.n)
                if ga.rank(F, A + [x]) == d + 2:
                    break
            out = self.from_rowspace(S, w + [x])
            if out is not DEGENERATE:
                return out
        return DEGENERATE

    def _random_in_span(self, basis: ga.Matrix, rng: np.random.Generator) -> list[int]:
        return ga.mat_mul(self.F, [self.F.random(rng, len(basis))], basis)[0]

    def _extend_within(self, base: ga.Matrix, space: ga.Matrix, rng: np.random.Generator,
                       budget: int = 64) -> ga.Matrix:
        """Random vectors of ``space`` extending ``base`` to a basis of it."""
        F = self.F
        cur = [list(r) for r in base]
        r = len(cur)
        new = []
        while r < len(space):
            for _ in range(budget):
                x = self._random_in_span(space, rng)
                if ga.rank(F, cur + [x]) > r:
                    break
            else:
                raise ga.SamplingError("basis extension retry budget exhausted")
            cur.append(x)
            new.append(x)
            r += 1
        return new

    def route(self, s: SubspaceRep, s2: SubspaceRep, rng: np.random.Generator) -> RoutePath:
        """Basis-exchange path from s to s2 through hyperedges.

        A random basis x of the intersection is extended by random y inside
        s and random z inside s2; step i replaces y_i by z_i.
        """
        F = self.F
        A, B = self.matrix(s), self.matrix(s2)
        inter = ga.rowspace_intersect(F, A, B)
        k = len(inter)
        if inter:
            while True:
                g = [F.random(rng, k) for _ in range(k)]
                if ga.rank(F, g) == k:
                    break
            x = ga.mat_mul(F, g, inter)
        else:
            x = []
        y = self._extend_within(x, A, rng)
        z = self._extend_within(x, B, rng)
        m = len(y)
        names: list[SubspaceRep] = [s]
        spaces = [A]
        degenerate = False
        for i in range(1, m):
            rows = x + z[:i] + y[i:]
            u = self.from_rowspace(S, rows)
            degenerate |= u is DEGENERATE
            names.append(u)  # type: ignore[arg-type]
            spaces.append(rows)
        if m:
            names.append(s2)
            spaces.append(B)
        return RoutePath(names, "randomized", degenerate=degenerate, vertices=spaces,
                         meta={"intersection_dim": k})

    route_subspace = route

    def path_is_valid(self, path: RoutePath) -> bool:
        """Consecutive spaces meet in dimension d (checked on the raw row spaces)."""
        F, d = self.F, self.d
        spaces = path.vertices or [self.matrix(n) for n in path.names]
        if any(ga.rank(F, sp) != d + 1 for sp in spaces):
            return False
        return all(2 * (d + 1) - ga.rank(F, a + b) == d for a, b in zip(spaces[:-1], spaces[1:]))

    # ------------------------------------------------------------------
    # explicit graphs for spectral checks

    def inclusion_biadjacency(self) -> tuple[list[SubspaceRep], list[SubspaceRep], np.ndarray]:
        """0/1 matrix between valid hyperedges (rows) and valid vertices (columns)."""
        Ss = list(self.all_valid(S))
        Vs = list(self.all_valid(V))
        vindex = {v: i for i, v in enumerate(Vs)}
        mat = np.zeros((len(Ss), len(Vs)), dtype=np.float64)
        idxs = list(itertools.product(range(self.q), repeat=2 * (self.d - 1)))
        for a, s in enumerate(Ss):
            for idx in idxs:
                mat[a, vindex[self.nbr_S_to_V(s, idx)]] = 1.0
        return Ss, Vs, mat

    def intersection_graph(self, s: SubspaceRep) -> np.ndarray:
        """Containment between the d-spaces inside s and the valid vertices inside s.

        Every hyperedge meeting s in the same d-space has the same
        neighbourhood, so one left vertex per d-space gives the same walk.
        """
        F, d = self.F, self.d
        A = self.matrix(s)
        verts = [self.nbr_S_to_V(s, idx) for idx in itertools.product(range(self.q), repeat=2 * (d - 1))]
        vmats = [self.matrix(v) for v in verts]
        # d-spaces of s are kernels of nonzero functionals on F_q^{d+1}, up to scaling
        hyper = []
        for c in itertools.product(range(self.q), repeat=d + 1):
            nz = next((x for x in c if x), 0)
            if nz != 1:
                continue
            coefs = ga.nullspace(F, [list(c)])
            hyper.append(ga.mat_mul(F, coefs, A))
        mat = np.zeros((len(hyper), len(verts)))
        for i, w in enumerate(hyper):
            rw = ga.rank(F, w)
            for j, vm in enumerate(vmats):
                if ga.rank(F, w + vm) == rw:
                    mat[i, j] = 1.0
        return mat
