"""Coset complexes of SL_d(R) for R = F_q[t]/phi.

Vertices of color i are left cosets ``A K_i``; a set of vertices is a face
when the cosets share an element, and a face of color set J is a coset of
``K_J``, the intersection of the ``K_i`` for i in J.

Conventions
-----------
* Colors and matrix positions are 1-based in the public API, as in the
  usual statement of the construction; internals are 0-based.
* Group elements are flat row-major tuples of ``d*d`` ring elements.
* ``t`` is the ring element packed as the int ``q``; ``F_q`` sits inside R
  as the ints below ``q``.  Only characteristic 2 is supported here, so
  ring addition is XOR.

``K_i`` (i < d) consists of matrices with unit diagonal, F_q entries at
the positions of ``upper(i)`` and ``t * F_q`` entries at the positions of
``lower(i)``; ``K_d`` is the upper unitriangular group over F_q.  These
shapes are exact parametrizations of the subgroups.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

from . import gf_arith as ga
from .common import DEGENERATE, FAIL, RoutePath

Elem = tuple[int, ...]
Color = tuple[int, ...]
Symbol = tuple[int, int, int]  # (i, j, value): the elementary matrix e_{i,j}(value), 1-based


class ColorError(ValueError):
    pass


class SizeError(ValueError):
    pass


class IndexOutOfRange(IndexError):
    pass


class AdjacencyError(ValueError):
    pass


ENUM_CAP = 1 << 20


def as_color(J: Iterable[int] | int) -> Color:
    if isinstance(J, int):
        return (J,)
    c = tuple(sorted(set(int(j) for j in J)))
    if not c:
        raise ColorError("color set must be nonempty")
    return c


def index_sets(d: int, J: Iterable[int] | int) -> tuple[set[tuple[int, int]], set[tuple[int, int]]]:
    """Positions (1-based) holding F_q entries and t*F_q entries in K_J."""
    J = as_color(J)
    if any(not 1 <= j <= d for j in J):
        raise ColorError(f"colors must lie in 1..{d}")
    upper = None
    lower = None
    for i in J:
        i0 = 0 if i == d else i
        u = {(a, b) for a in range(1, d + 1) for b in range(a + 1, d + 1)
             if (a >= i0 + 1) or (b <= i0)}
        lo = {(a, b) for a in range(1, d + 1) for b in range(1, d + 1) if b < i0 + 1 <= a}
        upper = u if upper is None else upper & u
        lower = lo if lower is None else lower & lo
    return upper, lower


@dataclass(frozen=True)
class CanonicalCoset:
    """A face: its color set and the canonical representative of its coset."""

    color: Color
    canonical: Elem

    def __repr__(self) -> str:
        return f"CanonicalCoset({self.color}, {hash(self.canonical) & 0xffffffff:08x})"


@dataclass
class _ColorInfo:
    color: Color
    upper: list[tuple[int, int]]       # 0-based
    lower: list[tuple[int, int]]       # 0-based
    positions: list[tuple[int, int, int]]  # (row, col, tdeg) sorted row-major
    order: list[int]                   # column processing order
    tilde: set[int]                    # columns written in the shifted basis
    sources: dict[int, list[int]]      # column -> source columns in processing order
    allowed: dict[tuple[int, int], int]  # off-diagonal position -> tdeg

    @property
    def size_log(self) -> int:
        return len(self.positions)


class KmsComplex:
    """The coset complex for SL_d(F_q[t]/phi).

    Parameters
    ----------
    q : int
        Order of the coefficient field, a power of two.
    d : int
        Matrix size, at least 3.
    kappa : int
        Degree of phi, at least 2.
    phi : sequence of int, optional
        Monic irreducible over F_q, low-to-high; defaults to the smallest one.
    """

    def __init__(self, q: int, d: int, kappa: int, phi: Sequence[int] | None = None) -> None:
        if q & (q - 1) or q < 2:
            raise ValueError("q must be a power of two")
        if d < 3:
            raise ValueError("d must be >= 3")
        self.q, self.d, self.kappa = q, d, kappa
        self.F = ga.galois_field(2, q.bit_length() - 1)
        self.R = ga.make_ring(self.F, kappa, phi)
        self.phi = tuple(self.R.modulus)
        self.t = q
        self.t_inv = self.R.inv(q)
        self.n = self.R.order
        self._mt = self.R.mul_table
        self._fmt = self.F.mul_table
        self._finv = self.F.inv_table
        self._coords: tuple[list[tuple[int, ...]], list[tuple[int, ...]]] | None = None
        self._info: dict[Color, _ColorInfo] = {}
        self._enum: dict[Color, list[Elem]] = {}

    # ------------------------------------------------------------------
    # ring helpers

    def rmul(self, a: int, b: int) -> int:
        if self._mt is not None:
            return self._mt[a * self.n + b]
        return self.R.mul(a, b)

    def is_fq(self, r: int) -> bool:
        return r < self.q

    def is_tfq(self, r: int) -> bool:
        return r % self.q == 0 and r < self.q * self.q

    def _coord_tables(self):
        """Per ring element: coefficients in (1..t^{k-1}) and in (t..t^k), top degree first."""
        if self._coords is None:
            R, k = self.R, self.kappa
            e = [tuple(reversed(R.coeffs(r))) for r in range(self.n)]
            tl = [e[R.mul(r, self.t_inv)] for r in range(self.n)]
            self._coords = (e, tl)
            self._from_e = {v: r for r, v in enumerate(e)}
            self._from_tl = {v: R.mul(r, self.t) for v, r in self._from_e.items()}
        return self._coords

    # ------------------------------------------------------------------
    # group elements

    def identity(self) -> Elem:
        d = self.d
        return tuple(1 if i == j else 0 for i in range(d) for j in range(d))

    def rows(self, A: Elem) -> list[list[int]]:
        d = self.d
        return [list(A[i * d:(i + 1) * d]) for i in range(d)]

    def from_rows(self, rows: Sequence[Sequence[int]], check: bool = True) -> Elem:
        A = tuple(int(x) for r in rows for x in r)
        if len(A) != self.d * self.d:
            raise ValueError("wrong matrix size")
        if check and self.det(A) != 1:
            raise ga.DomainError("matrix is not in SL_d(R)")
        return A

    def det(self, A: Elem) -> int:
        return ga.det(self.R, self.rows(A))

    def mul(self, A: Elem, B: Elem) -> Elem:
        d, n, mt = self.d, self.n, self._mt
        out = [0] * (d * d)
        for i in range(d):
            row = A[i * d:(i + 1) * d]
            for k in range(d):
                a = row[k]
                if a == 0:
                    continue
                if a == 1:
                    for j in range(d):
                        out[i * d + j] ^= B[k * d + j]
                elif mt is not None:
                    base = a * n
                    for j in range(d):
                        b = B[k * d + j]
                        if b:
                            out[i * d + j] ^= mt[base + b]
                else:
                    for j in range(d):
                        b = B[k * d + j]
                        if b:
                            out[i * d + j] ^= self.R.mul(a, b)
        return tuple(out)

    def inv(self, A: Elem) -> Elem:
        return tuple(x for r in ga.mat_inv(self.R, self.rows(A)) for x in r)

    def elementary(self, i: int, j: int, r: int) -> Elem:
        d = self.d
        out = list(self.identity())
        out[(i - 1) * d + (j - 1)] = r
        return tuple(out)

    def random_sl(self, rng: np.random.Generator) -> Elem:
        """Uniform element of SL_d(R): uniform invertible matrix, first row scaled by det^-1."""
        d, R = self.d, self.R
        while True:
            rows = [[int(x) for x in rng.integers(self.n, size=d)] for _ in range(d)]
            det = ga.det(R, rows)
            if det:
                s = R.inv(det)
                rows[0] = [R.mul(s, x) for x in rows[0]]
                return tuple(x for r in rows for x in r)

    def apply_symbol(self, A: list[int], sym: Symbol) -> None:
        """In place right multiplication by e_{i,j}(r): column j += r * column i."""
        i, j, r = sym
        if r == 0:
            return
        d, n, mt = self.d, self.n, self._mt
        i -= 1
        j -= 1
        if mt is not None:
            base = r * n
            for row in range(0, d * d, d):
                x = A[row + i]
                if x:
                    A[row + j] ^= mt[base + x]
        else:
            for row in range(0, d * d, d):
                x = A[row + i]
                if x:
                    A[row + j] ^= self.R.mul(r, x)

    def word_product(self, word: Iterable[Symbol], start: Elem | None = None) -> Elem:
        A = list(start if start is not None else self.identity())
        for sym in word:
            self.apply_symbol(A, sym)
        return tuple(A)

    # ------------------------------------------------------------------
    # subgroups

    def info(self, J: Iterable[int] | int) -> _ColorInfo:
        J = as_color(J)
        got = self._info.get(J)
        if got is not None:
            return got
        d = self.d
        up, lo = index_sets(d, J)
        upper = sorted((a - 1, b - 1) for a, b in up)
        lower = sorted((a - 1, b - 1) for a, b in lo)
        allowed = {p: 0 for p in upper}
        allowed.update({p: 1 for p in lower})
        positions = sorted((a, b, deg) for (a, b), deg in allowed.items())
        i0 = max(J) % d  # columns 1..i0 use the shifted basis
        order = list(range(i0, d)) + list(range(0, i0))
        rank = {c: k for k, c in enumerate(order)}
        sources = {c: sorted((a for (a, b) in allowed if b == c), key=rank.__getitem__) for c in range(d)}
        for c in range(d):
            if any(rank[s] >= rank[c] for s in sources[c]):  # pragma: no cover
                raise AssertionError("column operations do not follow the processing order")
        info = _ColorInfo(J, upper, lower, positions, order, set(range(i0)), sources, allowed)
        self._info[J] = info
        return info

    def in_subgroup(self, A: Elem, J: Iterable[int] | int) -> bool:
        info = self.info(J)
        d = self.d
        for a in range(d):
            for b in range(d):
                x = A[a * d + b]
                if a == b:
                    if x != 1:
                        return False
                    continue
                deg = info.allowed.get((a, b))
                if deg is None:
                    if x:
                        return False
                elif deg == 0:
                    if x >= self.q:
                        return False
                elif not self.is_tfq(x):
                    return False
        return True

    def subgroup_order(self, J) -> int:
        return self.q ** len(self.info(J).positions)

    def subgroup_element(self, J, params: Sequence[int]) -> Elem:
        info = self.info(J)
        A = list(self.identity())
        d = self.d
        for (a, b, deg), p in zip(info.positions, params):
            A[a * d + b] = p * self.q if deg else p
        return tuple(A)

    def subgroup_enumerate(self, J) -> list[Elem]:
        J = as_color(J)
        if J in self._enum:
            return self._enum[J]
        size = self.subgroup_order(J)
        if size > ENUM_CAP:
            raise SizeError(f"|K_J| = {size} exceeds the enumeration cap")
        npos = len(self.info(J).positions)
        out = [self.subgroup_element(J, p) for p in itertools.product(range(self.q), repeat=npos)]
        self._enum[J] = out
        return out

    def random_subgroup_params(self, J, rng: np.random.Generator) -> list[int]:
        return [int(x) for x in rng.integers(self.q, size=len(self.info(J).positions))]

    def times_subgroup(self, A: Elem, J, params: Sequence[int]) -> Elem:
        """A * h for the subgroup element h with the given parameters."""
        info = self.info(J)
        d, n, mt, q = self.d, self.n, self._mt, self.q
        out = list(A)
        for (a, b, deg), p in zip(info.positions, params):
            if not p:
                continue
            r = p * q if deg else p
            for row in range(0, d * d, d):
                x = A[row + a]
                if x:
                    out[row + b] ^= mt[r * n + x] if mt is not None else self.R.mul(r, x)
        return tuple(out)

    # ------------------------------------------------------------------
    # canonical forms

    def _column_vectors(self, A: Elem, info: _ColorInfo):
        """Reduce columns in processing order; returns (vectors, pivots, reduced matrix)."""
        e, tl = self._coord_tables()
        d, k = self.d, self.kappa
        fmt, finv, q = self._fmt, self._finv, self.q
        vecs: dict[int, list[int]] = {}
        pivots: dict[int, tuple[int, int]] = {}
        for c in info.order:
            table = tl if c in info.tilde else e
            v: list[int] = []
            for r in range(d):
                v.extend(table[A[r * d + c]])
            for j in info.sources[c]:
                p, b = pivots[j]
                x = v[p]
                if x:
                    alpha = fmt[x * q + finv[b]] if fmt is not None else self.F.mul(x, finv[b])
                    vj = vecs[j]
                    for idx in range(p, len(v)):
                        y = vj[idx]
                        if y:
                            v[idx] ^= fmt[alpha * q + y] if fmt is not None else self.F.mul(alpha, y)
            piv = next((idx for idx, x in enumerate(v) if x), None)
            if piv is None:
                raise ga.DomainError("matrix is singular")
            vecs[c] = v
            pivots[c] = (piv, v[piv])
        return vecs, pivots

    def _matrix_from_vectors(self, vecs: dict[int, list[int]], info: _ColorInfo) -> Elem:
        self._coord_tables()
        d, k = self.d, self.kappa
        out = [0] * (d * d)
        for c, v in vecs.items():
            table = self._from_tl if c in info.tilde else self._from_e
            for r in range(d):
                out[r * d + c] = table[tuple(v[r * k:(r + 1) * k])]
        return tuple(out)

    def canonize(self, A: Elem, J, check: bool = False) -> Elem:
        """The unique canonical matrix of the coset A K_J.

        Columns are processed in the order i0+1..d, 1..i0 with i0 = max(J)
        (mod d).  Each column is written in coordinates over F_q: the basis
        1..t^{k-1} for the first group, t..t^k (with t^k read as t^k - phi)
        for the columns 1..i0, where adding t times an earlier column acts
        exactly like adding an F_q multiple of its coordinate vector.  The
        pivot of a column is its first nonzero row at its top coefficient;
        every allowed source column's pivot coefficient is eliminated.
        """
        if check and self.det(A) != 1:
            raise ga.DomainError("matrix is not in SL_d(R)")
        info = self.info(J)
        vecs, _ = self._column_vectors(A, info)
        return self._matrix_from_vectors(vecs, info)

    def coset(self, A: Elem, J) -> CanonicalCoset:
        J = as_color(J)
        return CanonicalCoset(J, self.canonize(A, J))

    def is_canonical(self, A: Elem, J) -> bool:
        return self.canonize(A, J) == A

    def contains(self, x: CanonicalCoset, g: Elem) -> bool:
        """g lies in the coset x."""
        return self.in_subgroup(self.mul(self.inv(x.canonical), g), x.color)

    # ------------------------------------------------------------------
    # names

    def name_length(self, J) -> int:
        """Number of F_q symbols in a coset name."""
        d, k = self.d, self.kappa
        return k * d * d - len(self.info(J).positions) - k

    def _last_column_system(self, cols: dict[int, list[int]], pivots, info: _ColorInfo):
        """Linear system on the last column's coordinates: det = 1 and pivot zeros.

        Returns (pivot positions, free positions, reduced augmented rows) or None.
        """
        d, k, R, F = self.d, self.kappa, self.R, self.F
        c = info.order[-1]
        rows = [[0] * d for _ in range(d)]
        for cc, col in cols.items():
            for r in range(d):
                rows[r][cc] = col[r]
        cof = []
        for r in range(d):
            for rr in range(d):
                rows[rr][c] = 1 if rr == r else 0
            cof.append(ga.det(R, rows))
        basis_shift = 1 if c in info.tilde else 0
        e = self._coord_tables()[0]
        size = d * k
        eqs = [[0] * (size + 1) for _ in range(k)]
        for r in range(d):
            for m in range(k):
                pos = r * k + (k - 1 - m)
                val = R.mul(cof[r], R.pow(self.t, m + basis_shift))
                coords = e[val][::-1]  # low-to-high
                for nn in range(k):
                    eqs[nn][pos] = coords[nn]
        eqs[0][size] = 1
        for j in info.sources[c]:
            row = [0] * (size + 1)
            row[pivots[j][0]] = 1
            eqs.append(row)
        red, rank, piv = ga.rref(F, eqs)
        if size in piv or rank < len(eqs):
            return None
        free = [p for p in range(size) if p not in piv]
        return piv, free, red

    def encode(self, x: CanonicalCoset) -> list[int]:
        """Name symbols (over F_q) of a canonical coset; raises on DEGENERATE."""
        info = self.info(x.color)
        vecs, pivots = self._column_vectors(x.canonical, info)
        if self._matrix_from_vectors(vecs, info) != x.canonical:
            raise ValueError("encode requires the canonical representative")
        d = self.d
        out: list[int] = []
        for c in info.order[:-1]:
            skip = {pivots[j][0] for j in info.sources[c]}
            out.extend(x for p, x in enumerate(vecs[c]) if p not in skip)
        cols = {c: [x.canonical[r * d + c] for r in range(d)] for c in info.order[:-1]}
        system = self._last_column_system(cols, pivots, info)
        if system is None:
            raise ValueError("coset lies outside the named range")
        _, free, _ = system
        last = vecs[info.order[-1]]
        out.extend(last[p] for p in free)
        return out

    def decode(self, J, symbols: Sequence[int]) -> CanonicalCoset | object:
        """Inverse of ``encode``; DEGENERATE when the name leaves the coset space."""
        J = as_color(J)
        info = self.info(J)
        d, k = self.d, self.kappa
        if len(symbols) != self.name_length(J):
            raise ValueError(f"name must have {self.name_length(J)} symbols")
        self._coord_tables()
        it = iter(symbols)
        vecs: dict[int, list[int]] = {}
        pivots: dict[int, tuple[int, int]] = {}
        cols: dict[int, list[int]] = {}
        for c in info.order[:-1]:
            skip = {pivots[j][0] for j in info.sources[c]}
            v = [0 if p in skip else next(it) for p in range(d * k)]
            piv = next((p for p, y in enumerate(v) if y), None)
            if piv is None:
                return DEGENERATE
            vecs[c] = v
            pivots[c] = (piv, v[piv])
            table = self._from_tl if c in info.tilde else self._from_e
            cols[c] = [table[tuple(v[r * k:(r + 1) * k])] for r in range(d)]
        system = self._last_column_system(cols, pivots, info)
        if system is None:
            return DEGENERATE
        piv, free, red = system
        v = [0] * (d * k)
        for p in free:
            v[p] = next(it)
        for row_i, pc in enumerate(piv):
            row = red[row_i]
            acc = row[-1]
            for p in free:
                if row[p] and v[p]:
                    acc ^= self.F.mul(row[p], v[p])
            v[pc] = acc
        vecs[info.order[-1]] = v
        return CanonicalCoset(J, self._matrix_from_vectors(vecs, info))

    def name(self, x: CanonicalCoset) -> str:
        digits = (self.q.bit_length() - 1 + 3) // 4 or 1
        body = "".join(format(s, f"0{digits}x") for s in self.encode(x))
        return ",".join(str(c) for c in x.color) + ":" + body

    def from_name(self, name: str) -> CanonicalCoset | object:
        head, body = name.split(":", 1)
        J = tuple(int(c) for c in head.split(","))
        digits = (self.q.bit_length() - 1 + 3) // 4 or 1
        syms = [int(body[i:i + digits], 16) for i in range(0, len(body), digits)]
        return self.decode(J, syms)

    # ------------------------------------------------------------------
    # lexicographic representatives

    def _lex_key(self, A: Elem) -> tuple:
        e = self._coord_tables()[0]
        # e holds top-degree-first coefficients; compare low-to-high
        return tuple(e[x][::-1] for x in A)

    def lex_min(self, A: Elem, J) -> Elem:
        """Smallest element of A K_J, entries compared row-major, coefficients low-to-high."""
        best = None
        best_key = None
        for h in self.subgroup_enumerate(J):
            B = self.mul(A, h)
            key = self._lex_key(B)
            if best_key is None or key < best_key:
                best, best_key = B, key
        return best

    # ------------------------------------------------------------------
    # neighbours

    def nbr_down(self, x: CanonicalCoset, C2) -> CanonicalCoset:
        """The face of color C2 contained in x (a coset of the larger group K_C2)."""
        C2 = as_color(C2)
        if not set(C2) <= set(x.color):
            raise ColorError("C2 must be a subset of the face's color")
        if C2 == x.color:
            return x
        return CanonicalCoset(C2, self.canonize(x.canonical, C2))

    @lru_cache(maxsize=None)
    def cross_coset_reps(self, J1: Color, J2: Color) -> tuple[Elem, ...]:
        """Lex-smallest representatives of the K_J2 cosets inside K_J1, sorted."""
        classes: dict[Elem, Elem] = {}
        keys: dict[Elem, tuple] = {}
        for h in self.subgroup_enumerate(J1):
            c = self.canonize(h, J2)
            k = self._lex_key(h)
            if c not in classes or k < keys[c]:
                classes[c], keys[c] = h, k
        return tuple(sorted(classes.values(), key=self._lex_key))

    def up_degree(self, x_color, C2) -> int:
        return self.subgroup_order(x_color) // self.subgroup_order(as_color(C2) if not isinstance(C2, int) else C2)

    def nbr_up(self, x: CanonicalCoset, C2, idx: int) -> CanonicalCoset:
        """The idx-th face of color C2 containing x."""
        C2 = as_color(C2)
        if not set(x.color) <= set(C2):
            raise ColorError("the face's color must be a subset of C2")
        reps = self.cross_coset_reps(x.color, C2)
        if not 0 <= idx < len(reps):
            raise IndexOutOfRange(f"idx must be below {len(reps)}")
        base = self.lex_min(x.canonical, x.color)
        return CanonicalCoset(C2, self.canonize(self.mul(base, reps[idx]), C2))

    def swap_neighbor(self, x: CanonicalCoset, C2, idx: int) -> CanonicalCoset:
        """The idx-th C2 face forming a face with x (for disjoint colors)."""
        C2 = as_color(C2)
        up = self.nbr_up(x, tuple(sorted(set(x.color) | set(C2))), idx)
        return self.nbr_down(up, C2)

    def link_sample(self, x: CanonicalCoset, C2, rng: np.random.Generator,
                    with_witness: bool = False):
        """Uniform C2 face in the link of x: x.canonical * h * K_C2 with h uniform in K_x."""
        C2 = as_color(C2)
        if set(C2) & set(x.color):
            raise ColorError("link colors must be disjoint from the face's color")
        g = self.times_subgroup(x.canonical, x.color, self.random_subgroup_params(x.color, rng))
        y = CanonicalCoset(C2, self.canonize(g, C2))
        return (y, g) if with_witness else y

    # ------------------------------------------------------------------
    # linear solving for coset membership

    def solve_right_factor(self, M: Elem, family: Sequence[tuple[int, int, int]], J) -> list[int] | None:
        """Parameters p with M * (I + sum p_i t^deg_i E_{a_i b_i}) in K_J, or None.

        ``family`` lists 0-based (a, b, deg) positions; the product is affine
        in p and K_J is an affine F_q-subspace, so this is a linear system.
        """
        info = self.info(J)
        d, k, R, F = self.d, self.kappa, self.R, self.F
        e = self._coord_tables()[0]

        def low_high(r: int) -> tuple[int, ...]:
            return e[r][::-1]

        nv = len(family)
        eqs: list[list[int]] = []
        for r in range(d):
            for c in range(d):
                base = low_high(M[r * d + c])
                contrib = []
                for i, (a, b, deg) in enumerate(family):
                    if b == c and M[r * d + a]:
                        contrib.append((i, low_high(R.mul(M[r * d + a], self.t if deg else 1))))
                if r == c:
                    target = {0: 1}
                    free_coords = set()
                else:
                    deg = info.allowed.get((r, c))
                    target = {}
                    free_coords = set() if deg is None else {deg}
                for nn in range(k):
                    if nn in free_coords:
                        continue
                    row = [0] * (nv + 1)
                    for i, co in contrib:
                        row[i] = co[nn]
                    row[nv] = base[nn] ^ target.get(nn, 0)
                    if any(row):
                        eqs.append(row)
        if not eqs:
            return [0] * nv
        red, rank, piv = ga.rref(F, eqs)
        if nv in piv:
            return None
        sol = [0] * nv
        for i, pc in enumerate(piv):
            sol[pc] = red[i][nv]
        return sol

    def coset_intersection(self, x: CanonicalCoset, y: CanonicalCoset) -> Elem | None:
        """An element of both cosets, or None when they are disjoint."""
        M = self.mul(self.inv(x.canonical), y.canonical)
        fam = self.info(y.color).positions
        sol = self.solve_right_factor(M, fam, x.color)
        if sol is None:
            return None
        return self.times_subgroup(y.canonical, y.color, sol)

    def is_face(self, x: CanonicalCoset, y: CanonicalCoset) -> bool:
        return self.coset_intersection(x, y) is not None

    # ------------------------------------------------------------------
    # fast neighbours at d = 3

    def d3_positions(self, k: int, j: int) -> list[tuple[int, int, int]]:
        """Positions of K_j outside K_{k,j}, row-major: the (beta, gamma) slots."""
        if self.d != 3:
            raise ValueError("only defined for d = 3")
        if k == j:
            raise ColorError("colors must differ")
        inner = {(a, b) for a, b, _ in self.info(as_color((k, j))).positions}
        out = [p for p in self.info(j).positions if (p[0], p[1]) not in inner]
        if len(out) != 2:  # pragma: no cover
            raise AssertionError("expected two free positions")
        return out

    def d3_rep(self, k: int, j: int, beta: int, gamma: int) -> Elem:
        A = list(self.identity())
        for (a, b, deg), val in zip(self.d3_positions(k, j), (beta, gamma)):
            A[a * 3 + b] = val * self.q if deg else val
        return tuple(A)

    def d3_fast_nbr(self, x: CanonicalCoset, k: int, bg: tuple[int, int]) -> CanonicalCoset:
        """The K_k vertex of the face canonical(x) * A_{kj in j}(beta, gamma) K_{k,j}."""
        (j,) = x.color
        B = self.mul(self.canonize(x.canonical, j), self.d3_rep(k, j, *bg))
        return CanonicalCoset((k,), self.canonize(B, k))

    def d3_fast_index(self, x: CanonicalCoset, y: CanonicalCoset) -> tuple[int, int]:
        """(beta, gamma) with d3_fast_nbr(x, k, (beta, gamma)) == y."""
        (j,), (k,) = x.color, y.color
        M = self.mul(self.inv(y.canonical), x.canonical)
        sol = self.solve_right_factor(M, self.d3_positions(k, j), k)
        if sol is None:
            raise AdjacencyError("cosets do not form a face")
        return sol[0], sol[1]

    # ------------------------------------------------------------------
    # batched kernels (rows of an integer array are group elements)

    def _np_tables(self):
        if getattr(self, "_np", None) is None:
            e, tl = self._coord_tables()
            mt = self._mt
            if mt is None:
                raise SizeError("batched kernels need a ring small enough for a product table")
            self._np = {
                "mt": np.asarray(mt, dtype=np.int64).reshape(self.n, self.n),
                "fmt": np.asarray(self.F.mul_table, dtype=np.int64).reshape(self.q, self.q),
                "finv": np.asarray([0] + [self.F.inv(x) for x in range(1, self.q)], dtype=np.int64),
                "e": np.asarray(e, dtype=np.int64),
                "tl": np.asarray(tl, dtype=np.int64),
                "place": self.q ** np.arange(self.kappa - 1, -1, -1, dtype=np.int64),
            }
        return self._np

    def times_subgroup_batch(self, As: np.ndarray, J, params: np.ndarray) -> np.ndarray:
        """Row k of the result is As[k] times the K_J element with parameters params[k]."""
        tb = self._np_tables()
        mt, d, q = tb["mt"], self.d, self.q
        out = As.copy()
        for p, (a, b, deg) in enumerate(self.info(J).positions):
            r = params[:, p] * q if deg else params[:, p]
            out[:, b::d] ^= mt[r[:, None], As[:, a::d]]
        return out

    def canonize_batch(self, As: np.ndarray, J) -> np.ndarray:
        """Row-wise ``canonize`` of an (N, d*d) array."""
        tb = self._np_tables()
        info = self.info(J)
        d, k = self.d, self.kappa
        fmt, finv = tb["fmt"], tb["finv"]
        N = As.shape[0]
        ar = np.arange(N)
        vecs: dict[int, np.ndarray] = {}
        piv: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for c in info.order:
            table = tb["tl"] if c in info.tilde else tb["e"]
            V = table[As[:, c::d]].reshape(N, d * k)
            for j in info.sources[c]:
                p, b = piv[j]
                alpha = fmt[V[ar, p], finv[b]]
                V ^= fmt[alpha[:, None], vecs[j]]
            nz = V != 0
            if not nz.any(axis=1).all():
                raise ga.DomainError("matrix is singular")
            p = nz.argmax(axis=1)
            vecs[c] = V
            piv[c] = (p, V[ar, p])
        out = np.empty_like(As)
        for c, V in vecs.items():
            packed = V.reshape(N, d, k) @ tb["place"]
            out[:, c::d] = tb["mt"][self.q, packed] if c in info.tilde else packed
        return out

    # ------------------------------------------------------------------
    # size estimates

    def log2_num_faces(self, J) -> float:
        z = self.q.bit_length() - 1
        return z * (self.kappa * (self.d * self.d - 1) - len(self.info(J).positions))


# ----------------------------------------------------------------------
# words of generators


def commutator(w1: list[Symbol], w2: list[Symbol]) -> list[Symbol]:
    """[g, h] = g h g^-1 h^-1 as a word (characteristic 2: e(r)^-1 = e(r))."""
    return w1 + w2 + word_inverse(w1) + word_inverse(w2)


def word_inverse(w: list[Symbol]) -> list[Symbol]:
    # -r = r in characteristic 2
    return list(reversed(w))


def merge_word(w: Iterable[Symbol]) -> list[Symbol]:
    """Combine neighbouring symbols at the same position and drop zeros."""
    out: list[Symbol] = []
    for s in w:
        if s[2] == 0:
            continue
        if out and out[-1][:2] == s[:2]:
            v = out[-1][2] ^ s[2]
            out.pop()
            if v:
                out.append((s[0], s[1], v))
        else:
            out.append(s)
    return out


class WordDecomposer:
    """Writes elementary matrices as words in the generators of K_C1 and K_C2.

    A generator is e_{a,b}(c) at an F_q position of either subgroup, or
    e_{a,b}(c t) at a t*F_q position.  Longer elementary matrices are built
    from commutators [e_{a,l}(x), e_{l,b}(y)] = e_{a,b}(xy); the shortest
    such expansion for each (a, b) and t-degree 0 or 1 is found by a
    shortest-path iteration.  Higher t-degrees split the polynomial in two
    halves, so the word length grows like kappa^log2(5).
    """

    def __init__(self, kms: KmsComplex, C1, C2) -> None:
        self.kms = kms
        self.C1, self.C2 = as_color(C1), as_color(C2)
        if set(self.C1) & set(self.C2):
            raise ColorError("router colors must be disjoint")
        d = kms.d
        self.direct: dict[tuple[int, int], int] = {}
        for C in (self.C1, self.C2):
            info = kms.info(C)
            for (a, b), deg in info.allowed.items():
                self.direct[(a + 1, b + 1)] = deg
        inf = math.inf
        cost = {(a, b, deg): (1 if self.direct.get((a, b)) == deg else inf)
                for a in range(1, d + 1) for b in range(1, d + 1) if a != b for deg in (0, 1, 2)}
        choice: dict[tuple[int, int, int], tuple[int, int, int]] = {}
        changed = True
        while changed:
            changed = False
            for (a, b, deg) in cost:
                for l in range(1, d + 1):
                    if l in (a, b):
                        continue
                    for d1 in range(deg + 1):
                        d2 = deg - d1
                        c = 2 * (cost[(a, l, d1)] + cost[(l, b, d2)])
                        if c < cost[(a, b, deg)]:
                            cost[(a, b, deg)] = c
                            choice[(a, b, deg)] = (l, d1, d2)
                            changed = True
        self.cost = cost
        self.choice = choice
        self._cache: dict[tuple[int, int, int, int], list[Symbol]] = {}
        self._plans: dict[tuple[int, frozenset], tuple[int, tuple]] = {}
        self._allowed: dict = {}
        self._member: dict[tuple[Symbol, Color], bool] = {}
        self._heads: dict[tuple[int, int, int], int] = {}

    def in_group(self, sym: Symbol, C) -> bool:
        key = (sym, C)
        got = self._member.get(key)
        if got is not None:
            return got
        a, b, r = sym
        allowed = self._allowed.get(C)
        if allowed is None:
            allowed = self._allowed[C] = self.kms.info(C).allowed
        deg = allowed.get((a - 1, b - 1))
        if deg is None:
            got = False
        else:
            got = self.kms.is_fq(r) if deg == 0 else self.kms.is_tfq(r)
        self._member[key] = got
        return got

    def _head_moves(self, c: int, l: int, a: int) -> int:
        got = self._heads.get((c, l, a))
        if got is None:
            got = self._heads[(c, l, a)] = self.moves(self.base_word(c, l, a, 1))
        return got

    def base_word(self, a: int, b: int, deg: int, c: int) -> list[Symbol]:
        """Word for e_{a,b}(c t^deg), c in F_q, deg in {0, 1, 2}."""
        if c == 0:
            return []
        key = (a, b, deg, c)
        got = self._cache.get(key)
        if got is not None:
            return got
        if math.isinf(self.cost[(a, b, deg)]):
            raise ValueError(f"e_{{{a},{b}}} with t-degree {deg} is not reachable")
        q = self.kms.q
        if self.direct.get((a, b)) == deg:
            w = [(a, b, c * q if deg else c)]
        else:
            l, d1, d2 = self.choice[(a, b, deg)]
            w = commutator(self.base_word(a, l, d1, c), self.base_word(l, b, d2, 1))
        self._cache[key] = w
        return w

    def _t_times(self, a: int, b: int, coeffs: list[int]) -> list[Symbol]:
        """Word for e_{a,b}(t * sum coeffs[m] t^m)."""
        while coeffs and coeffs[-1] == 0:
            coeffs = coeffs[:-1]
        if not coeffs:
            return []
        D = len(coeffs) - 1
        if D == 0:
            return self.base_word(a, b, 1, coeffs[0])
        h = (D + 1) // 2
        low, high = coeffs[:h], coeffs[h:]
        d = self.kms.d
        # choose the pivot index with the cheapest degree-one commutator
        l = min((x for x in range(1, d + 1) if x not in (a, b)),
                key=lambda x: (self.cost[(a, x, 1)] + self.cost[(x, b, 1)], x))
        # e_{ab}(t * t^h * high) = [e_{al}(t * high), e_{lb}(t * t^(h-1))]
        mono = [0] * (h - 1) + [1]
        w = commutator(self._t_times(a, l, high), self._t_times(l, b, mono))
        return w + self._t_times(a, b, low)

    def decompose(self, i: int, j: int, r: int) -> list[Symbol]:
        """A generator word whose product is e_{i,j}(r).

        r is written as t * (t^-1 r) and the t-multiple is split in halves
        by degree, so the length grows like kappa^log2(5).
        """
        if i == j:
            raise ValueError("i and j must differ")
        if r == 0:
            return []
        kms = self.kms
        # t is invertible because phi(0) != 0
        return self._t_times(i, j, kms.R.coeffs(kms.R.mul(r, kms.t_inv)))

    def estimate_moves(self, batches: Iterable[tuple[int, dict[int, int]]]) -> int:
        """Planned move count of a sequence of row batches (before merging across batches)."""
        total = 0
        for c, entries in batches:
            terms: dict[tuple[int, int], int] = {}
            for j, r in entries.items():
                if r:
                    t, extra = self._split_entry(c, j, r)
                    terms.update(t)
                    total += self.moves(extra)
            total += self._plan(c, frozenset(terms))[0]
        return total


    def height(self, a: int, b: int, deg: int) -> int:
        """Affine height of the root at (a, b) with t-degree deg; generators have height >= 1."""
        return (b - a) + deg * self.kms.d

    def moves(self, word: Iterable[Symbol]) -> int:
        """Number of single-subgroup runs of a word (symbols in both groups join either)."""
        runs, group = 0, None
        for sym in word:
            if group is None or not self.in_group(sym, group):
                group = self.C1 if self.in_group(sym, self.C1) else self.C2
                runs += 1
        return runs

    def _split_entry(self, c: int, j: int, r: int) -> tuple[dict[tuple[int, int], int], list[Symbol]]:
        """Monomial terms of t-degree at most 2 for a batch, plus a word for the rest."""
        kms = self.kms
        if math.isinf(self.cost[(c, j, 0)]):
            # no constant words here: r = t * (t^-1 r)
            coeffs = [0] + kms.R.coeffs(kms.R.mul(r, kms.t_inv))
        else:
            coeffs = kms.R.coeffs(r)
        terms = {(j, deg): coeffs[deg] for deg in (0, 1, 2) if deg < len(coeffs) and coeffs[deg]}
        rest = coeffs[3:]
        extra = self._t_times(c, j, [0, 0] + rest) if any(rest) else []
        return terms, extra

    def _plan(self, c: int, shape: frozenset) -> tuple[int, tuple]:
        """(moves, groups) for a batch in row c whose terms sit at ``shape``.

        Terms outside the generators are covered greedily by commutators
        [e_{c,l}(t^a), batch in row l]; each option is scored by the real
        move count of its template per covered term.  Both commutator parts
        have positive height and heights add, so the recursion terminates.
        """
        key = (c, shape)
        got = self._plans.get(key)
        if got is not None:
            return got
        rest = {x for x in shape if self.direct.get((c, x[0])) != x[1]}
        groups = []
        d = self.kms.d
        while rest:
            best = None
            for l in range(1, d + 1):
                if l == c:
                    continue
                for a in (0, 1, 2):
                    if math.isinf(self.cost[(c, l, a)]) or self.height(c, l, a) < 1:
                        continue
                    covered = frozenset((j, deg) for (j, deg) in rest if j != l and deg >= a
                                        and self.height(l, j, deg - a) >= 1)
                    if not covered:
                        continue
                    sub = frozenset((j, deg - a) for j, deg in covered)
                    sub_moves = self._plan(l, sub)[0]
                    head = self._head_moves(c, l, a)
                    score = (2 * (head + sub_moves) / len(covered), -len(covered), l, a)
                    if best is None or score < best[0]:
                        best = (score, l, a, covered)
            if best is None:  # pragma: no cover
                raise ValueError("batch is not reachable from the generators")
            _, l, a, covered = best
            groups.append((l, a, covered))
            rest -= covered
        template = self._batch(c, {x: 1 for x in shape}, tuple(groups))
        plan = (self.moves(template), tuple(groups))
        self._plans[key] = plan
        return plan

    def _batch(self, c: int, terms: dict[tuple[int, int], int], groups: tuple | None = None) -> list[Symbol]:
        """Word for the product of e_{c,j}(v t^deg) over terms {(j, deg): v}; these commute.

        Uses [e_{c,l}(t^a), prod_j e_{l,j}(v t^(deg-a))] = prod_j e_{c,j}(v t^deg).
        """
        if groups is None:
            groups = self._plan(c, frozenset(terms))[1]
        q = self.kms.q
        word = [(c, j, v * q if deg else v) for (j, deg), v in terms.items() if self.direct.get((c, j)) == deg]
        for l, a, covered in groups:
            inner = {(j, deg - a): terms[(j, deg)] for (j, deg) in covered}
            word += commutator(self.base_word(c, l, a, 1), self._batch(l, inner))
        return word

    def row_batch(self, c: int, entries: dict[int, int]) -> list[Symbol]:
        """Word for I + sum_j entries[j] E_{c,j} (1-based, j != c)."""
        terms: dict[tuple[int, int], int] = {}
        extra: list[Symbol] = []
        for j, r in entries.items():
            if r == 0:
                continue
            if j == c:
                raise ValueError("row batches are off-diagonal")
            t, w = self._split_entry(c, j, r)
            terms.update(t)
            extra += w
        return self._batch(c, terms) + extra

def decompose_elementary(kms: KmsComplex, i: int, j: int, r: int, C1=None, C2=None) -> list[Symbol]:
    if C1 is None:
        C1, C2 = default_router_colors(kms.d)
    return WordDecomposer(kms, C1, C2).decompose(i, j, r)


def default_router_colors(d: int) -> tuple[Color, Color]:
    if d == 3:
        return (2,), (3,)
    if d % 7 == 0:
        return translate_color(d, 2), translate_color(d, 5)
    raise ColorError("no default color pair for this d")


def translate_color(d: int, shift: int) -> Color:
    """{7k + shift} for the 7-divisible d; shift 0 gives {7, 14, ..., d}."""
    if d % 7:
        raise ColorError("color translates need d divisible by 7")
    s = shift % 7 or 7
    return tuple(range(s, d + 1, 7))


def elementary_factors(kms: KmsComplex, M: Elem, order: Sequence[int] | None = None,
                        helper: Callable[[int, list[int]], int] | None = None
                        ) -> list[tuple[int, int, int]]:
    """Elementary matrices (i, j, r), 1-based, whose product in order is M.

    Column operations bring M to the identity one row at a time, rows taken
    in ``order`` (0-based, default top to bottom); the inverse operations in
    reverse order multiply back to M.  A diagonal entry is set to 1 by
    adding t times a helper column from the rows not yet processed
    (``helper(c, remaining)``, default the first), so the only values used
    below that step are multiples of t.
    """
    d, R, t = kms.d, kms.R, kms.t
    order = list(range(d)) if order is None else list(order)
    if sorted(order) != list(range(d)):
        raise ValueError("order must be a permutation of the rows")
    A = list(M)
    ops: list[tuple[int, int, int]] = []

    def colop(i: int, j: int, r: int) -> None:
        if r:
            kms.apply_symbol(A, (i + 1, j + 1, r))
            ops.append((i + 1, j + 1, r))

    for k, c in enumerate(order):
        row = c * d
        remaining = order[k + 1:]
        if remaining:
            if A[row + c] == 0:
                j = next(j for j in remaining if A[row + j])
                colop(j, c, t)
            if A[row + c] != 1:
                j = helper(c, remaining) if helper else remaining[0]
                # make A[c][j] = (1 - A[c][c]) / t, then add t * column j to column c
                target = R.mul(R.sub(1, A[row + c]), kms.t_inv)
                alpha = R.div(R.sub(target, A[row + j]), A[row + c])
                colop(c, j, alpha)
                colop(j, c, t)
        elif A[row + c] != 1:
            raise ga.DomainError("matrix is not in SL_d(R)")
        for j in range(d):
            if j != c and A[row + j]:
                colop(c, j, R.neg(A[row + j]))
    # M * ops = I  =>  M = ops^-1 reversed
    return [(i, j, R.neg(r)) for (i, j, r) in reversed(ops)]


def row_batches(factors: Iterable[tuple[int, int, int]]) -> list[tuple[int, dict[int, int]]]:
    """Group consecutive factors sharing a row; factors in one row commute."""
    out: list[tuple[int, dict[int, int]]] = []
    for i, j, r in factors:
        if out and out[-1][0] == i:
            row = out[-1][1]
            row[j] = row.get(j, 0) ^ r
        else:
            out.append((i, {j: r}))
    return out


class KmsRouter:
    """Routing in the swap graph between faces of colors C1 and C2."""

    def __init__(self, kms: KmsComplex, C1=None, C2=None, tries: int = 1) -> None:
        if C1 is None:
            C1, C2 = default_router_colors(kms.d)
        self.kms = kms
        self.tries = max(1, int(tries))
        self.C1, self.C2 = as_color(C1), as_color(C2)
        self.words = WordDecomposer(kms, self.C1, self.C2)
        self.edge_color = tuple(sorted(set(self.C1) | set(self.C2)))

    def word_for(self, M: Elem) -> list[Symbol]:
        """Generator word for M: elimination factors, grouped by row, as batch words."""
        w: list[Symbol] = []
        for c, entries in row_batches(elementary_factors(self.kms, M)):
            w.extend(self.words.row_batch(c, entries))
        return merge_word(w)

    def runs_for(self, M: Elem, start: Color) -> list[tuple[Color, list[Symbol]]]:
        """The word for M grouped into runs, each inside one of the two subgroups.

        A symbol that commutes with every symbol of the trailing runs is moved
        back into the nearest earlier run of a subgroup containing it; this
        leaves the product unchanged and removes switches.
        """
        other = {self.C1: self.C2, self.C2: self.C1}
        runs: list[tuple[Color, list[Symbol]]] = [(start, [])]
        touch: list[tuple[set[int], set[int]]] = [(set(), set())]  # rows, columns per run
        in_group = self.words.in_group
        for sym in self.word_for(M):
            a, b, _ = sym
            target = None
            for k in range(len(runs) - 1, -1, -1):
                if in_group(sym, runs[k][0]):
                    target = k
                    break
                rows, cols = touch[k]
                if b in rows or a in cols:
                    break
            if target is None:
                runs.append((other[runs[-1][0]], []))
                touch.append((set(), set()))
                target = len(runs) - 1
            runs[target][1].append(sym)
            touch[target][0].add(a)
            touch[target][1].add(b)
        return runs

    def route_deterministic(self, A: Elem, ca: Color, B: Elem, cb: Color,
                            start: Elem | None = None) -> tuple[list[Elem], list[Color]]:
        """Witness elements and colors of the path from A K_ca to B K_cb.

        Vertex k is the coset ``witness[k] K_colors[k]``; consecutive
        vertices share ``witness[k+1]``.  With ``start`` the word for
        A^-1 B is applied to ``start`` instead of A, which yields the same
        path translated by start A^-1.
        """
        kms = self.kms
        runs = self.runs_for(kms.mul(kms.inv(A), B), ca)
        first = A if start is None else start
        cur = list(first)
        wits = [first]
        cols = [ca]
        for k, (color, syms) in enumerate(runs):
            if k:
                wits.append(tuple(cur))
                cols.append(color)
            for sym in syms:
                kms.apply_symbol(cur, sym)
        if cols[-1] != cb:
            wits.append(tuple(cur))
            cols.append(cb)
        return wits, cols

    def witness_walk(self, x_rep: Elem, cx: Color, y_rep: Elem, cy: Color,
                     rng: np.random.Generator) -> tuple[list[Elem], list[Color]]:
        """Randomized route on representatives, without canonizing the vertices.

        With ``tries > 1`` the conjugated endpoints are also rewritten as
        a k1 and b k2 for random k1, k2 in their subgroups, keeping the pair
        with the fewest planned moves.  The route then still depends only on
        the conjugated cosets and on randomness independent of the
        conjugator, so every edge stays uniformly distributed.
        """
        kms = self.kms
        if {cx, cy} - {self.C1, self.C2}:
            raise ColorError("endpoints must have the router's colors")
        g = kms.random_sl(rng)
        gi = kms.inv(g)
        a = kms.canonize(kms.mul(gi, x_rep), cx)
        b = kms.canonize(kms.mul(gi, y_rep), cy)
        if self.tries > 1:
            best = None
            for k in range(self.tries):
                if k:
                    a2 = kms.times_subgroup(a, cx, kms.random_subgroup_params(cx, rng))
                    b2 = kms.times_subgroup(b, cy, kms.random_subgroup_params(cy, rng))
                else:
                    a2, b2 = a, b
                M = kms.mul(kms.inv(a2), b2)
                cost = self.words.estimate_moves(row_batches(elementary_factors(kms, M)))
                if best is None or cost < best[0]:
                    best = (cost, a2, b2)
            a, b = best[1], best[2]
        return self.route_deterministic(a, cx, b, cy, start=kms.mul(g, a))

    def route_randomized(self, x: CanonicalCoset, y: CanonicalCoset, rng: np.random.Generator) -> RoutePath:
        """Conjugate by a uniform g, route deterministically, map back by g."""
        kms = self.kms
        wits, cols = self.witness_walk(x.canonical, x.color, y.canonical, y.color, rng)
        verts: list = [None] * len(wits)
        for c in set(cols):
            idx = [k for k, ck in enumerate(cols) if ck == c]
            canon = kms.canonize_batch(np.asarray([wits[k] for k in idx], dtype=np.int64), c)
            for k, row in zip(idx, canon.tolist()):
                verts[k] = CanonicalCoset(c, tuple(row))
        verts[0] = x
        verts[-1] = y
        return RoutePath(list(verts), "randomized", vertices=verts, witnesses=wits[1:])

    def edge_key(self, witness: Elem) -> Elem:
        """Canonical form of the edge face through ``witness``."""
        return self.kms.canonize(witness, self.edge_color)

    def path_is_valid(self, path: RoutePath) -> bool:
        """Every consecutive pair of cosets intersects (solved independently of witnesses)."""
        kms = self.kms
        for a, b in zip(path.vertices[:-1], path.vertices[1:]):
            if {a.color, b.color} != {self.C1, self.C2}:
                return False
            if kms.coset_intersection(a, b) is None:
                return False
        return True


@dataclass
class SubsetRouter:
    """Routing between C1 and C2 faces whose internal vertices all lie in a set T.

    A scaffold path of faces of the separating colors C3 and C4 is routed
    first; then one C1 face is drawn in the link of each scaffold vertex and
    one C2 face in the link of each scaffold edge, by rejection sampling
    against T.
    """

    kms: KmsComplex
    C1: Color
    C2: Color
    C3: Color
    C4: Color
    budget: int = 0
    scaffold_tries: int = 16
    scaffold: KmsRouter = field(init=False)

    def __post_init__(self) -> None:
        self.C1, self.C2, self.C3, self.C4 = (as_color(c) for c in (self.C1, self.C2, self.C3, self.C4))
        self.scaffold = KmsRouter(self.kms, self.C3, self.C4, tries=self.scaffold_tries)
        if not self.budget:
            n = self.kms.log2_num_faces(self.C1)
            self.budget = 100 * math.ceil(math.log2(max(n, 2.0)))

    @classmethod
    def standard(cls, kms: KmsComplex, budget: int = 0, scaffold_tries: int = 16) -> "SubsetRouter":
        d = kms.d
        tr = lambda s: translate_color(d, s)  # noqa: E731
        return cls(kms, tr(2), tr(5), tuple(sorted(tr(1) + tr(4))), tuple(sorted(tr(3) + tr(6))),
                   budget, scaffold_tries)

    def _slots(self, u: CanonicalCoset, u2: CanonicalCoset, wits: list[Elem], cols: list[Color]):
        """(face representative, face color, target color) for each internal vertex."""
        C1, C2, edge = self.C1, self.C2, self.scaffold.edge_color
        m = len(cols) - 1
        if m == 0:
            if u.color != u2.color:
                return []
            return [(wits[0], cols[0], C2 if u.color == C1 else C1)]
        # vertex links take C1 faces, edge links C2 faces, alternating
        slots = []
        for k in range(m + 1):
            slots.append((wits[k], cols[k], C1))
            if k < m:
                slots.append((wits[k + 1], edge, C2))
        if u.color == C1:
            slots = slots[1:]
        if u2.color == C1:
            slots = slots[:-1]
        return slots

    def _draw_all(self, slots, T: Callable[[CanonicalCoset], bool], rng: np.random.Generator):
        """Rejection-sample every slot independently, in vectorized rounds."""
        kms = self.kms
        out: list[CanonicalCoset | None] = [None] * len(slots)
        pending = list(range(len(slots)))
        reps = np.asarray([s[0] for s in slots], dtype=np.int64).reshape(len(slots), -1)
        for _ in range(self.budget):
            if not pending:
                break
            groups: dict[tuple[Color, Color], list[int]] = {}
            for i in pending:
                groups.setdefault((slots[i][1], slots[i][2]), []).append(i)
            still = []
            for (face_color, target), idx in groups.items():
                npos = len(kms.info(face_color).positions)
                params = rng.integers(kms.q, size=(len(idx), npos))
                drawn = kms.times_subgroup_batch(reps[idx], face_color, params)
                canon = kms.canonize_batch(drawn, target)
                for i, row in zip(idx, canon.tolist()):
                    y = CanonicalCoset(target, tuple(row))
                    if T(y):
                        out[i] = y
                    else:
                        still.append(i)
            pending = sorted(still)
        return None if pending else out

    def route(self, u: CanonicalCoset, u2: CanonicalCoset, T: Callable[[CanonicalCoset], bool],
              rng: np.random.Generator) -> RoutePath:
        """A path from u to u2 whose internal vertices all satisfy T, or a FAIL record."""
        kms = self.kms
        if {u.color, u2.color} - {self.C1, self.C2}:
            raise ColorError("endpoints must have colors C1 or C2")
        if u == u2:
            return RoutePath([u], "subset_internal", vertices=[u])
        g0 = kms.times_subgroup(u.canonical, u.color, kms.random_subgroup_params(u.color, rng))
        g1 = kms.times_subgroup(u2.canonical, u2.color, kms.random_subgroup_params(u2.color, rng))
        wits, cols = self.scaffold.witness_walk(g0, self.C3, g1, self.C3, rng)
        meta = {"scaffold_length": len(cols) - 1}
        drawn = self._draw_all(self._slots(u, u2, wits, cols), T, rng)
        if drawn is None:
            return RoutePath([], "subset_internal", fail=True, meta=meta)
        seq = [u] + drawn + [u2]
        return RoutePath(seq, "subset_internal", vertices=seq, meta=meta)

    def path_is_valid(self, path: RoutePath) -> bool:
        kms = self.kms
        for a, b in zip(path.vertices[:-1], path.vertices[1:]):
            if {a.color, b.color} != {self.C1, self.C2} or kms.coset_intersection(a, b) is None:
                return False
        return True
