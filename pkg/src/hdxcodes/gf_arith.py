"""Finite fields, the ring R = F_q[t]/phi, and dense linear algebra over them.

Elements are plain ints.  In a field of order ``p**s`` built over a base
field of order ``b`` the int's base-``b`` digits are the coefficients of
the element as a polynomial over the base, low degree first.  Because
every level packs digits the same way, the base-``p`` digits of any element
are its coordinates over the prime field, so addition is digitwise mod
``p`` (plain XOR in characteristic 2).

Matrices are lists of row lists.  Every matrix routine takes the field as
its first argument.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

Matrix = list[list[int]]


class DomainError(ValueError):
    """Raised for arithmetic outside the domain (e.g. inverting zero)."""


class SamplingError(RuntimeError):
    """Raised when a bounded rejection sampler runs out of retries."""


# ---------------------------------------------------------------------------
# polynomials over a field, coefficient lists low-to-high


def _poly_trim(a: list[int]) -> list[int]:
    while a and a[-1] == 0:
        a.pop()
    return a


def _poly_mod(F: "FiniteField", a: Sequence[int], m: Sequence[int]) -> list[int]:
    a = list(a)
    lead_inv = F.inv(m[-1])
    dm = len(m) - 1
    for k in range(len(a) - 1, dm - 1, -1):
        c = a[k]
        if c == 0:
            continue
        c = F.mul(c, lead_inv)
        for j in range(dm + 1):
            a[k - dm + j] = F.sub(a[k - dm + j], F.mul(c, m[j]))
    return _poly_trim(a[:dm])


def _poly_mul(F: "FiniteField", a: Sequence[int], b: Sequence[int]) -> list[int]:
    if not a or not b:
        return []
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x == 0:
            continue
        for j, y in enumerate(b):
            if y:
                out[i + j] = F.add(out[i + j], F.mul(x, y))
    return _poly_trim(out)


def is_irreducible(F: "FiniteField", poly: Sequence[int]) -> bool:
    """Trial division by every monic polynomial of degree 1..deg/2."""
    poly = _poly_trim(list(poly))
    n = len(poly) - 1
    if n < 1:
        return False
    if n == 1:
        return True
    for dd in range(1, n // 2 + 1):
        for low in itertools.product(range(F.order), repeat=dd):
            if not _poly_mod(F, poly, list(low) + [1]):
                return False
    return True


def find_irreducible(F: "FiniteField", degree: int) -> list[int]:
    """Lexicographically smallest monic irreducible of ``degree`` with p(0) != 0.

    Candidates are compared by their coefficients read from the top degree
    down, so over F_2 the order agrees with the integer bit pattern.
    """
    if degree < 1:
        raise ValueError("degree must be >= 1")
    for high in itertools.product(range(F.order), repeat=degree):
        if high[-1] == 0:
            continue
        cand = list(reversed(high)) + [1]
        if is_irreducible(F, cand):
            return cand
    raise DomainError("no irreducible polynomial found")  # pragma: no cover


# ---------------------------------------------------------------------------
# fields


class FiniteField:
    """A finite field presented as ``base[x]/(modulus)``.

    Parameters
    ----------
    base : FiniteField or None
        Coefficient field.  ``None`` means the prime field of order ``p``.
    modulus : list of int
        Monic irreducible polynomial over ``base``, low-to-high.  Ignored for
        prime fields.
    p : int
        Characteristic (only used when ``base`` is None).
    """

    def __init__(self, base: "FiniteField | None", modulus: Sequence[int] | None = None,
                 p: int = 2) -> None:
        self.base = base
        if base is None:
            self.p = p
            self.degree = 1
            self.modulus = [0, 1]
            self.order = p
        else:
            modulus = _poly_trim(list(modulus or []))
            if not modulus or modulus[-1] != 1:
                raise DomainError("modulus must be monic")
            if not is_irreducible(base, modulus):
                raise DomainError(f"modulus {modulus} is reducible")
            self.p = base.p
            self.degree = len(modulus) - 1
            self.modulus = modulus
            self.order = base.order ** self.degree
        self.prime_degree = round(np.log(self.order) / np.log(self.p))
        self._build_tables()

    # table construction -------------------------------------------------

    def _digits(self, a: int) -> list[int]:
        b = self.base.order
        out = []
        for _ in range(self.degree):
            a, r = divmod(a, b)
            out.append(r)
        return out

    def _pack(self, digits: Sequence[int]) -> int:
        b = self.base.order
        v = 0
        for c in reversed(digits):
            v = v * b + c
        return v

    def _add_raw(self, a: int, b: int) -> int:
        if self.p == 2:
            return a ^ b
        out, scale = 0, 1
        while a or b:
            a, x = divmod(a, self.p)
            b, y = divmod(b, self.p)
            out += ((x + y) % self.p) * scale
            scale *= self.p
        return out

    def _mul_raw(self, a: int, b: int) -> int:
        if self.base is None:
            return (a * b) % self.p
        prod = _poly_mul(self.base, self._digits(a), self._digits(b))
        return self._pack(_poly_mod(self.base, prod, self.modulus) + [0] * self.degree)

    def _build_tables(self) -> None:
        n = self.order
        self.neg_table = [0] * n
        for a in range(n):
            # -a is digitwise (p - x) mod p
            out, scale, x = 0, 1, a
            while x:
                x, r = divmod(x, self.p)
                out += ((-r) % self.p) * scale
                scale *= self.p
            self.neg_table[a] = out
        # a primitive element gives log/exp tables
        self.exp_table: list[int] = []
        self.log_table = [0] * n
        for g in range(2, n) if n > 2 else [1]:
            seq = [1]
            x = g
            while x != 1:
                seq.append(x)
                x = self._mul_raw(x, g)
            if len(seq) == n - 1:
                self.exp_table = seq + seq
                break
        if not self.exp_table:  # pragma: no cover
            raise DomainError("no primitive element")
        for i, x in enumerate(self.exp_table[: n - 1]):
            self.log_table[x] = i
        self.inv_table = [0] * n
        for a in range(1, n):
            self.inv_table[a] = self.exp_table[(n - 1 - self.log_table[a]) % (n - 1)]
        self.mul_table: list[int] | None = None
        if n <= 1 << 8:
            mt = [0] * (n * n)
            for a in range(1, n):
                la = self.log_table[a]
                for b in range(1, n):
                    mt[a * n + b] = self.exp_table[la + self.log_table[b]]
            self.mul_table = mt
        self.add_table: list[int] | None = None
        if self.p != 2 and n <= 1 << 8:
            self.add_table = [self._add_raw(a, b) for a in range(n) for b in range(n)]

    # scalar arithmetic --------------------------------------------------

    def add(self, a: int, b: int) -> int:
        if self.p == 2:
            return a ^ b
        if self.add_table is not None:
            return self.add_table[a * self.order + b]
        return self._add_raw(a, b)

    def neg(self, a: int) -> int:
        return self.neg_table[a]

    def sub(self, a: int, b: int) -> int:
        if self.p == 2:
            return a ^ b
        return self.add(a, self.neg_table[b])

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return self.exp_table[self.log_table[a] + self.log_table[b]]

    def inv(self, a: int) -> int:
        if a == 0:
            raise DomainError("inverse of zero")
        return self.inv_table[a]

    def div(self, a: int, b: int) -> int:
        return self.mul(a, self.inv(b))

    def pow(self, a: int, e: int) -> int:
        if e == 0:
            return 1
        if a == 0:
            return 0
        return self.exp_table[(self.log_table[a] * e) % (self.order - 1)]

    def elements(self) -> range:
        return range(self.order)

    def coeffs(self, a: int) -> list[int]:
        """Coefficients over the base field, low-to-high."""
        if self.base is None:
            return [a]
        return self._digits(a)

    def from_coeffs(self, c: Sequence[int]) -> int:
        if self.base is None:
            return c[0] % self.p
        if len(c) > self.degree:
            raise DomainError("too many coefficients")
        return self._pack(list(c) + [0] * (self.degree - len(c)))

    def random(self, rng: np.random.Generator, size: int | None = None):
        if size is None:
            return int(rng.integers(self.order))
        return [int(x) for x in rng.integers(self.order, size=size)]

    def __repr__(self) -> str:
        return f"FiniteField(order={self.order}, p={self.p})"


def prime_field(p: int = 2) -> FiniteField:
    return FiniteField(None, p=p)


def galois_field(p: int, s: int, modulus: Sequence[int] | None = None) -> FiniteField:
    """F_{p^s} over the prime field; default modulus from ``find_irreducible``."""
    Fp = prime_field(p)
    if s == 1:
        return Fp
    return FiniteField(Fp, modulus if modulus is not None else find_irreducible(Fp, s))


def scalar_arith(F: FiniteField, op: str, a: int, b: int | None = None) -> int:
    if op == "add":
        return F.add(a, b)
    if op == "mul":
        return F.mul(a, b)
    if op == "inv":
        return F.inv(a)
    if op == "neg":
        return F.neg(a)
    raise ValueError(f"unknown op {op!r}")


@dataclass(frozen=True)
class RingSpec:
    """R = F_q[t]/phi as an extension of ``base`` with ``t`` packed as the int q."""

    base: FiniteField
    kappa: int
    phi: tuple[int, ...]

    def build(self) -> FiniteField:
        if self.kappa < 2:
            raise DomainError("kappa must be >= 2 so that t is not a constant")
        if self.phi[0] == 0:
            raise DomainError("phi(0) must be nonzero")
        return FiniteField(self.base, list(self.phi))


def make_ring(base: FiniteField, kappa: int, phi: Sequence[int] | None = None) -> FiniteField:
    if phi is None:
        phi = find_irreducible(base, kappa)
    return RingSpec(base, kappa, tuple(phi)).build()


# ---------------------------------------------------------------------------
# matrices


def identity(n: int) -> Matrix:
    return [[1 if i == j else 0 for j in range(n)] for i in range(n)]


def _xor_rows(F: FiniteField):
    """Multiplication-table rows when addition is XOR, else None."""
    if F.p != 2 or F.mul_table is None:
        return None
    n, mt = F.order, F.mul_table
    rows = getattr(F, "_mt_rows", None)
    if rows is None:
        rows = F._mt_rows = [mt[a * n:(a + 1) * n] for a in range(n)]
    return rows


def mat_mul(F: FiniteField, a: Matrix, b: Matrix) -> Matrix:
    mt = _xor_rows(F)
    if mt is not None:
        out = []
        width = len(b[0]) if b else 0
        for row in a:
            acc = [0] * width
            for x, brow in zip(row, b):
                if x:
                    m = mt[x]
                    acc = [u ^ m[y] for u, y in zip(acc, brow)]
            out.append(acc)
        return out
    mul, add = F.mul, F.add
    bt = list(zip(*b))
    out = []
    for row in a:
        nz = [(k, x) for k, x in enumerate(row) if x]
        new = []
        for col in bt:
            s = 0
            for k, x in nz:
                y = col[k]
                if y:
                    s = add(s, mul(x, y))
            new.append(s)
        out.append(new)
    return out


def rref(F: FiniteField, m: Matrix) -> tuple[Matrix, int, list[int]]:
    """Reduced row echelon form; returns (matrix, rank, pivot columns)."""
    a = [list(r) for r in m]
    if not a:
        return a, 0, []
    rows, cols = len(a), len(a[0])
    mt = _xor_rows(F)
    if mt is not None:
        return _rref_xor(a, rows, cols, mt, F.inv)
    mul, sub, inv = F.mul, F.sub, F.inv
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        piv = next((i for i in range(r, rows) if a[i][c]), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        pr = a[r]
        if pr[c] != 1:
            s = inv(pr[c])
            pr = a[r] = [mul(s, x) for x in pr]
        for i in range(rows):
            if i != r and a[i][c]:
                f = a[i][c]
                ri = a[i]
                a[i] = [sub(x, mul(f, y)) if y else x for x, y in zip(ri, pr)]
        pivots.append(c)
        r += 1
    return a, r, pivots


def _rref_xor(a: Matrix, rows: int, cols: int, mt: list, inv) -> tuple[Matrix, int, list[int]]:
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        piv = next((i for i in range(r, rows) if a[i][c]), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        pr = a[r]
        if pr[c] != 1:
            m = mt[inv(pr[c])]
            pr = a[r] = [m[x] for x in pr]
        for i in range(rows):
            f = a[i][c]
            if f and i != r:
                m = mt[f]
                a[i] = [x ^ m[y] for x, y in zip(a[i], pr)]
        pivots.append(c)
        r += 1
    return a, r, pivots


def rank(F: FiniteField, m: Matrix) -> int:
    mt = _xor_rows(F)
    if mt is None or not m:
        return rref(F, m)[1]
    # forward elimination only; no back-substitution needed for the rank
    a = [list(r) for r in m]
    rows, r = len(a), 0
    for c in range(len(a[0])):
        if r == rows:
            break
        piv = next((i for i in range(r, rows) if a[i][c]), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        pr = a[r]
        m_inv = mt[F.inv(pr[c])]
        for i in range(r + 1, rows):
            f = a[i][c]
            if f:
                m = mt[m_inv[f]]
                a[i] = [x ^ m[y] for x, y in zip(a[i], pr)]
        r += 1
    return r


def rowspace_basis(F: FiniteField, m: Matrix) -> Matrix:
    """Nonzero rows of the RREF."""
    red, r, _ = rref(F, m)
    return red[:r]


def det_inv(F: FiniteField, m: Matrix) -> tuple[int, Matrix | None]:
    """Determinant and inverse (None when singular)."""
    n = len(m)
    if any(len(r) != n for r in m):
        raise DomainError("matrix must be square")
    a = [list(r) + [1 if i == j else 0 for j in range(n)] for i, r in enumerate(m)]
    mul, sub, inv = F.mul, F.sub, F.inv
    det = 1
    for c in range(n):
        piv = next((i for i in range(c, n) if a[i][c]), None)
        if piv is None:
            return 0, None
        if piv != c:
            a[c], a[piv] = a[piv], a[c]
            det = F.neg(det)
        pv = a[c][c]
        det = mul(det, pv)
        s = inv(pv)
        pr = a[c] = [mul(s, x) for x in a[c]]
        for i in range(n):
            if i != c and a[i][c]:
                f = a[i][c]
                a[i] = [sub(x, mul(f, y)) if y else x for x, y in zip(a[i], pr)]
    return det, [r[n:] for r in a]


def det(F: FiniteField, m: Matrix) -> int:
    return det_inv(F, m)[0]


def mat_inv(F: FiniteField, m: Matrix) -> Matrix:
    d, inv_m = det_inv(F, m)
    if inv_m is None:
        raise DomainError("singular matrix")
    return inv_m


def nullspace(F: FiniteField, m: Matrix, cols: int | None = None) -> Matrix:
    """Basis (RREF) of {x : m x = 0}."""
    if not m:
        return identity(cols or 0)
    cols = len(m[0])
    red, r, piv = rref(F, m)
    free = [c for c in range(cols) if c not in piv]
    basis = []
    for f in free:
        v = [0] * cols
        v[f] = 1
        for i, pc in enumerate(piv):
            v[pc] = F.neg(red[i][f])
        basis.append(v)
    return rowspace_basis(F, basis) if basis else []


def orth_complement(F: FiniteField, m: Matrix, cols: int | None = None) -> Matrix:
    """RREF basis of the space orthogonal to rowspace(m) under sum x_i y_i."""
    if not m or rank(F, m) == 0:
        n = cols if cols is not None else (len(m[0]) if m else 0)
        return identity(n)
    return nullspace(F, m)


def rowspace_intersect(F: FiniteField, a: Matrix, b: Matrix) -> Matrix:
    """RREF basis of rowspace(a) intersected with rowspace(b) (Zassenhaus)."""
    if not a or not b:
        return []
    n = len(a[0])
    zero = [0] * n
    red, r, piv = rref(F, [list(x) + list(x) for x in a] + [list(y) + zero for y in b])
    # rows whose pivot lies in the right half have a zero left half
    return [row[n:] for row, c in zip(red[:r], piv) if c >= n]


def span_contains(F: FiniteField, big: Matrix, small: Matrix) -> bool:
    return rank(F, list(big) + list(small)) == rank(F, big)


def random_full_rank_extend(F: FiniteField, m: Matrix, target_rank: int,
                            rng: np.random.Generator, cols: int | None = None,
                            budget: int = 64) -> Matrix:
    """Append uniformly random rows, one at a time, until rank reaches ``target_rank``.

    Each new row is resampled until it leaves the current span, so the
    appended tuple is uniform among rank-extending tuples.
    """
    rows = [list(r) for r in m]
    n = cols if cols is not None else len(rows[0])
    cur = rank(F, rows) if rows else 0
    if cur > target_rank or target_rank > n:
        raise ValueError("need rank(m) <= target_rank <= cols")
    basis = rowspace_basis(F, rows) if rows else []
    while cur < target_rank:
        for _ in range(budget):
            v = F.random(rng, n)
            if rank(F, basis + [v]) > cur:
                break
        else:
            raise SamplingError("rank extension retry budget exhausted")
        rows.append(v)
        basis = rowspace_basis(F, basis + [v])
        cur += 1
    return rows


def enumerate_span(F: FiniteField, m: Matrix) -> set[tuple[int, ...]]:
    """Every vector of rowspace(m); brute force for oracle checks."""
    basis = rowspace_basis(F, m)
    n = len(m[0]) if m else 0
    out = set()
    for coeffs in itertools.product(range(F.order), repeat=len(basis)):
        v = [0] * n
        for c, row in zip(coeffs, basis):
            if c:
                v = [F.add(x, F.mul(c, y)) for x, y in zip(v, row)]
        out.add(tuple(v))
    return out


# ---------------------------------------------------------------------------
# serialization


def poly_to_hex(poly: Iterable[int]) -> str:
    return ",".join(format(c, "x") for c in poly)


def poly_from_hex(s: str) -> list[int]:
    return [int(x, 16) for x in s.split(",")] if s else []


def matrix_to_hex(m: Matrix, domain: str) -> str:
    rows = len(m)
    cols = len(m[0]) if m else 0
    body = ",".join(format(x, "x") for r in m for x in r)
    return f"{rows}x{cols}@{domain}:{body}"


def matrix_from_hex(s: str) -> tuple[Matrix, str]:
    head, body = s.split(":", 1)
    shape, domain = head.split("@")
    rows, cols = (int(x) for x in shape.split("x"))
    vals = [int(x, 16) for x in body.split(",")] if body else []
    if len(vals) != rows * cols:
        raise ValueError("entry count does not match shape")
    return [vals[i * cols:(i + 1) * cols] for i in range(rows)], domain
