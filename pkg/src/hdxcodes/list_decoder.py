"""Local list decoding: distance testers, list propagation, GI decoding,
pruning, the inner decoder, list sparsification and the outer decoder.

A *point oracle* is a callable taking an integer array of points and
returning the symbols there.  A *domain sampler* is a callable
``(rng, p) -> points``.  Distances are fractions of disagreeing points.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .common import DEGENERATE, FAIL, RoutePath, child_seed, make_rng, mix64, mix_unit, stable_id
from .dp_code import Codeword, GiLists, HypergraphSystemAccess, ListWord, gi_compose_lists
from .kms_complex import CanonicalCoset, KmsComplex, SubsetRouter

Oracle = Callable[[np.ndarray], np.ndarray]
Sampler = Callable[[np.random.Generator, int], np.ndarray]


@dataclass
class DecoderParams:
    delta_in: float = 0.1
    delta_out: float = 0.1
    eps: float = 0.25
    ell_in: int = 8
    ell_out: int = 64
    t: int = 0
    p: int = 64
    tester_threshold: float = 0.1
    prune_blocks: int = 40
    prune_points: int = 16

    def __post_init__(self) -> None:
        for name in ("delta_in", "delta_out", "eps", "tester_threshold"):
            x = getattr(self, name)
            if not 0.0 <= x <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.p < 1 or self.ell_in < 1:
            raise ValueError("p and ell_in must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DecoderHandle:
    """A decoder circuit: start hyperedge, list entry, frozen seeds and parameters."""

    system_id: str
    s0: str
    g: int
    seed: int
    list_seed: int
    params: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DecoderHandle":
        return cls(**json.loads(text))


# ----------------------------------------------------------------------
# distance testers


def empirical_distance(f: Oracle, g: Oracle, points: np.ndarray) -> float:
    return float(np.mean(f(points) != g(points))) if len(points) else 1.0


def distance_test(f: Oracle, g: Oracle, sampler: Sampler, p: int, delta: float,
                  rng: np.random.Generator) -> bool:
    """True iff the disagreement on p sampled points is at most delta."""
    if p < 1:
        raise ValueError("p must be positive")
    return empirical_distance(f, g, sampler(rng, p)) <= delta


def evaluate_all(entries: Sequence[Oracle], pts: np.ndarray) -> np.ndarray:
    """Values of every entry at pts, one row per entry (lists may provide ``matrix``)."""
    fast = getattr(entries, "matrix", None)
    if fast is not None:
        return fast(pts)
    return np.stack([f(pts) for f in entries])


def _distance_matrix(A: Sequence[Oracle], B: Sequence[Oracle], pts: np.ndarray) -> np.ndarray:
    va = evaluate_all(A, pts)
    vb = va if B is A else evaluate_all(B, pts)
    return (va[:, None, :] != vb[None, :, :]).mean(axis=2)


def list_distance_test(L1: Sequence[Oracle], L2: Sequence[Oracle], sampler: Sampler, p: int,
                       delta: float, rng: np.random.Generator) -> list[int]:
    """Indices of L2 within empirical distance 2*delta of some member of L1 (one shared sample)."""
    if p < 1:
        raise ValueError("p must be positive")
    if not L1 or not L2:
        return []
    dist = _distance_matrix(L1, L2, sampler(rng, p))
    return [int(j) for j in np.flatnonzero(dist.min(axis=0) <= 2 * delta)]


def _restricted(vec: np.ndarray, idx: np.ndarray) -> Oracle:
    return lambda pts: vec[idx[pts]]


def _uniform_sampler(n: int) -> Sampler:
    return lambda rng, p: rng.integers(n, size=p)


# ----------------------------------------------------------------------
# propagation


def propagate_path(sys: HypergraphSystemAccess, lists: ListWord, path: Sequence, g: int, p: int,
                   delta: float, rng: np.random.Generator, sublists: list | None = None):
    """Carry the sub-list {g} along a path of hyperedges; the final survivors, or FAIL."""
    prev = lists.entries(path[0])
    keep = [g]
    if sublists is not None:
        sublists.append(list(keep))
    for a, b in zip(path[:-1], path[1:]):
        ia, ib = sys.shared_indices(a, b)
        if len(ia) == 0:
            return FAIL
        cur = lists.entries(b)
        L1 = [_restricted(prev[k], ia) for k in keep]
        L2 = [_restricted(x, ib) for x in cur]
        keep = list_distance_test(L1, L2, _uniform_sampler(len(ia)), p, delta, rng)
        if sublists is not None:
            sublists.append(list(keep))
        if not keep:
            return FAIL
        prev = cur
    return [prev[k] for k in keep]


def recover_block(sys: HypergraphSystemAccess, lists: ListWord, s0, g: int, target, p: int,
                  delta: float, rng: np.random.Generator, sublists: list | None = None):
    """Route s0 -> target, propagate, and return a uniformly chosen survivor (or FAIL)."""
    path = sys.route(s0, target, rng)
    if path.fail:
        return FAIL
    surv = propagate_path(sys, lists, path.names, g, p, delta, rng, sublists)
    if surv is FAIL:
        return FAIL
    return surv[int(rng.integers(len(surv)))]


def propagate_recover(sys: HypergraphSystemAccess, lists: ListWord, s0, g: int, v,
                      rng: np.random.Generator, p: int = 64, delta: float = 0.1,
                      sublists: list | None = None):
    """Decode f(v) starting from list entry g at s0; a symbol or FAIL."""
    st = sys.random_hyperedge_containing(v, rng)
    if st is DEGENERATE:
        return FAIL
    out = recover_block(sys, lists, s0, g, st, p, delta, rng, sublists)
    if out is FAIL:
        return FAIL
    return int(out[sys.inv_index(st, v)])


# ----------------------------------------------------------------------
# GI list decoding


class GiDecoder:
    """Evaluates decoder handles against one GI-layer word."""

    def __init__(self, sys: HypergraphSystemAccess, w: Codeword, params: DecoderParams) -> None:
        self.sys, self.w, self.params = sys, w, params
        self._lists: dict[int, GiLists] = {}

    def lists(self, list_seed: int) -> GiLists:
        got = self._lists.get(list_seed)
        if got is None:
            got = self._lists[list_seed] = gi_compose_lists(self.sys, self.w, self.params.ell_in, list_seed)
        return got

    def start(self, h: DecoderHandle):
        return self.sys.hyperedge_from_key(h.s0)

    def query(self, h: DecoderHandle, v, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else make_rng(h.seed, self.sys.vertex_id(v))
        P = self.params
        return propagate_recover(self.sys, self.lists(h.list_seed), self.start(h), h.g, v, rng,
                                 P.p, P.tester_threshold)

    def query_block(self, h: DecoderHandle, s, rng: np.random.Generator):
        """The decoder's answers on every vertex of s, all routed through one path."""
        P = self.params
        return recover_block(self.sys, self.lists(h.list_seed), self.start(h), h.g, s,
                             P.p, P.tester_threshold, rng)


def gi_list_decode(sys: HypergraphSystemAccess, w: Codeword, params: DecoderParams,
                   rng: np.random.Generator, runs: int = 2) -> list[DecoderHandle]:
    """One handle per list entry at a random start hyperedge, repeated ``runs`` times."""
    handles = []
    for _ in range(runs):
        list_seed = child_seed(rng)
        lists = gi_compose_lists(sys, w, params.ell_in, list_seed)
        s0 = sys.random_hyperedge(rng)
        key = sys.hyperedge_key(s0)
        for g in range(len(lists.entries(s0))):
            handles.append(DecoderHandle(sys.system_id, key, g, child_seed(rng), list_seed,
                                         params.to_dict()))
    return handles


def _sample_word_blocks(sys: HypergraphSystemAccess, w: Codeword, rng: np.random.Generator):
    s = sys.random_hyperedge(rng)
    if w.layer == "S":
        return s, w.block(s)
    verts = sys.local_vertices(s)
    r = int(verts[int(rng.integers(len(verts)))])
    return s, w.block(r, s)


def prune_decoder_list(handles: Sequence[DecoderHandle], decoder: GiDecoder, eps: float,
                       rng: np.random.Generator, blocks: int | None = None,
                       points: int | None = None) -> list[DecoderHandle]:
    """Drop handles the word does not support, then keep a greedy 6*delta_out-separated cover.

    Handles with the same lists, start and starting function are the same
    decoder and collapse first.  A handle survives the agreement filter if
    it is 2*delta_out-close to the word on at least an eps/2 fraction of
    sampled blocks.  Distances between handles are measured on the pooled
    sampled points.
    """
    P = decoder.params
    blocks = blocks or P.prune_blocks
    points = points or P.prune_points
    dout = P.delta_out
    uniq: list[DecoderHandle] = []
    seen = set()
    for h in handles:
        entry = decoder.lists(h.list_seed).entries(decoder.start(h))[h.g]
        key = (h.list_seed, h.s0, entry.tobytes())
        if key not in seen:
            seen.add(key)
            uniq.append(h)
    if not uniq:
        return []
    outs = np.zeros((len(uniq), blocks * points), dtype=np.int64)
    valid = np.zeros((len(uniq), blocks * points), dtype=bool)
    close = np.zeros((len(uniq), blocks), dtype=bool)
    for b in range(blocks):
        s, wb = _sample_word_blocks(decoder.sys, decoder.w, rng)
        idx = rng.integers(len(wb), size=points)
        sl = slice(b * points, (b + 1) * points)
        for k, h in enumerate(uniq):
            out = decoder.query_block(h, s, rng)
            if out is FAIL:
                continue
            vals = out[idx]
            outs[k, sl] = vals
            valid[k, sl] = True
            close[k, b] = np.mean(vals != wb[idx]) <= 2 * dout
    alive = [k for k in range(len(uniq)) if close[k].mean() >= eps / 2]
    kept: list[int] = []
    for k in alive:
        ok = True
        for m in kept:
            both = valid[k] & valid[m]
            dist = float(np.mean(outs[k][both] != outs[m][both])) if both.any() else 1.0
            if dist <= 6 * dout:
                ok = False
                break
        if ok:
            kept.append(k)
    return [uniq[k] for k in kept]


# ----------------------------------------------------------------------
# inner decoder


def inner_sample_count(delta_in: float, eps: float) -> int:
    return math.ceil(math.log(100 * math.log(1 / delta_in) / (delta_in * eps)) / delta_in ** 2)


def inner_decode(sys: HypergraphSystemAccess, w: Codeword, s, v, delta_in: float, eps: float,
                 rng: np.random.Generator, samples: int | None = None) -> int:
    """Output w_{s'}(v) for the first sampled s' containing v that agrees with w_s on s and s'."""
    rounds = math.ceil(4 * math.log(1 / delta_in) / eps)
    m = samples or inner_sample_count(delta_in, eps)
    ws = w.block(s)
    for _ in range(rounds):
        s2 = sys.random_hyperedge_containing(v, rng)
        if s2 is DEGENERATE:
            continue
        ia, ib = sys.shared_indices(s, s2)
        if len(ia) == 0:
            continue
        w2 = w.block(s2)
        pts = rng.integers(len(ia), size=m)
        if np.mean(ws[ia[pts]] != w2[ib[pts]]) < 4 * delta_in:
            return int(w2[sys.inv_index(s2, v)])
    return 0


# ----------------------------------------------------------------------
# list sparsification


def greedy_mis(members: Sequence[int], dist: np.ndarray, threshold: float) -> list[int]:
    """Greedy maximal independent set (ascending order) of the graph ``dist < threshold``."""
    out: list[int] = []
    for a in members:
        if all(dist[a, b] >= threshold for b in out):
            out.append(a)
    return out


def separation_scale(j: int, delta0: float) -> float:
    return 8.0 ** j * delta0


def output_scale(j: int, delta0: float) -> float:
    return 1.16 * 8.0 ** j * delta0


def well_separate(entries: Sequence[Oracle], j: int, delta0: float, sampler: Sampler,
                  rng: np.random.Generator, p: int | None = None):
    """Sparsify a list to a well-separated sublist, or FAIL.

    Round k replaces the list by a greedy maximal independent set of its
    empirical distance graph at threshold 8*delta_k.  The result after j
    rounds is output when it has no edge at threshold 8*delta_j.
    """
    if j < 1:
        raise ValueError("j must be at least 1")
    n = len(entries)
    if n <= 1:
        return list(range(n))
    p = p or math.ceil(10 / delta0)
    pts = sampler(rng, p)
    dist = _distance_matrix(entries, entries, pts)
    cur = list(range(n))
    for k in range(j):
        cur = greedy_mis(cur, dist, 8 * separation_scale(k, delta0))
    thr = 8 * separation_scale(j, delta0)
    if all(dist[a, b] >= thr for i, a in enumerate(cur) for b in cur[i + 1:]):
        return cur
    return FAIL


class SeparatedSet:
    """The set T of U-vertices whose lists sparsify; also caches the sublists."""

    def __init__(self, layer: "ULayer", j: int, delta0: float, seed: int, p: int | None = None) -> None:
        self.layer, self.j, self.delta0, self.seed, self.p = layer, j, delta0, seed, p
        self._memo: dict[Any, Any] = {}

    def sublist(self, u):
        got = self._memo.get(u)
        if got is None:
            rng = make_rng(self.seed, self.layer.key(u))
            got = well_separate(self.layer.lists(u), self.j, self.delta0, self.layer.domain_sampler(u),
                                rng, self.p)
            if len(self._memo) > 1 << 17:
                self._memo.clear()
            self._memo[u] = got
        return got

    def __call__(self, u) -> bool:
        return self.sublist(u) is not FAIL


# ----------------------------------------------------------------------
# outer decoder


class ULayer:
    """Interface of a U-layer for the outer decoder."""

    def key(self, u) -> int: ...
    def lists(self, u) -> list[Oracle]: ...
    def domain_sampler(self, u) -> Sampler: ...
    def intersection_sampler(self, u, u2) -> Sampler: ...
    def random_container(self, v, rng: np.random.Generator): ...
    def route(self, u, u2, T: Callable[[Any], bool], rng: np.random.Generator) -> RoutePath: ...


def outer_decode(layer: ULayer, u0, g: int, v, j: int, delta0: float, rng: np.random.Generator,
                 T: SeparatedSet | None = None, p: int = 64, trace: list | None = None):
    """Route inside T from u0 to a random container of v, following the unique close entry.

    ``trace`` receives one (face, chosen index) pair per visited face.
    """
    T = T if T is not None else SeparatedSet(layer, j, delta0, child_seed(rng))
    thr = 3 * output_scale(j, delta0)
    ut = layer.random_container(v, rng)
    path = layer.route(u0, ut, T, rng)
    if path.fail:
        return FAIL
    names = path.names
    prev = layer.lists(u0)[g]
    if trace is not None:
        trace.append((u0, g))
    for k in range(1, len(names)):
        u = names[k]
        entries = layer.lists(u)
        last = k == len(names) - 1
        cand = list(range(len(entries))) if last else T.sublist(u)
        pts = layer.intersection_sampler(names[k - 1], u)(rng, p)
        dist = (evaluate_all(entries, pts) != prev(pts)).mean(axis=1)
        match = [i for i in cand if dist[i] < thr]
        if not match:
            return FAIL
        pick = match[int(rng.integers(len(match)))]
        if trace is not None:
            trace.append((u, pick))
        prev = entries[pick]
    return int(prev(np.asarray([v], dtype=np.uint64))[0])


class _SyntheticList(Sequence):
    """The list at one face; ``matrix`` evaluates all entries at once."""

    def __init__(self, layer: "SyntheticSwapLayer", u) -> None:
        self.layer = layer
        ku = layer.key(u)
        self.true = layer.true_index(u)
        self.noise_key = ku ^ layer.seed
        self.decoy_keys = [int(mix64(np.uint64(ku), layer.seed + 1 + k)) for k in range(layer.list_size)]

    def __len__(self) -> int:
        return self.layer.list_size

    def _row(self, k: int, pts: np.ndarray, base: np.ndarray | None = None) -> np.ndarray:
        L, A = self.layer, self.layer.alphabet
        if k != self.true:
            return (mix64(pts, self.decoy_keys[k]) % np.uint64(A)).astype(np.int64)
        base = L.f(pts) if base is None else base
        if L.noise <= 0:
            return base
        hit = mix_unit(pts, self.noise_key) < L.noise
        shift = 1 + (mix64(pts, self.noise_key ^ 0x1234) % np.uint64(A - 1)).astype(np.int64)
        return np.where(hit, (base + shift) % A, base)

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self[i] for i in range(len(self))[k]]
        if not 0 <= k < len(self):
            raise IndexError(k)
        return lambda pts: self._row(k, np.asarray(pts, dtype=np.uint64))

    def matrix(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.uint64)
        return np.stack([self._row(k, pts) for k in range(len(self))])


class SyntheticSwapLayer(ULayer):
    """Synthetic lists on the faces routed by a subset router.

    Points are 64-bit ids.  The points of a face, and of the intersection of
    two faces, are keyed hashes of an unbounded counter, so every sample is
    fresh.  Each face holds f (optionally perturbed on a ``noise`` fraction
    of points, independently per face) at a keyed position, plus uniform
    decoys over an alphabet large enough to keep them far from f.  Each
    point made by ``point_in`` has exactly one registered container.
    """

    def __init__(self, router: SubsetRouter, list_size: int, alphabet: int, noise: float,
                 seed: int) -> None:
        self.router = router
        self.kms: KmsComplex = router.kms
        self.list_size, self.alphabet, self.noise, self.seed = list_size, alphabet, noise, int(seed)
        self.f_key = int(mix64(np.uint64(1), self.seed))
        self._keys: dict[CanonicalCoset, int] = {}
        self._lists: dict[CanonicalCoset, _SyntheticList] = {}
        self._home: dict[int, CanonicalCoset] = {}

    def key(self, u: CanonicalCoset) -> int:
        got = self._keys.get(u)
        if got is None:
            if len(self._keys) > 1 << 18:
                self._keys.clear()
            got = self._keys[u] = stable_id((u.color, u.canonical))
        return got

    def f(self, pts: np.ndarray) -> np.ndarray:
        return (mix64(pts, self.f_key) % np.uint64(self.alphabet)).astype(np.int64)

    def true_index(self, u) -> int:
        return int(mix64(np.uint64(self.key(u)), self.seed ^ 0x77) % np.uint64(self.list_size))

    def lists(self, u) -> _SyntheticList:
        got = self._lists.get(u)
        if got is None:
            if len(self._lists) > 1 << 16:
                self._lists.clear()
            got = self._lists[u] = _SyntheticList(self, u)
        return got

    def _sampler(self, key: int) -> Sampler:
        return lambda rng, p: mix64(rng.integers(1 << 62, size=p, dtype=np.int64).astype(np.uint64), key)

    def domain_sampler(self, u) -> Sampler:
        return self._sampler(self.key(u))

    def intersection_sampler(self, u, u2) -> Sampler:
        a, b = sorted((self.key(u), self.key(u2)))
        return self._sampler(int(mix64(np.uint64(a), b)))

    def point_in(self, u, index: int) -> int:
        v = int(mix64(np.uint64(index), self.key(u)))
        self._home[v] = u
        return v

    def random_face(self, rng: np.random.Generator) -> CanonicalCoset:
        color = self.router.C1 if rng.integers(2) == 0 else self.router.C2
        return self.kms.coset(self.kms.random_sl(rng), color)

    def random_container(self, v, rng: np.random.Generator):
        return self._home[int(v)]

    def route(self, u, u2, T, rng: np.random.Generator) -> RoutePath:
        return self.router.route(u, u2, T, rng)
