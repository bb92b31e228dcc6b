"""Experiment driver: sampler gaps, routing congestion and decode campaigns."""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Hashable, Iterable, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import gf_arith as ga
from .common import FAIL, HashSubset, RoutePath, make_rng
from .dp_code import (EncodedWord, KmsAccess, Message, SubspaceAccess, corrupt_random,
                      corrupt_two_messages)
from .kms_complex import KmsComplex
from .list_decoder import DecoderParams, GiDecoder, gi_list_decode, prune_decoder_list
from .subspace_system import SubspaceSystem

RNG_NAME = "numpy.Philox (SeedSequence spawn keys)"
MAX_EXACT_SIDE = 1 << 16


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# ----------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    system: str = "subspace"
    q: int = 4
    d: int = 3
    kappa: int = 2
    vertex_color: int = 1
    C1: int = 2
    C2: int = 3
    channel: str = "random"
    eps: float = 0.25
    alphabet: int = 2
    trials: int = 10
    seed: int = 0
    out: str = "report"
    workers: int = 1
    # decoder
    delta_in: float = 0.05
    delta_out: float = 0.05
    ell_in: int = 8
    p: int = 48
    tester_threshold: float = 0.05
    prune_blocks: int = 24
    prune_points: int = 16
    runs: int = 2
    check_points: int = 80
    success_distance: float = 0.1
    # sampler
    sampler_graphs: int = 5
    sampler_mode: str = "exact_spectral"
    sampler_budget: int = 10000
    # routing
    route_trials: int = 1000
    bad_measures: list = field(default_factory=lambda: [0.01, 0.05])

    def validate(self) -> "ExperimentConfig":
        if self.system not in ("subspace", "kms"):
            raise ConfigError(f"unknown system {self.system!r}")
        if self.channel not in ("random", "two_planted"):
            raise ConfigError(f"unknown channel {self.channel!r}")
        if self.channel == "two_planted" and not 0 < self.eps <= 0.25:
            raise ConfigError("two_planted needs eps in (0, 0.25]")
        if not 0 <= self.eps <= 1:
            raise ConfigError("eps must lie in [0, 1]")
        if self.system == "kms" and self.channel == "two_planted":
            raise ConfigError("two_planted needs an enumerable vertex set")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.sampler_mode not in ("exact_spectral", "monte_carlo"):
            raise ConfigError(f"unknown sampler mode {self.sampler_mode!r}")
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.alphabet < 2:
            raise ConfigError("alphabet must be at least 2")
        try:
            self.decoder_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def decoder_params(self) -> DecoderParams:
        return DecoderParams(delta_in=self.delta_in, delta_out=self.delta_out, eps=self.eps,
                             ell_in=self.ell_in, p=self.p, tester_threshold=self.tester_threshold,
                             prune_blocks=self.prune_blocks, prune_points=self.prune_points)

    def to_dict(self) -> dict:
        return asdict(self)


def config_from_dict(data: dict) -> ExperimentConfig:
    known = {f.name: f for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = ExperimentConfig()
    for k, v in data.items():
        default = getattr(cfg, k)
        if isinstance(v, dict):
            raise ConfigError(f"{k}: nested tables are not allowed")
        if isinstance(default, bool) or type(default) is int:
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(f"{k} must be an integer")
        elif isinstance(default, float):
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ConfigError(f"{k} must be a number")
            v = float(v)
        elif isinstance(default, str) and not isinstance(v, str):
            raise ConfigError(f"{k} must be a string")
        elif isinstance(default, list) and not isinstance(v, list):
            raise ConfigError(f"{k} must be a list")
        setattr(cfg, k, v)
    return cfg.validate()


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def build_access(cfg: ExperimentConfig):
    if cfg.system == "subspace":
        return SubspaceAccess(SubspaceSystem(cfg.q, cfg.d))
    kms = KmsComplex(cfg.q, cfg.d, cfg.kappa)
    return KmsAccess(kms, cfg.vertex_color, cfg.C1, cfg.C2)


# ----------------------------------------------------------------------
# sampler measurement


@dataclass
class SamplerEstimate:
    value: float
    mode: str
    iterations: int
    partial: bool


@dataclass
class BipartiteEdges:
    """A bipartite graph as parallel arrays of left and right endpoints."""

    left: np.ndarray
    right: np.ndarray
    n_left: int
    n_right: int

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "BipartiteEdges":
        M = np.asarray(M)
        if M.ndim != 2:
            raise ValueError("expected a biadjacency matrix")
        rows, cols = np.nonzero(M)
        return cls(rows, cols, M.shape[0], M.shape[1])


def _as_edges(graph) -> BipartiteEdges:
    return graph if isinstance(graph, BipartiteEdges) else BipartiteEdges.from_matrix(graph)


def _compact(ids: np.ndarray) -> tuple[np.ndarray, int]:
    # isolated vertices take no part in the walk
    used, inv = np.unique(ids, return_inverse=True)
    return inv, len(used)


def measure_sampler(graph, mode: str = "exact_spectral", budget: int = 10000,
                    rng: np.random.Generator | None = None, tol: float = 1e-6) -> SamplerEstimate:
    """Second singular value of the normalized bipartite walk, or a Monte-Carlo sampler bound.

    ``graph`` is a 0/1 biadjacency matrix or a :class:`BipartiteEdges`.
    ``exact_spectral`` runs power iteration on N^T N with the top singular
    vector projected out, stopping when the estimate moves less than ``tol``;
    running out of ``budget`` iterations flags the result partial.
    ``monte_carlo`` draws ``budget`` random right-hand sets A and reports the
    largest observed ``delta**2 * Pr_left[|Pr_nbr(A) - Pr(A)| >= delta]``
    over a grid of thresholds.
    """
    E = _as_edges(graph)
    rng = rng if rng is not None else make_rng(0)
    rows, nl = _compact(np.asarray(E.left))
    cols, nr = _compact(np.asarray(E.right))
    rdeg = np.bincount(rows, minlength=nl).astype(np.float64)
    cdeg = np.bincount(cols, minlength=nr).astype(np.float64)
    if mode == "exact_spectral":
        if max(E.n_left, E.n_right) > MAX_EXACT_SIDE:
            raise ValueError("exact mode needs at most 2^16 vertices per side")
        if nr == 0:
            return SamplerEstimate(0.0, mode, 0, False)
        w = 1.0 / np.sqrt(rdeg[rows] * cdeg[cols])
        top = np.sqrt(cdeg) / np.linalg.norm(np.sqrt(cdeg))

        def walk(x: np.ndarray) -> np.ndarray:
            y = np.bincount(rows, weights=w * x[cols], minlength=nl)
            return np.bincount(cols, weights=w * y[rows], minlength=nr)

        x = rng.standard_normal(nr)
        x -= top * (top @ x)
        nx = np.linalg.norm(x)
        if nx < 1e-12:
            return SamplerEstimate(0.0, mode, 0, False)
        x /= nx
        sigma = 0.0
        for it in range(1, budget + 1):
            y = walk(x)
            y -= top * (top @ y)
            lam = float(x @ y)
            ny = np.linalg.norm(y)
            if ny < 1e-12:
                return SamplerEstimate(0.0, mode, it, False)
            sigma = math.sqrt(max(lam, 0.0))
            # eigen-residual bounds the error in lam for a symmetric operator
            if np.linalg.norm(y - lam * x) < tol:
                return SamplerEstimate(sigma, mode, it, False)
            x = y / ny
        return SamplerEstimate(sigma, mode, budget, True)
    if mode == "monte_carlo":
        grid = np.linspace(0.05, 1.0, 20)
        worst = 0.0
        for _ in range(budget):
            A = (rng.random(nr) < rng.random()).astype(np.float64)
            frac = np.bincount(rows, weights=A[cols], minlength=nl) / rdeg
            dev = np.abs(frac - A.mean())
            worst = max(worst, float(np.max(grid ** 2 * (dev[None, :] >= grid[:, None]).mean(axis=1))))
        return SamplerEstimate(worst, mode, budget, False)
    raise ValueError(f"unknown mode {mode!r}")


def inclusion_edges(access: SubspaceAccess) -> BipartiteEdges:
    """The full hyperedge-vertex inclusion graph of an enumerable system."""
    n = access.num_hyperedges
    left = np.repeat(np.arange(n), access.degree(None))
    right = np.concatenate([access.local_vertices(access.hyperedge_at(i)) for i in range(n)])
    keep = right >= 0  # degenerate slots carry no vertex
    return BipartiteEdges(left[keep], right[keep], n, access.num_vertices)


# ----------------------------------------------------------------------
# congestion


@dataclass
class CongestionEstimate:
    hits: int
    trials: int
    failures: int
    rate: float
    stderr: float
    bound: float | None
    within: bool | None


def measure_congestion(route: Callable[[Any, Any, np.random.Generator], RoutePath],
                       sample_pair: Callable[[np.random.Generator], tuple[Any, Any]],
                       bad_edge: Callable[[Hashable], bool], trials: int,
                       rng: np.random.Generator, bound: float | None = None,
                       edges_of: Callable[[RoutePath], Iterable[Hashable]] | None = None
                       ) -> CongestionEstimate:
    """Frequency with which a routed path between uniform endpoints touches a bad edge.

    Failed routes count as misses and are reported separately.  ``within``
    compares the rate against ``bound`` with three binomial standard errors
    of slack.
    """
    edges_of = edges_of or (lambda path: path.edges())
    hits = failures = 0
    for _ in range(trials):
        a, b = sample_pair(rng)
        path = route(a, b, rng)
        if path.fail:
            failures += 1
            continue
        if any(bad_edge(e) for e in edges_of(path)):
            hits += 1
    rate = hits / trials if trials else 0.0
    stderr = math.sqrt(rate * (1 - rate) / trials) if trials else 0.0
    within = None if bound is None else rate <= bound + 3 * stderr
    return CongestionEstimate(hits, trials, failures, rate, stderr, bound, within)


def subspace_edge_keys(sys: SubspaceSystem, path: RoutePath) -> list[tuple]:
    """Edges of a subspace route keyed by the RREF of both raw spaces (order-free)."""
    keys = [tuple(map(tuple, ga.rowspace_basis(sys.F, sp))) for sp in path.vertices]
    return [tuple(sorted((a, b))) for a, b in zip(keys[:-1], keys[1:])]


def kms_edge_keys(access: KmsAccess, path: RoutePath) -> list[tuple]:
    router = access.router
    return [(router.edge_color, router.edge_key(w)) for w in path.witnesses]


# ----------------------------------------------------------------------
# decode campaign


class _CountingAccess:
    """Delegating wrapper that records every route the decoder asks for."""

    def __init__(self, inner) -> None:
        self._inner = inner
        self.lengths: list[int] = []
        self.retries = 0
        self.failures = 0

    def __getattr__(self, name):
        return getattr(self._inner, name)

    def route(self, s, s2, rng):
        path = self._inner.route(s, s2, rng)
        self.retries += path.meta.get("attempts", 1) - 1
        if path.fail:
            self.failures += 1
        else:
            self.lengths.append(path.length)
        return path


def decode_trial(access, cfg: ExperimentConfig, trial: int) -> tuple[dict, float]:
    """One encode, corrupt and list-decode round.  Returns the record and its wall time."""
    t0 = time.perf_counter()
    rng = make_rng(cfg.seed, trial)
    P = cfg.decoder_params()
    f1 = Message.random(access, cfg.alphabet, rng)
    if cfg.channel == "two_planted":
        f2 = Message.random(access, cfg.alphabet, rng)
        word = corrupt_two_messages(access, f1, f2, cfg.eps, rng, layer="T")
        targets = [f1, f2]
    else:
        word = corrupt_random(EncodedWord(access, f1, "T"), cfg.eps, rng)
        targets = [f1]
    counted = _CountingAccess(access)
    decoder = GiDecoder(counted, word, P)
    handles = gi_list_decode(counted, word, P, rng, runs=cfg.runs)
    pruned = prune_decoder_list(handles, decoder, cfg.eps, rng)
    verts = [access.random_vertex(rng) for _ in range(cfg.check_points)]
    truth = [np.array([f(access.vertex_id(v)) for v in verts]) for f in targets]
    best = [1.0] * len(targets)
    for h in pruned:
        out = [decoder.query(h, v) for v in verts]
        for k, tv in enumerate(truth):
            miss = np.mean([o is FAIL or o != x for o, x in zip(out, tv)])
            best[k] = min(best[k], float(miss))
    lengths = counted.lengths
    record = {
        "trial": trial,
        "success": all(b <= cfg.success_distance for b in best),
        "best_distance": best,
        "list_size": len(handles),
        "pruned_size": len(pruned),
        "route_calls": len(lengths) + counted.failures,
        "mean_path_length": float(np.mean(lengths)) if lengths else 0.0,
        "max_path_length": max(lengths, default=0),
        "degenerate_retries": counted.retries,
        "route_failures": counted.failures,
    }
    return record, time.perf_counter() - t0


def _mean_stderr(xs: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    if n == 0:
        return 0.0, 0.0
    a = np.asarray(xs, dtype=np.float64)
    m = float(a.mean())
    return m, (float(a.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0)


def aggregate_records(records: Sequence[dict]) -> dict:
    """Summary statistics with Monte-Carlo standard errors, computed only from records."""
    succ = [1.0 if r["success"] else 0.0 for r in records]
    rate = sum(succ) / len(succ) if succ else 0.0
    pruned_mean, pruned_se = _mean_stderr([r["pruned_size"] for r in records])
    len_mean, len_se = _mean_stderr([r["mean_path_length"] for r in records])
    return {
        "trials": len(records),
        "success_rate": rate,
        "success_stderr": math.sqrt(rate * (1 - rate) / len(records)) if records else 0.0,
        "pruned_size_mean": pruned_mean,
        "pruned_size_stderr": pruned_se,
        "pruned_size_max": max((r["pruned_size"] for r in records), default=0),
        "list_size_mean": _mean_stderr([r["list_size"] for r in records])[0],
        "path_length_mean": len_mean,
        "path_length_stderr": len_se,
        "degenerate_retries": sum(r["degenerate_retries"] for r in records),
        "route_failures": sum(r["route_failures"] for r in records),
    }


@dataclass
class ExperimentReport:
    config: dict
    records: list[dict]
    aggregates: dict
    partial: bool = False
    wall_times: list[float] = field(default_factory=list)

    def summary(self) -> dict:
        return {"config": self.config, "rng": {"generator": RNG_NAME, "seed": self.config["seed"]},
                "aggregates": self.aggregates, "partial": self.partial}


_WORKER: dict = {}


def _worker_init(cfg_dict: dict) -> None:
    cfg = config_from_dict(cfg_dict)
    _WORKER["cfg"] = cfg
    _WORKER["access"] = build_access(cfg)


def _worker_trial(trial: int) -> tuple[dict, float]:
    return decode_trial(_WORKER["access"], _WORKER["cfg"], trial)


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True)


def report_paths(out: str | os.PathLike) -> tuple[Path, Path, Path]:
    base = Path(out)
    return (base.with_name(base.name + ".jsonl"), base.with_name(base.name + ".summary.json"),
            base.with_name(base.name + ".timing.json"))


def run_experiment(cfg: ExperimentConfig, out: str | os.PathLike | None = None) -> ExperimentReport:
    """Run the decode campaign; write records, a summary, and wall times to a side file.

    Trial k draws from the stream (seed, k) alone, so the records are the
    same for any worker count.  Records go to disk as they finish, in trial
    order; an interrupt leaves the finished prefix plus a summary marked
    partial.
    """
    cfg.validate()
    out = out if out is not None else cfg.out
    rec_path, sum_path, time_path = report_paths(out)
    rec_path.parent.mkdir(parents=True, exist_ok=True)
    records: list[dict] = []
    times: list[float] = []
    partial = False
    pool = None
    try:
        if cfg.workers > 1:
            import multiprocessing as mp
            pool = mp.Pool(cfg.workers, initializer=_worker_init, initargs=(cfg.to_dict(),))
            results = pool.imap(_worker_trial, range(cfg.trials))
        else:
            access = build_access(cfg)
            results = (decode_trial(access, cfg, k) for k in range(cfg.trials))
        with rec_path.open("w") as fh:
            try:
                for rec, wall in results:
                    records.append(rec)
                    times.append(wall)
                    fh.write(_dumps(rec) + "\n")
                    fh.flush()
            except KeyboardInterrupt:
                partial = True
    finally:
        if pool is not None:
            pool.terminate()
    report = ExperimentReport(cfg.to_dict(), records, aggregate_records(records), partial, times)
    sum_path.write_text(_dumps(report.summary()) + "\n")
    time_path.write_text(_dumps({"wall_time_s": times}) + "\n")
    if partial:
        raise KeyboardInterrupt
    return report


def read_report(out: str | os.PathLike) -> tuple[list[dict], dict]:
    rec_path, sum_path, _ = report_paths(out)
    records = [json.loads(line) for line in rec_path.read_text().splitlines() if line]
    return records, json.loads(sum_path.read_text())
