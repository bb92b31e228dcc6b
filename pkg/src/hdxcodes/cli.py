"""Command line entry point: build, sampler, route, decode, bench."""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from typing import Any, Sequence

import numpy as np

from .common import HashSubset, make_rng
from .dp_code import EncodedWord, KmsAccess, Message, SubspaceAccess, encode_block
from .harness import (ConfigError, ExperimentConfig, build_access, inclusion_edges, kms_edge_keys,
                      measure_congestion, measure_sampler, run_experiment, subspace_edge_keys)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
COMMANDS = ("build", "sampler", "route", "decode", "bench")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="flat TOML experiment file")
    common.add_argument("--seed", type=int, help="root seed (unsigned 64-bit)")
    common.add_argument("--out", help="report path prefix")
    common.add_argument("--trials", type=int, help="number of trials")
    common.add_argument("--json", action="store_true", help="print the result as JSON")
    parser = _Parser(prog="hdxcodes", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "build": "construct the system and run sanity checks",
        "sampler": "second singular values of intersection and inclusion graphs",
        "route": "route validity and congestion against hashed bad edge sets",
        "decode": "encode, corrupt and list-decode campaign",
        "bench": "throughput of the core operations",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _load(args) -> ExperimentConfig:
    from .harness import load_config
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.trials is not None:
        cfg.trials = args.trials
    if args.out is not None:
        cfg.out = args.out
    return cfg.validate()


# ----------------------------------------------------------------------
# commands


def cmd_build(cfg: ExperimentConfig) -> dict:
    access = build_access(cfg)
    rng = make_rng(cfg.seed)
    checks = 0
    for _ in range(min(cfg.trials, 50)):
        s = access.random_hyperedge(rng)
        assert access.hyperedge_from_key(access.hyperedge_key(s)) == s, "name roundtrip"
        verts = access.local_vertices(s)
        assert len(verts) == access.degree(s), "degree"
        i = int(rng.integers(len(verts)))
        v = access.nbr_down(s, i)
        if v is not None and verts[i] >= 0:
            assert access.inv_index(s, v) == i, "reverse index"
            assert access.vertex_id(v) == verts[i], "local vertex id"
        checks += 1
    return {"system": cfg.system, "params": access.params, "num_vertices": access.num_vertices,
            "num_hyperedges": access.num_hyperedges, "checks_passed": checks}


def cmd_sampler(cfg: ExperimentConfig) -> dict:
    if cfg.system != "subspace":
        raise ConfigError("sampler measurement needs the subspace system")
    access = build_access(cfg)
    sy = access.sys
    rng = make_rng(cfg.seed)
    gaps = []
    partial = False
    for _ in range(cfg.sampler_graphs):
        s = sy.random_valid("S", rng)
        est = measure_sampler(sy.intersection_graph(s), cfg.sampler_mode, cfg.sampler_budget, rng)
        gaps.append(est.value)
        partial |= est.partial
    out: dict[str, Any] = {"mode": cfg.sampler_mode, "intersection_gaps": gaps,
                           "intersection_gap_max": max(gaps), "intersection_bound": 2 / math.sqrt(cfg.q)}
    if access.num_hyperedges <= 1 << 16:
        est = measure_sampler(inclusion_edges(access), cfg.sampler_mode, cfg.sampler_budget, rng)
        out.update(inclusion_gap=est.value, inclusion_bound=1 / cfg.q)
        partial |= est.partial
    out["partial"] = partial
    return out


def cmd_route(cfg: ExperimentConfig) -> dict:
    access = build_access(cfg)
    rng = make_rng(cfg.seed)
    if isinstance(access, SubspaceAccess):
        sy = access.sys

        def route(a, b, r):
            return sy.route(a, b, r)

        def edges(path):
            return subspace_edge_keys(sy, path)

        valid = sy.path_is_valid
        length_bound = cfg.d
    else:
        router = access.router

        def route(a, b, r):
            return router.route_randomized(a, b, r)

        def edges(path):
            return kms_edge_keys(access, path)

        valid = router.path_is_valid
        length_bound = None

    def pair(r):
        return access.random_hyperedge(r), access.random_hyperedge(r)

    lengths, n_valid = [], 0
    for _ in range(cfg.route_trials):
        path = route(*pair(rng), rng)
        lengths.append(path.length)
        n_valid += bool(valid(path))
    t = length_bound if length_bound is not None else max(lengths)
    congestion = []
    for k, mu in enumerate(cfg.bad_measures):
        bad = HashSubset(("bad-edges", cfg.seed, k), mu)
        est = measure_congestion(route, pair, bad, cfg.route_trials, rng, bound=t * mu, edges_of=edges)
        congestion.append({"measure": mu, "rate": est.rate, "stderr": est.stderr, "bound": est.bound,
                           "within": est.within, "failures": est.failures})
    return {"trials": cfg.route_trials, "valid_fraction": n_valid / cfg.route_trials,
            "max_length": max(lengths), "length_bound": t, "congestion": congestion}


def cmd_decode(cfg: ExperimentConfig) -> dict:
    report = run_experiment(cfg)
    return {"out": cfg.out, "aggregates": report.aggregates}


def cmd_bench(cfg: ExperimentConfig) -> dict:
    access = build_access(cfg)
    rng = make_rng(cfg.seed)
    n = max(cfg.trials, 1)
    hs = [access.random_hyperedge(rng) for _ in range(n + 1)]
    f = Message.random(access, cfg.alphabet, rng)

    def rate(fn) -> float:
        t0 = time.perf_counter()
        for k in range(n):
            fn(k)
        return n / max(time.perf_counter() - t0, 1e-9)

    return {
        "trials": n,
        "routes_per_s": rate(lambda k: access.route(hs[k], hs[k + 1], rng)),
        "local_vertices_per_s": rate(lambda k: access.local_vertices(hs[k])),
        "encoded_blocks_per_s": rate(lambda k: encode_block(access, f, hs[k])),
    }


HANDLERS = {"build": cmd_build, "sampler": cmd_sampler, "route": cmd_route, "decode": cmd_decode,
            "bench": cmd_bench}


def _print(result: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(result, sort_keys=True, default=float))
        return
    for k, v in result.items():
        print(f"{k}: {v}")


def cli_main(argv: Sequence[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
        cfg = _load(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        result = HANDLERS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except KeyboardInterrupt:
        print("interrupted; partial report written", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _print(result, args.json)
    return EXIT_OK


def main() -> None:
    sys.exit(cli_main())
