"""Command-line entry point: ``python3 -m stablerps <subcommand>``.

Every subcommand writes JSON (or CSV for ``sweep``) to ``--out`` or stdout.
The exit code is 0 only when every check run by the subcommand passed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import harness, verify
from .hashing import MappingKind


def _emit(payload: str, out: str | None) -> None:
    if out:
        Path(out).write_text(payload)
    else:
        sys.stdout.write(payload if payload.endswith("\n") else payload + "\n")


def _json(obj) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return str(v)
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v

    return json.dumps(clean(obj), indent=2)


def _checks_result(checks: list[verify.Check], out: str | None) -> int:
    ok = all(c.passed for c in checks)
    _emit(_json({"passed": ok, "checks": [c.to_dict() for c in checks]}), out)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}", file=sys.stderr)
    return 0 if ok else 1


def _load_config(path: str | None) -> dict:
    return json.loads(Path(path).read_text()) if path else {}


def cmd_map_stats(args) -> int:
    stats = verify.map_stats(args.kind, args.n, args.m, args.seed, args.width, args.chunk_len)
    checks = [verify.check_cache_bound(args.trials, args.seed)] if args.trials > 0 else []
    ok = all(c.passed for c in checks)
    _emit(_json({"passed": ok, "stats": stats, "checks": [c.to_dict() for c in checks]}), args.out)
    return 0 if ok else 1


def cmd_verify_variance(args) -> int:
    cfg = {"n": 12, "ms": [2, 3, 4, 6], "vectors": 3, "trials": 100_000, **_load_config(args.config)}
    return _checks_result(
        verify.verify_variance(cfg["n"], tuple(cfg["ms"]), cfg["vectors"], cfg["trials"], args.seed), args.out
    )


def cmd_verify_stability(args) -> int:
    cfg = {"n": 64, "m": 16, "lipschitz": 1.0, "lam_range": [1.0, 5.0], "steps": 500, **_load_config(args.config)}
    checks = verify.verify_stability(
        cfg["n"], cfg["m"], cfg["lipschitz"], tuple(cfg["lam_range"]), args.seed, cfg["steps"]
    )
    return _checks_result(checks, args.out)


def cmd_verify_residual(args) -> int:
    cfg = {"n": 8, "m": 4, "count": 5, "samples": 1_000_000, "tol": 0.02, **_load_config(args.config)}
    checks = verify.verify_residual(cfg["n"], cfg["m"], cfg["count"], cfg["samples"], args.seed, cfg["tol"])
    return _checks_result(checks, args.out)


def cmd_train(args) -> int:
    config = harness.ExperimentConfig.from_dict(_load_config(args.config))
    if args.seed is not None:
        config = config.replace(seeds=(args.seed,))
    records = harness.sweep([config], args.threads)
    _emit(harness.records_to_csv(records), args.out)
    return 0 if not any(r.scaler.startswith("error") for r in records) else 1


def cmd_sweep(args) -> int:
    """Config keys: ``base`` (experiment), ``methods`` (list), ``compressions`` (list)."""
    raw = _load_config(args.config)
    base = harness.ExperimentConfig.from_dict(raw.get("base", {}))
    if args.seed is not None:
        base = base.replace(seeds=tuple(args.seed + s for s in range(len(base.seeds))))
    methods = raw.get("methods", [{"name": "rps"}, {"name": "prune"}, {"name": "small_model"}])
    configs = harness.expand_grid(base, methods, raw.get("compressions", [10, 50]))
    records = harness.sweep(configs, args.threads)
    _emit(harness.records_to_csv(records), args.out)
    return 0 if not any(r.scaler.startswith("error") for r in records) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stablerps", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, seed_default=0):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--seed", type=int, default=seed_default)
        s.add_argument("--out", help="output file (default stdout)")
        s.add_argument("--threads", type=int, default=1)
        s.set_defaults(func=fn)
        return s

    ms = add("map-stats", cmd_map_stats, "load and cache report for one mapping")
    ms.add_argument("--kind", default=MappingKind.STABLE_RPS.value, choices=[k.value for k in MappingKind])
    ms.add_argument("--n", type=int, required=True)
    ms.add_argument("--m", type=int, required=True)
    ms.add_argument("--width", type=int, default=8, help="cache line width in elements")
    ms.add_argument("--chunk-len", type=int, default=32)
    ms.add_argument("--trials", type=int, default=1000, help="random cache-bound trials (0 to skip)")
    add("verify-variance", cmd_verify_variance, "Monte Carlo check of the closed-form variances")
    add("verify-stability", cmd_verify_stability, "quadratic divergence oracle around the stability bound")
    add("verify-residual", cmd_verify_residual, "least-squares residual against its closed form")
    add("train", cmd_train, "train one experiment config (CSV rows, one per seed)", None)
    add("sweep", cmd_sweep, "method x compression grid (CSV)", None)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
