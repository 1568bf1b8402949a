"""Command line entry point: ``omdcache <subcommand> [options]``.

Exit codes: 0 success, 1 invalid input or configuration, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from typing import List, Optional

import numpy as np

from . import traces as tk
from .baselines import LFUCache, LRUCache
from .bounds import BoundInputs, q_star, regime
from .core import Catalog, InvalidInputError, NumericFailureError
from .harness import (POLICIES, ConstantPolicy, ExperimentConfig, csv_text, load_trace,
                      parse_config, run_adversary, run_experiment)
from .policies import FTLPolicy, LearningSchedule, MirrorMapKind, OMDPolicy
from .rounding import make_scheme


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _emit(text: str, out: Optional[str]):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_range(spec: str) -> List[int]:
    """``"1:100"`` (inclusive), ``"1:100:5"`` or ``"1,7,56"``."""
    if ":" in spec:
        parts = [int(p) for p in spec.split(":")]
        lo, hi = parts[0], parts[1]
        step = parts[2] if len(parts) > 2 else 1
        return list(range(lo, hi + 1, step))
    return [int(p) for p in spec.split(",") if p]


def _config(args) -> ExperimentConfig:
    base = ExperimentConfig()
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            base = parse_config(fh.read())
    updates = {}
    for key in ("trace", "policy", "k", "schedule", "eta", "delta", "rounding", "tau", "tar_mode",
                "window", "alpha_p", "report_every"):
        val = getattr(args, key, None)
        if val is not None:
            updates[key] = val
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "shuffle", False):
        updates["shuffle"] = True
    return replace(base, **updates)


def cmd_gen(args):
    if args.ingest:
        with open(args.ingest, encoding="utf-8", errors="replace") as fh:
            trace = tk.ingest_raw_log(fh, args.r or 5000, args.top_m, args.t)
    else:
        base = dict(tk.PRESETS[args.preset]) if args.preset else {}
        over = {"kind": args.kind, "alpha": args.alpha, "N": args.n, "R": args.r, "B": args.b,
                "T": args.t, "period": args.period, "step": args.step, "swap_frac": args.swap_frac}
        base.update({key: v for key, v in over.items() if v is not None})
        base["seed"] = args.seed if args.seed is not None else 0
        trace = tk.generate(tk.GeneratorSpec(**base))
    _emit(tk.format_trace(trace), args.out)


def cmd_run(args):
    cfg = _config(args)
    rec = run_experiment(replace(cfg, output=None))
    _emit(csv_text([rec], cfg.tau, cfg.report_every), args.out or cfg.output)


def cmd_compare(args):
    cfg = _config(args)
    trace = load_trace(cfg)
    recs = [run_experiment(replace(cfg, policy=p, output=None), trace=trace) for p in args.policies.split(",")]
    _emit(csv_text(recs, cfg.tau, cfg.report_every), args.out or cfg.output)


def cmd_qstar(args):
    lines = ["diversity,q_star,regime"]
    for r in _parse_range(args.ratios):
        b = BoundInputs(args.n, args.k, r, 1, args.t, args.w_inf)
        lines.append(f"{r},{q_star(b)!r},{regime(b)}")
    _emit("\n".join(lines) + "\n", args.out)


def cmd_round(args):
    cfg = _config(args)
    if cfg.policy not in ("ogd", "omd-ne") and not cfg.policy.startswith("omd-"):
        raise InvalidInputError("rounding needs a fractional policy")
    trace = load_trace(cfg)
    recs = []
    for scheme in args.schemes.split(","):
        rec = run_experiment(replace(cfg, rounding=scheme, output=None), trace=trace)
        recs.append(rec)
    _emit(csv_text(recs, cfg.tau, cfg.report_every), args.out or cfg.output)


def _adversary_policy(name: str, catalog: Catalog, k: int, T: int):
    n = catalog.n_files
    if name == "lru":
        return LRUCache(catalog, k)
    if name == "lfu":
        return LFUCache(catalog, k)
    if name == "ftl":
        return FTLPolicy(catalog, k)
    if name == "constant":
        return ConstantPolicy(np.full(n, k / n))
    if name == "ogd":
        return OMDPolicy(catalog, k, MirrorMapKind.euclidean(), LearningSchedule.theory(), horizon=T)
    if name == "omd-ne":
        return OMDPolicy(catalog, k, MirrorMapKind.negentropy(), LearningSchedule.theory(), horizon=T)
    raise InvalidInputError(f"unsupported policy for adversary runs: {name!r}")


def cmd_adversary(args):
    n = 2 if args.kind == "ftl-breaker" else args.n
    k = 1 if args.kind == "ftl-breaker" else args.k
    catalog = Catalog.uniform(n)
    policy = _adversary_policy(args.policy, catalog, k, args.t)
    scheme = make_scheme(args.rounding, k, catalog, args.seed or 0) if args.rounding else None
    res = run_adversary(args.kind, policy, catalog, k, args.t, scheme)
    lines = ["metric,value", f"regret,{res.regret!r}", f"update_cost,{float(res.update.sum())!r}",
             f"extended_regret,{res.extended_regret!r}", f"slots,{args.t}"]
    _emit("\n".join(lines) + "\n", args.out)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--config", default=None, help="key=value config file")

    p = _Parser(prog="omdcache", description="No-regret caching experiments.")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate or ingest a trace")
    g.add_argument("--preset", choices=sorted(tk.PRESETS))
    g.add_argument("--kind", choices=tk.KINDS)
    g.add_argument("--alpha", type=float)
    g.add_argument("--n", type=int)
    g.add_argument("--r", type=int)
    g.add_argument("--b", type=int)
    g.add_argument("--t", type=int)
    g.add_argument("--period", type=int)
    g.add_argument("--step", type=int)
    g.add_argument("--swap-frac", type=float)
    g.add_argument("--ingest", help="raw log, one file id per line")
    g.add_argument("--top-m", type=int, default=1000)
    g.set_defaults(func=cmd_gen)

    def run_flags(q):
        q.add_argument("--trace", help="trace file or preset name")
        q.add_argument("--k", type=int)
        q.add_argument("--schedule", choices=["theory", "fixed", "diminishing"])
        q.add_argument("--eta", type=float)
        q.add_argument("--delta", type=float)
        q.add_argument("--tau", type=int)
        q.add_argument("--tar-mode", choices=["full", "prefix"])
        q.add_argument("--window", type=int)
        q.add_argument("--alpha-p", type=float)
        q.add_argument("--report-every", type=int)
        q.add_argument("--shuffle", action="store_true")

    r = sub.add_parser("run", parents=[common], help="run one policy on a trace")
    run_flags(r)
    r.add_argument("--policy", help=", ".join(POLICIES))
    r.add_argument("--rounding", choices=["independent", "coupled", "optimal"])
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", parents=[common], help="run several policies on one trace")
    run_flags(c)
    c.add_argument("--policies", default="ogd,omd-ne,lru,lfu")
    c.set_defaults(func=cmd_compare)

    qs = sub.add_parser("qstar", parents=[common], help="bound-optimal q per diversity ratio")
    qs.add_argument("--n", type=int, default=100)
    qs.add_argument("--k", type=int, default=7)
    qs.add_argument("--t", type=int, default=10_000)
    qs.add_argument("--w-inf", type=float, default=1.0)
    qs.add_argument("--ratios", default="1:100")
    qs.set_defaults(func=cmd_qstar)

    ro = sub.add_parser("round", parents=[common], help="compare rounding schemes")
    run_flags(ro)
    ro.add_argument("--policy")
    ro.add_argument("--schemes", default="independent,coupled,optimal")
    ro.set_defaults(func=cmd_round)

    ad = sub.add_parser("adversary", parents=[common], help="play a worst-case request sequence")
    ad.add_argument("--kind", required=True, choices=["ftl-breaker", "deterministic-breaker", "rounding-breaker"])
    ad.add_argument("--policy", default="ftl")
    ad.add_argument("--n", type=int, default=10)
    ad.add_argument("--k", type=int, default=2)
    ad.add_argument("--t", type=int, default=1000)
    ad.add_argument("--rounding", choices=["independent", "coupled", "optimal"])
    ad.set_defaults(func=cmd_adversary)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except NumericFailureError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except (InvalidInputError, OSError, ValueError, KeyError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
