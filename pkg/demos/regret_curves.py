"""Compare learning caches against classic eviction policies on one trace.

Prints NAC and time-averaged regret at a few checkpoints. Run with
``python demos/regret_curves.py [--b 2000]``.
"""
import argparse

from omdcache.harness import ExperimentConfig, load_trace, run_experiment
from omdcache.metrics import curves

POLICIES = ["ogd", "omd-ne", "omd-q1.5", "ftpl", "lru", "lfu", "best-static"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--b", type=int, default=2000)
    ap.add_argument("--k", type=int, default=10)
    args = ap.parse_args()

    base = ExperimentConfig(trace="batched-fixed-popularity", k=args.k, trace_overrides={"B": args.b, "R": 100})
    trace = load_trace(base)
    checkpoints = [args.b // 10, args.b // 2, args.b]
    print(f"{'policy':<12}" + "".join(f"  NAC@{t:<6}" for t in checkpoints) + "  TAR@end")
    for name in POLICIES:
        cfg = ExperimentConfig(**{**base.__dict__, "policy": name})
        c = curves(run_experiment(cfg, trace=trace))
        row = "".join(f"  {c['nac'][t - 1]:<10.4f}" for t in checkpoints)
        print(f"{name:<12}{row}  {c['tar'][-1]:.3f}")


if __name__ == "__main__":
    main()
