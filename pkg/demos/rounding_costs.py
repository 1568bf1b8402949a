"""Update cost of turning a fractional cache into a physical one.

Runs OGD on a shifting-popularity trace and reports the service cost
(identical in expectation for all schemes) and the update cost paid by
independent, coupled and transport-optimal rounding.
"""
from omdcache.harness import ExperimentConfig, load_trace, run_experiment

base = ExperimentConfig(trace="downscaled-global-popularity-change", policy="ogd", k=5,
                        trace_overrides={"B": 600}, seed=1)
trace = load_trace(base)
frac = run_experiment(base, trace=trace)
print(f"fractional       service {frac.service.sum():9.1f}  update {frac.update.sum():9.2f}")
for scheme in ("independent", "coupled", "optimal"):
    rec = run_experiment(ExperimentConfig(**{**base.__dict__, "rounding": scheme}), trace=trace)
    print(f"{scheme:<16} service {rec.service.sum():9.1f}  update {rec.update.sum():9.2f}"
          f"  (expected {rec.extra['expected_update'].sum():.2f})")
