"""How the best mirror map moves with request diversity.

For a fixed catalog and cache size, sweeps the diversity ratio R/h and
prints the bound-minimizing q together with the bound values of the two
endpoint maps.
"""
import numpy as np

from omdcache.bounds import BoundInputs, Q_LIMIT, q_star, regime, regret_ub

N, K, T = 1000, 10, 10_000

print(f"{'R/h':>5} {'q*':>6} {'euclid':>10} {'negent':>10}  regime")
for d in np.unique(np.geomspace(1, N, 16).astype(int)):
    b = BoundInputs(N, K, int(d), 1, T)
    print(f"{d:>5} {q_star(b):>6.3f} {regret_ub(2.0, b):>10.1f} {regret_ub(Q_LIMIT, b):>10.1f}  {regime(b)}")
