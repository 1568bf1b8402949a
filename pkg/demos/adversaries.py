"""Adversarial sequences that defeat deterministic or careless policies."""
from omdcache.baselines import LFUCache, LRUCache
from omdcache.core import Catalog
from omdcache.harness import ConstantPolicy, run_adversary
from omdcache.policies import FTLPolicy
from omdcache.rounding import CoupledRounding, IndependentRounding

T = 2000
cat2 = Catalog.uniform(2)
res = run_adversary("ftl-breaker", FTLPolicy(cat2, 1), cat2, 1, T)
print(f"FTL on alternating requests: regret {res.regret:.0f} over {T} slots")

n, k = 10, 2
cat = Catalog.uniform(n)
for name, make in (("LRU", LRUCache), ("LFU", LFUCache), ("FTL", FTLPolicy)):
    res = run_adversary("deterministic-breaker", make(cat, k), cat, k, T)
    print(f"{name} vs request-what-is-missing: regret {res.regret:.0f} "
          f"(floor {k * (1 - k / n) * T:.0f})")

for label, scheme in (("independent", IndependentRounding(1, seed=0)), ("coupled", CoupledRounding(1, seed=0))):
    res = run_adversary("rounding-breaker", ConstantPolicy([0.5, 0.5]), cat2, 1, T, scheme)
    print(f"{label} rounding of a constant half/half cache: update cost {res.update.sum():.0f}")
