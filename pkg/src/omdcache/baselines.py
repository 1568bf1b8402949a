"""Classical eviction caches and hindsight/oracle baselines.

Eviction caches (LRU, LFU, W-LFU) see individual requests: a batch is
expanded into a request stream (ascending file index, each file repeated
``r_i`` times, optionally shuffled) and every miss costs ``w_i``. They only
ever insert the file being requested, so they never pay update cost.
"""

from __future__ import annotations

from collections import OrderedDict, deque
from typing import Optional

import numpy as np

from .core import Catalog, IntegralState, RequestBatch, Trace, top_k
from .policies import FractionalPolicy


def expand_batch(batch: RequestBatch, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Individual requests of a batch, ascending by file (shuffled if ``rng``)."""
    stream = np.repeat(batch.indices, batch.counts)
    if rng is not None:
        rng.shuffle(stream)
    return stream


class EvictionCache:
    """Request-level cache of capacity ``k``, warmed with files ``0..k-1``."""

    name = "cache"
    integral = True
    request_level = True

    def __init__(self, catalog: Catalog, k: int):
        self.catalog = catalog
        self.k = int(k)

    def resident(self) -> IntegralState:
        raise NotImplementedError

    def state(self) -> np.ndarray:
        return self.resident().lift(self.catalog.n_files)

    def access(self, i: int) -> bool:
        """Serve one request; return True on a hit."""
        raise NotImplementedError

    def serve(self, batch: RequestBatch, rng: Optional[np.random.Generator] = None) -> float:
        w = self.catalog.service_costs
        cost = 0.0
        for i in expand_batch(batch, rng):
            if not self.access(int(i)):
                cost += w[i]
        return cost


class LRUCache(EvictionCache):
    name = "lru"

    def __init__(self, catalog: Catalog, k: int):
        super().__init__(catalog, k)
        self._od = OrderedDict((i, None) for i in range(self.k))

    def resident(self) -> IntegralState:
        return IntegralState(tuple(self._od))

    def access(self, i: int) -> bool:
        if i in self._od:
            self._od.move_to_end(i)
            return True
        if len(self._od) >= self.k:
            self._od.popitem(last=False)
        self._od[i] = None
        return False


class WLFUCache(EvictionCache):
    """Frequency-based cache; counts over the last ``window`` requests.

    ``window=None`` gives plain (perfect) LFU with unbounded history. A
    missed file replaces the least frequent resident only if its own count
    is at least as large; ties among residents go to the lowest index.
    """

    name = "w-lfu"

    def __init__(self, catalog: Catalog, k: int, window: Optional[int] = None):
        super().__init__(catalog, k)
        if window is not None and window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self.counts = np.zeros(catalog.n_files, dtype=np.int64)
        self._recent = deque()
        self._cached = set(range(self.k))

    def resident(self) -> IntegralState:
        return IntegralState(tuple(self._cached))

    def access(self, i: int) -> bool:
        self.counts[i] += 1
        if self.window is not None:
            self._recent.append(i)
            if len(self._recent) > self.window:
                self.counts[self._recent.popleft()] -= 1
        if i in self._cached:
            return True
        if len(self._cached) < self.k:
            self._cached.add(i)
            return False
        victim = min(self._cached, key=lambda j: (self.counts[j], j))
        if self.counts[i] >= self.counts[victim]:
            self._cached.remove(victim)
            self._cached.add(i)
        return False


class LFUCache(WLFUCache):
    name = "lfu"

    def __init__(self, catalog: Catalog, k: int):
        super().__init__(catalog, k, window=None)


def process_request_stream(policy: EvictionCache, batch: RequestBatch, shuffle_rng=None):
    """Serve a batch request by request; returns (weighted misses, resident set)."""
    cost = policy.serve(batch, shuffle_rng)
    return cost, policy.resident()


# ------------------------------------------------------------------ FTPL


def ftpl_state(counts, gamma, alpha_p: float, t: int, k: int) -> IntegralState:
    """Top-``k`` files by ``counts + alpha_p * sqrt(t) * gamma`` (ties: lowest index)."""
    if t < 1:
        raise ValueError("t must be >= 1")
    score = np.asarray(counts, dtype=float) + alpha_p * np.sqrt(t) * np.asarray(gamma, dtype=float)
    return IntegralState(tuple(top_k(score, k)))


class FTPLPolicy(FractionalPolicy):
    """Follow the perturbed leader with a single Gaussian draw per run."""

    name = "ftpl"
    integral = True

    def __init__(self, catalog: Catalog, k: int, alpha_p: float = 1.0, seed: int = 0):
        self.catalog = catalog
        self.k = int(k)
        self.alpha_p = float(alpha_p)
        self.gamma = np.random.default_rng(seed).standard_normal(catalog.n_files)
        self.counts = np.zeros(catalog.n_files)
        self.t = 1
        self._refresh()

    def _refresh(self):
        self._x = ftpl_state(self.counts, self.gamma, self.alpha_p, self.t, self.k).lift(self.catalog.n_files)

    def state(self) -> np.ndarray:
        return self._x

    def set_state(self, x) -> None:
        self._x = np.array(x, dtype=float)

    def step(self, batch: RequestBatch) -> None:
        np.add.at(self.counts, batch.indices, self.catalog.service_costs[batch.indices] * batch.counts)
        self.t += 1
        self._refresh()


# ------------------------------------------------------------- hindsight


def best_static(trace: Trace, catalog: Catalog, k: int, stop: Optional[int] = None) -> IntegralState:
    """Top-``k`` files by aggregate weighted requests over the first ``stop`` slots."""
    agg = trace.aggregate(catalog.service_costs, stop)
    return IntegralState(tuple(top_k(agg, k)))


def best_dynamic(trace: Trace, k: int, t: int) -> IntegralState:
    """Top-``k`` files of the popularity vector active at (0-based) slot ``t``."""
    return IntegralState(tuple(top_k(trace.popularity_at(t), k)))


class BestStaticPolicy(FractionalPolicy):
    name = "best-static"
    integral = True

    def __init__(self, trace: Trace, catalog: Catalog, k: int):
        self._x = best_static(trace, catalog, k).lift(catalog.n_files)

    def state(self) -> np.ndarray:
        return self._x

    def set_state(self, x) -> None:
        pass

    def step(self, batch) -> None:
        pass


class BestDynamicPolicy(FractionalPolicy):
    name = "best-dynamic"
    integral = True

    def __init__(self, trace: Trace, catalog: Catalog, k: int):
        self.trace, self.k, self.n = trace, int(k), catalog.n_files
        self.t = 0
        self._x = best_dynamic(trace, self.k, 0).lift(self.n)

    def state(self) -> np.ndarray:
        return self._x

    def set_state(self, x) -> None:
        pass

    def step(self, batch) -> None:
        self.t += 1
        if self.t < self.trace.n_batches:
            self._x = best_dynamic(self.trace, self.k, self.t).lift(self.n)
