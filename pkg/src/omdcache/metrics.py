"""Per-run records and the four evaluation metrics.

All metrics take a 1-based slot count ``t`` and use the first ``t`` slots:

* NAC: ``sum(f_s) / (R t)``
* NMAC: the same over the last ``min(tau, t)`` slots
* TAR: ``(sum(f_s(x_s)) - sum(f_s(x*))) / t`` for the hindsight-optimal static cache
* CUC: ``sum(UC_s)``
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Catalog, InvalidInputError, Trace, top_k


@dataclass
class RunRecord:
    """Per-slot service and update costs of one policy run.

    ``comparator_cum[t-1]`` is the cumulative service cost of the hindsight
    comparator over the first ``t`` slots (used by :func:`tar`).
    """

    policy: str
    service: np.ndarray
    update: np.ndarray
    batch_size: int
    seed: int = 0
    config: dict = field(default_factory=dict)
    comparator_cum: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.service = np.asarray(self.service, dtype=float)
        self.update = np.asarray(self.update, dtype=float)
        if self.service.shape != self.update.shape:
            raise InvalidInputError("service and update arrays differ in length")

    @property
    def n_slots(self) -> int:
        return self.service.size


def _check_t(record: RunRecord, t: int) -> int:
    t = int(t)
    if t < 1 or t > record.n_slots:
        raise InvalidInputError(f"t={t} outside [1, {record.n_slots}]")
    return t


def nac(record: RunRecord, t: int) -> float:
    t = _check_t(record, t)
    return float(record.service[:t].sum() / (record.batch_size * t))


def nmac(record: RunRecord, t: int, tau: int = 500) -> float:
    t = _check_t(record, t)
    if tau < 1:
        raise InvalidInputError("tau must be >= 1")
    w = min(tau, t)
    return float(record.service[t - w:t].sum() / (record.batch_size * w))


def tar(record: RunRecord, t: int, comparator_cum: Optional[np.ndarray] = None) -> float:
    t = _check_t(record, t)
    comp = record.comparator_cum if comparator_cum is None else comparator_cum
    if comp is None:
        raise InvalidInputError("time-average regret needs the hindsight comparator")
    return float((record.service[:t].sum() - comp[t - 1]) / t)


def cuc(record: RunRecord, t: int) -> float:
    t = _check_t(record, t)
    return float(record.update[:t].sum())


def curves(record: RunRecord, tau: int = 500):
    """Vectorized NAC, NMAC, TAR (if available) and CUC for every slot."""
    t = np.arange(1, record.n_slots + 1)
    cs = np.cumsum(record.service)
    out = {"nac": cs / (record.batch_size * t)}
    shifted = np.concatenate((np.zeros(1), cs))
    lo = np.maximum(t - tau, 0)
    out["nmac"] = (cs - shifted[lo]) / (record.batch_size * (t - lo))
    if record.comparator_cum is not None:
        out["tar"] = (cs - record.comparator_cum[: record.n_slots]) / t
    out["cuc"] = np.cumsum(record.update)
    return out


def static_comparator(trace: Trace, catalog: Catalog, k: int) -> np.ndarray:
    """Cumulative cost of the full-trace best static cache, slot by slot."""
    agg = trace.aggregate(catalog.service_costs)
    cached = np.zeros(catalog.n_files, dtype=bool)
    cached[top_k(agg, k)] = True
    per = np.array([float(np.sum(catalog.service_costs[b.indices] * b.counts * ~cached[b.indices]))
                    for b in trace.batches])
    return np.cumsum(per)


def prefix_comparator(trace: Trace, catalog: Catalog, k: int) -> np.ndarray:
    """Cumulative cost of the best static cache in hindsight of each prefix."""
    w = catalog.service_costs
    agg = np.zeros(catalog.n_files)
    out = np.empty(trace.n_batches)
    total = 0.0
    for t, b in enumerate(trace.batches):
        agg[b.indices] += w[b.indices] * b.counts
        total += float(np.sum(w[b.indices] * b.counts))
        out[t] = total - float(np.sum(np.partition(agg, agg.size - k)[agg.size - k:]))
    return out


def regret_against_static(costs, batches, catalog: Catalog, k: int) -> float:
    """``sum(costs) - min_static`` for an arbitrary batch list."""
    agg = np.zeros(catalog.n_files)
    for b in batches:
        agg[b.indices] += catalog.service_costs[b.indices] * b.counts
    best = agg.sum() - np.sort(agg)[::-1][:k].sum()
    return float(np.sum(costs) - best)
