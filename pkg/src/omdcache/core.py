"""Value types and cost functionals shared by every other module.

States are dense numpy vectors; request batches are sparse (sorted index
array + count array). Integral states are evaluated through the same
formulas after lifting them to {0, 1} vectors.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

FEAS_EPS = 1e-9


class InvalidInputError(ValueError):
    """Inputs violate a documented precondition (dimensions, ranges, format)."""


class NumericFailureError(ArithmeticError):
    """A numerical routine could not reach its guaranteed postcondition."""


class UnsupportedTraceError(InvalidInputError):
    """The trace lacks data needed by an operation (e.g. popularity metadata)."""


@dataclass(frozen=True)
class Catalog:
    """File catalog with per-file service costs ``w`` and update costs ``w'``."""

    n_files: int
    service_costs: np.ndarray
    update_costs: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.service_costs, dtype=float)
        wp = np.asarray(self.update_costs, dtype=float)
        if self.n_files < 1:
            raise InvalidInputError("n_files must be >= 1")
        if w.shape != (self.n_files,) or wp.shape != (self.n_files,):
            raise InvalidInputError("cost vectors must have length n_files")
        if np.any(w < 0) or np.any(wp < 0) or not (np.all(np.isfinite(w)) and np.all(np.isfinite(wp))):
            raise InvalidInputError("costs must be finite and non-negative")
        w.setflags(write=False)
        wp.setflags(write=False)
        object.__setattr__(self, "service_costs", w)
        object.__setattr__(self, "update_costs", wp)

    @classmethod
    def uniform(cls, n_files: int, w: float = 1.0, w_update: float = 1.0) -> "Catalog":
        return cls(n_files, np.full(n_files, float(w)), np.full(n_files, float(w_update)))

    @property
    def w_inf(self) -> float:
        return float(np.max(self.service_costs))


@dataclass(frozen=True)
class FractionalState:
    """A point of the capped simplex ``{x in [0,1]^N : sum(x) = k}``."""

    fractions: np.ndarray
    capacity: int

    def __post_init__(self):
        x = np.array(self.fractions, dtype=float)
        if x.ndim != 1:
            raise InvalidInputError("fractions must be a vector")
        k = self.capacity
        if not (1 <= k <= x.size):
            raise InvalidInputError(f"capacity {k} outside [1, {x.size}]")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("fractions must be finite")
        if x.min() < -FEAS_EPS or x.max() > 1 + FEAS_EPS:
            raise InvalidInputError("fractions outside [0, 1]")
        if abs(x.sum() - k) > FEAS_EPS * k:
            raise InvalidInputError(f"fractions sum to {x.sum()!r}, expected {k}")
        x.setflags(write=False)
        object.__setattr__(self, "fractions", x)

    @property
    def n_files(self) -> int:
        return self.fractions.size


@dataclass(frozen=True, order=True)
class IntegralState:
    """A corner of the capped simplex, stored as the sorted tuple of cached files."""

    cached: tuple

    def __post_init__(self):
        c = tuple(sorted(int(i) for i in self.cached))
        if len(set(c)) != len(c):
            raise InvalidInputError("duplicate file in integral state")
        if c and c[0] < 0:
            raise InvalidInputError("negative file index")
        object.__setattr__(self, "cached", c)

    @property
    def size(self) -> int:
        return len(self.cached)

    def lift(self, n_files: int) -> np.ndarray:
        if self.cached and self.cached[-1] >= n_files:
            raise InvalidInputError("cached index outside catalog")
        z = np.zeros(n_files)
        z[list(self.cached)] = 1.0
        return z

    @classmethod
    def from_indicator(cls, z) -> "IntegralState":
        return cls(tuple(np.flatnonzero(np.asarray(z) > 0.5)))

    def __contains__(self, i) -> bool:
        return int(i) in self.cached


@dataclass(frozen=True)
class RequestBatch:
    """Sparse request multiplicities of a single time slot.

    ``indices`` is strictly increasing and every ``counts`` entry is positive.
    ``batch_size`` (R) equals ``counts.sum()``; ``max_multiplicity`` (h) bounds
    every count.
    """

    indices: np.ndarray
    counts: np.ndarray
    batch_size: int
    max_multiplicity: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        cnt = np.asarray(self.counts, dtype=np.int64)
        if idx.shape != cnt.shape or idx.ndim != 1:
            raise InvalidInputError("indices and counts must be matching vectors")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0):
            raise InvalidInputError("indices must be strictly increasing and non-negative")
        if np.any(cnt <= 0):
            raise InvalidInputError("counts must be positive")
        if int(cnt.sum()) != self.batch_size:
            raise InvalidInputError(f"counts sum to {int(cnt.sum())}, declared R={self.batch_size}")
        if cnt.size and int(cnt.max()) > self.max_multiplicity:
            raise InvalidInputError(f"count {int(cnt.max())} exceeds declared h={self.max_multiplicity}")
        if self.batch_size < 1 or self.max_multiplicity < 1:
            raise InvalidInputError("R and h must be positive")
        idx.setflags(write=False)
        cnt.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "counts", cnt)

    @classmethod
    def from_counts(cls, counts: Union[Mapping[int, int], Sequence[int], np.ndarray],
                    max_multiplicity: Optional[int] = None) -> "RequestBatch":
        """Build from a dense count vector or an ``{index: count}`` mapping.

        ``max_multiplicity`` defaults to the observed maximum count.
        """
        if isinstance(counts, Mapping):
            items = sorted((int(i), int(c)) for i, c in counts.items() if c)
            idx = np.array([i for i, _ in items], dtype=np.int64)
            cnt = np.array([c for _, c in items], dtype=np.int64)
        else:
            dense = np.asarray(counts, dtype=np.int64)
            idx = np.flatnonzero(dense)
            cnt = dense[idx]
        h = int(cnt.max()) if max_multiplicity is None and cnt.size else max_multiplicity
        return cls(idx, cnt, int(cnt.sum()), int(h or 1))

    @classmethod
    def single(cls, i: int, count: int = 1) -> "RequestBatch":
        return cls(np.array([i]), np.array([count]), count, count)

    def to_dense(self, n_files: int) -> np.ndarray:
        if self.indices.size and self.indices[-1] >= n_files:
            raise InvalidInputError("request index outside catalog")
        r = np.zeros(n_files)
        r[self.indices] = self.counts
        return r

    @property
    def support(self) -> np.ndarray:
        return self.indices

    @property
    def diversity_ratio(self) -> float:
        return self.batch_size / self.max_multiplicity


@dataclass
class Trace:
    """A request trace: header values plus the ordered batch list.

    ``popularity_meta`` holds ``(start_slot, popularity_vector)`` pairs with
    0-based start slots, sorted by start slot.
    """

    catalog_size: int
    batch_size: int
    max_multiplicity: int
    horizon: int
    batches: list
    popularity_meta: Optional[list] = field(default=None)

    def __post_init__(self):
        if not self.batches:
            raise InvalidInputError("a trace needs at least one batch")
        for b in self.batches:
            if b.batch_size != self.batch_size or (b.counts.size and b.counts.max() > self.max_multiplicity):
                raise InvalidInputError("batch violates the trace's R/h declaration")
            if b.indices.size and b.indices[-1] >= self.catalog_size:
                raise InvalidInputError("batch index outside catalog")

    @property
    def n_batches(self) -> int:
        return len(self.batches)

    def aggregate(self, weights: Optional[np.ndarray] = None, stop: Optional[int] = None) -> np.ndarray:
        """Sum of ``w * r_t`` over the first ``stop`` batches (all by default)."""
        total = np.zeros(self.catalog_size)
        for b in self.batches[:stop]:
            np.add.at(total, b.indices, b.counts)
        return total if weights is None else total * weights

    def popularity_at(self, slot: int) -> np.ndarray:
        """Popularity vector of the last period starting at or before ``slot``."""
        if not self.popularity_meta:
            raise UnsupportedTraceError("trace carries no popularity metadata")
        starts = [s for s, _ in self.popularity_meta]
        j = bisect.bisect_right(starts, slot) - 1
        if j < 0:
            raise UnsupportedTraceError(f"no popularity vector covers slot {slot}")
        return np.asarray(self.popularity_meta[j][1])


def as_vector(state, n_files: Optional[int] = None) -> np.ndarray:
    """Dense float view of a FractionalState, IntegralState or array."""
    if isinstance(state, FractionalState):
        return state.fractions
    if isinstance(state, IntegralState):
        if n_files is None:
            raise InvalidInputError("lifting an IntegralState needs n_files")
        return state.lift(n_files)
    return np.asarray(state, dtype=float)


def service_cost(batch: RequestBatch, state, catalog: Catalog) -> float:
    """Cost ``sum_i w_i r_i (1 - x_i)`` of serving ``batch`` from ``state``."""
    x = as_vector(state, catalog.n_files)
    if x.shape != (catalog.n_files,):
        raise InvalidInputError(f"state has length {x.shape}, catalog has {catalog.n_files}")
    idx = batch.indices
    if idx.size and idx[-1] >= catalog.n_files:
        raise InvalidInputError("request index outside catalog")
    return float(np.sum(catalog.service_costs[idx] * batch.counts * (1.0 - x[idx])))


def update_cost(batch: RequestBatch, before, after, catalog: Catalog) -> float:
    """Fetch cost of moving from ``before`` to ``after``.

    Only increases on files outside the batch support are charged, at
    ``w'_i`` per unit of file.
    """
    x0 = as_vector(before, catalog.n_files)
    x1 = as_vector(after, catalog.n_files)
    if x0.shape != (catalog.n_files,) or x1.shape != (catalog.n_files,):
        raise InvalidInputError("state dimensions do not match the catalog")
    inc = np.maximum(0.0, x1 - x0)
    inc[batch.indices] = 0.0
    return float(np.dot(catalog.update_costs, inc))


def cost_gradient(batch: RequestBatch, catalog: Catalog) -> np.ndarray:
    """Dense gradient of the (linear) service cost: ``-(w_i r_i)_i``."""
    g = np.zeros(catalog.n_files)
    g[batch.indices] = -catalog.service_costs[batch.indices] * batch.counts
    return g


def top_k(scores: Iterable[float], k: int) -> np.ndarray:
    """Indices of the ``k`` largest scores, ties broken by lowest index, ascending."""
    s = np.asarray(scores, dtype=float)
    order = np.argsort(-s, kind="stable")[:k]
    return np.sort(order)
