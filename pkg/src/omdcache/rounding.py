"""Randomized rounding of fractional cache states to integral ones.

A single uniform ``xi`` and the prefix sums ``m_i = x_1 + ... + x_i`` define
the integral state: the file picked for threshold ``xi + j`` (``j < k``) is
the first one whose prefix sum reaches it. Each file is then cached with
probability exactly ``x_i``.

Reusing ``xi`` across slots (coupled rounding) makes consecutive integral
states differ rarely; drawing it afresh every slot (independent rounding)
does not. Optimally-coupled rounding goes further and samples the next
state from a min-cost transport plan between consecutive decompositions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .core import (Catalog, FractionalState, IntegralState, InvalidInputError,
                   NumericFailureError, RequestBatch, as_vector, update_cost)


def _prefix(x: np.ndarray, k: int) -> np.ndarray:
    m = np.cumsum(x)
    m[-1] = k
    # prefix sums that miss an integer by round-off alone are snapped onto it;
    # otherwise they leave slivers of xi where two thresholds collapse
    tol = max(1e-12, 4 * np.finfo(float).eps * m.size * k)
    r = np.rint(m)
    near = np.abs(m - r) <= tol
    m[near] = r[near]
    return np.minimum(m, k)


def _round_prefix(m: np.ndarray, k: int, xi: float) -> np.ndarray:
    thresholds = xi + np.arange(k)
    # xi = 0 is read as the limit from above so that exactly k files are picked
    side = "right" if xi == 0.0 else "left"
    idx = np.searchsorted(m, thresholds, side=side)
    # a unit entry can straddle two thresholds after rounding of the prefix
    # sums; the sequential rule then hands the later threshold to the next file
    j = np.arange(k)
    idx = np.maximum.accumulate(idx - j) + j
    if idx[-1] >= m.size:
        raise NumericFailureError("rounding could not place every threshold")
    return idx


def online_round(x, xi: float, k: Optional[int] = None) -> IntegralState:
    """Integral state selected by threshold offset ``xi`` in ``[0, 1)``.

    Examples
    --------
    >>> online_round(FractionalState([1.0, 0.6, 0.4], 2), 0.8).cached
    (0, 2)
    """
    if isinstance(x, FractionalState):
        k = x.capacity
        x = x.fractions
    x = np.asarray(x, dtype=float)
    if k is None:
        k = int(round(x.sum()))
    if not (0.0 <= xi <= 1.0):
        raise InvalidInputError("xi must lie in [0, 1]")
    picked = _round_prefix(_prefix(x, k), k, xi)
    return IntegralState(tuple(int(i) for i in picked))


@dataclass
class IntegralDistribution:
    """Finite distribution over integral states (lexicographically ordered support)."""

    support: List[IntegralState]
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        if len(self.support) != self.probs.size:
            raise InvalidInputError("support and probabilities differ in length")
        if np.any(self.probs <= 0) or abs(self.probs.sum() - 1.0) > 1e-9:
            raise InvalidInputError("probabilities must be positive and sum to 1")

    def mean(self, n_files: int) -> np.ndarray:
        out = np.zeros(n_files)
        for z, p in zip(self.support, self.probs):
            out[list(z.cached)] += p
        return out

    def as_dict(self) -> dict:
        return {z.cached: float(p) for z, p in zip(self.support, self.probs)}


def _breakpoints(*prefixes: np.ndarray) -> np.ndarray:
    fr = [np.mod(m, 1.0) for m in prefixes]
    b = np.unique(np.concatenate([[0.0, 1.0]] + fr))
    return b[(b >= 0.0) & (b <= 1.0)]


def xi_partition(*states, k: int):
    """Intervals of ``xi`` on which every given state rounds to a fixed set.

    Returns ``(lengths, picks)`` where ``picks[s][j]`` is the index array
    chosen for state ``s`` on interval ``j``.
    """
    ms = [_prefix(as_vector(s), k) for s in states]
    b = _breakpoints(*ms)
    lengths = np.diff(b)
    keep = lengths > 0
    mids = 0.5 * (b[:-1] + b[1:])[keep]
    lengths = lengths[keep]
    picks = [[_round_prefix(m, k, float(u)) for u in mids] for m in ms]
    return lengths, picks


def decompose(x: FractionalState) -> IntegralDistribution:
    """Distribution of ``online_round(x, xi)`` for ``xi`` uniform on ``[0, 1)``.

    Examples
    --------
    >>> decompose(FractionalState([0.5, 0.3, 0.2], 1)).as_dict()
    {(0,): 0.5, (1,): 0.3, (2,): 0.2}
    """
    k = x.capacity
    lengths, (picks,) = xi_partition(x, k=k)
    acc = {}
    for length, pick in zip(lengths, picks):
        key = tuple(int(i) for i in pick)
        acc[key] = acc.get(key, 0.0) + float(length)
    keys = sorted(acc)
    probs = np.array([acc[c] for c in keys])
    return IntegralDistribution([IntegralState(c) for c in keys], probs / probs.sum())


def expected_coupled_cost(x_t, x_next, batch: RequestBatch, catalog: Catalog,
                          k: Optional[int] = None) -> float:
    """Exact ``E_xi[UC(z_t, z_next)]`` when both states are rounded with the same ``xi``."""
    if k is None:
        k = x_t.capacity if isinstance(x_t, FractionalState) else int(round(np.sum(x_t)))
    lengths, (a, b) = xi_partition(x_t, x_next, k=k)
    charge = np.asarray(catalog.update_costs, dtype=float).copy()
    charge[batch.indices] = 0.0
    total = 0.0
    for length, pa, pb in zip(lengths, a, b):
        new = np.setdiff1d(pb, pa, assume_unique=True)
        total += length * float(charge[new].sum())
    return total


def expected_independent_cost(x_t, x_next, batch: RequestBatch, catalog: Catalog) -> float:
    """Exact expected update cost when the two states are rounded independently."""
    p = decompose(x_t) if isinstance(x_t, FractionalState) else x_t
    q = decompose(x_next) if isinstance(x_next, FractionalState) else x_next
    return float(p.probs @ cost_matrix(p, q, batch, catalog) @ q.probs)


def cost_matrix(p: IntegralDistribution, q: IntegralDistribution, batch: RequestBatch,
                catalog: Catalog) -> np.ndarray:
    n = catalog.n_files
    A = np.array([z.lift(n) for z in p.support])
    B = np.array([z.lift(n) for z in q.support])
    charge = np.asarray(catalog.update_costs, dtype=float).copy()
    charge[batch.indices] = 0.0
    # fetched files: in the new set but not the old one
    return (B * charge) @ np.ones(n) - A @ (B * charge).T


@dataclass
class TransportPlan:
    """Flows between the supports of two integral distributions."""

    flows: np.ndarray
    cost: float
    source: IntegralDistribution
    target: IntegralDistribution

    def conditional(self, i: int) -> np.ndarray:
        row = np.maximum(self.flows[i], 0.0)
        return row / row.sum()


def optimal_coupling(p: IntegralDistribution, q: IntegralDistribution, batch: RequestBatch,
                     catalog: Catalog) -> TransportPlan:
    """Min-cost transport plan between ``p`` and ``q`` under the update cost.

    Solved exactly as a linear program (HiGHS simplex).
    """
    if abs(p.probs.sum() - q.probs.sum()) > 1e-9:
        raise InvalidInputError("marginals carry different mass")
    C = cost_matrix(p, q, batch, catalog)
    a, b = p.probs, q.probs * (p.probs.sum() / q.probs.sum())
    n, m = a.size, b.size
    # row sums then column sums of the row-major flow matrix
    A_eq = sparse.vstack([sparse.kron(sparse.eye(n), np.ones((1, m))),
                          sparse.kron(np.ones((1, n)), sparse.eye(m))], format="csr")
    res = linprog(C.ravel(), A_eq=A_eq[:-1], b_eq=np.concatenate((a, b))[:-1],
                  bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise NumericFailureError(f"transport LP failed: {res.message}")
    F = np.maximum(res.x.reshape(n, m), 0.0)
    return TransportPlan(F, float(np.sum(F * C)), p, q)


def coupled_plan(p_x: FractionalState, q_x: FractionalState, batch: RequestBatch,
                 catalog: Catalog) -> TransportPlan:
    """Transport plan induced by rounding both states with a shared ``xi``."""
    p, q = decompose(p_x), decompose(q_x)
    k = p_x.capacity
    lengths, (a, b) = xi_partition(p_x, q_x, k=k)
    pi = {z.cached: i for i, z in enumerate(p.support)}
    qi = {z.cached: j for j, z in enumerate(q.support)}
    F = np.zeros((len(p.support), len(q.support)))
    for length, pa, pb in zip(lengths, a, b):
        F[pi[tuple(int(v) for v in pa)], qi[tuple(int(v) for v in pb)]] += length
    C = cost_matrix(p, q, batch, catalog)
    return TransportPlan(F, float(np.sum(F * C)), p, q)


# ---------------------------------------------------------- online schemes


class RoundingScheme:
    """Turns a stream of fractional states into integral ones, online."""

    name = "rounding"

    def __init__(self, k: int, seed: int = 0):
        self.k = int(k)
        self.rng = np.random.default_rng(seed)

    def _draw(self) -> float:
        # uniform on (0, 1]
        return 1.0 - self.rng.random()

    def round(self, x: np.ndarray, batch_prev: Optional[RequestBatch] = None) -> IntegralState:
        raise NotImplementedError


class IndependentRounding(RoundingScheme):
    name = "independent"

    def round(self, x, batch_prev=None):
        return online_round(x, self._draw(), self.k)


class CoupledRounding(RoundingScheme):
    name = "coupled"

    def __init__(self, k: int, seed: int = 0, xi: Optional[float] = None):
        super().__init__(k, seed)
        self.xi = self._draw() if xi is None else float(xi)

    def round(self, x, batch_prev=None):
        return online_round(x, self.xi, self.k)


class OptimalCoupledRounding(RoundingScheme):
    """Samples the next state from the min-cost plan, conditioned on the current one."""

    name = "optimal"

    def __init__(self, k: int, catalog: Catalog, seed: int = 0):
        super().__init__(k, seed)
        self.catalog = catalog
        self._dist = None
        self._idx = None
        self.last_plan_cost = 0.0

    def round(self, x, batch_prev=None):
        dist = decompose(FractionalState(x, self.k))
        if self._dist is None or batch_prev is None:
            self._idx = int(self.rng.choice(len(dist.support), p=dist.probs))
            self.last_plan_cost = 0.0
        else:
            plan = optimal_coupling(self._dist, dist, batch_prev, self.catalog)
            self._idx = int(self.rng.choice(len(dist.support), p=plan.conditional(self._idx)))
            self.last_plan_cost = plan.cost
        self._dist = dist
        return dist.support[self._idx]


def independent_scheme(states: Sequence, k: int, rng: np.random.Generator) -> List[IntegralState]:
    """Round each state with a fresh uniform offset."""
    return [online_round(x, 1.0 - rng.random(), k) for x in states]


def coupled_scheme(states: Sequence, k: int, xi: float) -> List[IntegralState]:
    """Round every state with the same offset ``xi``."""
    return [online_round(x, xi, k) for x in states]


def make_scheme(name: str, k: int, catalog: Catalog, seed: int = 0) -> RoundingScheme:
    if name == "independent":
        return IndependentRounding(k, seed)
    if name == "coupled":
        return CoupledRounding(k, seed)
    if name in ("optimal", "optimally-coupled"):
        return OptimalCoupledRounding(k, catalog, seed)
    raise InvalidInputError(f"unknown rounding scheme {name!r}")
