"""Closed-form regret upper bounds and the choice of mirror map they imply."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import InvalidInputError

#: stands for the q -> 1 limit (neg-entropy bound) wherever a q is accepted
Q_LIMIT = "limit"

OGD_OPTIMAL = "OGD-optimal"
NE_OPTIMAL = "NE-optimal"
NUMERIC = "numeric"


@dataclass(frozen=True)
class BoundInputs:
    """Instance parameters entering the bounds (``w_inf`` is the largest service cost)."""

    N: int
    k: int
    R: int
    h: int
    T: int
    w_inf: float = 1.0

    def __post_init__(self):
        if not (self.N > self.k >= 1):
            raise InvalidInputError("need N > k >= 1")
        if not (self.R >= self.h >= 1):
            raise InvalidInputError("need R >= h >= 1")
        if self.R / self.h > self.N:
            raise InvalidInputError("diversity ratio R/h cannot exceed N")
        if self.T < 1 or self.w_inf <= 0:
            raise InvalidInputError("need T >= 1 and w_inf > 0")

    @property
    def diversity(self) -> float:
        return self.R / self.h


def regret_ub(q: Union[float, str], b: BoundInputs) -> float:
    """Regret upper bound of q-norm mirror descent with its tuned learning rate.

    For ``q`` in (1, 2]::

        w h k (R/h)^(1/p) sqrt((k^(-2/p) - N^(-2/p)) T / (q - 1)),   1/p = 1 - 1/q

    and for ``q = Q_LIMIT`` (or exactly 1) the neg-entropy limit
    ``w h k sqrt(2 log(N/k) T)``.
    """
    if q == Q_LIMIT or (not isinstance(q, str) and q == 1.0):
        return b.w_inf * b.h * b.k * math.sqrt(2.0 * math.log(b.N / b.k) * b.T)
    if isinstance(q, str) or not (1.0 < q <= 2.0):
        raise InvalidInputError(f"q must lie in (1, 2] or be the limit symbol, got {q!r}")
    inv_p = (q - 1.0) / q
    a = 2.0 * inv_p
    # k^-a - N^-a without cancellation when a is small or k close to N
    gap = -(b.k ** -a) * math.expm1(-a * math.log1p((b.N - b.k) / b.k))
    return b.w_inf * b.h * b.k * b.diversity ** inv_p * math.sqrt(gap * b.T / (q - 1.0))


def classic_bound(b: BoundInputs) -> float:
    """Earlier gradient-descent bound for single requests: ``w sqrt(min(2k, 2(N-k)) T)``."""
    return b.w_inf * math.sqrt(min(2 * b.k, 2 * (b.N - b.k)) * b.T)


Q_GRID = np.round(np.arange(1001, 2001) * 1e-3, 12)


def q_star(b: BoundInputs) -> float:
    """Bound-minimizing ``q`` over the grid 1.001..2.000 and the ``q -> 1`` limit.

    Returns 1.0 when the limit beats every grid point.
    """
    vals = np.array([regret_ub(float(q), b) for q in Q_GRID])
    j = int(np.argmin(vals))
    if regret_ub(Q_LIMIT, b) < vals[j]:
        return 1.0
    return float(Q_GRID[j])


def regime(b: BoundInputs) -> str:
    """Which map the sufficient conditions single out.

    ``R/h <= k`` favors the Euclidean map; ``R/h > 2 sqrt(N k)`` favors
    neg-entropy; in between, defer to :func:`q_star`.
    """
    d = b.diversity
    if d <= b.k:
        return OGD_OPTIMAL
    if d > 2.0 * math.sqrt(b.N * b.k):
        return NE_OPTIMAL
    return NUMERIC


def qstar_table(N: int, k: int, T: int, ratios, w_inf: float = 1.0):
    """Rows ``(R/h, q*, regime)`` with ``h = 1`` and ``R`` from ``ratios``."""
    rows = []
    for r in ratios:
        b = BoundInputs(N, k, int(r), 1, T, w_inf)
        rows.append((int(r), q_star(b), regime(b)))
    return rows
