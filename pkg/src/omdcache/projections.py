"""Projections onto the capped simplex ``{x in [0,1]^N : sum(x) = k}``.

Three geometries are covered:

* Euclidean: exact, via the breakpoints of the piecewise-linear
  ``lambda -> sum(clip(y - lambda, 0, 1))``, plus a single-coordinate fast path.
* Neg-entropy (KL): exact threshold search over the ``k`` largest entries,
  either eagerly on a dense vector or lazily on a :class:`NegEntropyScaledVector`.
* q-norm potential ``0.5 * ||x||_q^2``: nested one-dimensional root finding in
  the dual, done in log space so that ``q`` close to 1 stays usable.
"""

from __future__ import annotations

import bisect
import warnings
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from .core import FractionalState, InvalidInputError, NumericFailureError

TINY = np.finfo(float).tiny
# band used to classify entries as saturated when settling the active sets
SET_TOL = 1e-12


class ProjectionFallbackWarning(RuntimeWarning):
    """Raised when a fast path rejects its input and the general routine is used."""


class InfeasibleDeltaError(InvalidInputError):
    """The delta-interior of the capped simplex is empty (``delta * N >= k``)."""


def _check(y, k) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise InvalidInputError("expected a non-empty vector")
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("input contains non-finite values")
    if not (1 <= int(k) <= y.size):
        raise InvalidInputError(f"capacity {k} outside [1, {y.size}]")
    return y


def _state(x, k) -> FractionalState:
    return FractionalState(x, int(k))


# ---------------------------------------------------------------- Euclidean


def _clipped_sum_at(s: np.ndarray, csum: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """``sum_i clip(s_i - lam, 0, 1)`` for each entry of ``lam``; ``s`` ascending."""
    n = s.size
    lo = np.searchsorted(s, lam, side="right")  # s_i <= lam  -> 0
    hi = np.searchsorted(s, lam + 1.0, side="left")  # s_i >= lam+1 -> 1
    hi = np.maximum(hi, lo)
    mid_sum = csum[hi] - csum[lo]
    return (n - hi) + mid_sum - (hi - lo) * lam


def _euclid_finalize(y: np.ndarray, k: int, lam: float, floor: Optional[float] = None):
    # Re-derive the shift from the active sets until they settle, so callers
    # reaching the same optimum through different searches get the same floats.
    prev = None
    for _ in range(8):
        d = y - lam
        ones = d >= 1.0 - SET_TOL
        mid = ~ones & (d > SET_TOL)
        key = (ones.tobytes(), mid.tobytes())
        nm = int(np.count_nonzero(mid))
        if nm == 0:
            # the shift is only pinned to an interval; take its lower end
            zeros = ~ones
            lam = float(np.max(y[zeros])) if zeros.any() else float(np.min(y)) - 1.0
            break
        if key == prev:
            break
        prev = key
        lam = (float(np.sum(y[mid])) - (k - int(np.count_nonzero(ones)))) / nm
    if floor is not None and lam < floor:
        lam = floor
    return np.clip(y - lam, 0.0, 1.0), lam


def _euclid_lambda(y: np.ndarray, k: int) -> float:
    n = y.size
    if k == n:
        return float(np.min(y)) - 1.0
    s = np.sort(y)
    csum = np.concatenate(([0.0], np.cumsum(s)))
    bps = np.unique(np.concatenate((s - 1.0, s)))
    g = _clipped_sum_at(s, csum, bps)  # non-increasing in bps
    # first breakpoint where g <= k
    j = int(np.searchsorted(-g, -float(k), side="left"))
    if j == 0:
        return float(bps[0])
    if j >= bps.size:
        return float(bps[-1])
    g0, g1 = g[j - 1], g[j]
    if g0 == g1:
        return float(bps[j])
    t = (g0 - k) / (g0 - g1)
    return float(bps[j - 1] + t * (bps[j] - bps[j - 1]))


def euclid_project(y, k: int) -> FractionalState:
    """Euclidean projection onto the capped simplex.

    Returns ``clip(y - lam, 0, 1)`` where ``lam`` is found exactly by scanning
    the sorted breakpoints of the clipped sum.

    Examples
    --------
    >>> euclid_project([1.5, 0.9, 0.3], 2).fractions
    array([1. , 0.8, 0.2])
    """
    y = _check(y, k)
    x, _ = _euclid_finalize(y, int(k), _euclid_lambda(y, int(k)))
    return _state(x, k)


def _shift_root(z: np.ndarray, target: float) -> float:
    """Solve ``sum(max(0, z - lam)) = target`` (target > 0).

    Active-set iteration: the shift computed from the current active set only
    grows, and entries at or below it are dropped until none are. Each pass is
    linear and a handful of passes suffice in practice.
    """
    active = z
    while True:
        lam = (float(active.sum()) - target) / active.size
        keep = active > lam
        if keep.all():
            return lam
        active = active[keep]


def euclid_project_single(y, k: int, touched: int) -> FractionalState:
    """Euclidean projection when ``y`` is a feasible state with one raised entry.

    Untouched entries can only move down to zero and the touched one can only
    saturate at 1, so the shift is the root of an uncapped thresholding problem
    in one of two cases. Falls back to :func:`euclid_project` with a
    :class:`ProjectionFallbackWarning` if the precondition does not hold.
    """
    y = _check(y, k)
    x, _ = _euclid_single(y, int(k), int(touched))
    return _state(x, k)


def _euclid_single(y: np.ndarray, k: int, j: int, floor: Optional[float] = None):
    n = y.size
    if not 0 <= j < n:
        raise InvalidInputError("touched index outside vector")
    others = np.delete(y, j)
    rest = float(others.sum())
    eps = 1e-9 * max(k, 1)
    ok = (
        others.size == 0
        or (others.min() >= -eps and others.max() <= 1 + eps and k - 1 - eps <= rest <= k + eps
            and y[j] >= k - rest - eps)
    )
    if not ok:
        warnings.warn("single-coordinate precondition violated; using general projection",
                      ProjectionFallbackWarning, stacklevel=3)
        return _euclid_finalize(y, k, _euclid_lambda(y, k), floor)
    if k == n:
        return _euclid_finalize(y, k, float(np.min(y)) - 1.0, floor)
    # touched entry saturated at 1: the others carry k - 1
    if k - 1 > 0:
        lam = _shift_root(others, k - 1.0) if rest > k - 1.0 else 0.0
    else:
        lam = max(float(others.max()), 0.0)
    if y[j] - lam < 1.0:
        lam = _shift_root(y, float(k))
    return _euclid_finalize(y, k, lam, floor)


# -------------------------------------------------------------- neg-entropy


def _ne_threshold(top: np.ndarray, rest: np.ndarray, k: int) -> Tuple[int, float]:
    """Number of capped entries ``c`` and multiplier ``m`` for the KL projection.

    ``top`` holds the ``k`` largest values in descending order and ``rest[c]``
    the sum of all values except the ``c`` largest.
    """
    c = np.arange(k)
    m = (k - c) / rest[:k]
    uncapped = top[:k] * m < 1.0
    capped_prev = np.ones(k, dtype=bool)
    capped_prev[1:] = top[: k - 1] * m[1:] >= 1.0
    good = np.flatnonzero(uncapped & capped_prev)
    if good.size == 0:
        # rounding at an exact tie; take the least violating candidate
        viol = np.maximum(top[:k] * m - 1.0, 0.0)
        viol[1:] += np.maximum(1.0 - top[: k - 1] * m[1:], 0.0)
        cc = int(np.argmin(viol))
        if viol[cc] > 1e-9:
            raise NumericFailureError("no valid neg-entropy threshold; input invariant broken")
        return cc, float(m[cc])
    cc = int(good[0])
    return cc, float(m[cc])


def negentropy_project_dense(y, k: int) -> FractionalState:
    """Neg-entropy (KL) projection of a positive vector onto the capped simplex.

    The result is ``min(1, m * y)`` with the multiplier ``m`` chosen so the sum
    is ``k``; only the ``k`` largest entries can saturate.

    Examples
    --------
    >>> negentropy_project_dense([0.4, 0.8, 1.8], 2).fractions
    array([0.33333333, 0.66666667, 1.        ])
    """
    y = _check(y, k)
    x, _, _ = _ne_eager(y, int(k))
    return _state(x, k)


def _ne_eager(y: np.ndarray, k: int, shrink_only: bool = False):
    if np.any(y <= 0):
        raise InvalidInputError("neg-entropy projection needs strictly positive entries")
    n = y.size
    if k == n:
        return np.ones(n), n, 1.0
    part = np.argpartition(-y, k - 1)[:k]
    order = part[np.argsort(-y[part], kind="stable")]
    top = y[order]
    mask = np.ones(n, dtype=bool)
    mask[order] = False
    bottom = float(np.sum(y[mask]))
    # rest[c] = bottom + sum(top[c:]), summed from the small end
    suffix = np.concatenate((np.cumsum(top[::-1])[::-1], [0.0]))
    rest = bottom + suffix
    c, m = _ne_threshold(top, rest, k)
    if shrink_only and m > 1.0:
        m = 1.0
    x = np.clip(y * m, TINY, 1.0)
    x[order[:c]] = 1.0
    return x, c, m


class NegEntropyScaledVector:
    """Lazily scaled positive vector for repeated neg-entropy projections.

    The effective vector is ``raw * scale``. A projection rescales every
    uncapped entry by the same factor, which only touches ``scale``; capped
    entries are written back so that their effective value is 1. The indices
    of the ``k`` largest entries are kept in ``topk_order`` (descending).
    """

    RENORM_LOW = 1e-150
    RENORM_HIGH = 1e150

    def __init__(self, values, k: int):
        v = _check(values, k)
        if np.any(v <= 0):
            raise InvalidInputError("entries must be strictly positive")
        self.raw = v.copy()
        self.scale = 1.0
        self.k = int(k)
        self._raw_sum = float(v.sum())
        self._since_resum = 0
        self._rebuild_topk()

    @classmethod
    def from_state(cls, state: FractionalState) -> "NegEntropyScaledVector":
        return cls(state.fractions, state.capacity)

    def _rebuild_topk(self):
        k = self.k
        part = np.argpartition(-self.raw, k - 1)[:k]
        order = part[np.argsort(-self.raw[part], kind="stable")]
        self.topk_order = [int(i) for i in order]
        self._topk_neg = [-float(self.raw[i]) for i in self.topk_order]

    @property
    def n(self) -> int:
        return self.raw.size

    def effective(self) -> np.ndarray:
        return self.raw * self.scale

    def norm1(self) -> float:
        return self._raw_sum * self.scale

    def resum(self):
        self._raw_sum = float(self.raw.sum())
        self._since_resum = 0

    def multiply(self, idx, factors):
        """Multiply selected entries by factors >= 1 (a gradient step)."""
        idx = np.asarray(idx, dtype=np.int64)
        factors = np.asarray(factors, dtype=float)
        old = self.raw[idx]
        new = old * factors
        self.raw[idx] = new
        self._raw_sum += float(np.sum(new - old))
        if idx.size > max(self.k, 8):
            self._rebuild_topk()
        else:
            for i in idx:
                self._raise_entry(int(i))

    def _raise_entry(self, i: int):
        val = -float(self.raw[i])
        if i in self.topk_order:
            pos = self.topk_order.index(i)
            del self.topk_order[pos]
            del self._topk_neg[pos]
        elif len(self.topk_order) == self.k and val >= self._topk_neg[-1]:
            return
        pos = bisect.bisect_right(self._topk_neg, val)
        self.topk_order.insert(pos, i)
        self._topk_neg.insert(pos, val)
        if len(self.topk_order) > self.k:
            self.topk_order.pop()
            self._topk_neg.pop()

    def check_topk(self) -> bool:
        """Compare the maintained order with a full sort (ties allowed)."""
        vals = np.sort(self.raw)[::-1][: self.k]
        return np.array_equal(self.raw[self.topk_order], vals)

    def renormalize(self):
        self.raw = np.maximum(self.raw * self.scale, TINY)
        self.scale = 1.0
        self.resum()
        self._topk_neg = [-float(self.raw[i]) for i in self.topk_order]

    def materialize(self) -> np.ndarray:
        return np.minimum(self.raw * self.scale, 1.0)


def negentropy_project(y: NegEntropyScaledVector, k: int, norm1: Optional[float] = None,
                       shrink_only: bool = False) -> Tuple[FractionalState, NegEntropyScaledVector]:
    """Neg-entropy projection on the lazy representation, updated in place.

    Work is ``O(k)`` apart from the (amortized) bookkeeping: the threshold is
    searched over ``topk_order`` only and uncapped entries are rescaled through
    ``y.scale``. ``norm1`` defaults to the tracked ``||raw||_1 * scale``.

    ``shrink_only`` caps the multiplier at 1. In exact arithmetic this never
    binds after a step that only raised entries; it stops rounding noise from
    nudging untouched entries upward.

    Returns the materialized state and ``y`` itself.
    """
    if not isinstance(y, NegEntropyScaledVector):
        y = NegEntropyScaledVector(y, k)
    if k != y.k:
        raise InvalidInputError("capacity does not match the scaled vector")
    n = y.n
    if k == n:
        y.raw[:] = 1.0
        y.scale = 1.0
        y.resum()
        return _state(np.ones(n), k), y
    y._since_resum += 1
    if y._since_resum >= n:
        y.resum()
    P = y.scale
    order = np.asarray(y.topk_order, dtype=np.int64)
    top_raw = y.raw[order]
    raw_sum = y._raw_sum if norm1 is None else norm1 / P
    prefix = np.concatenate(([0.0], np.cumsum(top_raw)))
    rest_raw = raw_sum - prefix
    if np.any(rest_raw[:k] <= 0) or rest_raw[k - 1] < 1e-6 * raw_sum:
        # cancellation risk: recompute the tail sum exactly
        y.resum()
        mask = np.ones(n, dtype=bool)
        mask[order] = False
        bottom = float(np.sum(y.raw[mask]))
        rest_raw = bottom + np.concatenate((np.cumsum(top_raw[::-1])[::-1], [0.0]))
    c, m = _ne_threshold(top_raw * P, rest_raw * P, k)
    if shrink_only and m > 1.0:
        m = 1.0
    newP = P * m
    capped = order[:c]
    if c:
        old = y.raw[capped]
        y.raw[capped] = 1.0 / newP
        y._raw_sum += float(np.sum(y.raw[capped] - old))
        for pos in range(c):
            y._topk_neg[pos] = -float(y.raw[capped[pos]])
    y.scale = newP
    if newP < y.RENORM_LOW or newP > y.RENORM_HIGH:
        y.renormalize()
    x = y.raw * y.scale
    if c:
        x[capped] = 1.0
    # positivity survives underflow at the smallest normal float
    np.clip(x, TINY, 1.0, out=x)
    return _state(x, k), y


def negentropy_project_lazy(vec: NegEntropyScaledVector, k: int, norm1: Optional[float] = None):
    """Alias of :func:`negentropy_project` kept for symmetry with the dense form."""
    return negentropy_project(vec, k, norm1)


def _scaled_clip_multiplier(y: np.ndarray, k: int, lo: float, hi: float = 1.0) -> float:
    """Find ``m > 0`` with ``sum(clip(m * y, lo, hi)) = k`` (``y > 0`` ascending-agnostic)."""
    s = np.sort(y)
    n = s.size
    csum = np.concatenate(([0.0], np.cumsum(s)))

    def g(m):
        m = np.atleast_1d(m)
        a = np.searchsorted(s, lo / m, side="right")  # m*s_i <= lo
        b = np.searchsorted(s, hi / m, side="left")  # m*s_i >= hi
        b = np.maximum(a, b)
        return lo * a + (n - b) + m * (csum[b] - csum[a])

    bps = np.unique(np.concatenate((lo / s, hi / s)))
    gv = g(bps)
    j = int(np.searchsorted(gv, float(k), side="left"))
    if j == 0:
        return float(bps[0])
    if j >= bps.size:
        return float(bps[-1])
    g0, g1 = gv[j - 1], gv[j]
    if g1 == g0:
        return float(bps[j])
    return float(bps[j - 1] + (k - g0) / (g1 - g0) * (bps[j] - bps[j - 1]))


def negentropy_project_delta(y, k: int, delta: float, exact: bool = False) -> FractionalState:
    """Neg-entropy projection followed by clamping into ``[delta, 1]``.

    The plain projection is computed first; entries below ``delta`` are then
    raised to ``delta`` and the free entries (strictly between the bounds)
    are rescaled to restore the sum, repeating until no new entry drops
    below ``delta``. Entries capped at 1 stay there, so this is close to but
    not the exact KL projection onto the box. ``exact=True`` returns that
    projection instead, ``clip(m * y, delta, 1)``; it is also the fallback
    when rescaling runs out of free entries.
    """
    if isinstance(y, NegEntropyScaledVector):
        y = y.effective()
    y = _check(y, k)
    n = y.size
    if not (0 < delta) or delta * n >= k:
        raise InfeasibleDeltaError(f"delta={delta} infeasible for N={n}, k={k}")
    if np.any(y <= 0):
        raise InvalidInputError("neg-entropy projection needs strictly positive entries")
    if k == n:
        return _state(np.ones(n), k)
    if not exact:
        w, _, _ = _ne_eager(y, int(k))
        low = np.zeros(n, dtype=bool)
        for _ in range(n + 1):
            new_low = w <= delta
            if not np.any(new_low & ~low):
                return _state(w, k)
            low |= new_low
            w[low] = delta
            free = ~low & (w < 1.0)
            fs = float(np.sum(w[free]))
            if fs <= 0:
                break
            w[free] *= (k - delta * np.count_nonzero(low) - np.count_nonzero(w >= 1.0)) / fs
    return _negentropy_delta_exact(y, int(k), float(delta))


def _negentropy_delta_exact(y: np.ndarray, k: int, delta: float) -> FractionalState:
    m = _scaled_clip_multiplier(y, k, delta)
    for _ in range(2):
        z = m * y
        low = z <= delta
        high = z >= 1.0
        mid = ~(low | high)
        ms = float(np.sum(y[mid]))
        if ms <= 0:
            break
        m = (k - delta * np.count_nonzero(low) - np.count_nonzero(high)) / ms
    return _state(np.clip(m * y, delta, 1.0), k)


# ------------------------------------------------------------------ q-norm


def qnorm_dual_map(x, q: float) -> np.ndarray:
    """Gradient of ``0.5 * ||x||_q^2``: ``sign(x)|x|^(q-1) / ||x||_q^(q-2)``."""
    x = np.asarray(x, dtype=float)
    nrm = np.linalg.norm(x, ord=q)
    if nrm == 0:
        return np.zeros_like(x)
    return np.sign(x) * np.abs(x) ** (q - 1.0) * nrm ** (2.0 - q)


def qnorm_primal_map(theta, q: float) -> np.ndarray:
    """Inverse of :func:`qnorm_dual_map`, i.e. the same map with the conjugate exponent."""
    p = q / (q - 1.0)
    return qnorm_dual_map(theta, p)


def _qnorm_solve_dual(theta: np.ndarray, k: int, q: float, tol: float = 1e-12):
    """Minimize ``0.5*||x||_q^2 - <theta, x>`` over the capped simplex.

    KKT form: ``x_i = min(1, ((theta_i - lam)_+ / s)^(1/(q-1)))`` with
    ``s = ||x||_q^(2-q)``. Inner root in ``lam`` for the sum, outer root in
    ``s`` for self-consistency; exponents are taken in log space.
    """
    n = theta.size
    if k == n:
        return np.ones(n)
    e = 1.0 / (q - 1.0)

    def x_of(lam, log_s):
        d = theta - lam
        out = np.zeros(n)
        pos = d > 0
        lx = (np.log(d[pos]) - log_s) * e
        out[pos] = np.exp(np.minimum(lx, 0.0))
        return out

    def lam_for(log_s):
        s = np.exp(log_s)
        lo = float(theta.min()) - s  # every entry saturated: sum = n > k
        hi = float(theta.max())  # every entry zero: sum = 0 < k
        f = lambda lam: float(np.sum(x_of(lam, log_s))) - k
        if f(hi) == 0.0:
            return hi
        return brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)

    def F(log_s):
        x = x_of(lam_for(log_s), log_s)
        return (2.0 - q) * np.log(np.linalg.norm(x, ord=q)) - log_s

    lo_s = (2.0 - q) * (np.log(k) + (1.0 / q - 1.0) * np.log(n))
    hi_s = (2.0 - q) / q * np.log(k)
    f_lo, f_hi = F(lo_s), F(hi_s)
    if f_lo == 0.0:
        log_s = lo_s
    elif f_hi == 0.0:
        log_s = hi_s
    elif f_lo * f_hi > 0:
        # bracket is exact in theory; widen slightly against rounding
        lo_s -= 1e-9
        hi_s += 1e-9
        log_s = brentq(F, lo_s, hi_s, xtol=1e-15, maxiter=500)
    else:
        log_s = brentq(F, lo_s, hi_s, xtol=1e-15, maxiter=500)
    x = x_of(lam_for(log_s), log_s)
    resid = abs(x.sum() - k)
    if resid > tol * max(k, 1) * 1e3:
        raise NumericFailureError(f"q-norm projection did not converge (residual {resid:.3e})")
    return x


def qnorm_project_numeric(y, k: int, q: float) -> FractionalState:
    """Bregman projection for the potential ``0.5 * ||x||_q^2``, ``1 < q < 2``.

    Raises
    ------
    NumericFailureError
        If the root finders fail to meet the sum constraint.
    """
    y = _check(y, k)
    if not (1.0 < q < 2.0):
        raise InvalidInputError("q must lie strictly between 1 and 2")
    x = _qnorm_solve_dual(qnorm_dual_map(y, q), int(k), q)
    return _state(x, k)


# ---------------------------------------------------------- divergences


def bregman_divergence(kind: str, x, y, q: float = 2.0) -> float:
    """``D_Phi(x, y)`` for ``kind`` in {"euclid", "negentropy", "qnorm"}."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if kind == "euclid":
        return float(0.5 * np.sum((x - y) ** 2))
    if kind == "negentropy":
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(x > 0, x * np.log(x / y), 0.0)
        return float(np.sum(t - x + y))
    if kind == "qnorm":
        phi = lambda v: 0.5 * np.linalg.norm(v, ord=q) ** 2
        return float(phi(x) - phi(y) - np.dot(qnorm_dual_map(y, q), x - y))
    raise InvalidInputError(f"unknown divergence {kind!r}")
