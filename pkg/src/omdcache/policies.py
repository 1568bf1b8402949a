"""Online mirror descent over the capped simplex, and follow-the-leader.

An OMD step maps the state to the dual space, takes a gradient step on the
(linear) service cost there, maps back and projects. The cost gradient is
``-(w_i r_i)``, so the dual step always *raises* requested coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import projections as pj
from .core import (Catalog, FractionalState, InvalidInputError, RequestBatch,
                   top_k)


@dataclass(frozen=True)
class MirrorMapKind:
    """Which potential drives the update.

    ``variant`` is one of ``"euclidean"``, ``"qnorm"``, ``"negentropy"`` or
    ``"negentropy_delta"``; ``q`` and ``delta`` are used by the last three as
    relevant.
    """

    variant: str
    q: Optional[float] = None
    delta: Optional[float] = None

    def __post_init__(self):
        if self.variant not in ("euclidean", "qnorm", "negentropy", "negentropy_delta"):
            raise InvalidInputError(f"unknown mirror map {self.variant!r}")
        if self.variant == "qnorm" and not (self.q is not None and 1.0 < self.q < 2.0):
            raise InvalidInputError("q-norm map needs 1 < q < 2")
        if self.variant == "negentropy_delta" and not (self.delta is not None and self.delta > 0):
            raise InvalidInputError("delta-interior map needs delta > 0")

    @classmethod
    def euclidean(cls):
        return cls("euclidean")

    @classmethod
    def qnorm(cls, q: float):
        return cls("qnorm", q=float(q))

    @classmethod
    def negentropy(cls):
        return cls("negentropy")

    @classmethod
    def negentropy_delta(cls, delta: float = 1e-4):
        return cls("negentropy_delta", delta=float(delta))

    def check(self, n: int, k: int):
        if self.variant == "negentropy_delta" and self.delta * n >= k:
            raise pj.InfeasibleDeltaError(f"delta={self.delta} needs delta*N < k (N={n}, k={k})")

    @property
    def label(self) -> str:
        if self.variant == "qnorm":
            return f"omd-q{self.q:g}"
        return {"euclidean": "ogd", "negentropy": "omd-ne", "negentropy_delta": "omd-ne-delta"}[self.variant]


def theory_learning_rate(mmap: MirrorMapKind, N: int, k: int, R: int, h: int, T: int,
                         w_inf: float) -> float:
    """Learning rate that minimizes the regret bound of the given map.

    Euclidean: ``sqrt(k (1 - k/N) / (w^2 h R T))``.
    q-norm:    ``sqrt((q-1) k^2 (k^(-2/p) - N^(-2/p)) / (w^2 h^2 (R/h)^(2/p) T))``.
    Neg-entropy: ``sqrt(2 log(N/k) / (w^2 h^2 T))``.
    """
    if T < 1 or k < 1 or N < 1 or R < 1 or h < 1 or w_inf <= 0:
        raise InvalidInputError("T, k, N, R, h must be >= 1 and w_inf > 0")
    if N <= k:
        raise InvalidInputError("learning rate undefined for N <= k (every file fits)")
    if mmap.variant == "euclidean" or (mmap.variant == "qnorm" and mmap.q == 2.0):
        return math.sqrt(k * (1.0 - k / N) / (w_inf ** 2 * h * R * T))
    if mmap.variant == "qnorm":
        q = mmap.q
        p = q / (q - 1.0)
        num = (q - 1.0) * k ** 2 * (k ** (-2.0 / p) - N ** (-2.0 / p))
        den = w_inf ** 2 * h ** 2 * (R / h) ** (2.0 / p) * T
        return math.sqrt(num / den)
    return math.sqrt(2.0 * math.log(N / k) / (w_inf ** 2 * h ** 2 * T))


@dataclass(frozen=True)
class LearningSchedule:
    """Step-size rule.

    ``fixed``: constant ``eta``. ``theory``: :func:`theory_learning_rate` for
    the run's horizon. ``diminishing``: ``eta0 / t**decay`` where ``eta0``
    defaults to the theory rate at ``T = 1``.
    """

    variant: str = "theory"
    eta: Optional[float] = None
    decay: float = 0.5

    def __post_init__(self):
        if self.variant not in ("fixed", "theory", "diminishing"):
            raise InvalidInputError(f"unknown schedule {self.variant!r}")
        if self.variant == "fixed" and not (self.eta is not None and self.eta > 0):
            raise InvalidInputError("fixed schedule needs eta > 0")
        if self.eta is not None and self.eta <= 0:
            raise InvalidInputError("learning rates must be positive")

    @classmethod
    def fixed(cls, eta: float):
        return cls("fixed", eta=float(eta))

    @classmethod
    def theory(cls):
        return cls("theory")

    @classmethod
    def diminishing(cls, eta0: Optional[float] = None, decay: float = 0.5):
        return cls("diminishing", eta=eta0, decay=decay)

    def base_rate(self, mmap, N, k, R, h, T, w_inf) -> float:
        if self.variant == "fixed":
            return self.eta
        if self.variant == "theory":
            return theory_learning_rate(mmap, N, k, R, h, T, w_inf)
        return self.eta if self.eta is not None else theory_learning_rate(mmap, N, k, R, h, 1, w_inf)

    def rate(self, base: float, t: int) -> float:
        """Rate at (1-based) slot ``t`` given ``base`` from :meth:`base_rate`."""
        if self.variant == "diminishing":
            return base / t ** self.decay
        return base


def initial_state(N: int, k: int, mmap: Optional[MirrorMapKind] = None) -> FractionalState:
    """Uniform allocation ``k/N``, the minimizer of every supported potential."""
    if not (1 <= k <= N):
        raise InvalidInputError(f"need 1 <= k <= N, got k={k}, N={N}")
    if mmap is not None:
        mmap.check(N, k)
    return FractionalState(np.full(N, k / N), k)


def _step_vector(x: np.ndarray, k: int, idx: np.ndarray, g: np.ndarray, mmap: MirrorMapKind,
                 eta: float) -> np.ndarray:
    """One OMD step on a dense vector; ``g`` holds ``w_i r_i`` on ``idx``."""
    if eta == 0:
        return x.copy()
    v = mmap.variant
    if v == "euclidean":
        y = x.copy()
        y[idx] += eta * g
        if idx.size == 1:
            out, _ = pj._euclid_single(y, k, int(idx[0]), floor=0.0)
        else:
            out, _ = pj._euclid_finalize(y, k, pj._euclid_lambda(y, k), floor=0.0)
        return out
    if v == "qnorm":
        theta = pj.qnorm_dual_map(x, mmap.q)
        theta[idx] += eta * g
        return pj._qnorm_solve_dual(theta, k, mmap.q)
    y = x.copy()
    y[idx] *= np.exp(eta * g)
    if v == "negentropy":
        out, _, _ = pj._ne_eager(y, k, shrink_only=True)
        return out
    return pj.negentropy_project_delta(y, k, mmap.delta).fractions


def omd_step(state: FractionalState, batch: RequestBatch, catalog: Catalog, mmap: MirrorMapKind,
             eta: float) -> FractionalState:
    """One mirror-descent update of ``state`` after serving ``batch``.

    Examples
    --------
    >>> from omdcache.core import Catalog, RequestBatch
    >>> x0 = FractionalState([0.5, 0.5], 1)
    >>> omd_step(x0, RequestBatch.single(0), Catalog.uniform(2), MirrorMapKind.euclidean(), 0.2).fractions
    array([0.6, 0.4])
    """
    if eta < 0:
        raise InvalidInputError("eta must be non-negative")
    if state.n_files != catalog.n_files:
        raise InvalidInputError("state and catalog sizes differ")
    idx = batch.indices
    g = catalog.service_costs[idx] * batch.counts
    out = _step_vector(state.fractions, state.capacity, idx, g, mmap, eta)
    return FractionalState(out, state.capacity)


def ftl_step(history, k: int) -> FractionalState:
    """Cache the ``k`` files with the largest aggregate weighted requests."""
    h = np.asarray(history, dtype=float)
    x = np.zeros(h.size)
    x[top_k(h, k)] = 1.0
    return FractionalState(x, k)


# ------------------------------------------------------------ policy objects


class FractionalPolicy:
    """Base for policies whose decision is a point of the capped simplex.

    Subclasses expose ``state()`` (the dense ``x_t``) and ``step(batch)``
    which moves to ``x_{t+1}`` after the batch was served.
    """

    name = "policy"
    integral = False

    def state(self) -> np.ndarray:
        raise NotImplementedError

    def step(self, batch: RequestBatch) -> None:
        raise NotImplementedError

    def set_state(self, x) -> None:
        raise NotImplementedError


class OMDPolicy(FractionalPolicy):
    """Mirror descent with any supported map.

    Parameters
    ----------
    catalog, k
        Problem instance.
    mmap
        Mirror map.
    schedule
        Step-size rule; ``theory`` needs ``R``, ``h`` and ``horizon``.
    lazy
        For the neg-entropy map, keep the lazily scaled representation so each
        step only touches the requested entries and the top-``k`` list.
    """

    def __init__(self, catalog: Catalog, k: int, mmap: MirrorMapKind,
                 schedule: LearningSchedule = LearningSchedule.theory(), R: int = 1, h: int = 1,
                 horizon: int = 1, lazy: bool = True, name: Optional[str] = None):
        self.catalog = catalog
        self.k = int(k)
        self.mmap = mmap
        self.schedule = schedule
        self.R, self.h = R, h
        self.name = name or mmap.label
        self.t = 0
        self.lazy = lazy and mmap.variant == "negentropy"
        self.set_horizon(horizon)
        self.set_state(initial_state(catalog.n_files, self.k, mmap).fractions)

    def set_horizon(self, horizon: int):
        self.horizon = int(horizon)
        self.base_eta = self.schedule.base_rate(self.mmap, self.catalog.n_files, self.k, self.R,
                                                self.h, self.horizon, self.catalog.w_inf)

    def set_state(self, x) -> None:
        x = np.array(x, dtype=float)
        if self.lazy:
            self._vec = pj.NegEntropyScaledVector(x, self.k)
        self._x = x

    def state(self) -> np.ndarray:
        return self._x

    @property
    def eta(self) -> float:
        return self.schedule.rate(self.base_eta, max(self.t, 1))

    def step(self, batch: RequestBatch) -> None:
        self.t += 1
        eta = self.schedule.rate(self.base_eta, self.t)
        idx = batch.indices
        g = self.catalog.service_costs[idx] * batch.counts
        if self.lazy:
            self._vec.multiply(idx, np.exp(eta * g))
            st, _ = pj.negentropy_project(self._vec, self.k, shrink_only=True)
            self._x = st.fractions
        else:
            self._x = _step_vector(self._x, self.k, idx, g, self.mmap, eta)


class FTLPolicy(FractionalPolicy):
    """Follow the leader: cache the top-``k`` files of the aggregate so far."""

    name = "ftl"
    integral = True

    def __init__(self, catalog: Catalog, k: int):
        self.catalog = catalog
        self.k = int(k)
        self.history = np.zeros(catalog.n_files)
        self._x = ftl_step(self.history, self.k).fractions

    def state(self) -> np.ndarray:
        return self._x

    def set_state(self, x) -> None:
        self._x = np.array(x, dtype=float)

    def step(self, batch: RequestBatch) -> None:
        np.add.at(self.history, batch.indices, self.catalog.service_costs[batch.indices] * batch.counts)
        self._x = ftl_step(self.history, self.k).fractions
