"""Experiment orchestration, CSV output and closed-loop adversaries.

Each slot follows the online protocol: the policy's current state serves the
batch (service cost), then the policy updates and the movement between the
two states is charged as update cost.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

import numpy as np

from . import traces as tk
from .baselines import (BestDynamicPolicy, BestStaticPolicy, EvictionCache, FTPLPolicy,
                        LFUCache, LRUCache, WLFUCache)
from .core import Catalog, InvalidInputError, RequestBatch, Trace, service_cost, update_cost
from .metrics import RunRecord, curves, prefix_comparator, regret_against_static, static_comparator
from .policies import FTLPolicy, LearningSchedule, MirrorMapKind, OMDPolicy
from .rounding import (OptimalCoupledRounding, expected_coupled_cost,
                       expected_independent_cost, make_scheme)
from .core import FractionalState

POLICIES = ("ogd", "omd-ne", "omd-ne-delta", "omd-q<q>", "lru", "lfu", "w-lfu", "ftpl", "ftl",
            "best-static", "best-dynamic")


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run.

    ``trace`` is a path to a trace file or a preset name; ``trace_overrides``
    are applied to a preset. ``policy`` is one of :data:`POLICIES`, with the
    q-norm family written ``omd-q1.5``. ``schedule`` is ``theory``, ``fixed``
    or ``diminishing``. ``window`` is the W-LFU window in requests (default
    ``T * R``). ``reset`` applies the partial-change reset (default: whenever
    the trace metadata shows a change that touches only part of the catalog).
    """

    trace: str = "fixed-popularity"
    policy: str = "ogd"
    k: int = 10
    schedule: str = "theory"
    eta: Optional[float] = None
    delta: float = 1e-4
    rounding: Optional[str] = None
    seed: int = 0
    tau: int = 500
    tar_mode: str = "full"
    window: Optional[int] = None
    alpha_p: float = 1.0
    shuffle: bool = False
    reset: Optional[bool] = None
    report_every: Optional[int] = None
    w_update: float = 1.0
    output: Optional[str] = None
    trace_overrides: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.tau < 1:
            raise InvalidInputError("tau must be >= 1")
        if self.k < 1:
            raise InvalidInputError("k must be >= 1")
        if self.tar_mode not in ("full", "prefix"):
            raise InvalidInputError("tar_mode must be 'full' or 'prefix'")
        if self.schedule not in ("theory", "fixed", "diminishing"):
            raise InvalidInputError(f"unknown schedule {self.schedule!r}")
        if self.rounding not in (None, "independent", "coupled", "optimal"):
            raise InvalidInputError(f"unknown rounding scheme {self.rounding!r}")


_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key=value`` lines (``#`` comments) into a config.

    Keys are the :class:`ExperimentConfig` field names; ``trace.<param>=v``
    sets a preset override (e.g. ``trace.B=2000``).
    """
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    kw, over = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"config line {lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key.startswith("trace."):
            over[key[6:]] = _coerce_number(val)
            continue
        if key not in types:
            raise InvalidInputError(f"config line {lineno}: unknown key {key!r}")
        kw[key] = _coerce(key, val, types[key])
    if over:
        kw["trace_overrides"] = over
    return ExperimentConfig(**kw)


def _coerce_number(val: str):
    for cast in (int, float):
        try:
            return cast(val)
        except ValueError:
            pass
    return val


def _coerce(key, val, typ):
    typ = str(typ)
    if val.lower() in ("none", ""):
        return None
    try:
        if "bool" in typ:
            return _BOOL[val.lower()]
        if "int" in typ:
            return int(val)
        if "float" in typ:
            return float(val)
    except (KeyError, ValueError) as exc:
        raise InvalidInputError(f"config key {key!r}: bad value {val!r}") from exc
    return val


def load_trace(cfg: ExperimentConfig) -> Trace:
    src = cfg.trace
    if src in tk.PRESETS:
        over = dict(cfg.trace_overrides)
        over.setdefault("seed", cfg.seed)
        return tk.generate(tk.preset(src, **over))
    path = Path(src)
    if not path.exists():
        raise InvalidInputError(f"trace {src!r} is neither a preset nor a file")
    return tk.read_trace(path)


def partial_change_sets(trace: Trace):
    """``{slot: affected indices}`` for popularity changes touching part of the catalog."""
    out = {}
    meta = trace.popularity_meta or []
    for (_, prev), (start, cur) in zip(meta, meta[1:]):
        changed = np.flatnonzero(np.asarray(prev) != np.asarray(cur))
        if 0 < changed.size < trace.catalog_size:
            out[int(start)] = changed
    return out


def make_policy(cfg: ExperimentConfig, trace: Trace, catalog: Catalog, horizon: Optional[int] = None):
    name = cfg.policy
    k = cfg.k
    T = horizon or trace.horizon
    if name in ("ogd", "omd-ne", "omd-ne-delta") or name.startswith("omd-q"):
        if name == "ogd":
            mmap = MirrorMapKind.euclidean()
        elif name == "omd-ne":
            mmap = MirrorMapKind.negentropy()
        elif name == "omd-ne-delta":
            mmap = MirrorMapKind.negentropy_delta(cfg.delta)
        else:
            try:
                mmap = MirrorMapKind.qnorm(float(name[5:]))
            except ValueError as exc:
                raise InvalidInputError(f"bad q-norm policy name {name!r}") from exc
        if cfg.schedule == "fixed":
            sched = LearningSchedule.fixed(cfg.eta if cfg.eta is not None else 0.0)
        elif cfg.schedule == "diminishing":
            sched = LearningSchedule.diminishing(cfg.eta)
        else:
            sched = LearningSchedule.theory()
        return OMDPolicy(catalog, k, mmap, sched, R=trace.batch_size, h=trace.max_multiplicity,
                         horizon=T, name=name)
    if name == "lru":
        return LRUCache(catalog, k)
    if name == "lfu":
        return LFUCache(catalog, k)
    if name == "w-lfu":
        return WLFUCache(catalog, k, cfg.window or trace.horizon * trace.batch_size)
    if name == "ftpl":
        return FTPLPolicy(catalog, k, cfg.alpha_p, cfg.seed)
    if name == "ftl":
        return FTLPolicy(catalog, k)
    if name == "best-static":
        return BestStaticPolicy(trace, catalog, k)
    if name == "best-dynamic":
        return BestDynamicPolicy(trace, catalog, k)
    raise InvalidInputError(f"unknown policy {name!r}; choose from {POLICIES}")


def run_experiment(cfg: ExperimentConfig, trace: Optional[Trace] = None,
                   catalog: Optional[Catalog] = None) -> RunRecord:
    """Run one policy over one trace; writes CSV to ``cfg.output`` if set."""
    trace = trace if trace is not None else load_trace(cfg)
    if catalog is None:
        catalog = Catalog.uniform(trace.catalog_size, 1.0, cfg.w_update)
    if catalog.n_files != trace.catalog_size:
        raise InvalidInputError("catalog and trace sizes differ")
    if not (cfg.k < trace.catalog_size):
        raise InvalidInputError("k must be smaller than the catalog size")
    changes = partial_change_sets(trace)
    do_reset = bool(changes) if cfg.reset is None else cfg.reset
    horizon = None
    if do_reset and changes:
        starts = sorted(changes)
        horizon = starts[0]
    policy = make_policy(cfg, trace, catalog, horizon)
    request_level = isinstance(policy, EvictionCache)
    fractional = not request_level and not getattr(policy, "integral", False)
    if cfg.rounding and not fractional:
        raise InvalidInputError("rounding applies to fractional policies only")
    scheme = make_scheme(cfg.rounding, cfg.k, catalog, cfg.seed) if cfg.rounding else None
    shuffle_rng = np.random.default_rng(cfg.seed) if cfg.shuffle else None

    B = trace.n_batches
    service = np.empty(B)
    update = np.empty(B)
    expected_update = np.empty(B) if scheme is not None else None
    expected_service = np.empty(B) if scheme is not None else None
    x = None if request_level else policy.state().copy()
    z = scheme.round(x) if scheme is not None else None
    for t, batch in enumerate(trace.batches):
        if request_level:
            service[t] = policy.serve(batch, shuffle_rng)
            update[t] = 0.0
            continue
        if scheme is not None:
            service[t] = service_cost(batch, z, catalog)
            expected_service[t] = service_cost(batch, x, catalog)
        else:
            service[t] = service_cost(batch, x, catalog)
        policy.step(batch)
        if do_reset and fractional and (t + 1) in changes:
            aff = changes[t + 1]
            nxt = policy.state().copy()
            nxt[aff] = nxt[aff].mean()
            policy.set_state(nxt)
        x_next = policy.state().copy()
        if scheme is not None:
            z_next = scheme.round(x_next, batch)
            update[t] = update_cost(batch, z, z_next, catalog)
            if isinstance(scheme, OptimalCoupledRounding):
                expected_update[t] = scheme.last_plan_cost
            elif scheme.name == "coupled":
                expected_update[t] = expected_coupled_cost(x, x_next, batch, catalog, cfg.k)
            else:
                expected_update[t] = expected_independent_cost(
                    FractionalState(x, cfg.k), FractionalState(x_next, cfg.k), batch, catalog)
            z = z_next
        else:
            update[t] = update_cost(batch, x, x_next, catalog)
        x = x_next

    if cfg.tar_mode == "prefix":
        comp = prefix_comparator(trace, catalog, cfg.k)
    else:
        comp = static_comparator(trace, catalog, cfg.k)
    label = policy.name if scheme is None else f"{policy.name}+{scheme.name}"
    snapshot = {key: (val if not isinstance(val, dict) else dict(val)) for key, val in asdict(cfg).items()}
    rec = RunRecord(label, service, update, trace.batch_size, cfg.seed, snapshot, comp)
    if scheme is not None:
        rec.extra["expected_update"] = expected_update
        rec.extra["expected_service"] = expected_service
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8", newline="") as fh:
            write_csv([rec], fh, cfg.tau, cfg.report_every)
    return rec


def report_slots(n: int, every: Optional[int] = None) -> np.ndarray:
    every = every or max(1, n // 100)
    s = np.arange(every, n + 1, every)
    if s.size == 0 or s[-1] != n:
        s = np.append(s, n)
    return s


def write_csv(records: Iterable[RunRecord], fh, tau: int = 500, every: Optional[int] = None) -> None:
    """Emit ``slot,policy,metric,value`` rows at the report slots."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["slot", "policy", "metric", "value"])
    for rec in records:
        cur = curves(rec, tau)
        for t in report_slots(rec.n_slots, every):
            for metric in ("nac", "nmac", "tar", "cuc"):
                if metric in cur:
                    w.writerow([int(t), rec.policy, metric, repr(float(cur[metric][t - 1]))])


def csv_text(records, tau: int = 500, every: Optional[int] = None) -> str:
    buf = io.StringIO()
    write_csv(records, buf, tau, every)
    return buf.getvalue()


# ------------------------------------------------------------ adversaries


@dataclass
class AdversaryResult:
    service: np.ndarray
    update: np.ndarray
    batches: List[RequestBatch]
    regret: float

    @property
    def extended_regret(self) -> float:
        return self.regret + float(self.update.sum())


def ftl_breaker(T: int) -> List[RequestBatch]:
    """Requests ``e_1, 2 e_2, 2 e_1, 2 e_2, ...`` over two files."""
    out = [RequestBatch.single(0, 1)]
    for t in range(1, T):
        out.append(RequestBatch.single(1 if t % 2 == 1 else 0, 2))
    return out


def _state_of(policy) -> np.ndarray:
    return np.asarray(policy.state(), dtype=float)


def run_adversary(kind: str, policy, catalog: Catalog, k: int, T: int, rounding=None) -> AdversaryResult:
    """Play ``kind`` against ``policy`` for ``T`` slots (closed loop).

    ``ftl-breaker`` is open loop over two files. ``deterministic-breaker``
    requests every file not fully cached at the start of the slot.
    ``rounding-breaker`` requests the file with the smallest fractional
    allocation (lowest index on ties); with ``rounding`` set, costs are paid
    by the rounded integral states.
    """
    request_level = isinstance(policy, EvictionCache)
    fixed = ftl_breaker(T) if kind == "ftl-breaker" else None
    if kind not in ("ftl-breaker", "deterministic-breaker", "rounding-breaker"):
        raise InvalidInputError(f"unknown adversary {kind!r}")
    service, update, batches = np.zeros(T), np.zeros(T), []
    x = _state_of(policy)
    z = rounding.round(x) if rounding is not None else None
    for t in range(T):
        if fixed is not None:
            batch = fixed[t]
        elif kind == "deterministic-breaker":
            miss = np.flatnonzero(x != 1.0)
            batch = RequestBatch(miss, np.ones(miss.size, dtype=np.int64), int(miss.size), 1)
        else:
            batch = RequestBatch.single(int(np.argmin(x)))
        batches.append(batch)
        if request_level:
            service[t] = policy.serve(batch)
            x = _state_of(policy)
            continue
        service[t] = service_cost(batch, z if z is not None else x, catalog)
        policy.step(batch)
        x_next = _state_of(policy).copy()
        if rounding is not None:
            z_next = rounding.round(x_next, batch)
            update[t] = update_cost(batch, z, z_next, catalog)
            z = z_next
        else:
            update[t] = update_cost(batch, x, x_next, catalog)
        x = x_next
    return AdversaryResult(service, update, batches, regret_against_static(service, batches, catalog, k))


class ConstantPolicy:
    """Fractional policy that never moves (used to isolate rounding effects)."""

    integral = False
    name = "constant"

    def __init__(self, x):
        self._x = np.asarray(x, dtype=float)

    def state(self):
        return self._x

    def set_state(self, x):
        self._x = np.asarray(x, dtype=float)

    def step(self, batch):
        pass
