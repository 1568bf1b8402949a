"""Synthetic request traces, raw-log ingestion and the text trace format.

Trace file layout (UTF-8, one record per line)::

    #omdtrace v1 N=<int> R=<int> h=<int> T=<int> B=<int>
    #pop <start_slot> <p_0> <p_1> ...      (optional, before the batch it applies to)
    <index>:<count> <index>:<count> ...    (one batch per line, indices ascending)
"""

from __future__ import annotations

import io
import re
import warnings
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, TextIO, Union

import numpy as np

from .core import InvalidInputError, RequestBatch, Trace

KINDS = ("FixedZipf", "BatchedZipf", "PartialPopularityChange", "GlobalPopularityChange")


@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a synthetic trace.

    ``B`` batches of ``R`` i.i.d. requests drawn from a Zipf law with exponent
    ``alpha`` over ``N`` files (file 0 most popular). ``T`` is only recorded in
    the header as the tuning horizon (defaults to ``B``). For the changing
    kinds the popularity is modified every ``period`` slots: the partial
    variant swaps the ``swap_frac`` most and least popular files, the global
    one shifts the popularity vector circularly by ``step`` (default ``N // 4``).
    """

    kind: str = "FixedZipf"
    alpha: float = 0.8
    N: int = 200
    R: int = 1
    B: int = 1000
    T: Optional[int] = None
    seed: int = 0
    period: Optional[int] = None
    step: Optional[int] = None
    swap_frac: float = 0.05

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown trace kind {self.kind!r}")
        if self.N < 1:
            raise InvalidInputError("degenerate Zipf: N must be >= 1")
        if self.R < 1 or self.B < 1 or self.alpha < 0:
            raise InvalidInputError("R and B must be positive and alpha >= 0")
        if self.T is not None and self.T < 1:
            raise InvalidInputError("T must be positive")
        if self.kind in ("PartialPopularityChange", "GlobalPopularityChange"):
            if self.period is None or self.period < 1:
                raise InvalidInputError(f"{self.kind} needs a positive period")
        if not (0 < self.swap_frac <= 0.5):
            raise InvalidInputError("swap_frac must lie in (0, 0.5]")

    @property
    def horizon(self) -> int:
        return self.T if self.T is not None else self.B


def zipf_popularity(N: int, alpha: float) -> np.ndarray:
    """``p_i`` proportional to ``(i + 1)^-alpha``."""
    if N < 1:
        raise InvalidInputError("degenerate Zipf: N must be >= 1")
    w = np.arange(1, N + 1, dtype=float) ** (-float(alpha))
    return w / w.sum()


def _change(pop: np.ndarray, spec: GeneratorSpec) -> np.ndarray:
    if spec.kind == "PartialPopularityChange":
        # the m most popular files take the popularity of the m least popular
        order = np.argsort(-pop, kind="stable")
        m = max(1, int(round(spec.swap_frac * spec.N)))
        top, bottom = order[:m], order[::-1][:m]
        new = pop.copy()
        new[top], new[bottom] = pop[bottom], pop[top]
        return new
    step = spec.step if spec.step is not None else spec.N // 4
    # file i takes the popularity that file (i + step) mod N had
    return np.roll(pop, -step)


def _sample(rng, pop, R, B) -> list:
    out = []
    if R == 1:
        draws = rng.choice(pop.size, size=B, p=pop)
        return [RequestBatch(np.array([i]), np.array([1]), 1, 1) for i in draws]
    for _ in range(B):
        c = rng.multinomial(R, pop)
        idx = np.flatnonzero(c)
        out.append((idx, c[idx]))
    return out


def generate(spec: GeneratorSpec) -> Trace:
    """Draw a trace; deterministic for a given ``spec`` (including its seed)."""
    rng = np.random.default_rng(spec.seed)
    pop = zipf_popularity(spec.N, spec.alpha)
    changing = spec.kind in ("PartialPopularityChange", "GlobalPopularityChange")
    period = spec.period if changing else spec.B
    raw, meta = [], []
    start = 0
    while start < spec.B:
        n = min(period, spec.B - start)
        meta.append((start, pop.copy()))
        raw.extend(_sample(rng, pop, spec.R, n))
        start += n
        if changing:
            pop = _change(pop, spec)
    if spec.R == 1:
        batches = raw
        h = 1
    else:
        h = max(int(c.max()) for _, c in raw)
        batches = [RequestBatch(i, c, spec.R, h) for i, c in raw]
    return Trace(spec.N, spec.R, h, spec.horizon, batches, meta)


# ------------------------------------------------------------------ I/O

_HEADER = re.compile(r"#omdtrace v1 N=(\d+) R=(\d+) h=(\d+) T=(\d+) B=(\d+)\s*$")


def format_trace(trace: Trace) -> str:
    buf = io.StringIO()
    write_trace(trace, buf)
    return buf.getvalue()


def write_trace(trace: Trace, dest: Union[str, Path, TextIO]) -> None:
    """Write ``trace`` in the text format; floats use their shortest exact repr."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="\n") as fh:
            write_trace(trace, fh)
        return
    meta = {s: p for s, p in (trace.popularity_meta or [])}
    dest.write(f"#omdtrace v1 N={trace.catalog_size} R={trace.batch_size} h={trace.max_multiplicity} "
               f"T={trace.horizon} B={trace.n_batches}\n")
    for t, b in enumerate(trace.batches):
        if t in meta:
            dest.write("#pop " + str(t) + " " + " ".join(repr(float(v)) for v in meta[t]) + "\n")
        dest.write(" ".join(f"{i}:{c}" for i, c in zip(b.indices.tolist(), b.counts.tolist())) + "\n")


def read_trace(src: Union[str, Path, TextIO]) -> Trace:
    """Parse a trace file, rejecting batches that break the declared ``R`` or ``h``."""
    if isinstance(src, (str, Path)):
        with open(src, encoding="utf-8") as fh:
            return read_trace(fh)
    lines = iter(src)
    first = next(lines, None)
    if first is None:
        raise InvalidInputError("empty trace file")
    m = _HEADER.match(first.strip())
    if not m:
        raise InvalidInputError(f"bad trace header: {first.strip()!r}")
    N, R, h, T, B = (int(v) for v in m.groups())
    batches, meta = [], []
    for lineno, line in enumerate(lines, start=2):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#pop"):
            parts = line.split()
            vec = np.array([float(v) for v in parts[2:]])
            if vec.size != N:
                raise InvalidInputError(f"line {lineno}: popularity vector has {vec.size} entries, N={N}")
            meta.append((int(parts[1]), vec))
            continue
        if line.startswith("#"):
            continue
        try:
            pairs = [tok.split(":") for tok in line.split()]
            idx = np.array([int(a) for a, _ in pairs], dtype=np.int64)
            cnt = np.array([int(c) for _, c in pairs], dtype=np.int64)
        except ValueError as exc:
            raise InvalidInputError(f"line {lineno}: malformed batch") from exc
        if idx.size and (idx.min() < 0 or idx.max() >= N):
            raise InvalidInputError(f"line {lineno}: index outside [0, {N})")
        try:
            batches.append(RequestBatch(idx, cnt, R, h))
        except InvalidInputError as exc:
            raise InvalidInputError(f"line {lineno}: {exc}") from exc
    if len(batches) != B:
        raise InvalidInputError(f"header declares B={B} but file has {len(batches)} batches")
    return Trace(N, R, h, T, batches, meta or None)


# ------------------------------------------------------------- ingestion


def ingest_raw_log(lines: Iterable[str], R: int, top_m: int, T: Optional[int] = None) -> Trace:
    """Batch a request log (one file identifier per line) into a trace.

    Only the ``top_m`` most requested identifiers are kept (ties go to the
    identifier seen first); they are numbered in order of first appearance.
    Consecutive surviving requests form batches of ``R``; a trailing partial
    batch is dropped. Lines that cannot be decoded are skipped with a warning.
    """
    if R < 1 or top_m < 1:
        raise InvalidInputError("R and top_m must be positive")
    ids, skipped = [], 0
    for line in lines:
        if isinstance(line, bytes):
            try:
                line = line.decode("utf-8")
            except UnicodeDecodeError:
                skipped += 1
                continue
        tok = line.strip()
        if not tok or any(ch.isspace() for ch in tok):
            skipped += 1 if tok else 0
            continue
        ids.append(tok)
    if skipped:
        warnings.warn(f"skipped {skipped} unreadable log lines", RuntimeWarning, stacklevel=2)
    if not ids:
        raise InvalidInputError("empty request log")
    freq = Counter(ids)
    first_seen = {}
    for pos, i in enumerate(ids):
        first_seen.setdefault(i, pos)
    kept = sorted(freq, key=lambda i: (-freq[i], first_seen[i]))[:top_m]
    index = {i: n for n, i in enumerate(sorted(kept, key=first_seen.__getitem__))}
    stream = np.array([index[i] for i in ids if i in index], dtype=np.int64)
    nb = stream.size // R
    if nb == 0:
        raise InvalidInputError(f"fewer than R={R} requests survive truncation")
    raw = []
    for b in range(nb):
        idx, cnt = np.unique(stream[b * R:(b + 1) * R], return_counts=True)
        raw.append((idx, cnt))
    h = max(int(c.max()) for _, c in raw)
    batches = [RequestBatch(i, c, R, h) for i, c in raw]
    return Trace(len(index), R, h, T if T is not None else nb, batches, None)


# --------------------------------------------------------------- presets

PRESETS = {
    "fixed-popularity": dict(kind="FixedZipf", alpha=0.8, N=200, R=1, B=100_000),
    "batched-fixed-popularity": dict(kind="BatchedZipf", alpha=0.8, N=200, R=5000, B=1000),
    "partial-popularity-change": dict(kind="PartialPopularityChange", alpha=0.1, N=10_000, R=5000,
                                      B=5000, T=1000, period=1000, swap_frac=0.05),
    "global-popularity-change": dict(kind="GlobalPopularityChange", alpha=0.8, N=10_000, R=1,
                                     B=150_000, period=50_000),
    # 9000 single requests with the change period scaled down by the same factor
    "downscaled-global-popularity-change": dict(kind="GlobalPopularityChange", alpha=0.8, N=25,
                                                R=1, B=9000, period=3000),
}

# raw-log batching presets; the two published descriptions differ on R
INGEST_PRESETS = {
    "cdn-small-batch": dict(R=5000, top_m=1000),
    "cdn-large-batch": dict(R=50_000, top_m=1000),
}


def preset(name: str, **overrides) -> GeneratorSpec:
    if name not in PRESETS:
        raise InvalidInputError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return GeneratorSpec(**{**PRESETS[name], **overrides})
