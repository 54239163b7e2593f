"""Seeded discrete-event simulator of the double queue.

Interarrival times come from two Philox streams (one per kind) spawned from
the run's seed, turned into exponentials by inverse CDF.  The merged
arrival sequence is then replayed by the kernel in ``_core`` (compiled) or
``_pycore`` (fallback); both produce identical traces.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from telesched import _backend, _pycore
from telesched.laplace import Discipline
from telesched.markov import DoubleQueueConfig
from telesched.qmath import FidelityCurve

REQUEST, EPR = 0, 1
KIND_NAMES = ("request", "epr")
OUTCOME_NAMES = ("served", "pushed_out", "in_system_at_horizon")
PHASE_NAMES = {-1: "", 0: "request_waited", 1: "epr_waited"}

N_BATCHES = 20
WARMUP_FRACTION = 0.05

CSV_HEADER = ("id", "kind", "arrival", "departure", "outcome", "wait", "phase")


@dataclass(frozen=True)
class SideRule:
    order: str = "lifo"  # "fifo" | "lifo"
    overflow: str = "pushout"  # "pushout" (evict oldest) | "block" (drop newest)

    def __post_init__(self):
        if self.order not in ("fifo", "lifo"):
            raise ValueError(f"unknown order {self.order!r}")
        if self.overflow not in ("pushout", "block"):
            raise ValueError(f"unknown overflow rule {self.overflow!r}")


@dataclass(frozen=True)
class PolicySpec:
    """Per-side service order and overflow rule, or a custom selection hook.

    ``hook(kind, action, ages, now) -> index`` is consulted for every match
    (``action == "match"``, ``ages`` of stored items of ``kind`` oldest
    first) and every overflow (``"evict"``, arriving item appended with age
    0).  Custom hooks run on the pure-Python kernel.
    """

    request: SideRule = SideRule()
    epr: SideRule = SideRule()
    hook: Callable | None = None
    label: str = ""

    @classmethod
    def from_disciplines(cls, disc_r: Discipline, disc_e: Discipline) -> "PolicySpec":
        def rule(d):
            return SideRule(d.order, "pushout" if d.overflow in ("pushout", "none") else "block")

        return cls(rule(disc_r), rule(disc_e), label=f"{disc_r.name}/{disc_e.name}")

    @classmethod
    def from_names(cls, disc_r: str, disc_e: str) -> "PolicySpec":
        """``fifo``/``lifo`` (unbounded use), ``*-po`` or ``*-block``."""

        def rule(name):
            order, _, tail = name.strip().lower().partition("-")
            return SideRule(order, "block" if tail == "block" else "pushout")

        return cls(rule(disc_r), rule(disc_e), label=f"{disc_r}/{disc_e}")


@dataclass(frozen=True)
class RequestRecord:
    id: int
    kind: str
    arrival: float
    departure: float
    outcome: str
    wait: float
    phase: str


@dataclass(frozen=True)
class SimTrace:
    """Column-oriented record of a run.  ``records()`` yields per-item views."""

    lambda_r: float
    lambda_e: float
    buf_r: int | None
    buf_e: int | None
    policy: PolicySpec
    seed: int
    arrival: np.ndarray = field(repr=False)
    kind: np.ndarray = field(repr=False)
    departure: np.ndarray = field(repr=False)
    outcome: np.ndarray = field(repr=False)
    phase: np.ndarray = field(repr=False)
    seen: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.arrival)

    @property
    def wait(self) -> np.ndarray:
        return self.departure - self.arrival

    @property
    def counters(self) -> dict[str, int]:
        out = {}
        for k, kname in enumerate(KIND_NAMES):
            mine = self.kind == k
            out[f"{kname}_arrivals"] = int(mine.sum())
            for o, oname in enumerate(OUTCOME_NAMES):
                out[f"{kname}_{oname}"] = int((mine & (self.outcome == o)).sum())
        return out

    def buffered(self, kind: int) -> np.ndarray:
        """Mask of arrivals of ``kind`` that found nothing to match."""
        matched_on_arrival = (self.outcome == _pycore.SERVED) & (self.phase != kind)
        return (self.kind == kind) & ~matched_on_arrival

    def records(self) -> Iterator[RequestRecord]:
        wait = self.wait
        for i in range(self.n):
            o = int(self.outcome[i])
            yield RequestRecord(
                i,
                KIND_NAMES[self.kind[i]],
                float(self.arrival[i]),
                float(self.departure[i]),
                OUTCOME_NAMES[o],
                float(wait[i]) if o != _pycore.IN_SYSTEM else math.nan,
                PHASE_NAMES[int(self.phase[i])],
            )

    def to_csv(self, fh=None) -> str | None:
        """Write ``id,kind,arrival,departure,outcome,wait,phase`` rows."""
        target = io.StringIO() if fh is None else fh
        w = csv.writer(target, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.records():
            w.writerow(
                (r.id, r.kind, _fmt(r.arrival), _fmt(r.departure), r.outcome, _fmt(r.wait), r.phase)
            )
        return target.getvalue() if fh is None else None


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else f"{x:.12g}"


def arrival_sequence(lambda_r: float, lambda_e: float, n_arrivals: int, seed: int):
    """First ``n_arrivals`` of the superposed streams as ``(times, kinds)``."""
    streams = np.random.SeedSequence(seed).spawn(2)
    times = []
    for rate, ss in zip((lambda_r, lambda_e), streams):
        gen = np.random.Generator(np.random.Philox(ss))
        u = gen.random(n_arrivals)
        if rate > 0:
            times.append(np.cumsum(-np.log1p(-u) / rate))
        else:
            times.append(np.full(n_arrivals, np.inf))
    t = np.concatenate(times)
    k = np.repeat(np.array([REQUEST, EPR], dtype=np.int8), n_arrivals)
    ids = np.arange(2 * n_arrivals)
    order = np.lexsort((ids, k, t))[:n_arrivals]
    t, k = t[order], k[order]
    if not np.all(np.isfinite(t)):
        raise ValueError("both arrival rates are zero")
    return t, k


def _cap(buf: int | None) -> int:
    return _pycore.UNBOUNDED if buf is None else int(buf)


def simulate(
    lambda_r: float,
    lambda_e: float,
    buf_r: int | None,
    buf_e: int | None,
    policy: PolicySpec,
    n_arrivals: int,
    seed: int,
    *,
    pure: bool = False,
) -> SimTrace:
    """Low-level entry; rates may be zero (a silent stream)."""
    if n_arrivals < 1:
        raise ValueError("n_arrivals must be >= 1")
    if lambda_r < 0 or lambda_e < 0:
        raise ValueError("rates must be non-negative")
    if (buf_r is None and lambda_e > 0 and lambda_r >= lambda_e) or (
        buf_e is None and lambda_r > 0 and lambda_e >= lambda_r
    ):
        warnings.warn("unbounded buffer at load >= 1: no steady state", RuntimeWarning, stacklevel=2)
    times, kinds = arrival_sequence(lambda_r, lambda_e, n_arrivals, seed)
    args = (
        times,
        kinds,
        _cap(buf_r),
        _cap(buf_e),
        _pycore.FIFO if policy.request.order == "fifo" else _pycore.LIFO,
        _pycore.FIFO if policy.epr.order == "fifo" else _pycore.LIFO,
        _pycore.PUSHOUT if policy.request.overflow == "pushout" else _pycore.BLOCK,
        _pycore.PUSHOUT if policy.epr.overflow == "pushout" else _pycore.BLOCK,
    )
    if policy.hook is not None:
        dep, out, ph, seen = _pycore.simulate_events(*args, hook=policy.hook)
    else:
        dep, out, ph, seen = _backend.get("simulate_events", pure=pure)(*args)
    return SimTrace(lambda_r, lambda_e, buf_r, buf_e, policy, seed, times, kinds, dep, out, ph, seen)


def run(cfg: DoubleQueueConfig, policy: PolicySpec, n_arrivals: int, seed: int, *, pure: bool = False) -> SimTrace:
    return simulate(cfg.lambda_r, cfg.lambda_e, cfg.buf_r, cfg.buf_e, policy, n_arrivals, seed, pure=pure)


def batch_means(values: np.ndarray, n_batches: int = N_BATCHES, warmup: float = WARMUP_FRACTION):
    """Mean and batch-means standard error after dropping a warm-up prefix."""
    values = np.asarray(values, dtype=float)
    values = values[int(len(values) * warmup) :]
    if len(values) == 0:
        raise ValueError("no samples left after warm-up")
    if len(values) < n_batches:
        return float(values.mean()), math.nan
    means = np.array([b.mean() for b in np.array_split(values, n_batches)])
    return float(values.mean()), float(means.std(ddof=1) / math.sqrt(n_batches))


def match_fidelities(trace: SimTrace, curve_r: FidelityCurve, curve_e: FidelityCurve) -> np.ndarray:
    """Fidelity of every completed teleportation, in service order."""
    wait = trace.wait
    served = trace.outcome == _pycore.SERVED
    waited_r = served & (trace.kind == REQUEST) & (trace.phase == _pycore.REQUEST_WAITED)
    waited_e = served & (trace.kind == EPR) & (trace.phase == _pycore.EPR_WAITED)
    idx = np.flatnonzero(waited_r | waited_e)
    idx = idx[np.argsort(trace.departure[idx], kind="stable")]
    vals = np.where(trace.kind[idx] == REQUEST, curve_r(wait[idx]), curve_e(wait[idx]))
    return vals


def estimate_mean_fidelity(trace: SimTrace, curve_r: FidelityCurve, curve_e: FidelityCurve):
    vals = match_fidelities(trace, curve_r, curve_e)
    if len(vals) == 0:
        raise ValueError("trace has no served teleportation")
    return batch_means(vals)


def estimate_service_probability(trace: SimTrace) -> dict[str, tuple[float, float]]:
    """Served fraction among buffered arrivals, per kind, with batch-means stderr."""
    out = {}
    for k, name in enumerate(KIND_NAMES):
        mask = trace.buffered(k) & (trace.outcome != _pycore.IN_SYSTEM)
        if not mask.any():
            continue
        out[name] = batch_means((trace.outcome[mask] == _pycore.SERVED).astype(float))
    return out


def wait_samples(trace: SimTrace, kind: str | int, outcome: str | None = "served", *, buffered_only: bool = True):
    """Waits of one kind in arrival order, filtered by outcome."""
    k = KIND_NAMES.index(kind) if isinstance(kind, str) else int(kind)
    mask = trace.buffered(k) if buffered_only else trace.kind == k
    if outcome is not None:
        mask &= trace.outcome == OUTCOME_NAMES.index(outcome)
    return trace.wait[mask]


def occupancy_time_average(trace: SimTrace, lo: int, hi: int) -> np.ndarray:
    """Time-weighted law of the signed occupancy on ``lo..hi``."""
    dt = np.diff(trace.arrival)
    state = trace.seen[1:]
    hist = np.bincount(state - lo, weights=dt, minlength=hi - lo + 1)[: hi - lo + 1]
    return hist / dt.sum()


def occupancy_seen_by_arrivals(trace: SimTrace, lo: int, hi: int) -> np.ndarray:
    hist = np.bincount(trace.seen - lo, minlength=hi - lo + 1)[: hi - lo + 1]
    return hist / trace.n
