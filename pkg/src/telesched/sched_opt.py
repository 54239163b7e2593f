"""Weak supermajorization of wait vectors and the LIFO-PO interchange argument.

Wait vectors carry ``inf`` for removed items.  ``x <=_w y`` (``y`` weakly
supermajorizes ``x``) compares prefix sums of the ascending finite entries:
``sum_{i<=k} x_(i) >= sum_{i<=k} y_(i)`` for every ``k`` up to the number of
finite entries.  Smaller waits on the right mean higher fidelity for any
decreasing convex fidelity curve.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from telesched import _pycore

INF = math.inf
TOL = 1e-9


@dataclass(frozen=True)
class ExtendedWaitVector:
    entries: tuple

    def __init__(self, entries):
        vals = tuple(float(v) for v in entries)
        if any(v < 0 or math.isnan(v) for v in vals):
            raise ValueError("wait entries must be >= 0 or inf")
        object.__setattr__(self, "entries", vals)

    @property
    def n(self) -> int:
        return len(self.entries)

    @property
    def m(self) -> int:
        return sum(1 for v in self.entries if math.isinf(v))

    def finite_sorted(self) -> np.ndarray:
        return np.sort([v for v in self.entries if not math.isinf(v)])

    def sorted_view(self) -> tuple:
        return tuple(self.finite_sorted()) + (INF,) * self.m

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        return self.entries[i]


def _vec(x) -> ExtendedWaitVector:
    return x if isinstance(x, ExtendedWaitVector) else ExtendedWaitVector(x)


def weak_supermajorizes(x, y, tol: float = TOL) -> bool:
    """True iff ``y`` weakly supermajorizes ``x`` (``x <=_w y``)."""
    x, y = _vec(x), _vec(y)
    if x.n != y.n or x.m != y.m:
        raise ValueError(f"vectors differ in length or infinite count: ({x.n},{x.m}) vs ({y.n},{y.m})")
    px = np.cumsum(x.finite_sorted())
    py = np.cumsum(y.finite_sorted())
    scale = max(1.0, float(px[-1]) if len(px) else 1.0)
    return bool(np.all(px >= py - tol * scale))


def _finite_at(x: ExtendedWaitVector, *idx: int) -> None:
    for i in idx:
        if math.isinf(x.entries[i]):
            raise ValueError(f"entry {i} is infinite")


def t_transform(x, i: int, j: int, lam: float) -> ExtendedWaitVector:
    """``lam * I + (1 - lam) * Q_ij`` applied to ``x``."""
    x = _vec(x)
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    _finite_at(x, i, j)
    v = list(x.entries)
    xi, xj = v[i], v[j]
    v[i] = lam * xi + (1 - lam) * xj
    v[j] = (1 - lam) * xi + lam * xj
    return ExtendedWaitVector(v)


def swap(x, i: int, j: int) -> ExtendedWaitVector:
    """``Q_ij``; unlike the T-transform it may move infinite entries."""
    v = list(_vec(x).entries)
    v[i], v[j] = v[j], v[i]
    return ExtendedWaitVector(v)


def s_scale(x, j: int, alpha: float) -> ExtendedWaitVector:
    """Scale entry ``j`` by ``alpha`` in ``[0, 1]``."""
    x = _vec(x)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    _finite_at(x, j)
    v = list(x.entries)
    v[j] *= alpha
    return ExtendedWaitVector(v)


def convex_order_check(x, y, phi: Callable, tol: float = 1e-12) -> bool:
    """``sum phi(x_(i)) <= sum phi(y_(i))`` over finite entries."""
    sx = float(np.sum(phi(_vec(x).finite_sorted())))
    sy = float(np.sum(phi(_vec(y).finite_sorted())))
    return sx <= sy + tol * max(1.0, abs(sy))


# ---- single-buffer instances ------------------------------------------------


@dataclass(frozen=True)
class Instance:
    """Fixed arrival and service instants for one buffer of size ``buf``.

    Services that find the buffer empty are lost.  The occupancy path, and
    hence the departure instants and their kinds, is the same under every
    work-conserving policy; only which item leaves at each instant differs.
    """

    arrivals: tuple
    services: tuple
    buf: int

    def events(self) -> list[tuple[float, str]]:
        ev = [(a, "arrive") for a in self.arrivals] + [(s, "serve") for s in self.services]
        return sorted(ev, key=lambda e: (e[0], e[1] == "arrive"))


@dataclass(frozen=True)
class Assignment:
    departures: tuple
    served: tuple

    def waits(self, arrivals: Sequence[float]) -> ExtendedWaitVector:
        return ExtendedWaitVector(
            d - a if s else INF for a, d, s in zip(arrivals, self.departures, self.served)
        )


def play(inst: Instance, chooser: Callable) -> Assignment:
    """Replay ``inst`` with ``chooser(action, present) -> job`` making every choice.

    ``present`` lists job indices in arrival order; for ``"evict"`` it
    includes the arriving job last.
    """
    dep = [None] * len(inst.arrivals)
    served = [False] * len(inst.arrivals)
    present: list[int] = []
    job = 0
    for t, kind in inst.events():
        if kind == "arrive":
            present.append(job)
            job += 1
            if len(present) > inst.buf:
                victim = chooser("evict", tuple(present))
                present.remove(victim)
                dep[victim] = t
        elif present:
            pick = chooser("match", tuple(present))
            present.remove(pick)
            dep[pick] = t
            served[pick] = True
    if present:
        raise ValueError("instance does not drain; append service instants")
    return Assignment(tuple(dep), tuple(served))


def lifo_po_chooser(action: str, present: tuple) -> int:
    # present is arrival ordered
    return present[-1] if action == "match" else present[0]


def lifo_po_assignment(inst: Instance) -> Assignment:
    return play(inst, lifo_po_chooser)


def enumerate_assignments(inst: Instance) -> Iterator[Assignment]:
    """Every assignment reachable by some work-conserving policy (DFS)."""
    events = inst.events()
    n = len(inst.arrivals)

    def rec(e, job, present, dep, served):
        while e < len(events):
            t, kind = events[e]
            if kind == "arrive":
                present = present + (job,)
                job += 1
                if len(present) > inst.buf:
                    for v in present:
                        rest = tuple(p for p in present if p != v)
                        yield from rec(e + 1, job, rest, {**dep, v: t}, served)
                    return
            elif present:
                for v in present:
                    rest = tuple(p for p in present if p != v)
                    yield from rec(e + 1, job, rest, {**dep, v: t}, served | {v})
                return
            e += 1
        if present:
            raise ValueError("instance does not drain")
        yield Assignment(tuple(dep[i] for i in range(n)), tuple(i in served for i in range(n)))

    yield from rec(0, 0, (), {}, frozenset())


def random_instance(n: int, buf: int, rng: np.random.Generator, service_rate: float = 1.0) -> Instance:
    """``n`` unit-rate arrivals, Poisson services, then enough services to drain."""
    arrivals = np.cumsum(rng.exponential(1.0, n))
    horizon = arrivals[-1]
    services = []
    t = rng.exponential(1.0 / service_rate)
    while t < horizon:
        services.append(t)
        t += rng.exponential(1.0 / service_rate)
    inst = Instance(tuple(arrivals), tuple(services), buf)
    # occupancy at the horizon is policy independent; drain it
    occ = 0
    for _, kind in inst.events():
        if kind == "arrive":
            occ = min(occ + 1, buf)
        elif occ:
            occ -= 1
    tail = horizon + np.cumsum(rng.exponential(1.0 / service_rate, occ)) if occ else []
    return Instance(tuple(arrivals), tuple(services) + tuple(tail), buf)


def random_policy_chooser(rng: np.random.Generator) -> Callable:
    def choose(action, present):
        return present[int(rng.integers(len(present)))]

    return choose


# ---- LIFO-PO no-crossing properties -----------------------------------------


@dataclass(frozen=True)
class Violation:
    case: int  # 1 served/served, 2 served/discarded, 3 discarded/discarded
    older: int
    younger: int


def _pair_violation(ak, dk, sk, aj, dj, sj) -> int:
    """Case number if (older k, younger j) breaks a LIFO-PO property, else 0."""
    if not ak < aj < dk:
        return 0
    if sk and sj and dk < dj:
        return 1
    if sk and not sj:
        return 2
    if not sk and not sj and dj < dk:
        return 3
    return 0


def lifo_po_violations(arrivals, departures, served) -> list[Violation]:
    """All violating pairs of a finite instance (quadratic scan)."""
    out = []
    n = len(arrivals)
    for k in range(n):
        for j in range(n):
            c = _pair_violation(arrivals[k], departures[k], served[k], arrivals[j], departures[j], served[j])
            if c:
                out.append(Violation(c, k, j))
    return out


@dataclass
class ViolationReport:
    counts: dict = field(default_factory=dict)  # (kind, case) -> count
    examples: list = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def __bool__(self):
        return self.total > 0


def lifo_po_trace_properties(trace, max_examples: int = 20) -> ViolationReport:
    """Scan a simulator trace, buffer by buffer, for the three crossing patterns.

    Only items that entered a buffer and left it before the horizon are
    considered.  A sweep over arrivals keeps the items still present, so the
    cost is linear in the trace times the buffer occupancy.
    """
    from telesched.sim import KIND_NAMES

    report = ViolationReport()
    for k, kname in enumerate(KIND_NAMES):
        mask = trace.buffered(k) & (trace.outcome != _pycore.IN_SYSTEM)
        ids = np.flatnonzero(mask)
        arr = trace.arrival[ids]
        dep = trace.departure[ids]
        srv = trace.outcome[ids] == _pycore.SERVED
        active: list[tuple[float, int]] = []  # heap of (departure, local index)
        for j in range(len(ids)):
            aj = arr[j]
            while active and active[0][0] <= aj:
                heapq.heappop(active)
            for _, i in active:
                c = _pair_violation(arr[i], dep[i], srv[i], aj, dep[j], srv[j])
                if c:
                    report.counts[(kname, c)] = report.counts.get((kname, c), 0) + 1
                    if len(report.examples) < max_examples:
                        report.examples.append((kname, Violation(c, int(ids[i]), int(ids[j]))))
            if dep[j] > aj:
                heapq.heappush(active, (dep[j], j))
    return report


# ---- interchange argument ---------------------------------------------------


@dataclass(frozen=True)
class ProofStep:
    case: int
    older: int
    younger: int
    parameter: float  # lambda for case 1, alpha for case 2, nan for case 3
    before: ExtendedWaitVector
    after: ExtendedWaitVector
    majorized: bool


@dataclass(frozen=True)
class ProofTrace:
    arrivals: tuple
    initial: Assignment
    final: Assignment
    steps: tuple

    @property
    def chain(self) -> list[ExtendedWaitVector]:
        first = self.initial.waits(self.arrivals)
        return [first] + [s.after for s in self.steps]

    @property
    def valid(self) -> bool:
        return all(s.majorized for s in self.steps)

    def to_text(self) -> str:
        lines = [f"instance n={len(self.arrivals)} steps={len(self.steps)}"]
        lines.append("w0 " + " ".join(_fmt_w(v) for v in self.initial.waits(self.arrivals).entries))
        for i, s in enumerate(self.steps, 1):
            lines.append(
                f"step {i} case {s.case} older={s.older} younger={s.younger} "
                f"param={s.parameter:.12g} majorized={'yes' if s.majorized else 'NO'}"
            )
            lines.append(f"w{i} " + " ".join(_fmt_w(v) for v in s.after.entries))
        return "\n".join(lines) + "\n"


def _fmt_w(v: float) -> str:
    return "inf" if math.isinf(v) else f"{v:.12g}"


def _check_realizable(arrivals, departures, served, buf):
    n = len(arrivals)
    if not (len(departures) == len(served) == n):
        raise ValueError("arrivals, departures and outcomes differ in length")
    for a, d in zip(arrivals, departures):
        if d is None or d < a:
            raise ValueError("every item must leave at or after its arrival")
    if len(set(departures)) != n:
        raise ValueError("departure instants must be distinct")
    if buf is not None:
        ev = sorted([(a, 1) for a in arrivals] + [(d, -1) for d in departures], key=lambda e: (e[0], -e[1]))
        occ = 0
        for _, step in ev:
            occ += step
            if occ > buf + 1 or (step == -1 and occ > buf):
                raise ValueError("assignment exceeds the buffer size")


def interchange_argument(
    arrivals: Sequence[float],
    departures: Sequence[float],
    served: Sequence[bool],
    buf: int | None = None,
    max_steps: int = 10_000,
) -> ProofTrace:
    """Rewrite a non-LIFO-PO assignment pairwise until no crossing remains.

    Case 1 swaps the service slots of two served items, case 2 serves the
    younger item in the older one's slot and removes the older one instead,
    case 3 swaps two removal slots.  Every rewrite is checked to move up in
    the weak supermajorization order.
    """
    a = tuple(float(v) for v in arrivals)
    dep = [float(v) for v in departures]
    srv = [bool(v) for v in served]
    _check_realizable(a, dep, srv, buf)
    initial = Assignment(tuple(dep), tuple(srv))
    steps = []
    for _ in range(max_steps):
        found = lifo_po_violations(a, dep, srv)
        if not found:
            break
        v = found[0]
        k, j = v.older, v.younger
        before = ExtendedWaitVector(d - ai if s else INF for ai, d, s in zip(a, dep, srv))
        if v.case == 1:
            param = (a[j] - a[k]) / ((a[j] - a[k]) + (dep[j] - dep[k]))
            dep[j], dep[k] = dep[k], dep[j]
        elif v.case == 2:
            param = (dep[k] - a[j]) / (dep[k] - a[k])
            dep[j], dep[k] = dep[k], dep[j]
            srv[j], srv[k] = True, False
        else:
            param = math.nan
            dep[j], dep[k] = dep[k], dep[j]
        after = ExtendedWaitVector(d - ai if s else INF for ai, d, s in zip(a, dep, srv))
        ok = weak_supermajorizes(before, after)
        # the rewrite must match the operator form used in the argument
        if v.case == 1:
            ok &= np.allclose(t_transform(after, j, k, param).entries, before.entries, rtol=0, atol=1e-9)
        elif v.case == 2:
            ok &= np.allclose(s_scale(swap(before, j, k), j, param).entries, after.entries, rtol=0, atol=1e-9)
        steps.append(ProofStep(v.case, k, j, param, before, after, bool(ok)))
    else:
        raise RuntimeError("interchange did not terminate")
    return ProofTrace(a, initial, Assignment(tuple(dep), tuple(srv)), tuple(steps))
