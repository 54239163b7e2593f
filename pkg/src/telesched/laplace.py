"""Wait-time transforms per discipline and the phase-conditioned mixture.

A buffered item's wait is governed by two Poisson streams: ``lam_arr``, the
rate of further arrivals of its own kind, and ``lam_srv``, the rate of the
opposite kind that consumes buffered items.  In the request phase these are
``(lambda_r, lambda_e)``; in the EPR phase they swap.

Joint transforms ``E[exp(-sW); served]`` are returned; ``p_served`` is their
value at ``s = 0`` and :meth:`WaitTransform.conditioned` divides it out.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from telesched import _backend
from telesched.errors import StabilityError
from telesched.markov import DoubleQueueConfig, phase_masses
from telesched.qmath import FidelityCurve, expected_fidelity

ORDERS = ("fifo", "lifo")
OVERFLOWS = ("pushout", "block", "none")


@dataclass(frozen=True)
class Discipline:
    """Service order plus overflow rule; ``buf=None`` is the infinite buffer."""

    order: str
    buf: int | None
    overflow: str = "pushout"

    def __post_init__(self):
        if self.order not in ORDERS:
            raise ValueError(f"unknown service order {self.order!r}")
        if self.buf is None:
            object.__setattr__(self, "overflow", "none")
        else:
            if self.overflow not in ("pushout", "block"):
                raise ValueError(f"unknown overflow rule {self.overflow!r}")
            if int(self.buf) != self.buf or self.buf < 1:
                raise ValueError(f"finite buffer must be >= 1, got {self.buf!r}")

    @property
    def infinite(self) -> bool:
        return self.buf is None

    @property
    def name(self) -> str:
        if self.infinite:
            return self.order
        return f"{self.order}-{'po' if self.overflow == 'pushout' else 'block'}"

    def __str__(self):
        return self.name if self.infinite else f"{self.name}({self.buf})"

    @classmethod
    def from_name(cls, name: str, buf: int | None = None) -> "Discipline":
        """``fifo``/``lifo`` are infinite; ``-po`` and ``-block`` take ``buf``."""
        key = name.strip().lower()
        if key in ORDERS:
            return cls(key, None)
        order, _, rule = key.partition("-")
        rules = {"po": "pushout", "block": "block"}
        if order not in ORDERS or rule not in rules:
            raise ValueError(f"unknown discipline {name!r}")
        if buf is None:
            raise ValueError(f"{name} needs a finite buffer size")
        return cls(order, buf, rules[rule])


FIFO_INF = Discipline("fifo", None)
LIFO_INF = Discipline("lifo", None)


def fifo_po(buf: int) -> Discipline:
    return Discipline("fifo", buf, "pushout")


def lifo_po(buf: int) -> Discipline:
    return Discipline("lifo", buf, "pushout")


@dataclass(frozen=True)
class WaitTransform:
    joint: Callable[[float], float] = field(repr=False)
    discipline: Discipline
    p_served: float
    conditioned_on_service: bool = False

    def __call__(self, s):
        if np.ndim(s):
            return np.array([self(float(v)) for v in np.ravel(s)]).reshape(np.shape(s))
        if s < 0:
            raise ValueError("transform argument must be >= 0")
        v = self.joint(float(s))
        return v / self.p_served if self.conditioned_on_service else v

    def conditioned(self) -> "WaitTransform":
        if self.p_served <= 0:
            raise ValueError("no arrival is ever served")
        return WaitTransform(self.joint, self.discipline, self.p_served, True)


def _check_rates(lam_arr: float, lam_srv: float) -> None:
    if not (lam_arr > 0 and lam_srv > 0):
        raise ValueError("rates must be positive")


def _require_stable(lam_arr: float, lam_srv: float) -> None:
    _check_rates(lam_arr, lam_srv)
    if lam_arr >= lam_srv:
        raise StabilityError(
            f"infinite buffer is unstable at load {lam_arr / lam_srv:.6g} (needs < 1)"
        )


def bessel_i1e(x):
    """Exponentially scaled ``I_1``; array input goes through the kernel backend."""
    if np.ndim(x) == 0:
        return _backend.kernels.i1e(float(x))
    flat = np.ascontiguousarray(np.ravel(x), dtype=float)
    if _backend.COMPILED:
        return _backend.kernels.i1e_array(flat).reshape(np.shape(x))
    return np.array([_backend.kernels.i1e(v) for v in flat]).reshape(np.shape(x))


# ---- infinite buffers -------------------------------------------------------


def fifo_inf_wait_pdf(lam_arr: float, lam_srv: float, t):
    _require_stable(lam_arr, lam_srv)
    rate = lam_srv - lam_arr
    t = np.asarray(t, dtype=float)
    return np.where(t >= 0, rate * np.exp(-rate * np.clip(t, 0, None)), 0.0)


def fifo_inf_laplace(lam_arr: float, lam_srv: float) -> WaitTransform:
    _require_stable(lam_arr, lam_srv)
    rate = lam_srv - lam_arr
    return WaitTransform(lambda s: rate / (rate + s), FIFO_INF, 1.0)


def fifo_inf_laplace_sign_flipped(lam_arr: float, lam_srv: float, s: float) -> float:
    """``rate / (rate - s)``: the variant with the wrong sign, kept for comparison."""
    rate = lam_srv - lam_arr
    return rate / (rate - s)


def lifo_inf_busy_pdf(lam_arr: float, lam_srv: float, t):
    """M/M/1 busy-period density, which is also the LIFO wait density.

    ``exp(-(a + b) t) I_1(2 t sqrt(a b))`` is rewritten with the scaled
    Bessel function as ``exp(-(sqrt(b) - sqrt(a))**2 t) i1e(...)`` so large
    ``t`` never overflows.  The ``t -> 0`` limit is ``lam_srv``.
    """
    _require_stable(lam_arr, lam_srv)
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    x = 2.0 * tp * math.sqrt(lam_arr * lam_srv)
    gap = (math.sqrt(lam_srv) - math.sqrt(lam_arr)) ** 2
    rho = lam_arr / lam_srv
    out[pos] = np.exp(-gap * tp) * bessel_i1e(x) / (tp * math.sqrt(rho))
    out[t == 0] = lam_srv
    return float(out[0]) if scalar else out


def _busy_root(lam_arr: float, lam_srv: float, s: float) -> float:
    """Smaller root of ``lam_arr r^2 - (lam_arr + lam_srv + s) r + lam_srv``."""
    a = lam_arr + lam_srv + s
    disc = max(a * a - 4.0 * lam_arr * lam_srv, 0.0)
    # 2c / (b + sqrt(D)) avoids cancellation in (b - sqrt(D)) / 2a
    return 2.0 * lam_srv / (a + math.sqrt(disc))


def lifo_inf_laplace(lam_arr: float, lam_srv: float) -> WaitTransform:
    _require_stable(lam_arr, lam_srv)
    return WaitTransform(lambda s: _busy_root(lam_arr, lam_srv, s), LIFO_INF, 1.0)


# ---- finite buffers: arrival mixing ----------------------------------------


def arrival_occupancy_weights(load: float, buf: int) -> np.ndarray:
    """Occupancy seen by a buffered arrival: ``load**n`` normalised over ``0..buf``."""
    logw = np.arange(buf + 1) * math.log(load)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def fifo_po_table(buf: int, lam_arr: float, lam_srv: float, s: float) -> np.ndarray:
    """``W[j, k]``: joint transform for position ``k`` (1 = head) with ``j`` behind.

    Entries with ``j + k > buf`` are unused and left at zero; ``W[j, 0] = 1``.
    """
    _check_rates(lam_arr, lam_srv)
    if buf < 1:
        raise ValueError("buffer size must be >= 1")
    denom = lam_arr + lam_srv + s
    up = lam_arr / denom
    down = lam_srv / denom
    w = np.zeros((buf + 1, buf + 1))
    w[:, 0] = 1.0
    for k in range(1, buf + 1):
        for j in range(buf - k, -1, -1):
            if j + k < buf:
                after_arrival = w[j + 1, k]
            elif k >= 2:
                # full: the oldest (ahead of us) is pushed out
                after_arrival = w[j + 1, k - 1]
            else:
                after_arrival = 0.0
            w[j, k] = up * after_arrival + down * w[j, k - 1]
    return w


def fifo_po_joint(buf: int, lam_arr: float, lam_srv: float, s: float) -> float:
    w = fifo_po_table(buf, lam_arr, lam_srv, s)
    pi = arrival_occupancy_weights(lam_arr / lam_srv, buf)
    entry = np.minimum(np.arange(buf + 1) + 1, buf)  # a full buffer admits us at position buf
    return float(pi @ w[0, entry])


def fifo_po_laplace(buf: int, lam_arr: float, lam_srv: float) -> WaitTransform:
    _check_rates(lam_arr, lam_srv)
    return WaitTransform(
        lambda s: fifo_po_joint(buf, lam_arr, lam_srv, s),
        fifo_po(buf),
        fifo_po_joint(buf, lam_arr, lam_srv, 0.0),
    )


def lifo_po_positions(buf: int, lam_arr: float, lam_srv: float, s: float) -> np.ndarray:
    """``W(k)`` for ``k = 0..buf+1`` (``W(0) = 1``, ``W(buf+1) = 0``).

    Solves ``W(k) = (lam_arr W(k+1) + lam_srv W(k-1)) / (lam_arr + lam_srv + s)``
    in closed form: with characteristic roots ``r_small < r_big`` and
    ``q = r_small / r_big``,
    ``W(k) = r_small**k (1 - q**(buf+1-k)) / (1 - q**(buf+1))``.
    """
    _check_rates(lam_arr, lam_srv)
    if buf < 1:
        raise ValueError("buffer size must be >= 1")
    a = lam_arr + lam_srv + s
    sq = math.sqrt(max(a * a - 4.0 * lam_arr * lam_srv, 0.0))
    r_small = 2.0 * lam_srv / (a + sq)
    log_q = math.log1p(-2.0 * sq / (a + sq))
    k = np.arange(buf + 2)
    m = buf + 1 - k
    if log_q == 0.0:
        ratio = m / (buf + 1.0)
    else:
        ratio = np.expm1(m * log_q) / math.expm1((buf + 1) * log_q)
    return r_small**k * ratio


def lifo_po_joint(buf: int, lam_arr: float, lam_srv: float, s: float) -> float:
    # a new arrival always sits on top
    return float(lifo_po_positions(buf, lam_arr, lam_srv, s)[1])


def lifo_po_laplace(buf: int, lam_arr: float, lam_srv: float) -> WaitTransform:
    _check_rates(lam_arr, lam_srv)
    return WaitTransform(
        lambda s: lifo_po_joint(buf, lam_arr, lam_srv, s),
        lifo_po(buf),
        lifo_po_joint(buf, lam_arr, lam_srv, 0.0),
    )


def lifo_po_recursion_solve(buf: int, lam_arr: float, lam_srv: float, s: float) -> np.ndarray:
    """``W(1..buf)`` from the tridiagonal system directly; checks the closed form."""
    d = lam_arr + lam_srv + s
    a = np.zeros((buf, buf))
    rhs = np.zeros(buf)
    for i in range(buf):
        a[i, i] = d
        if i + 1 < buf:
            a[i, i + 1] = -lam_arr
        if i > 0:
            a[i, i - 1] = -lam_srv
    rhs[0] = lam_srv  # W(0) = 1
    return np.linalg.solve(a, rhs)


def lifo_po_position_unreduced(buf: int, lam_arr: float, lam_srv: float, s: float, k: int) -> float:
    """The unreduced two-root ratio with ``r**buf`` powers, kept for comparison.

    ``(r1^k r2^B - r2^k r1^B) / (r2^B - r2^k)``, roots over ``2 lam_arr``.
    It does not satisfy the boundary ``W(buf+1) = 0`` and is singular at
    ``k = buf``.
    """
    a = lam_arr + lam_srv + s
    sq = math.sqrt(a * a - 4.0 * lam_arr * lam_srv)
    r1 = (a + sq) / (2.0 * lam_arr)
    r2 = (a - sq) / (2.0 * lam_arr)
    den = r2**buf - r2**k
    return (r1**k * r2**buf - r2**k * r1**buf) / den if den != 0 else math.inf


# ---- tagged-item chain: independent oracle and phase-type densities ---------


@dataclass(frozen=True)
class TaggedChain:
    """Absorbing CTMC of one buffered item's fate.

    States are ``(older, younger)`` counts of other buffered items.
    ``generator`` is the transient sub-generator, ``to_served`` the exit
    rates into service, ``initial`` the arrival distribution (its mass is
    below one when arrivals can be blocked).
    """

    states: tuple
    generator: np.ndarray
    to_served: np.ndarray
    initial: np.ndarray


def tagged_chain(disc: Discipline, lam_arr: float, lam_srv: float) -> TaggedChain:
    _check_rates(lam_arr, lam_srv)
    if disc.infinite:
        raise ValueError("tagged chain needs a finite buffer")
    buf = disc.buf
    index: dict[tuple[int, int], int] = {}
    order: list[tuple[int, int]] = []

    def idx(state):
        if state not in index:
            index[state] = len(order)
            order.append(state)
        return index[state]

    pi = arrival_occupancy_weights(lam_arr / lam_srv, buf)
    start: dict[int, float] = {}
    for n, p in enumerate(pi):
        if n < buf:
            st = (n, 0)
        elif disc.overflow == "pushout":
            st = (buf - 1, 0)
        else:
            continue  # blocked on arrival
        i = idx(st)
        start[i] = start.get(i, 0.0) + p

    edges: list[tuple[int, int, float]] = []
    exits: dict[int, float] = {}
    leave: dict[int, float] = {}
    frontier = list(order)
    seen = set(frontier)
    while frontier:
        st = frontier.pop()
        i = index[st]
        older, younger = st
        out_rate = 0.0
        # consumption by the other stream
        if disc.order == "fifo":
            nxt = (older - 1, younger) if older > 0 else None
        else:
            nxt = (older, younger - 1) if younger > 0 else None
        out_rate += lam_srv
        if nxt is None:
            exits[i] = exits.get(i, 0.0) + lam_srv
        else:
            edges.append((i, idx(nxt), lam_srv))
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
        # arrival of our own kind
        total = older + younger + 1
        if total < buf:
            nxt = (older, younger + 1)
        elif disc.overflow == "pushout":
            nxt = (older - 1, younger + 1) if older > 0 else "evicted"
        else:
            nxt = "blocked"
        if nxt != "blocked":
            out_rate += lam_arr
            if nxt != "evicted":
                edges.append((i, idx(nxt), lam_arr))
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        leave[i] = out_rate

    size = len(order)
    gen = np.zeros((size, size))
    for i, j, r in edges:
        gen[i, j] += r
    for i, r in leave.items():
        gen[i, i] -= r
    to_served = np.zeros(size)
    for i, r in exits.items():
        to_served[i] = r
    init = np.zeros(size)
    for i, p in start.items():
        init[i] = p
    return TaggedChain(tuple(order), gen, to_served, init)


def direct_joint_laplace(disc: Discipline, lam_arr: float, lam_srv: float, s: float) -> float:
    """``alpha (sI - T)^-1 t0`` by a dense linear solve."""
    ch = tagged_chain(disc, lam_arr, lam_srv)
    x = np.linalg.solve(s * np.eye(len(ch.states)) - ch.generator, ch.to_served)
    return float(ch.initial @ x)


def direct_laplace(disc: Discipline, lam_arr: float, lam_srv: float) -> WaitTransform:
    ch = tagged_chain(disc, lam_arr, lam_srv)
    eye = np.eye(len(ch.states))

    def joint(s):
        return float(ch.initial @ np.linalg.solve(s * eye - ch.generator, ch.to_served))

    return WaitTransform(joint, disc, joint(0.0))


def phase_type_wait_pdf(disc: Discipline, lam_arr: float, lam_srv: float) -> Callable:
    """Density of the wait of a served item, conditioned on service.

    ``alpha expm(T t) t0 / P_s``.  The FIFO chains only move one way, so
    ``T`` is close to defective and an eigendecomposition is unusable;
    each time point instead takes a Pade matrix exponential.
    """
    ch = tagged_chain(disc, lam_arr, lam_srv)
    p_served = float(ch.initial @ np.linalg.solve(-ch.generator, ch.to_served))

    def pdf(t):
        t = np.asarray(t, dtype=float)
        flat = np.ravel(t)
        out = np.zeros(flat.shape)
        for i, ti in enumerate(flat):
            if ti >= 0:
                out[i] = ch.initial @ linalg.expm(ch.generator * ti) @ ch.to_served
        out = np.clip(out, 0.0, None) / p_served
        return out.reshape(t.shape) if t.ndim else float(out[0])

    return pdf


# ---- dispatch ---------------------------------------------------------------


def transform_for(disc: Discipline, lam_arr: float, lam_srv: float) -> WaitTransform:
    """Joint transform for any supported discipline."""
    if disc.infinite:
        fn = fifo_inf_laplace if disc.order == "fifo" else lifo_inf_laplace
        return fn(lam_arr, lam_srv)
    if disc.overflow == "pushout":
        fn = fifo_po_laplace if disc.order == "fifo" else lifo_po_laplace
        return fn(disc.buf, lam_arr, lam_srv)
    return direct_laplace(disc, lam_arr, lam_srv)


def wait_pdf_for(disc: Discipline, lam_arr: float, lam_srv: float) -> Callable:
    """Conditioned wait density for any supported discipline."""
    if disc.infinite:
        fn = fifo_inf_wait_pdf if disc.order == "fifo" else lifo_inf_busy_pdf
        _require_stable(lam_arr, lam_srv)
        return lambda t: fn(lam_arr, lam_srv, t)
    return phase_type_wait_pdf(disc, lam_arr, lam_srv)


# ---- fidelity densities and the two-phase mixture ---------------------------


def fidelity_pdf_transform(wait_pdf: Callable, curve: FidelityCurve, x):
    """Density of ``curve(W)`` by change of variables."""
    if not curve.strictly_decreasing:
        raise ValueError("fidelity density needs a strictly decreasing curve")
    x = np.asarray(x, dtype=float)
    if np.any((x <= curve.constant) | (x >= curve.initial)):
        raise ValueError(f"fidelity outside ({curve.constant}, {curve.initial})")
    return wait_pdf(curve.inverse(x)) * curve.inverse_jacobian(x)


def fifo_inf_fidelity_pdf(lam_arr: float, lam_srv: float, curve: FidelityCurve, x):
    """Closed form of the FIFO infinite-buffer fidelity density.

    With ``m = lam_srv - lam_arr`` and ``u = (x - c) / a``:
    ``f(x) = m / r * u**(m / r) / (x - c)``.
    """
    _require_stable(lam_arr, lam_srv)
    m = lam_srv - lam_arr
    r = curve.decay_rate
    x = np.asarray(x, dtype=float)
    u = (x - curve.constant) / curve.amplitude
    return m / r * u ** (m / r) / (x - curve.constant)


def _resolve(disc, buf) -> Discipline:
    if isinstance(disc, str):
        return Discipline.from_name(disc, buf)
    if disc.buf != buf:
        raise ValueError(f"discipline {disc} does not match buffer size {buf}")
    return disc


@dataclass(frozen=True)
class PhaseSolution:
    """Per-phase pieces of the two-phase average."""

    transform_r: WaitTransform
    transform_e: WaitTransform
    rate_r: float  # request-waited matches per unit time
    rate_e: float  # EPR-waited matches per unit time

    @property
    def weight_r(self) -> float:
        return self.rate_r / (self.rate_r + self.rate_e)

    @property
    def weight_e(self) -> float:
        return self.rate_e / (self.rate_r + self.rate_e)

    @property
    def p_serve_r(self) -> float:
        return self.transform_r.p_served

    @property
    def p_serve_e(self) -> float:
        return self.transform_e.p_served


def solve_phases(cfg: DoubleQueueConfig, disc_r, disc_e) -> PhaseSolution:
    """Transforms for each phase and the rates ``lambda_i p_i P_s,i``."""
    dr = _resolve(disc_r, cfg.buf_r)
    de = _resolve(disc_e, cfg.buf_e)
    masses = phase_masses(cfg)
    tr = transform_for(dr, cfg.lambda_r, cfg.lambda_e)
    te = transform_for(de, cfg.lambda_e, cfg.lambda_r)
    rate_r = cfg.lambda_r * masses.p_r * tr.p_served
    rate_e = cfg.lambda_e * masses.p_e * te.p_served
    return PhaseSolution(tr, te, rate_r, rate_e)


def phase_conditioned_mean(
    cfg: DoubleQueueConfig,
    disc_r,
    disc_e,
    curve_r: FidelityCurve,
    curve_e: FidelityCurve,
) -> float:
    """Average fidelity over all teleportations, mixing the two phases."""
    ph = solve_phases(cfg, disc_r, disc_e)
    mean_r = expected_fidelity(curve_r, ph.transform_r.conditioned())
    mean_e = expected_fidelity(curve_e, ph.transform_e.conditioned())
    return ph.weight_r * mean_r + ph.weight_e * mean_e


def phase_conditioned_pdf(
    cfg: DoubleQueueConfig,
    disc_r,
    disc_e,
    curve_r: FidelityCurve,
    curve_e: FidelityCurve,
    x,
):
    """Density of the teleported fidelity; each phase contributes on its own range."""
    ph = solve_phases(cfg, disc_r, disc_e)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for weight, tr, curve, lam_arr, lam_srv in (
        (ph.weight_r, ph.transform_r, curve_r, cfg.lambda_r, cfg.lambda_e),
        (ph.weight_e, ph.transform_e, curve_e, cfg.lambda_e, cfg.lambda_r),
    ):
        pdf = wait_pdf_for(tr.discipline, lam_arr, lam_srv)
        inside = (x > curve.constant) & (x < curve.initial)
        if np.any(inside):
            out[inside] += weight * fidelity_pdf_transform(pdf, curve, x[inside])
    return out
