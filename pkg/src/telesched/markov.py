"""Steady state of the double-queue birth-death chain.

The state ``n`` counts buffered requests; a surplus of ``-n`` stored EPR
pairs is a negative count, so ``-buf_e <= n <= buf_r``.  Requests move the
chain up at rate ``lambda_r`` and EPR arrivals move it down at ``lambda_e``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from telesched.errors import StabilityError

LOAD_ONE_EPS = 1e-9


@dataclass(frozen=True)
class DoubleQueueConfig:
    """Rates, buffer sizes and dephasing rates of a two-buffer node.

    A buffer size of ``None`` means unbounded; only the analytic infinite-
    buffer disciplines and the simulator accept it.
    """

    lambda_e: float
    lambda_r: float
    buf_e: int | None
    buf_r: int | None
    gamma_r: float = 0.0
    gamma_e: float = 0.0

    def __post_init__(self):
        if not (self.lambda_e > 0 and self.lambda_r > 0):
            raise ValueError("arrival rates must be positive")
        for name in ("buf_e", "buf_r"):
            b = getattr(self, name)
            if b is not None and (int(b) != b or b < 0):
                raise ValueError(f"{name} must be a non-negative integer or None, got {b!r}")
        if self.buf_e is not None and self.buf_r is not None and self.buf_e + self.buf_r < 1:
            raise ValueError("at least one buffer slot is required")
        if self.gamma_r < 0 or self.gamma_e < 0:
            raise ValueError("dephasing rates must be non-negative")

    @property
    def load(self) -> float:
        return self.lambda_r / self.lambda_e

    @property
    def finite(self) -> bool:
        return self.buf_e is not None and self.buf_r is not None


@dataclass(frozen=True)
class OccupancyDistribution:
    buf_e: int
    buf_r: int
    probabilities: np.ndarray

    def __post_init__(self):
        p = self.probabilities
        if p.shape != (self.buf_e + self.buf_r + 1,):
            raise ValueError("probability vector has the wrong length")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("not a probability distribution")

    @property
    def states(self) -> np.ndarray:
        return np.arange(-self.buf_e, self.buf_r + 1)

    def __getitem__(self, n: int) -> float:
        if not -self.buf_e <= n <= self.buf_r:
            raise IndexError(n)
        return float(self.probabilities[n + self.buf_e])

    def mass(self, lo: int, hi: int) -> float:
        """``P(lo <= N <= hi)`` with the bounds clipped to the support."""
        lo = max(lo, -self.buf_e)
        hi = min(hi, self.buf_r)
        if lo > hi:
            return 0.0
        return float(self.probabilities[lo + self.buf_e : hi + self.buf_e + 1].sum())


def _require_finite(cfg: DoubleQueueConfig) -> tuple[int, int]:
    if not cfg.finite:
        raise ValueError("stationary distribution needs finite buffers on both sides")
    return int(cfg.buf_e), int(cfg.buf_r)


def stationary_distribution(cfg: DoubleQueueConfig) -> OccupancyDistribution:
    """Truncated geometric law ``pi_n ~ load**(n + buf_e)``."""
    be, br = _require_finite(cfg)
    size = be + br + 1
    rho = cfg.load
    if abs(rho - 1.0) < LOAD_ONE_EPS:
        p = np.full(size, 1.0 / size)
    else:
        # log-space weights, shifted so the largest is exp(0)
        logw = np.arange(size) * math.log(rho)
        w = np.exp(logw - logw.max())
        p = w / w.sum()
    return OccupancyDistribution(be, br, p)


def generator_matrix(cfg: DoubleQueueConfig) -> np.ndarray:
    be, br = _require_finite(cfg)
    size = be + br + 1
    q = np.zeros((size, size))
    for i in range(size - 1):
        q[i, i + 1] = cfg.lambda_r
        q[i + 1, i] = cfg.lambda_e
    q -= np.diag(q.sum(axis=1))
    return q


def numeric_stationary(cfg: DoubleQueueConfig) -> OccupancyDistribution:
    """Solve ``pi Q = 0, sum(pi) = 1`` directly; a check on the closed form."""
    be, br = _require_finite(cfg)
    q = generator_matrix(cfg)
    a = np.vstack([q.T, np.ones(q.shape[0])])
    b = np.zeros(q.shape[0] + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return OccupancyDistribution(be, br, pi / pi.sum())


@dataclass(frozen=True)
class PhaseMasses:
    """Occupancy masses that feed the buffering and matching rates."""

    requests_waiting: float  # P(N >= 1)
    pairs_waiting: float  # P(N <= -1)
    empty: float  # P(N = 0)

    @property
    def p_e(self) -> float:
        return self.pairs_waiting + self.empty

    @property
    def p_r(self) -> float:
        return self.requests_waiting + self.empty


def phase_masses(cfg: DoubleQueueConfig) -> PhaseMasses:
    """Masses for finite buffers, or with one unbounded side when it is stable."""
    if cfg.finite:
        pi = stationary_distribution(cfg)
        return PhaseMasses(pi.mass(1, cfg.buf_r), pi.mass(-cfg.buf_e, -1), pi[0])
    rho = cfg.load
    if cfg.buf_r is None and cfg.buf_e is None:
        raise StabilityError("both buffers unbounded: no stationary regime")
    if cfg.buf_r is None:
        if rho >= 1:
            raise StabilityError(f"unbounded request buffer needs load < 1, got {rho}")
        # pi_n = (1 - rho) rho**(n + B_e) on n >= -B_e
        be = cfg.buf_e
        empty = (1 - rho) * rho**be
        pairs = 1 - rho**be
        return PhaseMasses(1 - empty - pairs, pairs, empty)
    if rho <= 1:
        raise StabilityError(f"unbounded EPR buffer needs load > 1, got {rho}")
    inv = 1.0 / rho
    br = cfg.buf_r
    empty = (1 - inv) * inv**br
    reqs = 1 - inv**br
    return PhaseMasses(reqs, 1 - empty - reqs, empty)


def buffering_probabilities(cfg: DoubleQueueConfig) -> tuple[float, float]:
    """``(p_e, p_r)``: chance an arriving pair / request finds nothing to match."""
    m = phase_masses(cfg)
    return m.p_e, m.p_r


def service_probability(load: float, buf: int) -> float:
    """Served fraction of buffered arrivals in a pushout buffer of size ``buf``.

    ``load`` is the buffered stream's own arrival rate over the rate of the
    stream that serves it.
    """
    if not load > 0:
        raise ValueError("load must be positive")
    if buf < 1:
        raise ValueError("buffer size must be >= 1")
    if abs(load - 1.0) < LOAD_ONE_EPS:
        return buf / (buf + 1.0)
    if load > 1.0:
        # divide through by load**(buf+1) so nothing overflows
        inv = 1.0 / load
        return (inv - inv ** (buf + 1)) / (1.0 - inv ** (buf + 1))
    return -math.expm1(buf * math.log(load)) / -math.expm1((buf + 1) * math.log(load))


def phase_loads(cfg: DoubleQueueConfig) -> tuple[float, float]:
    """``(request-phase load, EPR-phase load)``: each buffer's arrivals over its server."""
    return cfg.lambda_r / cfg.lambda_e, cfg.lambda_e / cfg.lambda_r
