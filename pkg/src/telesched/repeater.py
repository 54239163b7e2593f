"""A single repeater between two end nodes, modelled as a double queue.

Pairs shared with A and pairs shared with B arrive at the same rate ``mu``
and wait in separate buffers.  When both sides hold a pair, the repeater
swaps the newest halves.  The resulting end-to-end pair inherits the
dephasing of whichever half waited, so both phases use the Bell-pair curve
``1/2 + 1/2 exp(-2 gamma t)``.
"""
from __future__ import annotations

from dataclasses import dataclass

from telesched import laplace
from telesched.markov import DoubleQueueConfig
from telesched.qmath import DephasingParams, FidelityCurve, curve_bell


@dataclass(frozen=True)
class RepeaterConfig:
    mu: float
    gamma: float
    buf: int
    discipline: str = "lifo-po"

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if int(self.buf) != self.buf or self.buf < 1:
            raise ValueError("buf must be a positive integer")
        laplace.Discipline.from_name(self.discipline, self.buf)


@dataclass(frozen=True)
class RepeaterModel:
    config: DoubleQueueConfig
    disc_a: laplace.Discipline
    disc_b: laplace.Discipline
    curve_a: FidelityCurve
    curve_b: FidelityCurve


def to_double_queue(rc: RepeaterConfig) -> RepeaterModel:
    """Symmetric double queue at load one with the Bell-pair curve on both sides.

    Side A plays the request role and side B the EPR role; the symmetry
    makes the labelling immaterial.
    """
    cfg = DoubleQueueConfig(rc.mu, rc.mu, rc.buf, rc.buf, rc.gamma, rc.gamma)
    disc = laplace.Discipline.from_name(rc.discipline, rc.buf)
    curve = curve_bell(DephasingParams(rc.gamma))
    return RepeaterModel(cfg, disc, disc, curve, curve)


def mean_fidelity(rc: RepeaterConfig) -> float:
    m = to_double_queue(rc)
    return laplace.phase_conditioned_mean(m.config, m.disc_a, m.disc_b, m.curve_a, m.curve_b)


def mean_infidelity(rc: RepeaterConfig) -> float:
    """``1 - E[F]`` of the end-to-end pairs; lies in ``[0, 1/2]``."""
    return 1.0 - mean_fidelity(rc)


def p_serve(rc: RepeaterConfig) -> float:
    """Probability that a stored half is eventually swapped (``B/(B+1)`` for pushout)."""
    m = to_double_queue(rc)
    return laplace.solve_phases(m.config, m.disc_a, m.disc_b).p_serve_r
