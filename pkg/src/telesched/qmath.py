"""Density-matrix machinery and closed-form fidelity curves.

The matrix routines (``dephase``, ``werner_state``, ``teleport_channel``,
``fidelity_to_pure``) are the ground truth.  The scalar closed forms
(``single_qubit_fidelity``, ``teleported_fidelity`` and the two
``FidelityCurve`` constructors) are checked against them in the tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

ATOL = 1e-12

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

# U_ij for outcome (i, j): 00 -> I, 01 -> X, 10 -> Z, 11 -> iY
PAULI_CORRECTIONS = {
    (0, 0): IDENTITY_2,
    (0, 1): SIGMA_X,
    (1, 0): SIGMA_Z,
    (1, 1): 1j * SIGMA_Y,
}

PHI_PLUS = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)


def bell_state(i: int, j: int) -> np.ndarray:
    """Bell vector ``(I (x) U_ij)|Phi+>``; ``bell_state(0, 0)`` is ``|Phi+>``."""
    return np.kron(IDENTITY_2, PAULI_CORRECTIONS[(i, j)]) @ PHI_PLUS


@dataclass(frozen=True)
class PureQubit:
    """Request qubit ``alpha|0> + beta|1>``."""

    alpha: complex
    beta: complex

    def __post_init__(self):
        norm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(norm - 1.0) > ATOL:
            raise ValueError(f"amplitudes not normalised: |a|^2+|b|^2 = {norm!r}")

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "PureQubit":
        """Bloch-sphere parametrisation."""
        return cls(complex(math.cos(theta / 2)), complex(np.exp(1j * phi) * math.sin(theta / 2)))

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=complex)

    @property
    def populations(self) -> tuple[float, float]:
        return abs(self.alpha) ** 2, abs(self.beta) ** 2

    def density(self) -> "DensityMatrix":
        v = self.vector
        return DensityMatrix(np.outer(v, v.conj()))


PLUS = PureQubit(1 / math.sqrt(2), 1 / math.sqrt(2))
ZERO = PureQubit(1.0, 0.0)
ONE = PureQubit(0.0, 1.0)


class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite 2x2 or 4x4 matrix.

    Validation happens on construction, so every instance satisfies the
    invariants.
    """

    __slots__ = ("entries",)

    def __init__(self, entries, *, check: bool = True):
        m = np.array(entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in (2, 4):
            raise ValueError(f"density matrix must be 2x2 or 4x4, got shape {m.shape}")
        if check:
            if not np.allclose(m, m.conj().T, atol=ATOL, rtol=0):
                raise ValueError("density matrix is not Hermitian")
            tr = np.trace(m)
            if abs(tr - 1.0) > ATOL:
                raise ValueError(f"density matrix trace is {tr!r}, expected 1")
            if np.linalg.eigvalsh(m).min() < -1e-10:
                raise ValueError("density matrix has a negative eigenvalue")
        m.setflags(write=False)
        self.entries = m

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim}, entries={self.entries.tolist()!r})"

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def allclose(self, other, atol: float = ATOL) -> bool:
        return np.allclose(self.entries, np.asarray(other), atol=atol, rtol=0)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)


@dataclass(frozen=True)
class DephasingParams:
    gamma: float

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError(f"dephasing rate must be >= 0, got {self.gamma!r}")


def _check_time(t: float, name: str = "t") -> None:
    if not t >= 0:
        raise ValueError(f"{name} must be >= 0, got {t!r}")


def dephase(rho: DensityMatrix, params: DephasingParams, t: float) -> DensityMatrix:
    """Phase damping: off-diagonals decay by ``exp(-gamma t)``."""
    _check_time(t)
    if rho.dim != 2:
        raise ValueError("dephase acts on a single qubit")
    decay = math.exp(-params.gamma * t)
    m = np.array(rho.entries)
    m[0, 1] *= decay
    m[1, 0] *= decay
    return DensityMatrix(m)


def fidelity_to_pure(psi, rho: DensityMatrix) -> float:
    """``tr(|psi><psi| rho)`` for a pure target given as PureQubit or vector."""
    v = psi.vector if isinstance(psi, PureQubit) else np.asarray(psi, dtype=complex)
    if v.shape != (rho.dim,):
        raise ValueError(f"state of dimension {v.shape} does not match rho of dim {rho.dim}")
    return float(np.real(v.conj() @ rho.entries @ v))


def single_qubit_fidelity(q: PureQubit, params: DephasingParams, t: float) -> float:
    _check_time(t)
    a2, b2 = q.populations
    return a2 * a2 + 2.0 * math.exp(-params.gamma * t) * a2 * b2 + b2 * b2


def inverse_fidelity_time(q: PureQubit, params: DephasingParams, f: float) -> float:
    """Storage time after which ``q`` has decayed to fidelity ``f``."""
    a2, b2 = q.populations
    floor = a2 * a2 + b2 * b2
    coherence = 2.0 * a2 * b2
    if coherence <= 0.0:
        raise ValueError("basis state never dephases; the inverse is undefined")
    if params.gamma <= 0.0:
        raise ValueError("inverse requires a positive dephasing rate")
    # within ATOL of the floor the time is not resolvable in double precision
    if not floor + ATOL < f <= 1.0 + ATOL:
        raise ValueError(f"fidelity {f!r} outside attainable range ({floor}, 1]")
    return max(0.0, (math.log(coherence) - math.log(f - floor)) / params.gamma)


def bell_fidelity(params: DephasingParams, t: float) -> float:
    _check_time(t)
    return 0.5 * (1.0 + math.exp(-2.0 * params.gamma * t))


def werner_state(f: float) -> DensityMatrix:
    if not 0.25 - ATOL <= f <= 1.0 + ATOL:
        raise ValueError(f"Werner fidelity must lie in [1/4, 1], got {f!r}")
    proj = np.outer(PHI_PLUS, PHI_PLUS.conj())
    return DensityMatrix((1.0 - f) / 3.0 * np.eye(4) + (4.0 * f - 1.0) / 3.0 * proj)


def teleport_channel(werner: DensityMatrix, rho: DensityMatrix) -> DensityMatrix:
    """Teleport ``rho`` through the two-qubit resource ``werner``.

    Each Bell outcome ``phi_ij`` contributes its overlap with the resource
    times the Pauli-rotated input.
    """
    if werner.dim != 4 or rho.dim != 2:
        raise ValueError("teleport_channel expects a 4x4 resource and a 2x2 input")
    out = np.zeros((2, 2), dtype=complex)
    for (i, j), u in PAULI_CORRECTIONS.items():
        b = bell_state(i, j)
        weight = np.real(b.conj() @ werner.entries @ b)
        out += weight * (u @ rho.entries @ u.conj().T)
    return DensityMatrix(out)


def teleported_fidelity(
    q: PureQubit,
    t1: float,
    t2: float,
    params: DephasingParams,
    epr_params: DephasingParams | None = None,
) -> float:
    """Fidelity of ``q`` stored for ``t1`` then teleported with a pair stored for ``t2``.

    Teleporting through a Werner resource of fidelity F is a depolarising
    channel, so the result is ``(4F - 1)/3 * f1 + 2(1 - F)/3`` with ``f1``
    the fidelity after storage.  ``epr_params`` defaults to ``params``.
    """
    _check_time(t1, "t1")
    _check_time(t2, "t2")
    epr_params = params if epr_params is None else epr_params
    f1 = single_qubit_fidelity(q, params, t1)
    e2 = math.exp(-2.0 * epr_params.gamma * t2)
    return (1.0 + 2.0 * e2) / 3.0 * f1 + (1.0 - e2) / 3.0


def teleported_fidelity_matrix(
    q: PureQubit,
    t1: float,
    t2: float,
    params: DephasingParams,
    epr_params: DephasingParams | None = None,
) -> float:
    """Same quantity as :func:`teleported_fidelity`, via explicit matrices."""
    epr_params = params if epr_params is None else epr_params
    stored = dephase(q.density(), params, t1)
    resource = werner_state(bell_fidelity(epr_params, t2))
    return fidelity_to_pure(q, teleport_channel(resource, stored))


@dataclass(frozen=True)
class FidelityCurve:
    """``F(t) = constant + amplitude * exp(-decay_rate * t)``."""

    constant: float
    amplitude: float
    decay_rate: float

    def __post_init__(self):
        if self.amplitude < 0 or self.decay_rate < 0:
            raise ValueError("amplitude and decay_rate must be non-negative")
        if not -ATOL <= self.constant <= 1 + ATOL:
            raise ValueError(f"constant {self.constant!r} outside [0, 1]")
        if not -ATOL <= self.constant + self.amplitude <= 1 + ATOL:
            raise ValueError("F(0) outside [0, 1]")

    def __call__(self, t):
        return self.constant + self.amplitude * np.exp(-self.decay_rate * np.asarray(t, dtype=float))

    @property
    def initial(self) -> float:
        return self.constant + self.amplitude

    @property
    def limit(self) -> float:
        return self.constant if self.decay_rate > 0 else self.initial

    @property
    def strictly_decreasing(self) -> bool:
        return self.amplitude > 0 and self.decay_rate > 0

    def inverse(self, x):
        """Time at which the curve reaches ``x``; needs a strictly decreasing curve."""
        if not self.strictly_decreasing:
            raise ValueError("constant curve has no inverse")
        x = np.asarray(x, dtype=float)
        if np.any((x <= self.constant) | (x > self.initial)):
            raise ValueError(f"fidelity outside ({self.constant}, {self.initial}]")
        return np.log(self.amplitude / (x - self.constant)) / self.decay_rate

    def inverse_jacobian(self, x):
        """``|d inverse / dx|``."""
        x = np.asarray(x, dtype=float)
        return 1.0 / (self.decay_rate * (x - self.constant))


def curve_request(q: PureQubit, params: DephasingParams) -> FidelityCurve:
    """Teleported fidelity vs. storage time of the request (fresh pair)."""
    a2, b2 = q.populations
    return FidelityCurve(a2 * a2 + b2 * b2, 2.0 * a2 * b2, params.gamma)


def curve_epr(q: PureQubit, params: DephasingParams) -> FidelityCurve:
    """Teleported fidelity vs. storage time of the pair (fresh request).

    The depolarising channel is isotropic, so the constants do not depend
    on ``q``: evaluating the closed form at ``t1 = 0`` gives
    ``(3 + c)/6 + (3 - c)/6 * exp(-2 gamma t)`` with ``c = 1``.
    """
    del q
    c = 1.0
    return FidelityCurve((3.0 + c) / 6.0, (3.0 - c) / 6.0, 2.0 * params.gamma)


def curve_bell(params: DephasingParams) -> FidelityCurve:
    """Fidelity of a stored Bell pair to ``|Phi+>``."""
    return FidelityCurve(0.5, 0.5, 2.0 * params.gamma)


def expected_fidelity(curve: FidelityCurve, laplace: Callable[[float], float]) -> float:
    """Mean of ``curve(T)`` given ``laplace(s) = E[exp(-s T)]``."""
    if curve.amplitude == 0.0:
        return curve.constant
    return curve.constant + curve.amplitude * float(laplace(curve.decay_rate))
