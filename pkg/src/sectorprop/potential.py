"""Time-dependent potential models, initial states and the built-in
benchmark problems.

All callables are vectorized over x (numpy arrays in, arrays out).  A model
may carry a SeparableForm V(x,t) = V_s(x) + sum_j g_j(t) w_j(x); the sector
machinery uses it to turn per-time coupling matrices into cached combinations
of time-independent blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import quadrature
from .errors import ConfigError
from .mesh import SpatialMesh, build_mesh


@dataclass(frozen=True)
class SeparableTerm:
    g: Callable[[float], float]
    w: Callable[[np.ndarray], np.ndarray]
    w_prime: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SeparableForm:
    """V(x,t) = static(x) + sum_j terms[j].g(t) * terms[j].w(x)."""
    static: Callable[[np.ndarray], np.ndarray]
    static_prime: Callable[[np.ndarray], np.ndarray] | None
    terms: tuple[SeparableTerm, ...]


@dataclass(frozen=True)
class PotentialModel:
    """Reduced mass plus V(x,t), optionally with d/dx and a separable form."""
    mass: float
    value: Callable[[np.ndarray, float], np.ndarray]
    x_derivative: Callable[[np.ndarray, float], np.ndarray] | None = None
    separable: SeparableForm | None = None

    def __post_init__(self):
        if not (np.isfinite(self.mass) and self.mass > 0.0):
            raise ConfigError(f"reduced mass must be positive, got {self.mass}")


@dataclass(frozen=True)
class InitialState:
    psi0: Callable[[np.ndarray], np.ndarray]
    psi0_derivative: Callable[[np.ndarray], np.ndarray] | None = None
    normalized: bool = True


@dataclass(frozen=True)
class ProblemSpec:
    model: PotentialModel
    initial: InitialState
    x_min: float
    x_max: float
    exact: Callable[[np.ndarray, float], np.ndarray] | None = None
    label: str = ""
    time_unit: float | None = None
    params: dict = field(default_factory=dict)


def sector_average(model: PotentialModel, t_left: float, t_right: float):
    """Freeze the potential at the sector's time midpoint: Vbar(x) =
    V(x, (t_left+t_right)/2)."""
    if not t_left < t_right:
        raise ConfigError(f"empty time sector [{t_left}, {t_right}]")
    t_mid = 0.5 * (t_left + t_right)
    return lambda x: model.value(x, t_mid)


# ----------------------------------------------------------------------------
# Built-in benchmark problems
# ----------------------------------------------------------------------------

def hermite_values(n: int, x: np.ndarray) -> np.ndarray:
    """Physicists' Hermite polynomial H_n on x (H0=1, H1=2x,
    H_{n+1} = 2x H_n - 2n H_{n-1})."""
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if n == 0:
        return h_prev
    h = 2.0 * x
    for k in range(1, n):
        h, h_prev = 2.0 * x * h - 2.0 * k * h_prev, h
    return h


def oscillator_eigenstate(n: int):
    """Normalized harmonic-oscillator eigenstate and its derivative
    (unit mass and frequency)."""
    log_norm = -0.5 * (n * math.log(2.0) + math.lgamma(n + 1)
                       + 0.5 * math.log(math.pi))
    c = math.exp(log_norm)

    def psi(x):
        x = np.asarray(x, dtype=float)
        return c * np.exp(-0.5 * x * x) * hermite_values(n, x)

    def dpsi(x):
        x = np.asarray(x, dtype=float)
        hn = hermite_values(n, x)
        dh = 2.0 * n * hermite_values(n - 1, x) if n > 0 else np.zeros_like(x)
        return c * np.exp(-0.5 * x * x) * (dh - x * hn)

    return psi, dpsi


def problem1(n: int = 0) -> ProblemSpec:
    """Driven oscillator V(x,t) = x^2/2 - 2t with the n-th oscillator
    eigenstate as the initial wave function; the solution is the initial
    state times the phase exp(-i(n+1/2)t + i t^2)."""
    if n < 0:
        raise ConfigError(f"problem1 needs n >= 0, got {n}")
    psi, dpsi = oscillator_eigenstate(n)

    model = PotentialModel(
        mass=1.0,
        value=lambda x, t: 0.5 * np.asarray(x) ** 2 - 2.0 * t,
        x_derivative=lambda x, t: np.asarray(x, dtype=float),
        separable=SeparableForm(
            static=lambda x: 0.5 * np.asarray(x) ** 2,
            static_prime=lambda x: np.asarray(x, dtype=float),
            terms=(SeparableTerm(
                g=lambda t: -2.0 * t,
                w=lambda x: np.ones_like(np.asarray(x, dtype=float)),
                w_prime=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            ),),
        ),
    )

    def exact(x, t):
        return psi(x) * np.exp(-1j * (n + 0.5) * t + 1j * t * t)

    return ProblemSpec(
        model=model,
        initial=InitialState(psi0=lambda x: psi(x).astype(complex),
                             psi0_derivative=lambda x: dpsi(x).astype(complex)),
        x_min=-10.0, x_max=10.0,
        exact=exact,
        label=f"problem1:{n}",
        params={"n": n},
    )


def problem2() -> ProblemSpec:
    """Harmonic oscillator with time-dependent frequency
    omega^2(t) = 4 - 3 exp(-t), coherent-state start."""

    def omega_sq(t):
        return 4.0 - 3.0 * math.exp(-t)

    model = PotentialModel(
        mass=1.0,
        value=lambda x, t: 0.5 * omega_sq(t) * np.asarray(x) ** 2,
        x_derivative=lambda x, t: omega_sq(t) * np.asarray(x, dtype=float),
        separable=SeparableForm(
            static=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            static_prime=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            terms=(SeparableTerm(
                g=lambda t: 0.5 * omega_sq(t),
                w=lambda x: np.asarray(x, dtype=float) ** 2,
                w_prime=lambda x: 2.0 * np.asarray(x, dtype=float),
            ),),
        ),
    )

    c = math.pi ** -0.25
    return ProblemSpec(
        model=model,
        initial=InitialState(
            psi0=lambda x: (c * np.exp(-0.5 * np.asarray(x) ** 2)).astype(complex),
            psi0_derivative=lambda x: (-np.asarray(x, dtype=float) * c
                                       * np.exp(-0.5 * np.asarray(x) ** 2)
                                       ).astype(complex)),
        x_min=-10.0, x_max=10.0,
        label="problem2",
        params={"omega_sq": omega_sq},
    )


# HF molecule in a monochromatic laser field (atomic units).
_P3_MASS = 1745.0
_P3_D = 0.2251
_P3_ALPHA = 1.1741
_P3_A = 0.011025
_P3_OMEGA = 0.01787
_P3_XMIN = -1.0
_P3_XMAX = 4.32


def _morse_ground_normalizer() -> tuple[float, float, float]:
    """(multiplier, rho, omega0) with the multiplier fixed by quadrature
    normalization of the Morse ground state over the problem domain."""
    omega0 = _P3_ALPHA * math.sqrt(2.0 * _P3_D / _P3_MASS)
    rho = 2.0 * _P3_D / omega0

    def raw(x):
        x = np.asarray(x, dtype=float)
        return np.exp(-(rho - 0.5) * _P3_ALPHA * x - rho * np.exp(-_P3_ALPHA * x))

    def raw_prime(x):
        x = np.asarray(x, dtype=float)
        return raw(x) * (-(rho - 0.5) * _P3_ALPHA
                         + rho * _P3_ALPHA * np.exp(-_P3_ALPHA * x))

    mesh = build_mesh(_P3_XMIN, _P3_XMAX, 2000)
    r = raw(mesh.nodes)
    dr = raw_prime(mesh.nodes)
    norm_sq = quadrature.composite_augmented(r * r, 2.0 * r * dr, mesh)
    return 1.0 / math.sqrt(float(norm_sq)), rho, omega0


def problem3() -> ProblemSpec:
    """Morse oscillator (HF molecule) driven by a laser field A cos(wt) x,
    started in the Morse ground state; natural time unit tau = 2 pi / w."""
    sigma, rho, omega0 = _morse_ground_normalizer()

    def morse(x):
        x = np.asarray(x, dtype=float)
        return _P3_D * (1.0 - np.exp(-_P3_ALPHA * x)) ** 2

    def morse_prime(x):
        x = np.asarray(x, dtype=float)
        e = np.exp(-_P3_ALPHA * x)
        return 2.0 * _P3_D * _P3_ALPHA * e * (1.0 - e)

    model = PotentialModel(
        mass=_P3_MASS,
        value=lambda x, t: morse(x) + _P3_A * math.cos(_P3_OMEGA * t)
        * np.asarray(x, dtype=float),
        x_derivative=lambda x, t: morse_prime(x) + _P3_A * math.cos(_P3_OMEGA * t),
        separable=SeparableForm(
            static=morse,
            static_prime=morse_prime,
            terms=(SeparableTerm(
                g=lambda t: _P3_A * math.cos(_P3_OMEGA * t),
                w=lambda x: np.asarray(x, dtype=float),
                w_prime=lambda x: np.ones_like(np.asarray(x, dtype=float)),
            ),),
        ),
    )

    def psi0(x):
        x = np.asarray(x, dtype=float)
        return (sigma * np.exp(-(rho - 0.5) * _P3_ALPHA * x
                               - rho * np.exp(-_P3_ALPHA * x))).astype(complex)

    def dpsi0(x):
        x = np.asarray(x, dtype=float)
        return psi0(x) * (-(rho - 0.5) * _P3_ALPHA
                          + rho * _P3_ALPHA * np.exp(-_P3_ALPHA * x))

    tau = 2.0 * math.pi / _P3_OMEGA
    return ProblemSpec(
        model=model,
        initial=InitialState(psi0=psi0, psi0_derivative=dpsi0),
        x_min=_P3_XMIN, x_max=_P3_XMAX,
        label="problem3",
        time_unit=tau,
        params={
            "mass": _P3_MASS, "D": _P3_D, "alpha": _P3_ALPHA, "A": _P3_A,
            "omega": _P3_OMEGA, "omega0": omega0, "rho": rho,
            "normalizer": sigma, "norm_of_raw_state": 1.0 / sigma,
        },
    )


def get_problem(selector: str) -> ProblemSpec:
    """Resolve a CLI problem selector: problem1:<n>, problem2, problem3."""
    name, _, arg = selector.partition(":")
    if name == "problem1":
        n = int(arg) if arg else 0
        return problem1(n)
    if name == "problem2":
        if arg:
            raise ConfigError("problem2 takes no argument")
        return problem2()
    if name == "problem3":
        if arg:
            raise ConfigError("problem3 takes no argument")
        return problem3()
    raise ConfigError(f"unknown problem selector {selector!r}")
