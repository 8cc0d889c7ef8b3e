"""Coefficient propagation across a sector by constant-plus-correction
exponential steps.

Per substep [t_a, t_b] the coefficient matrix H(t) = diag(E_n) + dV(t) is
fitted by a shifted-Legendre linear model through 2-point Gauss samples:
H0 (the average) is diagonalized orthogonally, and the order-4 step applies

    T^D(h) = exp(h A0^D) (I + N1(h)),      A0^D = -i diag(eigenvalues),

where N1 is the first modified-Neumann integral of the linear residual,
available in closed form entry by entry.  The order-2 step freezes H at the
substep midpoint and is exactly unitary; non-unitarity enters only through
the correction term.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .errors import ConfigError, NumericsError
from .sector import CoefficientState, TimeSector, delta_v

JACOBI_TOL = 1e-14
_SQRT3 = np.sqrt(3.0)

# The closed form of the Neumann phase factor cancels like theta^3 against
# O(1) terms, so it only reaches 1e-12 accuracy for |theta| above ~0.2; the
# series below carries 10 terms and matches it there to machine precision.
_NEUMANN_SERIES_CUT = 0.25
_NEUMANN_SERIES = np.array([k / float(factorial(k + 2))
                            for k in range(1, 11)])


def _round_robin(n: int):
    """Disjoint-pair rounds covering every (p, q) once per sweep."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    rounds = []
    arr = players[1:]
    for _ in range(m - 1):
        row = [players[0]] + arr
        pairs = [(min(row[i], row[m - 1 - i]), max(row[i], row[m - 1 - i]))
                 for i in range(m // 2) if row[i] != -1 and row[m - 1 - i] != -1]
        rounds.append(pairs)
        arr = arr[-1:] + arr[:-1]
    return rounds


_ROUND_CACHE: dict[int, list] = {}


def _off_norm(a):
    off = a - np.diag(np.diag(a))
    return np.sqrt(np.sum(off * off))


def jacobi_eigh(a: np.ndarray, tol: float = JACOBI_TOL,
                max_sweeps: int = 40) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi diagonalization of a real symmetric matrix.

    Sweeps apply round-robin sets of disjoint rotations until the
    off-diagonal Frobenius mass falls below tol * ||a||_F.  Returns
    (eigenvalues ascending, orthogonal matrix d) with a = d diag(w) d^T.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ConfigError("jacobi_eigh needs a square matrix")
    v = np.eye(n)
    norm = np.sqrt(np.sum(a * a))
    if n == 1 or norm == 0.0:
        return np.diag(a).copy(), v
    if n not in _ROUND_CACHE:
        _ROUND_CACHE[n] = _round_robin(n)
    rounds = _ROUND_CACHE[n]

    for _ in range(max_sweeps):
        if _off_norm(a) <= tol * norm:
            order = np.argsort(np.diag(a), kind="stable")
            return np.diag(a)[order].copy(), v[:, order]
        for pairs in rounds:
            p = np.array([pq[0] for pq in pairs])
            q = np.array([pq[1] for pq in pairs])
            apq = a[p, q]
            live = np.abs(apq) > 1e-300
            if not np.any(live):
                continue
            p, q, apq = p[live], q[live], apq[live]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t = np.where(theta == 0.0, 1.0, t)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            j = np.eye(n)
            j[p, p] = c
            j[q, q] = c
            j[p, q] = s
            j[q, p] = -s
            a = j.T @ a @ j
            v = v @ j
    raise NumericsError("Jacobi diagonalization did not converge")


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float
    order: int = 4

    def __post_init__(self):
        if self.order not in (2, 4):
            raise ConfigError(f"propagator order must be 2 or 4, got {self.order}")
        if not (np.isfinite(self.dt) and self.dt > 0.0):
            raise ConfigError(f"substep width must be positive, got {self.dt}")


@dataclass(frozen=True)
class SubstepOperators:
    """Diagonalized substep data: H0 = d diag(lam) d^T, h1d = d^T H1 d."""
    h: float
    h0: np.ndarray
    h1: np.ndarray
    d: np.ndarray
    lam: np.ndarray
    h1d: np.ndarray = field(repr=False)


def legendre_fit(sector: TimeSector, t_a: float, t_b: float):
    """Linear shifted-Legendre fit of H(t) = diag(E) + dV(t) over [t_a, t_b]
    through the 2-point Gauss samples: H(t) ~ H0 + H1 * h * P1*((t-t_a)/h)."""
    h = t_b - t_a
    t1 = t_a + 0.5 * h - 0.5 * h / _SQRT3
    t2 = t_a + 0.5 * h + 0.5 * h / _SQRT3
    e = np.diag(sector.energies)
    ha = e + delta_v(sector, t1)
    hb = e + delta_v(sector, t2)
    h0 = 0.5 * (ha + hb)
    h1 = (_SQRT3 / (2.0 * h)) * (hb - ha)
    return h0, h1


def substep_operators(sector: TimeSector, t_a: float, t_b: float) -> SubstepOperators:
    h0, h1 = legendre_fit(sector, t_a, t_b)
    lam, d = jacobi_eigh(h0)
    return SubstepOperators(h=t_b - t_a, h0=h0, h1=h1, d=d, lam=lam,
                            h1d=d.T @ h1 @ d)


def neumann_n1(lam: np.ndarray, h1d: np.ndarray, h: float) -> np.ndarray:
    """First modified-Neumann integral N1(h) of the linear residual, in the
    eigenbasis of H0.

    N1_ij = [(h D_ji + 2) + (h D_ji - 2) exp(h D_ji)] / D_ji^2 * (A1^D)_ij
    with D_ji = -i (lam_j - lam_i) and A1^D = -i H1^D; small phases use the
    series h^2 sum_k k theta^k / (k+2)! to dodge cancellation.
    """
    lam = np.asarray(lam, dtype=float)
    theta = -1j * h * (lam[None, :] - lam[:, None])
    a1d = -1j * np.asarray(h1d)
    small = np.abs(theta) < _NEUMANN_SERIES_CUT
    theta_safe = np.where(small, 1.0, theta)
    closed = h * h * ((theta + 2.0) + (theta - 2.0) * np.exp(theta)) \
        / (theta_safe * theta_safe)
    series = np.zeros_like(theta)
    for coeff in _NEUMANN_SERIES[::-1]:
        series = (series + coeff) * theta
    series = h * h * series
    return np.where(small, series, closed) * a1d


def step_order2(state: CoefficientState, sector: TimeSector,
                t_a: float, t_b: float) -> CoefficientState:
    """Midpoint-frozen exponential step; exactly unitary."""
    h = t_b - t_a
    hbar = np.diag(sector.energies) + delta_v(sector, 0.5 * (t_a + t_b))
    lam, d = jacobi_eigh(hbar)
    phases = np.exp(-1j * h * lam)
    c = d @ (phases * (d.T @ state.c))
    return CoefficientState(c, t_b)


def step_order4(state: CoefficientState, sector: TimeSector,
                t_a: float, t_b: float) -> CoefficientState:
    """Linear-fit step with the first modified-Neumann correction."""
    ops = substep_operators(sector, t_a, t_b)
    n1 = neumann_n1(ops.lam, ops.h1d, ops.h)
    phases = np.exp(-1j * ops.h * ops.lam)
    cd = ops.d.T @ state.c
    cd = phases * (cd + n1 @ cd)
    return CoefficientState(ops.d @ cd, t_b)


def propagate_sector(state: CoefficientState, sector: TimeSector,
                     config: PropagatorConfig, norm_log: list | None = None,
                     on_substep=None) -> CoefficientState:
    """March the coefficients from sector.t_left to sector.t_right in equal
    substeps of width config.dt (which must tile the sector width)."""
    if abs(state.t - sector.t_left) > 1e-9 * max(1.0, abs(sector.t_left)):
        raise ConfigError(
            f"state at t={state.t} does not start sector {sector.index}")
    width = sector.width
    if width == 0.0:
        return state.copy()
    n_sub = int(round(width / config.dt))
    if n_sub < 1 or abs(n_sub * config.dt - width) > 1e-9 * width:
        raise ConfigError(
            f"substep width {config.dt} does not divide the sector width "
            f"{width}")
    step = step_order4 if config.order == 4 else step_order2
    for i in range(n_sub):
        t_a = sector.t_left + i * (width / n_sub)
        t_b = sector.t_left + (i + 1) * (width / n_sub)
        if i == n_sub - 1:
            t_b = sector.t_right
        state = step(state, sector, t_a, t_b)
        if not np.all(np.isfinite(state.c.view(float))):
            raise NumericsError(
                f"non-finite coefficients after substep ending {t_b}")
        if norm_log is not None:
            norm_log.append(state.norm)
        if on_substep is not None:
            on_substep(state)
    return state
