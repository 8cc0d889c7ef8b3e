"""Analytic references, the Crank-Nicolson comparator and error metrics.

err_norm is the signed defect of the final-time norm against the reference,
both measured by the composite classical Lobatto rule on the mesh nodes;
err_abs is the maximum pointwise deviation over the nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quadrature
from .errors import ConfigError, NumericsError
from .mesh import SpatialMesh
from .potential import ProblemSpec, oscillator_eigenstate


def analytic_problem1(x, t: float, n: int) -> np.ndarray:
    """Closed-form solution of the driven-oscillator test problem."""
    psi, _ = oscillator_eigenstate(n)
    return psi(x) * np.exp(-1j * (n + 0.5) * t + 1j * t * t)


@dataclass(frozen=True)
class GridSolution:
    """Crank-Nicolson wave function on its uniform grid at final time."""
    x: np.ndarray
    psi: np.ndarray
    dx: float
    dt: float
    norm_drift: float = 0.0


@dataclass(frozen=True)
class ErrorReport:
    err_n: float | None
    err_a: float | None
    wall_time_s: float
    params: dict = field(default_factory=dict)


def _thomas(lower, diag, upper, rhs):
    """Tridiagonal solve (Thomas algorithm) in complex arithmetic."""
    n = diag.size
    cp = np.empty(n - 1, dtype=complex)
    dp = np.empty(n, dtype=complex)
    beta = diag[0]
    if beta == 0:
        raise NumericsError("singular tridiagonal system")
    cp[0] = upper[0] / beta
    dp[0] = rhs[0] / beta
    for i in range(1, n):
        beta = diag[i] - lower[i - 1] * cp[i - 1]
        if beta == 0:
            raise NumericsError("singular tridiagonal system")
        if i < n - 1:
            cp[i] = upper[i] / beta
        dp[i] = (rhs[i] - lower[i - 1] * dp[i - 1]) / beta
    x = np.empty(n, dtype=complex)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def crank_nicolson_solve(problem: ProblemSpec, dx: float, dt: float,
                         t_final: float) -> GridSolution:
    """March the wave function to t_final with the one-step implicit
    Crank-Nicolson scheme on a uniform grid with Dirichlet ends.

    The Hamiltonian is frozen at each step's midpoint time; every step is a
    Cayley transform of a Hermitian matrix and conserves the grid norm.
    """
    span = problem.x_max - problem.x_min
    n_cells = int(round(span / dx))
    if n_cells < 2 or abs(n_cells * dx - span) > 1e-9 * span:
        raise ConfigError(f"dx={dx} does not tile the domain [{problem.x_min}, "
                          f"{problem.x_max}]")
    n_steps = int(round(t_final / dt))
    if n_steps < 1 or abs(n_steps * dt - t_final) > 1e-9 * max(t_final, 1.0):
        raise ConfigError(f"dt={dt} does not tile the time range {t_final}")

    x = problem.x_min + dx * np.arange(n_cells + 1)
    xi = x[1:-1]
    mass = problem.model.mass
    kin = 1.0 / (2.0 * mass * dx * dx)

    z = np.asarray(problem.initial.psi0(xi), dtype=complex)
    norm0 = np.linalg.norm(z)
    off = np.full(xi.size - 1, -kin, dtype=complex)
    half = 0.5j * dt
    drift = 0.0
    for m in range(n_steps):
        t_mid = (m + 0.5) * dt
        diag_h = 2.0 * kin + np.asarray(problem.model.value(xi, t_mid),
                                        dtype=float)
        rhs = (1.0 - half * diag_h) * z
        rhs[:-1] -= half * off * z[1:]
        rhs[1:] -= half * off * z[:-1]
        z = _thomas(half * off, 1.0 + half * diag_h, half * off, rhs)
        drift = max(drift, abs(np.linalg.norm(z) - norm0))

    psi = np.zeros(x.size, dtype=complex)
    psi[1:-1] = z
    return GridSolution(x=x, psi=psi, dx=dx, dt=dt, norm_drift=float(drift))


def err_norm(psi_approx, psi_exact, mesh: SpatialMesh) -> float:
    """Signed norm defect: Lobatto integral of |approx|^2 minus |exact|^2."""
    a = quadrature.composite_classical(np.abs(np.asarray(psi_approx)) ** 2, mesh)
    b = quadrature.composite_classical(np.abs(np.asarray(psi_exact)) ** 2, mesh)
    return float(a - b)


def err_abs(psi_approx, psi_exact) -> float:
    """Maximum pointwise deviation over the shared nodes."""
    return float(np.max(np.abs(np.asarray(psi_approx) - np.asarray(psi_exact))))
