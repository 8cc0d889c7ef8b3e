"""Time sectors: per-sector eigenbasis, overlap with the previous sector,
coupling matrices and wavefunction synthesis.

Over one sector [t_{k-1}, t_k] the wave function is expanded over the N
lowest eigenfunctions of the midpoint-frozen potential.  The expansion
coefficients obey the linear system driven by the coupling matrix
dV(t)_{nm} = <y_n | V(.,t) - Vbar | y_m>, which vanishes at the sector
midpoint; for separable potentials dV(t) is a cached combination of
time-independent blocks.  At sector boundaries the coefficients are carried
through the overlap matrix S with the previous basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quadrature, stationary
from .errors import ConfigError
from .mesh import SpatialMesh
from .potential import InitialState, ProblemSpec, sector_average


@dataclass
class CoefficientState:
    """Complex expansion-coefficient vector at a given time."""
    c: np.ndarray
    t: float

    def copy(self) -> "CoefficientState":
        return CoefficientState(self.c.copy(), self.t)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.c))


@dataclass
class TimeSector:
    """One rectangle [x_min, x_max] x [t_left, t_right] of the staircase."""
    index: int
    t_left: float
    t_right: float
    t_mid: float
    basis: stationary.Basis
    overlap: np.ndarray | None
    coupling_blocks: list[np.ndarray]
    problem: ProblemSpec
    vbar_nodes: np.ndarray = field(repr=False)
    _y: np.ndarray = field(repr=False, default=None)
    _dy: np.ndarray = field(repr=False, default=None)
    _generic_weights: tuple | None = field(repr=False, default=None)

    @property
    def size(self) -> int:
        return self.basis.size

    @property
    def width(self) -> float:
        return self.t_right - self.t_left

    @property
    def energies(self) -> np.ndarray:
        return self.basis.energies

    @property
    def mesh(self) -> SpatialMesh:
        return self.basis.mesh


def _pair_products(y, dy, iu, iz, steps):
    u = y[iu][:, steps]
    z = y[iz][:, steps]
    prod = u * z
    dprod = dy[iu][:, steps] * z + u * dy[iz][:, steps]
    return prod, dprod


def _overlap_matrix(basis, prev_basis, mesh):
    n = basis.size
    m = prev_basis.size
    iu, iz = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    out = quadrature._composite_pair_integrals(
        basis.y_matrix()[iu.ravel()], basis.dy_matrix()[iu.ravel()],
        basis.energies[iu.ravel()], basis.refs,
        prev_basis.y_matrix()[iz.ravel()], prev_basis.dy_matrix()[iz.ravel()],
        prev_basis.energies[iz.ravel()], prev_basis.refs,
        mesh)
    return out.reshape(n, m)


def _coupling_blocks(basis, mesh, terms):
    """Symmetric blocks W_j[n, m] = <y_n | w_j | y_m>, upper triangle
    computed once and mirrored."""
    n = basis.size
    iu, iz = np.triu_indices(n)
    y = basis.y_matrix()
    dy = basis.dy_matrix()
    e = basis.energies
    blocks = []
    for term in terms:
        w_nodes = np.broadcast_to(
            np.asarray(term.w(mesh.nodes), dtype=float), mesh.nodes.shape)
        dw_nodes = np.broadcast_to(
            np.asarray(term.w_prime(mesh.nodes), dtype=float), mesh.nodes.shape)
        vals = quadrature._composite_pair_integrals(
            y[iu], dy[iu], e[iu], basis.refs,
            y[iz], dy[iz], e[iz], basis.refs,
            mesh, f_nodes=w_nodes, df_nodes=dw_nodes)
        w = np.zeros((n, n))
        w[iu, iz] = vals
        w[iz, iu] = vals
        blocks.append(w)
    return blocks


def build_sector(index: int, t_left: float, t_right: float,
                 problem: ProblemSpec, mesh: SpatialMesh, n_basis: int,
                 previous: TimeSector | None = None, order: int = 4,
                 tol_e: float | None = None,
                 n_refine: int = stationary.DEFAULT_REFINE) -> TimeSector:
    """Assemble sector `index`: midpoint-frozen basis, overlap with the
    previous sector and the separable coupling blocks."""
    if previous is not None and abs(previous.t_right - t_left) > 1e-12 * max(
            1.0, abs(t_left)):
        raise ConfigError(
            f"sector {index} does not continue the previous one: "
            f"{previous.t_right} != {t_left}")
    vbar = sector_average(problem.model, t_left, t_right)
    basis = stationary.compute_basis(vbar, mesh, n_basis,
                                     mass=problem.model.mass, order=order,
                                     tol_e=tol_e, n_refine=n_refine)
    overlap = None
    if previous is not None:
        overlap = _overlap_matrix(basis, previous.basis, mesh)
    blocks = []
    if problem.model.separable is not None:
        blocks = _coupling_blocks(basis, mesh, problem.model.separable.terms)
    return TimeSector(
        index=index, t_left=float(t_left), t_right=float(t_right),
        t_mid=0.5 * (t_left + t_right), basis=basis, overlap=overlap,
        coupling_blocks=blocks, problem=problem,
        vbar_nodes=basis.vbar_nodes,
        _y=basis.y_matrix(), _dy=basis.dy_matrix())


def _generic_weight_cache(sector):
    """EF weights and node products for the generic (non-separable) coupling
    path, built once per sector."""
    if sector._generic_weights is None:
        mesh = sector.mesh
        n = sector.size
        iu, iz = np.triu_indices(n)
        half = mesh.dx / 2.0
        model = sector.problem.model
        with_der = model.x_derivative is not None
        w0, w1, _ = quadrature._pair_weight_arrays(
            sector.energies[iu], sector.basis.refs,
            sector.energies[iz], sector.basis.refs, half, with_der)
        prod, dprod = _pair_products(sector._y, sector._dy, iu, iz,
                                     mesh.step_nodes)
        sector._generic_weights = (iu, iz, w0, w1, prod, dprod, with_der)
    return sector._generic_weights


def delta_v(sector: TimeSector, t: float) -> np.ndarray:
    """Coupling matrix dV(t)_{nm} = <y_n | V(.,t) - Vbar | y_m>.

    Separable potentials reduce to sum_j (g_j(t) - g_j(t_mid)) W_j; anything
    else integrates f(x) = V(x,t) - Vbar(x) against all pair products, with
    the derivative-free rule when d/dx of the potential is unavailable.
    """
    model = sector.problem.model
    if model.separable is not None:
        out = np.zeros((sector.size, sector.size))
        for term, block in zip(model.separable.terms, sector.coupling_blocks):
            out += (term.g(t) - term.g(sector.t_mid)) * block
        return out

    mesh = sector.mesh
    iu, iz, w0, w1, prod, dprod, with_der = _generic_weight_cache(sector)
    half = mesh.dx / 2.0
    steps = mesh.step_nodes
    f_nodes = np.asarray(model.value(mesh.nodes, t), dtype=float) - sector.vbar_nodes
    fs = f_nodes[steps]
    vals = half * np.einsum("psl,psl->p", w0, fs[None] * prod)
    if with_der:
        df_nodes = (np.asarray(model.x_derivative(mesh.nodes, t), dtype=float)
                    - np.asarray(model.x_derivative(mesh.nodes, sector.t_mid),
                                 dtype=float))
        dvals = fs[None] * dprod + df_nodes[steps][None] * prod
        vals = vals + half * half * np.einsum("psl,psl->p", w1, dvals)
    out = np.zeros((sector.size, sector.size))
    out[iu, iz] = vals
    out[iz, iu] = vals
    return out


def project_initial(initial: InitialState, sector: TimeSector,
                    mesh: SpatialMesh) -> CoefficientState:
    """Expand the initial state on the first sector's basis."""
    if sector.index != 1:
        raise ConfigError("initial projection only applies to the first sector")
    psi = np.asarray(initial.psi0(mesh.nodes), dtype=complex)
    y = sector._y
    if initial.psi0_derivative is not None:
        dpsi = np.asarray(initial.psi0_derivative(mesh.nodes), dtype=complex)
        vals = y * psi[None, :]
        dvals = sector._dy * psi[None, :] + y * dpsi[None, :]
        c = quadrature.composite_augmented(vals, dvals, mesh)
    else:
        c = quadrature.composite_classical(y * psi[None, :], mesh)
    return CoefficientState(np.asarray(c, dtype=complex), sector.t_left)


def carry_coefficients(sector: TimeSector,
                       state: CoefficientState) -> CoefficientState:
    """Carry coefficients across the sector boundary: C <- S C_prev."""
    if sector.overlap is None:
        raise ConfigError(f"sector {sector.index} has no previous-sector overlap")
    if state.c.shape[0] != sector.overlap.shape[1]:
        raise ConfigError(
            f"coefficient size {state.c.shape[0]} does not match the overlap "
            f"matrix {sector.overlap.shape}")
    if abs(state.t - sector.t_left) > 1e-9 * max(1.0, abs(sector.t_left)):
        raise ConfigError(
            f"coefficients at t={state.t} cannot enter a sector starting at "
            f"{sector.t_left}")
    return CoefficientState(sector.overlap @ state.c, sector.t_left)


def synthesize_wavefunction(state: CoefficientState, sector: TimeSector,
                            nodes: np.ndarray | None = None,
                            derivative: bool = False) -> np.ndarray:
    """psi(x_i) = sum_n c_n y_n(x_i) on the mesh nodes (or a node subset by
    index array); derivative synthesis uses y'_n instead."""
    y = sector._dy if derivative else sector._y
    if nodes is not None:
        y = y[:, nodes]
    return state.c @ y
