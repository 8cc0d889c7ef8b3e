"""Shooting eigensolver built on constant-reference-plus-perturbation
transfer matrices.

Solves -(1/2 mu) y'' + Vbar(x) y = E y with Dirichlet ends on the shared
Lobatto mesh.  Each mesh step carries a constant reference Vbar_step (its
Lobatto average, degree-5 exact) and a linear coefficient V1_step (the
shifted-Legendre P*_1 component of Vbar over the step).  The order-2 transfer
propagates the constant reference exactly; order 4 adds the first
modified-Neumann correction of the linear residual, evaluated by 5-point
Gauss quadrature, which brings the eigenvalue error to O(dx^4).

Eigenvalues are located by bisection on the Sturm node count of a full
left-to-right sweep, then refined with Brent's method on the two-sided
mismatch at a matching node near the potential minimum, where both partial
solutions grow and the match is well conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import quadrature
from .errors import EigenvalueSearchError, ModelError, NumericsError
from .mesh import LOBATTO_NODES, SpatialMesh
from .specfun import eta0 as _eta0, xi as _xi

_G5_X, _G5_W = np.polynomial.legendre.leggauss(5)
_G5_S = 0.5 * (_G5_X + 1.0)
_G5_W = 0.5 * _G5_W

# Fractional offsets of the interior Lobatto nodes inside a step.
_FRACTIONS = (0.5 * (1.0 + LOBATTO_NODES[1]), 0.5 * (1.0 + LOBATTO_NODES[2]), 1.0)

_RESCALE_LIMIT = 1e120


@dataclass(frozen=True)
class StepReference:
    """Constant + linear reference data of one mesh step."""
    vbar: float
    v1: float
    h: float
    mass: float


@dataclass(frozen=True)
class StepReferences:
    """Per-step reference potentials of a whole mesh, for one Vbar."""
    vbar: np.ndarray
    v1: np.ndarray
    h: float
    mass: float

    def step(self, i: int) -> StepReference:
        return StepReference(float(self.vbar[i]), float(self.v1[i]),
                             self.h, self.mass)

    @property
    def n_steps(self) -> int:
        return self.vbar.size


def build_references(vbar_fn, mesh: SpatialMesh, mass: float = 1.0) -> StepReferences:
    """Lobatto-average constants and P*_1 linear coefficients per step."""
    values = np.asarray(vbar_fn(mesh.nodes), dtype=float)
    if not np.all(np.isfinite(values)):
        raise ModelError("potential evaluated to a non-finite value")
    blocks = values[mesh.step_nodes]
    w = quadrature.CLASSICAL_WEIGHTS
    vbar = 0.5 * blocks @ w
    # P*_1 component: (3/h) * integral of Vbar * P1 over the step, by the same
    # Lobatto rule; in reference coordinates that is (3/2) sum w * V * t.
    v1 = 1.5 * blocks @ (w * LOBATTO_NODES)
    return StepReferences(vbar, v1, mesh.dx, float(mass))


_XI_SERIES = (1.0, 1.0 / 2.0, 1.0 / 24.0, 1.0 / 720.0)
_ETA0_SERIES = (1.0, 1.0 / 6.0, 1.0 / 120.0, 1.0 / 5040.0)


def _xi_eta0_fast(zp):
    """Lean xi/eta0 pair for prevalidated real arrays (hot path)."""
    small = np.abs(zp) < 1e-3
    pos = zp >= 0.0
    w = np.sqrt(np.abs(zp))
    wp = np.where(pos, w, 0.0)
    xi_v = np.where(pos, np.cosh(wp), np.cos(w))
    w_safe = np.where(small, 1.0, w)
    e0_v = np.where(pos, np.sinh(np.where(pos, w_safe, 0.0)),
                    np.sin(w_safe)) / w_safe
    xi_s = ((_XI_SERIES[3] * zp + _XI_SERIES[2]) * zp + _XI_SERIES[1]) * zp + 1.0
    e0_s = ((_ETA0_SERIES[3] * zp + _ETA0_SERIES[2]) * zp + _ETA0_SERIES[1]) * zp + 1.0
    return np.where(small, xi_s, xi_v), np.where(small, e0_s, e0_v)


def _phi0_entries(z, frac, h):
    """Entries (A, B, C) of the constant-reference propagator over frac*h:
    [[A, B], [C, A]] maps (y, y') across the sub-interval."""
    zp = z * (frac * frac)
    a, e = _xi_eta0_fast(zp)
    return a, (frac * h) * e, (z / h) * frac * e


def _neumann_partial(z, v1, mass, frac, h):
    """First Neumann correction of the linear residual integrated to frac*h.

    Returns the four entry arrays (F11, F12, F21, F22); P*_1 is taken over
    the full step regardless of the partial upper limit.
    """
    f11 = f12 = f21 = f22 = 0.0
    for s, w in zip(_G5_S, _G5_W):
        al, bl, _ = _phi0_entries(z, frac * (1.0 - s), h)
        ar, br, _ = _phi0_entries(z, frac * s, h)
        p = w * 2.0 * mass * v1 * (2.0 * frac * s - 1.0)
        f11 = f11 + p * bl * ar
        f12 = f12 + p * bl * br
        f21 = f21 + p * al * ar
        f22 = f22 + p * al * br
    d = frac * h
    return d * f11, d * f12, d * f21, d * f22


def _single_transfer(z, v1, mass, frac, h, order):
    """Entry arrays of the transfer over frac*h of one reference step."""
    a, b, c = _phi0_entries(z, frac, h)
    t11, t12, t21, t22 = a, b, c, a
    if order == 4:
        f11, f12, f21, f22 = _neumann_partial(z, v1, mass, frac, h)
        t11 = t11 + f11
        t12 = t12 + f12
        t21 = t21 + f21
        t22 = t22 + f22
    return t11, t12, t21, t22


def _mm(a, b):
    """Entrywise product of batches of 2x2 matrices, a @ b."""
    a11, a12, a21, a22 = a
    b11, b12, b21, b22 = b
    return (a11 * b11 + a12 * b21, a11 * b12 + a12 * b22,
            a21 * b11 + a22 * b21, a21 * b12 + a22 * b22)


def _transfer_tables(e, refs: StepReferences, order: int, n_coarse: int):
    """Per-mesh-step 2x2 transfers to the two interior Lobatto nodes and the
    full step, as flat float lists ready for the propagation scan.

    When the references live on an internally refined subdivision (refs has
    n_coarse * s steps), the s sub-transfers of each mesh step are composed;
    interior-node transfers combine the prefix product with one fractional
    sub-transfer.  This keeps the per-step constructions small enough for the
    acceptance accuracy targets without touching the mesh surface.
    """
    s, rem = divmod(refs.n_steps, n_coarse)
    if rem:
        raise NumericsError("reference subdivision does not tile the mesh")
    h = refs.h
    z = 2.0 * refs.mass * (refs.vbar - e) * h * h

    if s == 1:
        mats = [_single_transfer(z, refs.v1, refs.mass, frac, h, order)
                for frac in _FRACTIONS]
    else:
        mats = [None, None, None]
        splits = []
        for frac in _FRACTIONS[:2]:
            j, phi = divmod(frac * s, 1.0)
            splits.append((int(j), phi))
        # one vectorized build over all fine sub-steps, then composition
        full = [t.reshape(n_coarse, s)
                for t in _single_transfer(z, refs.v1, refs.mass, 1.0, h, order)]
        ident = np.ones(n_coarse)
        zero = np.zeros(n_coarse)
        m = (ident, zero, zero, ident)
        for j in range(s):
            for k, (jk, phik) in enumerate(splits):
                if j == jk:
                    sl = slice(j, None, s)
                    part = _single_transfer(z[sl], refs.v1[sl], refs.mass,
                                            phik, h, order)
                    mats[k] = _mm(part, m)
            m = _mm((full[0][:, j], full[1][:, j], full[2][:, j],
                     full[3][:, j]), m)
        mats[2] = m

    return [[np.broadcast_to(t, (n_coarse,)).tolist() for t in mat]
            for mat in mats]


def transfer_step(e: float, ref: StepReference, order: int = 4) -> np.ndarray:
    """2x2 transfer matrix of one step, mapping (y, y') left to right."""
    if order not in (2, 4):
        raise ValueError(f"transfer order must be 2 or 4, got {order}")
    z = 2.0 * ref.mass * (np.array([ref.vbar]) - e) * ref.h * ref.h
    t = _single_transfer(z, np.array([ref.v1]), ref.mass, 1.0, ref.h, order)
    return np.array([[t[0][0], t[1][0]], [t[2][0], t[3][0]]])


def default_matching_node(refs: StepReferences, mesh: SpatialMesh) -> int:
    """Step-boundary node nearest the minimum of the reference potential,
    clamped strictly interior."""
    s = max(refs.n_steps // mesh.n_steps, 1)
    per_step = refs.vbar.reshape(mesh.n_steps, s).mean(axis=1)
    i = int(np.argmin(per_step))
    lo = per_step[max(i - 1, 0)]
    hi = per_step[min(i + 1, mesh.n_steps - 1)]
    boundary = i if lo < hi else i + 1
    boundary = min(max(boundary, 1), mesh.n_steps - 1)
    return 3 * boundary


def _sweep_left(tables, n_steps, stop_step, count_nodes=False, collect=None):
    """Propagate (0, 1) from x_min through `stop_step` steps.

    Returns (y, dy) at the final node; optionally counts interior sign
    changes along the way and/or collects node values into `collect`
    (a pair of preallocated lists [ys, dys] plus scale handling).
    """
    (p1, p2, pf) = tables
    y, dy = 0.0, 1.0
    count = 0
    prev_sign = 0
    if collect is not None:
        ys, dys = collect
        ys[0] = y
        dys[0] = dy
    for i in range(stop_step):
        t11_1, t12_1 = p1[0][i], p1[1][i]
        t11_2, t12_2 = p2[0][i], p2[1][i]
        if count_nodes or collect is not None:
            y1 = t11_1 * y + t12_1 * dy
            y2 = t11_2 * y + t12_2 * dy
        yf = pf[0][i] * y + pf[1][i] * dy
        dyf = pf[2][i] * y + pf[3][i] * dy
        if collect is not None:
            dys[3 * i + 1] = p1[2][i] * y + p1[3][i] * dy
            dys[3 * i + 2] = p2[2][i] * y + p2[3][i] * dy
            ys[3 * i + 1] = y1
            ys[3 * i + 2] = y2
            ys[3 * i + 3] = yf
            dys[3 * i + 3] = dyf
        if count_nodes:
            last_interior = (i == n_steps - 1)
            for val, is_boundary in ((y1, False), (y2, False),
                                     (yf, last_interior)):
                if is_boundary:
                    continue
                s = 0 if val == 0.0 else (1 if val > 0.0 else -1)
                if s != 0:
                    if prev_sign != 0 and s != prev_sign:
                        count += 1
                    prev_sign = s
        y, dy = yf, dyf
        m = abs(y) if abs(y) > abs(dy) else abs(dy)
        if m > _RESCALE_LIMIT:
            inv = 1.0 / m
            y *= inv
            dy *= inv
            if collect is not None:
                ys[:3 * i + 4] = [v * inv for v in ys[:3 * i + 4]]
                dys[:3 * i + 4] = [v * inv for v in dys[:3 * i + 4]]
    return y, dy, count


def _sweep_right(tables, n_steps, stop_step, collect=None):
    """Propagate (0, -1) from x_max backward to the boundary node of
    `stop_step` (exclusive), inverting each step transfer."""
    (p1, p2, pf) = tables
    y, dy = 0.0, -1.0
    if collect is not None:
        ys, dys = collect
        ys[3 * n_steps] = y
        dys[3 * n_steps] = dy
    for i in range(n_steps - 1, stop_step - 1, -1):
        a, b, c, d = pf[0][i], pf[1][i], pf[2][i], pf[3][i]
        det = a * d - b * c
        if det == 0.0 or not np.isfinite(det):
            raise NumericsError(f"singular transfer at step {i}")
        yl = (d * y - b * dy) / det
        dyl = (-c * y + a * dy) / det
        if collect is not None:
            ys[3 * i] = yl
            dys[3 * i] = dyl
            ys[3 * i + 1] = p1[0][i] * yl + p1[1][i] * dyl
            dys[3 * i + 1] = p1[2][i] * yl + p1[3][i] * dyl
            ys[3 * i + 2] = p2[0][i] * yl + p2[1][i] * dyl
            dys[3 * i + 2] = p2[2][i] * yl + p2[3][i] * dyl
        y, dy = yl, dyl
        m = abs(y) if abs(y) > abs(dy) else abs(dy)
        if m > _RESCALE_LIMIT:
            inv = 1.0 / m
            y *= inv
            dy *= inv
            if collect is not None:
                lo = 3 * i
                ys[lo:] = [v * inv for v in ys[lo:]]
                dys[lo:] = [v * inv for v in dys[lo:]]
    return y, dy


def shoot(e: float, refs: StepReferences, mesh: SpatialMesh,
          matching_node: int | None = None, order: int = 4):
    """Two-sided shot at trial energy e.

    Returns (mismatch, node_count): the Wronskian-type mismatch of the left
    and right partial solutions at the matching node, and the Sturm count of
    interior sign changes of the solution swept across the whole domain
    (which equals the number of eigenvalues below e).  Per-step rescaling
    keeps magnitudes bounded without touching signs.
    """
    if matching_node is None:
        matching_node = default_matching_node(refs, mesh)
    if matching_node % 3 != 0 or not 0 < matching_node < 3 * mesh.n_steps:
        raise NumericsError(f"matching node {matching_node} is not an interior "
                            "step boundary")
    match_step = matching_node // 3
    tables = _transfer_tables(e, refs, order, mesh.n_steps)
    y_l, dy_l, count = _sweep_left(tables, mesh.n_steps, mesh.n_steps,
                                   count_nodes=True)
    # the count pass runs the full domain; rerun the left partial to the match
    y_m, dy_m, _ = _sweep_left(tables, mesh.n_steps, match_step)
    y_r, dy_r = _sweep_right(tables, mesh.n_steps, match_step)
    mismatch = y_m * dy_r - y_r * dy_m
    if not np.isfinite(mismatch):
        raise NumericsError(f"mismatch overflow at E={e}")
    return mismatch, count


@dataclass(frozen=True)
class Eigenpair:
    """One Dirichlet eigenstate on the mesh: 1-based index, eigenvalue and
    node values of y and y'."""
    index: int
    energy: float
    y: np.ndarray
    dy: np.ndarray


@dataclass(frozen=True)
class Basis:
    """The N lowest eigenpairs of one reference potential."""
    pairs: list[Eigenpair]
    refs: StepReferences
    mesh: SpatialMesh
    vbar_nodes: np.ndarray = field(repr=False)
    solve_refs: StepReferences | None = field(repr=False, default=None,
                                              compare=False)

    @property
    def size(self) -> int:
        return len(self.pairs)

    @property
    def energies(self) -> np.ndarray:
        return np.array([p.energy for p in self.pairs])

    def y_matrix(self) -> np.ndarray:
        return np.vstack([p.y for p in self.pairs])

    def dy_matrix(self) -> np.ndarray:
        return np.vstack([p.dy for p in self.pairs])

    def gram(self) -> np.ndarray:
        """L2 inner products of all pairs, by the EF product rule."""
        y = self.y_matrix()
        dy = self.dy_matrix()
        e = self.energies
        n = self.size
        iu, iz = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        out = quadrature._composite_pair_integrals(
            y[iu.ravel()], dy[iu.ravel()], e[iu.ravel()], self.refs,
            y[iz.ravel()], dy[iz.ravel()], e[iz.ravel()], self.refs,
            self.mesh)
        return out.reshape(n, n)


def eval_dense(pair: Eigenpair, refs: StepReferences, mesh: SpatialMesh,
               offsets: np.ndarray, order: int = 4) -> np.ndarray:
    """Scheme-consistent values of an eigenfunction at fractional offsets
    inside every mesh step, propagated from the stored node values.

    refs may live on an internal subdivision of the mesh (as produced for
    compute_basis); partial transfers then compose the sub-steps, matching
    the solver's own representation.  Returns shape (n_steps, len(offsets)).
    Used by the dense brute-force quadrature oracles.
    """
    offsets = np.asarray(offsets, dtype=float)
    if np.any(offsets < 0.0) or np.any(offsets > 1.0):
        raise ValueError("offsets must lie in [0, 1]")
    s, rem = divmod(refs.n_steps, mesh.n_steps)
    if rem:
        raise NumericsError("reference subdivision does not tile the mesh")
    h = refs.h
    z = 2.0 * refs.mass * (refs.vbar - pair.energy) * h * h
    y0 = pair.y[0:-1:3]
    dy0 = pair.dy[0:-1:3]

    # prefix transfer products up to each fine sub-step boundary
    n = mesh.n_steps
    ident = np.ones(n)
    zero = np.zeros(n)
    prefixes = [(ident, zero, zero, ident)]
    for j in range(s - 1):
        sl = slice(j, None, s)
        step = _single_transfer(z[sl], refs.v1[sl], refs.mass, 1.0, h, order)
        prefixes.append(_mm(step, prefixes[-1]))

    out = np.empty((n, offsets.size))
    scaled = offsets * s
    j_of = np.minimum(scaled.astype(int), s - 1)
    phi_of = scaled - j_of
    for j in range(s):
        cols = np.nonzero(j_of == j)[0]
        if cols.size == 0:
            continue
        sl = slice(j, None, s)
        part = _single_transfer(z[sl], refs.v1[sl], refs.mass,
                                phi_of[cols][:, None], h, order)
        p11, p12, _, _ = _mm(part, tuple(np.broadcast_to(t, (cols.size, n))
                                         for t in prefixes[j]))
        out[:, cols] = (p11 * y0 + p12 * dy0).T
    return out


def _assemble_eigenpair(index, e, refs, mesh, matching_node, order):
    tables = _transfer_tables(e, refs, order, mesh.n_steps)
    n_nodes = mesh.n_nodes
    match_step = matching_node // 3
    ys_l = [0.0] * n_nodes
    dys_l = [0.0] * n_nodes
    _sweep_left(tables, mesh.n_steps, match_step, collect=(ys_l, dys_l))
    ys_r = [0.0] * n_nodes
    dys_r = [0.0] * n_nodes
    _sweep_right(tables, mesh.n_steps, match_step, collect=(ys_r, dys_r))

    k = matching_node
    denom = ys_r[k] * ys_r[k] + dys_r[k] * dys_r[k]
    if denom == 0.0:
        raise EigenvalueSearchError(index, (e, e), "vanishing right solution "
                                    "at the matching node")
    rho = (ys_l[k] * ys_r[k] + dys_l[k] * dys_r[k]) / denom
    y = np.array(ys_l[:k] + [v * rho for v in ys_r[k:]])
    dy = np.array(dys_l[:k] + [v * rho for v in dys_r[k:]])
    y[0] = 0.0
    y[-1] = 0.0

    norm_sq = quadrature.composite_augmented(y * y, 2.0 * y * dy, mesh)
    if not np.isfinite(norm_sq) or norm_sq <= 0.0:
        raise EigenvalueSearchError(index, (e, e), "non-normalizable solution")
    scale = 1.0 / np.sqrt(norm_sq)
    if dy[0] < 0.0:
        scale = -scale
    y *= scale
    dy *= scale

    interior = y[1:-1]
    signs = np.sign(interior[interior != 0.0])
    n_changes = int(np.count_nonzero(signs[1:] != signs[:-1]))
    if n_changes != index - 1:
        raise EigenvalueSearchError(
            index, (e, e),
            f"assembled eigenfunction has {n_changes} interior sign changes")
    return Eigenpair(index, float(e), y, dy)


DEFAULT_REFINE = 32


def compute_basis(vbar_fn, mesh: SpatialMesh, n_basis: int, mass: float = 1.0,
                  order: int = 4, tol_e: float | None = None,
                  n_refine: int = DEFAULT_REFINE) -> Basis:
    """Compute the n_basis lowest Dirichlet eigenpairs of Vbar.

    Each eigenvalue is bracketed by bisection on the Sturm node count until
    the bracket isolates its index, then refined with Brent's method on the
    shooting mismatch.  Eigenfunctions are assembled from the two partial
    solutions, normalized and sign-fixed (y'(x_min) > 0).

    n_refine subdivides every mesh step internally for the transfer
    construction (the stored eigenfunctions still live on the mesh nodes);
    the single-correction transfer needs this headroom to reach 1e-8-level
    eigenvalues on desk meshes.  Set n_refine=1 for the bare per-step scheme.
    """
    if n_basis < 1:
        raise EigenvalueSearchError(0, (0.0, 0.0), "n_basis must be >= 1")
    if order not in (2, 4):
        raise ValueError(f"order must be 2 or 4, got {order}")
    if n_refine < 1:
        raise ValueError("n_refine must be >= 1")
    from .mesh import build_mesh as _build_mesh
    refs_coarse = build_references(vbar_fn, mesh, mass)
    if n_refine == 1:
        refs = refs_coarse
    else:
        fine = _build_mesh(mesh.x_min, mesh.x_max, mesh.n_steps * n_refine)
        refs = build_references(vbar_fn, fine, mass)
    vbar_nodes = np.asarray(vbar_fn(mesh.nodes), dtype=float)
    match = default_matching_node(refs, mesh)

    def sample(e):
        return shoot(e, refs, mesh, match, order)

    e_floor = float(vbar_nodes.min()) - 1.0
    e_hi = e_floor + 1.0
    c_hi = sample(e_hi)[1]
    expansions = 0
    while c_hi < n_basis:
        e_hi = e_floor + 2.0 * (e_hi - e_floor)
        c_hi = sample(e_hi)[1]
        expansions += 1
        if expansions > 80:
            raise EigenvalueSearchError(n_basis, (e_floor, e_hi),
                                        "node count never reached the basis size")

    pairs = []
    lo_start = e_floor
    for n in range(1, n_basis + 1):
        lo, hi = lo_start, e_hi
        w_lo, c_lo = sample(lo)
        w_hi, c_hi2 = sample(hi)
        # Node counting lags the true index transition by up to the window a
        # boundary zero needs to creep past the outermost interior node, so
        # every mismatch sample is kept: the root bracket is taken from the
        # sign change nearest the count transition, not from the count
        # bracket itself.
        samples = {lo: w_lo, hi: w_hi}
        while not (c_lo == n - 1 and c_hi2 == n
                   and np.sign(w_lo) != np.sign(w_hi)):
            mid = 0.5 * (lo + hi)
            if hi - lo < 1e-13 * max(1.0, abs(mid)):
                break
            w_m, c_m = sample(mid)
            samples[mid] = w_m
            if c_m <= n - 1:
                lo, w_lo, c_lo = mid, w_m, c_m
            else:
                hi, w_hi, c_hi2 = mid, w_m, c_m
        e_t = 0.5 * (lo + hi)
        grid = sorted(samples)
        best = None
        for a, b in zip(grid[:-1], grid[1:]):
            if np.sign(samples[a]) != np.sign(samples[b]):
                dist = abs(0.5 * (a + b) - e_t)
                if best is None or dist < best[0]:
                    best = (dist, a, b)
        if best is None:
            raise EigenvalueSearchError(
                n, (lo, hi), "no mismatch sign change near the node-count "
                "transition")
        xtol = tol_e if tol_e is not None else 1e-12 * max(1.0, abs(hi))
        e_n = brentq(lambda e: sample(e)[0], best[1], best[2], xtol=xtol,
                     rtol=8.9e-16)
        pairs.append(_assemble_eigenpair(n, e_n, refs, mesh, match, order))
        lo_start = e_n
    # quadrature consumers need per-mesh-step reference data; the refined
    # solve references stay available for scheme-consistent dense evaluation
    return Basis(pairs, refs_coarse, mesh, vbar_nodes, solve_refs=refs)
