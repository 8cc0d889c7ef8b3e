"""Composite 4-point Lobatto quadrature: classical, derivative-augmented and
exponentially fitted (EF) variants.

An EF rule over one mesh step [X-h, X+h] (h is the half-width) has the form

    integral ~ h * sum_n a0[n]*I(x_n) + h**2 * sum_n a1[n]*I'(x_n)

on the 4 Lobatto nodes, with weights chosen so the rule is exact for
exp(+-mu1*x), exp(+-mu2*x), x*exp(+-mu1*x), x*exp(+-mu2*x).  The frequencies
come from the constant-reference data of the two eigenfunctions in the
integrand.  The weight system is assembled in the scaled variables z = mu*h;
node symmetry splits it into even/odd 4x4 subsystems, the odd one is
homogeneous, so only the even block is solved.  Rows are combined into
mean/divided-difference form, which keeps the block well conditioned through
the confluent regime z1 -> z2 that every turning-point step produces.

All kernels are evaluated in complex arithmetic (oscillatory regimes have
z**2 < 0, mixed evanescent/oscillatory pairs have conjugate z's); the solved
weights are real up to a machine-level residue, which is asserted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EFConstructionError
from .mesh import SpatialMesh
from .specfun import _kernels_complex

_C = 1.0 / np.sqrt(5.0)       # interior Lobatto abscissa
_C2 = 0.2                     # its square

# Classical 4-point Lobatto weights on [-1, 1] (degree-5 exact).
CLASSICAL_WEIGHTS = np.array([1.0, 5.0, 5.0, 1.0]) / 6.0

# Derivative-augmented Lobatto weights on [-1, 1] (degree-7 exact); these are
# the z -> 0 limit of the EF rule and its degenerate fallback.
AUGMENTED_VALUE_WEIGHTS = np.array([2.0, 5.0, 5.0, 2.0]) / 7.0
AUGMENTED_DERIV_WEIGHTS = np.array([1.0, np.sqrt(5.0), -np.sqrt(5.0), -1.0]) / 42.0

# Degenerate-size switch |z| per variant, and the conditioning guard.  Below
# the switch the polynomial limit rule is used; the thresholds are set so the
# rule family is continuous across the switch to ~1e-10 on near-threshold
# exponentials (the augmented fallback is degree-7 exact, the classical one
# only degree-5, hence the smaller value-only switch).
Z_SWITCH_AUGMENTED = 0.3
Z_SWITCH_VALUE_ONLY = 0.1
COND_LIMIT = 1e10
IMAG_RESIDUE_LIMIT = 1e-12

_G12_X, _G12_W = np.polynomial.legendre.leggauss(12)
_G12_S = 0.5 * (_G12_X + 1.0)   # nodes on [0, 1]
_G12_W = 0.5 * _G12_W


def classical_lobatto_weights() -> np.ndarray:
    """Value weights of the classical 4-point Lobatto rule on [-1, 1]."""
    return CLASSICAL_WEIGHTS.copy()


def augmented_lobatto_weights() -> tuple[np.ndarray, np.ndarray]:
    """(value, derivative) weights of the degree-7 augmented rule on [-1, 1]."""
    return AUGMENTED_VALUE_WEIGHTS.copy(), AUGMENTED_DERIV_WEIGHTS.copy()


def composite_classical(values, mesh: SpatialMesh):
    """Composite classical Lobatto integral of node data over the mesh."""
    blocks = np.asarray(values)[..., mesh.step_nodes]
    return (mesh.dx / 2.0) * np.einsum("...sl,l->...", blocks, CLASSICAL_WEIGHTS)


def composite_augmented(values, derivs, mesh: SpatialMesh):
    """Composite derivative-augmented Lobatto integral of node data."""
    half = mesh.dx / 2.0
    v = np.asarray(values)[..., mesh.step_nodes]
    d = np.asarray(derivs)[..., mesh.step_nodes]
    out = half * np.einsum("...sl,l->...", v, AUGMENTED_VALUE_WEIGHTS)
    out = out + half * half * np.einsum("...sl,l->...", d, AUGMENTED_DERIV_WEIGHTS)
    return out


# ----------------------------------------------------------------------------
# EF weight construction
# ----------------------------------------------------------------------------

def _rows_augmented(Z):
    """Even-subsystem rows (R1, R2) and right-hand sides at squared frequency Z.

    R1 is the exactness condition on cosh(z*t), R2 the one on t*sinh(z*t)/z
    (the odd conditions are homogeneous and vanish by node symmetry).
    Unknowns are (alpha1, alpha2, beta1, beta2) with value weights
    (alpha1/2, alpha2/2, alpha2/2, alpha1/2) and derivative weights
    (-beta1/2, -beta2/2, beta2/2, beta1/2).
    """
    x1, e0, e1, _, _ = _kernels_complex(Z)
    xc, e0c, _, _, _ = _kernels_complex(Z * _C2)
    r1 = np.stack([x1, xc, Z * e0, Z * _C * e0c], axis=-1)
    r2 = np.stack([e0, _C2 * e0c, e0 + x1, _C * (e0c + xc)], axis=-1)
    return r1, 2.0 * e0, r2, 2.0 * e1


def _drows_r2(Z):
    """d/dZ of (R2, rhs2)."""
    x1, e0, e1, e2, _ = _kernels_complex(Z)
    xc, e0c, e1c, _, _ = _kernels_complex(Z * _C2)
    dr2 = np.stack([
        0.5 * e1,
        0.5 * _C2 * _C2 * e1c,
        0.5 * (e1 + e0),
        0.5 * _C * _C2 * (e1c + e0c),
    ], axis=-1)
    return dr2, e2


def _d2rows_r2(Z):
    """d^2/dZ^2 of (R2, rhs2)."""
    x1, e0, e1, e2, e3 = _kernels_complex(Z)
    xc, e0c, e1c, e2c, _ = _kernels_complex(Z * _C2)
    d2r2 = np.stack([
        0.25 * e2,
        0.25 * _C2 ** 3 * e2c,
        0.25 * (e2 + e1),
        0.25 * _C * _C2 * _C2 * (e2c + e1c),
    ], axis=-1)
    return d2r2, 0.5 * e3


def _rows_value_only(Z):
    x1, e0, _, _, _ = _kernels_complex(Z)
    xc = _kernels_complex(Z * _C2)[0]
    return np.stack([x1, xc], axis=-1), 2.0 * e0


def _drows_value_only(Z):
    _, e0, e1, _, _ = _kernels_complex(Z)
    e0c = _kernels_complex(Z * _C2)[1]
    return np.stack([0.5 * e0, 0.5 * _C2 * e0c], axis=-1), e1


def _segment_average(Z1, Z2, rows_fn, kernel=None):
    """Gauss average of analytic rows along the segment Z1 -> Z2, optionally
    against a polynomial kernel in the segment parameter s.

    Replaces cancelling differences: exact to machine precision for
    |Z2 - Z1| <= 4 because the row entries are entire functions of Z.
    """
    acc_r = None
    acc_b = None
    for s, w in zip(_G12_S, _G12_W):
        r, b = rows_fn(Z1 + s * (Z2 - Z1))
        ws = w * kernel(s) if kernel is not None else w
        if acc_r is None:
            acc_r, acc_b = ws * r, ws * b
        else:
            acc_r = acc_r + ws * r
            acc_b = acc_b + ws * b
    return acc_r, acc_b


def _ef_even_weights(z1sq, z2sq, with_derivatives):
    """Solve the even exactness subsystems for arrays of squared scaled
    frequencies.  Returns (value_weights, deriv_weights, degenerate_mask).

    The confluent regime z2 -> z1 collapses the raw condition set (the
    cosh-row derivative is parallel to the t*sinh row), so for nearby
    frequencies the system is assembled from the row combinations
    [mean(R1), mean(R2), dd(R2), 6*int s(1-s) R2''(Z(s)) ds], which are exact
    row transforms of the original conditions and stay well conditioned all
    the way into exact confluence.  Well-separated pairs use the raw rows.
    """
    Z1 = np.atleast_1d(np.asarray(z1sq, dtype=complex))
    Z2 = np.atleast_1d(np.asarray(z2sq, dtype=complex))
    m = Z1.size

    switch = Z_SWITCH_AUGMENTED if with_derivatives else Z_SWITCH_VALUE_ONLY
    degenerate = np.maximum(np.sqrt(np.abs(Z1)), np.sqrt(np.abs(Z2))) < switch

    dz = Z2 - Z1
    wide = np.abs(dz) > 4.0
    dz_safe = np.where(wide, dz, 1.0)

    if with_derivatives:
        r1a, b1a, r2a, b2a = _rows_augmented(Z1)
        r1b, b1b, r2b, b2b = _rows_augmented(Z2)
        dd2, db2 = _segment_average(Z1, Z2, _drows_r2)
        g_row, g_rhs = _segment_average(Z1, Z2, _d2rows_r2,
                                        kernel=lambda s: 6.0 * s * (1.0 - s))
        rows_n = [0.5 * (r1a + r1b), 0.5 * (r2a + r2b), dd2, g_row]
        rhs_n = [0.5 * (b1a + b1b), 0.5 * (b2a + b2b), db2, g_rhs]
        rows_w = [r1a, r1b, r2a, r2b]
        rhs_w = [b1a, b1b, b2a, b2b]
        nsys = 4
    else:
        r1a, b1a = _rows_value_only(Z1)
        r1b, b1b = _rows_value_only(Z2)
        dd1, db1 = _segment_average(Z1, Z2, _drows_value_only)
        rows_n = [0.5 * (r1a + r1b), dd1]
        rhs_n = [0.5 * (b1a + b1b), db1]
        rows_w = [r1a, r1b]
        rhs_w = [b1a, b1b]
        nsys = 2

    wm = wide[..., None]
    a = np.stack([np.where(wm, rw, rn) for rw, rn in zip(rows_w, rows_n)],
                 axis=-2)
    b = np.stack([np.where(wide, bw, bn) for bw, bn in zip(rhs_w, rhs_n)],
                 axis=-1)

    # Row equilibration: exact rescaling, improves the conditioning estimate.
    scale = np.max(np.abs(a), axis=-1)
    scale = np.where(scale > 0.0, scale, 1.0)
    a = a / scale[..., None]
    b = b / scale

    # Neutralize size-degenerate entries before factorization.
    eye = np.eye(nsys, dtype=complex)
    a = np.where(degenerate[..., None, None], eye, a)
    b = np.where(degenerate[..., None], 0.0, b)

    with np.errstate(all="ignore"):
        cond = np.linalg.cond(a)
    bad = ~np.isfinite(cond) | (cond > COND_LIMIT)
    fallback = degenerate | bad
    a = np.where(bad[..., None, None], eye, a)
    b = np.where(bad[..., None], 0.0, b)

    x = np.linalg.solve(a, b[..., None])[..., 0]

    live = ~fallback
    if np.any(live):
        mag = np.max(np.abs(x[live]))
        residue = np.max(np.abs(x[live].imag))
        if residue > IMAG_RESIDUE_LIMIT * max(mag, 1.0):
            k = int(np.argmax(np.max(np.abs(x.imag), axis=-1) * live))
            raise EFConstructionError(
                np.sqrt(Z1[k]), np.sqrt(Z2[k]),
                f"imaginary weight residue {residue:.3e}")
    xr = x.real

    w0 = np.empty((m, 4))
    w1 = np.zeros((m, 4))
    if with_derivatives:
        a1, a2, beta1, beta2 = xr[..., 0], xr[..., 1], xr[..., 2], xr[..., 3]
        w0[:, 0] = 0.5 * a1
        w0[:, 3] = 0.5 * a1
        w0[:, 1] = 0.5 * a2
        w0[:, 2] = 0.5 * a2
        w1[:, 0] = -0.5 * beta1
        w1[:, 1] = -0.5 * beta2
        w1[:, 2] = 0.5 * beta2
        w1[:, 3] = 0.5 * beta1
        w0[fallback] = AUGMENTED_VALUE_WEIGHTS
        w1[fallback] = AUGMENTED_DERIV_WEIGHTS
    else:
        a1, a2 = xr[..., 0], xr[..., 1]
        w0[:, 0] = 0.5 * a1
        w0[:, 3] = 0.5 * a1
        w0[:, 1] = 0.5 * a2
        w0[:, 2] = 0.5 * a2
        w0[fallback] = CLASSICAL_WEIGHTS
    return w0, w1, fallback


@dataclass(frozen=True)
class EFRule:
    """Per-interval quadrature weights tuned to a frequency pair."""
    h: float
    mu1_sq: complex
    mu2_sq: complex
    value_weights: np.ndarray
    deriv_weights: np.ndarray
    degenerate: bool
    with_derivatives: bool

    def integrate(self, values, derivs=None):
        """Apply the rule to integrand data on the 4 Lobatto nodes."""
        out = self.h * np.dot(self.value_weights, values)
        if self.with_derivatives:
            if derivs is None:
                raise ValueError("derivative-augmented rule needs node derivatives")
            out = out + self.h * self.h * np.dot(self.deriv_weights, derivs)
        return out


def build_ef_rule(mu1_sq, mu2_sq, h: float, with_derivatives: bool) -> EFRule:
    """Construct the EF rule for the interval half-width h and the given
    squared frequencies (sign encodes the regime; complex values arise for
    mixed evanescent/oscillatory pairs)."""
    if h <= 0.0:
        raise EFConstructionError(mu1_sq, mu2_sq, "half-width must be positive")
    z1sq = mu1_sq * h * h
    z2sq = mu2_sq * h * h
    if not (np.all(np.isfinite([np.real(z1sq), np.imag(z1sq)]))
            and np.all(np.isfinite([np.real(z2sq), np.imag(z2sq)]))):
        raise EFConstructionError(mu1_sq, mu2_sq, "non-finite frequency")
    w0, w1, degen = _ef_even_weights(z1sq, z2sq, with_derivatives)
    return EFRule(float(h), mu1_sq, mu2_sq, w0[0], w1[0], bool(degen[0]),
                  bool(with_derivatives))


# ----------------------------------------------------------------------------
# Composite EF integration of eigenfunction products
# ----------------------------------------------------------------------------

def _pair_weight_arrays(e_u, refs_u, e_z, refs_z, half, with_derivatives):
    """EF weights for every (pair, step) combination.

    e_u, e_z are 1-d energy arrays; returns (P, n_steps, 4) weight arrays.
    """
    a_u = 2.0 * refs_u.mass * (refs_u.vbar[None, :] - np.asarray(e_u)[:, None])
    a_z = 2.0 * refs_z.mass * (refs_z.vbar[None, :] - np.asarray(e_z)[:, None])
    s_u = np.sqrt(a_u.astype(complex))
    s_z = np.sqrt(a_z.astype(complex))
    z1sq = ((s_u + s_z) * half) ** 2
    z2sq = ((s_u - s_z) * half) ** 2
    try:
        w0, w1, degen = _ef_even_weights(z1sq.ravel(), z2sq.ravel(),
                                         with_derivatives)
    except EFConstructionError as exc:
        raise EFConstructionError(exc.z1, exc.z2,
                                  "while building composite pair weights") from exc
    shape = z1sq.shape + (4,)
    return w0.reshape(shape), w1.reshape(shape), degen.reshape(z1sq.shape)


def _composite_pair_integrals(y_u, dy_u, e_u, refs_u, y_z, dy_z, e_z, refs_z,
                              mesh, f_nodes=None, df_nodes=None,
                              with_derivatives=True):
    """Composite EF integrals of (f *) u_p * z_p over the mesh for a batch of
    pairs.  y_u etc. have shape (P, n_nodes); f_nodes is shared by all pairs.
    """
    half = mesh.dx / 2.0
    sn = mesh.step_nodes
    w0, w1, _ = _pair_weight_arrays(e_u, refs_u, e_z, refs_z, half,
                                    with_derivatives)
    u = y_u[:, sn]
    z = y_z[:, sn]
    prod = u * z
    if f_nodes is not None:
        fs = np.asarray(f_nodes)[sn]
        vals = fs[None, :, :] * prod
    else:
        vals = prod
    out = half * np.einsum("psl,psl->p", w0, vals)
    if with_derivatives:
        dprod = dy_u[:, sn] * z + u * dy_z[:, sn]
        if f_nodes is not None:
            dvals = fs[None, :, :] * dprod
            if df_nodes is not None:
                dvals = dvals + np.asarray(df_nodes)[sn][None, :, :] * prod
        else:
            dvals = dprod
        out = out + half * half * np.einsum("psl,psl->p", w1, dvals)
    return out


def integrate_product(u, z, refs_u, refs_z, mesh: SpatialMesh) -> float:
    """EF integral of u(x)*z(x) over the mesh for two eigenpairs.

    Uses the derivative-augmented rule; the frequency pair of each step comes
    from the constant-reference data and eigenvalues of u and z.
    """
    out = _composite_pair_integrals(
        u.y[None, :], u.dy[None, :], np.array([u.energy]), refs_u,
        z.y[None, :], z.dy[None, :], np.array([z.energy]), refs_z,
        mesh, with_derivatives=True)
    return float(out[0])


def integrate_weighted_product(f, u, z, refs_u, refs_z, mesh: SpatialMesh,
                               f_derivative=None) -> float:
    """EF integral of f(x)*u(x)*z(x); derivative-augmented when f' is known,
    derivative-free otherwise."""
    f_nodes = f(mesh.nodes) if callable(f) else np.asarray(f)
    f_nodes = np.broadcast_to(np.asarray(f_nodes, dtype=float), mesh.nodes.shape)
    if f_derivative is not None:
        df_nodes = (f_derivative(mesh.nodes) if callable(f_derivative)
                    else np.asarray(f_derivative))
        df_nodes = np.broadcast_to(np.asarray(df_nodes, dtype=float),
                                   mesh.nodes.shape)
        with_derivatives = True
    else:
        df_nodes = None
        with_derivatives = False
    out = _composite_pair_integrals(
        u.y[None, :], u.dy[None, :], np.array([u.energy]), refs_u,
        z.y[None, :], z.dy[None, :], np.array([z.energy]), refs_z,
        mesh, f_nodes=f_nodes, df_nodes=df_nodes,
        with_derivatives=with_derivatives)
    return float(out[0])
