"""Compactified-coordinate differential calculus and quadrature.

The invariant complex Hessian is computed through the degenerate
derivative D = x(1-x) d/dx per axis: for a torus-invariant potential
``psi`` the coefficient of i ddbar(psi) in the log frame is D_j D_k psi.
The divided form L(psi) = D^2(psi)/g = g psi'' + g' psi' stays regular
at the endpoints and is used whenever a Fubini-Study-relative density
is wanted without a removable-singularity fill.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ModelRegularityError
from .grids import BASE, FIBER, Form11Field, Grid, VolumeDensity, values_of

TWO_PI = 2.0 * math.pi

_AXIS_INDEX = {FIBER: 0, BASE: 1}


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def diff1(a: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Second-order first derivative; one-sided stencils at the ends."""
    v = np.moveaxis(np.asarray(a, dtype=float), axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
    out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    return np.moveaxis(out, 0, axis)


def diff2(a: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Second-order second derivative; one-sided stencils at the ends."""
    v = np.moveaxis(np.asarray(a, dtype=float), axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h**2
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h**2
    out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h**2
    return np.moveaxis(out, 0, axis)


def _axis_arrays(grid: Grid, axis_name: str, ndim: int):
    """g, g' broadcast onto a field of the given dimensionality."""
    ax = _AXIS_INDEX[axis_name] if ndim == 2 else 0
    g, gp = grid.g(axis_name), grid.gp(axis_name)
    if ndim == 2 and axis_name == FIBER:
        g, gp = g[:, None], gp[:, None]
    elif ndim == 2:
        g, gp = g[None, :], gp[None, :]
    return g, gp, ax


def lap(grid: Grid, psi, axis_name: str) -> np.ndarray:
    """FS-relative ddbar density along one axis: g psi'' + g' psi'."""
    v = values_of(psi)
    g, gp, ax = _axis_arrays(grid, axis_name, v.ndim)
    h = grid.h(axis_name)
    return g * diff2(v, h, ax) + gp * diff1(v, h, ax)


def dop(grid: Grid, psi, axis_name: str) -> np.ndarray:
    """The degenerate derivative D = x(1-x) d/dx along one axis."""
    v = values_of(psi)
    g, _, ax = _axis_arrays(grid, axis_name, v.ndim)
    return g * diff1(v, grid.h(axis_name), ax)


def lap_matrix(grid: Grid, axis_name: str) -> np.ndarray:
    """Dense matrix of the divided operator L = g d2 + g' d1 (all rows).

    The endpoint rows degenerate to +/- the one-sided first derivative,
    which is exactly the natural pole-regularity condition.
    """
    n = grid.n(axis_name)
    h = grid.h(axis_name)
    eye = np.eye(n + 1)
    d1 = diff1(eye, h, 0)
    d2 = diff2(eye, h, 0)
    g, gp = grid.g(axis_name), grid.gp(axis_name)
    return g[:, None] * d2 + gp[:, None] * d1


# ---------------------------------------------------------------------------
# quadrature (Simpson; exact on constants by construction)
# ---------------------------------------------------------------------------

def simpson(grid: Grid, axis_name: str, values) -> float:
    """Composite Simpson over [0,1]; deterministic compensated summation."""
    v = values_of(values)
    k = grid.simpson(axis_name)
    return math.fsum((k * v).tolist()) / (3.0 * grid.n(axis_name))


def simpson2d(grid: Grid, values) -> float:
    v = values_of(values)
    w = grid.simpson_f[:, None] * grid.simpson_b[None, :]
    return math.fsum((w * v).ravel().tolist()) / (9.0 * grid.n_fiber * grid.n_base)


def simpson_columns(grid: Grid, values2d: np.ndarray) -> np.ndarray:
    """Simpson along the fiber axis for every base column (fixed order)."""
    return np.einsum("i,ij->j", grid.simpson_f, values2d) / (3.0 * grid.n_fiber)


def integrate_base(grid: Grid, g_vals, weight_fs) -> float:
    """Integral over the base of g against a form of FS-relative density."""
    return TWO_PI * simpson(grid, BASE, values_of(g_vals) * values_of(weight_fs))


def integrate_total(grid: Grid, density) -> float:
    """Total integral of a volume density over P^1 x P^1."""
    rho = density.rho if isinstance(density, VolumeDensity) else values_of(density)
    return TWO_PI**2 * simpson2d(grid, rho)


def mean2d(grid: Grid, values) -> float:
    return simpson2d(grid, values)


# ---------------------------------------------------------------------------
# removable-singularity fills
# ---------------------------------------------------------------------------

def _fill_ends(v: np.ndarray, axis: int) -> np.ndarray:
    """Quadratic extrapolation of the two endpoint layers from the interior."""
    w = np.moveaxis(v, axis, 0)
    w[0] = 3.0 * w[1] - 3.0 * w[2] + w[3]
    w[-1] = 3.0 * w[-2] - 3.0 * w[-3] + w[-4]
    return np.moveaxis(w, 0, axis)


def fs_ratio(grid: Grid, coeff: np.ndarray, axes=(FIBER, BASE)) -> np.ndarray:
    """Divide a log-frame coefficient by x(1-x) per listed axis, filling
    the removable endpoint singularities by one-sided limits."""
    out = np.array(coeff, dtype=float)
    for axis_name in axes:
        if out.ndim == 2:
            g, _, ax = _axis_arrays(grid, axis_name, 2)
        else:
            g, ax = grid.g(axis_name), 0
        with np.errstate(divide="ignore", invalid="ignore"):
            out = out / g
        out = _fill_ends(out, ax)
    if not np.all(np.isfinite(out)):
        raise ModelRegularityError("boundary limit of FS-relative density is not finite")
    return out


# ---------------------------------------------------------------------------
# invariant form operations
# ---------------------------------------------------------------------------

def ddbar_invariant(grid: Grid, psi) -> Form11Field:
    """Coefficient field of i ddbar(psi) for a torus-invariant potential.

    Exactly linear; second-order accurate in the grid spacings.  The
    defining identity i ddbar log(1+|z|^2) = omega_FS holds with the
    log(1+s) potential evaluated as -log(1-x).
    """
    v = values_of(psi)
    if v.ndim != 2:
        raise ValueError("ddbar_invariant expects a 2D potential")
    if not np.all(np.isfinite(v)):
        raise ValueError("ddbar_invariant: non-finite potential")
    g_f = grid.g_f[:, None]
    m_ff = g_f * lap(grid, v, FIBER)
    m_bb = grid.g_b[None, :] * lap(grid, v, BASE)
    m_fb = dop(grid, dop(grid, v, BASE), FIBER)
    return Form11Field(m_ff, m_bb, m_fb)


def wedge_top(grid: Grid, M: Form11Field) -> VolumeDensity:
    """Density of M^2/2 relative to the product FS volume."""
    num = M.m_ff * M.m_bb - M.m_fb**2
    return VolumeDensity(fs_ratio(grid, num))


def wedge_pair_density(grid: Grid, M: Form11Field, P: Form11Field) -> np.ndarray:
    """Density of M ^ P relative to the product FS volume (no positivity)."""
    num = M.m_ff * P.m_bb + M.m_bb * P.m_ff - 2.0 * M.m_fb * P.m_fb
    return fs_ratio(grid, num)


def fs_form(grid: Grid, fiber_coeff: float = 0.0, base_coeff: float = 0.0) -> Form11Field:
    """fiber_coeff * FS_f + base_coeff * FS_b as a coefficient field."""
    shape = grid.shape
    m_ff = np.broadcast_to(fiber_coeff * grid.g_f[:, None], shape).copy()
    m_bb = np.broadcast_to(base_coeff * grid.g_b[None, :], shape).copy()
    return Form11Field(m_ff, m_bb, np.zeros(shape))


def pullback_base_form(grid: Grid, base_fs: np.ndarray) -> Form11Field:
    """Pull a base (1,1)-form of FS-relative density back to the total space."""
    shape = grid.shape
    m_bb = np.broadcast_to(values_of(base_fs)[None, :] * grid.g_b[None, :], shape).copy()
    return Form11Field(np.zeros(shape), m_bb, np.zeros(shape))


def ric_volume(grid: Grid, V) -> Form11Field:
    """Ricci form of a volume form: 2(FS_f + FS_b) - i ddbar log(density)."""
    rho = V.rho if isinstance(V, VolumeDensity) else values_of(V)
    if np.any(rho <= 0.0):
        raise ValueError("ric_volume: density must be positive")
    return fs_form(grid, 2.0, 2.0) - ddbar_invariant(grid, np.log(rho))


def fiber_integral(grid: Grid, V) -> np.ndarray:
    """Push a volume density to the base: 2*pi int rho(x_f, b) dx_f."""
    rho = V.rho if isinstance(V, VolumeDensity) else values_of(V)
    if rho.ndim == 1:
        rho = rho[:, None] * np.ones((1, grid.n_base + 1))
    return TWO_PI * simpson_columns(grid, rho)


# ---------------------------------------------------------------------------
# high-order audit stencils (independent forward-application oracle)
# ---------------------------------------------------------------------------

def fd_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Fornberg weights for derivatives 0..m at z from nodes x."""
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


_AUDIT_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _audit_matrix(n_nodes: int, deriv: int) -> np.ndarray:
    """Five-point fourth-order derivative matrix on unit spacing."""
    key = (n_nodes, deriv)
    if key not in _AUDIT_CACHE:
        M = np.zeros((n_nodes, n_nodes))
        for i in range(n_nodes):
            j0 = min(max(i - 2, 0), n_nodes - 5)
            xs = np.arange(j0, j0 + 5, dtype=float)
            M[i, j0:j0 + 5] = fd_weights(float(i), xs, deriv)[:, deriv]
        _AUDIT_CACHE[key] = M
    return _AUDIT_CACHE[key]


def audit_lap(grid: Grid, psi, axis_name: str) -> np.ndarray:
    """L(psi) through an independent higher-order discretization."""
    v = values_of(psi)
    n = grid.n(axis_name)
    h = grid.h(axis_name)
    d1 = _audit_matrix(n + 1, 1) / h
    d2 = _audit_matrix(n + 1, 2) / h**2
    g, gp, ax = _axis_arrays(grid, axis_name, v.ndim)
    if v.ndim == 1:
        return g * (d2 @ v) + gp * (d1 @ v)
    if ax == 0:
        return g * np.einsum("ik,kj->ij", d2, v) + gp * np.einsum("ik,kj->ij", d1, v)
    return g * np.einsum("jk,ik->ij", d2, v) + gp * np.einsum("jk,ik->ij", d1, v)
