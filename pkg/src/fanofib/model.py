"""Model fibrations P^1 x P^1 -> P^1 and their exact derived constants.

The total space carries the reference class a*[FS_base] + c*[FS_fiber]
with a > c, so the fiber direction degenerates first under the
normalized Ricci flow of the class and the projection to the second
factor is the induced fibration.  All class arithmetic is exact
rational; the metric representative may be warped inside the fixed
class by a separable polynomial bump.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numpy.polynomial import Polynomial

from .calculus import TWO_PI, fs_form, integrate_total
from .errors import ConfigError, FanofibError, ModelOrientationError, PositivityError
from .grids import Form11Field, Grid, VolumeDensity

# Moment-coordinate weight x(1-x) as a polynomial; warp factors are kept
# at degree <= 3 so that every class integral below is Simpson-exact.
_G = Polynomial([0.0, 1.0, -1.0])

WARP_SHAPES: dict[str, tuple[Polynomial, Polynomial]] = {
    # unit-amplitude separable bumps psi_w/eps = P(x_f) * Q(x_b)
    "product_bump": (Polynomial([0.0, 1.0, -1.0]), Polynomial([0.0, 1.0, -1.0])),
    "skew_bump": (Polynomial([0.0, 1.0, -1.0]), Polynomial([0.0, 0.0, 1.0, -1.0])),
    # cubic fiber factor: the fiber solves are then not polynomial-exact,
    # which gives refinement studies genuine truncation content
    "fiber_cubic": (Polynomial([0.0, 0.0, 1.0, -1.0]), Polynomial([0.0, 1.0, -1.0])),
}


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, float):
        if not x.is_integer():
            raise ConfigError(f"class coefficient {x!r} is not an exact rational; "
                              "write it as 'p/q'")
        return Fraction(int(x))
    raise ConfigError(f"cannot interpret {x!r} as a rational")


@dataclass(frozen=True)
class ModelSpec:
    """Model parameters: class pair, warp potential, grid resolution."""

    a: Fraction
    c: Fraction
    warp_amplitude: float = 0.0
    warp_shape: str = "product_bump"
    n_fiber: int = 64
    n_base: int = 64

    @classmethod
    def make(cls, a, c, warp_amplitude=0.0, warp_shape="product_bump",
             n_fiber=64, n_base=64) -> "ModelSpec":
        if warp_shape not in WARP_SHAPES:
            raise ConfigError(f"unknown warp_shape {warp_shape!r}; "
                              f"available: {sorted(WARP_SHAPES)}")
        eps = float(warp_amplitude)
        if eps < 0.0:
            raise ConfigError("warp_amplitude must be >= 0")
        return cls(_as_fraction(a), _as_fraction(c), eps, warp_shape,
                   int(n_fiber), int(n_base))


@dataclass(frozen=True)
class DerivedConstants:
    """Exact rational invariants of the collapsing class."""

    eT: Fraction            # e^{-T}
    T: float
    lam: Fraction           # ratio e^{-T} / (1 - e^{-T})
    kappa: Fraction         # base form eta = kappa * FS_b
    k: int
    kprime: int             # k' = k (1 - e^{-T})
    alpha: int
    beta: int
    D_class: tuple[Fraction, Fraction]   # (base, fiber) components
    p: int
    q: int
    r: int


def derive_constants(spec: ModelSpec) -> DerivedConstants:
    """Exact rational arithmetic throughout; see DerivedConstants."""
    a, c = spec.a, spec.c
    if not (a > 0 and c > 0):
        raise ModelOrientationError("class coefficients must be positive")
    if a <= c:
        raise ModelOrientationError("fiber collapse requires a > c")

    eT = Fraction(2, 1) / (c + 2)
    one_minus = 1 - eT
    lam = eT / one_minus
    assert lam == Fraction(2, 1) / c
    kappa = (2 * a - 2 * c) / (c + 2)

    # smallest k with k e^{-T} and k(1 - e^{-T}) both integral
    k = eT.denominator
    if k > 10**4:
        raise ConfigError(f"class denominators too large (k = {k}); the "
                          "integral section powers become impractical")
    alpha = int(k * eT)
    kprime = k - alpha
    beta = kprime
    assert Fraction(alpha, beta) == lam
    assert Fraction(1, 1) / one_minus == lam + 1

    d_base = eT * a - 2 * one_minus
    d_fiber = eT * c - 2 * one_minus
    if d_fiber != 0:
        raise FanofibError("degenerate-direction component of the semi-ample "
                           "class must vanish exactly")
    assert d_base == kappa

    return DerivedConstants(eT=eT, T=math.log(float(1 / eT)), lam=lam,
                            kappa=kappa, k=k, kprime=kprime, alpha=alpha,
                            beta=beta, D_class=(d_base, d_fiber),
                            p=k, q=alpha, r=beta)


def kahler_class_at_decay(u: Fraction, spec: ModelSpec,
                          consts: DerivedConstants) -> tuple[Fraction, Fraction]:
    """Flow class at decay factor u = e^{-t}, exact in u."""
    u = _as_fraction(u)
    if not (consts.eT <= u <= 1):
        raise ValueError(f"decay factor {u} outside [e^-T, 1]")
    one_minus = 1 - consts.eT
    s0 = (u - consts.eT) / one_minus
    s1 = (1 - u) / one_minus
    return (s0 * spec.a + s1 * consts.kappa, s0 * spec.c)


def kahler_class_at_time(t: float, spec: ModelSpec,
                         consts: DerivedConstants) -> tuple[float, float]:
    """Flow class at time t in [0, T] (floating point)."""
    if t < -1e-12 or t > consts.T + 1e-12:
        raise ValueError(f"time {t} outside [0, {consts.T}]")
    u = math.exp(-min(max(t, 0.0), consts.T))
    s1 = (1.0 - u) / float(1 - consts.eT)
    s0 = 1.0 - s1
    return (s0 * float(spec.a) + s1 * float(consts.kappa), s0 * float(spec.c))


@dataclass(eq=False)
class ChartWeight:
    """Local potential split as pole parts plus a globally smooth part.

    Represents  pole_fiber*log(1+s_f) + pole_base*log(1+s_b) + smooth,
    with log(1+s) = -log(1-x); the log poles live at x = 1 and are kept
    symbolic so coefficient fields can be evaluated through their smooth
    extensions.
    """

    pole_fiber: float
    pole_base: float
    smooth: np.ndarray

    def shifted(self, const: float) -> "ChartWeight":
        return ChartWeight(self.pole_fiber, self.pole_base, self.smooth + const)


@dataclass(eq=False)
class WarpData:
    """Nodal values of the separable warp factors and their D-derivatives."""

    eps: float
    P: np.ndarray        # P(x_f)
    Q: np.ndarray        # Q(x_b)
    DP: np.ndarray       # x(1-x) P'
    DQ: np.ndarray
    D2P: np.ndarray      # (x(1-x) d_x)^2 P
    D2Q: np.ndarray
    D2P_fs: np.ndarray   # D2P / g = (g P')', polynomial hence exact at the poles
    D2Q_fs: np.ndarray
    DP_half: np.ndarray  # sqrt(g) P', for the FS-relative mixed entry
    DQ_half: np.ndarray


def _warp_data(grid: Grid, spec: ModelSpec) -> WarpData:
    P_poly, Q_poly = WARP_SHAPES[spec.warp_shape]
    xf, xb = grid.nodes_f, grid.nodes_b
    DP_poly = _G * P_poly.deriv()
    DQ_poly = _G * Q_poly.deriv()
    D2P_fs_poly = DP_poly.deriv()
    D2Q_fs_poly = DQ_poly.deriv()
    return WarpData(
        eps=spec.warp_amplitude,
        P=P_poly(xf), Q=Q_poly(xb),
        DP=DP_poly(xf), DQ=DQ_poly(xb),
        D2P=_G(xf) * D2P_fs_poly(xf), D2Q=_G(xb) * D2Q_fs_poly(xb),
        D2P_fs=D2P_fs_poly(xf), D2Q_fs=D2Q_fs_poly(xb),
        DP_half=np.sqrt(_G(xf)) * P_poly.deriv()(xf),
        DQ_half=np.sqrt(_G(xb)) * Q_poly.deriv()(xb),
    )


@dataclass(eq=False)
class ReferenceGeometry:
    """Reference metric, twist form and normalized volume form of a model."""

    spec: ModelSpec
    consts: DerivedConstants
    grid: Grid
    warp: WarpData
    omega0: Form11Field
    chi: Form11Field
    Omega: VolumeDensity
    phi_L: ChartWeight
    eta_fs: float            # FS-relative density of eta (the constant kappa)
    V: float                 # 2 * fiber volume of omega0
    phi_check_residual: float  # forward ddbar(phi_L) vs omega0, O(h^2)

    @property
    def psi_w(self) -> np.ndarray:
        return self.warp.eps * self.warp.P[:, None] * self.warp.Q[None, :]

    def vertical_fs_omega0(self) -> np.ndarray:
        """FS-relative density of omega0 restricted to the fibers."""
        w = self.warp
        return float(self.spec.c) + w.eps * w.D2P_fs[:, None] * w.Q[None, :]

    def base_fs_omega0(self) -> np.ndarray:
        """FS-relative density of the base-base entry of omega0."""
        w = self.warp
        return float(self.spec.a) + w.eps * w.P[:, None] * w.D2Q_fs[None, :]


def _omega0(grid: Grid, spec: ModelSpec, w: WarpData) -> Form11Field:
    a, c, eps = float(spec.a), float(spec.c), w.eps
    m_ff = c * grid.g_f[:, None] + eps * w.D2P[:, None] * w.Q[None, :]
    m_bb = a * grid.g_b[None, :] + eps * w.P[:, None] * w.D2Q[None, :]
    m_bb = np.broadcast_to(m_bb, grid.shape).copy()
    m_ff = np.broadcast_to(m_ff, grid.shape).copy()
    m_fb = eps * w.DP[:, None] * w.DQ[None, :]
    return Form11Field(m_ff, m_bb, m_fb)


def _check_positive(grid: Grid, spec: ModelSpec, w: WarpData) -> float:
    """Minimum FS-relative eigenvalue of omega0; raises if not positive."""
    a11 = float(spec.c) + w.eps * w.D2P_fs[:, None] * w.Q[None, :]
    a22 = float(spec.a) + w.eps * w.P[:, None] * w.D2Q_fs[None, :]
    a12 = w.eps * w.DP_half[:, None] * w.DQ_half[None, :]
    half_tr = 0.5 * (a11 + a22)
    disc = np.sqrt((0.5 * (a11 - a22))**2 + a12**2)
    lam_min = half_tr - disc
    i, j = np.unravel_index(int(np.argmin(lam_min)), lam_min.shape)
    worst = float(lam_min[i, j])
    if worst <= 0.0:
        raise PositivityError(
            f"reference form not positive: eigenvalue {worst:.3e} at "
            f"(x_f, x_b) = ({grid.nodes_f[i]:.4f}, {grid.nodes_b[j]:.4f})",
            worst=worst, location=(float(grid.nodes_f[i]), float(grid.nodes_b[j])))
    return worst


def build_reference(spec: ModelSpec, consts: DerivedConstants | None = None,
                    grid: Grid | None = None) -> ReferenceGeometry:
    """Construct omega0, chi, the normalized volume form and h_L's weight.

    chi is defined by pullback(eta) = e^{-T} omega0 + (1-e^{-T}) chi; its
    class is minus the anticanonical one, so the volume form with
    Ric = -chi has the closed-form density C exp(-lambda psi_w) and only
    the constant C is fixed by quadrature.
    """
    consts = consts or derive_constants(spec)
    grid = grid or Grid(spec.n_fiber, spec.n_base)
    w = _warp_data(grid, spec)
    _check_positive(grid, spec, w)

    omega0 = _omega0(grid, spec, w)
    lam = float(consts.lam)
    kappa = float(consts.kappa)

    eta_pull = fs_form(grid, 0.0, kappa)
    lam_plus = lam + 1.0
    chi = Form11Field(
        -lam * omega0.m_ff,
        lam_plus * eta_pull.m_bb - lam * omega0.m_bb,
        -lam * omega0.m_fb,
    )

    # residual of the defining relation, machine-zero by construction
    defect = (eta_pull - (float(consts.eT) * omega0 +
                          float(1 - consts.eT) * chi)).sup()
    if defect > 1e-10:
        raise FanofibError(f"twist-form identity violated: {defect:.3e}")

    psi_w = w.eps * w.P[:, None] * w.Q[None, :]
    rho_raw = np.exp(-lam * psi_w)
    # normalization: total mass of 2 omega0 ^ pullback(eta), same quadrature
    mixed_density = 2.0 * kappa * (float(spec.c) +
                                   w.eps * w.D2P_fs[:, None] * w.Q[None, :])
    target = integrate_total(grid, mixed_density)
    rho = rho_raw * (target / integrate_total(grid, rho_raw))
    Omega = VolumeDensity(rho)

    norm_defect = abs(integrate_total(grid, Omega) / target - 1.0)
    if norm_defect > 1e-12:
        raise FanofibError(f"volume normalization defect {norm_defect:.3e}")

    phi_L = ChartWeight(float(spec.c), float(spec.a), psi_w)

    # forward check Ric(h_L) = omega0: analytic pole parts are exact, the
    # smooth part is differentiated by the grid operators (O(h^2))
    from .calculus import ddbar_invariant  # local import avoids a cycle
    fd = ddbar_invariant(grid, psi_w)
    pole = fs_form(grid, phi_L.pole_fiber, phi_L.pole_base)
    phi_check = (pole + fd - omega0).sup()

    V = 2.0 * TWO_PI * float(spec.c)
    return ReferenceGeometry(spec=spec, consts=consts, grid=grid, warp=w,
                             omega0=omega0, chi=chi, Omega=Omega, phi_L=phi_L,
                             eta_fs=kappa, V=V, phi_check_residual=phi_check)


def omega_class(spec: ModelSpec) -> tuple[Fraction, Fraction]:
    """Reference class in the basis ([FS_base], [FS_fiber])."""
    return (spec.a, spec.c)
