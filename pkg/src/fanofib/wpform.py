"""The Weil-Petersson-type base form, by two independent routes.

Route one integrates a family of fiber volume forms built from a
non-vanishing holomorphic section family and differentiates the log of
the fiber integrals.  Route two assembles the Ricci form of the
fibration volume (vertical metric wedged with a pulled-back base
metric) and reads the form off as the base-base component of a
residual that must be a pullback.

On the standard chart the section weight splits into exact log poles of
the base coordinate plus a globally smooth part; the pole parts are
differentiated in closed form (D^2 log x = D^2 log(1-x) = -x(1-x)), so
the computed form is regular across the whole base including the poles
where the chart frame degenerates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .calculus import TWO_PI, lap, simpson_columns
from .errors import FanofibError, PullbackStructureError
from .fiberwise import SKE, SPR, FiberFamilySolution
from .grids import BASE, FIBER, Grid
from .model import ReferenceGeometry


@dataclass(frozen=True)
class SectionFamilySpec:
    """Chart data of a non-vanishing holomorphic section family.

    F(b, z) = f_scale * z_b**f_power on the standard chart; nonzero
    ``f_power`` realizes the frame of the opposite chart, which is how
    the gluing of the local definitions is exercised.
    """

    alpha: int
    beta: int
    weight_kind: str = "hL"      # "hL" | "hSKE"
    f_scale: float = 1.0
    f_power: int = 0

    @classmethod
    def canonical(cls, consts, weight_kind: str = "hL") -> "SectionFamilySpec":
        return cls(alpha=consts.alpha, beta=consts.beta, weight_kind=weight_kind)


@dataclass(eq=False)
class SectionVolumeFamily:
    """Family of fiber volume densities relative to the fiber FS volume.

    density(x_f, b) = exp(smooth_log) * x_b^pole_zero * (1-x_b)^pole_one.
    """

    smooth_log: np.ndarray
    pole_zero: float
    pole_one: float
    ric_defect: float            # forward check of the prescribed fiber Ricci

    def density(self, grid: Grid) -> np.ndarray:
        xb = grid.nodes_b[None, :]
        out = np.exp(self.smooth_log)
        if self.pole_zero != 0.0:
            out = out * np.power(xb, self.pole_zero)
        if self.pole_one != 0.0:
            out = out * np.power(1.0 - xb, self.pole_one)
        return out


@dataclass(eq=False)
class WPResult:
    """The base-form coefficient and the weight of the direct-image metric."""

    wp_base: np.ndarray          # log-frame coefficient on the base grid
    wp_fs: np.ndarray            # FS-relative density (finite everywhere)
    log_norm: np.ndarray         # log of the fiber integrals; -inf where the
                                 # chart frame degenerates at a base pole
    smooth_log_norm: np.ndarray
    route: str
    verticality_defect: float | None = None
    mu: np.ndarray | None = None


def volume_family_from_sections(ref: ReferenceGeometry, sfs: SectionFamilySpec,
                                ske: FiberFamilySolution | None = None
                                ) -> SectionVolumeFamily:
    """Fiber volume forms of a section family, as FS-relative densities.

    The fiber-pole exponent 2 - lambda*c cancels exactly (that is the
    degeneration identity), so the density is bounded on every fiber; an
    imbalance means the section exponents are inconsistent with the
    model and is rejected.
    """
    consts = ref.consts
    if Fraction(sfs.alpha, sfs.beta) != consts.lam:
        raise FanofibError(
            f"section exponents {sfs.alpha}/{sfs.beta} inconsistent with the "
            f"degeneration ratio {consts.lam}")
    fiber_exponent = 2 - consts.lam * ref.spec.c
    if fiber_exponent != 0:
        raise FanofibError("unbounded fiber-pole behavior in the section "
                           "volume family")
    if sfs.f_scale <= 0.0:
        raise ValueError("f_scale must be positive")

    lam = float(consts.lam)
    smooth_weight = ref.phi_L.smooth
    if sfs.weight_kind == "hSKE":
        if ske is None or ske.kind != SKE:
            raise ValueError("hSKE weight needs a solved fiberwise Einstein family")
        smooth_weight = smooth_weight + ske.rho
    elif sfs.weight_kind != "hL":
        raise ValueError(f"unknown weight_kind {sfs.weight_kind!r}")

    beta = float(sfs.beta)
    smooth_log = (2.0 / beta) * math.log(sfs.f_scale) - lam * smooth_weight
    pole_zero = sfs.f_power / beta
    pole_one = float(consts.lam * ref.spec.a) - pole_zero

    # forward check of the defining fiber Ricci prescription
    ric_fs = 2.0 - lap(ref.grid, smooth_log, FIBER)
    if sfs.weight_kind == "hL":
        target = lam * ref.vertical_fs_omega0()
    else:
        target = lam * ske.vertical_fs
    ric_defect = float(np.abs(ric_fs - target).max())

    return SectionVolumeFamily(smooth_log=smooth_log, pole_zero=pole_zero,
                               pole_one=pole_one, ric_defect=ric_defect)


def wp_from_sections(ref: ReferenceGeometry,
                     family: SectionVolumeFamily) -> WPResult:
    """Differentiate the log fiber integrals of the section volume family.

    The pole parts of log_norm contribute pole_zero + pole_one to the
    FS-relative density in closed form; only the smooth part is
    differentiated on the grid.
    """
    grid = ref.grid
    integrals = TWO_PI * simpson_columns(grid, np.exp(family.smooth_log))
    if np.any(integrals <= 0.0):
        raise FanofibError("non-positive fiber integral in the section family")
    smooth_log_norm = np.log(integrals)

    wp_fs = (family.pole_zero + family.pole_one) - lap(grid, smooth_log_norm, BASE)
    wp_base = grid.g_b * wp_fs

    xb = grid.nodes_b
    log_norm = smooth_log_norm.copy()
    with np.errstate(divide="ignore"):
        if family.pole_zero != 0.0:
            log_norm = log_norm + family.pole_zero * np.log(xb)
        if family.pole_one != 0.0:
            log_norm = log_norm + family.pole_one * np.log(1.0 - xb)

    return WPResult(wp_base=wp_base, wp_fs=wp_fs, log_norm=log_norm,
                    smooth_log_norm=smooth_log_norm, route="sections")


def _twist_fs_base(ref: ReferenceGeometry,
                   fiber_sol: FiberFamilySolution) -> np.ndarray:
    """FS-relative base-base density of the twist form lambda*omega (the
    reference form for the prescribed-Ricci family, the family form
    itself for the Einstein family)."""
    lam = float(ref.consts.lam)
    out = lam * ref.base_fs_omega0()
    if fiber_sol.kind == SKE:
        out = out + lam * lap(ref.grid, fiber_sol.rho, BASE)
    return out


def wp_from_residual(ref: ReferenceGeometry, fiber_sol: FiberFamilySolution,
                     theta_fs: np.ndarray | float | None = None,
                     family: SectionVolumeFamily | None = None,
                     defect_tol: float | None = None) -> WPResult:
    """Recover the base form from the Ricci form of a fibration volume.

    For any base metric theta the combination

        twist + pullback(Ric theta) - Ric(vertical ^ pullback(theta))

    is a pullback; the theta-dependence cancels exactly (the linear
    splitting of the invariant Hessian makes the cancellation hold at
    the stencil level).  The base-base component is fiber-averaged and
    the vertical components plus the fiber oscillation are reported as
    the verticality defect.
    """
    grid = ref.grid
    lam = float(ref.consts.lam)
    if theta_fs is None:
        theta_fs = ref.eta_fs
    theta = np.broadcast_to(np.asarray(theta_fs, dtype=float),
                            (grid.n_base + 1,)).astype(float)
    if np.any(theta <= 0.0):
        raise ValueError("theta must be a base metric (positive density)")
    if fiber_sol.kind not in (SPR, SKE):
        raise ValueError(f"unknown fiber family kind {fiber_sol.kind!r}")

    u = fiber_sol.vertical_fs
    log_u = np.log(u)

    # vertical channel: twist_ff - (2 - L_f log u), times g_f
    if fiber_sol.kind == SPR:
        twist_ff_fs = lam * ref.vertical_fs_omega0()
        twist_fb = lam * ref.omega0.m_fb
    else:
        twist_ff_fs = lam * (ref.vertical_fs_omega0() +
                             lap(grid, fiber_sol.rho, FIBER))
        from .calculus import ddbar_invariant
        twist_fb = lam * (ref.omega0.m_fb +
                          ddbar_invariant(grid, fiber_sol.rho).m_fb)
    r_ff = (twist_ff_fs - (2.0 - lap(grid, log_u, FIBER))) * grid.g_f[:, None]

    # mixed channel: the pulled-back pieces have no mixed entry
    from .calculus import dop
    r_fb = twist_fb + dop(grid, dop(grid, log_u, BASE), FIBER)

    # base-base channel, FS-relative; the Ric(theta) and wedge theta terms
    # cancel identically, leaving twist_bb + L_b log u
    r_bb_fs = _twist_fs_base(ref, fiber_sol) + lap(grid, log_u, BASE)
    r_bb = r_bb_fs * grid.g_b[None, :]

    osc = r_bb.max(axis=0) - r_bb.min(axis=0)
    defect = float((np.abs(r_ff) + np.abs(r_fb) + osc[None, :]).max())
    if defect_tol is None:
        h2 = grid.h(FIBER)**2 + grid.h(BASE)**2
        defect_tol = max(1e-8, 50.0 * h2 * max(1.0, float(np.abs(r_bb).max())))
    if defect > defect_tol:
        raise PullbackStructureError(
            f"reconstructed form is not a pullback: defect {defect:.3e} "
            f"exceeds {defect_tol:.3e}")

    wp_fs = simpson_columns(grid, r_bb_fs)
    wp_base = grid.g_b * wp_fs

    mu = None
    log_norm = np.full(grid.n_base + 1, -np.inf)
    smooth_log_norm = np.zeros(grid.n_base + 1)
    if family is not None:
        fiber_vol = TWO_PI * simpson_columns(grid, u)
        mu = family.density(grid)
        mu = TWO_PI * simpson_columns(grid, mu) / fiber_vol
        with np.errstate(divide="ignore"):
            log_norm = np.log(TWO_PI * simpson_columns(grid, family.density(grid)))
        smooth_log_norm = (np.log(TWO_PI *
                                  simpson_columns(grid, np.exp(family.smooth_log))))

    return WPResult(wp_base=wp_base, wp_fs=wp_fs, log_norm=log_norm,
                    smooth_log_norm=smooth_log_norm, route="residual",
                    verticality_defect=defect, mu=mu)
