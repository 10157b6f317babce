import math

import numpy as np
import pytest

from fanofib.errors import FanofibError, PullbackStructureError
from fanofib.fiberwise import gauge_shifted, solve_spr
from fanofib.model import ModelSpec, build_reference
from fanofib.wpform import (SectionFamilySpec, volume_family_from_sections,
                            wp_from_residual, wp_from_sections)


def canonical(ref, kind="hL"):
    return SectionFamilySpec.canonical(ref.consts, kind)


# ---------------------------------------------------------------------------
# the section volume family
# ---------------------------------------------------------------------------

def test_family_density_model_a(ref_a):
    fam = volume_family_from_sections(ref_a, canonical(ref_a))
    dens = fam.density(ref_a.grid)
    expect = (1.0 - ref_a.grid.nodes_b[None, :])**4
    assert np.abs(dens - expect).max() < 1e-14
    assert fam.ric_defect < 1e-13


def test_family_ric_forward_check(ref_b):
    fam = volume_family_from_sections(ref_b, canonical(ref_b))
    assert fam.ric_defect < 50.0 * (1.0 / 64)**2


def test_family_rejects_inconsistent_exponents(ref_a):
    bad = SectionFamilySpec(alpha=3, beta=1)
    with pytest.raises(FanofibError, match="inconsistent"):
        volume_family_from_sections(ref_a, bad)


def test_family_hske_needs_solution(ref_a):
    with pytest.raises(ValueError):
        volume_family_from_sections(ref_a, canonical(ref_a, "hSKE"))


# ---------------------------------------------------------------------------
# sections route
# ---------------------------------------------------------------------------

def test_wp_sections_closed_form_two_one(ref_a):
    wp = wp_from_sections(ref_a, volume_family_from_sections(ref_a, canonical(ref_a)))
    assert np.abs(wp.wp_fs - 4.0).max() < 1e-12
    assert np.abs(wp.wp_base - 4.0 * ref_a.grid.g_b).max() < 1e-12


def test_wp_sections_closed_form_three_two(ref_a32):
    wp = wp_from_sections(ref_a32,
                          volume_family_from_sections(ref_a32, canonical(ref_a32)))
    assert np.abs(wp.wp_fs - 3.0).max() < 1e-12


def test_wp_sections_lognorm_pole_structure(ref_a):
    wp = wp_from_sections(ref_a, volume_family_from_sections(ref_a, canonical(ref_a)))
    assert wp.log_norm[-1] == -np.inf          # canonical frame dies at x_b=1
    assert np.isfinite(wp.log_norm[:-1]).all()
    assert np.isfinite(wp.wp_fs).all()         # the form itself is regular


def test_wp_constant_family_rescale_invariance(ref_b):
    fam = volume_family_from_sections(ref_b, canonical(ref_b))
    spec5 = SectionFamilySpec(alpha=ref_b.consts.alpha, beta=ref_b.consts.beta,
                              f_scale=5.0)
    fam5 = volume_family_from_sections(ref_b, spec5)
    wp1 = wp_from_sections(ref_b, fam)
    wp5 = wp_from_sections(ref_b, fam5)
    # the log integrals shift by the constant 2 log(5) / beta
    shift = wp5.log_norm[:-1] - wp1.log_norm[:-1]
    expect = 2.0 * math.log(5.0) / float(ref_b.consts.beta)
    assert np.abs(shift - expect).max() < 1e-12
    assert np.abs(wp5.wp_base - wp1.wp_base).max() < 1e-12


def test_wp_frame_change_invariance(ref_b):
    # the opposite-chart frame F = z_b^M changes the weight by exact log
    # poles whose invariant Hessian vanishes; the form must not move
    deg = int(float(ref_b.consts.lam * ref_b.spec.a) * ref_b.consts.beta)
    wp1 = wp_from_sections(ref_b, volume_family_from_sections(ref_b, canonical(ref_b)))
    for power in (1, deg):
        spec = SectionFamilySpec(alpha=ref_b.consts.alpha,
                                 beta=ref_b.consts.beta, f_power=power)
        wp2 = wp_from_sections(ref_b, volume_family_from_sections(ref_b, spec))
        assert np.abs(wp2.wp_base - wp1.wp_base).max() < 1e-12
    # the full-degree twist moves the log-norm pole to the other end
    spec = SectionFamilySpec(alpha=ref_b.consts.alpha, beta=ref_b.consts.beta,
                             f_power=deg)
    fam = volume_family_from_sections(ref_b, spec)
    assert fam.pole_one == pytest.approx(0.0, abs=1e-14)


def test_wp_weight_constant_shift(ref_b):
    ref2 = build_reference(ref_b.spec)
    ref2.phi_L.smooth += 0.37
    # a constant shift of the metric weight scales the whole family and
    # moves log_norm by an additive constant only
    lam = float(ref_b.consts.lam)
    fam1 = volume_family_from_sections(ref_b, canonical(ref_b))
    fam2 = volume_family_from_sections(ref2, canonical(ref2))
    wp1, wp2 = wp_from_sections(ref_b, fam1), wp_from_sections(ref2, fam2)
    shift = wp2.smooth_log_norm - wp1.smooth_log_norm
    assert np.abs(shift + lam * 0.37).max() < 1e-12
    assert np.abs(wp2.wp_base - wp1.wp_base).max() < 1e-12


# ---------------------------------------------------------------------------
# residual route
# ---------------------------------------------------------------------------

def test_wp_residual_model_a(ref_a, spr_a):
    fam = volume_family_from_sections(ref_a, canonical(ref_a))
    wp = wp_from_residual(ref_a, spr_a, family=fam)
    assert np.abs(wp.wp_fs - 4.0).max() < 1e-10
    assert wp.verticality_defect < 1e-10
    # fiber ratio of the two normalizations of the same fiber Ricci data
    assert wp.mu[0] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.isfinite(wp.mu))


def test_wp_residual_theta_independence(ref_b, spr_b):
    g = ref_b.grid
    wp1 = wp_from_residual(ref_b, spr_b)
    wp2 = wp_from_residual(ref_b, spr_b, theta_fs=1.0 + g.g_b)
    assert np.array_equal(wp1.wp_base, wp2.wp_base)


def test_wp_residual_rejects_bad_theta(ref_b, spr_b):
    with pytest.raises(ValueError):
        wp_from_residual(ref_b, spr_b, theta_fs=-1.0)


def test_wp_residual_flags_inconsistent_fiber_data(ref_b, spr_b):
    corrupted = gauge_shifted(spr_b, np.zeros(ref_b.grid.n_base + 1))
    corrupted.vertical_fs = spr_b.vertical_fs * (
        1.0 + 0.3 * ref_b.grid.nodes_f[:, None])
    with pytest.raises(PullbackStructureError):
        wp_from_residual(ref_b, corrupted)


def test_wp_residual_gauge_bit_identical(ref_b, spr_b):
    beta = 0.3 * np.sin(2.0 * np.pi * ref_b.grid.nodes_b)
    wp1 = wp_from_residual(ref_b, spr_b)
    wp2 = wp_from_residual(ref_b, gauge_shifted(spr_b, beta))
    assert np.array_equal(wp1.wp_base, wp2.wp_base)
    assert wp1.verticality_defect == wp2.verticality_defect


# ---------------------------------------------------------------------------
# route equivalence
# ---------------------------------------------------------------------------

def test_routes_agree_model_a(ref_a, spr_a):
    fam = volume_family_from_sections(ref_a, canonical(ref_a))
    wps = wp_from_sections(ref_a, fam)
    wpr = wp_from_residual(ref_a, spr_a)
    assert np.abs(wps.wp_base - wpr.wp_base).max() < 1e-10


def test_routes_agree_second_order_cubic_model():
    diffs = []
    for n in (32, 64, 128):
        ref = build_reference(ModelSpec.make(2, 1, warp_amplitude=0.2,
                                             warp_shape="fiber_cubic",
                                             n_fiber=n, n_base=n))
        spr = solve_spr(ref)
        fam = volume_family_from_sections(ref, canonical(ref))
        wps = wp_from_sections(ref, fam)
        wpr = wp_from_residual(ref, spr)
        diffs.append(np.abs(wps.wp_base - wpr.wp_base).max())
    orders = [math.log2(a / b) for a, b in zip(diffs, diffs[1:])]
    assert min(orders) > 1.8


def test_wp_positivity_is_reported_not_asserted(ref_b):
    wp = wp_from_sections(ref_b, volume_family_from_sections(ref_b, canonical(ref_b)))
    assert isinstance(float(wp.wp_fs.min()), float)
