import math

import numpy as np
import pytest

import oracles
from hvns.spectral import (
    BoxMismatchError,
    BoxSpec,
    PhysicalParams,
    SpectralField,
    apply_stokes_power,
    coeff_norm_sq,
    dealias,
    gram_defect,
    inner_product,
    leray_project,
    max_speed,
    mgs_orthonormalize,
    nonlinear_B,
    perp_basis,
    random_solenoidal,
    single_mode_field,
    sobolev_norm,
    stokes_eigenfields,
    trilinear_b,
)

BOX2 = BoxSpec(d=2, L=2 * math.pi, N=32)
BOX3 = BoxSpec(d=3, L=2 * math.pi, N=16)


def random_hermitian_field(box, seed):
    """Random zero-mean dealiased field with no solenoidality constraint."""
    rng = np.random.default_rng(seed)
    shape = (box.d,) + box.grid_shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    c = 0.5 * (c + np.conj(box.reflect(c)))
    c *= box.dealias_mask
    c[(slice(None),) + box.origin] = 0.0
    return SpectralField(box, c)


# ---------------------------------------------------------------------------
# box and field basics


def test_box_validation_messages():
    with pytest.raises(ValueError, match="box.d must be 2 or 3"):
        BoxSpec(d=4, L=1.0, N=16)
    with pytest.raises(ValueError, match="even integer >= 8"):
        BoxSpec(d=2, L=1.0, N=9)
    with pytest.raises(ValueError, match="even integer >= 8"):
        BoxSpec(d=2, L=1.0, N=6)
    with pytest.raises(ValueError, match="box.L must be positive"):
        BoxSpec(d=2, L=-1.0, N=16)


def test_lambda1_and_cutoff():
    assert BOX2.lambda1 == pytest.approx(1.0, rel=1e-15)
    box = BoxSpec(d=2, L=1.0, N=16)
    assert box.lambda1 == pytest.approx((2 * math.pi) ** 2, rel=1e-15)
    # strict 2/3 rule: N=32 keeps |n| <= 10
    assert BOX2.n_cut == 10
    kept = np.abs(BOX2.modes[np.abs(BOX2.modes) < BOX2.N / 3.0])
    assert kept.max() == 10


def test_dealias_mask_drops_nyquist_and_high_modes():
    mask = BOX2.dealias_mask
    # mode (11, 0) dropped, (10, 0) kept, Nyquist (16, anything) dropped
    assert not mask[11, 0]
    assert mask[10, 0]
    assert not mask[16, 0]


def test_round_trip_physical():
    u = random_solenoidal(BOX2, seed=1)
    v = SpectralField.from_physical(BOX2, u.to_physical())
    err = np.max(np.abs(v.coeffs - u.coeffs))
    assert err < 1e-13


def test_from_physical_shape_guard():
    with pytest.raises(BoxMismatchError):
        SpectralField.from_physical(BOX2, np.zeros((2, 16, 16)))


def test_field_shape_guard():
    with pytest.raises(BoxMismatchError):
        SpectralField(BOX2, np.zeros((3, 32, 32), dtype=complex))


def test_structural_defects_of_generated_fields():
    for seed in range(5):
        u = random_solenoidal(BOX2, seed=seed)
        scale = max(1.0, float(np.max(np.abs(u.coeffs))))
        assert u.hermitian_defect() < 1e-14 * scale
        assert u.mean_defect() == 0.0
        assert u.divergence_defect() < 1e-13


# ---------------------------------------------------------------------------
# Leray projection


def test_leray_annihilates_gradient_mode():
    # direction parallel to k: a pure gradient field
    u = single_mode_field(BOX2, (2, 1), direction=(2.0, 1.0), amplitude=1.0)
    p = leray_project(u)
    assert np.max(np.abs(p.coeffs)) < 1e-15


def test_leray_single_mode_component_kill():
    # mode n=(1,0) with coefficient (a, b) maps to (0, b)
    a, b = 0.7 - 0.2j, 0.3 + 0.5j
    c = np.zeros((2, 32, 32), dtype=complex)
    c[:, 1, 0] = (a, b)
    c[:, -1 % 32, 0] = np.conj((a, b))
    u = SpectralField(BOX2, c)
    p = leray_project(u)
    assert abs(p.coeffs[0, 1, 0]) < 1e-16
    assert p.coeffs[1, 1, 0] == pytest.approx(b, abs=1e-16)


def test_leray_idempotent_and_fixes_solenoidal():
    u = random_hermitian_field(BOX2, 3)
    p1 = leray_project(u)
    p2 = leray_project(p1)
    assert np.max(np.abs(p2.coeffs - p1.coeffs)) < 1e-14 * np.max(np.abs(p1.coeffs))
    assert p1.divergence_defect() < 1e-13
    s = random_solenoidal(BOX2, seed=4)
    ps = leray_project(s)
    assert np.max(np.abs(ps.coeffs - s.coeffs)) < 1e-14


def test_leray_self_adjoint():
    u = random_hermitian_field(BOX2, 5)
    v = random_hermitian_field(BOX2, 6)
    lhs = inner_product(leray_project(u), v)
    rhs = inner_product(u, leray_project(v))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_leray_matches_reference_loops():
    u = random_hermitian_field(BoxSpec(d=2, L=2 * math.pi, N=16), 7)
    ref = oracles.project_coeffs_reference(u.box, u.coeffs)
    got = leray_project(u).coeffs
    assert np.max(np.abs(ref - got)) < 1e-14


# ---------------------------------------------------------------------------
# Stokes powers and norms


def test_stokes_power_identity_and_semigroup():
    u = random_solenoidal(BOX2, seed=8)
    assert apply_stokes_power(u, 0.0) is u
    ab = apply_stokes_power(apply_stokes_power(u, 0.75), 1.25)
    direct = apply_stokes_power(u, 2.0)
    assert np.max(np.abs(ab.coeffs - direct.coeffs)) <= 1e-12 * np.max(np.abs(direct.coeffs))


def test_stokes_power_eigenmode_scaling():
    u = single_mode_field(BOX2, (3, 4), amplitude=1.0)  # |k|^2 = 25
    for s, lam in [(1.0, 25.0), (2.0, 625.0), (1.5, 125.0)]:
        au = apply_stokes_power(u, s)
        assert np.max(np.abs(au.coeffs - lam * u.coeffs)) < 1e-12 * lam


def test_sobolev_norm_single_mode_parseval():
    u = single_mode_field(BOX2, (0, 1), direction=(1, 0), amplitude=1.0)
    # two modes of magnitude 1/2: norm^2 = |O| / 2
    expected = math.sqrt(0.5 * BOX2.volume)
    assert sobolev_norm(u, 0.0) == pytest.approx(expected, rel=1e-14)
    quad = math.sqrt(oracles.quad_norm_sq(u, 0.0))
    assert sobolev_norm(u, 0.0) == pytest.approx(quad, rel=1e-12)


def test_sobolev_norms_match_quadrature_oracle():
    u = random_solenoidal(BOX2, seed=9)
    for s in (0.0, 1.0):
        quad = math.sqrt(oracles.quad_norm_sq(u, s))
        assert sobolev_norm(u, s) == pytest.approx(quad, rel=1e-12)


def test_poincare_holds_and_is_tight_at_first_eigenmode():
    lam1 = BOX2.lambda1
    for seed in range(50):
        u = random_solenoidal(BOX2, seed=seed)
        assert lam1 * sobolev_norm(u, 0.0) ** 2 <= sobolev_norm(u, 1.0) ** 2 * (1 + 1e-12)
    e1 = single_mode_field(BOX2, (1, 0), amplitude=1.0)
    ratio = lam1 * sobolev_norm(e1, 0.0) ** 2 / sobolev_norm(e1, 1.0) ** 2
    assert ratio == pytest.approx(1.0, rel=1e-12)


def test_fractional_sobolev_norm():
    u = single_mode_field(BOX2, (3, 4), amplitude=2.0)
    # |k| = 5: s = 1/2 multiplies norm^2 by 5
    assert sobolev_norm(u, 0.5) == pytest.approx(math.sqrt(5.0) * sobolev_norm(u, 0.0), rel=1e-13)


# ---------------------------------------------------------------------------
# trilinear form


def test_trilinear_frozen_shear_value():
    # value frozen from the refined-grid quadrature oracle (= -pi^2/sqrt(2))
    u = single_mode_field(BOX2, (0, 1), direction=(1, 0), amplitude=1.0, phase="cos")
    v = single_mode_field(BOX2, (1, 0), direction=(0, 1), amplitude=1.0, phase="cos")
    w = single_mode_field(BOX2, (1, 1), amplitude=1.0, phase="sin")
    frozen = -6.9788641996388785
    assert trilinear_b(u, v, w) == pytest.approx(frozen, rel=1e-13)
    assert oracles.quad_trilinear(u, v, w) == pytest.approx(frozen, rel=1e-12)


def test_trilinear_matches_oracle_on_random_fields():
    box = BoxSpec(d=2, L=2 * math.pi, N=16)
    u = random_solenoidal(box, seed=10)
    v = random_solenoidal(box, seed=11)
    w = random_solenoidal(box, seed=12)
    got = trilinear_b(u, v, w)
    ref = oracles.quad_trilinear(u, v, w)
    assert got == pytest.approx(ref, rel=1e-11, abs=1e-13)


def test_trilinear_cancellation_identities():
    for seed in range(20):
        u = random_solenoidal(BOX2, seed=100 + seed)
        v = random_hermitian_field(BOX2, 200 + seed)
        w = random_hermitian_field(BOX2, 300 + seed)
        scale_uuu = sobolev_norm(u) ** 2 * sobolev_norm(u, 1.0)
        assert abs(trilinear_b(u, u, u)) <= 1e-12 * scale_uuu
        scale_uvw = sobolev_norm(u) * sobolev_norm(v, 1.0) * sobolev_norm(w)
        assert abs(trilinear_b(u, v, w) + trilinear_b(u, w, v)) <= 1e-12 * scale_uvw


def test_trilinear_3d_identities():
    for seed in range(5):
        u = random_solenoidal(BOX3, seed=400 + seed)
        v = random_solenoidal(BOX3, seed=500 + seed)
        w = random_solenoidal(BOX3, seed=600 + seed)
        scale = sobolev_norm(u) ** 2 * sobolev_norm(u, 1.0)
        assert abs(trilinear_b(u, u, u)) <= 1e-12 * scale
        scale2 = sobolev_norm(u) * sobolev_norm(v, 1.0) * sobolev_norm(w)
        assert abs(trilinear_b(u, v, w) + trilinear_b(u, w, v)) <= 1e-12 * scale2


# ---------------------------------------------------------------------------
# nonlinear term


def test_nonlinear_single_mode_self_advection_vanishes():
    u = single_mode_field(BOX2, (2, 0), amplitude=1.3)
    b = nonlinear_B(u, u)
    assert np.max(np.abs(b.coeffs)) < 1e-14


def test_nonlinear_adjoint_consistency():
    for seed in range(10):
        u = random_solenoidal(BOX2, seed=600 + seed)
        v = random_solenoidal(BOX2, seed=700 + seed)
        w = random_solenoidal(BOX2, seed=800 + seed)
        lhs = inner_product(nonlinear_B(u, v), w)
        rhs = trilinear_b(u, v, w)
        scale = sobolev_norm(u) * sobolev_norm(v, 1.0) * sobolev_norm(w)
        assert abs(lhs - rhs) <= 1e-10 * scale


def test_nonlinear_energy_flux_neutrality():
    for seed in range(10):
        u = random_solenoidal(BOX2, seed=900 + seed)
        flux = inner_product(nonlinear_B(u, u), u)
        scale = sobolev_norm(u) ** 2 * sobolev_norm(u, 1.0)
        assert abs(flux) <= 1e-12 * scale


def test_nonlinear_matches_convolution_oracle_2d():
    box = BoxSpec(d=2, L=2 * math.pi, N=16)
    # Taylor-Green style pair plus a random one
    u = single_mode_field(box, (1, 0), direction=(0, 1), amplitude=1.0) + single_mode_field(
        box, (0, 1), direction=(1, 0), amplitude=-1.0
    )
    ref = oracles.convolution_advect(u, u)
    ref = oracles.project_coeffs_reference(box, ref)
    got = nonlinear_B(u, u).coeffs
    assert np.max(np.abs(got - ref)) < 1e-12
    ur = random_solenoidal(box, seed=13)
    vr = random_solenoidal(box, seed=14)
    ref = oracles.project_coeffs_reference(box, oracles.convolution_advect(ur, vr))
    got = nonlinear_B(ur, vr).coeffs
    assert np.max(np.abs(got - ref)) < 1e-12 * max(1.0, np.max(np.abs(ref)))


def test_nonlinear_matches_convolution_oracle_3d():
    box = BoxSpec(d=3, L=2 * math.pi, N=8)
    u = random_solenoidal(box, seed=15)
    v = random_solenoidal(box, seed=16)
    ref = oracles.project_coeffs_reference(box, oracles.convolution_advect(u, v))
    got = nonlinear_B(u, v).coeffs
    assert np.max(np.abs(got - ref)) < 1e-13


def test_nonlinear_output_is_clean():
    u = random_solenoidal(BOX2, seed=17)
    v = random_solenoidal(BOX2, seed=18)
    b = nonlinear_B(u, v)
    assert b.divergence_defect() < 1e-12
    assert b.mean_defect() == 0.0
    assert np.max(np.abs(b.coeffs[:, ~BOX2.dealias_mask])) == 0.0
    assert b.hermitian_defect() < 1e-13


# ---------------------------------------------------------------------------
# generators


def test_random_solenoidal_reproducible_and_normalized():
    u1 = random_solenoidal(BOX2, seed=42, amplitude=2.5)
    u2 = random_solenoidal(BOX2, seed=42, amplitude=2.5)
    u3 = random_solenoidal(BOX2, seed=43, amplitude=2.5)
    assert np.array_equal(u1.coeffs, u2.coeffs)
    assert not np.array_equal(u1.coeffs, u3.coeffs)
    assert sobolev_norm(u1) == pytest.approx(2.5, rel=1e-12)
    assert np.max(np.abs(u1.coeffs[:, ~BOX2.dealias_mask])) == 0.0


def test_single_mode_physical_values():
    box = BOX2
    u = single_mode_field(box, (0, 4), direction=(1.0, 0.0), amplitude=0.7, phase="sin")
    x = box.grid()
    expected = 0.7 * np.sin(4.0 * x[1])
    phys = u.to_physical()
    assert np.max(np.abs(phys[0] - expected)) < 1e-13
    assert np.max(np.abs(phys[1])) < 1e-13


def test_max_speed_single_mode():
    u = single_mode_field(BOX2, (1, 0), amplitude=0.9, phase="cos")
    assert max_speed(u) == pytest.approx(0.9, rel=1e-12)


def test_perp_basis_orthogonality():
    for n in [(1, 0), (3, -2)]:
        (t,) = perp_basis(n, 2)
        assert abs(np.dot(t, n)) < 1e-14
        assert np.linalg.norm(t) == pytest.approx(1.0)
    for n in [(1, 0, 0), (2, -1, 3)]:
        t1, t2 = perp_basis(n, 3)
        assert abs(np.dot(t1, n)) < 1e-13
        assert abs(np.dot(t2, n)) < 1e-13
        assert abs(np.dot(t1, t2)) < 1e-13


def test_stokes_eigenfields_2d():
    fields, lams = stokes_eigenfields(BOX2, 8)
    assert np.allclose(lams, [1, 1, 1, 1, 2, 2, 2, 2])
    stack = np.stack([f.coeffs for f in fields])
    assert gram_defect(BOX2, stack) < 1e-12
    for f, lam in zip(fields, lams):
        af = apply_stokes_power(f, 1.0)
        assert np.max(np.abs(af.coeffs - lam * f.coeffs)) < 1e-12


def test_stokes_eigenfields_3d_multiplicity():
    fields, lams = stokes_eigenfields(BOX3, 12)
    # 3 lattice directions x 2 perpendicular directions x cos/sin at |n|=1
    assert np.allclose(lams, [1.0] * 12)
    stack = np.stack([f.coeffs for f in fields])
    assert gram_defect(BOX3, stack) < 1e-12


def test_mgs_orthonormalize():
    stack = np.stack([random_solenoidal(BOX2, seed=s).coeffs for s in range(19, 25)])
    ortho, diag = mgs_orthonormalize(BOX2, stack)
    assert gram_defect(BOX2, ortho) < 1e-12
    assert np.all(diag > 0)


def test_physical_params_validation():
    f = single_mode_field(BOX2, (0, 4), direction=(1, 0), amplitude=1.0, phase="sin")
    PhysicalParams(nu=0.1, eps=0.0, l=2.0, forcing=f)
    with pytest.raises(ValueError, match="params.nu must be positive"):
        PhysicalParams(nu=0.0, eps=0.0, l=2.0, forcing=f)
    with pytest.raises(ValueError, match="params.eps must be >= 0"):
        PhysicalParams(nu=0.1, eps=-1.0, l=2.0, forcing=f)
    with pytest.raises(ValueError, match="params.l must be >= 1"):
        PhysicalParams(nu=0.1, eps=0.0, l=0.5, forcing=f)
    bad = single_mode_field(BOX2, (0, 4), direction=(0, 1), amplitude=1.0)  # gradient-like
    with pytest.raises(ValueError, match="solenoidal"):
        PhysicalParams(nu=0.1, eps=0.0, l=2.0, forcing=bad)


def test_inner_product_parseval():
    u = random_solenoidal(BOX2, seed=26)
    assert inner_product(u, u) == pytest.approx(sobolev_norm(u) ** 2, rel=1e-13)
    v = random_solenoidal(BOX2, seed=27)
    assert inner_product(u, v) == pytest.approx(inner_product(v, u), rel=1e-12)
