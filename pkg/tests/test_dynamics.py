"""Integrator behavior: exactness, invariants, budget convergence."""

import numpy as np
import pytest

from hvns.diagnostics import total_budget_residual
from hvns.dynamics import (
    BlowUpError,
    CFLWarning,
    SimConfig,
    SimState,
    rhs,
    simulate,
    step,
)
from hvns.spectral import (
    BoxSpec,
    PhysicalParams,
    SpectralField,
    random_solenoidal,
    single_mode_field,
    sobolev_norm,
)

BOX = BoxSpec(2, 2.0 * np.pi, 32)
ZERO_F = SpectralField.zeros(BOX)


def decay_params(nu=0.1, eps=0.0, l=2.0):
    return PhysicalParams(nu=nu, eps=eps, l=l, forcing=ZERO_F)


class TestConfigValidation:
    def test_bad_dt(self):
        with pytest.raises(ValueError, match="time.dt must be positive"):
            SimConfig(params=decay_params(), u0=ZERO_F, dt=0.0, t_end=1.0)

    def test_t_end_not_multiple(self):
        with pytest.raises(ValueError, match="integer multiple"):
            SimConfig(params=decay_params(), u0=ZERO_F, dt=0.3, t_end=1.0)

    def test_bad_scheme(self):
        with pytest.raises(ValueError, match="time.scheme"):
            SimConfig(params=decay_params(), u0=ZERO_F, dt=0.1, t_end=1.0, scheme="rk4")

    def test_bad_output_every(self):
        with pytest.raises(ValueError, match="output_every"):
            SimConfig(params=decay_params(), u0=ZERO_F, dt=0.1, t_end=1.0, output_every=0)

    def test_non_solenoidal_u0(self):
        c = np.zeros((2,) + BOX.grid_shape, dtype=np.complex128)
        c[0][1, 0] = 0.5  # gradient-like mode, k parallel to amplitude
        c[0][-1, 0] = 0.5
        bad = SpectralField(BOX, c)
        with pytest.raises(ValueError, match="solenoidal"):
            SimConfig(params=decay_params(), u0=bad, dt=0.1, t_end=1.0)

    def test_box_mismatch(self):
        other = BoxSpec(2, 2.0 * np.pi, 16)
        with pytest.raises(ValueError, match="different boxes"):
            SimConfig(params=decay_params(), u0=SpectralField.zeros(other), dt=0.1, t_end=1.0)

    def test_n_steps(self):
        cfg = SimConfig(params=decay_params(), u0=ZERO_F, dt=0.1, t_end=1.0)
        assert cfg.n_steps == 10


class TestRhs:
    def test_zero_everything(self):
        out = rhs(ZERO_F, decay_params())
        assert np.all(out.coeffs == 0.0)

    def test_forcing_only(self):
        f = single_mode_field(BOX, (0, 2), amplitude=0.3)
        out = rhs(SpectralField.zeros(BOX), PhysicalParams(nu=0.1, eps=0.0, l=2.0, forcing=f))
        assert np.allclose(out.coeffs, f.coeffs, atol=1e-15)

    def test_single_mode_linear(self):
        u = single_mode_field(BOX, (1, 2), amplitude=0.4)
        params = decay_params(nu=0.1, eps=1e-3, l=2.0)
        sig = 0.1 * 5.0 + 1e-3 * 25.0
        out = rhs(u, params)
        assert np.allclose(out.coeffs, -sig * u.coeffs, rtol=1e-13, atol=1e-16)


@pytest.mark.parametrize("scheme", ["if_rk2", "etdrk4"])
@pytest.mark.parametrize("eps", [0.0, 1e-3])
def test_single_mode_decay_exact(scheme, eps):
    """With one mode the nonlinearity vanishes and the step is the exact factor."""
    u0 = single_mode_field(BOX, (1, 2), amplitude=0.7)
    params = decay_params(nu=0.1, eps=eps)
    cfg = SimConfig(params=params, u0=u0, dt=0.01, t_end=2.0, output_every=20, scheme=scheme)
    recs = []
    simulate(cfg, record_sink=recs.append)
    sig = 0.1 * 5.0 + eps * 25.0
    e0 = recs[0].energy
    for r in recs:
        exact = e0 * np.exp(-2.0 * sig * r.t)
        assert abs(r.energy - exact) <= 1e-12 * exact


@pytest.mark.parametrize("scheme", ["if_rk2", "etdrk4"])
def test_zero_state_stays_zero(scheme):
    cfg = SimConfig(params=decay_params(), u0=ZERO_F, dt=0.1, t_end=1.0, scheme=scheme)
    recs = []
    fin = simulate(cfg, record_sink=recs.append)
    assert np.all(fin.u.coeffs == 0.0)
    assert all(r.energy == 0.0 and r.budget_residual == 0.0 for r in recs)


class TestFixedPoint:
    """A steady single-mode state is held to round-off per step."""

    def setup_method(self):
        self.f = single_mode_field(BOX, (0, 1), amplitude=0.5)
        self.params = PhysicalParams(nu=0.1, eps=1e-3, l=2.0, forcing=self.f)
        sig = 0.1 * 1.0 + 1e-3 * 1.0
        self.u_star = SpectralField(BOX, self.f.coeffs / sig)

    @pytest.mark.parametrize("scheme", ["if_rk2", "etdrk4"])
    def test_per_step_drift(self, scheme):
        cfg = SimConfig(params=self.params, u0=self.u_star, dt=1e-3, t_end=1e-3, scheme=scheme)
        state = step(SimState(t=0.0, u=self.u_star, step_index=0), cfg)
        drift = sobolev_norm(state.u - self.u_star) / sobolev_norm(self.u_star)
        assert drift <= 1e-12

    def test_etdrk4_holds_exactly(self):
        cfg = SimConfig(params=self.params, u0=self.u_star, dt=1e-3, t_end=0.05, scheme="etdrk4")
        fin = simulate(cfg)
        drift = sobolev_norm(fin.u - self.u_star) / sobolev_norm(self.u_star)
        assert drift <= 1e-14


def test_eps_monotone_decay():
    """Larger eps decays at least as fast, exact on single-mode data."""
    u0 = single_mode_field(BOX, (2, 1), amplitude=0.9)
    energies = {}
    for eps in (1e-2, 1e-3):
        cfg = SimConfig(params=decay_params(eps=eps), u0=u0, dt=0.01, t_end=1.0, output_every=10)
        recs = []
        simulate(cfg, record_sink=recs.append)
        energies[eps] = np.array([r.energy for r in recs])
    assert np.all(energies[1e-2] <= energies[1e-3] * (1.0 + 1e-14))


def test_eps_continuity_at_zero():
    """eps=0 and eps=1e-12 runs agree to 1e-9 over t in [0,1]."""
    f = single_mode_field(BOX, (0, 3), amplitude=0.5)
    u0 = random_solenoidal(BOX, seed=7, amplitude=1.0, k_cut=3.0)
    finals = {}
    for eps in (0.0, 1e-12):
        params = PhysicalParams(nu=0.1, eps=eps, l=2.0, forcing=f)
        cfg = SimConfig(params=params, u0=u0, dt=0.01, t_end=1.0, output_every=100)
        finals[eps] = simulate(cfg).u
    diff = sobolev_norm(finals[0.0] - finals[1e-12]) / sobolev_norm(finals[0.0])
    assert diff <= 1e-9


def test_t_end_zero_single_record():
    u0 = single_mode_field(BOX, (1, 0), amplitude=0.2)
    cfg = SimConfig(params=decay_params(), u0=u0, dt=0.1, t_end=0.0)
    recs = []
    fin = simulate(cfg, record_sink=recs.append)
    assert len(recs) == 1
    assert recs[0].t == 0.0 and recs[0].budget_residual == 0.0
    assert np.array_equal(fin.u.coeffs, u0.coeffs)
    assert fin.step_index == 0


def test_record_cadence_and_time_grid():
    u0 = single_mode_field(BOX, (1, 2), amplitude=0.3)
    cfg = SimConfig(params=decay_params(), u0=u0, dt=0.1, t_end=1.1, output_every=4)
    recs = []
    states = []
    simulate(cfg, record_sink=recs.append, state_sink=states.append)
    steps = [s.step_index for s in states]
    assert steps == [0, 4, 8, 11]
    for s in states:
        assert s.t == s.step_index * 0.1


def test_energy_envelope_zero_forcing():
    """||u(t)||^2 <= ||u0||^2 exp(-nu lambda1 t) at every sample."""
    u0 = random_solenoidal(BOX, seed=11, amplitude=2.0)
    cfg = SimConfig(params=decay_params(nu=0.2), u0=u0, dt=0.005, t_end=1.5, output_every=10)
    recs = []
    simulate(cfg, record_sink=recs.append)
    e0 = recs[0].energy
    for r in recs:
        assert r.energy <= e0 * np.exp(-0.2 * BOX.lambda1 * r.t) * (1.0 + 1e-9)


@pytest.mark.filterwarnings("ignore::hvns.dynamics.CFLWarning")
def test_blowup_detected():
    u0 = random_solenoidal(BOX, seed=1, amplitude=1e7)
    params = PhysicalParams(nu=1e-6, eps=0.0, l=2.0, forcing=ZERO_F)
    cfg = SimConfig(params=params, u0=u0, dt=1.0, t_end=5.0)
    with pytest.raises(BlowUpError, match="blow-up at step"):
        simulate(cfg)


def test_cfl_warning_once():
    u0 = single_mode_field(BOX, (0, 1), amplitude=2.0)
    cfg = SimConfig(params=decay_params(nu=0.5), u0=u0, dt=0.1, t_end=0.5)
    with pytest.warns(CFLWarning):
        simulate(cfg)


def test_resume_matches_uninterrupted():
    """Restarting from a mid-run state reproduces the tail bit-exactly."""
    f = single_mode_field(BOX, (0, 3), amplitude=0.4)
    u0 = random_solenoidal(BOX, seed=5, amplitude=0.8)
    params = PhysicalParams(nu=0.2, eps=1e-4, l=2.0, forcing=f)
    cfg = SimConfig(params=params, u0=u0, dt=0.01, t_end=1.0, output_every=10)
    states = []
    full = simulate(cfg, state_sink=states.append)
    midpoint = next(s for s in states if s.step_index == 50)
    resumed = simulate(cfg, start=midpoint)
    assert np.array_equal(resumed.u.coeffs, full.u.coeffs)
    assert resumed.t == full.t and resumed.step_index == full.step_index


@pytest.mark.parametrize(
    "scheme,dts,lo,hi",
    [("if_rk2", (0.02, 0.01, 0.005), 3.5, 4.5), ("etdrk4", (0.04, 0.02, 0.01), 12.0, 20.0)],
)
def test_budget_residual_order(scheme, dts, lo, hi):
    """Halving dt shrinks the total budget residual at the scheme order."""
    fmode = single_mode_field(BOX, (0, 3), amplitude=0.5)
    u0 = random_solenoidal(BOX, seed=3, amplitude=1.0, k_cut=4.0)
    params = PhysicalParams(nu=0.25, eps=0.0, l=2.0, forcing=fmode)
    res = []
    for dt in dts:
        recs = []
        cfg = SimConfig(params=params, u0=u0, dt=dt, t_end=2.0, output_every=1, scheme=scheme)
        simulate(cfg, record_sink=recs.append)
        res.append(abs(total_budget_residual(recs, params)))
    for r1, r2 in zip(res, res[1:]):
        assert lo <= r1 / r2 <= hi


def test_budget_residual_column_consistency():
    """The emitted residual column matches an independent recomputation."""
    from hvns.diagnostics import energy_budget

    fmode = single_mode_field(BOX, (0, 2), amplitude=0.3)
    u0 = random_solenoidal(BOX, seed=9, amplitude=0.5)
    params = PhysicalParams(nu=0.3, eps=1e-4, l=2.0, forcing=fmode)
    cfg = SimConfig(params=params, u0=u0, dt=0.01, t_end=0.5, output_every=5)
    recs = []
    simulate(cfg, record_sink=recs.append)
    recomputed = energy_budget(recs, params)
    emitted = np.array([r.budget_residual for r in recs])
    assert np.allclose(recomputed, emitted, rtol=0.0, atol=1e-15)
