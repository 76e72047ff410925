import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsv4 import solver as so
from nsv4 import spectral as sp
from nsv4.spectral import SpectralVectorField


@pytest.fixture(scope="module")
def forcing8(grid8):
    return so.ForcingSpec.random_low_mode(1.0, seed=4).build(grid8)


class TestForcing:
    def test_random_normalized(self, grid8, forcing8):
        assert sp.hminus1_norm(forcing8) == pytest.approx(1.0, rel=1e-13)
        assert sp.divergence_defect(forcing8) <= 1e-12
        assert np.all(forcing8.coeffs[:, ~grid8.dealias_mask] == 0)
        assert np.all(sp.mean_mode(forcing8) == 0)

    def test_zero(self, grid8):
        assert np.all(so.ForcingSpec.zero().build(grid8).coeffs == 0)

    def test_shear_is_sine(self, grid8):
        g = so.ForcingSpec.shear(0.3, 2.0).build(grid8)
        x = g.to_physical()
        np.testing.assert_allclose(x[0], 0.6 * np.sin(grid8.coords[1]), atol=1e-14)
        assert np.max(np.abs(x[1:])) == 0

    def test_modes_projected(self, grid8):
        g = so.ForcingSpec.from_modes([((1, 0, 0, 0), (1, 1, 0, 0))]).build(grid8)
        assert sp.divergence_defect(g) <= 1e-15
        amp = g.coeffs[(slice(None),) + grid8.site((1, 0, 0, 0))]
        np.testing.assert_allclose(amp, [0, 1, 0, 0])

    def test_unknown_kind(self, grid8):
        with pytest.raises(ValueError):
            so.ForcingSpec(kind="vortex").build(grid8)


class TestConfig:
    def test_steps(self):
        assert so.SolverConfig(dt=0.01, t_final=10).n_steps == 1000

    @pytest.mark.parametrize("kw", [{"nu": 0}, {"dt": -1}, {"t_final": 0.001}, {"save_every": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            so.SolverConfig(**kw)

    def test_stability_warning(self):
        with pytest.warns(RuntimeWarning):
            so.SolverConfig(nu=1.0, dt=0.6)


class TestRhs:
    def test_zero_state(self, grid8, forcing8):
        r = so.rhs(SpectralVectorField.zeros(grid8), forcing8, 0.7)
        np.testing.assert_allclose(r.coeffs, grid8.inv_k2 * forcing8.coeffs, atol=1e-16)

    def test_steady_shear(self, grid8):
        nu, A = 0.4, 1.3
        us = so.shear_field(grid8, A)
        g = so.ForcingSpec.shear(nu, A).build(grid8)
        assert np.max(np.abs(so.rhs(us, g, nu).coeffs)) <= 1e-15

    def test_unforced_definition(self, grid8, rng):
        u = sp.random_solenoidal(grid8, rng, h1_norm=3.0)
        g = SpectralVectorField.zeros(grid8)
        nu = 0.5
        ref = -nu * u.coeffs + grid8.inv_k2 * sp.leray_project(-sp.nonlinear_term(u)).coeffs
        np.testing.assert_allclose(so.rhs(u, g, nu).coeffs, ref, atol=1e-15)

    def test_rejects_divergent(self, grid8):
        f = SpectralVectorField.from_modes(grid8, [((1, 0, 0, 0), [1, 0, 0, 0])])
        with pytest.raises(sp.NotSolenoidalError):
            so.rhs(f, SpectralVectorField.zeros(grid8), 1.0)


class TestStep:
    def test_fixed_point(self, grid8):
        nu = 0.5
        us = so.shear_field(grid8, 1.0)
        g = so.ForcingSpec.shear(nu, 1.0).build(grid8)
        out = so.step(us, g, nu, 0.01)
        assert np.max(np.abs(out.coeffs - us.coeffs)) <= 1e-12

    def test_linear_mode_decay(self, grid8):
        # a single Fourier mode is an exact shear solution: u(t) = e^{-nu t} u0;
        # RK4 matches to the local error O(dt^5)
        nu = 0.8
        u = SpectralVectorField.from_modes(grid8, [((0, 0, 2, 0), [1, 0, 0, 0])])
        g = SpectralVectorField.zeros(grid8)
        errs = []
        for dt in (0.2, 0.1):
            out = so.step(u, g, nu, dt)
            errs.append(np.max(np.abs(out.coeffs - math.exp(-nu * dt) * u.coeffs)))
        assert errs[1] <= errs[0] / 28
        assert errs[1] <= 2e-7

    def test_projection_invariant(self, grid8, rng, forcing8):
        u = sp.random_solenoidal(grid8, rng, h1_norm=4.0)
        out = so.step(u, forcing8, 0.5, 0.02)
        np.testing.assert_allclose(sp.leray_project(out).coeffs, out.coeffs, atol=1e-15)
        assert sp.hermitian_defect(out) <= 1e-12
        assert np.all(out.coeffs[:, ~grid8.dealias_mask] == 0)

    def test_blowup_detected(self, grid8, rng):
        u = sp.random_solenoidal(grid8, rng, h1_norm=50.0)
        with pytest.warns(RuntimeWarning):
            cfg = so.SolverConfig(nu=0.5, dt=10.0, t_final=3000.0, forcing=so.ForcingSpec.zero())
        with pytest.raises(so.BlowUpError), np.errstate(all="ignore"):
            so.simulate(u, cfg)


class TestSimulate:
    def test_unforced_exact_decay(self, grid8, rng):
        u0 = sp.random_solenoidal(grid8, rng, h1_norm=2.0)
        cfg = so.SolverConfig(nu=0.5, dt=0.01, t_final=2.0, forcing=so.ForcingSpec.zero())
        lg = so.simulate(u0, cfg)
        exact = lg.enstrophy[0] * np.exp(-2 * 0.5 * lg.times)
        assert np.max(np.abs(lg.enstrophy - exact)) / lg.enstrophy[0] <= 1e-6
        assert lg.times[-1] == pytest.approx(2.0)

    def test_dissipative_bound(self, grid8, rng, forcing8):
        u0 = sp.random_solenoidal(grid8, rng, h1_norm=3.0)
        lg = so.simulate(u0, so.SolverConfig(nu=0.5, dt=0.02, t_final=4.0), g=forcing8)
        assert np.all(lg.enstrophy <= lg.bound_rhs * (1 + 1e-8))

    def test_save_every(self, grid8, rng):
        u0 = sp.random_solenoidal(grid8, rng)
        lg = so.simulate(u0, so.SolverConfig(dt=0.01, t_final=0.1, save_every=3))
        assert list(lg.steps) == [0, 3, 6, 9, 10]
        assert lg.residual is None

    def test_checkpoint_restart_bit_exact(self, grid8, rng, forcing8):
        u0 = sp.random_solenoidal(grid8, rng, h1_norm=2.0)
        cfg = so.SolverConfig(nu=0.5, dt=0.02, t_final=0.4, save_every=2)
        full = so.simulate(u0, cfg, g=forcing8, checkpoint_every=10)
        s, ck = full.checkpoints[0]
        assert s == 10
        rest = so.simulate(ck, cfg, g=forcing8, start_step=s)
        k = list(full.steps).index(s)
        np.testing.assert_array_equal(rest.enstrophy, full.enstrophy[k:])
        np.testing.assert_array_equal(rest.final.coeffs, full.final.coeffs)

    def test_start_beyond_end(self, grid8, rng):
        u0 = sp.random_solenoidal(grid8, rng)
        with pytest.raises(ValueError):
            so.simulate(u0, so.SolverConfig(dt=0.1, t_final=1.0), start_step=20)


class TestEnergyResidual:
    def test_steady_state(self, grid8):
        nu = 0.5
        us = so.shear_field(grid8, 1.0)
        lg = so.simulate(us, so.SolverConfig(nu=nu, dt=0.05, t_final=1.0, forcing=so.ForcingSpec.shear(nu)))
        assert np.max(np.abs(lg.residual)) <= 1e-10

    def test_unforced_equals_differencing_error(self, grid8, rng):
        nu = 0.5
        u0 = sp.random_solenoidal(grid8, rng, h1_norm=2.0)
        lg = so.simulate(u0, so.SolverConfig(nu=nu, dt=0.02, t_final=1.0, forcing=so.ForcingSpec.zero()))
        exact = lg.enstrophy[0] * np.exp(-2 * nu * lg.times)
        ref = so.time_derivative(0.5 * exact, 0.02) + nu * exact
        np.testing.assert_allclose(lg.residual, ref, atol=1e-8)

    def test_needs_three_samples(self, grid8):
        lg = so.TrajectoryLog(nu=1.0, g_hminus1=0.0, times=np.array([0.0, 1.0]), steps=np.array([0, 1]),
                              enstrophy=np.ones(2), g_dot_u=np.zeros(2), bound_rhs=np.ones(2))
        with pytest.raises(ValueError):
            so.energy_residual(lg, 1.0)


class TestTimeDerivative:
    @pytest.mark.parametrize("n", [5, 9, 20])
    def test_quartic_exact(self, n):
        t = np.linspace(0.0, 1.0, n)
        y = 1 - 2 * t + 3 * t**2 - t**3 + 0.5 * t**4
        dy = -2 + 6 * t - 3 * t**2 + 2 * t**3
        np.testing.assert_allclose(so.time_derivative(y, t[1] - t[0]), dy, atol=1e-10)

    def test_fourth_order(self):
        errs = []
        for n in (41, 81):
            t = np.linspace(0, 2, n)
            errs.append(np.max(np.abs(so.time_derivative(np.sin(3 * t), t[1] - t[0]) - 3 * np.cos(3 * t))))
        assert 12 <= errs[0] / errs[1] <= 20

    def test_short_series_falls_back(self):
        t = np.array([0.0, 0.5, 1.0])
        np.testing.assert_allclose(so.time_derivative(t**2, 0.5), 2 * t, atol=1e-14)


class TestAbsorbing:
    def test_bound_formula(self):
        b = so.dissipative_bound(np.array([0.0, np.inf]), 5.0, 1.0, 0.5)
        np.testing.assert_allclose(b, [5.0, 4.0])

    def test_absorbing_time(self):
        t = so.absorbing_time(100.0, 1.0, 0.5)
        assert 100.0 * math.exp(-0.5 * t) == pytest.approx(1e-3 * 4.0)
        assert so.absorbing_time(1.0, 0.0, 0.5) == 0.0


class TestContraction:
    def test_embedding_constant_is_lower_bound(self, grid8, rng):
        c = so.embedding_constant(grid8, n_probe=2, iters=10)
        for _ in range(10):
            v = sp.random_solenoidal(grid8, rng, slope=rng.uniform(0, 3))
            assert sp.l4_norm(v) / sp.h1dot_norm(v) <= c * (1 + 1e-12)

    def test_identical_pair(self, grid8, rng, forcing8):
        u = sp.random_solenoidal(grid8, rng)
        res = so.contraction_check(u, u, so.SolverConfig(dt=0.05, t_final=1.0), c_emb=0.3, g=forcing8)
        assert np.max(res.diff_h1) <= 1e-12

    def test_zero_partner_pure_decay(self, grid8, rng):
        v = sp.random_solenoidal(grid8, rng, h1_norm=1e-3)
        cfg = so.SolverConfig(nu=0.5, dt=0.05, t_final=2.0, forcing=so.ForcingSpec.zero())
        res = so.contraction_check(v, SpectralVectorField.zeros(grid8), cfg, c_emb=0.3)
        np.testing.assert_allclose(res.gronwall, 1e-3 * np.exp(-0.5 * res.times), rtol=1e-12)
        # |grad v| decays exactly like e^{-nu t}; only RK4 truncation remains
        assert np.max(res.ratio) <= 1 + 1e-6

    def test_nearby_pair(self, grid8, rng, forcing8):
        u2 = sp.random_solenoidal(grid8, rng, h1_norm=1.0)
        dv = sp.random_solenoidal(grid8, rng, h1_norm=1e-4)
        res = so.contraction_check(u2 + dv, u2, so.SolverConfig(dt=0.05, t_final=2.0), g=forcing8)
        assert np.max(res.ratio) <= 1 + 1e-6


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), e=st.floats(0.1, 10.0))
def test_step_conserves_phase_space(seed, e):
    grid = sp.make_grid(8)
    rng = np.random.default_rng(seed)
    u = sp.random_solenoidal(grid, rng, h1_norm=e)
    g = so.ForcingSpec.random_low_mode(1.0, seed=seed % 1000).build(grid)
    out = so.step(u, g, 0.5, 0.01)
    assert sp.divergence_defect(out) <= 1e-12
    assert sp.hermitian_defect(out) <= 1e-12
    assert np.all(sp.mean_mode(out) == 0)
