import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsv4 import solver as so
from nsv4 import spectral as sp
from nsv4 import tangent as tg
from nsv4.spectral import SpectralVectorField


class TestVariational:
    def test_zero_base_flow(self, grid8, rng):
        v = sp.random_solenoidal(grid8, rng)
        out = tg.variational_rhs(SpectralVectorField.zeros(grid8), v, 0.7)
        np.testing.assert_allclose(out.coeffs, -0.7 * v.coeffs, atol=1e-16)

    def test_zero_perturbation(self, grid8, rng):
        u = sp.random_solenoidal(grid8, rng)
        out = tg.variational_rhs(u, SpectralVectorField.zeros(grid8), 0.7)
        assert np.max(np.abs(out.coeffs)) == 0

    def test_is_derivative_of_rhs(self, grid8, rng):
        # rhs is quadratic, so the central difference is exact up to rounding
        u = sp.random_solenoidal(grid8, rng, h1_norm=3.0)
        v = sp.random_solenoidal(grid8, rng)
        g = so.ForcingSpec.random_low_mode(1.0, seed=1).build(grid8)
        h = 1e-3
        fd = (so.rhs(u + h * v, g, 0.5).coeffs - so.rhs(u - h * v, g, 0.5).coeffs) / (2 * h)
        lv = tg.variational_rhs(u, v, 0.5).coeffs
        assert np.max(np.abs(fd - lv)) <= 1e-10 * np.max(np.abs(lv))


class TestOrthonormalize:
    def test_gram_identity(self, grid8, rng):
        fr = tg.TangentFrame.random(grid8, 4, rng, orthonormal=False)
        out = tg.orthonormalize(fr)
        assert tg.gram_defect(out) <= 1e-10

    def test_idempotent(self, grid8, rng):
        fr = tg.TangentFrame.random(grid8, 4, rng)
        out = tg.orthonormalize(fr)
        assert np.max(np.abs(out.coeffs - fr.coeffs)) <= 1e-12 * np.max(np.abs(fr.coeffs))

    def test_scale_invariant(self, grid8, rng):
        fr = tg.TangentFrame.random(grid8, 3, rng, orthonormal=False)
        a = tg.orthonormalize(fr)
        b = tg.orthonormalize(fr.scaled(3.0))
        assert np.max(np.abs(a.coeffs - b.coeffs)) <= 1e-12 * np.max(np.abs(a.coeffs))

    def test_nested_spans(self, grid8, rng):
        fr = tg.TangentFrame.random(grid8, 4, rng, orthonormal=False)
        full = tg.orthonormalize(fr)
        head = tg.orthonormalize(fr[:2])
        np.testing.assert_allclose(full.coeffs[:2], head.coeffs, atol=1e-14)

    def test_rank_deficiency_names_index(self, grid8, rng):
        fields = [sp.random_solenoidal(grid8, rng) for _ in range(2)]
        fields.append(2.0 * fields[0] - fields[1])
        with pytest.raises(tg.RankDeficiencyError) as exc:
            tg.orthonormalize(tg.TangentFrame.from_fields(fields))
        assert exc.value.index == 2

    def test_zero_vector(self, grid8, rng):
        fields = [sp.random_solenoidal(grid8, rng), SpectralVectorField.zeros(grid8)]
        with pytest.raises(tg.RankDeficiencyError) as exc:
            tg.orthonormalize(tg.TangentFrame.from_fields(fields))
        assert exc.value.index == 1


class TestTraceN:
    def test_zero_base_flow(self, grid8, rng):
        fr = tg.TangentFrame.random(grid8, 3, rng)
        assert tg.trace_n(SpectralVectorField.zeros(grid8), fr, 0.5) == pytest.approx(-1.5, abs=1e-13)

    def test_routes_agree(self, grid8, rng):
        u = sp.random_solenoidal(grid8, rng, h1_norm=30.0)
        fr = tg.TangentFrame.random(grid8, 4, rng)
        t1 = float(np.sum(tg.trace_terms(u, fr, 0.5)))
        t2 = -0.5 * 4 - float(np.sum(tg.stretching_terms(u, fr)))
        assert abs(t1 - t2) <= 1e-10 * abs(t1)

    def test_rejects_non_orthonormal(self, grid8, rng):
        fr = tg.TangentFrame.random(grid8, 2, rng, orthonormal=False)
        with pytest.raises(ValueError):
            tg.trace_n(SpectralVectorField.zeros(grid8), fr, 1.0)

    def test_stretching_by_finer_quadrature(self, grid8, rng):
        u = sp.random_solenoidal(grid8, rng)
        fr = tg.TangentFrame.random(grid8, 2, rng)
        fine = sp.make_grid(16)
        A = sp.velocity_gradient(u, fine)
        ref = []
        for f in fr.fields:
            v = sp.to_physical_on(f, fine)
            ref.append(float(sp.quadrature(fine, np.einsum("i...,ij...,j...->...", v, A, v))))
        np.testing.assert_allclose(tg.stretching_terms(u, fr), ref, rtol=1e-11)


class TestOracle:
    def test_zero_base_flow(self, grid8, rng):
        fr = tg.TangentFrame.random(grid8, 2, rng)
        assert tg.trace_oracle(SpectralVectorField.zeros(grid8), fr, 0.4) == pytest.approx(-0.8, rel=1e-12)

    def test_single_mode_base_flow(self, grid8, rng):
        u = SpectralVectorField.from_modes(grid8, [((1, 1, 0, 0), [2.0, -2.0, 0.5j, 0])])
        fr = tg.TangentFrame.random(grid8, 3, rng)
        t = tg.trace_n(u, fr, 0.5)
        assert tg.trace_oracle(u, fr, 0.5) == pytest.approx(t, rel=1e-8)

    def test_basis_round_trip(self, grid8, rng):
        _, basis = tg.jacobian_matrix(SpectralVectorField.zeros(grid8), 1.0)
        v = sp.random_solenoidal(grid8, rng)
        x = basis.coordinates(v.coeffs)
        # coordinates are H^1-isometric
        assert float(x @ x) == pytest.approx(sp.h1dot_inner(v, v), rel=1e-12)


class TestQSweep:
    def test_unforced_limit(self, grid8, rng):
        u0 = sp.random_solenoidal(grid8, rng, h1_norm=1.0)
        cfg = so.SolverConfig(nu=1.0, dt=0.1, t_final=12.0, forcing=so.ForcingSpec.zero())
        reps = tg.q_sweep(u0, cfg, 3, spin_up=4.0)
        for r in reps:
            assert r.q_n == pytest.approx(-1.0 * r.n, abs=1e-3)
            assert r.bound_respected
        assert tg.dimension_crossing(reps) == 1

    def test_reortho_every(self, grid8, rng):
        u0 = sp.random_solenoidal(grid8, rng)
        cfg = so.SolverConfig(nu=1.0, dt=0.1, t_final=2.0)
        reps = tg.q_sweep(u0, cfg, 2, reortho_every=4, spin_up=0.0)
        assert np.allclose(np.diff(reps[0].times), 0.4)

    def test_spin_up_too_long(self, grid8, rng):
        u0 = sp.random_solenoidal(grid8, rng)
        with pytest.raises(ValueError):
            tg.q_sweep(u0, so.SolverConfig(dt=0.1, t_final=1.0), 1, spin_up=5.0)

    def test_q_bound_values(self):
        L = 6.034 / (32 * np.pi**2)
        assert tg.q_bound(1, 1.0, 1.0, L) == pytest.approx(-1 + 2 * np.sqrt(3 * L), rel=1e-14)
        assert tg.q_bound(4, 1.0, 0.0, L) == pytest.approx(-4.0)


def _report(n, q):
    return tg.TraceReport(n=n, nu=1.0, g_hminus1=1.0, T=1.0, spin_up=0.0, times=np.zeros(1), traces=np.zeros(1),
                          running_avg=np.zeros(1), q_n=q, bound_q_n=0.0, bound_respected=True, L=0.02)


class TestCrossing:
    def test_first_negative(self):
        reps = [_report(1, 0.5), _report(2, 0.1), _report(3, -0.2), _report(4, -1.0)]
        assert tg.dimension_crossing(reps) == 3

    def test_not_found(self):
        with pytest.raises(tg.CrossingNotFound, match="beyond n_max=2"):
            tg.dimension_crossing([_report(1, 0.5), _report(2, 0.1)])


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 5), amp=st.floats(0.0, 40.0))
def test_trace_routes_property(seed, n, amp):
    grid = sp.make_grid(8)
    rng = np.random.default_rng(seed)
    u = sp.random_solenoidal(grid, rng, h1_norm=amp) if amp > 0 else SpectralVectorField.zeros(grid)
    fr = tg.TangentFrame.random(grid, n, rng, slope=float(rng.uniform(0, 2)))
    # trace_n raises if its two routes disagree
    t = tg.trace_n(u, fr, 0.5, rtol=1e-10)
    assert np.isfinite(t)
