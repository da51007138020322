import numpy as np
import pytest

import gibbslab.drift as dr
import gibbslab.gaussian_control as gc
import gibbslab.renorm as rn
import gibbslab.spectral as sp

from conftest import rel_field_diff


@pytest.fixture(scope="module")
def small():
    lat = sp.LatticeSpec(2)
    V = sp.make_potential(1.0, K=2)
    return lat, V


class TestForcing:
    def test_wick_cubic_grid_matches_spectral(self, small, rng):
        lat, V = small
        ctx = rn.build_context(1.0, 2.0, V, 1.0, 3, lat)
        f = sp.random_hermitian_field(lat, 2, rng)
        a = dr.wick_cubic_grid(f, ctx, 2)
        b = sp.restrict_field(rn.wick_cubic(f, ctx), 2)
        assert rel_field_diff(a, b) < 1e-9

    def test_wick_cubic_banded_matches_grid(self, small, rng):
        lat, V = small
        ctx = rn.build_context(1.0, 2.0, V, 1.0, 3, lat)
        f = sp.random_hermitian_field(lat, 2, rng)
        a = dr.wick_cubic_banded(f, ctx, 2)
        b = dr.wick_cubic_grid(f, ctx, 2)
        assert rel_field_diff(a, b) < 1e-9

    def test_forcing_hermitian(self, small, rng):
        lat, V = small
        ctx = rn.build_context(1.0, 2.0, V, 1.0, 3, lat)
        f = sp.random_hermitian_field(lat, 2, rng)
        j = sp.rho_t_symbol(2, 1.0, 2.0) / sp.mode_bracket(2)
        u = dr.forcing_Xi(f, ctx, j)
        assert sp.is_hermitian(u, tol=1e-9)

    def test_power_term_separates(self, small, rng):
        # include_power_term=False drops exactly the hermite-power forcing
        lat, V = small
        ctx = rn.build_context(1.0, 2.0, V, 1.0, 3, lat)
        f = sp.random_hermitian_field(lat, 2, rng)
        j = sp.rho_t_symbol(2, 1.0, 2.0) / sp.mode_bracket(2)
        full = dr.forcing_Xi(f, ctx, j, include_power_term=True)
        cubic = dr.forcing_Xi(f, ctx, j, include_power_term=False)
        assert not np.allclose(full.coeffs, cubic.coeffs)


class TestReferenceSampler:
    def test_girsanov_normalization(self, small):
        # E[exp(int u dB - 1/2 int |u|^2 dt)] = 1 for the adapted capped drift
        lat, V = small
        T = 2.0
        grid = gc.make_time_grid(T, 2)
        n = 800
        logs = []
        for i in range(n):
            drv = gc.sample_driver(grid, lat, 41, i)
            s = dr.sample_reference(drv, T, V, 0.5, 3)
            logs.append(s.traj.girsanov_log)
        vals = np.exp(np.array(logs))
        z = abs(np.mean(vals) - 1.0) / (np.std(vals) / np.sqrt(n))
        assert z < 4.0, (np.mean(vals), z)

    def test_w_decomposition(self, small):
        lat, V = small
        grid = gc.make_time_grid(2.0, 2)
        s = dr.sample_reference(gc.sample_driver(grid, lat, 1, 0), 2.0, V, 1.0, 3)
        assert np.allclose(s.w_inf.coeffs, s.y_inf.coeffs + s.i_inf.coeffs)
        assert sp.is_hermitian(s.w_inf, tol=1e-9)

    def test_lambda_zero_cubic_only_is_free_field(self, small):
        # the power term survives lam = 0, so drop it to recover the GFF
        lat, V = small
        grid = gc.make_time_grid(2.0, 2)
        s = dr.sample_reference(
            gc.sample_driver(grid, lat, 2, 0), 2.0, V, 0.0, 3,
            include_power_term=False,
        )
        assert sp.l2_norm_sq(s.i_inf) == pytest.approx(0.0, abs=1e-20)
        assert s.traj.ito_sum == 0.0
        assert s.traj.l2_time == 0.0

    def test_components_sum_to_drift(self, small):
        lat, V = small
        grid = gc.make_time_grid(2.0, 2)
        s = dr.sample_reference(
            gc.sample_driver(grid, lat, 3, 0), 2.0, V, 1.0, 3, collect_components=True
        )
        total = s.components["cubic"].coeffs + s.components["power"].coeffs
        assert np.allclose(total, s.i_inf.coeffs, atol=1e-12)

    def test_cap_triggers_tau(self, small):
        lat, V = small
        grid = gc.make_time_grid(2.0, 2)
        drv = gc.sample_driver(grid, lat, 4, 0)
        s_free = dr.sample_reference(drv, 2.0, V, 1.0, 3, cap=1e6)
        assert s_free.traj.tau_hit is None
        drv2 = gc.sample_driver(grid, lat, 4, 0)
        s_cap = dr.sample_reference(drv2, 2.0, V, 1.0, 3, cap=1e-12)
        assert s_cap.traj.tau_hit is not None
        # after tau the drift freezes: no further girsanov accumulation
        assert s_cap.traj.l2_time <= 1e-12

    def test_weight_drift_agnostic_in_expectation(self, small):
        # the self-normalized gibbs weight corrects any admissible drift:
        # weighted moments agree between full and cubic-only reference drifts
        lat, V = small
        T, lam = 2.0, 0.5
        grid = gc.make_time_grid(T, 2)
        n = 600
        est = {}
        for flag in (True, False):
            lws, obs = [], []
            for i in range(n):
                drv = gc.sample_driver(grid, lat, 51, i)
                s = dr.sample_reference(drv, T, V, lam, 3, include_power_term=flag)
                lws.append(dr.gibbs_log_weight(s, V, lam, 3, 0.0))
                obs.append(sp.l2_norm_sq(s.w_inf))
            lws = np.array(lws)
            w = np.exp(lws - np.max(lws))
            w /= np.sum(w)
            obs = np.array(obs)
            mean = float(np.sum(w * obs))
            stderr = float(np.sqrt(np.sum(w ** 2 * (obs - mean) ** 2)))
            est[flag] = (mean, stderr)
        diff = abs(est[True][0] - est[False][0])
        tol = 5.0 * np.hypot(est[True][1], est[False][1])
        assert diff < tol, est


class TestWeights:
    def test_ess_equal_weights(self):
        assert dr.effective_sample_size(np.zeros(37)) == pytest.approx(37.0)

    def test_ess_degenerate(self):
        lw = np.array([0.0, -1e9, -1e9])
        assert dr.effective_sample_size(lw) == pytest.approx(1.0)

    def test_density_lq_probe_unit_weights(self):
        assert dr.density_lq_probe(np.full(100, 3.7), 1.25) == pytest.approx(1.0)

    def test_density_lq_probe_shift_invariant(self, rng):
        lw = rng.standard_normal(500)
        a = dr.density_lq_probe(lw, 1.25)
        b = dr.density_lq_probe(lw + 123.4, 1.25)
        assert a == pytest.approx(b, rel=1e-10)
