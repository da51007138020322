import numpy as np
import pytest

import gibbslab.gaussian_control as gc
import gibbslab.objects as ob
import gibbslab.renorm as rn
import gibbslab.spectral as sp


@pytest.fixture(scope="module")
def small():
    lat = sp.LatticeSpec(2)
    V = sp.make_potential(1.0, K=2)
    return lat, V


class TestCubicVariance:
    def test_oracle_matches_brute(self, small):
        lat, V = small
        for n in ((0, 0, 0), (1, 0, 0), (2, -1, 0)):
            for t, T in ((1.0, 4.0), (np.inf, 2.0)):
                fast = ob.cubic_variance_oracle(n, t, T, V, lat)
                brute = ob.cubic_variance_brute(n, t, T, V, lat)
                assert fast == pytest.approx(brute, rel=1e-10, abs=1e-14)

    def test_table_consistent_with_oracle(self, small):
        lat, V = small
        table = ob.cubic_variance_table(1.5, 4.0, V, lat)
        for n in ((0, 0, 0), (1, 1, 0), (-2, 0, 1)):
            idx = tuple(x + lat.K for x in n)
            assert table[idx] == pytest.approx(
                ob.cubic_variance_oracle(n, 1.5, 4.0, V, lat), rel=1e-12
            )

    def test_cubic_object_mc_variance(self, small):
        lat, V = small
        T = 2.0
        grid = gc.make_time_grid(T, 2)
        k = 3
        t = grid.nodes[k]
        ctx = rn.build_context(t, T, V, 1.0, 3, lat)
        n_mc = 1500
        sq = {(1, 0, 0): [], (0, 0, 0): []}
        means = {m: 0.0 for m in sq}
        for i in range(n_mc):
            path = gc.build_path(gc.sample_driver(grid, lat, 17, i), T)
            c = ob.cubic_object(path, k, ctx)
            for m in sq:
                sq[m].append(abs(c.get(m)) ** 2)
                means[m] += c.get(m)
        for m, vals in sq.items():
            vals = np.array(vals)
            oracle = ob.cubic_variance_oracle(m, t, T, V, lat)
            z = abs(np.mean(vals) - oracle) / (np.std(vals) / np.sqrt(n_mc))
            assert z < 5.0, (m, np.mean(vals), oracle)
            zm = abs(means[m] / n_mc) / np.sqrt(oracle / n_mc)
            assert zm < 5.0


class TestQuarticSecondMoment:
    def test_oracle_matches_brute(self, small):
        lat, V = small
        for S in (1.0, 2.0):
            fast = ob.quartic_second_moment_oracle(S, V, lat)
            brute = ob.quartic_second_moment_brute(S, V, lat)
            assert fast == pytest.approx(brute, rel=1e-10)

    def test_oracle_mc(self, small):
        lat, V = small
        S = 2.0
        ctx = rn.build_context(np.inf, S, V, 1.0, 3, lat)
        rng = np.random.default_rng(4)
        n = 1200
        vals = []
        for _ in range(n):
            # sample_w_inf with T=S already carries the rho_S cutoff
            w = gc.sample_w_inf(lat, rng, S)
            vals.append(rn.wick_quartic_energy(w, ctx))
        vals = np.array(vals)
        oracle = ob.quartic_second_moment_oracle(S, V, lat)
        sq = vals ** 2
        z = abs(np.mean(sq) - oracle) / (np.std(sq) / np.sqrt(n))
        assert z < 5.0
        # and the energy itself is centered
        zm = abs(np.mean(vals)) / (np.std(vals) / np.sqrt(n))
        assert zm < 4.0


class TestW3:
    def test_variance_table_positive_and_decaying(self, small):
        lat, V = small
        grid = gc.make_time_grid(2.0, 2)
        table = ob.w3_variance_table(grid, V, 2.0, lat)
        K = lat.K
        assert np.all(table >= 0.0)
        assert table[K + 1, K, K] > table[K + 2, K + 2, K + 2]

    def test_w3_mc_variance(self, small):
        lat, V = small
        T = 2.0
        grid = gc.make_time_grid(T, 2)
        table = ob.w3_variance_table(grid, V, T, lat)
        n_mc = 800
        mode = (1, 0, 0)
        idx = tuple(x + lat.K for x in mode)
        sq = []
        mean = 0.0
        for i in range(n_mc):
            path = gc.build_path(gc.sample_driver(grid, lat, 23, i), T)
            total = ob.w3_bold(path, V, 1.0, 3)[-1].get(mode)
            sq.append(abs(total) ** 2)
            mean += total
        sq = np.array(sq)
        oracle = table[idx]
        z = abs(np.mean(sq) - oracle) / (np.std(sq) / np.sqrt(n_mc))
        assert z < 5.0, (np.mean(sq), oracle)
        assert abs(mean / n_mc) < 5.0 * np.sqrt(oracle / n_mc)


class TestQuarticEnergyPathwise:
    def test_martingale_form_converges_to_direct(self, small):
        # the two forms differ by an O(dt) Ito defect per interval
        lat, V = small
        T = 2.0
        rel = []
        for res in (2, 8):
            grid = gc.make_time_grid(T, res)
            k = grid.n_intervals  # terminal node
            diffs, scales = [], []
            for i in range(40):
                path = gc.build_path(gc.sample_driver(grid, lat, 29, i), T)
                d = ob.quartic_energy_pathwise(path, k, V, 1.0, 3, "direct")
                m = ob.quartic_energy_pathwise(path, k, V, 1.0, 3, "martingale")
                diffs.append(d - m)
                scales.append(abs(d))
            rel.append(np.sqrt(np.mean(np.array(diffs) ** 2)) / np.mean(scales))
        assert rel[1] < rel[0]

    def test_rejects_unknown_method(self, small):
        lat, V = small
        grid = gc.make_time_grid(2.0, 2)
        path = gc.build_path(gc.sample_driver(grid, lat, 0, 0), 2.0)
        with pytest.raises(ValueError):
            ob.quartic_energy_pathwise(path, 1, V, 1.0, 3, "banana")


class TestDyadic:
    def test_fit_recovers_exact_power_law(self):
        prof = {N: 3.0 * N ** (-1.4) for N in (2, 4, 8, 16, 32)}
        assert ob.fit_dyadic_slope(prof, n_min=2) == pytest.approx(-1.4, abs=1e-9)

    def test_profile_partitions_l2_mass(self, rng):
        big = sp.LatticeSpec(8)
        f = sp.random_hermitian_field(big, 8, rng)
        prof = ob.dyadic_l2_profile([f])
        assert all(N in (1, 2, 4, 8, 16, 32, 64) for N in prof)
        # chi_N sum to one pointwise, but block masses use chi^2 weights,
        # so the total is bounded by the full l2 mass
        assert sum(prof.values()) <= sp.l2_norm_sq(f) + 1e-9
        assert sum(prof.values()) > 0.2 * sp.l2_norm_sq(f)
