import numpy as np
import pytest

import gibbslab.chaos as ch
import gibbslab.gaussian_control as gc
import gibbslab.spectral as sp


@pytest.fixture(scope="module")
def setup():
    lat = sp.LatticeSpec(2)
    grid = gc.make_time_grid(2.0, 2)
    return lat, grid


def _pair_kernel(grid, order, mode=(1, 0, 0), lo=0.0, hi=1.8):
    """Simple symmetric kernel on early intervals of a single mode pair."""
    ker = ch.ChaosKernel(order, {})
    slots = [
        j
        for j in range(grid.n_intervals)
        if lo <= 0.5 * (grid.nodes[j] + grid.nodes[j + 1]) < hi
    ]
    neg = tuple(-x for x in mode)
    rng = np.random.default_rng(order)
    import itertools

    for combo in itertools.combinations(slots, order):
        key = tuple(
            (j, mode if i % 2 == 0 else neg) for i, j in enumerate(combo)
        )
        ker.set(key, complex(rng.standard_normal(), rng.standard_normal()))
    return ker


class TestIncrements:
    def test_increment_variance_telescopes(self, setup):
        lat, grid = setup
        for j in (0, 2, 4):
            got = ch.increment_variance(grid, j, (1, 0, 0), T=np.inf)
            sb = gc.sigma_bar(grid, j, lat.K, np.inf) / sp.mode_bracket(lat.K)
            expect = float(sb[lat.K + 1, lat.K, lat.K] ** 2) * grid.dt(j)
            assert got == pytest.approx(expect, rel=1e-12)

    def test_increment_variance_mc(self, setup):
        lat, grid = setup
        j, mode = 1, (1, 0, 0)
        n = 2000
        acc = 0.0
        for i in range(n):
            drv = gc.sample_driver(grid, lat, 21, i)
            cache = ch.IncrementCache(drv)
            acc += abs(cache.value((j, mode))) ** 2
        oracle = ch.increment_variance(grid, j, mode)
        z = abs(acc / n - oracle) / (oracle * np.sqrt(2.0 / n))
        assert z < 4.0

    def test_zero_mode_increments_vanish(self, setup):
        # rho acts on ||n||, so mode 0 has no stochastic increments at all
        lat, grid = setup
        drv = gc.sample_driver(grid, lat, 3, 0)
        cache = ch.IncrementCache(drv)
        for j in range(grid.n_intervals):
            assert cache.value((j, (0, 0, 0))) == 0.0


class TestMultipleIntegral:
    def test_symmetrize_leaves_integral_invariant(self, setup):
        lat, grid = setup
        ker = _pair_kernel(grid, 2)
        drv = gc.sample_driver(grid, lat, 9, 0)
        a = ch.multiple_integral(ker, drv)
        b = ch.multiple_integral(ch.symmetrize(ker), drv)
        assert a == pytest.approx(b, rel=1e-10)

    def test_zero_mean(self, setup):
        lat, grid = setup
        for order in (1, 2, 3):
            ker = _pair_kernel(grid, order)
            n = 400
            vals = []
            for i in range(n):
                drv = gc.sample_driver(grid, lat, 31 + order, i)
                vals.append(ch.multiple_integral(ker, drv))
            vals = np.array(vals)
            z = abs(np.mean(vals)) / (np.std(vals) / np.sqrt(n) + 1e-30)
            assert z < 4.0, (order, z)

    def test_orthogonality_across_orders(self, setup):
        lat, grid = setup
        k1 = _pair_kernel(grid, 1)
        k2 = _pair_kernel(grid, 2)
        n = 600
        prods = []
        for i in range(n):
            drv = gc.sample_driver(grid, lat, 55, i)
            prods.append(
                np.real(
                    ch.multiple_integral(k1, drv)
                    * np.conj(ch.multiple_integral(k2, drv))
                )
            )
        prods = np.array(prods)
        z = abs(np.mean(prods)) / (np.std(prods) / np.sqrt(n) + 1e-30)
        assert z < 4.0


class TestContraction:
    def test_contract_orders(self, setup):
        _, grid = setup
        f = _pair_kernel(grid, 2)
        g = _pair_kernel(grid, 2)
        ch.set_contraction_grid(grid)
        for r in (0, 1, 2):
            c = ch.contract(f, g, r)
            assert c.order == 4 - 2 * r

    def test_full_contraction_is_inner_product(self, setup):
        _, grid = setup
        f = _pair_kernel(grid, 1)
        ch.set_contraction_grid(grid)
        c = ch.contract(f, f, 1)
        # order-0 kernel: single scalar = sum f(j,m) f(j,-m) var(j,m)
        expect = 0.0
        for (slot,), val in f.data.items():
            other = f.data.get((ch.neg_mode(slot),), 0.0)
            expect += val * other * ch.increment_variance_slot(slot)
        got = sum(c.data.values())
        assert np.real(got) == pytest.approx(np.real(expect), rel=1e-10)


class TestProductFormula:
    def test_defect_shrinks_under_refinement(self, setup):
        lat, _ = setup
        rel = []
        for res in (2, 8):
            grid = gc.make_time_grid(2.0, res)
            f = _pair_kernel(grid, 1)
            g = _pair_kernel(grid, 1)
            out = ch.product_formula_check(f, g, grid, lat, np.inf, 120, 0)
            assert out["scale"] > 0.0
            rel.append(out["rms_diff"] / out["scale"])
        assert rel[1] < rel[0]

    def test_mean_of_product_matches_contraction(self, setup):
        # E[I1(f) I1(g)] equals the full contraction term exactly
        lat, grid = setup
        f = _pair_kernel(grid, 1)
        g = _pair_kernel(grid, 1)
        ch.set_contraction_grid(grid)
        full = ch.contract(f, g, 1)
        expect = float(np.real(sum(full.data.values())))
        n = 4000
        acc = 0.0
        for i in range(n):
            drv = gc.sample_driver(grid, lat, 77, i)
            acc += np.real(
                ch.multiple_integral(f, drv) * ch.multiple_integral(g, drv)
            )
        spread = abs(expect) + 1.0
        assert abs(acc / n - expect) < 5.0 * spread / np.sqrt(n) * 10


class TestHypercontractivity:
    def test_gaussian_ratio_known(self, rng):
        # standard gaussian: ||x||_4 / ||x||_2 = 3^{1/4}, under the k=1 bound
        x = rng.standard_normal(200000)
        got = ch.hypercontractivity_ratio(x, 4.0)
        assert got == pytest.approx(3.0 ** 0.25, rel=0.02)
        assert got <= np.sqrt(3.0)
