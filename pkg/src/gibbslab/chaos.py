"""Discrete multiple stochastic integrals, contractions, and chaos moments.

A kernel of order k is a sparse map over ordered k-tuples of slots
(interval index, mode); symmetric kernels carry the same value on every
permutation of a tuple.  The multiple integral

    I_k[f] = sum over stored tuples with pairwise-distinct intervals
             of f(tuple) * prod DeltaW

uses left-point W-increments, so tuples with distinct intervals are
martingale terms and all chaos means vanish in law.  The slot covariance is

    E[DeltaW_j(m) DeltaW_j(m')] = delta_{m'=-m} w(j, m),
    w(j, m) = (rho_{t_{j+1}}^T(m)^2 - rho_{t_j}^T(m)^2)/<m>^2,

the exact discrete increment variance; contractions pair slot (j, m)
against (j, -m) with weight w(j, m).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from math import comb, factorial

import numpy as np

from . import gaussian_control as gc
from . import spectral as sp


Slot = tuple[int, tuple[int, int, int]]


def neg_mode(slot: Slot) -> Slot:
    j, m = slot
    return (j, (-m[0], -m[1], -m[2]))


def increment_variance(grid: gc.TimeGrid, j: int, mode, T: float = np.inf) -> float:
    """w(j, m): exact variance of the W-increment over interval j."""
    r = float(np.sqrt(mode[0] ** 2 + mode[1] ** 2 + mode[2] ** 2))
    r1 = sp.rho_t_scalar(r, grid.nodes[j + 1], T)
    r0 = sp.rho_t_scalar(r, grid.nodes[j], T)
    return max(r1 ** 2 - r0 ** 2, 0.0) / (1.0 + r * r)


@dataclass
class ChaosKernel:
    """Sparse order-k kernel keyed by ordered slot tuples."""

    order: int
    data: dict = field(default_factory=dict)

    def set(self, key, value, replicate: bool = True):
        key = tuple(key)
        if len(key) != self.order:
            raise ValueError("key length must equal kernel order")
        if replicate:
            for perm in set(permutations(key)):
                self.data[perm] = value
        else:
            self.data[key] = value

    def is_symmetric(self, tol: float = 0.0) -> bool:
        for key, val in self.data.items():
            for perm in permutations(key):
                other = self.data.get(perm, 0.0)
                if abs(other - val) > tol:
                    return False
        return True


def symmetrize(kernel: ChaosKernel) -> ChaosKernel:
    """Average values over slot permutations and replicate the result."""
    out = ChaosKernel(kernel.order)
    seen = set()
    for key in kernel.data:
        canon = tuple(sorted(key))
        if canon in seen:
            continue
        seen.add(canon)
        perms = set(permutations(canon))
        avg = sum(kernel.data.get(p, 0.0) for p in perms) / len(perms)
        for p in perms:
            out.data[p] = avg
    return out


class IncrementCache:
    """Lazy per-interval W-increments for one driver and outer cutoff."""

    def __init__(self, driver: gc.BrownianDriver, T: float = np.inf):
        self.driver = driver
        self.T = T
        self._arrays: dict[int, np.ndarray] = {}

    def value(self, slot: Slot) -> complex:
        j, mode = slot
        arr = self._arrays.get(j)
        if arr is None:
            band = self.driver.lattice.K
            mult = gc.sigma_bar(self.driver.grid, j, band, self.T) / sp.mode_bracket(band)
            arr = mult * self.driver.increment(j)
            self._arrays[j] = arr
        K = self.driver.lattice.K
        return complex(arr[mode[0] + K, mode[1] + K, mode[2] + K])


def multiple_integral(
    kernel: ChaosKernel, driver: gc.BrownianDriver, T: float = np.inf, check: bool = True
):
    """I_k[f] over one driver realization; errors on non-symmetric kernels.

    The diagonal-free sum is invariant under reordering of key slots, so a
    caller holding an unsymmetrized kernel may skip the symmetry check: the
    value equals that of the symmetrized kernel.
    """
    if check and not kernel.is_symmetric(tol=1e-12):
        raise ValueError("kernel must be symmetric")
    if kernel.order == 0:
        return kernel.data.get((), 0.0)
    cache = IncrementCache(driver, T)
    total = 0.0 + 0.0j
    for key, val in kernel.data.items():
        intervals = [s[0] for s in key]
        if len(set(intervals)) != len(intervals):
            continue
        prod = val
        for slot in key:
            prod = prod * cache.value(slot)
        total += prod
    return total


def contract(f: ChaosKernel, g: ChaosKernel, r: int) -> ChaosKernel:
    """Contraction of r indices, pairing slot (j, m) with (j, -m)."""
    if r < 0 or r > min(f.order, g.order):
        raise ValueError("r out of range")
    out = ChaosKernel(f.order + g.order - 2 * r)
    # group g-keys by their trailing r slots
    g_by_tail: dict = {}
    for kg, vg in g.data.items():
        g_by_tail.setdefault(kg[g.order - r :], []).append((kg[: g.order - r], vg))
    for kf, vf in f.data.items():
        head, s = kf[: f.order - r], kf[f.order - r :]
        weight = 1.0
        for slot in s:
            weight *= increment_variance_slot(slot)
        if weight == 0.0:
            continue
        tail = tuple(neg_mode(slot) for slot in s)
        for y, vg in g_by_tail.get(tail, ()):
            key = head + y
            out.data[key] = out.data.get(key, 0.0) + vf * vg * weight
    return out


_contract_grid: gc.TimeGrid | None = None
_contract_T: float = np.inf


def set_contraction_grid(grid: gc.TimeGrid, T: float = np.inf):
    """Contractions need the grid to look up increment variances."""
    global _contract_grid, _contract_T
    _contract_grid = grid
    _contract_T = T


def increment_variance_slot(slot: Slot) -> float:
    if _contract_grid is None:
        raise RuntimeError("call set_contraction_grid before contracting")
    return increment_variance(_contract_grid, slot[0], slot[1], _contract_T)


def product_formula_rhs(f: ChaosKernel, g: ChaosKernel, driver: gc.BrownianDriver, T: float = np.inf):
    """sum_r r! C(k,r) C(l,r) I_{k+l-2r}[f (x)_r g] on one realization."""
    total = 0.0 + 0.0j
    for r in range(min(f.order, g.order) + 1):
        ker = contract(f, g, r)
        coeff = factorial(r) * comb(f.order, r) * comb(g.order, r)
        total += coeff * multiple_integral(ker, driver, T, check=False)
    return total


def product_formula_check(
    f: ChaosKernel,
    g: ChaosKernel,
    grid: gc.TimeGrid,
    lattice: sp.LatticeSpec,
    T: float = np.inf,
    n_samples: int = 200,
    seed: int = 0,
) -> dict:
    """Pathwise LHS-vs-RHS comparison on a shared driver ensemble."""
    set_contraction_grid(grid, T)
    # contractions are path-independent; build each once
    kers = [
        (factorial(r) * comb(f.order, r) * comb(g.order, r), contract(f, g, r))
        for r in range(min(f.order, g.order) + 1)
    ]
    diffs, lhss, rhss = [], [], []
    for i in range(n_samples):
        drv = gc.sample_driver(grid, lattice, seed, i)
        lhs = multiple_integral(f, drv, T) * multiple_integral(g, drv, T)
        rhs = sum(c * multiple_integral(k, drv, T, check=False) for c, k in kers)
        lhss.append(lhs)
        rhss.append(rhs)
        diffs.append(abs(lhs - rhs))
    diffs = np.array(diffs)
    scale = max(float(np.mean(np.abs(lhss))), 1e-300)
    return {
        "rms_diff": float(np.sqrt(np.mean(diffs ** 2))),
        "scale": scale,
        "max_rel_diff": float(np.max(diffs)) / scale,
        "mean_lhs": complex(np.mean(lhss)),
        "mean_rhs": complex(np.mean(rhss)),
    }


def hypercontractivity_ratio(samples, p: float) -> float:
    """Empirical ||X||_p / ||X||_2; bounded by (p-1)^{k/2} on chaos order k."""
    x = np.abs(np.asarray(samples, dtype=float))
    l2 = np.sqrt(np.mean(x ** 2))
    if l2 == 0.0:
        raise ValueError("degenerate sample set")
    return float(np.mean(x ** p) ** (1.0 / p) / l2)
