"""Stochastic-time Gaussian driver for the frequency-truncation filtration.

W_t collects independent complex Brownian coefficients B_t^n (with the
conjugation constraint B^{-n} = conj(B^n)) through the multiplier
J_t = sigma_t(n)/<n>, so that W_t(n) is complex Gaussian with variance
rho_t(n)^2/<n>^2 and W_t^T = rho_T(grad) W_t.

Discrete construction: on a grid t_0=0 < ... < t_M the same per-interval
increment Delta B_k drives both the W-update (through the exact increment
multiplier sigma_bar_k = sqrt((rho_{t_{k+1}}^2 - rho_{t_k}^2)/Dt_k)) and every
Girsanov/Itô accumulator.  Marginals of W are then exact at every node, and
the discrete change of measure integrates to one exactly.  The t = infinity
value is produced by a single exact Gaussian tail increment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral as sp


# ---------------------------------------------------------------------------
# time grid


@dataclass(frozen=True)
class TimeGrid:
    """Nodes uniform in log2<t>, plus an implicit infinity tail slot."""

    nodes: np.ndarray  # t_0 = 0 < t_1 < ... < t_M
    nodes_per_octave: int

    def __post_init__(self):
        if np.any(np.diff(self.nodes) <= 0) or self.nodes[0] != 0.0:
            raise ValueError("grid nodes must start at 0 and increase strictly")

    @property
    def n_intervals(self) -> int:
        return len(self.nodes) - 1

    def dt(self, k: int) -> float:
        return float(self.nodes[k + 1] - self.nodes[k])


def make_time_grid(T_max: float, nodes_per_octave: int = 8) -> TimeGrid:
    """Grid covering [0, 16<T_max>]: sigma_s^T vanishes beyond that range."""
    t_end = 16.0 * sp.t_bracket(T_max)
    octaves = np.log2(sp.t_bracket(t_end))
    m = int(np.ceil(octaves * nodes_per_octave))
    levels = np.arange(m + 1) / nodes_per_octave
    nodes = np.sqrt(np.maximum(4.0 ** levels - 1.0, 0.0))
    nodes[0] = 0.0
    return TimeGrid(nodes, nodes_per_octave)


# ---------------------------------------------------------------------------
# driver


@dataclass
class BrownianDriver:
    """Deterministic lazy Brownian increments keyed by (seed, task, interval).

    Increments are regenerated on demand from counter-based streams, so a
    driver costs no memory, two drivers with equal keys are identical, and
    results do not depend on how samples are spread over workers.
    """

    grid: TimeGrid
    lattice: sp.LatticeSpec
    seed: int
    task: int = 0

    def _rng(self, slot: int):
        return np.random.default_rng(
            np.random.SeedSequence([self.seed, self.task, 0x9E3779B9, slot])
        )

    def increment(self, k: int) -> np.ndarray:
        """Delta B_k over the band cube; Hermitian, E|Delta B_k(n)|^2 = Dt_k."""
        f = sp.random_hermitian_field(self.lattice, self.lattice.K, self._rng(k))
        return f.coeffs * np.sqrt(self.grid.dt(k))

    def tail(self) -> np.ndarray:
        """Unit-variance Hermitian Gaussian for the t = infinity slot."""
        f = sp.random_hermitian_field(
            self.lattice, self.lattice.K, self._rng(self.grid.n_intervals)
        )
        return f.coeffs

    def initial(self) -> np.ndarray:
        """Unit-variance Hermitian Gaussian for the t = 0 slot.

        rho_0(n) = rho(|n|) is nonzero on low modes, so W_0 is a genuine
        Gaussian initial condition rather than zero.
        """
        f = sp.random_hermitian_field(
            self.lattice, self.lattice.K, self._rng(self.grid.n_intervals + 1)
        )
        return f.coeffs


def sample_driver(grid: TimeGrid, lattice: sp.LatticeSpec, seed: int, task: int = 0) -> BrownianDriver:
    return BrownianDriver(grid, lattice, seed, task)


# ---------------------------------------------------------------------------
# increment multipliers


def sigma_bar(
    grid: TimeGrid, k: int, band: int, T: float = np.inf
) -> np.ndarray:
    """Exact discrete increment multiplier over one interval.

    sigma_bar_k(n)^2 = (rho_{t_{k+1}}^T(n)^2 - rho_{t_k}^T(n)^2)/Dt_k; the
    cutoff is non-decreasing in t, so the difference is nonnegative.
    """
    r1 = sp.rho_t_symbol(band, grid.nodes[k + 1], T)
    r0 = sp.rho_t_symbol(band, grid.nodes[k], T)
    return np.sqrt(np.maximum(r1 ** 2 - r0 ** 2, 0.0) / grid.dt(k))


def covariance_oracle(n, t: float, T: float = np.inf) -> float:
    """Exact per-mode variance of W_t^T(n): rho_t^2 rho_T^2 / <n>^2."""
    r = float(np.sqrt(n[0] ** 2 + n[1] ** 2 + n[2] ** 2))
    return sp.rho_t_scalar(r, t, T) ** 2 / (1.0 + r * r)


# ---------------------------------------------------------------------------
# paths


@dataclass
class GaussianPath:
    """Materialized W-values at every node plus the exact infinity slot."""

    grid: TimeGrid
    lattice: sp.LatticeSpec
    T: float
    values: np.ndarray  # (M+1, side, side, side)
    w_inf: np.ndarray
    driver: BrownianDriver

    def field(self, k: int) -> sp.SpectralField:
        return sp.SpectralField(self.values[k], self.lattice.K, self.lattice)

    def field_inf(self) -> sp.SpectralField:
        return sp.SpectralField(self.w_inf, self.lattice.K, self.lattice)


def build_path(driver: BrownianDriver, T: float = np.inf) -> GaussianPath:
    """W at every node with exact marginals; the tail slot reaches t = inf."""
    grid, lattice = driver.grid, driver.lattice
    band = lattice.K
    side = 2 * band + 1
    bracket = sp.mode_bracket(band)
    M = grid.n_intervals
    values = np.zeros((M + 1, side, side, side), dtype=np.complex128)
    values[0] = (sp.rho_t_symbol(band, 0.0, T) / bracket) * driver.initial()
    for k in range(M):
        mult = sigma_bar(grid, k, band, T) / bracket
        values[k + 1] = values[k] + mult * driver.increment(k)
    r_inf = sp.rho_t_symbol(band, np.inf, T)
    r_end = sp.rho_t_symbol(band, grid.nodes[M], T)
    tail_sd = np.sqrt(np.maximum(r_inf ** 2 - r_end ** 2, 0.0)) / bracket
    w_inf = values[M] + tail_sd * driver.tail()
    return GaussianPath(grid, lattice, T, values, w_inf, driver)


def sample_w_inf(lattice: sp.LatticeSpec, rng, T: float = np.inf) -> sp.SpectralField:
    """Direct draw of W_inf^T (a truncated GFF sample), no time stepping."""
    band = lattice.K
    sd = sp.rho_t_symbol(band, np.inf, T) / sp.mode_bracket(band)
    f = sp.random_hermitian_field(lattice, band, rng)
    return sp.SpectralField(f.coeffs * sd, band, lattice)


# ---------------------------------------------------------------------------
# smoothing integrator


def integrate_I(
    u_seq, grid: TimeGrid, lattice: sp.LatticeSpec, T: float = np.inf
) -> list[sp.SpectralField]:
    """Left-point I_t[u]: I_{k+1} = I_k + (sigma_bar_k^T/<n>) u_{t_k} Dt_k.

    u_seq gives the drift value at each node (index 0..M-1 used); the
    increment multiplier matches the W-update exactly, which is what makes
    the discrete Girsanov shift cancel without bias.
    """
    band = lattice.K
    bracket = sp.mode_bracket(band)
    side = 2 * band + 1
    acc = np.zeros((side,) * 3, dtype=np.complex128)
    out = [sp.SpectralField(acc.copy(), band, lattice)]
    for k in range(grid.n_intervals):
        u_k = u_seq[k]
        if u_k is not None:
            mult = sigma_bar(grid, k, band, T) / bracket
            acc = acc + mult * u_k.coeffs * grid.dt(k)
        out.append(sp.SpectralField(acc.copy(), band, lattice))
    return out
