"""Singularity witness statistic: the normalized quartic energy under the
free field versus under the reweighted Gibbs measure, with exact restricted
lower-bound sums and scaling-exponent fits.

The statistic for a sample phi and a frequency scale S is

    S^{-(1-2 beta - delta)} int :(V*(rho_S phi)^2)(rho_S phi)^2: dx,

which stays of order one under the free field and drifts to minus infinity
under the Gibbs measure.  Its martingale form decomposes pathwise exactly
into a main term plus four minor terms (coupling terms in the drift); the
main term's growth exponent is witnessed by an exact restricted lattice sum.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve

from . import drift as dr
from . import gaussian_control as gc
from . import objects as ob
from . import renorm as rn
from . import spectral as sp


def lattice_for(S: float, product_band: int | None = None) -> sp.LatticeSpec:
    """Smallest centered cube holding every mode with rho_S(n) > 0."""
    K = int(np.floor(np.sqrt(16.0 * (1.0 + S * S) - 1.0)))
    if product_band is None:
        return sp.LatticeSpec(K)
    return sp.LatticeSpec(K, product_band)


def quartic_statistic(
    phi: sp.SpectralField, S: float, delta: float, ctx_S: rn.RenormContext
) -> float:
    """Normalized quartic energy of the rho_S-truncated sample."""
    K = ctx_S.lattice.K
    if phi.band < K and sp.rho_t_scalar(float(phi.band) + 1.0, np.inf, S) > 0.0:
        raise ValueError("band overflow: sample does not cover the S-truncation")
    f = phi if phi.band <= K else sp.restrict_field(phi, K)
    if f.band < K:
        f = sp.pad_field(f, K)
    rho_S = sp.rho_t_symbol(K, np.inf, S)
    trunc = sp.SpectralField(rho_S * f.coeffs, K, ctx_S.lattice)
    beta = ctx_S.V.beta
    return rn.wick_quartic_energy(trunc, ctx_S) / S ** (1.0 - 2.0 * beta - delta)


# ---------------------------------------------------------------------------
# scans


def gff_scan(
    S_list,
    V_beta: float,
    delta: float,
    n_samples: int,
    seed: int,
    lam: float = 1.0,
    n_power: int = 3,
) -> list[dict]:
    """Statistic samples under the free field, one lattice per S."""
    out = []
    for si, S in enumerate(S_list):
        lattice = lattice_for(S)
        V = sp.make_potential(V_beta, K=lattice.K)
        ctx = rn.build_context(np.inf, S, V, lam, n_power, lattice)
        rng = np.random.default_rng(np.random.SeedSequence([seed, si, 0x51F5]))
        vals = np.array(
            [
                quartic_statistic(gc.sample_w_inf(lattice, rng), S, delta, ctx)
                for _ in range(n_samples)
            ]
        )
        out.append(
            {
                "S": float(S),
                "mean": float(np.mean(vals)),
                "stderr": float(np.std(vals) / np.sqrt(n_samples)),
                "rms": float(np.sqrt(np.mean(vals ** 2))),
                "second_moment": float(np.mean(vals ** 2)),
                "second_moment_stderr": float(np.std(vals ** 2) / np.sqrt(n_samples)),
                "ess": float(n_samples),
                "n_samples": n_samples,
                "values": vals,
            }
        )
    return out


def gibbs_sample_statistic(
    driver: gc.BrownianDriver,
    S_list,
    T: float,
    V: sp.Potential,
    lam: float,
    n_power: int,
    delta: float,
    cap: float = 1e6,
    include_power_term: bool = True,
) -> dict:
    """One reference-measure sample: per-S statistics plus its log weight."""
    sample = dr.sample_reference(
        driver, T, V, lam, n_power, cap=cap, include_power_term=include_power_term
    )
    lw = dr.gibbs_log_weight(sample, V, lam, n_power, 0.0)
    stats = []
    for S in S_list:
        lat_S = lattice_for(S)
        ctx_S = rn.build_context(np.inf, S, sp.make_potential(V.beta, K=lat_S.K), lam, n_power, lat_S)
        stats.append(quartic_statistic(sample.w_inf, S, delta, ctx_S))
    return {"stats": stats, "log_weight": lw, "tau_hit": sample.traj.tau_hit}


def gibbs_scan_reduce(
    per_sample: list[dict], S_list, ess_floor: float = 20.0
) -> list[dict]:
    """Self-normalized importance reduction of gibbs_sample_statistic outputs."""
    lw = np.array([r["log_weight"] for r in per_sample])
    wts = np.exp(lw - np.max(lw))
    wts /= np.sum(wts)
    ess = dr.effective_sample_size(lw)
    rejected = ess < ess_floor
    out = []
    for j, S in enumerate(S_list):
        vals = np.array([r["stats"][j] for r in per_sample])
        mean = float(np.sum(wts * vals))
        stderr = float(np.sqrt(np.sum(wts ** 2 * (vals - mean) ** 2)))
        out.append(
            {
                "S": float(S),
                "mean": mean,
                "stderr": stderr,
                "rms": float(np.sqrt(np.sum(wts * vals ** 2))),
                "ess": float(ess),
                "n_samples": len(per_sample),
                "rejected": bool(rejected),
            }
        )
    return out


def gibbs_scan(
    S_list,
    T: float,
    V_beta: float,
    lam: float,
    n_power: int,
    delta: float,
    n_samples: int,
    seed: int,
    res: int = 4,
    ess_floor: float = 20.0,
    cap: float = 1e6,
    include_power_term: bool = True,
) -> list[dict]:
    """Reweighted scan under mu_T ~ weighted nu_T, shared samples across S."""
    if T < max(S_list):
        raise ValueError("T must dominate the scanned frequency scales")
    lattice = lattice_for(max(S_list))
    V = sp.make_potential(V_beta, K=lattice.K)
    grid = gc.make_time_grid(T, res)
    per_sample = [
        gibbs_sample_statistic(
            gc.sample_driver(grid, lattice, seed, i),
            S_list,
            T,
            V,
            lam,
            n_power,
            delta,
            cap,
            include_power_term,
        )
        for i in range(n_samples)
    ]
    return gibbs_scan_reduce(per_sample, S_list, ess_floor)


def paired_difference(per_sample: list[dict], j_small: int, j_large: int) -> tuple[float, float]:
    """Weighted mean and stderr of stat[j_large] - stat[j_small] per sample."""
    lw = np.array([r["log_weight"] for r in per_sample])
    wts = np.exp(lw - np.max(lw))
    wts /= np.sum(wts)
    d = np.array([r["stats"][j_large] - r["stats"][j_small] for r in per_sample])
    mean = float(np.sum(wts * d))
    stderr = float(np.sqrt(np.sum(wts ** 2 * (d - mean) ** 2)))
    return mean, stderr


# ---------------------------------------------------------------------------
# five-term decomposition of the martingale-form statistic


def five_term_decomposition(
    driver: gc.BrownianDriver,
    S: float,
    V: sp.Potential,
    lam: float,
    n_power: int,
    T_drift: float = np.inf,
) -> dict:
    """Pathwise split of the quartic energy along the constructive drift.

    The quartic energy in martingale form, 4 sum_k <c_k^S, DW_k^S> plus the
    initial-condition quartic, splits exactly into the main drift pairing,
    the martingale in the driftless cubic, the two coupling-term groups, and
    the Hermite-forcing pairing, via DW^S = J^S(u dt + dB^u) and the cubic
    binomial c^S = c^{S,u} + A1 + A2 + A3.
    """
    grid, lattice = driver.grid, driver.lattice
    K = lattice.K
    bracket = sp.mode_bracket(K)
    rho_S = sp.rho_t_symbol(K, np.inf, S)
    rho_T = sp.rho_t_symbol(K, np.inf, T_drift)

    def pair(a, b):
        return float(np.real(np.sum(a * np.conj(b))))

    y = (sp.rho_t_symbol(K, 0.0, np.inf) / bracket) * driver.initial()
    i_acc = np.zeros_like(y)
    w0_S = sp.SpectralField(rho_S * y, K, lattice)
    ctx0 = rn.build_context(0.0, S, V, lam, n_power, lattice)
    w0_term = rn.wick_quartic_energy(w0_S, ctx0)

    terms = {"main": 0.0, "mart": 0.0, "coupling_drift": 0.0, "coupling_mart": 0.0, "power": 0.0}
    direct_mart = w0_term
    for k in range(grid.n_intervals):
        t = grid.nodes[k]
        dt = grid.dt(k)
        sb = gc.sigma_bar(grid, k, K, np.inf) / bracket
        j_S = sb * rho_S
        if not np.any(j_S):
            y = y + sb * driver.increment(k)
            continue
        j_T = sb * rho_T
        ctx_T = rn.build_context(t, T_drift, V, lam, n_power, lattice)
        eff = sp.SpectralField(rho_T * y, K, lattice)
        u_cub = dr.forcing_Xi(eff, ctx_T, j_T, include_power_term=False)
        u_pow = dr.forcing_Xi(eff, ctx_T, j_T, include_cubic=False)
        u_k = u_cub.coeffs + u_pow.coeffs
        db = driver.increment(k)
        db_u = db - u_k * dt

        w_k = sp.SpectralField(rho_S * (y + i_acc), K, lattice)
        y_S = sp.SpectralField(rho_S * y, K, lattice)
        i_S = sp.SpectralField(rho_S * i_acc, K, lattice)
        ctx_S = rn.build_context(t, S, V, lam, n_power, lattice)
        c_full = sp.restrict_field(rn.wick_cubic(w_k, ctx_S), K)
        c_u = sp.restrict_field(rn.wick_cubic(y_S, ctx_S), K)
        a1, a2, a3 = (
            sp.restrict_field(a, K) for a in rn.cubic_shift_terms(y_S, i_S, ctx_S)
        )
        a_sum = a1.coeffs + a2.coeffs + a3.coeffs

        direct_mart += 4.0 * pair(c_full.coeffs, j_S * (u_k * dt + db_u))
        terms["main"] += 4.0 * pair(c_u.coeffs, j_S * u_cub.coeffs) * dt
        terms["mart"] += 4.0 * pair(c_u.coeffs, j_S * db_u)
        terms["coupling_drift"] += 4.0 * pair(a_sum, j_S * u_cub.coeffs) * dt
        terms["coupling_mart"] += 4.0 * pair(a_sum, j_S * db_u)
        terms["power"] += 4.0 * pair(c_full.coeffs, j_S * u_pow.coeffs) * dt

        i_acc = i_acc + sb * u_k * dt
        y = y + sb * db

    terms["w0"] = w0_term
    terms["direct"] = direct_mart
    terms["decomposed"] = sum(terms[k] for k in ("w0", "main", "mart", "coupling_drift", "coupling_mart", "power"))
    return terms


# ---------------------------------------------------------------------------
# exact restricted lower-bound sum


def _ball(center: np.ndarray, radius: float) -> np.ndarray:
    r = int(np.floor(radius))
    if r < 0:
        return np.zeros((0, 3), dtype=np.int64)
    rng = np.arange(-r, r + 1)
    g = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
    g = g[np.sum(g * g, axis=1) <= radius * radius]
    return g + center


def witness_region_sum(
    S: float,
    beta: float,
    radius_factor: float = 0.25,
    res: int = 2,
) -> float:
    """Exact sum of <n123>^{-2} <n12>^{-2 beta} prod <n_j>^{-2} times the
    cutoff time-quadrature weight over the region ||n_j - S e_j|| <= S/4."""
    radius = radius_factor * S
    balls = [
        _ball(np.array([int(round(S)) * (j == i) for i in range(3)]), radius)
        for j in range(3)
    ]
    if any(len(b) == 0 for b in balls):
        return 0.0
    grid = gc.make_time_grid(S, res)
    t_nodes = grid.nodes
    M = grid.n_intervals
    r = int(np.floor(radius))
    Si = int(round(S))

    def rho_sq(br, t):
        # rho_t^S(<n>)^2 as a function of the bracket value
        return (
            sp.cutoff_rho(br / sp.t_bracket(t)) * sp.cutoff_rho(br / sp.t_bracket(S))
        ) ** 2

    def bracket_cube(half: int, center) -> np.ndarray:
        ax = [np.arange(-half, half + 1, dtype=float) + c for c in center]
        return np.sqrt(
            1.0
            + ax[0].reshape(-1, 1, 1) ** 2
            + ax[1].reshape(1, -1, 1) ** 2
            + ax[2].reshape(1, 1, -1) ** 2
        )

    # per-axis single-mode factor cubes, masked to the witness balls
    centers = [(Si, 0, 0), (0, Si, 0), (0, 0, Si)]
    brj = [bracket_cube(r, c) for c in centers]
    # offsets from the ball centers; integer arithmetic keeps boundary points
    ax = np.arange(-r, r + 1)
    off = (
        ax.reshape(-1, 1, 1) ** 2 + ax.reshape(1, -1, 1) ** 2 + ax.reshape(1, 1, -1) ** 2
    )
    mask = off <= radius * radius
    br12 = bracket_cube(2 * r, (Si, Si, 0))
    br123 = bracket_cube(3 * r, (Si, Si, Si))
    g12 = br12 ** (-2.0 * beta)
    g123 = br123 ** (-2.0)
    total = 0.0
    prev123 = rho_sq(br123, 0.0)
    for k in range(M):
        t0 = t_nodes[k]
        f = [
            mask * rho_sq(brj[j], t0) * brj[j] ** (-2.0) for j in range(3)
        ]
        a12 = fftconvolve(f[0], f[1]) * g12
        a123 = fftconvolve(a12, f[2])
        d123 = rho_sq(br123, t_nodes[k + 1]) - prev123
        total += float(np.sum(a123 * g123 * d123))
        prev123 = prev123 + d123
    return total


def scaling_exponent_fit(
    S_list, values, n_boot: int = 1000, seed: int = 0
) -> tuple[float, tuple[float, float]]:
    """Log-log least-squares slope with a bootstrap confidence interval."""
    S_arr = np.asarray(S_list, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(v) < 3:
        raise ValueError("need at least three scan points")
    if np.any(v <= 0.0):
        raise ValueError("scaling fit needs positive values")
    x, y = np.log(S_arr), np.log(v)

    def slope(xs, ys):
        return float(np.polyfit(xs, ys, 1)[0])

    s = slope(x, y)
    if n_boot == 0:
        return s, (s, s)
    rng = np.random.default_rng(seed)
    boots = []
    n = len(x)
    while len(boots) < n_boot:
        idx = rng.integers(0, n, size=n)
        if len(np.unique(idx)) < 2:
            continue
        boots.append(slope(x[idx], y[idx]))
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return s, (float(lo), float(hi))
