"""Renormalized potential, the stochastic-control objective, the additive
constant c^{T,lambda}, operator-norm and inequality diagnostics.

The objective for a drift u along a driftless path W is

    OBJ = F(W + I[u]) + (lambda/4) E4(W_inf^T + I_inf^T[u]) + c
          + (1/2) sum_k ||u_k||^2 Dt_k,

and with w_k = u_k + lambda J_k^T c_k (c_k the cubic object at node k) it
decomposes pathwise exactly into

    OBJ = e0 + c + e_mart + e1 + e2 + e3
          + (lambda/4) int (V*(I^T[w])^2)(I^T[w])^2 + (1/2)||w||^2,

where e0 collects the terms whose expectation defines -c^{T,lambda} and
e_mart = lambda sum_k <J_k^T(c_inf - c_k), u_k> Dt_k is an explicit
martingale remainder (zero-mean for deterministic u).  The decomposition
uses only the quartic binomial formula and the substitution
I^T[w] = I^T[u] + lambda W3, both exact at grid level.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve

from . import drift as dr
from . import gaussian_control as gc
from . import objects as ob
from . import renorm as rn
from . import spectral as sp


def renormalized_potential(f: sp.SpectralField, ctx: rn.RenormContext, c: float) -> float:
    """: V^{T,lambda} :(f) = (lambda/4) int :(V*f^2)f^2: + c."""
    return 0.25 * ctx.lam * rn.wick_quartic_energy(f, ctx) + c


# ---------------------------------------------------------------------------
# the constant c^{T,lambda}


def c_term2_exact(
    T: float, V: sp.Potential, lattice: sp.LatticeSpec, grid: gc.TimeGrid
) -> float:
    """E||J^T :(V*W^2)W:||^2_{L^2_t L^2_x} by exact time-quadrature of the
    cubic variance oracle with the discrete (J^T)^2 dt weights."""
    K = lattice.K
    total = 0.0
    for k in range(grid.n_intervals):
        w = ob.w3_increment_weights(grid, k, K, T)
        if np.any(w):
            total += ob.weighted_cubic_variance_sum(w, grid.nodes[k], T, V, lattice)
    return total


def c_term2_mc_sample(
    driver: gc.BrownianDriver, T: float, V: sp.Potential, lam: float, n_power: int
) -> float:
    """One-path MC twin of c_term2_exact."""
    grid, lattice = driver.grid, driver.lattice
    K = lattice.K
    path = gc.build_path(driver, T)
    total = 0.0
    for k in range(grid.n_intervals):
        w = ob.w3_increment_weights(grid, k, K, T)
        if not np.any(w):
            continue
        ctx = rn.build_context(grid.nodes[k], T, V, lam, n_power, lattice)
        c = sp.restrict_field(rn.wick_cubic(path.field(k), ctx), K)
        total += float(np.sum(w * np.abs(c.coeffs) ** 2))
    return total


def c_mc_terms_sample(
    driver: gc.BrownianDriver, T: float, V: sp.Potential, lam: float, n_power: int
) -> tuple[float, float]:
    """One-path samples of the two cubic-in-lambda contributions to E0:

        A = int (V*:W^2:)(W3)^2
        B = int [(V*(W W3)) W W3 - (M W3) W3]
    """
    lattice = driver.lattice
    path = gc.build_path(driver, T)
    ctx = rn.build_context(np.inf, T, V, lam, n_power, lattice)
    w_inf = path.field_inf()
    w3 = ob.w3_bold(path, V, lam, n_power)[-1]
    v_wick = sp.convolve_potential(V, rn.wick_square(w_inf, ctx))
    a = sp.inner(v_wick, sp.multiply(w3, w3))
    ww3 = sp.multiply(w_inf, w3)
    b = sp.inner(sp.convolve_potential(V, ww3), ww3) - sp.inner(ctx.m_apply(w3), w3)
    return a, b


def estimate_c(
    T: float,
    V: sp.Potential,
    lam: float,
    n_power: int,
    lattice: sp.LatticeSpec,
    grid: gc.TimeGrid,
    n_samples: int,
    seed: int,
) -> tuple[float, float]:
    """c^{T,lambda} = -E[E0]: the quartic term is zero-mean (dropped
    analytically), the quadratic term is exact, the cubic terms are MC."""
    if lam == 0.0:
        return 0.0, 0.0
    term2 = c_term2_exact(T, V, lattice, grid)
    a_vals, b_vals = [], []
    for i in range(n_samples):
        drv = gc.sample_driver(grid, lattice, seed, i)
        a, b = c_mc_terms_sample(drv, T, V, lam, n_power)
        a_vals.append(a)
        b_vals.append(b)
    a_vals, b_vals = np.array(a_vals), np.array(b_vals)
    combo = -0.5 * lam ** 3 * a_vals - lam ** 3 * b_vals
    value = 0.5 * lam ** 2 * term2 + float(np.mean(combo))
    stderr = float(np.std(combo) / np.sqrt(n_samples))
    return value, stderr


# ---------------------------------------------------------------------------
# objective and its exact pathwise decomposition


def make_u_star(theta: float):
    """The one-parameter drift family theta * (-lambda J^T cubic)."""

    def family(eff: sp.SpectralField, ctx: rn.RenormContext, j_symbol: np.ndarray):
        cub = dr.wick_cubic_banded(eff, ctx, ctx.lattice.K)
        return sp.SpectralField(-theta * ctx.lam * j_symbol * cub.coeffs, ctx.lattice.K, eff.lattice)

    return family


def bd_objective_sample(
    driver: gc.BrownianDriver,
    family,
    T: float,
    V: sp.Potential,
    lam: float,
    n_power: int,
    c: float = 0.0,
    F=None,
) -> float:
    """One-path objective F(W+I[u]) + :V^{T,lambda}:(W^T+I^T[u]) + l2/2."""
    grid, lattice = driver.grid, driver.lattice
    K = lattice.K
    bracket = sp.mode_bracket(K)
    rho_T = sp.rho_t_symbol(K, np.inf, T)
    y = (sp.rho_t_symbol(K, 0.0, np.inf) / bracket) * driver.initial()
    i_acc = np.zeros_like(y)
    half_l2 = 0.0
    for k in range(grid.n_intervals):
        sb = gc.sigma_bar(grid, k, K, np.inf) / bracket
        sb_T = sb * rho_T
        if family is not None and np.any(sb_T):
            ctx = rn.build_context(grid.nodes[k], T, V, lam, n_power, lattice)
            eff = sp.SpectralField(rho_T * y, K, lattice)
            u = family(eff, ctx, sb_T)
            half_l2 += 0.5 * sp.l2_norm_sq(u) * grid.dt(k)
            i_acc = i_acc + sb * u.coeffs * grid.dt(k)
        y = y + sb * driver.increment(k)
    r_inf = sp.rho_t_symbol(K, np.inf, np.inf)
    r_end = sp.rho_t_symbol(K, grid.nodes[-1], np.inf)
    y = y + (np.sqrt(np.maximum(r_inf ** 2 - r_end ** 2, 0.0)) / bracket) * driver.tail()
    shifted = sp.SpectralField(y + i_acc, K, lattice)
    ctx_inf = rn.build_context(np.inf, T, V, lam, n_power, lattice)
    w_t = sp.SpectralField(rho_T * shifted.coeffs, K, lattice)
    val = renormalized_potential(w_t, ctx_inf, c) + half_l2
    if F is not None:
        val += F(shifted)
    return val


def bd_objective(
    theta: float,
    T: float,
    V: sp.Potential,
    lam: float,
    n_power: int,
    lattice: sp.LatticeSpec,
    grid: gc.TimeGrid,
    n_samples: int,
    seed: int,
    c: float = 0.0,
    F=None,
) -> tuple[float, float]:
    fam = None if theta == 0.0 else make_u_star(theta)
    vals = []
    for i in range(n_samples):
        drv = gc.sample_driver(grid, lattice, seed, i)
        vals.append(bd_objective_sample(drv, fam, T, V, lam, n_power, c=c, F=F))
    vals = np.array(vals)
    return float(np.mean(vals)), float(np.std(vals) / np.sqrt(n_samples))


def optimize_drift_scale(
    T: float,
    V: sp.Potential,
    lam: float,
    n_power: int,
    lattice: sp.LatticeSpec,
    grid: gc.TimeGrid,
    n_samples: int,
    seed: int,
    c: float = 0.0,
    tol: float = 1e-2,
) -> tuple[float, float]:
    """Golden-section minimum of the objective over theta in [0, 2] with a
    fixed common-random-number ensemble; returns (theta*, bound)."""
    if lam == 0.0:
        return 0.0, c
    cache: dict[float, float] = {}

    def f(theta):
        key = round(theta, 12)
        if key not in cache:
            cache[key] = bd_objective(
                theta, T, V, lam, n_power, lattice, grid, n_samples, seed, c=c
            )[0]
        return cache[key]

    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.0, 2.0
    x1, x2 = b - invphi * (b - a), a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
    theta = (a + b) / 2.0
    return theta, f(theta)


def variational_decomposition(
    driver: gc.BrownianDriver,
    u_seq,
    T: float,
    V: sp.Potential,
    lam: float,
    n_power: int,
    c: float = 0.0,
) -> dict:
    """Pathwise-exact decomposition of the objective for a given drift
    sequence (one field or None per grid node)."""
    grid, lattice = driver.grid, driver.lattice
    K = lattice.K
    bracket = sp.mode_bracket(K)
    rho_T = sp.rho_t_symbol(K, np.inf, T)
    path = gc.build_path(driver, T)  # W^T along the grid

    ctx_inf = rn.build_context(np.inf, T, V, lam, n_power, lattice)
    w_inf = path.field_inf()
    c_inf = sp.restrict_field(rn.wick_cubic(w_inf, ctx_inf), K)

    i_u = np.zeros((2 * K + 1,) * 3, dtype=np.complex128)
    w3 = np.zeros_like(i_u)
    half_l2_u, half_l2_w = 0.0, 0.0
    jc_sq = 0.0
    e_mart = 0.0
    for k in range(grid.n_intervals):
        sb_T = gc.sigma_bar(grid, k, K, T) / bracket
        dt = grid.dt(k)
        ctx = rn.build_context(grid.nodes[k], T, V, lam, n_power, lattice)
        c_k = sp.restrict_field(rn.wick_cubic(path.field(k), ctx), K)
        u_k = u_seq[k].coeffs if u_seq[k] is not None else np.zeros_like(i_u)
        jck = sb_T * c_k.coeffs
        w_k = u_k + lam * jck
        i_u += sb_T * u_k * dt
        w3 += sb_T * jck * dt
        half_l2_u += 0.5 * float(np.sum(np.abs(u_k) ** 2)) * dt
        half_l2_w += 0.5 * float(np.sum(np.abs(w_k) ** 2)) * dt
        jc_sq += float(np.sum(np.abs(jck) ** 2)) * dt
        e_mart += lam * float(
            np.real(np.sum(sb_T * (c_inf.coeffs - c_k.coeffs) * np.conj(u_k)))
        ) * dt

    f_u = sp.SpectralField(i_u, K, lattice)  # I_inf^T[u]
    f_w = sp.SpectralField(i_u + lam * w3, K, lattice)  # I_inf^T[w]
    g = sp.SpectralField(w3, K, lattice)  # W3

    def q_pair(f1, f2):
        """Bilinear kernel of the quadratic group: (lambda/2) (V*:W^2:) +
        lambda [(V*(W .))W - M]."""
        v_wick = sp.convolve_potential(V, rn.wick_square(w_inf, ctx_inf))
        term = 0.5 * lam * sp.inner(v_wick, sp.multiply(f1, f2))
        wf1 = sp.multiply(w_inf, f1)
        wf2 = sp.multiply(w_inf, f2)
        term += lam * (sp.inner(sp.convolve_potential(V, wf1), wf2) - sp.inner(ctx_inf.m_apply(f1), f2))
        return term

    e0 = (
        0.25 * lam * rn.wick_quartic_energy(w_inf, ctx_inf)
        - 0.5 * lam ** 2 * jc_sq
        + lam ** 2 * q_pair(g, g)
    )
    e1 = -2.0 * lam * q_pair(g, f_w)
    e2 = q_pair(f_w, f_w)
    vf2 = sp.convolve_potential(V, sp.multiply(f_u, f_u))
    vfw2 = sp.convolve_potential(V, sp.multiply(f_w, f_w))
    e3 = lam * sp.inner(vf2, sp.multiply(f_u, w_inf)) + 0.25 * lam * (
        sp.inner(vf2, sp.multiply(f_u, f_u)) - sp.inner(vfw2, sp.multiply(f_w, f_w))
    )
    coercive = 0.25 * lam * sp.inner(vfw2, sp.multiply(f_w, f_w)) + half_l2_w
    decomposed = e0 + c + e_mart + e1 + e2 + e3 + coercive

    # the path already carries the outer truncation: W^T + I^T[u]
    direct_field = sp.SpectralField(w_inf.coeffs + i_u, K, lattice)
    direct = renormalized_potential(direct_field, ctx_inf, c) + half_l2_u
    return {
        "direct": direct,
        "decomposed": decomposed,
        "e0": e0,
        "e_mart": e_mart,
        "e1": e1,
        "e2": e2,
        "e3": e3,
        "coercive": coercive,
    }


# ---------------------------------------------------------------------------
# random operator norm


def _matvec_A(x: np.ndarray, w_hat: np.ndarray, v2: np.ndarray, m_sym: np.ndarray, wg: np.ndarray, K: int) -> np.ndarray:
    y = wg * x
    q = fftconvolve(w_hat, y)[::-1, ::-1, ::-1]  # q(j) = sum_n W(-j-n) y(n)
    r = v2 * q
    s_full = fftconvolve(r, w_hat[::-1, ::-1, ::-1])  # s(m) = sum_j r(j) W(j-m)
    s = sp.restrict_coeffs(s_full, 3 * K, K)
    return wg * (s - m_sym * wg * x[::-1, ::-1, ::-1])


def operator_norm(
    W: sp.SpectralField,
    gamma: float,
    ctx: rn.RenormContext,
    tol: float = 1e-6,
    max_iter: int = 500,
    seed: int = 0,
) -> float:
    """Largest singular value of the Sobolev-weighted bilinear form
    f1, f2 -> int (V*(W f1)) W f2 - int (M f1) f2 by power iteration on
    A^H A (the form is symmetric, so A^H x = conj(A conj(x)))."""
    K = W.band
    wg = sp.mode_bracket(K) ** (-gamma)
    v2 = ctx.V.symbol(2 * K)
    m_sym = sp.restrict_coeffs(ctx.m_symbol, ctx.lattice.K, K)
    w_hat = W.coeffs

    def a(x):
        return _matvec_A(x, w_hat, v2, m_sym, wg, K)

    def ah(x):
        return np.conj(a(np.conj(x)))

    rng = np.random.default_rng(seed)
    v = rng.normal(size=(2 * K + 1,) * 3) + 1j * rng.normal(size=(2 * K + 1,) * 3)
    v /= np.linalg.norm(v)
    lam_old = 0.0
    history = []
    for _ in range(max_iter):
        bv = ah(a(v))
        lam = float(np.real(np.vdot(v, bv)))
        history.append(lam)
        nrm = np.linalg.norm(bv)
        if nrm == 0.0:
            return 0.0
        v = bv / nrm
        if abs(lam - lam_old) <= tol * max(abs(lam), 1e-300):
            return float(np.sqrt(max(lam, 0.0)))
        lam_old = lam
    raise RuntimeError(f"power iteration did not converge; history tail {history[-5:]}")


# ---------------------------------------------------------------------------
# inequality probes


def visan_ratio(f: sp.SpectralField, V: sp.Potential, beta: float) -> float:
    """||<grad>^{-beta/4} f||_L4^4 / V(f)."""
    g = sp.bracket_multiplier(f, -0.25 * beta)
    grid = sp.grid_size_for(4 * g.band)
    vals = sp.field_to_grid(g, grid)
    l4 = float(np.mean(vals ** 4))
    q = sp.multiply(f, f)
    pot = sp.inner(sp.convolve_potential(V, q), q)
    if pot <= 0.0:
        raise ValueError("potential energy must be positive")
    return l4 / pot


def counting_ratio(v, w, alpha: float, beta: float, band: int = 40) -> float:
    """sum_n <n+v>^{-alpha} <n+w>^{-beta} <n>^{-2} over the band, divided by
    min(<v>,<w>)^{1-alpha-beta}."""
    n1, n2, n3 = sp.mode_components(band)
    br = sp.mode_bracket(band)

    def shifted(s):
        return np.sqrt(1.0 + (n1 + s[0]) ** 2 + (n2 + s[1]) ** 2 + (n3 + s[2]) ** 2)

    lhs = float(np.sum(shifted(v) ** (-alpha) * shifted(w) ** (-beta) / br ** 2))
    bound = min(np.sqrt(1.0 + np.dot(v, v)), np.sqrt(1.0 + np.dot(w, w))) ** (
        1.0 - alpha - beta
    )
    return lhs / bound


def _residual_scale(V: sp.Potential) -> float:
    """Max of |vhat - c <n>^{-beta}| <n>^{beta+1}: bounded iff the symbol has
    the algebraic tail with a one-order-better remainder."""
    if V.residual is None:
        return 0.0
    br = sp.mode_bracket(V.built_band)
    return float(np.max(np.abs(V.residual) * br ** (V.beta + 1.0)))


def inequality_probes(
    V: sp.Potential,
    lattice: sp.LatticeSpec,
    n_samples: int = 50,
    seed: int = 0,
) -> dict:
    """Max observed ratios for Visan's estimate, the counting estimate, and
    the physical potential's Fourier-asymptotics residual."""
    rng = np.random.default_rng(seed)
    visan = []
    for _ in range(n_samples):
        f = gc.sample_w_inf(lattice, rng, np.inf)
        visan.append(visan_ratio(f, V, V.beta))
    counting = []
    for m in (1, 2, 4, 8, 16, 32):
        for wv in ((0, 0, 0), (m, 0, 0), (0, -m, m)):
            counting.append(counting_ratio((m, 0, 0), wv, 0.75, 0.75))
    return {
        "visan_max_ratio": float(np.max(visan)),
        "counting_max_ratio": float(np.max(counting)),
        "counting_ratios": counting,
        "vhat_residual": _residual_scale(V),
    }


# ---------------------------------------------------------------------------
# Laplace transform Cauchy probe


def clipped_besov_functional(s: float = -0.6, cap: float = 10.0):
    def f(field: sp.SpectralField) -> float:
        return min(sp.besov_norm(field, s), cap)

    return f


def laplace_cauchy_probe(
    f_func,
    T_list,
    V: sp.Potential,
    lam: float,
    n_power: int,
    lattice: sp.LatticeSpec,
    res: int,
    n_samples: int,
    seed: int,
    cap: float = 1e6,
) -> list[dict]:
    """Self-normalized estimates of E_{mu_T}[exp(-f)] per T with stderr."""
    out = []
    for T in T_list:
        grid = gc.make_time_grid(T, res)
        lw, fv = [], []
        for i in range(n_samples):
            drv = gc.sample_driver(grid, lattice, seed, i)
            s = dr.sample_reference(drv, T, V, lam, n_power, cap=cap)
            lw.append(dr.gibbs_log_weight(s, V, lam, n_power, 0.0))
            fv.append(np.exp(-f_func(s.w_inf)))
        lw = np.array(lw)
        wts = np.exp(lw - np.max(lw))
        wts /= np.sum(wts)
        fv = np.array(fv)
        est = float(np.sum(wts * fv))
        stderr = float(np.sqrt(np.sum(wts ** 2 * (fv - est) ** 2)))
        out.append(
            {
                "T": T,
                "estimate": est,
                "stderr": stderr,
                "ess": dr.effective_sample_size(lw),
            }
        )
    return out
