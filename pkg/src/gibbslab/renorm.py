"""Renormalization data and Wick algebra for the Hartree interaction.

All constants are exact lattice sums over the band (the band limit makes the
infinite sums finite), so they serve as ground truth for every statistical
test downstream:

    a  = sum_n rho_t^T(n)^2 / <n>^2
    b  = sum_{n1,n2} vhat(n1+n2) h(n1) h(n2),      h(n) = rho_t^T(n)^2/<n>^2
    M f(n) = (sum_m vhat(n+m) h(m)) fhat(n)

Wick powers:

    :f^2:        = f^2 - a
    :(V*f^2) f:  = (V*f^2) f - a vhat(0) f - 2 M f
    int :(V*f^2) f^2: = int (V*f^2) f^2 - a int (V*f^2) - a vhat(0) int f^2
                        - 4 int (M f) f + a^2 vhat(0) + 2 b

plus Hermite powers H_n(g, sigma^2) with sigma^2 = sum_n rho_t^T(n)^2/<n>^3,
and the deterministic binomial expansions used by the drift and singularity
machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from . import spectral as sp
from .spectral import SpectralField, convolve_potential, inner, multiply


@dataclass
class RenormContext:
    """Immutable renormalization data at stochastic times (t, T)."""

    t: float
    T: float
    V: sp.Potential
    lam: float
    n_power: int
    lattice: sp.LatticeSpec
    a: float
    b: float
    m_symbol: np.ndarray  # over the band cube |n|_inf <= K
    h: np.ndarray  # rho_t^T(n)^2/<n>^2 over the band cube
    hermite_var: float

    def m_apply(self, f: SpectralField) -> SpectralField:
        if f.band > self.lattice.K:
            raise ValueError("band overflow: M symbol tabulated on the band only")
        sym = sp.restrict_coeffs(self.m_symbol, self.lattice.K, f.band)
        return SpectralField(f.coeffs * sym, f.band, f.lattice)


_context_cache: dict = {}


def _potential_key(V: sp.Potential):
    return (V.mode_tag, V.beta, V.c_beta, V.built_band)


def build_context(
    t: float,
    T: float,
    V: sp.Potential,
    lam: float,
    n_power: int,
    lattice: sp.LatticeSpec,
) -> RenormContext:
    """Exact constants; b and M via single lattice convolutions."""
    key = (float(t), float(T), _potential_key(V), lam, n_power, lattice.K, lattice.product_band)
    hit = _context_cache.get(key)
    if hit is not None:
        return hit
    K = lattice.K
    rho_sq = sp.rho_t_symbol(K, t, T) ** 2
    bracket = sp.mode_bracket(K)
    h = rho_sq / bracket ** 2
    a = float(np.sum(h))
    hh = fftconvolve(h, h)  # band 2K
    v2 = V.symbol(2 * K)
    b = float(np.sum(v2 * hh))
    # m(n) = sum_m vhat(n+m) h(m) = (vhat * h)(n) by evenness of h
    m_full = fftconvolve(v2, h)  # band 3K
    m_symbol = sp.restrict_coeffs(np.real(m_full), 3 * K, K).copy()
    hermite_var = float(np.sum(rho_sq / bracket ** 3))
    ctx = RenormContext(t, T, V, lam, n_power, lattice, a, b, m_symbol, h, hermite_var)
    if len(_context_cache) < 4096:
        _context_cache[key] = ctx
    return ctx


def build_context_brute(
    t: float, T: float, V: sp.Potential, lam: float, n_power: int, lattice: sp.LatticeSpec
) -> RenormContext:
    """Direct double-sum twin of build_context (small K only)."""
    K = lattice.K
    h = sp.rho_t_symbol(K, t, T) ** 2 / sp.mode_bracket(K) ** 2
    a = float(np.sum(h))
    v2 = V.symbol(2 * K)
    rng_idx = range(-K, K + 1)
    b = 0.0
    for i1 in rng_idx:
        for j1 in rng_idx:
            for k1 in rng_idx:
                h1 = h[i1 + K, j1 + K, k1 + K]
                if h1 == 0.0:
                    continue
                sl = v2[
                    i1 + K : i1 + 3 * K + 1,
                    j1 + K : j1 + 3 * K + 1,
                    k1 + K : k1 + 3 * K + 1,
                ]
                b += h1 * float(np.sum(sl * h))
    side = 2 * K + 1
    m_symbol = np.zeros((side,) * 3)
    for i in rng_idx:
        for j in rng_idx:
            for k in rng_idx:
                sl = v2[i + K : i + 3 * K + 1, j + K : j + 3 * K + 1, k + K : k + 3 * K + 1]
                m_symbol[i + K, j + K, k + K] = float(np.sum(sl * h[::-1, ::-1, ::-1]))
    hermite_var = float(np.sum(sp.rho_t_symbol(K, t, T) ** 2 / sp.mode_bracket(K) ** 3))
    return RenormContext(t, T, V, lam, n_power, lattice, a, b, m_symbol, h, hermite_var)


# ---------------------------------------------------------------------------
# Wick powers


def wick_square(f: SpectralField, ctx: RenormContext) -> SpectralField:
    out = multiply(f, f)
    out.coeffs[(out.band,) * 3] -= ctx.a
    return out


def wick_cubic(f: SpectralField, ctx: RenormContext, out_band: int | None = None) -> SpectralField:
    """:(V*f^2) f: = (V*f^2) f - a vhat(0) f - 2 M f."""
    vq = convolve_potential(ctx.V, multiply(f, f))
    out = multiply(vq, f, out_band=out_band)
    corr = ctx.a * ctx.V.vhat0() * f.coeffs + 2.0 * ctx.m_apply(f).coeffs
    out.coeffs[_center_slices(out.band, f.band)] -= corr
    return out


def _center_slices(big: int, small: int):
    s = big - small
    if s < 0:
        raise ValueError("correction band exceeds output band")
    return (slice(s, s + 2 * small + 1),) * 3


def wick_quartic_energy(f: SpectralField, ctx: RenormContext) -> float:
    """int :(V*f^2) f^2: dx, evaluated exactly in spectral space."""
    if f.band > ctx.lattice.K:
        raise ValueError("band overflow: quartic energy needs f within the band")
    q = multiply(f, f)  # band 2*f.band
    v = ctx.V.symbol(q.band)
    quartic = float(np.sum(v * np.abs(q.coeffs) ** 2))
    mass = float(np.sum(np.abs(f.coeffs) ** 2))
    m_sym = sp.restrict_coeffs(ctx.m_symbol, ctx.lattice.K, f.band)
    m_term = float(np.sum(m_sym * np.abs(f.coeffs) ** 2))
    v0 = ctx.V.vhat0()
    return quartic - 2.0 * ctx.a * v0 * mass - 4.0 * m_term + ctx.a ** 2 * v0 + 2.0 * ctx.b


def hermite_power(g: SpectralField, n: int, sigma_sq: float) -> SpectralField:
    """H_n(g, sigma^2) by the recurrence H_{k+1} = g H_k - k sigma^2 H_{k-1}."""
    if n < 0:
        raise ValueError("n must be >= 0")
    lattice = g.lattice
    if n * g.band > lattice.product_band:
        lattice = sp.LatticeSpec(lattice.K, product_band=n * g.band)
        g = sp.SpectralField(g.coeffs, g.band, lattice)
    h_prev = sp.constant_field(lattice, 1.0)
    if n == 0:
        return h_prev
    h_cur = g.copy()
    for k in range(1, n):
        h_next = multiply(g, h_cur) - (k * sigma_sq) * sp.pad_field(
            h_prev, h_cur.band + g.band
        )
        h_prev, h_cur = h_cur, h_next
    return h_cur


def hermite_power_grid(
    g: SpectralField, n: int, sigma_sq: float, out_band: int
) -> SpectralField:
    """Grid twin of hermite_power restricted to out_band; exact when the grid
    holds n*band(g) + out_band without wraparound into |n| <= out_band."""
    from scipy.fft import next_fast_len

    full = n * g.band
    grid = next_fast_len(max(full + out_band, 2 * g.band) + 1, real=True)
    vals = sp.field_to_grid(g, grid)
    h_prev = np.ones_like(vals)
    if n == 0:
        out = vals * 0 + 1.0
        return sp.grid_to_field(out, out_band, g.lattice)
    h_cur = vals.copy()
    for k in range(1, n):
        h_prev, h_cur = h_cur, vals * h_cur - (k * sigma_sq) * h_prev
    return sp.grid_to_field(h_cur, out_band, g.lattice)


# ---------------------------------------------------------------------------
# translated pairs and the M decomposition


def lp_symbol(band: int, N: int) -> np.ndarray:
    norms = sp.mode_norm(band)
    symb = sp.cutoff_rho(norms / sp.t_bracket(N))
    if N > 1:
        symb = symb - sp.cutoff_rho(norms / sp.t_bracket(N / 2))
    return symb


@dataclass
class CorrelationKernel:
    """c_t^T[N1,N2](y) = sum_k chi_{N1} chi_{N2} rho_t^T(k)^2/<k>^2 e^{i<k,y>}."""

    N1: int
    N2: int
    ctx: RenormContext
    weights: np.ndarray = field(init=False)

    def __post_init__(self):
        K = self.ctx.lattice.K
        self.weights = lp_symbol(K, self.N1) * lp_symbol(K, self.N2) * self.ctx.h

    def value(self, y) -> float:
        K = self.ctx.lattice.K
        n1, n2, n3 = sp.mode_components(K)
        phase = np.exp(1j * (n1 * y[0] + n2 * y[1] + n3 * y[2]))
        return float(np.real(np.sum(self.weights * phase)))


def translated_pair(
    W: SpectralField, y, N1: int, N2: int, ctx: RenormContext
) -> SpectralField:
    """:(tau_y P_{N1} W) P_{N2} W: = product - c_t^T[N1,N2](y)."""
    kern = CorrelationKernel(N1, N2, ctx)
    prod = multiply(sp.translate(sp.lp_block(W, N1), y), sp.lp_block(W, N2))
    prod.coeffs[(prod.band,) * 3] -= kern.value(y)
    return prod


def m_decomposed_symbol(ctx: RenormContext, N1: int, N2: int, band: int) -> np.ndarray:
    """M[V;N1,N2](n) = sum_k vhat(n+k) chi_{N1}(k) chi_{N2}(k) h(k)."""
    K = ctx.lattice.K
    w = lp_symbol(K, N1) * lp_symbol(K, N2) * ctx.h
    conv = fftconvolve(ctx.V.symbol(band + K), w)
    return sp.restrict_coeffs(np.real(conv), band + 2 * K, band).copy()


# ---------------------------------------------------------------------------
# binomial expansions


def cubic_shift_terms(
    W: SpectralField, f: SpectralField, ctx: RenormContext
) -> tuple[SpectralField, SpectralField, SpectralField]:
    """Degree-graded pieces of :(V*(W+f)^2)(W+f): - :(V*W^2)W:.

    term1 (linear in f):    (V*:W^2:) f + 2[(V*(W f)) W - M f]
    term2 (quadratic in f): 2 (V*(W f)) f + (V*f^2) W
    term3 (cubic in f):     (V*f^2) f
    """
    V = ctx.V
    vw2 = convolve_potential(V, wick_square(W, ctx))
    vwf = convolve_potential(V, multiply(W, f))
    vf2 = convolve_potential(V, multiply(f, f))
    b_out = max(vw2.band + f.band, vwf.band + W.band)
    term1 = sp.pad_field(multiply(vw2, f), b_out) + 2.0 * (
        sp.pad_field(multiply(vwf, W), b_out) - sp.pad_field(ctx.m_apply(f), b_out)
    )
    term2 = 2.0 * multiply(vwf, f) + multiply(vf2, W)
    term3 = multiply(vf2, f)
    return term1, term2, term3


def binomial_expand_cubic(
    W: SpectralField, f: SpectralField, ctx: RenormContext
) -> SpectralField:
    """Right side of the cubic binomial formula."""
    t1, t2, t3 = cubic_shift_terms(W, f, ctx)
    base = wick_cubic(W, ctx)
    b = max(base.band, t1.band, t2.band, t3.band)
    return (
        sp.pad_field(base, b)
        + sp.pad_field(t1, b)
        + sp.pad_field(t2, b)
        + sp.pad_field(t3, b)
    )


def binomial_expand_quartic(W: SpectralField, f: SpectralField, ctx: RenormContext) -> float:
    """Right side of the integrated quartic binomial formula."""
    V = ctx.V
    wf = multiply(W, f)
    ff = multiply(f, f)
    t1 = wick_quartic_energy(W, ctx)
    t2 = 4.0 * inner(wick_cubic(W, ctx), f)
    t3 = 2.0 * inner(convolve_potential(V, wick_square(W, ctx)), ff)
    t4 = 4.0 * (inner(convolve_potential(V, wf), wf) - inner(ctx.m_apply(f), f))
    t5 = 4.0 * inner(convolve_potential(V, ff), multiply(f, W))
    t6 = inner(convolve_potential(V, ff), ff)
    return t1 + t2 + t3 + t4 + t5 + t6
