"""Truncated Fourier lattice on the 3-torus.

Fields live on the centered mode cube |n|_inf <= band and are stored as dense
complex arrays of shape (2*band+1,)*3 indexed by n + band per axis.  The
Fourier convention is

    f(x) = sum_n fhat(n) e^{i<n,x>},   fhat(n) = int f(x) e^{-i<n,x>} dx,

with the normalized measure int_{T^3} 1 dx = 1, so Parseval identities carry
no 2*pi factors: int f g dx = sum_n fhat(n) ghat(-n).

Real fields satisfy the Hermitian symmetry fhat(-n) = conj(fhat(n)); every
operation here preserves it.  Products are exact: either full coefficient
convolution (output band = sum of input bands, no wraparound) or pointwise
multiplication on a physical grid large enough that no alias image lands back
inside the requested output band.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve


# ---------------------------------------------------------------------------
# lattice bookkeeping


@dataclass(frozen=True)
class LatticeSpec:
    """Band-limited mode lattice: |n|_inf <= K, exact products up to product_band."""

    K: int
    product_band: int = 0

    def __post_init__(self):
        if self.product_band == 0:
            # default generous enough for cubic products of band-K fields
            object.__setattr__(self, "product_band", 3 * self.K)
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.product_band < 2 * self.K:
            raise ValueError("product_band must be >= 2K")


@functools.lru_cache(maxsize=None)
def mode_components(band: int):
    """Axis mode values n_i, broadcastable to the (2b+1,)^3 cube."""
    n = np.arange(-band, band + 1)
    return (
        n.reshape(-1, 1, 1).astype(np.float64),
        n.reshape(1, -1, 1).astype(np.float64),
        n.reshape(1, 1, -1).astype(np.float64),
    )


_CACHE_BAND_LIMIT = 80  # above this, symbol cubes get large; recompute instead
_norm_cache: dict[int, np.ndarray] = {}
_bracket_cache: dict[int, np.ndarray] = {}


def mode_norm(band: int) -> np.ndarray:
    """||n||_2 over the band cube."""
    cached = _norm_cache.get(band)
    if cached is not None:
        return cached
    n1, n2, n3 = mode_components(band)
    out = np.sqrt(n1 ** 2 + n2 ** 2 + n3 ** 2)
    out.flags.writeable = False
    if band <= _CACHE_BAND_LIMIT:
        _norm_cache[band] = out
    return out


def mode_bracket(band: int) -> np.ndarray:
    """<n> = sqrt(1 + ||n||^2) over the band cube."""
    cached = _bracket_cache.get(band)
    if cached is not None:
        return cached
    out = np.sqrt(1.0 + mode_norm(band) ** 2)
    out.flags.writeable = False
    if band <= _CACHE_BAND_LIMIT:
        _bracket_cache[band] = out
    return out


def t_bracket(t: float) -> float:
    """<t> = sqrt(1 + t^2); accepts t = inf."""
    if np.isinf(t):
        return np.inf
    return float(np.sqrt(1.0 + t * t))


# ---------------------------------------------------------------------------
# smooth frequency cutoff

_LOG2 = np.log(2.0)


def cutoff_rho(y):
    """Smooth non-increasing cutoff: 1 on [0,1/4], 0 on [4,inf).

    On (1/4,4): rho(y) = (1 + cos(pi*m))/2 with m = (log2 y + 2)/4.  C^1 at
    the junctions since the cosine has vanishing slope there.
    """
    y = np.asarray(y, dtype=np.float64)
    out = np.ones_like(y)
    out[y >= 4.0] = 0.0
    mid = (y > 0.25) & (y < 4.0)
    m = (np.log2(y[mid]) + 2.0) / 4.0
    out[mid] = 0.5 * (1.0 + np.cos(np.pi * m))
    if out.ndim == 0:
        return float(out)
    return out


def cutoff_rho_prime(y):
    """d rho / dy; nonpositive, supported on (1/4, 4)."""
    y = np.asarray(y, dtype=np.float64)
    out = np.zeros_like(y)
    mid = (y > 0.25) & (y < 4.0)
    m = (np.log2(y[mid]) + 2.0) / 4.0
    out[mid] = -np.pi * np.sin(np.pi * m) / (8.0 * y[mid] * _LOG2)
    if out.ndim == 0:
        return float(out)
    return out


class CutoffProfile:
    """Bundles rho and rho' (fixed profile, no parameters)."""

    rho = staticmethod(cutoff_rho)
    rho_prime = staticmethod(cutoff_rho_prime)


def rho_t_symbol(band: int, t: float, T: float = np.inf) -> np.ndarray:
    """rho_t^T(n) = rho(||n||/<t>) * rho(||n||/<T>) over the band cube."""
    norms = mode_norm(band)
    bt = t_bracket(t)
    if np.isinf(bt):
        out = np.ones_like(norms)
    else:
        out = cutoff_rho(norms / bt)
    bT = t_bracket(T)
    if not np.isinf(bT):
        out = out * cutoff_rho(norms / bT)
    return out


def sigma_t_sq_symbol(band: int, t: float, T: float = np.inf) -> np.ndarray:
    """sigma_t^T(n)^2 = rho_T(n)^2 * d/dt rho_t(n)^2, evaluated analytically.

    d/dt rho(||n||/<t>)^2 = -2 rho(y) rho'(y) * y * t/<t>^2 with y = ||n||/<t>.
    """
    norms = mode_norm(band)
    if np.isinf(t):
        return np.zeros_like(norms)
    bt = t_bracket(t)
    y = norms / bt
    base = -2.0 * cutoff_rho(y) * cutoff_rho_prime(y) * y * (t / bt ** 2)
    bT = t_bracket(T)
    if not np.isinf(bT):
        base = base * cutoff_rho(norms / bT) ** 2
    return np.maximum(base, 0.0)


def rho_t_scalar(r: float, t: float, T: float = np.inf) -> float:
    """rho_t^T at a single mode of euclidean norm r."""
    bt = t_bracket(t)
    v = 1.0 if np.isinf(bt) else cutoff_rho(r / bt)
    bT = t_bracket(T)
    if not np.isinf(bT):
        v *= cutoff_rho(r / bT)
    return float(v)


# ---------------------------------------------------------------------------
# fields


@dataclass
class SpectralField:
    """Dense centered coefficient cube with its band limit."""

    coeffs: np.ndarray
    band: int
    lattice: LatticeSpec

    def __post_init__(self):
        side = 2 * self.band + 1
        if self.coeffs.shape != (side, side, side):
            raise ValueError("coefficient cube does not match band")
        if self.band > self.lattice.product_band:
            raise ValueError("band exceeds product_band")

    @property
    def center(self) -> int:
        return self.band

    def get(self, n) -> complex:
        i = (n[0] + self.band, n[1] + self.band, n[2] + self.band)
        return complex(self.coeffs[i])

    def copy(self) -> "SpectralField":
        return SpectralField(self.coeffs.copy(), self.band, self.lattice)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        b = max(self.band, other.band)
        return SpectralField(
            pad_coeffs(self.coeffs, self.band, b) + pad_coeffs(other.coeffs, other.band, b),
            b,
            self.lattice,
        )

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        b = max(self.band, other.band)
        return SpectralField(
            pad_coeffs(self.coeffs, self.band, b) - pad_coeffs(other.coeffs, other.band, b),
            b,
            self.lattice,
        )

    def __mul__(self, scalar) -> "SpectralField":
        return SpectralField(self.coeffs * scalar, self.band, self.lattice)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(-self.coeffs, self.band, self.lattice)


def zero_field(lattice: LatticeSpec, band: int | None = None) -> SpectralField:
    b = lattice.K if band is None else band
    side = 2 * b + 1
    return SpectralField(np.zeros((side,) * 3, dtype=np.complex128), b, lattice)


def constant_field(lattice: LatticeSpec, value: complex, band: int = 0) -> SpectralField:
    f = zero_field(lattice, band)
    f.coeffs[(band,) * 3] = value
    return f


def pad_coeffs(c: np.ndarray, band: int, new_band: int) -> np.ndarray:
    if new_band == band:
        return c
    if new_band < band:
        raise ValueError("cannot shrink with pad_coeffs")
    p = new_band - band
    return np.pad(c, p)


def restrict_coeffs(c: np.ndarray, band: int, new_band: int) -> np.ndarray:
    if new_band == band:
        return c
    if new_band > band:
        return pad_coeffs(c, band, new_band)
    s = band - new_band
    return c[s:-s, s:-s, s:-s]


def pad_field(f: SpectralField, band: int) -> SpectralField:
    return SpectralField(pad_coeffs(f.coeffs, f.band, band), band, f.lattice)


def restrict_field(f: SpectralField, band: int) -> SpectralField:
    return SpectralField(restrict_coeffs(f.coeffs, f.band, band).copy(), band, f.lattice)


def conj_reverse(c: np.ndarray) -> np.ndarray:
    """coeff array of the complex conjugate field: conj(c(-n))."""
    return np.conj(c[::-1, ::-1, ::-1])


def is_hermitian(f: SpectralField, tol: float = 1e-12) -> bool:
    scale = np.max(np.abs(f.coeffs)) or 1.0
    return bool(np.max(np.abs(f.coeffs - conj_reverse(f.coeffs))) <= tol * scale)


def hermitianize(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c + conj_reverse(c))


def random_hermitian_field(lattice: LatticeSpec, band: int, rng) -> SpectralField:
    """Complex Gaussian coefficients with exact Hermitian symmetry.

    Off-center modes: complex with E|c(n)|^2 = 1; center mode: real N(0,1).
    """
    side = 2 * band + 1
    g = rng.standard_normal((side,) * 3) + 1j * rng.standard_normal((side,) * 3)
    c = (g + conj_reverse(g)) / 2.0
    # pair averaging leaves E|c|^2 = 1 off-center and Var = 1 at the center
    return SpectralField(c.astype(np.complex128), band, lattice)


# ---------------------------------------------------------------------------
# exact products and integrals


def multiply(f: SpectralField, g: SpectralField, out_band: int | None = None) -> SpectralField:
    """Exact spectral product by full coefficient convolution (dealiased)."""
    full = f.band + g.band
    target = full if out_band is None else out_band
    if target > f.lattice.product_band:
        raise ValueError(
            f"band overflow: product band {target} exceeds product_band "
            f"{f.lattice.product_band}"
        )
    conv = fftconvolve(f.coeffs, g.coeffs)
    out = SpectralField(conv, full, f.lattice)
    if target < full:
        out = restrict_field(out, target)
    return out


def multiply_direct(f: SpectralField, g: SpectralField) -> SpectralField:
    """Brute-force convolution (O(K^6)); small-K oracle twin of multiply."""
    full = f.band + g.band
    if full > f.lattice.product_band:
        raise ValueError("band overflow")
    side = 2 * full + 1
    out = np.zeros((side,) * 3, dtype=np.complex128)
    fb, gb = f.band, g.band
    it = np.ndindex(f.coeffs.shape)
    for idx in it:
        v = f.coeffs[idx]
        if v == 0:
            continue
        sl = tuple(slice(i, i + 2 * gb + 1) for i in idx)
        out[sl] += v * g.coeffs
    return SpectralField(out, full, f.lattice)


def grid_size_for(band: int) -> int:
    """Smallest FFT-friendly grid that holds a band-limited field exactly."""
    from scipy.fft import next_fast_len

    return next_fast_len(2 * band + 1, real=True)


def field_to_grid(f: SpectralField, grid: int) -> np.ndarray:
    """Physical samples of a real (Hermitian) field on a grid^3 mesh.

    Exact when grid >= 2*band+1.  Uses the half-spectrum layout so memory
    stays real-sized.
    """
    if grid < 2 * f.band + 1:
        raise ValueError("grid too small for band")
    b = f.band
    half = np.zeros((grid, grid, grid // 2 + 1), dtype=np.complex128)
    idx = np.arange(-b, b + 1)
    wrapped = idx % grid
    # n3 >= 0 half; the n3 < 0 entries are implied by irfftn's symmetry
    half[np.ix_(wrapped, wrapped, np.arange(0, b + 1))] = f.coeffs[:, :, b:]
    return np.fft.irfftn(half, s=(grid,) * 3, axes=(0, 1, 2)) * grid ** 3


def grid_to_field(
    values: np.ndarray, band: int, lattice: LatticeSpec
) -> SpectralField:
    """Extract centered band coefficients from real physical samples.

    Exact for band-limited data when the grid holds all its modes without
    wraparound into |n|_inf <= band.
    """
    grid = values.shape[0]
    half = np.fft.rfftn(values) / grid ** 3
    b = band
    idx = np.arange(-b, b + 1)
    wrapped = idx % grid
    coeffs = np.zeros((2 * b + 1,) * 3, dtype=np.complex128)
    coeffs[:, :, b:] = half[np.ix_(wrapped, wrapped, np.arange(0, b + 1))]
    coeffs[:, :, :b] = conj_reverse(coeffs)[:, :, :b]
    return SpectralField(coeffs, band, lattice)


def multiply_grid(f: SpectralField, g: SpectralField, out_band: int | None = None) -> SpectralField:
    """FFT path: pointwise product on a physical grid, then transform back."""
    from scipy.fft import next_fast_len

    full = f.band + g.band
    target = full if out_band is None else out_band
    if target > f.lattice.product_band:
        raise ValueError("band overflow")
    # no alias image of the product may land back inside |n|_inf <= target,
    # and the grid must hold each factor's own band
    grid = next_fast_len(max(full + target, 2 * max(f.band, g.band)) + 1, real=True)
    pf = field_to_grid(f, grid)
    pg = field_to_grid(g, grid)
    return grid_to_field(pf * pg, target, f.lattice)


def integrate(f: SpectralField) -> float:
    """int f dx = Re fhat(0) under the normalized measure."""
    return float(np.real(f.coeffs[(f.band,) * 3]))


def inner(f: SpectralField, g: SpectralField) -> float:
    """int f g dx = sum_n fhat(n) ghat(-n); real for Hermitian pairs."""
    b = max(f.band, g.band)
    fc = pad_coeffs(f.coeffs, f.band, b)
    gc = pad_coeffs(g.coeffs, g.band, b)
    return float(np.real(np.sum(fc * gc[::-1, ::-1, ::-1])))


def l2_norm_sq(f: SpectralField) -> float:
    return float(np.sum(np.abs(f.coeffs) ** 2))


def sobolev_norm(f: SpectralField, s: float) -> float:
    w = mode_bracket(f.band) ** (2.0 * s)
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))


def bracket_multiplier(f: SpectralField, s: float) -> SpectralField:
    """<nabla>^s f: multiply coefficients by <n>^s."""
    return SpectralField(f.coeffs * mode_bracket(f.band) ** s, f.band, f.lattice)


def dyadic_blocks(band: int) -> list[int]:
    """Dyadic scales N whose block chi_N touches the band."""
    out = [1]
    while out[-1] < 8 * band:
        out.append(out[-1] * 2)
    return out


def project_rho(f: SpectralField, N: float) -> SpectralField:
    """Smooth projection P_{<=N}: multiply by rho_N(n) = rho(||n||/<N>)."""
    sym = cutoff_rho(mode_norm(f.band) / t_bracket(N))
    return SpectralField(f.coeffs * sym, f.band, f.lattice)


def lp_block(f: SpectralField, N: int) -> SpectralField:
    """Littlewood-Paley block: chi_1 = rho_1, chi_N = rho_N - rho_{N/2}."""
    norms = mode_norm(f.band)
    sym = cutoff_rho(norms / t_bracket(N))
    if N > 1:
        sym = sym - cutoff_rho(norms / t_bracket(N / 2))
    return SpectralField(f.coeffs * sym, f.band, f.lattice)


def besov_norm(f: SpectralField, s: float) -> float:
    """C^s norm: sup_N N^s * max over a physical grid of |P_N f|."""
    grid = grid_size_for(2 * f.band)
    best = 0.0
    for N in dyadic_blocks(f.band):
        block = lp_block(f, N)
        if not np.any(block.coeffs):
            continue
        vals = field_to_grid(block, grid)
        best = max(best, float(N ** s * np.max(np.abs(vals))))
    return best


def translate(f: SpectralField, y) -> SpectralField:
    """tau_y f (x) = f(x - y): coefficients pick up e^{-i<n,y>}."""
    n1, n2, n3 = mode_components(f.band)
    phase = np.exp(-1j * (n1 * y[0] + n2 * y[1] + n3 * y[2]))
    return SpectralField(f.coeffs * phase, f.band, f.lattice)


# ---------------------------------------------------------------------------
# interaction potential


@dataclass
class Potential:
    """Hartree interaction potential through its even positive symbol vhat."""

    beta: float
    c_beta: float
    mode_tag: str  # "fourier" or "physical"
    built_band: int
    _table: np.ndarray | None = field(default=None, repr=False)
    residual: np.ndarray | None = field(default=None, repr=False)

    def symbol(self, band: int) -> np.ndarray:
        """vhat over the centered band cube."""
        if self.mode_tag == "fourier":
            return self.c_beta * mode_bracket(band) ** (-self.beta)
        if band > self.built_band:
            raise ValueError("physical-built potential only tabulated to built_band")
        return restrict_coeffs(self._table, self.built_band, band)

    def vhat0(self) -> float:
        return float(self.symbol(0)[0, 0, 0])

    def symbol_scalar(self, bracket_val):
        """fourier-mode symbol from <n> directly (grid-sized evaluations)."""
        if self.mode_tag != "fourier":
            raise ValueError("scalar symbol only for fourier-built potentials")
        return self.c_beta * np.asarray(bracket_val) ** (-self.beta)


def make_potential(
    beta: float, c_beta: float = 1.0, K: int = 8, mode: str = "fourier"
) -> Potential:
    """Interaction potential with symbol ~ c_beta <n>^{-beta}.

    fourier mode realizes vhat(n) = c_beta <n>^{-beta} exactly.  physical mode
    periodizes c_beta |x|^{-(3-beta)} with a smooth cut and a constant shift,
    then transforms; it exists to probe the symbol asymptotics and the
    physical-space multiplier identity.
    """
    if not 0.0 < beta < 3.0:
        raise ValueError("beta must lie in (0,3)")
    if c_beta <= 0.0:
        raise ValueError("c_beta must be positive")
    built = 2 * K
    if mode == "fourier":
        return Potential(beta, c_beta, "fourier", built_band=10 ** 9)
    if mode != "physical":
        raise ValueError("mode must be 'fourier' or 'physical'")

    grid = grid_size_for(3 * built)
    x = 2.0 * np.pi * np.arange(grid) / grid
    x = np.where(x >= np.pi, x - 2.0 * np.pi, x)  # principal cell [-pi, pi)
    d = np.sqrt(
        x.reshape(-1, 1, 1) ** 2 + x.reshape(1, -1, 1) ** 2 + x.reshape(1, 1, -1) ** 2
    )
    with np.errstate(divide="ignore"):
        vals = c_beta * d ** (beta - 3.0) * cutoff_rho(d)
    # cell-averaged value at the origin (integrable singularity)
    h = 2.0 * np.pi / grid
    r_star = h * (3.0 / (4.0 * np.pi)) ** (1.0 / 3.0)
    vals[0, 0, 0] = c_beta * (3.0 / beta) * r_star ** (beta - 3.0)
    vals += c_beta  # constant shift: keeps min over the grid strictly positive
    lattice = LatticeSpec(max(K, 1), product_band=max(3 * K, built))
    fld = grid_to_field(vals, built, lattice)
    table = np.real(fld.coeffs)  # even real kernel: symbol is real
    if np.min(table) <= 0.0:
        raise ValueError("physical-built symbol failed positivity")
    # residual against the fitted c <n>^{-beta} tail
    norms = mode_norm(built)
    brackets = mode_bracket(built)
    shell = (norms >= 4.0) & (norms <= K)
    c_fit = float(np.median(table[shell] * brackets[shell] ** beta)) if np.any(shell) else c_beta
    residual = table - c_fit * brackets ** (-beta)
    residual[(built,) * 3] = 0.0
    return Potential(beta, c_beta, "physical", built_band=built, _table=table, residual=residual)


def convolve_potential(V: Potential, f: SpectralField) -> SpectralField:
    """(V * f)(n) = vhat(n) fhat(n)."""
    return SpectralField(f.coeffs * V.symbol(f.band), f.band, f.lattice)
