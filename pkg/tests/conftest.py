import numpy as np
import pytest

import gibbslab.spectral as sp


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def lat3():
    return sp.LatticeSpec(3)


@pytest.fixture
def lat4():
    return sp.LatticeSpec(4)


def max_abs_diff(f: sp.SpectralField, g: sp.SpectralField) -> float:
    b = max(f.band, g.band)
    return float(np.max(np.abs(sp.pad_field(f, b).coeffs - sp.pad_field(g, b).coeffs)))


def rel_field_diff(f: sp.SpectralField, g: sp.SpectralField) -> float:
    scale = max(float(np.max(np.abs(f.coeffs))), 1e-30)
    return max_abs_diff(f, g) / scale
