import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgllab.grid import (
    Field,
    Grid,
    SpectralField,
    dealias_mask,
    hdot1_norm,
    l2_norm,
    laplacian,
    lp_norm,
    make_grid,
    to_physical,
    to_spectral,
    zero_mode,
)

from conftest import random_field_values


def plane_wave(grid, m=1):
    x1 = grid.coords()[0]
    return Field(grid, np.broadcast_to(np.exp(2j * np.pi * m * x1 / grid.L), grid.shape))


@pytest.mark.parametrize("d,N,L", [(2, 8, 1.0), (5, 8, 1.0), (3, 12, 1.0), (3, 4, 1.0), (3, 8, 0.0), (3, 8, -1.0)])
def test_make_grid_rejects_bad_input(d, N, L):
    with pytest.raises(ValueError):
        make_grid(d, N, L)


def test_power_of_two_message():
    with pytest.raises(ValueError, match="power of two"):
        make_grid(3, 12, 1.0)


def test_integer_frequencies_when_L_is_2pi():
    g = make_grid(3, 8, 2 * math.pi)
    assert sorted(g.wavenumbers.round(12)) == list(range(-4, 4))
    assert g.size == 8**3


def test_smallest_frequency_d4():
    g = make_grid(4, 32, 40.0)
    k = np.sqrt(g.k2)
    assert np.min(k[k > 0]) == pytest.approx(2 * math.pi / 40, rel=1e-14)
    assert math.isclose(2 * math.pi / 40, 0.15708, rel_tol=1e-4)
    assert np.count_nonzero(g.mode_sq == 0) == 1


def test_constant_has_only_zero_mode(small3):
    F = to_spectral(Field(small3, np.ones(small3.shape)))
    assert abs(F.coeffs.flat[0]) == pytest.approx(small3.volume)
    assert np.max(np.abs(F.coeffs.ravel()[1:])) < 1e-12 * small3.volume


def test_plane_wave_single_coefficient(small3):
    F = to_spectral(plane_wave(small3)).coeffs
    nz = np.argwhere(np.abs(F) > 1e-9 * np.abs(F).max())
    assert nz.tolist() == [[1, 0, 0]]


def test_round_trip_and_parseval(grid3, rng):
    f = Field(grid3, random_field_values(grid3, rng))
    F = to_spectral(f)
    back = to_physical(F)
    assert np.linalg.norm(back.values - f.values) / np.linalg.norm(f.values) < 1e-12
    assert F.l2_norm() == pytest.approx(l2_norm(f), rel=1e-12)


def test_gaussian_transform_matches_continuum():
    g = Grid(3, 64, 20.0)  # fine enough that sampling aliases are below 1e-10
    f = Field(g, np.exp(-g.radius() ** 2))
    F = to_spectral(f)
    # continuum transform of exp(-|x|^2) is pi^{3/2} exp(-|xi|^2/4), real and positive
    exact = math.pi**1.5 * np.exp(-g.k2 / 4)
    assert np.max(np.abs(F.coeffs - exact)) < 1e-10


def test_hdot1_plane_wave(small3):
    f = plane_wave(small3)
    assert hdot1_norm(f) == pytest.approx(l2_norm(f), rel=1e-12)
    assert hdot1_norm(Field(small3, np.full(small3.shape, 2.0))) == 0.0


def test_laplacian_eigenfunction(small3):
    f = plane_wave(small3)
    assert np.max(np.abs(laplacian(f).values + f.values)) < 1e-12
    assert np.max(np.abs(laplacian(Field(small3, np.ones(small3.shape))).values)) < 1e-12


def test_lp_norms(small3):
    one = Field(small3, np.ones(small3.shape))
    assert lp_norm(one, 2) == pytest.approx(math.sqrt(small3.volume), rel=1e-13)
    assert lp_norm(one, 6) == pytest.approx(small3.volume ** (1 / 6), rel=1e-13)
    with pytest.raises(ValueError):
        lp_norm(one, 0.5)


def test_h1_norm_from_multiplier(grid3, rng):
    f = Field(grid3, random_field_values(grid3, rng))
    fh = np.fft.fftn(f.values)
    h1sq = np.sum((1 + grid3.k2) * np.abs(fh) ** 2) * grid3.cell_volume / grid3.size
    assert hdot1_norm(f) ** 2 + l2_norm(f) ** 2 == pytest.approx(h1sq, rel=1e-12)


def test_laplacian_self_adjoint(rng):
    g = Grid(3, 32, 10.0)
    f = Field(g, random_field_values(g, rng))
    h = Field(g, random_field_values(g, rng))
    lhs = np.vdot(laplacian(f).values, h.values)
    rhs = np.vdot(f.values, laplacian(h).values)
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_dealias_mask():
    g = Grid(3, 32, 1.0)
    m = dealias_mask(g)
    assert m.sum() == 21**3  # |m_j| <= 10 on each axis
    assert m.flat[0]


def test_zero_mode(small3):
    assert zero_mode(Field(small3, np.full(small3.shape, 0.5 + 0.25j))) == pytest.approx(0.5 + 0.25j)


def test_shape_mismatch(small3):
    with pytest.raises(ValueError):
        Field(small3, np.zeros((4, 4, 4)))
    with pytest.raises(ValueError):
        SpectralField(small3, np.zeros((4, 4, 4)))
    with pytest.raises(ValueError):
        Field(small3, np.zeros(small3.shape)) + Field(Grid(3, 16, 1.0), np.zeros(small3.shape))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shift=st.tuples(*[st.integers(-8, 8)] * 3), theta=st.floats(0, 2 * math.pi))
def test_translation_and_phase_leave_norms_unchanged(seed, shift, theta):
    g = Grid(3, 16, 7.0)
    rng = np.random.default_rng(seed)
    f = Field(g, random_field_values(g, rng))
    moved = Field(g, np.roll(f.values, shift, axis=(0, 1, 2)))
    assert l2_norm(moved) == pytest.approx(l2_norm(f), rel=1e-13)
    assert hdot1_norm(moved) == pytest.approx(hdot1_norm(f), rel=1e-12)
    assert lp_norm(moved, 6) == pytest.approx(lp_norm(f, 6), rel=1e-13)
    rotated = f * np.exp(1j * theta)
    assert hdot1_norm(rotated) == pytest.approx(hdot1_norm(f), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.sampled_from([3, 4]))
def test_parseval_random(seed, d):
    g = Grid(d, 8, 3.0)
    f = Field(g, random_field_values(g, np.random.default_rng(seed)))
    F = to_spectral(f)
    assert F.l2_norm() == pytest.approx(l2_norm(f), rel=1e-12)
    assert np.allclose(to_physical(F).values, f.values, rtol=0, atol=1e-12 * np.abs(f.values).max())
