import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wgtomo.lattice import (
    CrossSection,
    SpaceTimeGrid,
    box_fourier_forward,
    box_fourier_inverse,
    ext_interp_matrix_1d,
    l2_norm,
    lagrange_weights,
    rotation,
)


def test_grid_rejects_non_power_of_two():
    with pytest.raises(ValueError, match="power of two"):
        SpaceTimeGrid(0.5, 24, 8, CrossSection(0.5, 6), 1.0)


def test_grid_rejects_small_box():
    with pytest.raises(ValueError, match="too small"):
        SpaceTimeGrid(0.5, 16, 8, CrossSection(0.5, 6), 0.6)


def test_cross_section_validation():
    with pytest.raises(ValueError):
        CrossSection(0.0, 8)
    with pytest.raises(ValueError):
        CrossSection(0.5, 3)


def test_quadrature_volume(tiny_grid):
    g = tiny_grid
    vol = g.q_weights.sum()
    assert vol == pytest.approx(g.T * g.x1_length * g.cross_section.area, rel=1e-14)


def test_l2_norm_of_polynomial_is_exact_for_trapezoid(tiny_grid):
    # trapezoid integrates linear functions exactly in every direction
    g = tiny_grid
    t, x1, x2, x3 = g.mesh()
    f = np.broadcast_to(1.0 + 0.0 * t + 0.0 * x1 + 0.0 * x2 + 0.0 * x3, g.q_shape)
    assert l2_norm(f, g) == pytest.approx(np.sqrt(g.T * g.cross_section.area), rel=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3.0, 3.0), st.integers(2, 6))
def test_lagrange_weights_reproduce_polynomials(u, p):
    start = np.array([int(np.floor(u)) - (p - 1) // 2])
    w = lagrange_weights(np.array([u]), start, p)[0]
    nodes = start[0] + np.arange(p)
    for deg in range(p):
        assert np.dot(w, nodes.astype(float) ** deg) == pytest.approx(u ** deg, abs=1e-9 * (1 + abs(u)) ** deg)


def test_interp_matrix_rows_sum_to_one():
    nodes = np.linspace(-0.5, 0.5, 9)
    x = np.linspace(-0.5, 0.5, 37)
    A = ext_interp_matrix_1d(nodes, x)
    assert np.allclose(np.asarray(A.sum(axis=1)).ravel(), 1.0, atol=1e-13)


def test_interp_matrix_is_exact_at_nodes():
    nodes = np.linspace(-0.5, 0.5, 9)
    A = ext_interp_matrix_1d(nodes, nodes).toarray()
    assert np.allclose(A, np.eye(9), atol=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.floats(-np.pi, np.pi))
def test_rotation_is_orthogonal(angle):
    S = rotation(angle)
    assert np.allclose(S @ S.T, np.eye(2), atol=1e-14)
    assert np.linalg.det(S) == pytest.approx(1.0)


@pytest.mark.parametrize("theta", [0.0, 0.7, np.pi])
def test_box_fourier_roundtrip(tiny_grid, rng, theta):
    g = tiny_grid
    f = rng.standard_normal(g.box_shape) + 1j * rng.standard_normal(g.box_shape)
    back = box_fourier_inverse(box_fourier_forward(f, g, theta), g, theta)
    assert np.allclose(back, f, atol=1e-12)
