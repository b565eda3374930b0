import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wgtomo import fbg as F
from wgtomo.lattice import l2_norm


def _periodic_field(g, K, rng):
    gc = g.with_cells(K)
    f = rng.standard_normal(gc.q_shape) + 1j * rng.standard_normal(gc.q_shape)
    f[:, -1] = f[:, 0]
    return f


@pytest.mark.parametrize("K", [1, 2, 4, 8, 16])
def test_norm_and_roundtrip(tiny_grid, rng, K):
    f = _periodic_field(tiny_grid, K, rng)
    Ff = F.fbg_forward(f, K)
    n_cyl = F.cylinder_norm(f, K, lambda c: l2_norm(c, tiny_grid))
    n_fib = F.fibered_norm(Ff, lambda c: l2_norm(c, tiny_grid))
    assert n_fib == pytest.approx(n_cyl, rel=1e-12)
    assert np.allclose(F.fbg_inverse(Ff), f, atol=1e-12)


def test_fibers_are_quasi_periodic(tiny_grid, rng):
    K = 4
    Ff = F.fbg_forward(_periodic_field(tiny_grid, K, rng), K)
    for m, th in enumerate(Ff.thetas):
        assert F.quasi_periodicity_check(Ff[m], th) < 1e-12


def test_single_cell_support_gives_identical_fibers(tiny_grid, rng):
    K = 4
    g = tiny_grid
    f = np.zeros(g.with_cells(K).q_shape, complex)
    f[:, 1:g.Nx1] = rng.standard_normal(f[:, 1:g.Nx1].shape)
    Ff = F.fbg_forward(f, K)
    for m in range(K):
        assert np.allclose(Ff[m][:, 1:g.Nx1], f[:, 1:g.Nx1])


def test_angles_and_weights():
    assert np.allclose(F.fiber_angles(4), [0, np.pi / 2, np.pi, 3 * np.pi / 2])
    Ff = F.FiberedField(np.zeros((8, 2, 3)))
    assert Ff.weights.sum() == pytest.approx(1.0)


def test_bad_inputs():
    with pytest.raises(ValueError):
        F.fbg_forward(np.zeros((3, 10)), 4)
    with pytest.raises(ValueError):
        F.fbg_forward(np.zeros((3, 9)), 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_plancherel_property(K, N1, seed):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((3, K * N1 + 1, 2)) + 1j * rng.standard_normal((3, K * N1 + 1, 2))
    f[:, -1] = f[:, 0]
    Ff = F.fbg_forward(f, K)
    norm = lambda c: float(np.linalg.norm(c[:, :-1]))  # noqa: E731
    assert F.fibered_norm(Ff, norm) == pytest.approx(F.cylinder_norm(f, K, norm), rel=1e-12)
    assert np.allclose(F.fbg_inverse(Ff), f, atol=1e-12)
