import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wgtomo import forward as FW
from wgtomo.fbg import quasi_periodicity_check
from wgtomo.lattice import CrossSection, SpaceTimeGrid
from wgtomo.presets import separable_bump


def _mode(g, theta, m2, m3):
    a, L = g.cross_section.half_width, g.cross_section.side
    t, x1, x2, x3 = g.mesh()
    m = np.exp(1j * theta * x1) * np.sin(m2 * np.pi * (x2 + a) / L) * np.sin(m3 * np.pi * (x3 + a) / L)
    return np.broadcast_to(m, g.q_shape)[0].astype(complex)


def _homogeneous(g, v0, theta):
    return FW.ProbeInput.from_data(np.zeros((g.Nt + 1,) + FW.trace_faces(v0).shape, complex), v0, theta, g)


def test_potential_validation(tiny_grid):
    g = tiny_grid
    with pytest.raises(ValueError, match="real"):
        FW.Potential(1j * np.ones(g.q_shape))
    with pytest.raises(ValueError, match="non-finite"):
        FW.Potential(np.full(g.q_shape, np.nan))
    v = np.ones(g.q_shape)
    v[:, -1] = 2.0
    with pytest.raises(ValueError, match="periodic"):
        FW.Potential(v)
    with pytest.raises(ValueError, match="vanish at t"):
        FW.Potential(np.ones(g.q_shape), endpoint_zero=True)
    with pytest.raises(ValueError, match="lateral"):
        FW.Potential(np.ones(g.q_shape), lateral_zero=True)


def test_probe_rejects_incompatible_initial_state(tiny_grid):
    g = tiny_grid
    v0 = np.ones(g.q_shape[1:], complex)
    with pytest.raises(ValueError, match="incompatible"):
        FW.ProbeInput.from_data(np.zeros((g.Nt + 1,) + FW.trace_faces(v0).shape, complex), v0, 0.0, g)


@pytest.mark.parametrize("theta,c", [(0.0, 0.0), (0.4, 1.5)])
def test_eigenmode_follows_crank_nicolson_amplification(small_grid, theta, c):
    g = small_grid
    m2, m3 = 1, 2
    L = g.cross_section.side
    mode = _mode(g, theta, m2, m3)
    v = FW.solve_fiber_ibvp(FW.Potential(np.full(g.q_shape, c)), _homogeneous(g, mode, theta), g)
    I = (slice(None, -1), slice(1, -1), slice(1, -1))
    amp = np.vdot(mode[I], v[-1][I]) / np.vdot(mode[I], mode[I])
    # the Laplacian is spectral in every direction, so the eigenvalue is exact
    lam = theta ** 2 + c + (np.pi / L) ** 2 * (m2 ** 2 + m3 ** 2)
    cn = ((1 - 0.5j * lam * g.dt) / (1 + 0.5j * lam * g.dt)) ** g.Nt
    assert abs(amp - cn) < 1e-9


def test_norm_conservation_real_potential(small_grid, rng):
    g = small_grid
    theta = 0.3
    v0 = np.zeros(g.q_shape[1:], complex)
    v0[:, 1:-1, 1:-1] = rng.standard_normal(v0[:, 1:-1, 1:-1].shape)
    v0[-1] = np.exp(1j * theta) * v0[0]
    _, norms = FW.solve_fiber_ibvp(separable_bump(g, 2.0), _homogeneous(g, v0, theta), g, record_norms=True)
    assert np.abs(norms / norms[0] - 1).max() < 1e-10


def test_solution_is_quasi_periodic(tiny_grid, rng):
    g = tiny_grid
    theta = 1.1
    v0 = _mode(g, theta, 1, 1)
    v = FW.solve_fiber_ibvp(separable_bump(g, 1.0), _homogeneous(g, v0, theta), g)
    assert quasi_periodicity_check(v, theta) < 1e-12


def test_dirichlet_data_is_imposed(tiny_grid):
    g = tiny_grid
    t, x1, x2, x3 = g.mesh()
    W = np.broadcast_to((1 + t) * np.exp(1j * (x2 + 2 * x3)) * (2 + np.cos(2 * np.pi * x1)), g.q_shape).astype(complex)
    v = FW.solve_fiber_ibvp(FW.Potential.zero(g), FW.ProbeInput.from_field(W, g, 0.0), g)
    assert np.allclose(FW.trace_faces(v), FW.trace_faces(W), atol=1e-13)


def test_neumann_trace_fourth_order():
    errs = []
    for n in (8, 16, 32):
        g = SpaceTimeGrid(0.5, 2, 2, CrossSection(0.5, n), 1.0, 4, 4, 4)
        t, x1, x2, x3 = g.mesh()
        v = np.broadcast_to(np.exp(x2) * np.cos(x3), g.q_shape).astype(complex)
        dn = FW.neumann_trace(v, g)
        # outward derivative on the face x2 = +a is d/dx2
        xi = g.xp[1:-1]
        exact = np.exp(0.5) * np.cos(xi)
        errs.append(np.abs(dn[0, 0, 1] - exact).max())
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert rates.min() > 3.5


def test_boundary_operator_is_linear(tiny_grid, rng):
    g = tiny_grid
    V = separable_bump(g, 1.0)
    t, x1, x2, x3 = g.mesh()
    W1 = np.broadcast_to((1 + t) * np.exp(1j * x2), g.q_shape).astype(complex)
    W2 = np.broadcast_to(np.cos(t) * np.exp(1j * (x3 - x2)) * np.cos(2 * np.pi * x1), g.q_shape).astype(complex)
    p1, p2 = FW.ProbeInput.from_field(W1, g, 0.0), FW.ProbeInput.from_field(W2, g, 0.0)
    a = 0.3 - 0.7j
    d12 = FW.boundary_operator(V, p1 + p2.scaled(a), g)
    d1, d2 = FW.boundary_operator(V, p1, g), FW.boundary_operator(V, p2, g)
    assert np.allclose(d12.neumann, d1.neumann + a * d2.neumann, atol=1e-10)
    assert np.allclose(d12.final, d1.final + a * d2.final, atol=1e-10)


def test_operator_norm_estimate(tiny_grid):
    g = tiny_grid
    V = separable_bump(g, 1.0)
    probe = FW.ProbeInput.from_field(np.broadcast_to(_mode(g, 0.0, 1, 1), g.q_shape).copy(), g, 0.0)
    assert FW.operator_norm_estimate(V, V, 0.0, [probe], g) == 0.0
    assert FW.operator_norm_estimate(V, separable_bump(g, 2.0), 0.0, [probe], g) > 0.0
    with pytest.raises(ValueError, match="empty"):
        FW.operator_norm_estimate(V, V, 0.0, [], g)
    with pytest.raises(ValueError, match="angle"):
        FW.operator_norm_estimate(V, V, 0.5, [probe], g)


@settings(max_examples=10, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(0.0, 3.0))
def test_norm_conservation_property(theta, amp):
    g = SpaceTimeGrid(0.5, 8, 4, CrossSection(0.5, 4), 1.0, 16, 16, 16)
    v0 = _mode(g, theta, 1, 2) + 0.5 * _mode(g, theta, 2, 1)
    _, norms = FW.solve_fiber_ibvp(separable_bump(g, amp), _homogeneous(g, v0, theta), g, record_norms=True)
    assert np.abs(norms / norms[0] - 1).max() < 1e-10
