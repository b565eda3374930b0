import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wgtomo import cgo as C
from wgtomo.forward import Potential
from wgtomo.lattice import ModeLattice
from wgtomo.presets import separable_bump

nonzero_eta = st.tuples(st.floats(-10, 10), st.floats(-10, 10)).filter(lambda e: np.hypot(*e) > 0.1)


@settings(max_examples=200, deadline=None)
@given(nonzero_eta, st.floats(-50, 50), st.floats(0.01, 100))
def test_zeta_identities(eta, ell, r):
    d = C.zeta_identities(eta, ell, r)
    scale = 1 + np.hypot(*eta) ** 2 + ell ** 2 / np.hypot(*eta) ** 2 + r ** 2
    for key in ("im_norm_1", "im_norm_2", "orth_1", "orth_2", "tau_1", "tau_2", "pair_xi", "pair_tau"):
        assert d[key] <= 1e-12 * scale, key
    for key in ("xi_bound_slack_1", "xi_bound_slack_2", "tau_bound_slack_1", "tau_bound_slack_2"):
        assert d[key] >= -1e-12 * scale, key


def test_zeta_closed_form():
    xi, tau = C.build_zeta((2.0, 0.0), 4.0, 3.0, 1)
    # c = (1 + 4/4)/2 = 1, perp = (0, 1)
    assert np.allclose(xi, [2.0, -3j])
    assert tau == pytest.approx(4.0 - 9.0)


@pytest.mark.parametrize("args", [((0.0, 0.0), 1.0, 1.0, 1), ((1.0, 0.0), 1.0, 0.0, 1), ((1.0, 0.0), 1.0, 1.0, 3)])
def test_zeta_rejects_bad_input(args):
    with pytest.raises(ValueError):
        C.build_zeta(*args)


@settings(max_examples=50, deadline=None)
@given(st.integers(-40, 40))
def test_split_k(k):
    k1, k2 = C.split_k(k)
    assert k1 - k2 == k
    # phase of u1 conj(u2): 4 pi^2 (k1^2 - k2^2) = beta(k) k
    assert 4 * np.pi ** 2 * (k1 ** 2 - k2 ** 2) == pytest.approx(C.beta(k) * k)


def test_r_zero():
    assert C.r_zero(1.0, 2.0) == 4.0


def test_resolvent_symbol_matches_closed_form(tiny_grid):
    g = tiny_grid
    p = C.CgoParams((1.0, 0.5), 0.3, 2.0, 1, 0.7)
    D = C.resolvent_symbol(p, g)
    a0, a1, a2, a3 = ModeLattice(g, p.theta).alpha
    kap = p.kappa
    assert kap[1] == pytest.approx(2 * np.pi)
    for idx in [(0, 0, 0, 0), (3, 1, 5, 2), (-1, -1, -1, -1)]:
        a = np.array([np.broadcast_to(x, D.shape)[idx] for x in (a0, a1, a2, a3)])
        expect = a[0] + a[1:] @ a[1:] - 2 * kap[1:] @ a[1:] + 2j * p.r * a[2]
        assert D[idx] == pytest.approx(expect, rel=1e-13)


def test_resolvent_bound_holds_on_random_coefficients(tiny_grid, rng):
    g = tiny_grid
    p = C.CgoParams((1.0, 0.5), 0.3, 2.0, 0, 0.2)
    for _ in range(10):
        c = rng.standard_normal(g.box_shape) + 1j * rng.standard_normal(g.box_shape)
        lhs, rhs = C.coefficient_bound_check(c, p, g)
        assert lhs <= rhs


def test_rotation_maps_imaginary_part(tiny_grid):
    p = C.CgoParams((1.0, 2.0), 0.3, 1.5)
    assert np.allclose(p.box_rotation @ p.xi.imag, [-p.r, 0.0], atol=1e-14)


def test_aliasing_guard(tiny_grid):
    with pytest.raises(ValueError, match="aliasing"):
        C.ResolventPlan(tiny_grid, C.CgoParams((1.0, 0.0), 0.0, 1.0, k=2))


def test_zero_potential_is_plane_wave(small_grid):
    g = small_grid
    p = C.CgoParams((2 * np.pi, 0.0), 4 * np.pi, 2.0)
    s = C.build_cgo(Potential.zero(g), p, g)
    assert s.converged and not np.any(s.w)
    assert np.allclose(s.u, p.phase(g))


def test_fixed_point_contracts_and_residual_small(small_grid):
    g = small_grid
    V = separable_bump(g, 1.0)
    r0 = C.r_zero(V.bound, C.default_c0(g))
    s = C.build_cgo(V, C.CgoParams((2 * np.pi, 0.0), 4 * np.pi, 2 * r0), g)
    assert s.converged
    assert s.contraction < 0.6
    assert s.residual < 5e-2


def test_below_r0_is_rejected(tiny_grid):
    V = separable_bump(tiny_grid, 1.0)
    with pytest.raises(ValueError, match="below r0"):
        C.fixed_point_w(V, C.CgoParams((1.0, 0.0), 0.0, 0.1), tiny_grid)


def test_w_decays_with_r(small_grid):
    from wgtomo.lattice import h2h2_waveguide_norm

    g = small_grid
    V = separable_bump(g, 1.0)
    r0 = C.r_zero(V.bound, C.default_c0(g))
    norms = [h2h2_waveguide_norm(C.fixed_point_w(V, C.CgoParams((2 * np.pi, 0.0), 0.0, r0 * f), g).w, g)
             for f in (1, 2, 4)]
    assert norms[0] > norms[1] > norms[2]
