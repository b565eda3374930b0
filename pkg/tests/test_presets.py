import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wgtomo.lattice import CrossSection, SpaceTimeGrid
from wgtomo.presets import PRESETS, PresetError, lattice_mode, preset_potential, random_bandlimited, separable_bump

G = SpaceTimeGrid(0.5, 8, 4, CrossSection(0.5, 6), 1.0, 16, 16, 16)


def test_zero_preset():
    V = preset_potential("zero", {}, G)
    assert not np.any(V.values)
    assert V.periodic_ok and V.endpoint_zero and V.lateral_zero


def test_constant_preset_flags():
    V = preset_potential("constant", {"value": 2.0}, G)
    assert np.all(V.values == 2.0)
    assert not V.endpoint_zero


@settings(max_examples=30, deadline=None)
@given(st.floats(-20, 20), st.floats(-1, 1), st.integers(1, 4))
def test_separable_bump_bounded_and_flagged(amp, mod, power):
    V = separable_bump(G, amp, mod, power)
    assert V.bound <= abs(amp) * (1 + 1e-12)
    assert np.abs(V.values[[0, -1]]).max() <= 1e-12 * (1 + abs(amp))


def test_bump_reaches_its_amplitude_on_an_odd_grid():
    g = SpaceTimeGrid(0.5, 8, 4, CrossSection(0.5, 7), 1.0, 16, 16, 16)
    assert separable_bump(g, 3.0, 0.0).bound == pytest.approx(3.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 5.0))
def test_random_bandlimited_deterministic_and_scaled(seed, amp):
    a = random_bandlimited(G, amp, seed=seed, m_max=2)
    b = random_bandlimited(G, amp, seed=seed, m_max=2)
    assert np.array_equal(a.values, b.values)
    assert a.bound == pytest.approx(amp)


def test_lattice_mode_exact_zeros():
    v = lattice_mode(G, 1, 1, 1, 2, 0.3)
    assert np.all(v[[0, -1]] == 0) and np.all(v[..., [0, -1], :] == 0) and np.all(v[..., :, [0, -1]] == 0)
    with pytest.raises(PresetError):
        lattice_mode(G, 0, 0, 1, 1)


def test_unknown_preset_and_bad_params():
    with pytest.raises(PresetError, match="unknown preset"):
        preset_potential("gaussian", {}, G)
    with pytest.raises(PresetError, match="bad parameters"):
        preset_potential("separable_bump", {"width": 1.0}, G)


def test_bound_enforced():
    with pytest.raises(PresetError, match="above the bound"):
        preset_potential("constant", {"value": 11.0}, G, bound=10.0)
    assert preset_potential("constant", {"value": 10.0}, G, bound=10.0).bound == 10.0


def test_preset_catalogue():
    assert set(PRESETS) == {"zero", "constant", "separable_bump", "random_bandlimited"}
