"""Potential preset library.

Every preset declares which structural properties it has (``periodic``,
``endpoint_zero``, ``lateral_zero``); :class:`~wgtomo.forward.Potential`
checks them sample-wise on construction.  Presets meant as differences
(``separable_bump``, ``random_bandlimited``) vanish at ``t = 0, T`` and on the
lateral boundary by construction.
"""

from __future__ import annotations

import numpy as np

from .forward import Potential
from .lattice import SpaceTimeGrid

PRESETS = ("zero", "constant", "separable_bump", "random_bandlimited")


class PresetError(ValueError):
    pass


def _lateral_sine(x, grid: SpaceTimeGrid, power: int = 2):
    a, L = grid.cross_section.half_width, grid.cross_section.side
    return np.sin(np.pi * (x + a) / L) ** power


def _time_bump(t, T):
    return t ** 2 * (T - t) ** 2 / (T / 2) ** 4  # max 1 at T/2


def zero(grid: SpaceTimeGrid) -> Potential:
    return Potential(np.zeros(grid.q_shape), True, True, True, name="zero")


def constant(grid: SpaceTimeGrid, value: float = 1.0) -> Potential:
    flag = value == 0
    return Potential(np.full(grid.q_shape, float(value)), True, flag, flag, name="constant")


def separable_bump(
    grid: SpaceTimeGrid, amplitude: float = 1.0, x1_modulation: float = 0.5, lateral_power: int = 2
) -> Potential:
    """``a t^2 (T-t)^2 / (T/2)^4 * sin^p(pi (x2+a)/L) sin^p(pi (x3+a)/L) * (1 + m cos 2 pi x1) / (1 + |m|)``.

    The normalisations keep ``max |V| <= |amplitude|``.
    """
    if lateral_power < 1:
        raise PresetError("lateral_power must be at least 1")
    t, x1, x2, x3 = grid.mesh()
    v = (
        amplitude
        * _time_bump(t, grid.T)
        * _lateral_sine(x2, grid, lateral_power)
        * _lateral_sine(x3, grid, lateral_power)
        * (1.0 + x1_modulation * np.cos(2.0 * np.pi * x1 / grid.x1_length))
        / (1.0 + abs(x1_modulation))
    )
    return Potential(np.broadcast_to(v, grid.q_shape).copy(), True, True, True, name="separable_bump")


def lattice_mode(grid: SpaceTimeGrid, j: int, k: int, m2: int, m3: int, phase: float = 0.0) -> np.ndarray:
    """Real separable field ``sin(2 pi j t/T) cos(2 pi k x1 + phase) sin(2 pi m2 (x2+a)/L) sin(2 pi m3 (x3+a)/L)``.

    Each factor is a combination of two frequencies of the recovery lattice,
    and the field vanishes at ``t = 0, T`` and on the lateral boundary.
    """
    if j < 1 or m2 < 1 or m3 < 1:
        raise PresetError("lattice modes need j, m2, m3 >= 1")
    t, x1, x2, x3 = grid.mesh()
    a, L = grid.cross_section.half_width, grid.cross_section.side
    v = (
        np.sin(2.0 * np.pi * j * t / grid.T)
        * np.cos(2.0 * np.pi * k * x1 / grid.x1_length + phase)
        * np.sin(2.0 * np.pi * m2 * (x2 + a) / L)
        * np.sin(2.0 * np.pi * m3 * (x3 + a) / L)
    )
    v = np.broadcast_to(v, grid.q_shape).copy()
    # exact zeros on the constrained faces (sin(pi n) is only ~1e-16)
    v[[0, -1]] = 0.0
    v[..., [0, -1], :] = 0.0
    v[..., :, [0, -1]] = 0.0
    return v


def random_bandlimited(
    grid: SpaceTimeGrid,
    amplitude: float = 1.0,
    seed: int = 0,
    j_max: int = 1,
    k_max: int = 0,
    m_max: int = 1,
    k_step: int = 1,
) -> Potential:
    """Random real combination of :func:`lattice_mode` fields, scaled to ``max |V| = amplitude``.

    ``k`` runs over ``0, k_step, ..., k_max``; ``k_step = 2`` keeps only even
    longitudinal modes (whose probe frequency is not shifted).
    """
    rng = np.random.default_rng(seed)
    v = np.zeros(grid.q_shape)
    for j in range(1, j_max + 1):
        for k in range(0, k_max + 1, max(k_step, 1)):
            for m2 in range(1, m_max + 1):
                for m3 in range(1, m_max + 1):
                    c, ph = rng.standard_normal(), rng.uniform(0.0, 2.0 * np.pi)
                    v += c * lattice_mode(grid, j, k, m2, m3, ph if k else 0.0)
    peak = np.abs(v).max()
    if peak > 0:
        v *= amplitude / peak
    return Potential(v, True, True, True, name="random_bandlimited")


_BUILDERS = {
    "zero": zero,
    "constant": constant,
    "separable_bump": separable_bump,
    "random_bandlimited": random_bandlimited,
}


def preset_potential(name: str, params: dict | None, grid: SpaceTimeGrid, bound: float | None = None) -> Potential:
    """Build a preset and enforce the a priori bound ``max |V| <= bound``."""
    try:
        build = _BUILDERS[name]
    except KeyError:
        raise PresetError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    try:
        V = build(grid, **(params or {}))
    except TypeError as exc:
        raise PresetError(f"bad parameters for preset {name!r}: {exc}") from None
    if bound is not None and V.bound > bound * (1 + 1e-12):
        raise PresetError(f"preset {name!r} has max |V| = {V.bound:.6g} above the bound M = {bound:.6g}")
    return V


__all__ = [
    "PRESETS",
    "PresetError",
    "constant",
    "lattice_mode",
    "preset_potential",
    "random_bandlimited",
    "separable_bump",
    "zero",
]
