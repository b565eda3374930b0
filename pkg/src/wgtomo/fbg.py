"""Partial Floquet-Bloch-Gel'fand transform on a cylinder of ``K`` cells.

A field sampled on ``K`` cells (``K * Nx1 + 1`` points along ``x1``) is split
into ``K`` fibers living on one cell, fiber ``m`` carrying the angle
``theta_m = 2 pi m / K``.  The transform is a DFT across the cell index, so
unitarity and inversion hold to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def fiber_angles(K: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(K) / K


@dataclass
class FiberedField:
    """Fibers stacked on axis 0: ``fibers[m]`` is the fiber with angle ``theta_m``."""

    fibers: np.ndarray  # (K, Nt+1, Nx1+1, ...)

    @property
    def K(self) -> int:
        return self.fibers.shape[0]

    @property
    def thetas(self) -> np.ndarray:
        return fiber_angles(self.K)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.K, 1.0 / self.K)

    def __getitem__(self, m: int) -> np.ndarray:
        return self.fibers[m]


def _cells(f: np.ndarray, K: int) -> np.ndarray:
    """View a cylinder field as ``(K, Nt+1, Nx1+1, ...)`` cell blocks (shared endpoints)."""
    n_x1 = f.shape[1] - 1
    if n_x1 % K:
        raise ValueError(f"x1 extent {n_x1} is not divisible by K={K}")
    N1 = n_x1 // K
    idx = np.arange(K)[:, None] * N1 + np.arange(N1 + 1)[None, :]
    return np.moveaxis(f[:, idx], 1, 0)


def fbg_forward(f: np.ndarray, K: int) -> FiberedField:
    """``f_check_theta(x1) = sum_k exp(-i k theta) f(x1 + k)`` for ``x1`` in one cell.

    ``f`` has layout ``(Nt+1, K*Nx1+1, ...)``; the last ``x1`` sample of the
    cylinder closes the last cell.  Data are taken as supported on the ``K``
    cells, so the endpoint sample of fiber ``m`` is built from the periodic
    wrap of the cylinder (``f(K) = f(0)``), which makes every fiber exactly
    quasi-periodic.
    """
    f = np.asarray(f)
    if f.ndim < 2:
        raise ValueError("field must have at least (t, x1) axes")
    if K < 1:
        raise ValueError("K must be positive")
    cells = _cells(f, K).astype(complex)
    # the right end of cell k coincides with the left end of cell k+1 (mod K)
    cells[:, :, -1] = np.roll(cells[:, :, 0], -1, axis=0)
    # DFT across the cell index with exp(-i k theta_m), theta_m = 2 pi m / K
    return FiberedField(np.fft.fft(cells, axis=0))


def fbg_inverse(F: FiberedField) -> np.ndarray:
    """Adjoint/inverse: cell ``k`` is ``(1/K) sum_m exp(i k theta_m) F_m``."""
    fib = np.asarray(F.fibers)
    K = fib.shape[0]
    cells = np.fft.ifft(fib, axis=0)
    N1 = fib.shape[2] - 1
    out = np.empty((fib.shape[1], K * N1 + 1) + fib.shape[3:], dtype=complex)
    for k in range(K):
        out[:, k * N1:(k + 1) * N1] = cells[k, :, :N1]
    out[:, K * N1] = cells[K - 1, :, N1]
    return out


def cylinder_norm(f: np.ndarray, K: int, cell_norm) -> float:
    """``sqrt(sum_k ||f|cell_k||^2)`` with a caller-supplied single-cell norm."""
    return float(np.sqrt(sum(cell_norm(c) ** 2 for c in _cells(np.asarray(f), K))))


def fibered_norm(F: FiberedField, cell_norm) -> float:
    """``sqrt((1/K) sum_m ||F_m||^2)``, the direct-integral norm on the uniform rule."""
    return float(np.sqrt(np.sum(F.weights * np.array([cell_norm(F[m]) ** 2 for m in range(F.K)]))))


def quasi_periodicity_check(v: np.ndarray, theta: float) -> float:
    """``||v(., 1, .) - exp(i theta) v(., 0, .)|| / ||v||`` on the wrap-around slices."""
    v = np.asarray(v)
    ref = np.linalg.norm(v[:, :-1]) / np.sqrt(max(v.shape[1] - 1, 1))
    if ref == 0:
        return 0.0
    return float(np.linalg.norm(v[:, -1] - np.exp(1j * theta) * v[:, 0]) / ref)


__all__ = [
    "FiberedField",
    "fiber_angles",
    "fbg_forward",
    "fbg_inverse",
    "cylinder_norm",
    "fibered_norm",
    "quasi_periodicity_check",
]
