"""Fibered IBVP solver and the reduced boundary operator.

Crank-Nicolson in time.  In space the operator is diagonal in the product
basis ``exp(i (theta + 2 pi m) x1 / P) * sin(p pi (x2/L + 1/2)) sin(q pi (x3/L + 1/2))``;
the potential couples modes and is handled by preconditioned GMRES.
Lateral Dirichlet data are lifted by the exact harmonic extension (per time
and ``x1`` slice) of the sine interpolant of the face data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres

from .lattice import SpaceTimeGrid, append_x1_endpoint, h2h2_waveguide_norm, l2_norm


class SolverError(RuntimeError):
    """The inner linear solve did not reach its tolerance."""


@dataclass
class Potential:
    """Real potential sampled on the waveguide layout of one cell."""

    values: np.ndarray
    periodic_ok: bool = True
    endpoint_zero: bool = False
    lateral_zero: bool = False
    name: str = ""

    def __post_init__(self):
        v = np.asarray(self.values)
        if np.iscomplexobj(v):
            if np.abs(v.imag).max(initial=0.0) > 0:
                raise ValueError("potential must be real")
            v = v.real
        if not np.all(np.isfinite(v)):
            raise ValueError("potential has non-finite samples")
        self.values = v.astype(float)
        if self.periodic_ok and not np.allclose(self.values[:, -1], self.values[:, 0], atol=1e-12):
            raise ValueError("potential is not 1-periodic in x1")
        if self.endpoint_zero and (np.abs(self.values[[0, -1]]).max() > 1e-12):
            raise ValueError("potential does not vanish at t = 0 and t = T")
        if self.lateral_zero:
            v = self.values
            ring = max(np.abs(v[..., 0, :]).max(), np.abs(v[..., -1, :]).max(),
                       np.abs(v[..., :, 0]).max(), np.abs(v[..., :, -1]).max())
            if ring > 1e-12:
                raise ValueError("potential does not vanish on the lateral boundary")

    @property
    def bound(self) -> float:
        """Max-norm proxy ``M`` for the a priori bound."""
        return float(np.abs(self.values).max(initial=0.0))

    @classmethod
    def zero(cls, grid: SpaceTimeGrid) -> "Potential":
        return cls(np.zeros(grid.q_shape), True, True, True, name="zero")

    def __sub__(self, other: "Potential") -> np.ndarray:
        return self.values - other.values


def trace_faces(field: np.ndarray) -> np.ndarray:
    """Face values of a waveguide field, shape ``(..., 4, n + 2)``."""
    return np.stack(
        [field[..., 0, :], field[..., -1, :], field[..., :, 0], field[..., :, -1]], axis=-2
    )


@dataclass
class ProbeInput:
    """Dirichlet face data, initial state, fiber angle and declared norm."""

    dirichlet: np.ndarray  # (Nt+1, Nx1+1, 4, n+2)
    v0: np.ndarray  # (Nx1+1, n+2, n+2)
    theta: float
    norm: float
    norm_kind: str = "trace"

    def __post_init__(self):
        if not np.allclose(trace_faces(self.v0), self.dirichlet[0], atol=1e-9 * (1 + np.abs(self.v0).max())):
            raise ValueError("v0 and lateral data are incompatible at t = 0")

    @classmethod
    def from_field(cls, W: np.ndarray, grid: SpaceTimeGrid, theta: float) -> "ProbeInput":
        """Probe ``(W|Sigma, W(0))`` with norm taken from the lifting field ``W``."""
        return cls(trace_faces(W), W[0].copy(), theta, h2h2_waveguide_norm(W, grid, theta), "lifting")

    @classmethod
    def from_data(cls, dirichlet, v0, theta, grid: SpaceTimeGrid) -> "ProbeInput":
        norm = np.hypot(lateral_l2(dirichlet, grid), l2_norm(v0[None], _slice_grid(grid)))
        return cls(dirichlet, v0, theta, float(norm), "trace")

    def scaled(self, a: complex) -> "ProbeInput":
        return ProbeInput(a * self.dirichlet, a * self.v0, self.theta, abs(a) * self.norm, self.norm_kind)

    def __add__(self, other: "ProbeInput") -> "ProbeInput":
        return ProbeInput(self.dirichlet + other.dirichlet, self.v0 + other.v0, self.theta,
                          self.norm + other.norm, self.norm_kind)

    @classmethod
    def zero(cls, grid: SpaceTimeGrid, theta: float = 0.0) -> "ProbeInput":
        Nt1, N1, m, _ = grid.q_shape
        return cls(np.zeros((Nt1, N1, 4, m), complex), np.zeros((N1, m, m), complex), theta, 0.0)


@dataclass
class BoundaryData:
    neumann: np.ndarray  # (Nt+1, Nx1+1, 4, n) at the interior face nodes
    final: np.ndarray  # (Nx1+1, n+2, n+2)

    def __sub__(self, other):
        return BoundaryData(self.neumann - other.neumann, self.final - other.final)

    def norm(self, grid: SpaceTimeGrid) -> float:
        """Discrete ``L2(Sigma) x L2(Omega')`` norm."""
        return float(np.hypot(neumann_l2(self.neumann, grid), l2_norm(self.final[None], _slice_grid(grid))))


class _SliceGrid:
    """Weights for a single time slice of the waveguide layout."""

    def __init__(self, grid):
        wp = grid.cross_section.weights
        self.q_weights = grid.x1_weights[None, :, None, None] * wp[None, None, :, None] * wp[None, None, None, :]


def _slice_grid(grid):
    return _SliceGrid(grid)


def lateral_l2(dirichlet, grid):
    h = grid.cross_section.h
    w = grid.t_weights[:, None, None, None] * grid.x1_weights[None, :, None, None] * h
    return float(np.sqrt(np.sum(w * np.abs(dirichlet[..., 1:-1]) ** 2)))


def neumann_l2(neumann, grid):
    h = grid.cross_section.h
    w = grid.t_weights[:, None, None, None] * grid.x1_weights[None, :, None, None] * h
    return float(np.sqrt(np.sum(w * np.abs(neumann) ** 2)))


def lateral_inner(a, b, grid):
    """``int_{Sigma} a conj(b)`` for face arrays on interior face nodes."""
    h = grid.cross_section.h
    w = grid.t_weights[:, None, None, None] * grid.x1_weights[None, :, None, None] * h
    return complex(np.sum(w * a * np.conj(b)))


def final_inner(a, b, grid):
    return complex(np.sum(_slice_grid(grid).q_weights[0] * a * np.conj(b)))


# ---------------------------------------------------------------------------
# spectral machinery


class FiberOperator:
    """Diagonal ``-Delta`` on interior nodes with quasi-periodic ``x1``."""

    def __init__(self, grid: SpaceTimeGrid, theta: float):
        self.grid = grid
        self.theta = theta
        n, N1, P, L = grid.n, grid.Nx1, grid.x1_length, grid.cross_section.side
        m = np.fft.fftfreq(N1, d=1.0 / N1)
        self.k1 = (theta + 2.0 * np.pi * m) / P
        p = np.arange(1, n + 1)
        kp = (p * np.pi / L) ** 2
        self.symbol = self.k1[:, None, None] ** 2 + kp[None, :, None] + kp[None, None, :]
        x1 = grid.x1[:N1]
        self.demod = np.exp(-1j * theta * x1 / P)[:, None, None]

    def to_spec(self, z):
        # z: (N1, n, n) values at interior nodes for x1 in [0, P)
        return sfft.dstn(sfft.fft(z * self.demod, axis=0, norm="ortho"), type=1, axes=(1, 2), norm="ortho")

    def from_spec(self, s):
        return sfft.ifft(sfft.idstn(s, type=1, axes=(1, 2), norm="ortho"), axis=0, norm="ortho") / self.demod

    def apply(self, z):
        return self.from_spec(self.symbol * self.to_spec(z))

    def d2x1(self, g):
        """Second ``x1`` derivative of quasi-periodic samples (axis 0)."""
        s = sfft.fft(g * self.demod.reshape((-1,) + (1,) * (g.ndim - 1)), axis=0)
        s *= -(self.k1 ** 2).reshape((-1,) + (1,) * (g.ndim - 1))
        return sfft.ifft(s, axis=0) / self.demod.reshape((-1,) + (1,) * (g.ndim - 1))


def _edge_profile(n, s_nodes):
    """``sinh(q pi s) / sinh(q pi)`` for ``q = 1..n`` at the fractional positions ``s``."""
    q = np.arange(1, n + 1)[:, None]
    s = s_nodes[None, :]
    # stable ratio
    return np.exp(q * np.pi * (s - 1.0)) * (-np.expm1(-2.0 * q * np.pi * s)) / (-np.expm1(-2.0 * q * np.pi))


class HarmonicLift:
    """Harmonic extension of face data into ``omega`` (per leading index)."""

    def __init__(self, n: int):
        self.n = n
        s = np.linspace(0.0, 1.0, n + 2)
        self.rise = _edge_profile(n, s)  # (n, n+2): profile growing towards s = 1
        self.fall = self.rise[:, ::-1]

    def __call__(self, faces: np.ndarray) -> np.ndarray:
        """``faces``: ``(..., 4, n+2)`` -> field ``(..., n+2, n+2)``."""
        n = self.n
        # corner values are matched by a bilinear (hence harmonic) part so the
        # sine interpolation of the remaining face data vanishes at the corners
        c00 = 0.5 * (faces[..., 0, 0] + faces[..., 2, 0])
        c01 = 0.5 * (faces[..., 0, -1] + faces[..., 3, 0])
        c10 = 0.5 * (faces[..., 1, 0] + faces[..., 2, -1])
        c11 = 0.5 * (faces[..., 1, -1] + faces[..., 3, -1])
        up = np.linspace(0.0, 1.0, n + 2)
        dn = 1.0 - up
        bil = (
            c00[..., None, None] * np.outer(dn, dn)
            + c01[..., None, None] * np.outer(dn, up)
            + c10[..., None, None] * np.outer(up, dn)
            + c11[..., None, None] * np.outer(up, up)
        )
        faces = faces - trace_faces(bil)
        inner = faces[..., 1:-1]
        b = sfft.dst(inner, type=1, axis=-1, norm="ortho") * np.sqrt(2.0 / (n + 1))
        # b_q so that data_j = sum_q b_q sin(q pi j / (n+1))
        p = np.arange(1, n + 1)
        j = np.arange(n + 2)
        sines = np.sin(np.outer(p, j) * np.pi / (n + 1))  # (n, n+2)
        out = np.einsum("...q,qi,qj->...ij", b[..., 0, :], self.fall, sines)  # x2 = -a face
        out += np.einsum("...q,qi,qj->...ij", b[..., 1, :], self.rise, sines)  # x2 = +a
        out += np.einsum("...q,qi,qj->...ij", b[..., 2, :], sines, self.fall)  # x3 = -a
        out += np.einsum("...q,qi,qj->...ij", b[..., 3, :], sines, self.rise)  # x3 = +a
        return out + bil


def _set_faces(field, faces):
    field[..., 0, :] = faces[..., 0, :]
    field[..., -1, :] = faces[..., 1, :]
    field[..., :, 0] = faces[..., 2, :]
    field[..., :, -1] = faces[..., 3, :]
    return field


def solve_fiber_ibvp(
    V: Potential,
    probe: ProbeInput,
    grid: SpaceTimeGrid,
    source: np.ndarray | None = None,
    rtol: float = 1e-13,
    maxiter: int = 200,
    record_norms: bool = False,
):
    """Solve ``(-i d_t - Delta + V) v = source`` in Q' with quasi-periodic ``x1``.

    Returns the waveguide-layout solution (boundary nodes carry the Dirichlet
    data, the ``x1 = P`` slice is filled from quasi-periodicity).  With
    ``record_norms`` also returns the per-step discrete L2 norms.
    """
    theta = probe.theta
    op = FiberOperator(grid, theta)
    N1, n, dt = grid.Nx1, grid.n, grid.dt
    Vv = V.values
    if Vv.shape != grid.q_shape:
        raise ValueError("potential does not match grid")
    lift = HarmonicLift(n)
    faces = probe.dirichlet[:, :N1]
    homogeneous = not np.any(faces)
    if homogeneous:
        G = None
    else:
        G = lift(faces)  # (Nt+1, N1, n+2, n+2)
    I = slice(1, -1)

    def Gi(k):
        return 0.0 if G is None else G[k][:, I, I]

    v0 = probe.v0[:N1]
    z = (v0[:, I, I] - Gi(0)).astype(complex)
    out = np.zeros(grid.q_shape, dtype=complex)
    out[0, :N1] = v0
    norms = [np.linalg.norm(z) * grid.cross_section.h * np.sqrt(grid.dx1)] if record_norms else None
    Vmean = float(np.mean(Vv[:, :N1, I, I]))
    precond_symbol = 1.0 + 0.5j * dt * (op.symbol + Vmean)
    shape = (N1, n, n)
    M = LinearOperator(
        (z.size, z.size),
        matvec=lambda x: op.from_spec(op.to_spec(x.reshape(shape)) / precond_symbol).ravel(),
        dtype=complex,
    )
    for k in range(grid.Nt):
        Vh = 0.5 * (Vv[k, :N1, I, I] + Vv[k + 1, :N1, I, I])

        def H(x, Vh=Vh):
            return op.apply(x) + Vh * x

        rhs = z - 0.5j * dt * H(z)
        if G is not None:
            Gm = 0.5 * (G[k] + G[k + 1])[:, I, I]
            dG = (G[k + 1] - G[k])[:, I, I]
            rhs = rhs - dG - 1j * dt * (-op.d2x1(Gm) + Vh * Gm)
        if source is not None:
            fm = 0.5 * (source[k] + source[k + 1])[:N1, I, I]
            rhs = rhs + 1j * dt * fm
        A = LinearOperator(
            (z.size, z.size),
            matvec=lambda x, H=H: (x.reshape(shape) + 0.5j * dt * H(x.reshape(shape))).ravel(),
            dtype=complex,
        )
        if np.any(Vh):
            sol, info = gmres(A, rhs.ravel(), x0=z.ravel(), rtol=rtol, atol=0.0,
                              restart=40, maxiter=maxiter, M=M)
            if info != 0:
                raise SolverError(f"GMRES did not converge at step {k} (info={info})")
            z = sol.reshape(shape)
        else:
            z = op.from_spec(op.to_spec(rhs) / (1.0 + 0.5j * dt * op.symbol))
        out[k + 1, :N1, I, I] = z + Gi(k + 1)
        if record_norms:
            norms.append(np.linalg.norm(z) * grid.cross_section.h * np.sqrt(grid.dx1))
    _set_faces(out[:, :N1], probe.dirichlet[:, :N1])
    out[:, N1] = np.exp(1j * theta) * out[:, 0]
    if record_norms:
        return out, np.array(norms)
    return out


_NEUMANN_STENCIL = np.array([25.0, -48.0, 36.0, -16.0, 3.0]) / 12.0


def neumann_trace(v: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    """Outward normal derivative on the interior face nodes (5-point one-sided, order 4)."""
    c = _NEUMANN_STENCIL / grid.cross_section.h
    I = slice(1, -1)

    def d(take):
        return sum(c[j] * take(j) for j in range(5))

    return np.stack(
        [
            d(lambda j: v[..., j, I]),
            d(lambda j: v[..., -1 - j, I]),
            d(lambda j: v[..., I, j]),
            d(lambda j: v[..., I, -1 - j]),
        ],
        axis=-2,
    )


def boundary_operator(V: Potential, probe: ProbeInput, grid: SpaceTimeGrid, **kw) -> BoundaryData:
    """``Lambda_{V,theta}``: probe -> (Neumann trace on Sigma, state at T)."""
    v = solve_fiber_ibvp(V, probe, grid, **kw)
    return BoundaryData(neumann_trace(v, grid), v[-1].copy())


def operator_norm_estimate(
    V1: Potential, V2: Potential, theta: float, probe_set, grid: SpaceTimeGrid, details: bool = False
):
    """Lower estimate of ``||Lambda_{V2,theta} - Lambda_{V1,theta}||`` by a probe maximum."""
    if not probe_set:
        raise ValueError("probe_set is empty")
    ratios = []
    for p in probe_set:
        if not p.norm > 0:
            raise ValueError("probe with zero declared norm")
        if p.theta != theta:
            raise ValueError("probe angle does not match theta")
        d = boundary_operator(V2, p, grid) - boundary_operator(V1, p, grid)
        ratios.append(d.norm(grid) / p.norm)
    gamma = max(ratios)
    if details:
        return gamma, ratios
    return gamma


__all__ = [
    "Potential",
    "ProbeInput",
    "BoundaryData",
    "SolverError",
    "solve_fiber_ibvp",
    "boundary_operator",
    "operator_norm_estimate",
    "neumann_trace",
    "trace_faces",
    "append_x1_endpoint",
]
