"""Grids, quadrature, shifted-lattice Fourier analysis and resampling.

Two sample layouts are used throughout the package.

Waveguide layout (``grid.q_shape``)
    ``(Nt + 1, Nx1 + 1, n + 2, n + 2)`` samples of a field on the closed
    cell ``[0, T] x [0, P] x closure(omega)``.  Time nodes include both ends,
    the ``x1`` axis carries the periodic samples ``j P / Nx1`` plus the
    endpoint ``x1 = P`` (so quasi-periodicity can be read off directly) and
    the cross-section axes include the boundary nodes.

Box layout (``grid.box_shape``)
    ``(Nt_box, Nx1, N2, N3)`` samples on the Fourier box
    ``(-R, R) x [0, 1) x (-R, R)^2`` at the nodes ``-R + j * 2R / N``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class CrossSection:
    """Square cross-section ``omega = (-a, a)^2`` centred at the origin."""

    half_width: float
    n_side: int

    def __post_init__(self):
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.n_side < 4:
            raise ValueError("n_side must be at least 4")

    @property
    def side(self) -> float:
        return 2.0 * self.half_width

    @property
    def area(self) -> float:
        return self.side ** 2

    @property
    def h(self) -> float:
        return self.side / (self.n_side + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        """Per-axis nodes including both boundary nodes."""
        return np.linspace(-self.half_width, self.half_width, self.n_side + 2)

    @cached_property
    def weights(self) -> np.ndarray:
        """Per-axis trapezoid weights matching :attr:`nodes`."""
        w = np.full(self.n_side + 2, self.h)
        w[[0, -1]] = 0.5 * self.h
        return w

    @property
    def faces(self) -> tuple[tuple[int, int, tuple[float, float]], ...]:
        """Boundary faces as ``(axis, side_index, outward_normal)``.

        ``axis`` is 0 for ``x2`` and 1 for ``x3``; ``side_index`` is 0 for the
        face at ``-a`` and ``-1`` for the face at ``+a``.
        """
        return (
            (0, 0, (-1.0, 0.0)),
            (0, -1, (1.0, 0.0)),
            (1, 0, (0.0, -1.0)),
            (1, -1, (0.0, 1.0)),
        )


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Discretisation of the waveguide cell and of the Fourier box."""

    T: float
    Nt: int
    Nx1: int
    cross_section: CrossSection
    box_R: float
    box_Nt: int = 64
    box_N2: int = 64
    box_N3: int = 64
    x1_length: float = 1.0

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("T must be positive")
        for name in ("Nt", "Nx1", "box_Nt", "box_N2", "box_N3"):
            if not _is_pow2(getattr(self, name)):
                raise ValueError(f"{name}={getattr(self, name)} is not a power of two")
        need = np.sqrt(2.0) * self.cross_section.half_width
        if self.box_R <= need or self.box_R <= self.T:
            raise ValueError(
                f"box_R={self.box_R} too small: need R > sqrt(2)*L/2={need:.4g} and R > T"
            )

    # -- waveguide layout -------------------------------------------------
    @property
    def dt(self) -> float:
        return self.T / self.Nt

    @property
    def dx1(self) -> float:
        return self.x1_length / self.Nx1

    @cached_property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.Nt + 1)

    @cached_property
    def x1(self) -> np.ndarray:
        return np.arange(self.Nx1 + 1) * self.dx1

    @property
    def xp(self) -> np.ndarray:
        return self.cross_section.nodes

    @property
    def n(self) -> int:
        return self.cross_section.n_side

    @property
    def q_shape(self) -> tuple[int, int, int, int]:
        m = self.n + 2
        return (self.Nt + 1, self.Nx1 + 1, m, m)

    @cached_property
    def t_weights(self) -> np.ndarray:
        w = np.full(self.Nt + 1, self.dt)
        w[[0, -1]] = 0.5 * self.dt
        return w

    @cached_property
    def x1_weights(self) -> np.ndarray:
        w = np.full(self.Nx1 + 1, self.dx1)
        w[-1] = 0.0
        return w

    @cached_property
    def q_weights(self) -> np.ndarray:
        """Quadrature weights on the waveguide layout (broadcastable)."""
        wp = self.cross_section.weights
        return (
            self.t_weights[:, None, None, None]
            * self.x1_weights[None, :, None, None]
            * wp[None, None, :, None]
            * wp[None, None, None, :]
        )

    def mesh(self):
        """Broadcastable coordinate arrays ``(t, x1, x2, x3)`` on Q'."""
        return np.meshgrid(self.t, self.x1, self.xp, self.xp, indexing="ij", sparse=True)

    def with_cells(self, K: int) -> "SpaceTimeGrid":
        """Same grid stretched to a cylinder of ``K`` cells along ``x1``."""
        return SpaceTimeGrid(
            self.T, self.Nt, self.Nx1 * K, self.cross_section, self.box_R,
            self.box_Nt, self.box_N2, self.box_N3, self.x1_length * K,
        )

    def refined(
        self, factor: int = 2, *, time=True, space=False, box=False, box_time=None, box_space=None
    ) -> "SpaceTimeGrid":
        """Refined copy.  ``box`` refines both box directions unless
        ``box_time``/``box_space`` say otherwise."""
        bt = box if box_time is None else box_time
        bs = box if box_space is None else box_space
        cs = self.cross_section
        if space:
            cs = CrossSection(cs.half_width, (cs.n_side + 1) * factor - 1)
        return SpaceTimeGrid(
            self.T,
            self.Nt * factor if time else self.Nt,
            self.Nx1,
            cs,
            self.box_R,
            self.box_Nt * factor if bt else self.box_Nt,
            self.box_N2 * factor if bs else self.box_N2,
            self.box_N3 * factor if bs else self.box_N3,
            self.x1_length,
        )

    # -- box layout -------------------------------------------------------
    @property
    def box_shape(self) -> tuple[int, int, int, int]:
        return (self.box_Nt, self.Nx1, self.box_N2, self.box_N3)

    def box_axis(self, N: int) -> np.ndarray:
        return -self.box_R + np.arange(N) * (2.0 * self.box_R / N)

    @cached_property
    def box_t(self) -> np.ndarray:
        return self.box_axis(self.box_Nt)

    @cached_property
    def box_x2(self) -> np.ndarray:
        return self.box_axis(self.box_N2)

    @cached_property
    def box_x3(self) -> np.ndarray:
        return self.box_axis(self.box_N3)

    @property
    def box_cell_volume(self) -> float:
        R2 = 2.0 * self.box_R
        return (R2 / self.box_Nt) * self.dx1 * (R2 / self.box_N2) * (R2 / self.box_N3)


# ---------------------------------------------------------------------------
# norms on the waveguide layout


def l2_norm(f: np.ndarray, grid: SpaceTimeGrid) -> float:
    return float(np.sqrt(np.sum(grid.q_weights * np.abs(f) ** 2)))


def inner(f: np.ndarray, g: np.ndarray, grid: SpaceTimeGrid) -> complex:
    """``int_{Q'} f conj(g)``."""
    return complex(np.sum(grid.q_weights * f * np.conj(g)))


def dx1_spectral(f: np.ndarray, grid: SpaceTimeGrid, theta: float, order: int = 1) -> np.ndarray:
    """``x1`` derivative of a quasi-periodic field (frequencies ``theta + 2 pi Z``)."""
    P = grid.x1_length
    x1 = grid.x1[: grid.Nx1]
    shape = [1] * f.ndim
    shape[1] = grid.Nx1
    demod = np.exp(-1j * theta * x1 / P).reshape(shape)
    g = sfft.fft(f[:, : grid.Nx1] * demod, axis=1)
    m = np.fft.fftfreq(grid.Nx1, d=1.0 / grid.Nx1)
    freq = ((theta + 2.0 * np.pi * m) / P).reshape(shape)
    out = sfft.ifft(g * (1j * freq) ** order, axis=1) / demod
    return append_x1_endpoint(out, theta)


def append_x1_endpoint(f: np.ndarray, theta: float) -> np.ndarray:
    """Append the ``x1 = P`` slice implied by quasi-periodicity."""
    return np.concatenate([f, np.exp(1j * theta) * f[:, :1]], axis=1)


def _h2_spatial_sq(f, grid, theta):
    """Squared spatial H^2 proxy, summed over x, kept per time node."""
    h = grid.cross_section.h
    wq = grid.q_weights / grid.t_weights[:, None, None, None]
    d1 = dx1_spectral(f, grid, theta)
    d11 = dx1_spectral(f, grid, theta, order=2)
    d2 = np.gradient(f, h, axis=2, edge_order=2)
    d3 = np.gradient(f, h, axis=3, edge_order=2)
    d22 = np.gradient(d2, h, axis=2, edge_order=2)
    d33 = np.gradient(d3, h, axis=3, edge_order=2)
    d23 = np.gradient(d2, h, axis=3, edge_order=2)
    d12 = dx1_spectral(d2, grid, theta)
    d13 = dx1_spectral(d3, grid, theta)
    terms = [f, d1, d2, d3, d11, d22, d33, d23, d23, d12, d12, d13, d13]
    return sum(np.sum(wq * np.abs(g) ** 2, axis=(1, 2, 3)) for g in terms)


def h2h2_waveguide_norm(f: np.ndarray, grid: SpaceTimeGrid, theta: float = 0.0) -> float:
    """Discrete ``H^2(0,T; H^2(Omega'))`` proxy norm on the waveguide layout."""
    dt = grid.dt
    ft = np.gradient(f, dt, axis=0, edge_order=2)
    ftt = np.gradient(ft, dt, axis=0, edge_order=2)
    total = 0.0
    for g in (f, ft, ftt):
        total += float(np.sum(grid.t_weights * _h2_spatial_sq(g, grid, theta)))
    return float(np.sqrt(total))


# ---------------------------------------------------------------------------
# shifted-lattice Fourier analysis on the box


@dataclass(frozen=True)
class ModeLattice:
    """Integer labels and real frequencies of the truncated lattice ``Z_theta``.

    ``alpha0 = pi m0 / R``, ``alpha1 = theta + 2 pi m1``,
    ``alpha2 = pi (2 m2 + 1) / (2R)``, ``alpha3 = pi m3 / R``.
    """

    grid: SpaceTimeGrid
    theta: float
    m: tuple = field(init=False)

    def __post_init__(self):
        g = self.grid
        labels = tuple(
            np.fft.fftfreq(N, d=1.0 / N).astype(np.int64) for N in g.box_shape
        )
        object.__setattr__(self, "m", labels)

    @property
    def alpha(self) -> tuple[np.ndarray, ...]:
        R = self.grid.box_R
        m0, m1, m2, m3 = self.m
        P = self.grid.x1_length
        a0 = np.pi * m0 / R
        a1 = (self.theta + 2.0 * np.pi * m1) / P
        a2 = np.pi * (2 * m2 + 1) / (2.0 * R)
        a3 = np.pi * m3 / R
        return (
            a0[:, None, None, None],
            a1[None, :, None, None],
            a2[None, None, :, None],
            a3[None, None, None, :],
        )

    def min_abs_alpha2_label(self) -> int:
        """Smallest ``|2 m2 + 1|``; always >= 1 on the integer lattice."""
        return int(np.min(np.abs(2 * self.m[2] + 1)))


def _check_box(f, grid):
    if f.shape != grid.box_shape:
        raise ValueError(f"layout mismatch: expected box shape {grid.box_shape}, got {f.shape}")


def box_fourier_forward(f: np.ndarray, grid: SpaceTimeGrid, theta: float) -> np.ndarray:
    """Coefficients ``<f, phi_alpha>`` for the orthonormal basis
    ``phi_alpha(y) = (2R)^{-3/2} exp(i alpha . y)`` on the box."""
    _check_box(f, grid)
    R = grid.box_R
    x1 = grid.x1[: grid.Nx1]
    demod = np.exp(-1j * theta * x1 / grid.x1_length)[None, :, None, None] * np.exp(
        -1j * np.pi * grid.box_x2 / (2.0 * R)
    )[None, None, :, None]
    c = sfft.fftn(f * demod, axes=(0, 1, 2, 3))
    return c * _offset_phase(grid) * (grid.box_cell_volume / (2.0 * R) ** 1.5)


def box_fourier_inverse(c: np.ndarray, grid: SpaceTimeGrid, theta: float) -> np.ndarray:
    _check_box(c, grid)
    R = grid.box_R
    x1 = grid.x1[: grid.Nx1]
    mod = np.exp(1j * theta * x1 / grid.x1_length)[None, :, None, None] * np.exp(
        1j * np.pi * grid.box_x2 / (2.0 * R)
    )[None, None, :, None]
    f = sfft.ifftn(c * np.conj(_offset_phase(grid)), axes=(0, 1, 2, 3))
    return f * mod * (np.prod(grid.box_shape) / (2.0 * R) ** 1.5)


def _offset_phase(grid):
    # exp(-i alpha' y_start) for the demodulated frequencies; y_start = -R on t, x2, x3
    sgn = [(-1.0) ** np.abs(np.fft.fftfreq(N, d=1.0 / N)) for N in grid.box_shape]
    return (
        sgn[0][:, None, None, None]
        * sgn[2][None, None, :, None]
        * sgn[3][None, None, None, :]
    )


def sobolev_weight(lattice: ModeLattice) -> np.ndarray:
    """``(1 + a0^2 + a0^4) * sum_{j,l} aj^2 al^2`` on the box lattice."""
    a0, a1, a2, a3 = lattice.alpha
    s = a1 ** 2 + a2 ** 2 + a3 ** 2
    return (1.0 + a0 ** 2 + a0 ** 4) * s ** 2


def sobolev_norm(f: np.ndarray, grid: SpaceTimeGrid, norm_tag: str = "L2", theta: float = 0.0) -> float:
    """Discrete norms.

    ``L2`` works on either layout; ``H2H2_box`` expects box samples and uses
    the spectral weight of :func:`sobolev_weight`; ``H2H2_waveguide`` expects
    waveguide samples.
    """
    if norm_tag == "L2":
        if f.shape == grid.box_shape:
            return float(np.sqrt(grid.box_cell_volume * np.sum(np.abs(f) ** 2)))
        return l2_norm(f, grid)
    if norm_tag == "H2H2_box":
        c = box_fourier_forward(f, grid, theta)
        return coefficient_h2_norm(c, ModeLattice(grid, theta))
    if norm_tag == "H2H2_waveguide":
        return h2h2_waveguide_norm(f, grid, theta)
    raise ValueError(f"unknown norm tag {norm_tag!r}")


def coefficient_h2_norm(c: np.ndarray, lattice: ModeLattice) -> float:
    return float(np.sqrt(np.sum(sobolev_weight(lattice) * np.abs(c) ** 2)))


def evaluate_box_modes(
    c: np.ndarray,
    grid: SpaceTimeGrid,
    theta: float,
    t: np.ndarray,
    x1: np.ndarray,
    yp: np.ndarray,
    chunk_bytes: int = 64 * 2 ** 20,
) -> np.ndarray:
    """Evaluate ``sum_alpha c_alpha phi_alpha`` at ``t x x1 x yp``.

    ``c`` may carry extra leading axes (several coefficient arrays evaluated in
    one pass).  ``yp`` is a ``(P, 2)`` array of cross-section points.  Returns
    an array of shape ``lead + (len(t), len(x1), P)``.
    """
    lead = c.shape[:-4]
    lat = ModeLattice(grid, theta)
    a0, a1, a2, a3 = (a.ravel() for a in lat.alpha)
    Nt_b, N1, N2, N3 = grid.box_shape
    flat = c.reshape(-1, N2 * N3)
    P = yp.shape[0]
    out = np.empty((flat.shape[0], P), dtype=complex)
    step = max(1, chunk_bytes // (16 * N2 * N3))
    e2 = np.exp(1j * np.outer(a2, yp[:, 0]))
    e3 = np.exp(1j * np.outer(a3, yp[:, 1]))
    for s in range(0, P, step):
        K = (e2[:, None, s:s + step] * e3[None, :, s:s + step]).reshape(N2 * N3, -1)
        out[:, s:s + step] = flat @ K
    out = out.reshape(lead + (Nt_b, N1, P))
    E1 = np.exp(1j * np.outer(x1, a1))
    E0 = np.exp(1j * np.outer(t, a0))
    out = np.einsum("xm,...tmp->...txp", E1, out, optimize=True)
    out = np.einsum("st,...txp->...sxp", E0, out, optimize=True)
    return out / (2.0 * grid.box_R) ** 1.5


# ---------------------------------------------------------------------------
# local interpolation


def keys_weights(s: np.ndarray) -> np.ndarray:
    """Keys cubic-convolution weights (a = -1/2) for offsets ``s in [0, 1)``.

    Returns shape ``s.shape + (4,)`` for the nodes ``i-1, i, i+1, i+2``.
    """
    s = np.asarray(s)
    w = np.empty(s.shape + (4,))
    w[..., 0] = ((-0.5 * s + 1.0) * s - 0.5) * s
    w[..., 1] = (1.5 * s - 2.5) * s * s + 1.0
    w[..., 2] = ((-1.5 * s + 2.0) * s + 0.5) * s
    w[..., 3] = (0.5 * s - 0.5) * s * s
    return w


def _fold(x, lo, hi):
    """Even reflection of ``x`` into ``[lo, hi]``."""
    span = hi - lo
    y = np.mod(x - lo, 2.0 * span)
    return lo + np.where(y > span, 2.0 * span - y, y)


def _reflect_index(i, n):
    """Even reflection of integer node indices into ``[0, n-1]`` (edge not repeated)."""
    period = 2 * (n - 1)
    j = np.mod(i, period)
    return np.where(j > n - 1, period - j, j)


# Hestenes-type reflection matching value, slope and curvature at the edge:
# f(lo - s) = sum_j c_j f(lo + lambda_j s)
_REFLECT_LAMBDA = np.array([1.0, 0.5, 0.25])
_REFLECT_COEF = np.array([5.0, -20.0, 16.0])


def _extension_terms(x, lo, hi, mode, taper=None):
    """Write ``f_ext(x)`` as ``sum c f(y)`` with ``y`` in ``[lo, hi]``.

    ``mode='even'`` folds evenly (bounded, but with a slope jump at the
    edges).  ``mode='smooth'`` uses a three-term reflection that is ``C^2``
    across the edges, damped by a ``C^infinity`` taper vanishing at distance
    ``taper`` from the interval.  Returns ``(point, coef, y)`` triples.
    """
    x = np.asarray(x, dtype=float)
    idx = np.arange(x.size)
    if mode == "even":
        return idx, np.ones(x.size), _fold(x, lo, hi)
    if mode != "smooth":
        raise ValueError(f"unknown extension mode {mode!r}")
    span = hi - lo
    taper = span if taper is None else min(taper, span)
    inside = (x >= lo) & (x <= hi)
    dist = np.where(x < lo, lo - x, x - hi)
    near = ~inside & (dist < taper)
    P, C, Y = [idx[inside]], [np.ones(inside.sum())], [x[inside]]
    s = dist[near]
    damp = 1.0 - smooth_transition(s / taper)
    edge = np.where(x[near] < lo, lo, hi)
    sgn = np.where(x[near] < lo, 1.0, -1.0)
    for lam, c in zip(_REFLECT_LAMBDA, _REFLECT_COEF):
        P.append(idx[near])
        C.append(c * damp)
        Y.append(edge + sgn * lam * s)
    return np.concatenate(P), np.concatenate(C), np.concatenate(Y)


INTERP_POINTS = 6


def lagrange_weights(u: np.ndarray, start: np.ndarray, p: int) -> np.ndarray:
    """Lagrange weights at positions ``u`` (in node units) on nodes ``start .. start+p-1``."""
    u = np.asarray(u, dtype=float)
    xs = start[:, None] + np.arange(p)[None, :]
    w = np.ones(u.shape + (p,))
    for j in range(p):
        for m in range(p):
            if m != j:
                w[:, j] *= (u - xs[:, m]) / (j - m)
    return w


def ext_interp_matrix_1d(
    nodes: np.ndarray, x: np.ndarray, mode: str = "smooth", taper: float | None = None,
    points: int | None = None,
) -> sp.csr_matrix:
    """Interpolation of the extension (``mode``) of nodal data to ``x``.

    ``smooth`` uses ``points``-point Lagrange stencils, shifted one-sided near
    the edges; ``even`` uses Keys cubic convolution on the folded data.
    """
    nodes = np.asarray(nodes, dtype=float)
    x = np.asarray(x, dtype=float)
    n = nodes.size
    lo, hi = nodes[0], nodes[-1]
    h = (hi - lo) / (n - 1)
    pidx, coef, y = _extension_terms(x, lo, hi, mode, taper)
    u = (y - lo) / h
    if mode == "even":
        i = np.clip(np.floor(u).astype(int), 0, n - 2)
        w = keys_weights(u - i) * coef[:, None]
        stencil = i[:, None] + np.arange(-1, 3)[None, :]
        cols = _reflect_index(stencil, n).ravel()
        return sp.csr_matrix((w.ravel(), (np.repeat(pidx, 4), cols)), shape=(x.size, n))
    p = min(INTERP_POINTS if points is None else points, n)
    start = np.clip(np.floor(u).astype(int) - (p // 2 - 1), 0, n - p)
    w = lagrange_weights(u, start, p) * coef[:, None]
    cols = (start[:, None] + np.arange(p)[None, :]).ravel()
    return sp.csr_matrix((w.ravel(), (np.repeat(pidx, p), cols)), shape=(x.size, n))


def fold_interp_matrix_1d(nodes: np.ndarray, x: np.ndarray) -> sp.csr_matrix:
    """Cubic interpolation of the even-reflection extension of nodal data."""
    return ext_interp_matrix_1d(nodes, x, "even")


def _row_kron(A: sp.csr_matrix, B: sp.csr_matrix) -> sp.csr_matrix:
    """Row-wise Kronecker (transposed Khatri-Rao) product of two CSR matrices."""
    A, B = A.tocsr(), B.tocsr()
    A.sum_duplicates()
    B.sum_duplicates()
    nb = B.shape[1]
    na_row = np.diff(A.indptr)
    nb_row = np.diff(B.indptr)
    rows, cols, vals = [], [], []
    for ka in range(na_row.max(initial=0)):
        ra = np.nonzero(na_row > ka)[0]
        ia = A.indptr[ra] + ka
        for kb in range(nb_row.max(initial=0)):
            sel = nb_row[ra] > kb
            r = ra[sel]
            ib = B.indptr[r] + kb
            rows.append(r)
            cols.append(A.indices[ia[sel]] * nb + B.indices[ib])
            vals.append(A.data[ia[sel]] * B.data[ib])
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(A.shape[0], A.shape[1] * nb),
    )


def ext_interp_matrix_2d(
    nodes: np.ndarray, pts: np.ndarray, mode: str = "smooth", taper: float | None = None
) -> sp.csr_matrix:
    """Tensor-product interpolation of the extension on a square node grid.

    Input vector ordering is ``(x2, x3)`` C-order over ``nodes x nodes``.
    """
    A = ext_interp_matrix_1d(nodes, pts[:, 0], mode, taper)
    B = ext_interp_matrix_1d(nodes, pts[:, 1], mode, taper)
    return _row_kron(A, B)


def fold_interp_matrix_2d(nodes: np.ndarray, pts: np.ndarray) -> sp.csr_matrix:
    return ext_interp_matrix_2d(nodes, pts, "even")


def rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def _check_rotation(S):
    S = np.asarray(S, dtype=float)
    if S.shape != (2, 2) or not np.allclose(S.T @ S, np.eye(2), atol=1e-12) or np.linalg.det(S) < 0:
        raise ValueError("S must be a proper 2x2 rotation")
    return S


def rotate_resample(
    f: np.ndarray,
    grid: SpaceTimeGrid,
    S: np.ndarray,
    direction: str = "forward",
    outside: str = "raise",
) -> np.ndarray:
    """Resample box-layout ``f`` as ``f(t, x1, S^T x')`` (forward) or
    ``f(t, x1, S x')`` (inverse) by bicubic interpolation in ``(x2, x3)``.

    Sample values one cell beyond the box edge are linearly extrapolated.
    Preimages further out raise ``ValueError`` unless ``outside='zero'``.
    """
    _check_box(f, grid)
    S = _check_rotation(S)
    if np.array_equal(S, np.eye(2)):
        return f.copy()
    M = S.T if direction == "forward" else S
    x2, x3 = grid.box_x2, grid.box_x3
    Y2, Y3 = np.meshgrid(x2, x3, indexing="ij")
    pre = np.stack([Y2.ravel(), Y3.ravel()], axis=1) @ M.T
    h2, h3 = x2[1] - x2[0], x3[1] - x3[0]
    u2 = (pre[:, 0] - x2[0]) / h2
    u3 = (pre[:, 1] - x3[0]) / h3
    N2, N3 = x2.size, x3.size
    inside = (u2 >= -1) & (u2 <= N2) & (u3 >= -1) & (u3 <= N3)
    if not inside.all() and outside == "raise":
        raise ValueError("rotated footprint exits the box")
    # pad two cells per side with linear extrapolation
    g = np.pad(f, ((0, 0), (0, 0), (2, 2), (2, 2)), mode="reflect", reflect_type="odd")
    u2c = np.clip(u2, -1, N2)
    u3c = np.clip(u3, -1, N3)
    i2 = np.clip(np.floor(u2c).astype(int), -1, N2 - 1)
    i3 = np.clip(np.floor(u3c).astype(int), -1, N3 - 1)
    w2 = keys_weights(u2c - i2)
    w3 = keys_weights(u3c - i3)
    out = np.zeros(f.shape[:2] + (N2 * N3,), dtype=np.result_type(f, float))
    for a in range(4):
        for b in range(4):
            vals = g[:, :, i2 + a - 1 + 2, i3 + b - 1 + 2]
            out += (w2[:, a] * w3[:, b]) * vals
    out[..., ~inside] = 0.0
    return out.reshape(f.shape)


# ---------------------------------------------------------------------------
# cutoff and extension


def smooth_transition(x: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for ``x <= 0``, 1 for ``x >= 1``."""
    x = np.asarray(x, dtype=float)
    a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
    b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class Cutoff:
    """Tensor-product cutoff ``chi(t, x')``.

    Equal to one on ``[t_lo, t_hi] x [-x_in, x_in]^2``, vanishing beyond
    ramps of width ``ramp_t`` (time) and ``ramp_x`` (space), smooth in
    between.
    """

    t_lo: float
    t_hi: float
    x_in: float
    ramp_t: float
    ramp_x: float

    @classmethod
    def default(cls, grid: SpaceTimeGrid) -> "Cutoff":
        """Widest ramps the box allows: plateau ``[0, T]`` in time and the disc
        containing every rotation of ``omega`` in space."""
        R = grid.box_R
        x_in = np.sqrt(2.0) * grid.cross_section.half_width
        return cls(0.0, grid.T, x_in, (2.0 * R - grid.T) / 2.0, R - x_in)

    def validate(self, grid: SpaceTimeGrid):
        R = grid.box_R
        eps = 1e-12 * R
        if self.ramp_t <= 0 or self.ramp_x <= 0:
            raise ValueError("cutoff ramps must be positive")
        if self.t_hi + self.ramp_t > R + eps or self.t_lo - self.ramp_t < -R - eps:
            # the time axis is periodic: the two ramps may share the wrap point
            if (self.t_hi - self.t_lo) + 2.0 * self.ramp_t > 2.0 * R + eps:
                raise ValueError("time cutoff does not fit in the box period")
        if self.x_in + self.ramp_x > R + eps:
            raise ValueError("spatial cutoff support exceeds the box")
        if self.t_lo > 0 or self.t_hi < grid.T:
            raise ValueError("cutoff must equal one on [0, T]")
        if self.x_in < np.sqrt(2.0) * grid.cross_section.half_width * (1 - 1e-12):
            raise ValueError("cutoff must equal one on every rotation of omega")

    def profile_t(self, t):
        # periodic distance outside the plateau, measured on the box period
        t = np.asarray(t, dtype=float)
        mid = 0.5 * (self.t_lo + self.t_hi)
        half = 0.5 * (self.t_hi - self.t_lo)
        return smooth_transition((half + self.ramp_t - np.abs(t - mid)) / self.ramp_t)

    def profile_x(self, x):
        return smooth_transition((self.x_in + self.ramp_x - np.abs(x)) / self.ramp_x)

    def wrapped_t(self, grid: SpaceTimeGrid) -> np.ndarray:
        """Box time nodes shifted by the period into one window centred on the plateau."""
        P = 2.0 * grid.box_R
        mid = 0.5 * (self.t_lo + self.t_hi)
        return (grid.box_t - mid + 0.5 * P) % P - 0.5 * P + mid

    def on_box(self, grid: SpaceTimeGrid) -> np.ndarray:
        t = self.wrapped_t(grid)
        return (
            self.profile_t(t)[:, None, None, None]
            * self.profile_x(grid.box_x2)[None, None, :, None]
            * self.profile_x(grid.box_x3)[None, None, None, :]
        )


class Extension:
    """Reusable plan for :func:`extend_and_cutoff` at a fixed rotation."""

    def __init__(self, grid: SpaceTimeGrid, S: np.ndarray, cutoff: Cutoff | None = None, mode: str = "smooth"):
        self.grid = grid
        self.S = _check_rotation(S)
        self.cutoff = cutoff or Cutoff.default(grid)
        self.cutoff.validate(grid)
        R, a = grid.box_R, grid.cross_section.half_width
        self.Mt = ext_interp_matrix_1d(grid.t, self.cutoff.wrapped_t(grid), mode, self.cutoff.ramp_t).toarray()
        Y2, Y3 = np.meshgrid(grid.box_x2, grid.box_x3, indexing="ij")
        pre = np.stack([Y2.ravel(), Y3.ravel()], axis=1) @ self.S  # rows: S^T y
        self.Mx = ext_interp_matrix_2d(grid.xp, pre, mode, R - a)
        self.chi = self.cutoff.on_box(grid)

    def __call__(self, f: np.ndarray) -> np.ndarray:
        g = self.grid
        if f.shape != g.q_shape:
            raise ValueError(f"layout mismatch: expected waveguide shape {g.q_shape}, got {f.shape}")
        m = g.n + 2
        a = f[:, : g.Nx1].reshape(-1, m * m)
        b = (self.Mx @ a.T).T.reshape(g.Nt + 1, g.Nx1, g.box_N2, g.box_N3)
        c = np.tensordot(self.Mt, b, axes=(1, 0))
        return c * self.chi


def extend_and_cutoff(
    f: np.ndarray,
    grid: SpaceTimeGrid,
    S: np.ndarray | None = None,
    cutoff: Cutoff | None = None,
    mode: str = "smooth",
) -> np.ndarray:
    """Lift a waveguide field to the box: ``h = chi * (P f)(t, x1, S^T x')``.

    ``P`` extends across ``t = 0, T`` and across the faces of ``omega``:
    ``mode='smooth'`` is a damped ``C^2`` reflection, ``mode='even'`` the
    plain even fold.
    """
    return Extension(grid, np.eye(2) if S is None else S, cutoff, mode)(f)
