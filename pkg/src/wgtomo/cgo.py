"""Complex geometric optics solutions on one fiber.

For ``zeta = (xi, tau)`` with ``xi`` complex and ``tau = xi . xi``, the field

    u = (exp(i theta x1) + w) * exp(-i ((xi.xi + 4 pi^2 k^2) t + 2 pi k x1 + x'.xi))

solves ``(-i d_t - Delta + V) u = 0`` when ``w`` is the fixed point of
``w = -E (V w + W exp(i theta x1))`` with ``W = V + theta^2 - 4 pi k theta``.
``E`` inverts the conjugated operator

    P = -i d_t - Delta + 4 i pi k d_x1 + 2 i xi . grad_x'

by extending to a box, rotating ``Im xi`` onto the ``-x2`` axis and dividing
each Fourier mode by its (never small) symbol.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .forward import Potential
from .lattice import (
    Cutoff,
    Extension,
    ModeLattice,
    SpaceTimeGrid,
    append_x1_endpoint,
    box_fourier_forward,
    coefficient_h2_norm,
    dx1_spectral,
    evaluate_box_modes,
    h2h2_waveguide_norm,
    l2_norm,
)


# ---------------------------------------------------------------------------
# zeta algebra


def _perp(eta):
    return np.array([-eta[1], eta[0]], dtype=float)


def build_zeta(eta, ell: float, r: float, branch: int = 1) -> tuple[np.ndarray, float]:
    """Closed-form ``(xi_j, tau_j)`` for branch ``j`` in ``{1, 2}``.

    ``xi_j = 1/2 ((-1)^(j+1) + ell/|eta|^2) eta + (-1)^j i r eta_perp/|eta_perp|``
    with ``eta_perp = (-eta_2, eta_1)``; ``tau_j = xi_j . xi_j`` (real).
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (2,):
        raise ValueError("eta must be a real 2-vector")
    n2 = float(eta @ eta)
    if n2 == 0.0:
        raise ValueError("eta must be nonzero")
    if not r > 0:
        raise ValueError("r must be positive")
    if branch not in (1, 2):
        raise ValueError("branch must be 1 or 2")
    sign = 1.0 if branch == 1 else -1.0
    c = 0.5 * (sign + ell / n2)
    perp = _perp(eta) / np.sqrt(n2)
    xi = c * eta - sign * 1j * r * perp
    tau = c * c * n2 - r * r
    return xi, float(tau)


def beta(k: int) -> float:
    """``0`` for even ``k``, ``4 pi^2`` for odd ``k``."""
    return 0.0 if int(k) % 2 == 0 else 4.0 * np.pi ** 2


def q_weight(eta, ell: float, k: int) -> float:
    eta = np.asarray(eta, dtype=float)
    n = float(np.hypot(*eta))
    if n == 0.0:
        raise ValueError("eta must be nonzero")
    return n * n + abs(ell) / n + float(k) ** 2


def split_k(k: int) -> tuple[int, int]:
    """Longitudinal modes ``(k1, k2)`` of the two CGO factors with ``k1 - k2 = k``.

    Even ``k``: ``(k/2, -k/2)``; odd ``k``: ``((k+1)/2, -(k-1)/2)``.  The
    product ``u1 conj(u2)`` then oscillates like ``exp(-2 i pi k x1)`` in
    ``x1`` and its time frequency is shifted by ``beta(k) k``.
    """
    k = int(k)
    if k % 2 == 0:
        return k // 2, -k // 2
    return (k + 1) // 2, -(k - 1) // 2


def zeta_identities(eta, ell, r) -> dict[str, float]:
    """Defects of the pair identities and slacks of the size bounds (both branches)."""
    eta = np.asarray(eta, dtype=float)
    (x1, t1), (x2, t2) = build_zeta(eta, ell, r, 1), build_zeta(eta, ell, r, 2)
    ne = float(np.hypot(*eta))
    out = {}
    for j, (x, t) in ((1, (x1, t1)), (2, (x2, t2))):
        out[f"im_norm_{j}"] = abs(np.linalg.norm(x.imag) - r)
        out[f"tau_{j}"] = abs(t - complex(x @ x))
        out[f"orth_{j}"] = abs(float(x.real @ x.imag))
        out[f"xi_bound_slack_{j}"] = 0.5 * (ne + abs(ell) / ne) + r - float(np.linalg.norm(x))
        out[f"tau_bound_slack_{j}"] = ne ** 2 + ell ** 2 / ne ** 2 + 2 * r * r - abs(t)
    out["pair_xi"] = float(np.abs(x1 - np.conj(x2) - eta).max())
    out["pair_tau"] = abs(t1 - t2 - ell)
    return out


# ---------------------------------------------------------------------------
# parameters


def default_c0(grid: SpaceTimeGrid) -> float:
    return 2.0 * grid.box_R / np.pi


def r_zero(bound: float, c0: float) -> float:
    """Threshold ``r0 = c0 (1 + M)`` above which the fixed point contracts."""
    return c0 * (1.0 + bound)


@dataclass(frozen=True)
class CgoParams:
    """Parameters of one CGO solution: ``eta``, ``ell``, ``r``, ``k``, ``theta``, branch."""

    eta: tuple[float, float]
    ell: float
    r: float
    k: int = 0
    theta: float = 0.0
    branch: int = 1

    def __post_init__(self):
        object.__setattr__(self, "eta", (float(self.eta[0]), float(self.eta[1])))
        object.__setattr__(self, "ell", float(self.ell))
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "theta", float(self.theta))
        build_zeta(self.eta, self.ell, self.r, self.branch)  # validates

    @cached_property
    def zeta(self):
        return build_zeta(self.eta, self.ell, self.r, self.branch)

    @property
    def xi(self) -> np.ndarray:
        return self.zeta[0]

    @property
    def tau(self) -> float:
        return self.zeta[1]

    @property
    def beta_k(self) -> float:
        return beta(self.k)

    @cached_property
    def S(self) -> np.ndarray:
        """Rotation with ``S e2 = -Im xi / r`` (``e2`` = unit vector of the ``x2`` axis)."""
        u = -self.xi.imag / self.r
        return np.array([[u[0], -u[1]], [u[1], u[0]]])

    @property
    def box_rotation(self) -> np.ndarray:
        """``A = S^T``: box coordinates are ``y' = A x'``, so ``A Im xi = -r e2``."""
        return self.S.T

    @cached_property
    def kappa(self) -> np.ndarray:
        """``(0, 2 pi k, S^T Re xi)``; orthogonal to ``e2`` in the rotated frame."""
        kr = self.box_rotation @ self.xi.real
        return np.array([0.0, 2.0 * np.pi * self.k, kr[0], kr[1]])

    def phase(self, grid: SpaceTimeGrid) -> np.ndarray:
        """``exp(-i ((xi.xi + 4 pi^2 k^2) t + 2 pi k x1 + x'.xi))`` on Q'."""
        t, x1, x2, x3 = grid.mesh()
        xi = self.xi
        arg = (self.tau + 4.0 * np.pi ** 2 * self.k ** 2) * t + 2.0 * np.pi * self.k * x1 + x2 * xi[0] + x3 * xi[1]
        return np.exp(-1j * arg)

    def with_r(self, r: float) -> "CgoParams":
        return CgoParams(self.eta, self.ell, r, self.k, self.theta, self.branch)


def _check_k(params: CgoParams, grid: SpaceTimeGrid):
    if abs(params.k) > grid.Nx1 // 4:
        raise ValueError(f"|k| = {abs(params.k)} exceeds the aliasing guard Nx1/4 = {grid.Nx1 // 4}")


# ---------------------------------------------------------------------------
# the resolvent E


def resolvent_symbol(params: CgoParams, grid: SpaceTimeGrid) -> np.ndarray:
    """``D(alpha) = alpha0 + |alpha|^2 - 2 kappa . alpha + 2 i r alpha2`` on the box lattice."""
    a0, a1, a2, a3 = ModeLattice(grid, params.theta).alpha
    kap = params.kappa
    real = a0 + a1 ** 2 + a2 ** 2 + a3 ** 2 - 2.0 * (kap[1] * a1 + kap[2] * a2 + kap[3] * a3)
    return real + 2j * params.r * a2


def resolvent_divide(c: np.ndarray, params: CgoParams, grid: SpaceTimeGrid) -> np.ndarray:
    return c / resolvent_symbol(params, grid)


def resolvent_bound(params: CgoParams, grid: SpaceTimeGrid) -> float:
    """``R / (r pi)``: lower bound ``|Im D| >= r pi / R`` inverted."""
    return grid.box_R / (params.r * np.pi)


class ResolventPlan:
    """Precomputed extension, symbol and evaluation points for one ``(grid, params)``."""

    def __init__(self, grid: SpaceTimeGrid, params: CgoParams, cutoff: Cutoff | None = None):
        if not params.r > 0:
            raise ValueError("r must be positive")
        _check_k(params, grid)
        self.grid = grid
        self.params = params
        A = params.box_rotation
        self.extension = Extension(grid, A, cutoff)
        self.symbol = resolvent_symbol(params, grid)
        X2, X3 = np.meshgrid(grid.xp, grid.xp, indexing="ij")
        self.points = np.stack([X2.ravel(), X3.ravel()], axis=1) @ A.T  # rows: A x'

    def coefficients(self, f: np.ndarray) -> np.ndarray:
        """Box coefficients of the extended, rotated, cut-off ``f``."""
        return box_fourier_forward(self.extension(f), self.grid, self.params.theta)

    def evaluate(self, c: np.ndarray) -> np.ndarray:
        """Box series back on Q' (waveguide layout, quasi-periodic endpoint appended)."""
        g = self.grid
        m = g.n + 2
        vals = evaluate_box_modes(c, g, self.params.theta, g.t, g.x1[: g.Nx1], self.points)
        vals = vals.reshape(vals.shape[:-1] + (m, m))
        return append_x1_endpoint(vals, self.params.theta)

    def __call__(self, f: np.ndarray) -> np.ndarray:
        return self.evaluate(self.coefficients(f) / self.symbol)

    def residual(self, f: np.ndarray) -> float:
        """Relative ``L2(Q')`` defect of ``P E f = f``, with ``P`` applied mode-wise."""
        back = self.evaluate(self.coefficients(f))
        return l2_norm(back - f, self.grid) / max(l2_norm(f, self.grid), np.finfo(float).tiny)


@lru_cache(maxsize=4)
def _plan(grid: SpaceTimeGrid, params: CgoParams) -> ResolventPlan:
    return ResolventPlan(grid, params)


def apply_E(f: np.ndarray, params: CgoParams, grid: SpaceTimeGrid) -> np.ndarray:
    """Right inverse of ``P`` on Q' (see module docstring)."""
    return _plan(grid, params)(f)


def conjugated_operator(phi: np.ndarray, params: CgoParams, grid: SpaceTimeGrid) -> np.ndarray:
    """Finite-difference ``P phi`` on interior nodes (4th order in ``t`` and ``x'``).

    Returns the values on ``t`` nodes ``2..Nt-2``, ``x1`` nodes ``0..Nx1-1``
    and cross-section nodes ``2..n-1``; see :func:`interior_slices`.
    """
    th = params.theta
    dt, h = grid.dt, grid.cross_section.h
    xi = params.xi
    It, Ix = interior_slices(grid)
    p = phi[:, : grid.Nx1]
    dtp = _d1_4(p, dt, 0)[It][:, :, Ix, Ix]
    d2, d3 = _d1_4(p, h, 2), _d1_4(p, h, 3)
    lap = _d2_4(p, h, 2) + _d2_4(p, h, 3) + dx1_spectral(phi, grid, th, 2)[:, : grid.Nx1]
    d1 = dx1_spectral(phi, grid, th, 1)[:, : grid.Nx1]
    out = -1j * dtp - lap[It][:, :, Ix, Ix] + 4j * np.pi * params.k * d1[It][:, :, Ix, Ix]
    out = out + 2j * (xi[0] * d2 + xi[1] * d3)[It][:, :, Ix, Ix]
    return out


def interior_slices(grid: SpaceTimeGrid):
    return slice(2, grid.Nt - 1), slice(2, grid.n)


def _d1_4(f, h, axis):
    out = np.zeros_like(f)
    s = [slice(None)] * f.ndim

    def sh(a, b):
        s2 = list(s)
        s2[axis] = slice(a, f.shape[axis] + b if b <= 0 else b)
        return f[tuple(s2)]

    core = list(s)
    core[axis] = slice(2, f.shape[axis] - 2)
    out[tuple(core)] = (sh(0, -4) - 8 * sh(1, -3) + 8 * sh(3, -1) - sh(4, 0)) / (12 * h)
    return out


def _d2_4(f, h, axis):
    out = np.zeros_like(f)
    s = [slice(None)] * f.ndim

    def sh(a, b):
        s2 = list(s)
        s2[axis] = slice(a, f.shape[axis] + b if b <= 0 else b)
        return f[tuple(s2)]

    core = list(s)
    core[axis] = slice(2, f.shape[axis] - 2)
    out[tuple(core)] = (-sh(0, -4) + 16 * sh(1, -3) - 30 * sh(2, -2) + 16 * sh(3, -1) - sh(4, 0)) / (12 * h * h)
    return out


# ---------------------------------------------------------------------------
# fixed point and assembly


@dataclass
class CgoSolution:
    params: CgoParams
    w: np.ndarray
    u: np.ndarray | None = None
    updates: list[float] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)
    converged: bool = False
    residual: float | None = None
    r0: float | None = None

    @property
    def iterations(self) -> int:
        return len(self.updates)

    @property
    def contraction(self) -> float:
        """Largest observed ratio of successive update norms (0 if fewer than two updates)."""
        return max(self.ratios, default=0.0)


# finite-difference second derivatives in the H^2 proxy amplify round-off by
# roughly dt^-2 h^-2; below this relative level update norms are noise
_FLOOR = 1e-7


class ContractionError(RuntimeError):
    """The fixed-point map failed to contract (``r`` too small for the configured ``c0``)."""


def source_W(V: Potential, params: CgoParams) -> np.ndarray:
    return V.values + params.theta ** 2 - 4.0 * np.pi * params.k * params.theta


def fixed_point_w(
    V: Potential,
    params: CgoParams,
    grid: SpaceTimeGrid,
    tol: float = 1e-10,
    max_iter: int = 50,
    c0: float | None = None,
    enforce_r0: bool = True,
) -> CgoSolution:
    """Iterate ``w <- -E(V w + W exp(i theta x1))`` from ``w = 0``.

    Stops once the ``H^2`` proxy norm of the update drops below
    ``tol * max(1, ||w||)``, or once it stagnates at the round-off floor of
    the proxy.  Raises :class:`ContractionError` when an observed contraction
    ratio reaches one above that floor.
    """
    _check_k(params, grid)
    c0 = default_c0(grid) if c0 is None else c0
    r0 = r_zero(V.bound, c0)
    if enforce_r0 and params.r < r0 * (1 - 1e-12):
        raise ValueError(f"r = {params.r:.6g} is below r0 = {r0:.6g}")
    plan = _plan(grid, params)
    _, x1, _, _ = grid.mesh()
    Wsrc = source_W(V, params) * np.exp(1j * params.theta * x1)
    Vv = V.values
    th = params.theta
    sol = CgoSolution(params, np.zeros(grid.q_shape, complex), r0=r0)
    if not np.any(Wsrc):
        sol.updates.append(0.0)
        sol.converged = True
        return sol
    w = sol.w
    wn = None
    for _ in range(max_iter):
        new = -plan(Vv * w + Wsrc)
        d = h2h2_waveguide_norm(new - w, grid, th)
        w = new
        sol.updates.append(d)
        if not np.any(Vv):
            # zero potential: the map is constant, one application is exact
            sol.converged = True
            break
        if wn is None or d < 10.0 * tol * max(1.0, wn):
            wn = h2h2_waveguide_norm(w, grid, th)
        if len(sol.updates) > 1 and sol.updates[-2] > 0:
            ratio = d / sol.updates[-2]
            sol.ratios.append(ratio)
            if ratio >= 1.0:
                if d < _FLOOR * max(1.0, wn):
                    # stagnation at the round-off floor of the H^2 proxy
                    sol.converged = True
                    break
                sol.w = w
                raise ContractionError(
                    f"contraction ratio {ratio:.3g} >= 1 at r = {params.r:.6g} (r0 = {r0:.6g})"
                )
        if d < tol * max(1.0, wn):
            sol.converged = True
            break
    sol.w = w
    return sol


def assemble_cgo(w: np.ndarray, params: CgoParams, grid: SpaceTimeGrid) -> np.ndarray:
    _, x1, _, _ = grid.mesh()
    return (np.exp(1j * params.theta * x1) + w) * params.phase(grid)


def cgo_residual(u: np.ndarray, V: Potential | np.ndarray, grid: SpaceTimeGrid, theta: float) -> float:
    """Relative interior defect of ``(-i d_t - Delta + V) u``.

    Fourth-order central differences in ``t`` and ``x'``, spectral in ``x1``;
    normalised by ``||d_t u|| + ||Delta u|| + ||V u||`` over the same nodes.
    """
    Vv = V.values if isinstance(V, Potential) else np.asarray(V)
    dt, h = grid.dt, grid.cross_section.h
    It, Ix = interior_slices(grid)
    p = u[:, : grid.Nx1]
    ut = _d1_4(p, dt, 0)
    lap = _d2_4(p, h, 2) + _d2_4(p, h, 3) + dx1_spectral(u, grid, theta, 2)[:, : grid.Nx1]
    vu = Vv[:, : grid.Nx1] * p

    def cut(a):
        return a[It][:, :, Ix, Ix]

    res = -1j * cut(ut) - cut(lap) + cut(vu)
    num = np.linalg.norm(res)
    den = np.linalg.norm(cut(ut)) + np.linalg.norm(cut(lap)) + np.linalg.norm(cut(vu))
    return float(num / den) if den > 0 else 0.0


def build_cgo(
    V: Potential,
    params: CgoParams,
    grid: SpaceTimeGrid,
    tol: float = 1e-10,
    max_iter: int = 50,
    c0: float | None = None,
    enforce_r0: bool = True,
) -> CgoSolution:
    """Fixed point, assembly and residual in one call."""
    sol = fixed_point_w(V, params, grid, tol, max_iter, c0, enforce_r0)
    sol.u = assemble_cgo(sol.w, params, grid)
    sol.residual = cgo_residual(sol.u, V, grid, params.theta)
    return sol


def coefficient_bound_check(c: np.ndarray, params: CgoParams, grid: SpaceTimeGrid) -> tuple[float, float]:
    """``(||c / D||, R/(r pi) ||c||)`` in the box ``H^2`` coefficient norm."""
    lat = ModeLattice(grid, params.theta)
    lhs = coefficient_h2_norm(resolvent_divide(c, params, grid), lat)
    rhs = resolvent_bound(params, grid) * coefficient_h2_norm(c, lat)
    return lhs, rhs


__all__ = [
    "CgoParams",
    "CgoSolution",
    "ContractionError",
    "ResolventPlan",
    "apply_E",
    "assemble_cgo",
    "beta",
    "build_cgo",
    "build_zeta",
    "cgo_residual",
    "coefficient_bound_check",
    "conjugated_operator",
    "default_c0",
    "fixed_point_w",
    "interior_slices",
    "q_weight",
    "r_zero",
    "resolvent_divide",
    "resolvent_symbol",
    "source_W",
    "split_k",
    "zeta_identities",
]
