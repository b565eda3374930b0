"""Fourier coefficients of ``V2 - V1`` from boundary data, and resummation.

Lattice conventions.  A difference ``d = V2 - V1`` vanishing at ``t = 0, T``
and on the lateral boundary is extended by zero and expanded on

    ell' in (2 pi / T) Z,   eta in (2 pi / L) Z^2,   k in Z,

with coefficients ``v(ell', eta, k) = int_{Q'} d exp(-i (ell' t + 2 pi k x1 + x'.eta))``
and ``||d||^2 = sum |v|^2 / (T P L^2)``.  The CGO pair probing ``(ell', eta, k)``
is built with ``ell = ell' - beta(k) k`` (the time shift produced by splitting
``k`` between the two factors); balls and cones are measured in the
``(ell, eta, k)`` variables.

Sign conventions.  For ``L_V = -i d_t - Delta + V``, with ``u1`` a CGO for
``V1``, ``u2`` a CGO for ``V2`` and ``u = v - u1`` where ``v`` solves the
``V2`` problem with the data of ``u1``,

    int (V1 - V2) u1 conj(u2) = -int_Sigma d_nu u conj(u2) - i int u(T) conj(u2(T)).

Writing ``u1 conj(u2) = (1 + rho) e``, the probed quantity is

    int (V1 - V2) e = B + C + A,   A = int (V2 - V1) rho e,

with ``B + C`` the right-hand side above.  ``A`` needs both potentials and is
only available as a diagnostic; the boundary estimate is ``B + C``.  The
Fourier coefficient of ``d = V2 - V1`` is minus the probed quantity.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cgo import CgoParams, CgoSolution, build_cgo, beta, split_k
from .forward import (
    BoundaryData,
    Potential,
    ProbeInput,
    boundary_operator,
    final_inner,
    lateral_inner,
    operator_norm_estimate,
    trace_faces,
)
from .lattice import SpaceTimeGrid, l2_norm


# ---------------------------------------------------------------------------
# frequency lattice


@dataclass(frozen=True)
class FrequencyPoint:
    """CGO frequency ``(ell, eta, k)``; the probed time frequency is ``ell + beta(k) k``."""

    ell: float
    eta: tuple[float, float]
    k: int

    def __post_init__(self):
        object.__setattr__(self, "ell", float(self.ell))
        object.__setattr__(self, "eta", (float(self.eta[0]), float(self.eta[1])))
        object.__setattr__(self, "k", int(self.k))

    @classmethod
    def from_shifted(cls, ell_shifted: float, eta, k: int) -> "FrequencyPoint":
        return cls(ell_shifted - beta(k) * k, eta, k)

    @property
    def shifted(self) -> float:
        return self.ell + beta(self.k) * self.k

    @property
    def norm(self) -> float:
        return math.sqrt(self.ell ** 2 + self.eta[0] ** 2 + self.eta[1] ** 2 + self.k ** 2)

    @property
    def eta_norm(self) -> float:
        return math.hypot(*self.eta)

    def conjugate(self) -> "FrequencyPoint":
        return FrequencyPoint.from_shifted(-self.shifted, (-self.eta[0], -self.eta[1]), -self.k)


class FrequencyLattice:
    """Discrete lattice dual to the waveguide grid (one DFT period per axis).

    Integer labels: ``a`` for ``ell' = 2 pi a / T``, ``(b2, b3)`` for
    ``eta = 2 pi b / L``, ``k``.  Array axes follow ``(a, k, b2, b3)``.
    """

    def __init__(self, grid: SpaceTimeGrid):
        self.grid = grid
        nx = grid.n + 1  # periodic samples across the cross-section
        self.a = np.fft.fftfreq(grid.Nt, d=1.0 / grid.Nt).astype(int)
        self.k = np.fft.fftfreq(grid.Nx1, d=1.0 / grid.Nx1).astype(int)
        self.b = np.fft.fftfreq(nx, d=1.0 / nx).astype(int)
        T, L, P = grid.T, grid.cross_section.side, grid.x1_length
        self.ell_shifted = 2.0 * np.pi * self.a / T
        self.eta_axis = 2.0 * np.pi * self.b / L
        self.volume = T * P * L * L
        if P != 1.0:
            raise ValueError("frequency lattice assumes a unit cell along x1")

    @property
    def shape(self):
        return (self.a.size, self.k.size, self.b.size, self.b.size)

    def cgo_ell(self) -> np.ndarray:
        """``ell = ell' - beta(k) k`` broadcast over ``(a, k, 1, 1)``."""
        bk = np.array([beta(k) * k for k in self.k])
        return self.ell_shifted[:, None, None, None] - bk[None, :, None, None]

    def norms(self) -> np.ndarray:
        e2 = self.eta_axis
        return np.sqrt(
            self.cgo_ell() ** 2
            + (self.k ** 2)[None, :, None, None]
            + (e2 ** 2)[None, None, :, None]
            + (e2 ** 2)[None, None, None, :]
        )

    def eta_norms(self) -> np.ndarray:
        e = self.eta_axis
        return np.sqrt(e[:, None] ** 2 + e[None, :] ** 2)[None, None, :, :]

    def ball(self, rho: float) -> np.ndarray:
        return self.norms() < rho

    def cone(self, rho: float) -> np.ndarray:
        return np.broadcast_to(self.eta_norms() < 1.0 / rho, self.shape)

    def unaliased(self) -> np.ndarray:
        """False on the Nyquist label of any even-length axis."""
        ok = [np.ones(n, bool) for n in self.shape]
        for axis, n in enumerate(self.shape):
            if n % 2 == 0:
                ok[axis][n // 2] = False
        return ok[0][:, None, None, None] & ok[1][None, :, None, None] & ok[2][None, None, :, None] & ok[3][
            None, None, None, :]

    def point(self, idx) -> FrequencyPoint:
        ia, ik, i2, i3 = idx
        return FrequencyPoint.from_shifted(
            self.ell_shifted[ia], (self.eta_axis[i2], self.eta_axis[i3]), int(self.k[ik])
        )

    def partner(self, idx):
        """Index of the conjugate point ``(-ell', -eta, -k)`` (modulo the DFT period)."""
        return tuple((-np.asarray(idx)) % np.array(self.shape))

    def _kernels(self):
        g = self.grid
        t, x1, xp = g.t, g.x1, g.xp
        Et = np.exp(-1j * np.outer(self.ell_shifted, t))
        E1 = np.exp(-2j * np.pi * np.outer(self.k, x1))
        Ex = np.exp(-1j * np.outer(self.eta_axis, xp))
        return Et, E1, Ex

    def analyse(self, d: np.ndarray) -> np.ndarray:
        """Quadrature coefficients ``int_{Q'} d exp(-i(...))`` on the whole lattice."""
        g = self.grid
        Et, E1, Ex = self._kernels()
        f = d * g.q_weights
        return np.einsum("at,kx,bp,cq,txpq->akbc", Et, E1, Ex, Ex, f, optimize=True)

    def synthesise(self, coef: np.ndarray) -> np.ndarray:
        """``sum coef exp(+i(...)) / volume`` on the waveguide layout."""
        Et, E1, Ex = self._kernels()
        out = np.einsum(
            "at,kx,bp,cq,akbc->txpq", Et.conj(), E1.conj(), Ex.conj(), Ex.conj(), coef, optimize=True
        )
        return out / self.volume


def probe_set(lattice: FrequencyLattice, rho: float, k_max: int | None = None) -> list[tuple]:
    """Half of ``B_rho`` minus the cone, one representative per conjugate pair.

    ``k_max`` optionally narrows the longitudinal window.  Nyquist labels are
    skipped: their sign is ambiguous, so the conjugate partner is not defined.
    """
    mask = lattice.ball(rho) & ~lattice.cone(rho)
    mask &= lattice.unaliased()
    if k_max is not None:
        mask &= (np.abs(lattice.k) <= k_max)[None, :, None, None]
    chosen = []
    seen = set()
    for idx in zip(*np.nonzero(mask)):
        idx = tuple(int(i) for i in idx)
        if idx in seen:
            continue
        partner = tuple(int(i) for i in lattice.partner(idx))
        seen.add(idx)
        seen.add(partner)
        chosen.append(idx)
    return chosen


# ---------------------------------------------------------------------------
# probing one coefficient


def phase_e(fp: FrequencyPoint, grid: SpaceTimeGrid) -> np.ndarray:
    t, x1, x2, x3 = grid.mesh()
    return np.exp(-1j * (fp.shifted * t + 2.0 * np.pi * fp.k * x1 + x2 * fp.eta[0] + x3 * fp.eta[1]))


def oracle_coefficient(V1: Potential, V2: Potential, fp: FrequencyPoint, grid: SpaceTimeGrid) -> complex:
    """``int_{Q'} (V1 - V2) exp(-i((ell + beta k) t + 2 pi k x1 + x'.eta))`` by quadrature."""
    return complex(np.sum(grid.q_weights * (V1.values - V2.values) * phase_e(fp, grid)))


@dataclass
class CgoPair:
    u1: CgoSolution
    u2: CgoSolution


def cgo_pair(
    V1: Potential, V2: Potential, fp: FrequencyPoint, r: float, theta: float, grid: SpaceTimeGrid, **cgo_kw
) -> CgoPair:
    if fp.eta_norm == 0:
        raise ValueError("eta must be nonzero for a CGO probe")
    k1, k2 = split_k(fp.k)
    p1 = CgoParams(fp.eta, fp.ell, r, k1, theta, branch=1)
    p2 = CgoParams(fp.eta, fp.ell, r, k2, theta, branch=2)
    return CgoPair(build_cgo(V1, p1, grid, **cgo_kw), build_cgo(V2, p2, grid, **cgo_kw))


def green_terms(d: BoundaryData, u2: np.ndarray, grid: SpaceTimeGrid) -> tuple[complex, complex]:
    """``B = -int_Sigma (Lambda2 - Lambda1)^1 conj(u2)``, ``C = -i int (Lambda2 - Lambda1)^2 conj(u2(T))``."""
    faces = trace_faces(u2)[..., 1:-1]
    B = -lateral_inner(d.neumann, faces, grid)
    C = -1j * final_inner(d.final, u2[-1], grid)
    return B, C


def a_term(V1: Potential, V2: Potential, pair: CgoPair, fp: FrequencyPoint, grid: SpaceTimeGrid) -> complex:
    """``A = int (V2 - V1) rho e`` with ``rho = e^{-i theta x1} w1 + e^{i theta x1} conj(w2) + w1 conj(w2)``."""
    theta = pair.u1.params.theta
    _, x1, _, _ = grid.mesh()
    w1, w2 = pair.u1.w, pair.u2.w
    rho = np.exp(-1j * theta * x1) * w1 + np.exp(1j * theta * x1) * np.conj(w2) + w1 * np.conj(w2)
    return complex(np.sum(grid.q_weights * (V2.values - V1.values) * rho * phase_e(fp, grid)))


@dataclass
class ProbeResult:
    point: FrequencyPoint
    estimate: complex
    mode: str
    oracle: complex | None = None
    B: complex | None = None
    C: complex | None = None
    A: complex | None = None
    probe_norm: float | None = None
    data_norm: float | None = None
    cgo_residuals: tuple[float, float] | None = None
    contraction: tuple[float, float] | None = None

    @property
    def gap(self) -> float | None:
        return None if self.oracle is None else abs(self.estimate - self.oracle)


class ProbeCache:
    """Reuse of ``V1``-side work (``u1`` and ``Lambda_{V1}(g1)``) across several ``V2``."""

    def __init__(self):
        self.u1: dict = {}
        self.lam1: dict = {}


def fourier_probe(
    V1: Potential,
    V2: Potential,
    fp: FrequencyPoint,
    r: float,
    theta: float,
    mode: str,
    grid: SpaceTimeGrid,
    diagnostics: bool = True,
    cache: ProbeCache | None = None,
    **cgo_kw,
) -> ProbeResult:
    """Estimate ``int (V1 - V2) exp(-i((ell + beta k) t + 2 pi k x1 + x'.eta))``.

    ``oracle``: direct quadrature.  ``boundary``: ``B + C`` from the boundary
    operators of both potentials on the CGO probe ``u1``; with
    ``diagnostics`` the oracle value and the unobservable ``A`` are attached
    (``oracle - estimate = A`` up to discretization error).
    """
    if mode == "oracle":
        v = oracle_coefficient(V1, V2, fp, grid)
        return ProbeResult(fp, v, mode, oracle=v)
    if mode != "boundary":
        raise ValueError(f"unknown mode {mode!r}")
    k1, k2 = split_k(fp.k)
    key = (fp, r, theta)
    if cache is not None and key in cache.u1:
        s1 = cache.u1[key]
    else:
        s1 = build_cgo(V1, CgoParams(fp.eta, fp.ell, r, k1, theta, branch=1), grid, **cgo_kw)
        if cache is not None:
            cache.u1[key] = s1
    s2 = build_cgo(V2, CgoParams(fp.eta, fp.ell, r, k2, theta, branch=2), grid, **cgo_kw)
    probe = ProbeInput.from_field(s1.u, grid, theta)
    if cache is not None and key in cache.lam1:
        lam1 = cache.lam1[key]
    else:
        lam1 = boundary_operator(V1, probe, grid)
        if cache is not None:
            cache.lam1[key] = lam1
    d = boundary_operator(V2, probe, grid) - lam1
    B, C = green_terms(d, s2.u, grid)
    res = ProbeResult(
        fp,
        B + C,
        mode,
        B=B,
        C=C,
        probe_norm=probe.norm,
        data_norm=d.norm(grid),
        cgo_residuals=(s1.residual, s2.residual),
        contraction=(s1.contraction, s2.contraction),
    )
    if diagnostics:
        res.oracle = oracle_coefficient(V1, V2, fp, grid)
        res.A = a_term(V1, V2, CgoPair(s1, s2), fp, grid)
    return res


def green_identity_residual(
    V1: Potential, V2: Potential, fp: FrequencyPoint, r: float, theta: float, grid: SpaceTimeGrid, **cgo_kw
) -> dict:
    """Defect of ``int (V1-V2) u1 conj(u2) + int_Sigma d_nu u conj(u2) + i int u(T) conj(u2(T))``.

    ``u`` solves the homogeneous-data problem with source ``(V1 - V2) u1``
    for ``V2``.  Returned relative to the largest of the three terms.
    """
    from .forward import solve_fiber_ibvp, neumann_trace

    pair = cgo_pair(V1, V2, fp, r, theta, grid, **cgo_kw)
    u1, u2 = pair.u1.u, pair.u2.u
    src = (V1.values - V2.values) * u1
    u = solve_fiber_ibvp(V2, ProbeInput.zero(grid, theta), grid, source=src)
    lhs = complex(np.sum(grid.q_weights * src * np.conj(u2)))
    faces = trace_faces(u2)[..., 1:-1]
    b = lateral_inner(neumann_trace(u, grid), faces, grid)
    c = 1j * final_inner(u[-1], u2[-1], grid)
    scale = max(abs(lhs), abs(b), abs(c))
    return {"lhs": lhs, "boundary": b, "final": c, "residual": abs(lhs + b + c) / scale, "scale": scale}


# ---------------------------------------------------------------------------
# recovery


@dataclass
class RecoveryResult:
    rho: float
    r: float | None
    theta: float
    mode: str
    probes: list[ProbeResult]
    coefficients: np.ndarray
    field: np.ndarray
    imag_residue: float
    error: float
    relative_error: float
    budget: dict[str, float]
    records: list[dict] = field(default_factory=list)

    @property
    def n_probed(self) -> int:
        return len(self.probes)


def _probe_task(args):
    V1, V2, fp, r, theta, mode, grid, diag, cgo_kw = args
    return fourier_probe(V1, V2, fp, r, theta, mode, grid, diagnostics=diag, **cgo_kw)


def _map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))  # preserves input order


def recover_potential(
    V1: Potential,
    V2: Potential,
    rho: float,
    r: float | None,
    theta: float,
    mode: str,
    grid: SpaceTimeGrid,
    k_max: int | None = None,
    workers: int = 1,
    diagnostics: bool = True,
    cache: ProbeCache | None = None,
    **cgo_kw,
) -> RecoveryResult:
    """Probe ``B_rho`` minus the cone, resum, and report the error budget.

    Coefficients outside the probed set are set to zero; conjugate partners
    are filled by Hermitian symmetry so the reconstruction is real.
    """
    if rho < 1:
        raise ValueError("rho must be at least 1")
    if mode == "boundary" and (r is None or not r > 0):
        raise ValueError("boundary mode needs r > 0")
    lat = FrequencyLattice(grid)
    idxs = probe_set(lat, rho, k_max)
    if not idxs:
        raise ValueError(f"no lattice frequency in B_rho minus the cone for rho = {rho:g}")
    pts = [lat.point(i) for i in idxs]
    if mode == "oracle":
        # same quadrature as oracle_coefficient, evaluated for all points at once
        table = lat.analyse(V1.values - V2.values)
        probes = [ProbeResult(fp, complex(table[i]), mode, oracle=complex(table[i])) for fp, i in zip(pts, idxs)]
    elif mode != "boundary":
        raise ValueError(f"unknown mode {mode!r}")
    elif cache is not None:
        probes = [
            fourier_probe(V1, V2, fp, r, theta, mode, grid, diagnostics=diagnostics, cache=cache, **cgo_kw)
            for fp in pts
        ]
    else:
        probes = _map(_probe_task, [(V1, V2, fp, r, theta, mode, grid, diagnostics, cgo_kw) for fp in pts], workers)
    coef = np.zeros(lat.shape, complex)
    for i, p in zip(idxs, probes):
        coef[i] = -p.estimate  # coefficient of V2 - V1
        j = lat.partner(i)
        if j != i:
            coef[j] = np.conj(coef[i])
    field_c = lat.synthesise(coef)
    scale = max(np.abs(field_c).max(), np.finfo(float).tiny)
    imag = float(np.abs(field_c.imag).max() / scale)
    rec = field_c.real
    d = V2.values - V1.values
    dn = l2_norm(d, grid)
    err = l2_norm(rec - d, grid)
    budget = error_budget(d, coef, lat, rho, idxs, k_max)
    return RecoveryResult(
        rho, r, theta, mode, probes, coef, rec, imag, err, err / dn if dn > 0 else 0.0, budget
    )


def error_budget(d, coef, lat: FrequencyLattice, rho, idxs, k_max=None) -> dict[str, float]:
    """Split ``||rec - d||^2`` over the lattice: tail (outside the probed window),
    cone, and error on the probed points.  Values are ``L2(Q')`` norms."""
    true = lat.analyse(d)
    w = 1.0 / lat.volume
    probed = np.zeros(lat.shape, bool)
    for i in idxs:
        probed[i] = True
        probed[lat.partner(i)] = True
    cone = lat.cone(rho) & lat.ball(rho)
    if k_max is not None:
        cone &= (np.abs(lat.k) <= k_max)[None, :, None, None]
    tail = ~probed & ~cone
    return {
        "tail": float(np.sqrt(w * np.sum(np.abs(true[tail]) ** 2))),
        "cone": float(np.sqrt(w * np.sum(np.abs(true[cone]) ** 2))),
        "probed": float(np.sqrt(w * np.sum(np.abs(coef[probed] - true[probed]) ** 2))),
        "total_true": float(np.sqrt(w * np.sum(np.abs(true) ** 2))),
    }


def parseval_defect(d: np.ndarray, grid: SpaceTimeGrid) -> float:
    """Relative gap between ``||d||^2`` and the lattice sum of ``|v|^2 / volume``."""
    lat = FrequencyLattice(grid)
    c = lat.analyse(d)
    lhs = l2_norm(d, grid) ** 2
    rhs = float(np.sum(np.abs(c) ** 2) / lat.volume)
    return abs(lhs - rhs) / lhs if lhs > 0 else abs(rhs)


# ---------------------------------------------------------------------------
# stability sweep


def r_rule(gamma: float, area: float, r_min: float, r_max: float) -> float:
    """``r = ln(1/gamma) / (4 |omega|)`` clipped to ``[r_min, r_max]``."""
    if not gamma > 0:
        return r_max
    return float(np.clip(np.log(1.0 / gamma) / (4.0 * area), r_min, r_max))


@dataclass
class SweepRow:
    eps: float
    gamma: float
    r: float
    error: float
    true_norm: float
    relative_error: float
    n_probed: int
    note: str = ""


def stability_sweep(
    V1: Potential,
    W: np.ndarray,
    eps_list,
    theta: float,
    grid: SpaceTimeGrid,
    rho: float,
    r_probe: float,
    r_max: float,
    k_max: int | None = None,
    c0: float | None = None,
    **cgo_kw,
) -> list[SweepRow]:
    """For each ``eps``: gamma-hat from CGO probes, ``r`` from the log rule, recovery.

    The probe family is the set of ``u1`` CGOs (built at ``r_probe``) for the
    points of ``B_rho`` minus the cone.
    """
    from .cgo import default_c0, r_zero

    lat = FrequencyLattice(grid)
    idxs = probe_set(lat, rho, k_max)
    if not idxs:
        raise ValueError(f"no lattice frequency in B_rho minus the cone for rho = {rho:g}")
    c0 = default_c0(grid) if c0 is None else c0
    area = grid.cross_section.area
    probes = []
    for i in idxs:
        fp = lat.point(i)
        k1, _ = split_k(fp.k)
        s1 = build_cgo(V1, CgoParams(fp.eta, fp.ell, r_probe, k1, theta, 1), grid, c0=c0, **cgo_kw)
        probes.append(ProbeInput.from_field(s1.u, grid, theta))
    cache = ProbeCache()
    rows = []
    for eps in eps_list:
        V2 = Potential(V1.values + eps * W, name=f"{V1.name}+eps*W")
        tn = l2_norm(eps * W, grid)
        if eps == 0:
            rows.append(SweepRow(0.0, 0.0, float("nan"), 0.0, 0.0, 0.0, 0, "identical potentials"))
            continue
        gamma = operator_norm_estimate(V1, V2, theta, probes, grid)
        if gamma == 0:
            rows.append(SweepRow(eps, 0.0, float("nan"), 0.0, tn, 0.0, 0, "gamma = 0"))
            continue
        r0 = r_zero(max(V1.bound, V2.bound), c0)
        r = r_rule(gamma, area, r0, max(r_max, r0))
        rec = recover_potential(
            V1, V2, rho, r, theta, "boundary", grid, k_max=k_max, diagnostics=False, cache=cache, c0=c0, **cgo_kw
        )
        rows.append(SweepRow(eps, gamma, r, rec.error, tn, rec.relative_error, rec.n_probed))
    return rows


__all__ = [
    "FrequencyPoint",
    "FrequencyLattice",
    "ProbeResult",
    "ProbeCache",
    "RecoveryResult",
    "SweepRow",
    "a_term",
    "cgo_pair",
    "error_budget",
    "fourier_probe",
    "green_identity_residual",
    "green_terms",
    "oracle_coefficient",
    "parseval_defect",
    "probe_set",
    "r_rule",
    "recover_potential",
    "stability_sweep",
]
