"""The twelve acceptance checks.

Each check builds its own inputs, measures, and returns a :class:`CheckResult`
with the measured quantities and the threshold it was held to.  Grids are the
default desk grid unless the check says otherwise; the boundary-mode checks
(11, 12) run on a reduced grid so that every CGO pair costs about a second.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import cgo as C
from . import fbg as F
from . import forward as FW
from . import inverse as INV
from .lattice import (
    CrossSection,
    ModeLattice,
    SpaceTimeGrid,
    box_fourier_forward,
    box_fourier_inverse,
    h2h2_waveguide_norm,
    l2_norm,
)
from .presets import lattice_mode, separable_bump


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    criterion: str
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:2d} {self.name}: {self.note or self.criterion} ({self.seconds:.1f}s)"


def desk_grid() -> SpaceTimeGrid:
    return SpaceTimeGrid(0.5, 64, 32, CrossSection(0.5, 24), 1.0)


def reduced_grid() -> SpaceTimeGrid:
    """Grid for the boundary-mode checks: same domain, coarser sampling."""
    return SpaceTimeGrid(0.5, 32, 8, CrossSection(0.5, 12), 1.0, 32, 32, 32)


def _timed(number: int, name: str, criterion: str, body: Callable[[], tuple[bool, dict, str]]) -> CheckResult:
    t0 = time.perf_counter()
    passed, measured, note = body()
    return CheckResult(number, name, bool(passed), criterion, measured, time.perf_counter() - t0, note)


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


# ---------------------------------------------------------------------------
# 1-3: transform and forward solver


def check_fbg(seed: int = 0) -> CheckResult:
    def body():
        rng = np.random.default_rng(seed)
        # the transform acts along x1 only; a 6 x 6 cross-section keeps K = 16 light
        g = SpaceTimeGrid(0.5, 64, 32, CrossSection(0.5, 4), 1.0)
        worst_norm = worst_inv = 0.0
        for K in (2, 4, 8, 16):
            gc = g.with_cells(K)
            f = rng.standard_normal(gc.q_shape) + 1j * rng.standard_normal(gc.q_shape)
            f[:, -1] = f[:, 0]
            Ff = F.fbg_forward(f, K)
            n_cyl = F.cylinder_norm(f, K, lambda c: l2_norm(c, g))
            n_fib = F.fibered_norm(Ff, lambda c: l2_norm(c, g))
            back = F.fbg_inverse(Ff)
            worst_norm = max(worst_norm, abs(n_cyl - n_fib) / n_cyl)
            worst_inv = max(worst_inv, float(np.linalg.norm(back - f) / np.linalg.norm(f)))
        ok = worst_norm <= 1e-10 and worst_inv <= 1e-10
        return ok, {"norm_defect": worst_norm, "inverse_defect": worst_inv}, (
            f"norm defect {worst_norm:.1e}, inversion defect {worst_inv:.1e} (tol 1e-10)")

    return _timed(1, "FBG unitarity and roundtrip", "norm and inversion to 1e-10 for K in {2,4,8,16}", body)


def check_fiber_equivalence(grid: SpaceTimeGrid | None = None) -> CheckResult:
    def body():
        g = grid or desk_grid()
        K = 4
        gc = g.with_cells(K)
        t, x1, x2, x3 = gc.mesh()
        # one-cell bump tiled K times: 1-periodic in x1
        V1 = separable_bump(g, 1.0, 0.5)
        Vc = np.concatenate([V1.values[:, :-1]] * K + [V1.values[:, :1]], axis=1)
        W = np.exp(-2.0 * (x1 - 1.7) ** 2) * np.exp(1j * (x2 + 0.3 * x3)) * (1 + t)
        W = np.broadcast_to(W, gc.q_shape).astype(complex)
        W[:, -1] = W[:, 0]
        vc = FW.solve_fiber_ibvp(FW.Potential(Vc), FW.ProbeInput.from_field(W, gc, 0.0), gc)
        fib = F.fbg_forward(W, K)
        vf = [FW.solve_fiber_ibvp(V1, FW.ProbeInput.from_field(fib[m], g, th), g) for m, th in enumerate(fib.thetas)]
        vr = F.fbg_inverse(F.FiberedField(np.array(vf)))
        err = float(np.linalg.norm(vr[:, :-1] - vc[:, :-1]) / np.linalg.norm(vc[:, :-1]))
        return err <= 1e-8, {"relative_l2": err}, f"cylinder vs recomposed fibers {err:.1e} (tol 1e-8)"

    return _timed(2, "Fiber equivalence", "K=4 cylinder vs fibers to 1e-8", body)


def check_solver_exactness(grid: SpaceTimeGrid | None = None) -> CheckResult:
    def body():
        g = grid or desk_grid()
        theta, j, m2, m3, c = 0.3, 0, 1, 2, 1.0
        a, L = g.cross_section.half_width, g.cross_section.side
        t, x1, x2, x3 = g.mesh()
        mode = (np.exp(1j * (theta + 2 * np.pi * j) * x1) * np.sin(m2 * np.pi * (x2 + a) / L)
                * np.sin(m3 * np.pi * (x3 + a) / L))
        mode = np.broadcast_to(mode, g.q_shape)[0].astype(complex)
        lam = (theta + 2 * np.pi * j) ** 2 + (np.pi / L) ** 2 * (m2 ** 2 + m3 ** 2) + c
        probe = FW.ProbeInput.from_data(np.zeros((g.Nt + 1,) + FW.trace_faces(mode).shape, complex), mode, theta, g)
        v = FW.solve_fiber_ibvp(FW.Potential(np.full(g.q_shape, c)), probe, g)
        I = (slice(None, -1), slice(1, -1), slice(1, -1))
        amp = np.vdot(mode[I], v[-1][I]) / np.vdot(mode[I], mode[I])
        phase_err = abs(np.angle(amp * np.exp(1j * lam * g.T)))
        bound = (lam * g.dt) ** 3 / 12.0 / g.dt * g.T
        # the discrete solution itself must be the CN amplification to round-off
        cn = ((1 - 0.5j * lam * g.dt) / (1 + 0.5j * lam * g.dt)) ** g.Nt
        cn_defect = float(abs(amp - cn))
        # norm conservation for a real non-constant potential and homogeneous data
        Vb = separable_bump(g, 2.0, 0.5)
        rng = np.random.default_rng(1)
        v0 = np.zeros(g.q_shape[1:], complex)
        v0[:, 1:-1, 1:-1] = rng.standard_normal(v0[:, 1:-1, 1:-1].shape)
        v0[-1] = np.exp(1j * theta) * v0[0]
        _, norms = FW.solve_fiber_ibvp(
            Vb, FW.ProbeInput.from_data(np.zeros((g.Nt + 1,) + FW.trace_faces(v0).shape, complex), v0, theta, g),
            g, record_norms=True)
        drift = float(np.abs(norms / norms[0] - 1).max())
        ok = phase_err <= bound and drift <= 1e-10 and cn_defect <= 1e-10
        return ok, {"phase_error": phase_err, "cn_bound": bound, "cn_defect": cn_defect, "norm_drift": drift}, (
            f"phase error {phase_err:.3e} <= CN bound {bound:.3e}, amplification defect {cn_defect:.1e}, "
            f"norm drift {drift:.1e} (tol 1e-10)")

    return _timed(3, "Solver exactness", "CN phase bound and norm conservation to 1e-10", body)


# ---------------------------------------------------------------------------
# 4-8: CGO machinery


def check_zeta(seed: int = 0, draws: int = 1000) -> CheckResult:
    def body():
        rng = np.random.default_rng(seed)
        worst, min_slack = 0.0, math.inf
        for _ in range(draws):
            eta = rng.uniform(-10, 10, 2)
            while np.hypot(*eta) < 1e-2:
                eta = rng.uniform(-10, 10, 2)
            ell = rng.uniform(-50, 50)
            r = rng.uniform(0.1, 50)
            d = C.zeta_identities(eta, ell, r)
            scale = 1.0 + r * r + eta @ eta + ell * ell / (eta @ eta)
            for key, val in d.items():
                if "slack" in key:
                    min_slack = min(min_slack, val / scale)
                else:
                    worst = max(worst, val / scale)
        ok = worst <= 1e-12 and min_slack >= 0.0
        return ok, {"max_identity_defect": worst, "min_bound_slack": min_slack}, (
            f"max identity defect {worst:.1e} (tol 1e-12), min bound slack {min_slack:.2e} (>= 0)")

    return _timed(4, "Zeta algebra", "identities to 1e-12, size bounds hold", body)


def check_resolvent(seed: int = 0, grid: SpaceTimeGrid | None = None, samples: int = 100) -> CheckResult:
    def body():
        g = grid or desk_grid()
        rng = np.random.default_rng(seed)
        params = C.CgoParams((1.3, -0.4), 0.7, 2.5, 1, 0.4)
        lat = ModeLattice(g, params.theta)
        a0, a1, a2, a3 = lat.alpha
        kap = params.kappa
        # single modes against the closed form, through the full transform pipeline
        worst = 0.0
        tt = g.box_t[:, None, None, None]
        xx1 = g.x1[: g.Nx1][None, :, None, None]
        yy2 = g.box_x2[None, None, :, None]
        yy3 = g.box_x3[None, None, None, :]
        shape = g.box_shape
        for _ in range(8):
            idx = tuple(int(rng.integers(0, n)) for n in shape)
            al = np.array([np.ravel(a0)[idx[0]], np.ravel(a1)[idx[1]], np.ravel(a2)[idx[2]], np.ravel(a3)[idx[3]]])
            D = al[0] + al[1:] @ al[1:] - 2 * (kap[1:] @ al[1:]) + 2j * params.r * al[2]
            phi = np.exp(1j * (al[0] * tt + al[1] * xx1 + al[2] * yy2 + al[3] * yy3)) / (2 * g.box_R) ** 1.5
            c = box_fourier_forward(phi, g, params.theta)
            psi = box_fourier_inverse(C.resolvent_divide(c, params, g), g, params.theta)
            worst = max(worst, float(np.abs(psi - phi / D).max() / np.abs(phi / D).max()))
        viol = 0
        ratios = []
        w = 1.0 / (1.0 + np.sqrt(np.abs(a0)) + a1 ** 2 + a2 ** 2 + a3 ** 2)
        for _ in range(samples):
            h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * w
            lhs, rhs = C.coefficient_bound_check(h, params, g)
            ratios.append(lhs / rhs)
            viol += lhs > rhs
        ok = worst <= 1e-12 and viol == 0
        return ok, {"single_mode_defect": worst, "violations": int(viol), "max_ratio": max(ratios)}, (
            f"single-mode defect {worst:.1e} (tol 1e-12), {viol} bound violations in {samples}, "
            f"max ratio {max(ratios):.3f}")

    return _timed(5, "Resolvent formula", "single mode to 1e-12, zero bound violations", body)


def bump_source(g: SpaceTimeGrid, theta: float) -> np.ndarray:
    _, x1, _, _ = g.mesh()
    return separable_bump(g, 1.0, 0.5).values * np.exp(1j * theta * x1)


_E_PARAMS = C.CgoParams((1.0, 0.5), 0.3, 2.0, 1, 0.7)


def check_e_inverse(grid: SpaceTimeGrid | None = None) -> CheckResult:
    def body():
        g = grid or desk_grid()
        p = _E_PARAMS
        res = C.ResolventPlan(g, p).residual(bump_source(g, p.theta))
        g2 = g.refined(2, time=True, space=True, box_time=True, box_space=False)
        res2 = C.ResolventPlan(g2, p).residual(bump_source(g2, p.theta))
        ok = res <= 1e-3 and res2 < res
        return ok, {"residual": res, "residual_refined": res2}, (
            f"residual {res:.2e} (tol 1e-3), refined {res2:.2e}")

    return _timed(6, "E right-inverse", "residual <= 1e-3 and decreasing under refinement", body)


def check_fixed_point(grid: SpaceTimeGrid | None = None, amplitude: float = 40.0) -> CheckResult:
    # r0 grows with the bound, so a tall bump puts the whole [r0, 8 r0] sweep
    # where the H^2 norm of w has reached its 1/r regime
    def body():
        g = grid or desk_grid()
        V = separable_bump(g, amplitude, 0.5)
        c0 = C.default_c0(g)
        r0 = C.r_zero(V.bound, c0)
        rs = [r0 * f for f in (1, 2, 4, 8)]
        norms, contr = [], []
        for r in rs:
            s = C.fixed_point_w(V, C.CgoParams((2 * np.pi, 0.0), 4 * np.pi, r, 0, 0.0, 1), g, c0=c0)
            norms.append(h2h2_waveguide_norm(s.w, g, 0.0))
            contr.append(s.contraction)
        slope = loglog_slope(rs, norms)
        ok = max(contr) <= 0.6 and abs(slope + 1) <= 0.2
        return ok, {"r": rs, "w_h2": norms, "contraction": contr, "slope": slope}, (
            f"max contraction {max(contr):.3f} (tol 0.6), w-decay slope {slope:.3f} (target -1 +/- 0.2)")

    return _timed(7, "Fixed point", "contraction <= 0.6, w slope -1 +/- 0.2 over 8 r0", body)


def check_cgo_residual(grid: SpaceTimeGrid | None = None) -> CheckResult:
    def body():
        g = grid or desk_grid()
        out = []
        for gg in (g, g.refined(2, time=True, space=True, box_time=True, box_space=False)):
            V = separable_bump(gg, 1.0, 0.5)
            s = C.build_cgo(V, C.CgoParams((2 * np.pi, 0.0), 4 * np.pi, 2.0, 0, 0.0, 1), gg)
            out.append(s.residual)
        ok = out[0] <= 1e-2 and out[1] < out[0]
        return ok, {"residual": out[0], "residual_refined": out[1]}, (
            f"residual {out[0]:.2e} (tol 1e-2), refined {out[1]:.2e}")

    return _timed(8, "CGO residual", "residual <= 1e-2 and decreasing under refinement", body)


# ---------------------------------------------------------------------------
# 9-12: identity and recovery


def check_green_identity(levels=(16, 32, 64, 128)) -> CheckResult:
    """Time order of the identity defect from successive differences.

    At fixed spatial resolution the defect tends to a spatial floor, so the
    temporal order is read off ``|D(dt) - D(dt/2)|`` which cancels that floor.
    """

    def body():
        fp = INV.FrequencyPoint.from_shifted(4 * np.pi, (2 * np.pi, 0.0), 0)
        defects, rel = [], []
        for Nt in levels:
            g = SpaceTimeGrid(0.5, Nt, 8, CrossSection(0.5, 12), 1.0, 32, 32, 32)
            V1, V2 = separable_bump(g, 0.5), separable_bump(g, 0.3)
            d = INV.green_identity_residual(V1, V2, fp, 1.5, 0.0, g)
            defects.append(d["lhs"] + d["boundary"] + d["final"])
            rel.append(d["residual"])
        diffs = [abs(a - b) for a, b in zip(defects, defects[1:])]
        orders = [math.log2(a / b) for a, b in zip(diffs, diffs[1:])]
        ok = orders[-1] >= 2.0 - 0.05 and all(o >= 1.8 for o in orders)
        return ok, {"Nt": list(levels), "relative_defect": rel, "orders": orders}, (
            f"observed time orders {', '.join(f'{o:.2f}' for o in orders)} (finest >= 1.95, all >= 1.8); "
            f"relative defect {rel[0]:.1e} -> {rel[-1]:.1e}")

    return _timed(9, "Green identity", "defect converges at order >= 2 in dt", body)


def check_oracle_recovery(grid: SpaceTimeGrid | None = None, seed: int = 0) -> CheckResult:
    def body():
        from .presets import random_bandlimited

        g = grid or desk_grid()
        V1 = separable_bump(g, 0.5)
        W = random_bandlimited(g, 0.1, seed=seed, j_max=1, k_max=2, m_max=2, k_step=2)
        V2 = FW.Potential(V1.values + W.values)
        res = INV.recover_potential(V1, V2, 24.0, None, 0.0, "oracle", g)
        ok = res.relative_error <= 1e-2
        return ok, {"relative_error": res.relative_error, "probed": res.n_probed, "imag": res.imag_residue}, (
            f"relative L2 error {res.relative_error:.1e} over {res.n_probed} probed points (tol 1e-2)")

    return _timed(10, "Recovery, oracle mode", "band-limited difference to 1e-2", body)


def _slope_grid() -> SpaceTimeGrid:
    return SpaceTimeGrid(0.5, 64, 8, CrossSection(0.5, 24), 1.0, 64, 32, 32)


def coefficient_gap_sweep(g: SpaceTimeGrid, factors=(1.0, 1.4, 2.0, 2.8, 4.0, 5.6)) -> dict:
    """Gap ``|boundary - oracle|`` and the A-term along an r sweep from r0."""
    t, x1, x2, x3 = g.mesh()
    a, L = g.cross_section.half_width, g.cross_section.side
    W = np.sin(2 * np.pi * t / g.T) * np.sin(2 * np.pi * (x2 + a) / L) * np.sin(np.pi * (x3 + a) / L) ** 2
    V1 = FW.Potential.zero(g)
    V2 = FW.Potential(np.broadcast_to(W, g.q_shape).copy())
    fp = INV.FrequencyPoint.from_shifted(4 * np.pi, (2 * np.pi / L, 0.0), 0)
    r0 = C.r_zero(V2.bound, C.default_c0(g))
    rows = []
    for f in factors:
        p = INV.fourier_probe(V1, V2, fp, r0 * f, 0.0, "boundary", g)
        rows.append({"r": r0 * f, "gap": abs(p.estimate - p.oracle) / abs(p.oracle),
                     "A": abs(p.A) / abs(p.oracle), "oracle": abs(p.oracle)})
    return {"r0": r0, "rows": rows}


def pre_floor(rows, key="gap"):
    """Rows up to the first minimum of ``key`` (the discretization floor)."""
    vals = [r[key] for r in rows]
    stop = int(np.argmin(vals))
    return rows[: stop + 1]


def check_boundary_recovery() -> CheckResult:
    def body():
        sw = coefficient_gap_sweep(_slope_grid())
        seg = pre_floor(sw["rows"])
        slope = loglog_slope([r["r"] for r in seg], [r["gap"] for r in seg]) if len(seg) >= 3 else float("nan")
        a_slope = loglog_slope([r["r"] for r in sw["rows"][:3]], [r["A"] for r in sw["rows"][:3]])
        # full-field reconstruction of a small smooth difference
        g = reduced_grid()
        V1 = separable_bump(g, 0.5)
        V2 = FW.Potential(V1.values + 0.05 * lattice_mode(g, 1, 0, 1, 1))
        r0 = C.r_zero(V2.bound, C.default_c0(g))
        errs = {}
        for f in (1.0, 1.5, 2.0, 3.0):
            rec = INV.recover_potential(V1, V2, 16.0, r0 * f, 0.0, "boundary", g, k_max=0, diagnostics=False)
            errs[r0 * f] = rec.relative_error
        best = min(errs.values())
        slope_ok = len(seg) >= 3 and abs(slope + 2) <= 0.4
        ok = slope_ok and best <= 0.1
        measured = {"gap_sweep": sw["rows"], "pre_floor_points": len(seg), "gap_slope": slope,
                    "a_term_slope": a_slope, "reconstruction_errors": errs, "best_error": best}
        return ok, measured, (
            f"gap slope {slope:.2f} on {len(seg)} pre-floor points (target -2 +/- 0.4; A-term alone "
            f"{a_slope:.2f}), best reconstruction error {best:.1e} (tol 0.1)")

    return _timed(11, "Recovery, boundary mode", "gap slope -2 +/- 0.4, reconstruction <= 10%", body)


def check_stability_sweep(eps_list=(0.04, 0.02, 0.01, 0.005, 0.0025)) -> CheckResult:
    def body():
        g = reduced_grid()
        V1 = separable_bump(g, 0.5)
        W = lattice_mode(g, 1, 0, 1, 1)
        r0 = C.r_zero(V1.bound + max(eps_list), C.default_c0(g))
        rows = INV.stability_sweep(V1, W, eps_list, 0.0, g, rho=16.0, r_probe=r0, r_max=3 * r0, k_max=0)
        gam = np.array([r.gamma for r in rows])
        eps = np.array([r.eps for r in rows])
        ratio = gam / eps
        spread = float(ratio.max() / ratio.min() - 1)
        order = np.argsort(-gam)  # decreasing gamma
        errs = np.array([rows[i].error for i in order])
        violations = int(np.sum(np.diff(errs) > 0))
        ok = spread <= 0.1 and violations <= 1
        measured = {"eps": eps.tolist(), "gamma": gam.tolist(), "r": [r.r for r in rows],
                    "error": [r.error for r in rows], "linearity_spread": spread, "violations": violations}
        return ok, measured, (
            f"gamma/eps spread {spread:.3f} (tol 0.1), {violations} monotonicity violations (allowed 1)")

    return _timed(12, "Stability sweep", "gamma linear within 10%, error monotone (1 violation)", body)


CHECKS: dict[int, Callable[[], CheckResult]] = {
    1: check_fbg,
    2: check_fiber_equivalence,
    3: check_solver_exactness,
    4: check_zeta,
    5: check_resolvent,
    6: check_e_inverse,
    7: check_fixed_point,
    8: check_cgo_residual,
    9: check_green_identity,
    10: check_oracle_recovery,
    11: check_boundary_recovery,
    12: check_stability_sweep,
}


def run_all(numbers=None, echo: Callable[[str], None] | None = None) -> list[CheckResult]:
    out = []
    for n in numbers or sorted(CHECKS):
        res = CHECKS[n]()
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out


__all__ = ["CHECKS", "CheckResult", "coefficient_gap_sweep", "desk_grid", "reduced_grid", "run_all"]
