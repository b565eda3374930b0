"""Command-line entry point: ``wgtomo <subcommand> --config PATH [--out DIR] [--workers N] [--seed S]``.

Exit codes: 0 when every numeric check of the run passes, 1 on a numeric
failure (or a module error), 2 on a configuration error.  Everything written
to ``--out`` except ``run.log`` is byte-identical across reruns with the same
config and seed, whatever the worker count.
"""

from __future__ import annotations

import datetime as _dt
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, default_config
from .records import SCHEMA, write_csv, write_json

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2

# pass thresholds for the per-run numeric checks
ORACLE_TOL = 1e-2
BOUNDARY_TOL = 0.1
CGO_RESIDUAL_TOL = 1e-2
FBG_TOL = 1e-10


@dataclass
class RunRecord:
    command: str
    config_hash: str
    seed: int
    diagnostics: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    started: str = ""
    finished: str = ""

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_json(self) -> dict:
        # timestamps live in run.log so that run.json stays reproducible
        return {
            "schema": SCHEMA,
            "version": __version__,
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "passed": self.passed,
            "checks": self.checks,
            "diagnostics": self.diagnostics,
            "artifacts": self.artifacts,
        }


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class _Run:
    def __init__(self, command: str, cfg: ExperimentConfig, out: Path, workers: int):
        self.cfg, self.out, self.workers = cfg, out, workers
        self.record = RunRecord(command, cfg.digest(), cfg.seed, started=_now())
        self.grid = cfg.build_grid()

    def csv(self, name, header, rows):
        write_csv(self.out / name, header, rows)
        self.record.artifacts.append(name)

    def json(self, name, obj):
        write_json(self.out / name, {"schema": SCHEMA, **obj})
        self.record.artifacts.append(name)

    def finish(self) -> int:
        rec = self.record
        rec.finished = _now()
        (self.out / "config.toml").write_text(self.cfg.dumps())
        write_json(self.out / "run.json", rec.to_json())
        with open(self.out / "run.log", "a") as fh:
            fh.write(f"{rec.started} start {rec.command} config={rec.config_hash[:12]} seed={rec.seed} "
                     f"workers={self.workers}\n")
            fh.write(f"{rec.finished} end {rec.command} {'pass' if rec.passed else 'FAIL'}\n")
        return EXIT_OK if rec.passed else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# subcommands


def _probe_point(cfg: ExperimentConfig):
    from .inverse import FrequencyPoint

    p = cfg.probe
    return FrequencyPoint.from_shifted(p.ell, tuple(p.eta), p.k)


def _cgo_kw(cfg: ExperimentConfig, grid) -> dict:
    c = cfg.cgo
    return {"tol": c.tol, "max_iter": c.max_iter, "c0": c.c0_value(grid), "enforce_r0": c.enforce_r0}


def run_fbg_check(run: _Run) -> None:
    """FBG norm preservation and roundtrip for every K in fbg.K."""
    from . import fbg as F
    from .lattice import CrossSection, SpaceTimeGrid, l2_norm

    g0 = run.grid
    # the transform acts on x1 only, so a coarse cross-section is enough
    g = SpaceTimeGrid(g0.T, g0.Nt, g0.Nx1, CrossSection(g0.cross_section.half_width, 4), g0.box_R)
    rng = np.random.default_rng(run.cfg.seed)
    rows = []
    for K in run.cfg.fbg.K:
        gc = g.with_cells(int(K))
        f = rng.standard_normal(gc.q_shape) + 1j * rng.standard_normal(gc.q_shape)
        f[:, -1] = f[:, 0]
        Ff = F.fbg_forward(f, int(K))
        n_cyl = F.cylinder_norm(f, int(K), lambda c: l2_norm(c, g))
        n_fib = F.fibered_norm(Ff, lambda c: l2_norm(c, g))
        inv = float(np.linalg.norm(F.fbg_inverse(Ff) - f) / np.linalg.norm(f))
        rows.append({"K": int(K), "norm_defect": abs(n_cyl - n_fib) / n_cyl, "inverse_defect": inv})
    run.csv("fbg_check.csv", ["K", "norm_defect", "inverse_defect"], rows)
    run.record.checks["fbg_roundtrip"] = all(
        r["norm_defect"] <= FBG_TOL and r["inverse_defect"] <= FBG_TOL for r in rows)


def _forward_probe(grid, theta, eta):
    from .forward import ProbeInput

    t, x1, x2, x3 = grid.mesh()
    W = (1.0 + t / grid.T) * np.exp(1j * theta * x1) * (1.5 + np.cos(2 * np.pi * x1)) * np.exp(
        1j * (eta[0] * x2 + eta[1] * x3))
    return ProbeInput.from_field(np.broadcast_to(W, grid.q_shape).astype(complex), grid, theta)


def run_forward(run: _Run) -> None:
    """Boundary data of V1 and V2 for a smooth probe, and their difference."""
    from .forward import boundary_operator

    g, cfg = run.grid, run.cfg
    theta = cfg.probe.theta
    probe = _forward_probe(g, theta, cfg.probe.eta)
    out = {}
    data = {}
    for key in ("v1", "v2"):
        V = cfg.potential(key, g)
        d = boundary_operator(V, probe, g)
        data[key] = d
        out[key] = {"preset": getattr(cfg.potentials, key).name, "bound": V.bound, "data_norm": d.norm(g)}
    diff = (data["v2"] - data["v1"]).norm(g)
    out["probe_norm"] = probe.norm
    out["difference_norm"] = diff
    out["gamma_lower"] = diff / probe.norm
    run.json("forward.json", {"theta": theta, "results": out})
    run.record.diagnostics.update(gamma_lower=out["gamma_lower"])
    run.record.checks["finite"] = bool(np.isfinite([out["v1"]["data_norm"], out["v2"]["data_norm"], diff]).all())


def run_cgo(run: _Run) -> None:
    """CGO construction for V1 at each r in cgo.r."""
    from .cgo import CgoParams, ContractionError, build_cgo, r_zero, split_k
    from .lattice import h2h2_waveguide_norm

    g, cfg = run.grid, run.cfg
    fp = _probe_point(cfg)
    V = cfg.potential("v1", g)
    kw = _cgo_kw(cfg, g)
    r0 = r_zero(V.bound, kw["c0"])
    rows = []
    for r in cfg.cgo.r:
        params = CgoParams(fp.eta, fp.ell, float(r), split_k(fp.k)[0], cfg.probe.theta, 1)
        try:
            s = build_cgo(V, params, g, **kw)
        except ContractionError as exc:
            rows.append({"r": float(r), "r0": r0, "iterations": 0, "contraction": float("nan"),
                         "converged": False, "residual": float("nan"), "w_h2": float("nan"), "note": str(exc)})
            continue
        rows.append({"r": float(r), "r0": r0, "iterations": s.iterations, "contraction": s.contraction,
                     "converged": s.converged, "residual": s.residual,
                     "w_h2": h2h2_waveguide_norm(s.w, g, cfg.probe.theta), "note": ""})
    run.csv("cgo.csv", ["r", "r0", "iterations", "contraction", "converged", "residual", "w_h2", "note"], rows)
    run.record.checks["converged"] = all(r["converged"] for r in rows)
    run.record.checks["residual"] = all(r["residual"] <= CGO_RESIDUAL_TOL for r in rows)


def _complex(z):
    return None if z is None else {"re": float(np.real(z)), "im": float(np.imag(z))}


def run_probe(run: _Run) -> None:
    """One Fourier coefficient of V1 - V2 at the configured frequency point."""
    from .inverse import fourier_probe

    g, cfg = run.grid, run.cfg
    fp = _probe_point(cfg)
    V1, V2 = cfg.potential("v1", g), cfg.potential("v2", g)
    mode = cfg.recovery.mode
    r = float(cfg.cgo.r[0])
    p = fourier_probe(V1, V2, fp, r, cfg.probe.theta, mode, g, **(_cgo_kw(cfg, g) if mode == "boundary" else {}))
    rec = {
        "mode": mode,
        "r": r if mode == "boundary" else None,
        "point": {"ell": fp.ell, "eta": list(fp.eta), "k": fp.k},
        "estimate": _complex(p.estimate),
        "oracle": _complex(p.oracle),
        "B": _complex(p.B),
        "C": _complex(p.C),
        "A": _complex(p.A),
        "relative_gap": p.gap,
        "probe_norm": p.probe_norm,
        "data_norm": p.data_norm,
    }
    run.json("probe.json", rec)
    run.record.diagnostics["relative_gap"] = p.gap
    run.record.checks["finite"] = bool(np.isfinite(p.estimate))


_COEF_HEADER = ["ell", "eta2", "eta3", "k", "estimate_re", "estimate_im", "oracle_re", "oracle_im"]


def _coef_rows(probes):
    rows = []
    for p in probes:
        o = p.oracle if p.oracle is not None else complex("nan")
        rows.append({"ell": p.point.ell, "eta2": p.point.eta[0], "eta3": p.point.eta[1], "k": p.point.k,
                     "estimate_re": p.estimate.real, "estimate_im": p.estimate.imag,
                     "oracle_re": o.real, "oracle_im": o.imag})
    return rows


def run_recover(run: _Run) -> None:
    """Reconstruct V2 - V1 from the probed Fourier coefficients."""
    from .inverse import recover_potential

    g, cfg = run.grid, run.cfg
    R = cfg.recovery
    V1, V2 = cfg.potential("v1", g), cfg.potential("v2", g)
    k_max = None if R.k_max < 0 else R.k_max
    r = float(cfg.cgo.r[0]) if R.mode == "boundary" else None
    kw = _cgo_kw(cfg, g) if R.mode == "boundary" else {}
    res = recover_potential(V1, V2, R.rho, r, R.theta, R.mode, g, k_max=k_max, workers=run.workers, **kw)
    summary = {"mode": R.mode, "rho": R.rho, "r": r, "theta": R.theta, "k_max": k_max,
               "probed": res.n_probed, "error": res.error, "relative_error": res.relative_error,
               "imag_residue": res.imag_residue}
    run.csv("recover.csv", list(summary), [summary])
    run.csv("coefficients.csv", _COEF_HEADER, _coef_rows(res.probes))
    run.json("recover.json", {"summary": summary, "budget": res.budget})
    run.record.diagnostics["relative_error"] = res.relative_error
    tol = ORACLE_TOL if R.mode == "oracle" else BOUNDARY_TOL
    run.record.checks["relative_error"] = res.relative_error <= tol


def run_sweep(run: _Run) -> None:
    """Stability sweep over V2 = V1 + eps W."""
    from .cgo import r_zero
    from .inverse import stability_sweep

    g, cfg = run.grid, run.cfg
    V1 = cfg.potential("v1", g)
    W = cfg.potential("perturbation", g).values
    kw = _cgo_kw(cfg, g)
    c0 = kw.pop("c0")
    eps = [float(e) for e in cfg.sweep.eps]
    r0 = r_zero(V1.bound + max(eps, default=0.0) * float(np.abs(W).max(initial=0.0)), c0)
    r_probe = cfg.sweep.r_probe if cfg.sweep.r_probe > 0 else r0
    k_max = None if cfg.recovery.k_max < 0 else cfg.recovery.k_max
    rows = stability_sweep(V1, W, eps, cfg.recovery.theta, g, cfg.recovery.rho, r_probe,
                           max(cfg.cgo.r_max, r0), k_max=k_max, c0=c0, **kw)
    header = ["eps", "gamma", "r", "error", "true_norm", "relative_error", "n_probed", "note"]
    run.csv("sweep.csv", header, [{h: getattr(row, h) for h in header} for row in rows])
    run.record.checks["rows"] = len(rows) == len(eps)


def run_selftest(run: _Run) -> None:
    """Run the full acceptance suite."""
    from .acceptance import run_all

    results = run_all(echo=click.echo)
    rows = [{"number": r.number, "name": r.name, "passed": r.passed, "seconds": r.seconds, "note": r.note}
            for r in results]
    # wall-clock seconds vary between runs, so they stay out of the JSON record
    run.csv("acceptance.csv", ["number", "name", "passed", "note"], rows)
    run.json("acceptance.json", {"checks": [{"number": r.number, "name": r.name, "passed": r.passed,
                                             "criterion": r.criterion, "measured": r.measured}
                                            for r in results]})
    with open(run.out / "run.log", "a") as fh:
        for r in results:
            fh.write(r.line() + "\n")
    for r in results:
        run.record.checks[f"{r.number:02d}"] = r.passed


SUBCOMMANDS = {
    "fbg-check": run_fbg_check,
    "forward": run_forward,
    "cgo": run_cgo,
    "probe": run_probe,
    "recover": run_recover,
    "sweep": run_sweep,
    "selftest": run_selftest,
}


# ---------------------------------------------------------------------------
# click wiring


def resolve_workers(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    env = os.environ.get("WGTOMO_WORKERS", "").strip()
    if not env:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        raise ConfigError("WGTOMO_WORKERS", f"expected an integer, got {env!r}") from None


def execute(command: str, config: str | None, out: str | None, workers: int | None, seed: int | None) -> int:
    """Run one subcommand and return its exit code."""
    try:
        cfg = ExperimentConfig.load(config) if config else default_config()
        if seed is not None:
            cfg.seed = seed
            cfg.validate()
        n_workers = resolve_workers(workers)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    out_dir = Path(out or cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run = _Run(command, cfg, out_dir, n_workers)
    try:
        SUBCOMMANDS[command](run)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    except (ValueError, RuntimeError, FloatingPointError) as exc:
        click.echo(f"{command} failed: {type(exc).__name__}: {exc}", err=True)
        run.record.checks["completed"] = False
        run.record.diagnostics["error"] = f"{type(exc).__name__}: {exc}"
        run.finish()
        return EXIT_NUMERIC
    code = run.finish()
    failed = [k for k, v in run.record.checks.items() if not v]
    click.echo(f"{command}: {'pass' if not failed else 'FAIL (' + ', '.join(failed) + ')'} -> {out_dir}")
    return code


def _options(fn):
    fn = click.option("--seed", type=int, default=None, help="Override the config seed.")(fn)
    fn = click.option("--workers", type=int, default=None, help="Worker processes (default $WGTOMO_WORKERS or 1).")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")(fn)
    fn = click.option("--config", type=click.Path(dir_okay=False), default=None,
                      help="Experiment TOML (defaults built in).")(fn)
    return fn


@click.group()
@click.version_option(__version__, prog_name="wgtomo")
def cli():
    """Potential recovery experiments for periodic quantum waveguides."""


def _make(name: str):
    @cli.command(name=name, help=SUBCOMMANDS[name].__doc__ or f"Run the {name} pipeline.")
    @_options
    def cmd(config, out, workers, seed):
        sys.exit(execute(name, config, out, workers, seed))

    return cmd


for _name in SUBCOMMANDS:
    _make(_name)


@cli.command(name="default-config")
def default_config_cmd():
    """Print the default experiment config as TOML."""
    click.echo(default_config().dumps(), nl=False)


def main(argv=None):
    # click exits with 2 on usage errors, which matches EXIT_CONFIG
    cli.main(args=argv, prog_name="wgtomo")


__all__ = ["RunRecord", "SUBCOMMANDS", "execute", "main", "resolve_workers"]
