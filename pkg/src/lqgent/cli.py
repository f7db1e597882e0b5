"""Command-line front end: config ingestion, subcommands, figure recipes.

Subcommands ``steady``, ``sweep`` and ``trajectory`` consume one TOML
configuration document and print a self-documenting report; sweeps and
trajectories also write CSV/JSON files.  Exit codes are stable: 0 success,
2 configuration error, 3 numerical or physical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .control import ClosedLoop, closed_loop
from .entanglement import (
    default_epr_theta,
    log_negativity_general,
    threshold_conditional,
)
from .errors import ConfigError, LqgentError
from .model import FeedbackConfig, FeedbackMode, PhysicalParams
from .sweep import (
    GridSpec,
    SweepSpec,
    entangled_cell_count,
    run_sweep,
    write_sweep_csv,
    write_sweep_json,
)
from .trajectory import (
    TrajectoryConfig,
    ensemble_covariance,
    simulate,
    write_trajectory_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

_RECIPES = ("fig2.toml", "fig3.toml", "fig4.toml", "fig4_cool.toml")

_SECTION_KEYS = {
    "physical": {
        "omega0",
        "g",
        "g_over_omega0",
        "gamma",
        "gamma_over_omega0",
        "gamma_th",
        "gamma_th_over_omega0",
        "gamma_th_over_gamma_ba",
        "gamma_ba",
        "gamma_ba_over_omega0",
        "eta",
        "q1",
        "q2",
    },
    "feedback": {"mode", "effort"},
    "cost": {"kind", "theta"},
    "sweep": {"g_over_omega0", "eta", "quantities"},
    "trajectory": {"dt", "steps", "burn_in", "n_traj", "seed", "decimate"},
    "output": {"format", "prefix"},
}


def load_config(path: str) -> dict:
    """Read and structurally validate a TOML run configuration.

    Bundled recipe names (``fig2.toml`` ...) resolve to package data when no
    file of that name exists on disk.  Unknown sections or keys are rejected.
    """
    p = Path(path)
    if p.exists():
        raw = p.read_bytes()
    elif p.name in _RECIPES and str(p) == p.name:
        from importlib import resources

        raw = resources.files("lqgent.recipes").joinpath(p.name).read_bytes()
    else:
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc

    for section, content in cfg.items():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(content, dict):
            raise ConfigError(f"section [{section}] must be a table")
        unknown = set(content) - _SECTION_KEYS[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    return cfg


def _pick_rate(section: dict, name: str, omega0: float, default_ratio: float,
               gamma_ba: Optional[float] = None) -> float:
    """Resolve one rate given exactly one of its SI/ratio spellings (rad/s)."""
    forms = [k for k in (name, f"{name}_over_omega0", f"{name}_over_gamma_ba")
             if k in section]
    if len(forms) > 1:
        raise ConfigError(f"give exactly one of {forms} in [physical]")
    if not forms:
        return default_ratio * omega0
    key = forms[0]
    value = float(section[key])
    if key == name:
        return value
    if key.endswith("_over_omega0"):
        return value * omega0
    if gamma_ba is None:
        raise ConfigError(f"{key} requires gamma_ba to be resolved first")
    return value * gamma_ba


def resolve_physical(cfg: dict) -> PhysicalParams:
    """Build `PhysicalParams` from the [physical] section.

    Defaults follow the baseline operating point: back-action at 5% of the
    trap frequency, thermal decoherence at 5% of back-action, quality factor
    1e10, unit efficiency and a 3:1 charge ratio.
    """
    sec = dict(cfg.get("physical", {}))
    omega0 = float(sec.get("omega0", 1.0))
    if omega0 <= 0:
        raise ConfigError(f"omega0 must be positive, got {omega0}")
    if "g" in sec and "g_over_omega0" in sec:
        raise ConfigError("give exactly one of g, g_over_omega0 in [physical]")
    if "g" in sec:
        g = float(sec["g"])
    else:
        g = float(sec.get("g_over_omega0", 0.0)) * omega0
    gamma_ba = _pick_rate(sec, "gamma_ba", omega0, default_ratio=0.05)
    gamma_th = _pick_rate(sec, "gamma_th", omega0, default_ratio=0.05 * gamma_ba / omega0,
                          gamma_ba=gamma_ba)
    gamma = _pick_rate(sec, "gamma", omega0, default_ratio=1e-10)
    try:
        return PhysicalParams(
            omega0=omega0,
            g=g,
            gamma=gamma,
            gamma_th=gamma_th,
            gamma_ba=gamma_ba,
            eta=float(sec.get("eta", 1.0)),
            q1=float(sec.get("q1", 3.0)),
            q2=float(sec.get("q2", 1.0)),
        )
    except LqgentError as exc:
        raise ConfigError(str(exc)) from exc


def resolve_feedback(cfg: dict) -> FeedbackConfig:
    sec = cfg.get("feedback", {})
    mode = sec.get("mode", "independent")
    try:
        fb_mode = FeedbackMode(mode)
    except ValueError:
        raise ConfigError(f"feedback mode must be 'single' or 'independent', got {mode!r}")
    try:
        return FeedbackConfig(fb_mode, float(sec.get("effort", 0.1)))
    except LqgentError as exc:
        raise ConfigError(str(exc)) from exc


def resolve_cost(cfg: dict) -> tuple[str, Optional[float]]:
    sec = cfg.get("cost", {})
    kind = sec.get("kind", "epr")
    if kind not in ("cool", "epr"):
        raise ConfigError(f"cost kind must be 'cool' or 'epr', got {kind!r}")
    theta = sec.get("theta")
    return kind, (float(theta) if theta is not None else None)


def _grid_from(section: dict, key: str) -> GridSpec:
    try:
        spec = section[key]
        return GridSpec(float(spec["min"]), float(spec["max"]), int(spec["count"]))
    except KeyError as exc:
        raise ConfigError(f"[sweep].{key} needs min, max and count") from exc
    except LqgentError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class _Run:
    cfg: dict
    args: argparse.Namespace

    @property
    def out_dir(self) -> Optional[Path]:
        return Path(self.args.out) if self.args.out else None

    @property
    def out_format(self) -> str:
        fmt = self.args.format or self.cfg.get("output", {}).get("format", "both")
        if fmt not in ("csv", "json", "both"):
            raise ConfigError(f"format must be csv, json or both, got {fmt!r}")
        return fmt

    @property
    def prefix(self) -> str:
        return self.cfg.get("output", {}).get("prefix", "")


def _echo_params(params: PhysicalParams, fb: FeedbackConfig, kind: str,
                 theta: Optional[float]) -> None:
    p = params.normalized()
    theta_val = theta if theta is not None else default_epr_theta(p.g)
    print("resolved dimensionless parameters (units of omega0):")
    print(
        f"  g/omega0={p.g:.10g}  gamma/omega0={p.gamma:.10g}  "
        f"gamma_th/omega0={p.gamma_th:.10g}  gamma_ba/omega0={p.gamma_ba:.10g}"
    )
    print(
        f"  eta={p.eta:.10g}  gamma_m/omega0={p.gamma_m:.10g}  "
        f"Q1={p.q1:.10g}  Q2={p.q2:.10g}"
    )
    print(
        f"  feedback={fb.mode.value}  effort q={fb.effort:.10g}  "
        f"cost={kind}  theta={theta_val:.10g}"
    )


def _print_matrix(name: str, mat: np.ndarray) -> None:
    print(f"{name} =")
    for row in mat:
        print("   " + "  ".join(f"{v: .6e}" for v in row))


def cmd_steady(run: _Run) -> int:
    params = resolve_physical(run.cfg)
    fb = resolve_feedback(run.cfg)
    kind, theta = resolve_cost(run.cfg)
    _echo_params(params, fb, kind, theta)

    loop = closed_loop(params, fb, kind, theta)
    rep_c = log_negativity_general(loop.sigma_cond, loop.model, loop.theta)
    rep_u = log_negativity_general(loop.sigma_uncond, loop.model, loop.theta)
    th = threshold_conditional(params)

    _print_matrix("Sigma_cond", loop.sigma_cond.mat)
    _print_matrix("Xi_excess", loop.xi_excess.mat)
    _print_matrix("Sigma_uncond", loop.sigma_uncond.mat)
    print(f"E_N(conditional)   = {rep_c.log_negativity:.10g}   nu = {rep_c.symplectic_nu:.10g}")
    print(f"E_N(unconditional) = {rep_u.log_negativity:.10g}   nu = {rep_u.symplectic_nu:.10g}")
    print(f"Delta_EPR(conditional, theta={rep_c.epr_theta:.6g}) = {rep_c.epr_variance:.10g}")
    print(
        "thresholds: g+/omega0 = {:.10g}, g-/omega0 = {:.10g}, "
        "eta+ = {:.10g}, eta- = {:.10g}".format(th.g_plus, th.g_minus, th.eta_plus, th.eta_minus)
    )

    if run.out_dir is not None:
        run.out_dir.mkdir(parents=True, exist_ok=True)
        doc = {
            "code_version": __version__,
            "sigma_cond": loop.sigma_cond.mat.tolist(),
            "xi_excess": loop.xi_excess.mat.tolist(),
            "sigma_uncond": loop.sigma_uncond.mat.tolist(),
            "cond_EN": rep_c.log_negativity,
            "uncond_EN": rep_u.log_negativity,
            "nu_cond": rep_c.symplectic_nu,
            "nu_uncond": rep_u.symplectic_nu,
            "epr_variance": rep_c.epr_variance,
            "epr_theta": rep_c.epr_theta,
            "thresholds": {
                "g_plus": th.g_plus,
                "g_minus": th.g_minus,
                "eta_plus": th.eta_plus,
                "eta_minus": th.eta_minus,
            },
        }
        path = run.out_dir / f"{run.prefix}steady.json"
        path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
        print(f"wrote {path}")
    return EXIT_OK


def cmd_sweep(run: _Run) -> int:
    if "sweep" not in run.cfg:
        raise ConfigError("sweep subcommand needs a [sweep] section")
    params = resolve_physical(run.cfg)
    fb = resolve_feedback(run.cfg)
    kind, theta = resolve_cost(run.cfg)
    sec = run.cfg["sweep"]
    quantities = tuple(sec.get("quantities", ["cond_EN", "nu_cond"]))
    try:
        spec = SweepSpec(
            g_over_omega0=_grid_from(sec, "g_over_omega0"),
            eta=_grid_from(sec, "eta"),
            fixed=params,
            fb=fb,
            cost_kind=kind,
            theta=theta,
            quantities=quantities,
        )
    except LqgentError as exc:
        raise ConfigError(str(exc)) from exc
    _echo_params(params, fb, kind, theta)
    print(
        f"sweep grid: g/omega0 in [{spec.g_over_omega0.min}, {spec.g_over_omega0.max}] "
        f"x{spec.g_over_omega0.count}, eta in [{spec.eta.min}, {spec.eta.max}] "
        f"x{spec.eta.count}, quantities={list(quantities)}"
    )

    result = run_sweep(spec, threads=run.args.threads)

    for q in ("cond_EN", "uncond_EN"):
        if q in result.data:
            print(f"entangled cells ({q} > 0): {entangled_cell_count(result, q)}")
    for key, lines in result.boundaries.items():
        if lines:
            pts = np.vstack(lines)
            print(
                f"{key} boundary: {len(lines)} polyline(s), "
                f"g/omega0 in [{pts[:, 0].min():.6g}, {pts[:, 0].max():.6g}], "
                f"eta in [{pts[:, 1].min():.6g}, {pts[:, 1].max():.6g}]"
            )
        else:
            print(f"{key} boundary: none inside the grid")
    print(f"max solver residual: {result.metadata['max_solver_residual']:.3e}")

    out_dir = run.out_dir or Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)
    if run.out_format in ("csv", "both"):
        path = out_dir / f"{run.prefix}sweep.csv"
        write_sweep_csv(result, path)
        print(f"wrote {path}")
    if run.out_format in ("json", "both"):
        path = out_dir / f"{run.prefix}sweep.json"
        write_sweep_json(result, path)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_trajectory(run: _Run) -> int:
    if "trajectory" not in run.cfg:
        raise ConfigError("trajectory subcommand needs a [trajectory] section")
    params = resolve_physical(run.cfg)
    fb = resolve_feedback(run.cfg)
    kind, theta = resolve_cost(run.cfg)
    sec = run.cfg["trajectory"]
    seed = run.args.seed if run.args.seed is not None else int(sec.get("seed", 0))
    try:
        cfg = TrajectoryConfig(
            dt=float(sec["dt"]),
            steps=int(sec["steps"]),
            burn_in=int(sec["burn_in"]),
            n_traj=int(sec.get("n_traj", 1000)),
            seed=seed,
        )
    except KeyError as exc:
        raise ConfigError(f"[trajectory] needs dt, steps and burn_in: missing {exc}") from exc
    except LqgentError as exc:
        raise ConfigError(str(exc)) from exc
    decimate = int(sec.get("decimate", 1))
    _echo_params(params, fb, kind, theta)

    from .errors import InputError as _InputError

    loop = closed_loop(params, fb, kind, theta)
    try:
        # discretization/burn-in validation failures are configuration errors
        record = simulate(params, fb, kind, cfg, theta, loop=loop)
        stats = (
            ensemble_covariance(params, fb, kind, cfg, theta, loop=loop)
            if cfg.n_traj >= 2
            else None
        )
    except _InputError as exc:
        raise ConfigError(str(exc)) from exc

    out_dir = run.out_dir or Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{run.prefix}trajectory.csv"
    write_trajectory_csv(record, path, decimate=decimate)
    print(f"wrote {path} ({len(record.times[::decimate])} rows, decimation {decimate})")

    if stats is not None:
        xi = loop.xi_excess.mat
        z = (stats.cov - xi) / np.where(stats.stderr > 0, stats.stderr, np.inf)
        print(f"ensemble of {cfg.n_traj} trajectories vs excess-noise solution:")
        print("  entry      ensemble        lyapunov        z")
        labels = ("x+", "p+", "x-", "p-")
        for i in range(4):
            for j in range(i, 4):
                print(
                    f"  {labels[i]:>2},{labels[j]:>2}  {stats.cov[i, j]: .6e}  "
                    f"{xi[i, j]: .6e}  {z[i, j]:+6.2f}"
                )
        print(f"max |z| = {np.abs(z).max():.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lqgent",
        description=(
            "Steady-state entanglement of two coupled, continuously measured "
            "oscillators under optimal LQG feedback"
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, doc in (
        ("steady", cmd_steady, "solve one operating point and report the steady state"),
        ("sweep", cmd_sweep, "evaluate a (g, eta) grid and extract separability boundaries"),
        ("trajectory", cmd_trajectory, "simulate conditional-mean trajectories"),
    ):
        sp = sub.add_parser(name, help=doc)
        sp.add_argument("--config", required=True, help="TOML config file or bundled recipe name")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
        sp.add_argument("--seed", type=int, default=None, help="override the trajectory seed")
        sp.add_argument("--format", choices=("csv", "json", "both"), default=None)
        sp.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(_Run(cfg, args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LqgentError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
