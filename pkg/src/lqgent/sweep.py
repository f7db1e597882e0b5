"""Parameter-grid evaluation and separability-boundary extraction.

Evaluates the conditional (and optionally unconditional) entanglement
pipeline on a (g/Omega_0, eta) grid, records one matrix per requested
quantity, and extracts separability boundaries as level sets of the smallest
partial-transpose symplectic eigenvalue at 1/2.  Grid cells are independent
work units; evaluation order never affects the result.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .control import closed_loop
from .entanglement import (
    default_epr_theta,
    log_negativity_general,
    threshold_conditional,
    to_bare_basis,
)
from .errors import InputError, LqgentError, SweepError
from .model import FeedbackConfig, PhysicalParams, build_model
from .solvers import solve_filter_care

SCHEMA_VERSION = 1

#: Cells closer than this to the repulsive stability edge are skipped: the
#: differential mode softens toward zero frequency there and the Riccati
#: conditioning degrades.
STABILITY_MARGIN = 1e-4

QUANTITIES = (
    "cond_EN",
    "uncond_EN",
    "nu_cond",
    "nu_uncond",
    "epr_var",
    "thresholds",
)

_UNCOND = {"uncond_EN", "nu_uncond"}


@dataclass(frozen=True)
class GridSpec:
    """Uniform 1-D grid given by bounds and point count."""

    min: float
    max: float
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise InputError(f"grid needs at least one point, got count={self.count}")
        if not (np.isfinite(self.min) and np.isfinite(self.max)):
            raise InputError("grid bounds must be finite")
        if self.max < self.min:
            raise InputError(f"grid bounds not monotone: min={self.min} > max={self.max}")

    def values(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.count)


@dataclass(frozen=True)
class SweepSpec:
    """Full description of one phase-diagram computation.

    `g_over_omega0` and `eta` define the grid axes; `fixed` supplies every
    other physical parameter (its own g and eta are overridden per cell).
    """

    g_over_omega0: GridSpec
    eta: GridSpec
    fixed: PhysicalParams
    fb: FeedbackConfig
    cost_kind: str = "cool"
    theta: Optional[float] = None
    quantities: tuple = ("cond_EN", "nu_cond")

    def __post_init__(self):
        if self.g_over_omega0.min <= -0.25 + STABILITY_MARGIN:
            raise InputError(
                "g grid reaches the repulsive stability edge; keep "
                f"g/omega0 > {-0.25 + STABILITY_MARGIN}"
            )
        if not (0.0 < self.eta.min and self.eta.max <= 1.0):
            raise InputError("eta grid must lie in (0, 1]")
        unknown = set(self.quantities) - set(QUANTITIES)
        if unknown:
            raise InputError(f"unknown sweep quantities: {sorted(unknown)}")
        if not self.quantities:
            raise InputError("at least one quantity must be requested")

    @property
    def needs_closed_loop(self) -> bool:
        return bool(_UNCOND & set(self.quantities))


@dataclass
class SweepResult:
    """Grid axes, one value matrix per quantity, boundaries and metadata.

    Matrices are indexed ``[i_g, i_eta]``.  `status` holds "ok" per
    successful cell, "skipped_margin" near the stability edge, or the error
    class name for failed cells (their values are NaN).  Boundaries are
    polylines of (g, eta) vertices along nu = 1/2.
    """

    g_values: np.ndarray
    eta_values: np.ndarray
    data: dict[str, np.ndarray]
    status: np.ndarray
    boundaries: dict[str, list]
    thresholds: Optional[dict] = None
    metadata: dict = field(default_factory=dict)


def _eval_cell(args) -> dict:
    spec, g_ratio, eta = args
    out: dict[str, float] = {}
    try:
        params = replace(
            spec.fixed, omega0=1.0, **_normalized_overrides(spec.fixed, g_ratio, eta)
        )
        theta = spec.theta if spec.theta is not None else default_epr_theta(params.g)
        if spec.needs_closed_loop:
            loop = closed_loop(params, spec.fb, spec.cost_kind, theta)
            model, sigma_c = loop.model, loop.sigma_cond
            rep_u = log_negativity_general(loop.sigma_uncond, model, theta)
            out["uncond_EN"] = rep_u.log_negativity
            out["nu_uncond"] = rep_u.symplectic_nu
            residual = max(loop.filter_residual, loop.control_residual)
        else:
            model = build_model(params, spec.fb)
            sol = solve_filter_care(model)
            sigma_c = sol.value
            residual = sol.residual_norm
        rep_c = log_negativity_general(sigma_c, model, theta)
        out["cond_EN"] = rep_c.log_negativity
        out["nu_cond"] = rep_c.symplectic_nu
        if "epr_var" in spec.quantities:
            out["epr_var"] = rep_c.epr_variance
        return {"status": "ok", "values": out, "residual": residual}
    except LqgentError as exc:
        return {"status": type(exc).__name__, "values": {}, "error": str(exc), "residual": 0.0}


def _normalized_overrides(fixed: PhysicalParams, g_ratio: float, eta: float) -> dict:
    w = fixed.omega0
    return dict(
        g=g_ratio,
        eta=eta,
        gamma=fixed.gamma / w,
        gamma_th=fixed.gamma_th / w,
        gamma_ba=fixed.gamma_ba / w,
    )


def run_sweep(spec: SweepSpec, threads: int = 1) -> SweepResult:
    """Evaluate the pipeline on every grid cell and extract boundaries.

    Failed cells are recorded per cell, not fatal; only an entirely failed
    grid raises `SweepError`.  With threads > 1 the cells are distributed
    over a process pool; assembly is index-ordered either way, so the result
    is identical for any worker count.
    """
    g_vals = spec.g_over_omega0.values()
    eta_vals = spec.eta.values()
    cells = []
    for i, g in enumerate(g_vals):
        for j, eta in enumerate(eta_vals):
            if g > -0.25 + STABILITY_MARGIN:
                cells.append((i, j, (spec, float(g), float(eta))))

    if threads > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunk = max(1, len(cells) // (8 * threads))
            results = list(pool.map(_eval_cell, [c[2] for c in cells], chunksize=chunk))
    else:
        results = [_eval_cell(c[2]) for c in cells]

    wanted = [q for q in spec.quantities if q != "thresholds"]
    data = {q: np.full((len(g_vals), len(eta_vals)), np.nan) for q in wanted}
    status = np.full((len(g_vals), len(eta_vals)), "skipped_margin", dtype=object)
    max_residual = 0.0
    n_ok = 0
    first_error = None
    for (i, j, _), res in zip(cells, results):
        status[i, j] = res["status"]
        if res["status"] == "ok":
            n_ok += 1
            max_residual = max(max_residual, res["residual"])
            for q in wanted:
                if q in res["values"]:
                    data[q][i, j] = res["values"][q]
        elif first_error is None:
            first_error = res.get("error", res["status"])
    if cells and n_ok == 0:
        raise SweepError(f"every grid cell failed; first cause: {first_error}")

    boundaries = {}
    for q, key in (("nu_cond", "cond"), ("nu_uncond", "uncond")):
        if q in data:
            boundaries[key] = extract_boundary(g_vals, eta_vals, data[q], level=0.5)

    thresholds = None
    if "thresholds" in spec.quantities:
        fixed_norm = spec.fixed.normalized()
        eta_plus = np.empty_like(g_vals)
        eta_minus = np.empty_like(g_vals)
        for i, g in enumerate(g_vals):
            th = threshold_conditional(replace(fixed_norm, g=float(g)))
            eta_plus[i] = th.eta_plus
            eta_minus[i] = th.eta_minus
        th0 = threshold_conditional(fixed_norm)
        thresholds = {
            "g_plus": th0.g_plus,
            "g_minus": th0.g_minus,
            "eta_plus": eta_plus,
            "eta_minus": eta_minus,
        }

    meta = {
        "schema_version": SCHEMA_VERSION,
        "code_version": __version__,
        "cost_kind": spec.cost_kind,
        "theta": spec.theta,
        "feedback_mode": spec.fb.mode.value,
        "control_effort": spec.fb.effort,
        "fixed_params": {
            "omega0": spec.fixed.omega0,
            "g": spec.fixed.g,
            "gamma": spec.fixed.gamma,
            "gamma_th": spec.fixed.gamma_th,
            "gamma_ba": spec.fixed.gamma_ba,
            "eta": spec.fixed.eta,
            "q1": spec.fixed.q1,
            "q2": spec.fixed.q2,
        },
        "quantities": list(spec.quantities),
        "max_solver_residual": max_residual,
        "cells_ok": n_ok,
        "cells_total": int(len(g_vals) * len(eta_vals)),
    }
    return SweepResult(g_vals, eta_vals, data, status, boundaries, thresholds, meta)


def _interp_crossing(x0, x1, f0, f1) -> float:
    return x0 + (x1 - x0) * f0 / (f0 - f1)


def extract_boundary(
    g_vals: np.ndarray, eta_vals: np.ndarray, nu: np.ndarray, level: float = 0.5
) -> list:
    """Polylines of the nu = level set, by marching squares with bilinear edges.

    Works on the sign of (level - nu), which crosses zero smoothly where the
    clipped log negativity would only touch it.  Cells containing NaNs are
    skipped.  Returns a list of polylines, each an (n, 2) array of (g, eta)
    vertices.
    """
    f = level - nu
    # a level set through a grid node would hide the sign change on both
    # adjacent edges; nudge exact zeros by one subnormal step
    f = np.where(f == 0.0, np.nextafter(0.0, 1.0), f)
    segments = []
    for i in range(len(g_vals) - 1):
        for j in range(len(eta_vals) - 1):
            corners = f[i, j], f[i + 1, j], f[i + 1, j + 1], f[i, j + 1]
            if any(not np.isfinite(c) for c in corners):
                continue
            fa, fb, fc, fd = corners
            pts = []
            # edges: bottom (a-b), right (b-c), top (d-c), left (a-d);
            # sign comparison, not products, which can underflow to zero
            if (fa > 0) != (fb > 0):
                pts.append((_interp_crossing(g_vals[i], g_vals[i + 1], fa, fb), eta_vals[j]))
            if (fb > 0) != (fc > 0):
                pts.append((g_vals[i + 1], _interp_crossing(eta_vals[j], eta_vals[j + 1], fb, fc)))
            if (fd > 0) != (fc > 0):
                pts.append((_interp_crossing(g_vals[i], g_vals[i + 1], fd, fc), eta_vals[j + 1]))
            if (fa > 0) != (fd > 0):
                pts.append((g_vals[i], _interp_crossing(eta_vals[j], eta_vals[j + 1], fa, fd)))
            if len(pts) == 2:
                segments.append((pts[0], pts[1]))
            elif len(pts) == 4:
                # saddle cell: pair edges without resolving the ambiguity
                segments.append((pts[0], pts[1]))
                segments.append((pts[2], pts[3]))
    return _chain_segments(segments)


def _chain_segments(segments: list) -> list:
    """Join shared-endpoint segments into polylines (greedy, order-stable)."""
    def key(p):
        return (round(p[0], 12), round(p[1], 12))

    unused = list(range(len(segments)))
    by_end: dict = {}
    for idx, (p, q) in enumerate(segments):
        by_end.setdefault(key(p), []).append(idx)
        by_end.setdefault(key(q), []).append(idx)

    used = set()
    polylines = []
    for start in unused:
        if start in used:
            continue
        used.add(start)
        line = [segments[start][0], segments[start][1]]
        for endpoint in (1, 0):
            while True:
                k = key(line[-1] if endpoint else line[0])
                nxt = next((c for c in by_end.get(k, []) if c not in used), None)
                if nxt is None:
                    break
                used.add(nxt)
                p, q = segments[nxt]
                new = q if key(p) == k else p
                if endpoint:
                    line.append(new)
                else:
                    line.insert(0, new)
        polylines.append(np.asarray(line))
    return polylines


def sweep_to_json_dict(result: SweepResult) -> dict:
    """JSON-ready mirror of a sweep result."""
    out = {
        "schema_version": SCHEMA_VERSION,
        "metadata": result.metadata,
        "g_over_omega0": result.g_values.tolist(),
        "eta": result.eta_values.tolist(),
        "data": {q: m.tolist() for q, m in result.data.items()},
        "status": result.status.tolist(),
        "boundaries": {
            k: [line.tolist() for line in lines] for k, lines in result.boundaries.items()
        },
    }
    if result.thresholds is not None:
        out["thresholds"] = {
            "g_plus": result.thresholds["g_plus"],
            "g_minus": result.thresholds["g_minus"],
            "eta_plus": result.thresholds["eta_plus"].tolist(),
            "eta_minus": result.thresholds["eta_minus"].tolist(),
        }
    return out


def write_sweep_json(result: SweepResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(sweep_to_json_dict(result), fh, indent=1)
        fh.write("\n")


def write_sweep_csv(result: SweepResult, path) -> None:
    """Long-format CSV: one row per (cell, quantity) plus threshold curves.

    Columns ``g,eta,quantity,value,status``; threshold curves are per-g rows
    with an empty eta field.  Floats use shortest round-trip formatting.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["schema_version", SCHEMA_VERSION, "", "", ""])
        writer.writerow(["g", "eta", "quantity", "value", "status"])
        for q, mat in result.data.items():
            for i, g in enumerate(result.g_values):
                for j, eta in enumerate(result.eta_values):
                    v = mat[i, j]
                    writer.writerow(
                        [
                            repr(float(g)),
                            repr(float(eta)),
                            q,
                            "" if np.isnan(v) else repr(float(v)),
                            result.status[i, j],
                        ]
                    )
        if result.thresholds is not None:
            for name in ("eta_plus", "eta_minus"):
                for g, v in zip(result.g_values, result.thresholds[name]):
                    writer.writerow(
                        [repr(float(g)), "", f"threshold_{name}", repr(float(v)), "ok"]
                    )


def entangled_cell_count(result: SweepResult, quantity: str = "cond_EN") -> int:
    """Number of grid cells with strictly positive log negativity."""
    if quantity not in result.data:
        raise InputError(f"quantity {quantity!r} was not computed")
    return int(np.nansum(result.data[quantity] > 0))
