"""Stochastic simulation of the conditional means under closed-loop feedback.

The conditional means follow the linear stochastic differential equation
dX = (A - BK) X dt + G dw with the constant steady-state Kalman gain G and
Wiener increments of variance dt/2 per measurement channel.  Monte-Carlo
ensembles of these trajectories validate the excess-noise Lyapunov solution.
Time is measured in units of 1/Omega_0 throughout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .control import ClosedLoop, closed_loop
from .errors import InputError, StabilityError
from .model import FeedbackConfig, PhysicalParams

#: Fixed per-stream chunk length (steps) for noise generation.  Drawing in
#: constant-size chunks keeps each trajectory's substream identical no matter
#: how trajectories are batched, so results are reproducible under any
#: parallel or vectorized execution layout.
CHUNK_STEPS = 4096

#: Resolution bound: dt times the fastest mode frequency must stay below this.
DT_RESOLUTION = 0.05

#: A trajectory is declared divergent when its norm exceeds this.
DIVERGENCE_NORM = 1e6


@dataclass(frozen=True)
class TrajectoryConfig:
    """Discretization and ensemble parameters for conditional-mean simulation.

    dt is in units of 1/Omega_0; `burn_in` steps are discarded before the
    `steps` recorded ones.  The seed feeds a counter-based generator with one
    substream per trajectory index.
    """

    dt: float
    steps: int
    burn_in: int
    n_traj: int = 1
    seed: int = 0

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise InputError(f"dt must be positive, got {self.dt}")
        if self.steps < 1:
            raise InputError(f"steps must be >= 1, got {self.steps}")
        if self.burn_in < 0:
            raise InputError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.n_traj < 1:
            raise InputError(f"n_traj must be >= 1, got {self.n_traj}")


@dataclass(frozen=True)
class TrajectoryRecord:
    """One simulated conditional-mean path.

    `photocurrents` holds the integrated photocurrent increments
    dI = (sqrt(Gm)/a_pm) <x_pm> dt + dW over each recorded step, reusing the
    same Wiener increments that drove the state update.  `controls` holds the
    feedback inputs u = -K X at the start of each step.
    """

    times: np.ndarray
    x_c: np.ndarray
    photocurrents: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.x_c) == len(self.photocurrents) == len(self.controls) == n):
            raise InputError("trajectory record arrays must have equal length")
        for name in ("times", "x_c", "photocurrents", "controls"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InputError(f"non-finite values in trajectory record {name}")


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based substream for one trajectory, derived from (seed, index)."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))
    )


def draw_wiener(rng: np.random.Generator, n_steps: int, dt: float, dim: int = 2) -> np.ndarray:
    """Wiener increments with the measurement convention E[dW^2] = dt/2."""
    return rng.normal(0.0, np.sqrt(0.5 * dt), size=(n_steps, dim))


def _validate_against_loop(
    cfg: TrajectoryConfig, loop: ClosedLoop, require_burn_in: bool
) -> None:
    fastest = max(loop.model.omega_plus, loop.model.omega_minus)
    if cfg.dt * loop.model.omega_minus >= DT_RESOLUTION or cfg.dt * fastest >= DT_RESOLUTION:
        raise InputError(
            f"time step too coarse: dt*Omega = {cfg.dt * fastest:.3g} "
            f"(need < {DT_RESOLUTION})"
        )
    decay = -float(np.max(np.linalg.eigvals(loop.a_closed).real))
    if decay <= 0:
        raise StabilityError("closed loop is not stable")
    # Stationary ensemble statistics need the transient gone; a raw record
    # may legitimately start anywhere, including inside the transient.
    if require_burn_in and cfg.burn_in * cfg.dt < 10.0 / decay:
        raise InputError(
            f"burn_in covers {cfg.burn_in * cfg.dt:.3g} time units but ten "
            f"closed-loop decay times require {10.0 / decay:.3g}"
        )


def _initial_state(rng: np.random.Generator, xi: np.ndarray) -> np.ndarray:
    """Draw X(0) from the stationary excess-noise Gaussian.

    Burn-in makes the choice immaterial; starting from the stationary
    distribution merely shortens transients.  A degenerate Xi falls back to
    the origin.
    """
    vals, vecs = np.linalg.eigh(xi)
    vals = np.clip(vals, 0.0, None)
    if np.max(vals) <= 0.0:
        rng.standard_normal(4)  # keep substreams aligned across code paths
        return np.zeros(4)
    factor = vecs * np.sqrt(vals)
    return factor @ rng.standard_normal(4)


def simulate(
    params: PhysicalParams,
    fb: FeedbackConfig,
    cost_kind: str,
    cfg: TrajectoryConfig,
    theta: Optional[float] = None,
    traj_index: int = 0,
    loop: Optional[ClosedLoop] = None,
    x0: Optional[np.ndarray] = None,
) -> TrajectoryRecord:
    """Euler-Maruyama integration of one conditional-mean trajectory.

    The drift is the closed-loop matrix A - BK; the diffusion injects the
    Kalman-gain-weighted innovations.  With additive noise and linear drift
    the scheme is exact in distribution up to O(dt) bias.  A fixed seed and
    trajectory index reproduce the record bit for bit.  `x0` overrides the
    default stationary-Gaussian initial state.
    """
    if loop is None:
        loop = closed_loop(params, fb, cost_kind, theta)
    _validate_against_loop(cfg, loop, require_burn_in=False)

    dt = cfg.dt
    a_step = np.eye(4) + loop.a_closed * dt
    gain = loop.kalman_gain
    k = loop.k_gain
    meas_rows = loop.model.c_mat  # photocurrent signal rows, sqrt(Gm)/a_pm on x_pm

    rng = trajectory_rng(cfg.seed, traj_index)
    if x0 is None:
        x = _initial_state(rng, loop.xi_excess.mat)
    else:
        rng.standard_normal(4)  # keep the substream aligned with the default path
        x = np.array(x0, dtype=float)
        if x.shape != (4,):
            raise InputError(f"x0 must have shape (4,), got {x.shape}")

    total = cfg.burn_in + cfg.steps
    times = (cfg.burn_in + np.arange(cfg.steps)) * dt
    x_out = np.empty((cfg.steps, 4))
    di_out = np.empty((cfg.steps, 2))
    u_out = np.empty((cfg.steps, k.shape[0]))

    done = 0
    while done < total:
        n = min(CHUNK_STEPS, total - done)
        dw = draw_wiener(rng, n, dt)
        for j in range(n):
            step = done + j
            if step >= cfg.burn_in:
                i = step - cfg.burn_in
                x_out[i] = x
                u_out[i] = -k @ x
                di_out[i] = meas_rows @ x * dt + dw[j]
            x = a_step @ x + gain @ dw[j]
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
                raise StabilityError(
                    f"trajectory diverged at step {step}; "
                    "check dt against the feedback gain"
                )
        done += n

    return TrajectoryRecord(times, x_out, di_out, u_out)


@dataclass(frozen=True)
class EnsembleStats:
    """Snapshot ensemble covariance of the conditional means.

    `cov` estimates the stationary excess-noise matrix from `n_traj`
    independent trajectories sampled after burn-in; `stderr` holds
    entrywise bootstrap standard errors.
    """

    cov: np.ndarray
    stderr: np.ndarray
    n_traj: int


def ensemble_covariance(
    params: PhysicalParams,
    fb: FeedbackConfig,
    cost_kind: str,
    cfg: TrajectoryConfig,
    theta: Optional[float] = None,
    batch: int = 2048,
    bootstrap: int = 200,
    loop: Optional[ClosedLoop] = None,
) -> EnsembleStats:
    """Ensemble covariance of X at the end of each trajectory, with errors.

    Trajectories are integrated in vectorized batches; each keeps its own
    counter-based substream, so the estimate is independent of the batch
    size.  Standard errors come from a bootstrap over trajectories, seeded
    deterministically from the configuration seed.
    """
    if loop is None:
        loop = closed_loop(params, fb, cost_kind, theta)
    _validate_against_loop(cfg, loop, require_burn_in=True)

    dt = cfg.dt
    a_step = np.eye(4) + loop.a_closed * dt
    # fixed-order broadcast rows instead of a gemm: BLAS kernels reorder the
    # summation depending on the batch shape, which would make the last ulp
    # of the result depend on the batch size
    a_rows = [np.ascontiguousarray(a_step.T[j]) for j in range(4)]
    g_rows = [np.ascontiguousarray(loop.kalman_gain.T[j]) for j in range(2)]
    total = cfg.burn_in + cfg.steps

    outers = np.empty((cfg.n_traj, 4, 4))
    for start in range(0, cfg.n_traj, batch):
        m = min(batch, cfg.n_traj - start)
        rngs = [trajectory_rng(cfg.seed, start + i) for i in range(m)]
        x = np.stack([_initial_state(r, loop.xi_excess.mat) for r in rngs])
        done = 0
        while done < total:
            n = min(CHUNK_STEPS, total - done)
            dw = np.stack([draw_wiener(r, n, dt) for r in rngs], axis=1)
            for j in range(n):
                dwj = dw[j]
                x = (
                    x[:, [0]] * a_rows[0]
                    + x[:, [1]] * a_rows[1]
                    + x[:, [2]] * a_rows[2]
                    + x[:, [3]] * a_rows[3]
                    + dwj[:, [0]] * g_rows[0]
                    + dwj[:, [1]] * g_rows[1]
                )
            done += n
            if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_NORM:
                raise StabilityError("ensemble diverged; check dt against the gain")
        outers[start : start + m] = x[:, :, None] * x[:, None, :]

    cov = outers.mean(axis=0)
    boot_rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0xB007,)))
    )
    idx = boot_rng.integers(0, cfg.n_traj, size=(bootstrap, cfg.n_traj))
    boot_means = outers[idx].mean(axis=1)
    stderr = boot_means.std(axis=0, ddof=1)
    return EnsembleStats(cov=cov, stderr=stderr, n_traj=cfg.n_traj)


def write_trajectory_csv(
    record: TrajectoryRecord,
    path,
    decimate: int = 1,
    include_controls: bool = True,
) -> None:
    """Dump a trajectory record as RFC-4180 CSV.

    Header: ``t,x_plus,p_plus,x_minus,p_minus,I_plus,I_minus[,u1[,u2]]``.
    Floats are written with shortest round-trip precision; `decimate` keeps
    every k-th retained step.
    """
    if decimate < 1:
        raise InputError(f"decimation factor must be >= 1, got {decimate}")
    sel = slice(None, None, decimate)
    header = ["t", "x_plus", "p_plus", "x_minus", "p_minus", "I_plus", "I_minus"]
    n_u = record.controls.shape[1] if include_controls else 0
    header += [f"u{i + 1}" for i in range(n_u)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t, x, di, u in zip(
            record.times[sel], record.x_c[sel], record.photocurrents[sel], record.controls[sel]
        ):
            row = [repr(float(t))]
            row += [repr(float(v)) for v in x]
            row += [repr(float(v)) for v in di]
            row += [repr(float(v)) for v in u[:n_u]]
            writer.writerow(row)
