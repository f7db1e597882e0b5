"""Closed-loop assembly: regulator gain, excess noise, unconditional state.

Combining the steady-state filter with the steady-state regulator yields the
unconditional covariance Sigma_u = Sigma_c + Xi, where the excess noise Xi is
the stationary covariance of the conditional means driven by measurement
innovations through the closed loop.  Small-effort asymptotic expansions of
the unconditional covariances under independent feedback serve as an
independent oracle for the numeric pipeline.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .entanglement import cost_matrix, default_epr_theta
from .errors import InputError
from .model import (
    FeedbackConfig,
    FeedbackMode,
    PhysicalParams,
    StateSpaceModel,
    build_model,
)
from .solvers import (
    Basis,
    CovMatrix,
    closed_form_conditional,
    solve_control_care,
    solve_filter_care,
    solve_lyapunov,
)

#: Same-mode position-momentum entries of the unconditional covariance vanish
#: identically (feedback only drives momenta); residuals below this, relative
#: to the covariance scale, are rounded to exact zero, larger ones indicate a
#: mis-assembled loop.
XP_CANCEL_RTOL = 1e-8


def lqr_gain(omega_ctrl: np.ndarray, model: StateSpaceModel, fb: FeedbackConfig) -> np.ndarray:
    """Feedback gain K = Q^-1 B^T Omega_ctrl with effort weight Q = q I."""
    if fb.effort <= 0:
        raise InputError(f"control effort must be positive, got {fb.effort}")
    return model.b_mat.T @ np.asarray(omega_ctrl, dtype=float) / fb.effort


def kalman_gain(sigma_cond: CovMatrix, model: StateSpaceModel) -> np.ndarray:
    """Innovation gain (Sigma_c C^T + M) W^-1 of the steady-state filter."""
    return (sigma_cond.mat @ model.c_mat.T + model.m_mat) @ np.linalg.inv(model.w_mat)


@dataclass(frozen=True)
class ClosedLoop:
    """Everything the steady-state LQG loop produces for one parameter point."""

    model: StateSpaceModel
    fb: FeedbackConfig
    cost_kind: str
    theta: float
    k_gain: np.ndarray
    kalman_gain: np.ndarray
    a_closed: np.ndarray
    sigma_cond: CovMatrix
    xi_excess: CovMatrix
    sigma_uncond: CovMatrix
    filter_residual: float
    control_residual: float


def closed_loop(
    params: PhysicalParams,
    fb: FeedbackConfig,
    cost_kind: str = "cool",
    theta: Optional[float] = None,
    care_method: str = "schur",
) -> ClosedLoop:
    """Solve the full steady-state LQG problem for one parameter point.

    Pipeline: filter Riccati -> regulator Riccati -> excess-noise Lyapunov
    equation (A - BK) Xi + Xi (A - BK)^T + G W G^T = 0 with G the innovation
    gain, then Sigma_u = Sigma_c + Xi.  By the separation principle the two
    Riccati solutions are independent of each other; only Xi couples them.
    """
    model = build_model(params, fb)
    if theta is None:
        theta = default_epr_theta(model.params.g)

    filt = solve_filter_care(model, method=care_method)
    sigma_c = filt.value

    p_mat = cost_matrix(model, cost_kind, theta)
    ctrl = solve_control_care(model, p_mat, fb, method=care_method)
    k = lqr_gain(ctrl.value, model, fb)
    a_cl = model.a_mat - model.b_mat @ k

    gain = kalman_gain(sigma_c, model)
    innovation_noise = gain @ model.w_mat @ gain.T
    xi = solve_lyapunov(a_cl, innovation_noise)

    sigma_u = sigma_c.mat + xi.mat
    xp_tol = XP_CANCEL_RTOL * max(1.0, np.abs(sigma_u).max())
    for i, j in ((0, 1), (2, 3)):
        if abs(sigma_u[i, j]) <= xp_tol:
            sigma_u[i, j] = sigma_u[j, i] = 0.0
        else:
            warnings.warn(
                f"unconditional x-p correlation ({i},{j}) = {sigma_u[i, j]:.3e} "
                "did not cancel; possible loop mis-assembly",
                stacklevel=2,
            )

    return ClosedLoop(
        model=model,
        fb=fb,
        cost_kind=cost_kind,
        theta=float(theta),
        k_gain=k,
        kalman_gain=gain,
        a_closed=a_cl,
        sigma_cond=sigma_c,
        xi_excess=xi,
        sigma_uncond=CovMatrix(sigma_u, Basis.NORMAL),
        filter_residual=filt.residual_norm,
        control_residual=ctrl.residual_norm,
    )


def uncond_asymptotic(
    params: PhysicalParams,
    fb: FeedbackConfig,
    cost_kind: str,
    q: float,
    theta: float = 0.0,
) -> dict[str, float]:
    """Small-effort expansions of the unconditional covariances (independent feedback).

    Valid in the high-quality-factor limit gamma << Omega_0.  The conditional
    entries entering the coefficients come from the closed-form per-mode
    solution.  Returned keys name the expanded diagonal entries:

    * cooling cost: ``x+x+``, ``p+p+``, ``x-x-``, ``p-p-``, each expanded
      through order q (remainder O(q^3/2));
    * EPR cost, theta = 0: ``x+x+`` through order q^3/4 (remainder O(q^5/4))
      and ``p-p-`` through order sqrt(q);
    * EPR cost, theta = pi: ``p+p+`` through order sqrt(q) and ``x-x-``
      through order q^3/4.

    As q -> 0 every expansion reduces to the conditional covariance: cheap
    feedback drives the unconditional state to the conditional one, up to the
    effort-independent penalty (Gm / a^2 W) S_xx^2 of the cooling cost.
    """
    if fb.mode is not FeedbackMode.INDEPENDENT:
        raise InputError("asymptotic expansions exist only for independent feedback")
    if q <= 0:
        raise InputError(f"control effort must be positive, got {q}")

    model = build_model(params, FeedbackConfig.independent(q))
    p = model.params
    gm = p.gamma_m
    sq = np.sqrt(q)

    def cond(mode: str) -> tuple[float, float, float, float, float]:
        cov = closed_form_conditional(mode, model).mat
        om = model.omega_plus if mode == "+" else model.omega_minus
        al = model.alpha_plus if mode == "+" else model.alpha_minus
        return cov[0, 0], cov[0, 1], cov[1, 1], om, al

    out: dict[str, float] = {}
    if cost_kind == "cool":
        for mode, kx, kp in (("+", "x+x+", "p+p+"), ("-", "x-x-", "p-p-")):
            sxx, sxp, spp, om, al = cond(mode)
            base = gm / (al**2 * om) * sxx**2
            drift = gm / al**2 * (sxp**2 - 3.0 * sxx**2)
            out[kx] = (
                sxx
                + base
                + sq * 2.0 * gm / (al**2 * np.sqrt(om)) * sxx * (sxx + sxp)
                + q * drift
            )
            out[kp] = (
                spp
                + base
                + sq * gm / (al**2 * np.sqrt(om)) * (sxp**2 - sxx**2)
                - q * drift
            )
    elif cost_kind == "epr":
        if not (np.isclose(theta, 0.0) or np.isclose(theta, np.pi)):
            raise InputError("EPR expansions are available at theta = 0 and theta = pi")
        sxxp, sxpp, sppp, _, _ = cond("+")
        sxxm, sxpm, sppm, _, alm = cond("-")
        if np.isclose(theta, 0.0):
            out["x+x+"] = (
                sxxp
                + q**0.25 * 3.0 * gm / 2.0**0.75 * sxxp**2
                + sq * np.sqrt(2.0) * gm * sxxp * sxpp
                + q**0.75 * gm / (4.0 * 2.0**0.25) * (2.0 * sxpp**2 - sxxp**2)
            )
            out["p-p-"] = sppm + sq * gm / (np.sqrt(2.0) * alm**3) * (sxpm**2 + sxxm**2)
        else:
            out["p+p+"] = sppp + sq * gm / np.sqrt(2.0) * (sxpp**2 + sxxp**2)
            out["x-x-"] = (
                sxxm
                + q**0.25 * 3.0 * gm / (2.0**0.75 * alm**2.5) * sxxm**2
                + sq * np.sqrt(2.0) * gm / alm * sxxm * sxpm
                + q**0.75 * np.sqrt(alm) * gm / (4.0 * 2.0**0.25) * (2.0 * sxpm**2 - sxxm**2)
            )
    else:
        raise InputError(f"unknown cost kind {cost_kind!r}; expected 'cool' or 'epr'")
    return out
