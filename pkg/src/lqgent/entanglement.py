"""Entanglement measures, witnesses, regulator cost matrices and thresholds.

The logarithmic negativity of a two-mode Gaussian state is computed from the
smallest symplectic eigenvalue of the partially transposed covariance matrix,
either through the block-diagonal normal-mode formula or through a
first-principles PPT computation in the bare-particle basis (used as an
independent oracle and as the fallback for non-block-diagonal states).
Analytic coupling/efficiency thresholds and the reduced log-negativity
approximations for the conditional state are provided alongside.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from .errors import InputError, InternalError
from .model import PhysicalParams, StateSpaceModel, mode_transform, symplectic_form
from .solvers import Basis, CovMatrix, symplectic_eigenvalues

#: Tolerance used when gating entanglement inputs on physicality.
INPUT_PHYSICALITY_TOL = 1e-8

#: Relative size below which off-diagonal mode blocks count as zero.
BLOCK_DIAG_RTOL = 1e-10


@dataclass(frozen=True)
class EntanglementReport:
    """Entanglement figures of one Gaussian state.

    Attributes
    ----------
    log_negativity : float
        E_N = max(0, -ln(2 nu)) with nu the smallest symplectic eigenvalue of
        the partial transpose; positive iff the state is entangled.
    symplectic_nu : float
        The smallest partial-transpose symplectic eigenvalue itself; exposed
        unclipped so boundary extraction can interpolate through 1/2.
    epr_variance : float
        Two-quadrature joint variance witness; < 2 certifies entanglement
        (sufficient, not necessary).
    epr_theta : float
        Quadrature mixing angle at which the witness was evaluated.
    """

    log_negativity: float
    symplectic_nu: float
    epr_variance: float
    epr_theta: float


def default_epr_theta(g: float) -> float:
    """Witness angle that pairs with the interaction sign: 0 repulsive, pi attractive."""
    return 0.0 if g < 0 else np.pi


def _as_cov(sigma: Union[CovMatrix, np.ndarray], basis: Basis) -> CovMatrix:
    if isinstance(sigma, CovMatrix):
        if sigma.basis is not basis:
            raise InputError(f"covariance must be in the {basis.value} basis")
        return sigma
    return CovMatrix(np.asarray(sigma, dtype=float), basis)


def _require_physical(cov: CovMatrix, what: str) -> None:
    v = cov.physicality_violation()
    if v > INPUT_PHYSICALITY_TOL:
        raise InputError(
            f"{what} violates the vacuum bound (nu_min short by {v:.3e})"
        )


def to_bare_basis(sigma: Union[CovMatrix, np.ndarray], model: StateSpaceModel) -> CovMatrix:
    """Map a normal-mode covariance to the bare (x1, p1, x2, p2) basis."""
    cov = _as_cov(sigma, Basis.NORMAL)
    s_inv = np.linalg.inv(mode_transform(model))
    return CovMatrix(s_inv @ cov.mat @ s_inv.T, Basis.BARE)


def to_normal_basis(sigma: Union[CovMatrix, np.ndarray], model: StateSpaceModel) -> CovMatrix:
    """Map a bare-basis covariance to the normal-mode basis."""
    cov = _as_cov(sigma, Basis.BARE)
    s = mode_transform(model)
    return CovMatrix(s @ cov.mat @ s.T, Basis.NORMAL)


def _is_block_diagonal(mat: np.ndarray) -> bool:
    off = np.linalg.norm(mat[:2, 2:])
    return off <= BLOCK_DIAG_RTOL * max(np.linalg.norm(mat), 1.0)


def log_negativity(
    sigma: Union[CovMatrix, np.ndarray],
    model: StateSpaceModel,
    theta: Optional[float] = None,
) -> EntanglementReport:
    """Entanglement report via the block-diagonal normal-mode formula.

    For Sigma = diag(S+, S-) the smallest partial-transpose symplectic
    eigenvalue is

        nu = sqrt((sig - sqrt(sig^2 - 4 det S+ det S-)) / 2),
        sig = (a-^2/a+^2) S+_xx S-_pp - 2 S+_xp S-_xp + (a+^2/a-^2) S+_pp S-_xx,

    where a+- are the mode amplitude scales.  The EPR witness is evaluated in
    the bare basis at `theta` (default chosen by the sign of the coupling).
    """
    cov = _as_cov(sigma, Basis.NORMAL)
    if cov.mat.shape != (4, 4):
        raise InputError("log_negativity expects the full two-mode covariance")
    _require_physical(cov, "input covariance")
    if not _is_block_diagonal(cov.mat):
        raise InputError(
            "normal-mode formula requires a block-diagonal covariance; "
            "use log_negativity_general for correlated mode blocks"
        )
    sp, sm = cov.block_plus, cov.block_minus
    ap2, am2 = model.alpha_plus**2, model.alpha_minus**2
    sig = (
        (am2 / ap2) * sp[0, 0] * sm[1, 1]
        - 2.0 * sp[0, 1] * sm[0, 1]
        + (ap2 / am2) * sp[1, 1] * sm[0, 0]
    )
    det_prod = np.linalg.det(sp) * np.linalg.det(sm)
    inner = max(sig**2 - 4.0 * det_prod, 0.0)
    nu = np.sqrt(max(sig - np.sqrt(inner), 0.0) / 2.0)
    en = max(0.0, -np.log(2.0 * nu))

    if theta is None:
        theta = default_epr_theta(model.params.g)
    epr = epr_variance(to_bare_basis(cov, model), theta)
    return EntanglementReport(en, float(nu), epr, float(theta))


def ppt_symplectic_nu_bare(sigma_bare: Union[CovMatrix, np.ndarray]) -> float:
    """Smallest symplectic eigenvalue after partial transposition of mode 2.

    Partial transposition flips the sign of p2; the eigenvalue is obtained
    from i J Sigma-tilde without any block-structure assumption.
    """
    cov = _as_cov(sigma_bare, Basis.BARE)
    if cov.mat.shape != (4, 4):
        raise InputError("PPT computation expects the full two-mode covariance")
    flip = np.diag([1.0, 1.0, 1.0, -1.0])
    nus = symplectic_eigenvalues(flip @ cov.mat @ flip)
    return float(nus[0])


def log_negativity_bare_oracle(sigma_bare: Union[CovMatrix, np.ndarray]) -> float:
    """First-principles PPT logarithmic negativity in the bare basis."""
    cov = _as_cov(sigma_bare, Basis.BARE)
    _require_physical(cov, "input covariance")
    nu = ppt_symplectic_nu_bare(cov)
    return max(0.0, -np.log(2.0 * nu))


def log_negativity_general(
    sigma: Union[CovMatrix, np.ndarray],
    model: StateSpaceModel,
    theta: Optional[float] = None,
) -> EntanglementReport:
    """Entanglement report for any physical normal-mode covariance.

    Dispatches to the block-diagonal formula when applicable and otherwise to
    the bare-basis PPT computation (single-input feedback correlates the mode
    blocks of the unconditional state).
    """
    cov = _as_cov(sigma, Basis.NORMAL)
    if _is_block_diagonal(cov.mat):
        return log_negativity(cov, model, theta)
    _require_physical(cov, "input covariance")
    bare = to_bare_basis(cov, model)
    nu = ppt_symplectic_nu_bare(bare)
    if theta is None:
        theta = default_epr_theta(model.params.g)
    return EntanglementReport(
        max(0.0, -np.log(2.0 * nu)), nu, epr_variance(bare, theta), float(theta)
    )


def epr_variance(sigma_bare: Union[CovMatrix, np.ndarray], theta: float) -> float:
    """Joint-quadrature variance witness in the bare basis.

    Evaluates Var(x1 + cos(t) x2 + sin(t) p2) + Var(p1 + sin(t) x2 - cos(t) p2)
    as a quadratic form on the covariance matrix; first moments never enter.
    A value below 2 certifies entanglement.
    """
    cov = _as_cov(sigma_bare, Basis.BARE)
    ct, st = np.cos(theta), np.sin(theta)
    v1 = np.array([1.0, 0.0, ct, st])
    v2 = np.array([0.0, 1.0, st, -ct])
    return float(v1 @ cov.mat @ v1 + v2 @ cov.mat @ v2)


def cost_matrix(model: StateSpaceModel, kind: str, theta: float = 0.0) -> np.ndarray:
    """Regulator state-cost matrix, in units of Omega_0.

    ``kind="cool"`` weights each mode by its frequency, diag(W+, W+, W-, W-),
    so the cost is the total normal-mode energy.  ``kind="epr"`` penalizes
    the two joint quadratures of the EPR witness at angle `theta`; expressed
    in normal-mode coordinates that is blockdiag(P+(theta), P-(theta+pi))
    with

        P_s(t) = [[(1 + cos t) / a_s^2,  sin t],
                  [sin t,                a_s^2 (1 - cos t)]],

    a rank-1 PSD block for every angle (determinant identically zero).
    """
    if kind == "cool":
        p = np.diag(
            [model.omega_plus, model.omega_plus, model.omega_minus, model.omega_minus]
        )
    elif kind == "epr":

        def block(alpha: float, t: float) -> np.ndarray:
            return np.array(
                [
                    [(1.0 + np.cos(t)) / alpha**2, np.sin(t)],
                    [np.sin(t), alpha**2 * (1.0 - np.cos(t))],
                ]
            )

        p = np.zeros((4, 4))
        p[:2, :2] = block(model.alpha_plus, theta)
        p[2:, 2:] = block(model.alpha_minus, theta + np.pi)
        # Overall scale: one unit of trap frequency (Omega_0 = 1 internally).
        p *= model.omega_plus
    else:
        raise InputError(f"unknown cost kind {kind!r}; expected 'cool' or 'epr'")

    p = 0.5 * (p + p.T)
    if np.min(np.linalg.eigvalsh(p)) < -1e-12 * max(np.linalg.norm(p), 1.0):
        raise InternalError("cost matrix lost positive semidefiniteness")
    return p


@dataclass(frozen=True)
class ConditionalThresholds:
    """Analytic conditional-entanglement thresholds (all dimensionless).

    ``g_plus`` and ``g_minus`` are the coupling thresholds g/Omega_0 at unit
    efficiency: attractive couplings above ``g_plus`` or repulsive couplings
    below ``g_minus`` admit conditional entanglement.  ``eta_plus`` and
    ``eta_minus`` are the minimum detection efficiencies at the coupling the
    parameters were evaluated with (meaningful on the matching branch).
    """

    g_plus: float
    eta_plus: float
    g_minus: float
    eta_minus: float


def threshold_conditional(params: PhysicalParams) -> ConditionalThresholds:
    """Back-action-limit thresholds for entanglement of the conditional state.

    Derived from the reduced log-negativity of the measurement-limited
    conditional state; with r = Gamma_tot / Gamma_ba,

        g_plus / W0  =  r^2 - 1/4,
        g_minus / W0 = -1/4 + (1/16) / r^2,
        eta_plus     =  2 r / sqrt(1 + 4 g/W0),
        eta_minus    =  2 r sqrt(1 + 4 g/W0).
    """
    if params.gamma_ba <= 0:
        raise InputError("thresholds require a positive back-action rate")
    ratio = params.gamma_tot / params.gamma_ba
    stiff = 1.0 + 4.0 * params.g_ratio
    return ConditionalThresholds(
        g_plus=ratio**2 - 0.25,
        eta_plus=2.0 * ratio / np.sqrt(stiff),
        g_minus=-0.25 + (1.0 / 16.0) / ratio**2,
        eta_minus=2.0 * ratio * np.sqrt(stiff),
    )


class ApproxLogNegativity(NamedTuple):
    """Reduced-formula log negativity plus a validity flag."""

    value: float
    valid: bool


#: Total decoherence must stay below this fraction of the trap frequency for
#: the reduced log-negativity formulas to apply.
APPROX_DECOHERENCE_CAP = 0.1


def logneg_approx(params: PhysicalParams, branch: str) -> ApproxLogNegativity:
    """Reduced conditional log negativity in the low-decoherence regime.

    attractive branch:  E_N = -(1/2) ln( (2/a-^2) Gamma_tot / Gamma_m )
    repulsive branch:   E_N = -(1/2) ln( 2 a-^2 Gamma_tot / Gamma_m )

    The value is clipped at zero.  The flag is false outside the validity
    window: the repulsive branch additionally requires
    a-^4 > sqrt(2 eta) Gamma_tot / Omega_0, where position-momentum
    correlations of the soft differential mode are still negligible.
    """
    p = params.normalized()
    am2 = p.alpha_minus**2
    ratio = p.gamma_tot / p.gamma_m
    low_dec = p.gamma_tot < APPROX_DECOHERENCE_CAP
    if branch == "attractive":
        raw = -0.5 * np.log(2.0 / am2 * ratio)
        valid = low_dec and p.g >= 0
    elif branch == "repulsive":
        raw = -0.5 * np.log(2.0 * am2 * ratio)
        window = p.alpha_minus**4 > np.sqrt(2.0 * p.eta) * p.gamma_tot
        valid = low_dec and p.g < 0 and window
    else:
        raise InputError(f"branch must be 'attractive' or 'repulsive', got {branch!r}")
    return ApproxLogNegativity(max(0.0, float(raw)), bool(valid))
