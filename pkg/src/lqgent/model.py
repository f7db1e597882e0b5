"""Physical model of two coupled, continuously measured oscillators.

Two identical particles in harmonic traps of frequency Omega_0, coupled by a
linearized 1/r^n central interaction, decohere through gas collisions
(Gamma_th) and measurement back-action (Gamma_ba) while their positions are
read out continuously with efficiency eta.  A symplectic transformation to
common (+) and differential (-) normal modes decouples the dynamics; this
module builds the resulting state-space matrices and checks their structural
control-theoretic properties.

Conventions used throughout the package:

* state ordering ``(x+, p+, x-, p-)``;
* dimensionless quadratures with ``[x, p] = i`` (vacuum variance 1/2);
* every rate is normalized to the trap frequency before any computation
  (``Omega_0 = 1`` internally);
* measurement noise increments satisfy ``E[dW^2] = dt/2``, which fixes the
  measurement-noise intensity at ``W = I/2``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import ControllabilityError, InputError, StabilityError

# CODATA 2018 values.
HBAR = 1.054571817e-34
"""Reduced Planck constant (J s)."""

EPSILON_0 = 8.8541878128e-12
"""Vacuum permittivity (F/m)."""

ELEMENTARY_CHARGE = 1.602176634e-19
"""Elementary charge (C)."""

#: Relative singular-value cutoff for numerical rank decisions.  The matrices
#: are O(Omega_0)-scaled, so a scale-free relative threshold is appropriate.
RANK_RTOL = 1e-9


@dataclass(frozen=True)
class InteractionSpec:
    """Geometry and strength of a central 1/r^n interaction.

    Attributes
    ----------
    c_const : float
        Interaction constant C of the potential C / r^n, in SI units of
        J m^n.  Negative for attraction, positive for repulsion.
    d : float
        Mean particle separation in meters.
    n : int
        Positive power-law exponent.
    mass : float
        Particle mass in kilograms.
    """

    c_const: float
    d: float
    n: int
    mass: float

    def __post_init__(self):
        if not np.isfinite(self.c_const):
            raise InputError("interaction constant must be finite")
        if not (self.d > 0 and np.isfinite(self.d)):
            raise InputError(f"separation must be positive, got {self.d}")
        if self.n < 1 or int(self.n) != self.n:
            raise InputError(f"power-law exponent must be a positive integer, got {self.n}")
        if not (self.mass > 0 and np.isfinite(self.mass)):
            raise InputError(f"mass must be positive, got {self.mass}")


def coulomb_constant(q1: float, q2: float) -> float:
    """Interaction constant C = Q1 Q2 / (4 pi eps0) for charges in units of e."""
    return q1 * q2 * ELEMENTARY_CHARGE**2 / (4.0 * np.pi * EPSILON_0)


def coupling_rate(spec: InteractionSpec, omega0: float) -> float:
    """Linearized coupling rate g of the 1/r^n interaction (rad/s).

    Expanding the interaction Hamiltonian C / r^n to second order in the
    relative displacement and expressing positions in zero-point units
    x_zpf = sqrt(hbar / (m Omega_0)) gives

        g = -C x_zpf^2 / (2 hbar d^(n+2) n).

    An attractive potential (C < 0) yields g > 0, a repulsive one g < 0.
    """
    if not (omega0 > 0 and np.isfinite(omega0)):
        raise InputError(f"trap frequency must be positive, got {omega0}")
    x_zpf_sq = HBAR / (spec.mass * omega0)
    d_power = spec.d ** (spec.n + 2)
    with np.errstate(all="ignore"):
        g = -spec.c_const * x_zpf_sq / (2.0 * HBAR * d_power * spec.n) if d_power else np.inf
    if not np.isfinite(g):
        raise InputError(
            "coupling rate is not finite; check the separation and exponent "
            f"(d={spec.d}, n={spec.n})"
        )
    return g


@dataclass(frozen=True)
class PhysicalParams:
    """Experiment-level rates and charges defining the coupled system.

    All rates are angular frequencies in rad/s (or any consistent unit;
    only ratios to `omega0` enter the dynamics).

    Attributes
    ----------
    omega0 : float
        Trap frequency Omega_0 > 0.
    g : float
        Signed coupling rate; g > 0 attractive, g < 0 repulsive.  The
        differential mode is stable only for g/Omega_0 > -1/4.
    gamma : float
        Mechanical damping rate, >= 0.
    gamma_th : float
        Thermal decoherence rate, >= 0.
    gamma_ba : float
        Measurement back-action decoherence rate, > 0.
    eta : float
        Detection efficiency in (0, 1]; the measurement rate is
        Gamma_m = eta * Gamma_ba.
    q1, q2 : float
        Signed excess charges in units of the elementary charge.  Only the
        ratio enters the single-input feedback drive.
    """

    omega0: float
    g: float
    gamma: float
    gamma_th: float
    gamma_ba: float
    eta: float
    q1: float = 1.0
    q2: float = 1.0

    def __post_init__(self):
        for name in ("omega0", "g", "gamma", "gamma_th", "gamma_ba", "eta", "q1", "q2"):
            if not np.isfinite(getattr(self, name)):
                raise InputError(f"{name} must be finite")
        if self.omega0 <= 0:
            raise InputError(f"omega0 must be positive, got {self.omega0}")
        if self.gamma < 0:
            raise InputError(f"gamma must be non-negative, got {self.gamma}")
        if self.gamma_th < 0:
            raise InputError(f"gamma_th must be non-negative, got {self.gamma_th}")
        if self.gamma_ba <= 0:
            raise InputError(f"gamma_ba must be positive, got {self.gamma_ba}")
        if not 0.0 < self.eta <= 1.0:
            raise InputError(f"eta must be in (0, 1], got {self.eta}")
        if self.g / self.omega0 <= -0.25:
            raise StabilityError(
                "differential mode unstable: g/omega0 = "
                f"{self.g / self.omega0:.6g} <= -1/4"
            )

    @property
    def gamma_m(self) -> float:
        """Measurement rate Gamma_m = eta * Gamma_ba."""
        return self.eta * self.gamma_ba

    @property
    def gamma_tot(self) -> float:
        """Total decoherence rate Gamma_ba + Gamma_th."""
        return self.gamma_ba + self.gamma_th

    @property
    def g_ratio(self) -> float:
        """Dimensionless coupling g / Omega_0."""
        return self.g / self.omega0

    @property
    def omega_minus(self) -> float:
        """Differential-mode frequency sqrt(Omega_0^2 + 4 g Omega_0)."""
        return self.omega0 * np.sqrt(1.0 + 4.0 * self.g_ratio)

    @property
    def alpha_minus(self) -> float:
        """Mode-amplitude scale sqrt(Omega_- / Omega_0) = (1 + 4 g/Omega_0)^(1/4)."""
        return (1.0 + 4.0 * self.g_ratio) ** 0.25

    @property
    def alpha_plus(self) -> float:
        """Common-mode amplitude scale; identically 1 for identical particles."""
        return 1.0

    def normalized(self) -> "PhysicalParams":
        """Copy with all rates expressed in units of Omega_0 (omega0 == 1)."""
        w = self.omega0
        return replace(
            self,
            omega0=1.0,
            g=self.g / w,
            gamma=self.gamma / w,
            gamma_th=self.gamma_th / w,
            gamma_ba=self.gamma_ba / w,
        )


class FeedbackMode(enum.Enum):
    """Actuation topology: one shared drive or one drive per mode."""

    SINGLE = "single"
    INDEPENDENT = "independent"


@dataclass(frozen=True)
class FeedbackConfig:
    """Feedback topology plus the scalar control-effort penalty q > 0.

    The regulator weights each input by Q = q / Omega_0; small q means
    aggressive (cheap) feedback.
    """

    mode: FeedbackMode
    effort: float

    def __post_init__(self):
        if not isinstance(self.mode, FeedbackMode):
            raise InputError(f"unknown feedback mode {self.mode!r}")
        if not (self.effort > 0 and np.isfinite(self.effort)):
            raise InputError(f"control effort must be positive, got {self.effort}")

    @classmethod
    def single(cls, effort: float) -> "FeedbackConfig":
        return cls(FeedbackMode.SINGLE, effort)

    @classmethod
    def independent(cls, effort: float) -> "FeedbackConfig":
        return cls(FeedbackMode.INDEPENDENT, effort)


@dataclass(frozen=True)
class StateSpaceModel:
    """Normal-mode state-space matrices, in units of Omega_0.

    The sextet (A, B, C, V, W, M) describes

        dX = A X dt + B u dt + noise,        I dt = C X dt + dW,

    for X = (x+, p+, x-, p-) with process-noise intensity V, measurement-noise
    intensity W = I/2 and vanishing cross-correlation M.
    """

    a_mat: np.ndarray
    b_mat: np.ndarray
    c_mat: np.ndarray
    v_mat: np.ndarray
    w_mat: np.ndarray
    m_mat: np.ndarray
    omega_plus: float
    omega_minus: float
    alpha_plus: float
    alpha_minus: float
    params: PhysicalParams
    fb: FeedbackConfig

    @property
    def n_inputs(self) -> int:
        return self.b_mat.shape[1]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


def build_model(params: PhysicalParams, fb: FeedbackConfig) -> StateSpaceModel:
    """Assemble the normal-mode state-space model for a feedback topology.

    All rates are normalized to Omega_0 first.  For single-input feedback the
    two charges must differ in magnitude, otherwise the differential mode is
    not actuated and the model is uncontrollable.

    Raises
    ------
    StabilityError
        If g/Omega_0 <= -1/4 (enforced by `PhysicalParams`).
    ControllabilityError
        For single feedback with |Q1| == |Q2|.
    """
    p = params.normalized()
    if fb.mode is FeedbackMode.SINGLE and np.isclose(abs(p.q1), abs(p.q2)):
        raise ControllabilityError(
            "single feedback requires |Q1| != |Q2|; got "
            f"Q1={p.q1}, Q2={p.q2} (differential mode not actuated)"
        )

    om_p, om_m = 1.0, p.omega_minus
    al_p, al_m = p.alpha_plus, p.alpha_minus

    a = np.zeros((4, 4))
    a[0, 1], a[1, 0], a[1, 1] = om_p, -om_p, -p.gamma
    a[2, 3], a[3, 2], a[3, 3] = om_m, -om_m, -p.gamma

    # Inputs are the normal-mode drives (u+, u-); each drives its own
    # momentum quadrature, as dictated by the feedback Hamiltonian
    # -hbar * sum_s u_s x_s after the normal-mode transformation.
    if fb.mode is FeedbackMode.INDEPENDENT:
        b = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    else:
        charge_ratio = (p.q1 - p.q2) / (p.q1 + p.q2)
        b = np.array([[0.0], [1.0 / al_p], [0.0], [charge_ratio / al_m]])

    c = np.sqrt(p.gamma_m) * np.array(
        [[1.0 / al_p, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0 / al_m, 0.0]]
    )
    v = np.diag([0.0, p.gamma_tot / al_p**2, 0.0, p.gamma_tot / al_m**2])
    w = 0.5 * np.eye(2)
    m = np.zeros((4, 2))

    return StateSpaceModel(
        a_mat=_frozen(a),
        b_mat=_frozen(b),
        c_mat=_frozen(c),
        v_mat=_frozen(v),
        w_mat=_frozen(w),
        m_mat=_frozen(m),
        omega_plus=om_p,
        omega_minus=om_m,
        alpha_plus=al_p,
        alpha_minus=al_m,
        params=p,
        fb=fb,
    )


def symplectic_form(n_modes: int = 2) -> np.ndarray:
    """Block-diagonal symplectic form J for (x1, p1, ..., xn, pn) ordering."""
    j2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    out = np.zeros((2 * n_modes, 2 * n_modes))
    for k in range(n_modes):
        out[2 * k : 2 * k + 2, 2 * k : 2 * k + 2] = j2
    return out


def mode_transform(model: StateSpaceModel) -> np.ndarray:
    """Symplectic matrix S mapping bare (x1, p1, x2, p2) to normal quadratures.

    x+- = alpha_+- (x1 +- x2)/sqrt(2) and p+- = (p1 +- p2)/(sqrt(2) alpha_+-);
    S J S^T = J, so commutators are preserved for any coupling.
    """
    ap, am = model.alpha_plus, model.alpha_minus
    s = np.array(
        [
            [ap, 0.0, ap, 0.0],
            [0.0, 1.0 / ap, 0.0, 1.0 / ap],
            [am, 0.0, -am, 0.0],
            [0.0, 1.0 / am, 0.0, -1.0 / am],
        ]
    )
    return s / np.sqrt(2.0)


def _rank(mat: np.ndarray, rtol: float = RANK_RTOL) -> int:
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def observability_matrix(model: StateSpaceModel) -> np.ndarray:
    """Stacked observability matrix [C; CA; CA^2; CA^3] (8 x 4)."""
    a, c = model.a_mat, model.c_mat
    blocks = [c]
    for _ in range(3):
        blocks.append(blocks[-1] @ a)
    return np.vstack(blocks)


def is_observable(model: StateSpaceModel, rtol: float = RANK_RTOL) -> bool:
    """True when every state is visible in the measurement record (rank 4)."""
    return _rank(observability_matrix(model), rtol) == 4


def controllability_matrix(model: StateSpaceModel) -> np.ndarray:
    """Controllability matrix [B, AB, A^2 B, A^3 B] (4 x 4k)."""
    a, b = model.a_mat, model.b_mat
    blocks = [b]
    for _ in range(3):
        blocks.append(a @ blocks[-1])
    return np.hstack(blocks)


def is_controllable(model: StateSpaceModel, rtol: float = RANK_RTOL) -> bool:
    """True when the inputs can steer every state (rank 4)."""
    return _rank(controllability_matrix(model), rtol) == 4
