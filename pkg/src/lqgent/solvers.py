"""Steady-state matrix-equation solvers.

Continuous algebraic Riccati equations are solved by two independent
backends: an ordered real-Schur decomposition of the associated Hamiltonian
matrix (default) and a Newton-Kleinman iteration whose inner step is a dense
Lyapunov solve.  The fixed 4x4 problem size makes a direct Kronecker-product
Lyapunov solver exact to machine precision.  Closed-form per-mode conditional
covariances provide an independent cross-check of the filter Riccati
solution.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, InputError, SolverError
from .model import StateSpaceModel, is_observable, symplectic_form

#: Required relative residual of any accepted Riccati solution.
RICCATI_RTOL = 1e-10

#: Allowed relative asymmetry of a covariance matrix.
SYMMETRY_RTOL = 1e-12

#: Tolerance on the symplectic-eigenvalue physicality bound nu >= 1/2.
PHYSICALITY_TOL = 1e-9


class Basis(enum.Enum):
    """Quadrature basis a covariance matrix is expressed in."""

    NORMAL = "normal"
    BARE = "bare"


def symplectic_eigenvalues(mat: np.ndarray) -> np.ndarray:
    """Symplectic eigenvalues of a covariance matrix, ascending.

    Computed as the magnitudes of the eigenvalues of i J Sigma, which come in
    +-nu pairs; a state is physical when every nu >= 1/2.
    """
    mat = np.asarray(mat, dtype=float)
    n_modes = mat.shape[0] // 2
    j = symplectic_form(n_modes)
    ev = np.linalg.eigvals(1j * j @ mat)
    return np.sort(np.abs(ev))[::2]


@dataclass(frozen=True)
class CovMatrix:
    """Real symmetric covariance matrix tagged with its quadrature basis.

    Construction enforces symmetry (to `SYMMETRY_RTOL`, then symmetrizes
    exactly).  Physicality of quantum-state covariances is exposed as a
    query rather than enforced, because the excess-noise matrix shares this
    type and is merely positive semidefinite.
    """

    mat: np.ndarray
    basis: Basis = Basis.NORMAL

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in (2, 4):
            raise InputError(f"covariance must be 2x2 or 4x4, got shape {m.shape}")
        scale = max(np.linalg.norm(m), 1.0)
        if np.linalg.norm(m - m.T) > SYMMETRY_RTOL * scale:
            raise InputError("covariance matrix is not symmetric")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "mat", m)
        if not isinstance(self.basis, Basis):
            raise InputError(f"unknown basis tag {self.basis!r}")

    def symplectic_eigenvalues(self) -> np.ndarray:
        return symplectic_eigenvalues(self.mat)

    def min_symplectic_eigenvalue(self) -> float:
        return float(self.symplectic_eigenvalues()[0])

    def physicality_violation(self) -> float:
        """How far below the vacuum bound the smallest symplectic eigenvalue sits."""
        return max(0.0, 0.5 - self.min_symplectic_eigenvalue())

    def is_physical(self, tol: float = PHYSICALITY_TOL) -> bool:
        return self.physicality_violation() <= tol

    @property
    def block_plus(self) -> np.ndarray:
        """Upper-left 2x2 block (the + mode in normal ordering)."""
        return self.mat[:2, :2]

    @property
    def block_minus(self) -> np.ndarray:
        """Lower-right 2x2 block (the - mode in normal ordering)."""
        return self.mat[2:, 2:]


@dataclass(frozen=True)
class RiccatiSolution:
    """A stabilizing Riccati solution with its certification data."""

    value: Union[CovMatrix, np.ndarray]
    residual_norm: float
    iterations: int
    method: str

    @property
    def matrix(self) -> np.ndarray:
        return self.value.mat if isinstance(self.value, CovMatrix) else self.value


def _spectral_abscissa(a: np.ndarray) -> float:
    return float(np.max(np.linalg.eigvals(a).real))


def _sym(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + x.T)


def _care_residual(a, g, q, x) -> float:
    """Relative residual of A^T X + X A + Q - X G X = 0."""
    r = a.T @ x + x @ a + q - x @ g @ x
    return float(np.linalg.norm(r) / max(np.linalg.norm(x), 1.0))


def _care_schur(a: np.ndarray, g: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Stabilizing solution of A^T X + X A + Q - X G X = 0 via Hamiltonian Schur.

    Forms the 2n x 2n Hamiltonian [[A, -G], [-Q, -A^T]], orders a real Schur
    decomposition so the stable invariant subspace leads, and recovers X from
    the subspace basis.
    """
    n = a.shape[0]
    ham = np.block([[a, -g], [-q, -a.T]])
    ev = np.linalg.eigvals(ham)
    scale = max(np.max(np.abs(ev)), 1.0)
    if np.min(np.abs(ev.real)) < 1e-12 * scale:
        raise SolverError(
            "Hamiltonian matrix has eigenvalues on the imaginary axis; "
            "no stabilizing Riccati solution exists"
        )
    _, z, sdim = scipy.linalg.schur(ham, output="real", sort="lhp")
    if sdim != n:
        raise SolverError(
            f"stable invariant subspace has dimension {sdim}, expected {n}"
        )
    u1, u2 = z[:n, :n], z[n:, :n]
    try:
        x = scipy.linalg.solve(u1.T, u2.T).T
    except scipy.linalg.LinAlgError as exc:
        raise SolverError("singular subspace basis in Schur CARE solve") from exc
    return _sym(x)


def _lyapunov_kron(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve A X + X A^T + RHS = 0 by the vectorized dense linear system."""
    n = a.shape[0]
    eye = np.eye(n)
    coef = np.kron(eye, a) + np.kron(a, eye)
    x = np.linalg.solve(coef, -rhs.flatten(order="F")).reshape((n, n), order="F")
    return _sym(x)


def _care_newton(
    a: np.ndarray,
    g: np.ndarray,
    q: np.ndarray,
    r_mat: np.ndarray,
    b: np.ndarray,
    max_iter: int = 60,
) -> tuple[np.ndarray, int]:
    """Newton-Kleinman iteration for A^T X + X A + Q - X G X = 0.

    Seeded with the zero gain when A is comfortably stable, otherwise with
    the gain of the Schur solution (a marginally damped drift would make the
    first Lyapunov iterate astronomically large and wreck the contraction);
    each step solves one Lyapunov equation.
    """
    n = a.shape[0]
    scale = max(np.linalg.norm(a), 1.0)
    if _spectral_abscissa(a) < -1e-6 * scale:
        k = np.zeros((b.shape[1], n))
    else:
        x0 = _care_schur(a, g, q)
        k = scipy.linalg.solve(r_mat, b.T @ x0)

    x = None
    for it in range(1, max_iter + 1):
        a_cl = a - b @ k
        if _spectral_abscissa(a_cl) >= 0.0:
            raise SolverError("Newton-Kleinman iterate lost stabilizing property")
        x_new = _lyapunov_kron(a_cl.T, q + k.T @ r_mat @ k)
        if x is not None and np.linalg.norm(x_new - x) <= 1e-14 * max(
            np.linalg.norm(x_new), 1.0
        ):
            return x_new, it
        x = x_new
        k = scipy.linalg.solve(r_mat, b.T @ x)
    if _care_residual(a, g, q, x) > RICCATI_RTOL:
        raise ConvergenceError(
            f"Newton-Kleinman did not converge in {max_iter} iterations"
        )
    return x, max_iter


def solve_care(
    a: np.ndarray,
    b: np.ndarray,
    q: np.ndarray,
    r_mat: np.ndarray,
    method: str = "schur",
) -> tuple[np.ndarray, float, int]:
    """Stabilizing solution of A^T X + X A + Q - X B R^-1 B^T X = 0.

    Returns ``(X, residual, iterations)``; the residual is Frobenius-relative
    and certified below `RICCATI_RTOL`.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    q = np.asarray(q, float)
    r_mat = np.asarray(r_mat, float)
    g = b @ scipy.linalg.solve(r_mat, b.T)
    g = _sym(g)

    if method == "schur":
        x, iters = _care_schur(a, g, q), 1
    elif method == "newton":
        x, iters = _care_newton(a, g, q, r_mat, b)
    else:
        raise InputError(f"unknown CARE method {method!r}")

    res = _care_residual(a, g, q, x)
    if res > RICCATI_RTOL:
        # One Newton polish step from the current iterate usually recovers
        # full precision; fail loudly if it does not.
        k = scipy.linalg.solve(r_mat, b.T @ x)
        x = _lyapunov_kron((a - b @ k).T, q + k.T @ r_mat @ k)
        iters += 1
        res = _care_residual(a, g, q, x)
        if res > RICCATI_RTOL:
            raise ConvergenceError(
                f"CARE residual {res:.3e} above tolerance {RICCATI_RTOL:.1e}"
            )
    cl = a - g @ x
    if _spectral_abscissa(cl) >= 1e-12 * max(np.linalg.norm(cl), 1.0):
        raise SolverError("computed Riccati solution is not stabilizing")
    return x, res, iters


def _filter_block_diagonal(model: StateSpaceModel) -> bool:
    a, c, v, m = model.a_mat, model.c_mat, model.v_mat, model.m_mat
    return (
        np.all(a[:2, 2:] == 0)
        and np.all(a[2:, :2] == 0)
        and np.all(v[:2, 2:] == 0)
        and np.all(v[2:, :2] == 0)
        and np.all(c[0, 2:] == 0)
        and np.all(c[1, :2] == 0)
        and np.all(m == 0)
    )


def solve_filter_care(model: StateSpaceModel, method: str = "schur") -> RiccatiSolution:
    """Steady-state conditional covariance of the continuous measurement filter.

    Solves A S + S A^T + V - (S C^T + M) W^-1 (S C^T + M)^T = 0 for the
    stabilizing S.  This is the dual of the regulator equation under
    (A, B, Q, R) -> (A^T, C^T, V, W) once the cross-correlation M has been
    absorbed into a shifted drift and process noise.  The two normal modes
    never couple in the filter problem, so each 2x2 block is solved on its
    own and the cross-mode blocks of the result are exactly zero.
    """
    a, c = model.a_mat, model.c_mat
    v, w, m = model.v_mat, model.w_mat, model.m_mat
    if not is_observable(model):
        raise SolverError("filter Riccati equation requires an observable model")

    w_inv_c = scipy.linalg.solve(w, c)
    a_shift = a - m @ w_inv_c
    v_shift = _sym(v - m @ scipy.linalg.solve(w, m.T))

    x = np.zeros((4, 4))
    iters = 0
    if _filter_block_diagonal(model):
        for sl, row in ((slice(0, 2), 0), (slice(2, 4), 1)):
            xb, _, it = solve_care(
                a_shift[sl, sl].T,
                c[row : row + 1, sl].T,
                v_shift[sl, sl],
                w[row : row + 1, row : row + 1],
                method=method,
            )
            x[sl, sl] = xb
            iters += it
    else:
        x, _, iters = solve_care(a_shift.T, c.T, v_shift, w, method=method)

    gain = (x @ c.T + m) @ np.linalg.inv(w)
    res_mat = a @ x + x @ a.T + v - gain @ w @ gain.T
    res = float(np.linalg.norm(res_mat) / max(np.linalg.norm(x), 1.0))
    if res > RICCATI_RTOL:
        raise ConvergenceError(f"filter CARE residual {res:.3e} above tolerance")

    cov = CovMatrix(x, Basis.NORMAL)
    if cov.physicality_violation() > PHYSICALITY_TOL:
        # Large mechanical damping relative to the decoherence rates can push
        # the model outside its physical regime; report rather than reject.
        warnings.warn(
            "conditional covariance violates the vacuum bound by "
            f"{cov.physicality_violation():.3e}; the damping rate may be too "
            "large for the model to remain physical",
            stacklevel=2,
        )
    return RiccatiSolution(cov, res, iters, method)


def solve_control_care(
    model: StateSpaceModel,
    p_mat: np.ndarray,
    fb,
    method: str = "schur",
) -> RiccatiSolution:
    """Steady-state cost-to-go matrix of the linear quadratic regulator.

    Solves A^T X + X A + P - X B Q^-1 B^T X = 0 with the effort weight
    Q = q * I per input (rates in units of Omega_0), returning the
    stabilizing solution.
    """
    from .model import is_controllable  # local import avoids cycle at module load

    p_mat = np.asarray(p_mat, dtype=float)
    if np.linalg.norm(p_mat - p_mat.T) > SYMMETRY_RTOL * max(np.linalg.norm(p_mat), 1.0):
        raise InputError("cost matrix must be symmetric")
    if np.min(np.linalg.eigvalsh(_sym(p_mat))) < -1e-12 * max(np.linalg.norm(p_mat), 1.0):
        raise InputError("cost matrix must be positive semidefinite")
    if not is_controllable(model):
        raise SolverError("regulator Riccati equation requires a controllable model")

    q_eff = fb.effort * np.eye(model.n_inputs)
    x, res, iters = solve_care(model.a_mat, model.b_mat, p_mat, q_eff, method=method)
    return RiccatiSolution(x, res, iters, method)


def solve_lyapunov(a_cl: np.ndarray, n_mat: np.ndarray) -> CovMatrix:
    """Unique PSD solution of a_cl X + X a_cl^T + n_mat = 0 for Hurwitz a_cl.

    Solved directly through the 16x16 vectorized linear system, which is
    exact to machine precision at this size.
    """
    a_cl = np.asarray(a_cl, dtype=float)
    n_mat = np.asarray(n_mat, dtype=float)
    if _spectral_abscissa(a_cl) >= 0.0:
        raise SolverError("Lyapunov equation requires a Hurwitz closed-loop matrix")
    x = _lyapunov_kron(a_cl, n_mat)
    return CovMatrix(x, Basis.NORMAL)


def closed_form_conditional(mode: str, model: StateSpaceModel) -> CovMatrix:
    """Closed-form steady-state conditional covariance of one normal mode.

    Independent of the numeric Riccati path: the per-mode filter equation
    admits an explicit solution in terms of the measurement rate, the total
    decoherence rate and the mode frequency,

        S_xx = -a^2 gamma / (2 Gm)
               + (a / 2 Gm) sqrt(a^2 gamma^2 + 2 W (sqrt(2 Gm Gt + a^4 W^2) - a^2 W))
        S_xp = (Gm / a^2 W) S_xx^2
        S_pp = (sqrt(2 Gm Gt + a^4 W^2) / (a^2 W) - Gm gamma S_xx / (a^2 W^2)) S_xx

    with W the mode frequency, a its amplitude scale, Gm the measurement rate
    and Gt the total decoherence rate.
    """
    if mode not in ("+", "-"):
        raise InputError(f"mode must be '+' or '-', got {mode!r}")
    p = model.params
    if p.gamma_m <= 0:
        raise InputError("closed form requires a positive measurement rate")
    om = model.omega_plus if mode == "+" else model.omega_minus
    al = model.alpha_plus if mode == "+" else model.alpha_minus
    gm, gt, gamma = p.gamma_m, p.gamma_tot, p.gamma

    root = np.sqrt(2.0 * gm * gt + al**4 * om**2)
    sxx = -(al**2) * gamma / (2.0 * gm) + (al / (2.0 * gm)) * np.sqrt(
        al**2 * gamma**2 + 2.0 * om * (root - al**2 * om)
    )
    sxp = gm / (al**2 * om) * sxx**2
    spp = (root / (al**2 * om) - gm * gamma / (al**2 * om**2) * sxx) * sxx
    return CovMatrix(np.array([[sxx, sxp], [sxp, spp]]), Basis.NORMAL)
