"""Projected compressive sensing: outlier recovery from ``ỹ = Ψy``.

``Ψ = I − P̂P̂ᵀ`` is never formed; every application costs ``O(nr)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .errors import ConvergenceError, DimensionMismatchError, SingularSupportError
from .geometry import project_out

L1_TOL = 1e-4
CG_TOL = 1e-10
CG_ITERS = 10
SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class ProjectedObservation:
    """A projected observation ``ỹ = Ψy`` together with the basis defining ``Ψ``."""

    y_tilde: np.ndarray
    basis: np.ndarray

    @classmethod
    def from_observation(cls, y, basis):
        y = np.asarray(y, dtype=float)
        basis = np.asarray(basis, dtype=float)
        if basis.shape[0] != y.shape[0]:
            raise DimensionMismatchError(
                f"observation has length {y.shape[0]}, basis ambient dimension {basis.shape[0]}"
            )
        return cls(project_out(basis, y), basis)

    @property
    def n(self):
        return self.y_tilde.shape[0]

    def apply_psi(self, v):
        return project_out(self.basis, v)


@dataclass(frozen=True)
class SparseEstimate:
    x_cs: np.ndarray
    support: np.ndarray
    x_hat: np.ndarray
    l_hat: np.ndarray
    # diagnostics
    l1_iters: int = 0
    lam: float = field(default=0.0, compare=False)


def _soft(v, lam):
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


def _fista(P, y_tilde, lam, x, tol, budget):
    """FISTA with adaptive restart on ½‖ỹ − Ψx‖² + λ‖x‖₁ (unit step, ‖Ψ‖ = 1).

    Returns ``(x, iterations, converged)``.
    """
    has_basis = P.shape[1] > 0
    z = x.copy()
    tk = 1.0
    for it in range(1, budget + 1):
        # z − ∇f(z) = z − (Ψz − ỹ) = P̂P̂ᵀz + ỹ
        g = P @ (P.T @ z) + y_tilde if has_basis else y_tilde
        x_new = _soft(g, lam)
        d = x_new - x
        if np.dot(z - x_new, d) > 0.0:
            tk = 1.0
            z = x_new
        else:
            tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
            z = x_new + ((tk - 1.0) / tn) * d
            tk = tn
        x = x_new
        if np.linalg.norm(d) <= tol * max(np.linalg.norm(x), 1e-12):
            return x, it, True
    return x, budget, False


def _residual(obs, x):
    return float(np.linalg.norm(obs.y_tilde - obs.apply_psi(x)))


def solve_l1(obs, xi, tol=L1_TOL, max_iter=None):
    """Noisy ℓ1 minimization with diagnostics.

    Returns ``(x, lam, iterations)``; see :func:`l1_min_noisy`.
    """
    if xi < 0:
        raise ValueError("xi must be non-negative")
    if tol <= 0:
        raise ValueError("tol must be positive")
    y_tilde = obs.y_tilde
    n = obs.n
    P = obs.basis
    if max_iter is None:
        max_iter = int(10 * n * np.log(1.0 / tol)) + 1
    used = 0
    x0 = np.zeros(n)
    r0 = float(np.linalg.norm(y_tilde))
    if r0 <= xi:
        return x0, float(np.max(np.abs(y_tilde), initial=0.0)), 0
    inner = tol * 1e-2

    def run(lam, x, t):
        nonlocal used
        x, it, ok = _fista(P, y_tilde, lam, x, t, max_iter - used)
        used += it
        if not ok and used >= max_iter:
            raise ConvergenceError(
                f"l1 solver hit its iteration cap ({max_iter}) at lambda={lam:.3e}",
                last_iterate=x,
                residual=_residual(obs, x),
            )
        return x

    # x = 0 is optimal for every lambda >= ‖ỹ‖∞ and infeasible (r0 > xi).
    lam_hi, res_hi = float(np.max(np.abs(y_tilde))), r0
    # Coarse continuation down from ‖ỹ‖∞, then tighten the feasible end.
    lam, x = lam_hi, x0
    while True:
        lam *= 0.5
        x = run(lam, x, 1e-2)
        res = _residual(obs, x)
        if res <= xi:
            break
        lam_hi, res_hi = lam, res
    lam_lo = lam
    x_lo = run(lam_lo, x, inner)
    res_lo = _residual(obs, x_lo)
    while res_lo > xi:
        lam_hi, res_hi = lam_lo, res_lo
        lam_lo *= 0.5
        x_lo = run(lam_lo, x_lo, inner)
        res_lo = _residual(obs, x_lo)

    # Safeguarded secant on residual(lambda) until the residual sits on the
    # xi-ball boundary, keeping the feasible end.
    for _ in range(60):
        if xi - res_lo <= tol * xi or lam_hi / lam_lo - 1.0 <= 1e-10:
            break
        w = lam_hi - lam_lo
        m = lam_lo + (xi - res_lo) * w / (res_hi - res_lo)
        m = min(max(m, lam_lo + 0.05 * w), lam_hi - 0.05 * w)
        xm = run(m, x_lo, inner)
        rm = _residual(obs, xm)
        if rm <= xi:
            lam_lo, res_lo, x_lo = m, rm, xm
        else:
            lam_hi, res_hi = m, rm
    return x_lo, lam_lo, used


def l1_min_noisy(obs, xi, tol=L1_TOL, max_iter=None):
    """Solve ``min ‖x‖₁ s.t. ‖ỹ − Ψx‖ ≤ ξ``.

    The constrained problem is reached through its Lagrangian form
    ``½‖ỹ − Ψx‖² + λ‖x‖₁`` (accelerated proximal gradient), with ``λ``
    chosen by continuation and a safeguarded secant search so that the
    residual lands on the ξ-ball boundary within relative ``tol``.

    Raises
    ------
    ConvergenceError
        When the total number of shrinkage steps exceeds ``max_iter``
        (default ``10·n·log(1/tol)``).
    """
    x, _, _ = solve_l1(obs, xi, tol=tol, max_iter=max_iter)
    return x


def threshold_support(x_cs, omega_supp):
    """Indices with ``|x_i| > ω`` (strict), sorted ascending."""
    if omega_supp <= 0:
        raise ValueError("omega_supp must be positive")
    return np.flatnonzero(np.abs(np.asarray(x_cs)) > omega_supp)


def restricted_min_eigenvalue(basis, support):
    """Smallest eigenvalue of ``Ψ_TᵀΨ_T = I − P̂_T P̂_Tᵀ``."""
    support = np.asarray(support, dtype=np.intp)
    if support.size == 0 or basis.shape[1] == 0:
        return 1.0
    PT = basis[support]
    small = PT.T @ PT if PT.shape[0] >= PT.shape[1] else PT @ PT.T
    return float(1.0 - np.linalg.eigvalsh(small)[-1])


def ls_debias(obs, support, cg_tol=CG_TOL, cg_iters=CG_ITERS):
    """Least-squares refit of the outlier on a known support.

    Solves ``Ψ_TᵀΨ_T z = Ψ_Tᵀ ỹ`` by conjugate gradients and returns the
    ``n``-vector equal to ``z`` on ``T`` and zero elsewhere.

    Raises
    ------
    SingularSupportError
        If the smallest eigenvalue of ``Ψ_TᵀΨ_T`` is below 1e-12.
    """
    if cg_tol <= 0 or cg_iters < 1:
        raise ValueError("cg_tol and cg_iters must be positive")
    support = np.asarray(support, dtype=np.intp)
    n = obs.n
    x = np.zeros(n)
    if support.size == 0:
        return x
    lam_min = restricted_min_eigenvalue(obs.basis, support)
    if lam_min < SINGULAR_TOL:
        raise SingularSupportError(
            f"restricted normal matrix is singular on |T|={support.size} "
            f"(min eigenvalue {lam_min:.3e})",
            min_eigenvalue=lam_min,
        )
    b = obs.apply_psi(obs.y_tilde)[support]
    P = obs.basis
    if P.shape[1] == 0:
        x[support] = b
        return x
    PT = P[support]
    k = support.size
    A = LinearOperator((k, k), matvec=lambda z: z - PT @ (PT.T @ z), dtype=float)
    z, _ = cg(A, b, rtol=cg_tol, atol=0.0, maxiter=cg_iters)
    x[support] = z
    return x


def projected_cs_step(y_t, P_hat, xi, omega_supp, *, l1_tol=L1_TOL, cg_tol=CG_TOL,
                      cg_iters=CG_ITERS):
    """One projected-CS frame: project, ℓ1-recover, threshold, debias.

    ``l_hat = y_t − x_hat`` holds exactly.
    """
    y_t = np.asarray(y_t, dtype=float)
    obs = ProjectedObservation.from_observation(y_t, P_hat)
    x_cs, lam, iters = solve_l1(obs, xi, tol=l1_tol)
    support = threshold_support(x_cs, omega_supp)
    x_hat = ls_debias(obs, support, cg_tol=cg_tol, cg_iters=cg_iters)
    return SparseEstimate(x_cs, support, x_hat, y_t - x_hat, iters, lam)
