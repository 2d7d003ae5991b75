"""Dense linear-algebra primitives for subspaces.

A *basis* throughout this package is a plain ``(n, r)`` float array with
orthonormal columns. The empty basis ``(n, 0)`` is allowed and stands for the
zero subspace (its orthogonal projector is the identity). Signs of basis
columns carry no meaning; compare bases with :func:`sin_theta_max`.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateGapWarning, DegenerateSubspaceError, DimensionMismatchError

ORTHO_TOL = 1e-10
RANK_TOL = 1e-10
GAP_TOL = 1e-12
MAX_EXACT_SUPPORTS = 10**6


def as_basis(P, n=None):
    """Return ``P`` as a 2-D float array, checking orthonormality.

    A 1-D input is read as a single column.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.ndim != 2:
        raise DimensionMismatchError(f"basis must be 2-D, got shape {P.shape}")
    if n is not None and P.shape[0] != n:
        raise DimensionMismatchError(f"basis has ambient dimension {P.shape[0]}, expected {n}")
    if P.shape[1] > P.shape[0]:
        raise DegenerateSubspaceError(f"basis has more columns ({P.shape[1]}) than rows ({P.shape[0]})")
    if orthonormality_error(P) > ORTHO_TOL:
        raise DegenerateSubspaceError("basis columns are not orthonormal")
    return P


def orthonormality_error(P):
    """``max |PᵀP − I|`` entrywise."""
    P = np.asarray(P, dtype=float)
    if P.shape[1] == 0:
        return 0.0
    return float(np.max(np.abs(P.T @ P - np.eye(P.shape[1]))))


def empty_basis(n):
    return np.zeros((n, 0))


def orthonormalize(M):
    """Orthonormal basis for the column space of a full-column-rank matrix.

    Raises
    ------
    DegenerateSubspaceError
        If the numerical rank of ``M`` (relative tolerance 1e-10) is below its
        column count.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    n, k = M.shape
    if k > n:
        raise DegenerateSubspaceError(f"cannot fit {k} orthonormal columns in R^{n}")
    if k == 0:
        return np.zeros((n, 0))
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] <= RANK_TOL * sv[0]:
        raise DegenerateSubspaceError(
            f"matrix is numerically rank deficient (sigma_min/sigma_max = {sv[-1] / sv[0] if sv[0] else 0.0:.3e})"
        )
    Q, _ = np.linalg.qr(M)
    return Q


def orthonormalize_drop(M, tol=1e-8):
    """Like :func:`orthonormalize` but silently drops dependent directions.

    Returns the basis and the number of dropped columns.
    """
    M = np.asarray(M, dtype=float)
    n, k = M.shape
    if k == 0:
        return np.zeros((n, 0)), 0
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    keep = s > tol * max(s[0], 1.0) if s.size else np.zeros(0, bool)
    return U[:, keep], int(k - keep.sum())


def project_out(P, v):
    """Apply ``I − PPᵀ`` to a vector or to each column of a matrix without forming it."""
    if P.shape[1] == 0:
        return np.array(v, dtype=float, copy=True)
    return v - P @ (P.T @ v)


def sin_theta_max(P1, P2):
    """Sine of the largest principal angle, ``‖(I − P1P1ᵀ)P2‖₂``.

    For bases of equal dimension the value is symmetric in its arguments.
    """
    P1 = np.asarray(P1, dtype=float)
    P2 = np.asarray(P2, dtype=float)
    if P1.ndim == 1:
        P1 = P1[:, None]
    if P2.ndim == 1:
        P2 = P2[:, None]
    if P1.shape[0] != P2.shape[0]:
        raise DimensionMismatchError(
            f"ambient dimensions differ: {P1.shape[0]} vs {P2.shape[0]}"
        )
    if P2.shape[1] == 0:
        return 0.0
    R = project_out(P1, P2)
    return float(min(np.linalg.norm(R, 2), 1.0))


def top_r_left_singular_vectors(M, r):
    """Top-``r`` left singular vectors of ``M`` as a basis.

    The SVD is computed on whichever Gram side is smaller when ``M`` is very
    tall and wide at once; otherwise a thin dense SVD is used. A
    :class:`DegenerateGapWarning` is issued when ``σ_r − σ_{r+1}`` is below
    ``1e-12·σ_1``, in which case any basis of the tied block may come back.
    """
    M = np.asarray(M, dtype=float)
    n, m = M.shape
    if r < 0 or r > min(n, m):
        raise DimensionMismatchError(f"r={r} exceeds min(n, alpha)={min(n, m)}")
    if r == 0:
        return np.zeros((n, 0))
    if n > 2000 and m < n:
        # Eigendecomposition of the small Gram matrix; U = M V / sigma.
        w, V = np.linalg.eigh(M.T @ M)
        order = np.argsort(w)[::-1]
        w, V = np.clip(w[order], 0.0, None), V[:, order]
        s = np.sqrt(w)
        if s[r - 1] <= 0.0:
            raise DegenerateSubspaceError("matrix rank is below r")
        U = orthonormalize((M @ V[:, :r]) / s[:r])
    else:
        U, s, _ = np.linalg.svd(M, full_matrices=False)
        U = U[:, :r]
    nxt = s[r] if s.size > r else 0.0
    if s[0] > 0 and s[r - 1] - nxt < GAP_TOL * s[0]:
        warnings.warn(
            f"singular value gap at r={r} is degenerate ({s[r - 1]:.3e} vs {nxt:.3e})",
            DegenerateGapWarning,
            stacklevel=2,
        )
    return U


def coherence(P):
    """Incoherence parameter ``µ = (n/r)·max_i ‖row_i(P)‖²``."""
    P = np.asarray(P, dtype=float)
    n, r = P.shape
    if r == 0:
        return 0.0
    return float(n / r * np.max(np.sum(P * P, axis=1)))


def _ric_exact(P, s):
    n = P.shape[0]
    G = P @ P.T
    best = 0.0
    combos = itertools.combinations(range(n), s)
    chunk = 20000
    while True:
        idx = np.array(list(itertools.islice(combos, chunk)), dtype=np.intp)
        if idx.size == 0:
            break
        sub = G[idx[:, :, None], idx[:, None, :]]
        best = max(best, float(np.linalg.eigvalsh(sub)[:, -1].max()))
    return best


def ric_of_projector(P, s, mode="auto"):
    """Restricted isometry constant of ``Ψ = I − PPᵀ`` at sparsity ``s``.

    Uses ``δ_s(Ψ) = max_{|T|≤s} ‖I_Tᵀ P‖²``. ``mode="exact"`` enumerates every
    support of size ``s``; ``mode="bound"`` returns ``s·max_i ‖I_iᵀP‖²``, which
    never undercuts the exact value. ``"auto"`` picks exact when the number of
    supports is at most 10⁶. Values are clipped to ``[0, 1]``.
    """
    P = np.asarray(P, dtype=float)
    n, r = P.shape
    if not 1 <= s <= n:
        raise ValueError(f"support size s={s} must lie in [1, {n}]")
    if r == 0:
        return 0.0
    count = math.comb(n, s)
    if mode == "auto":
        mode = "exact" if count <= MAX_EXACT_SUPPORTS else "bound"
    if mode == "exact":
        if count > MAX_EXACT_SUPPORTS:
            raise ValueError(
                f"exact RIC needs C({n},{s}) = {count} supports (> 1e6); use mode='bound'"
            )
        return min(_ric_exact(P, s), 1.0)
    if mode == "bound":
        return float(min(s * np.max(np.sum(P * P, axis=1)), 1.0))
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class SubspaceDiag:
    coherence_mu: float
    ric_delta: float
    s: int
    ric_is_bound: bool


def subspace_diag(P, s, mode="auto"):
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    is_bound = mode == "bound" or (mode == "auto" and math.comb(n, s) > MAX_EXACT_SUPPORTS)
    return SubspaceDiag(coherence(P), ric_of_projector(P, s, mode), s, is_bound)


def random_skew(n, rng):
    """Skew-symmetric ``B̃ − B̃ᵀ`` with standard normal ``B̃``."""
    Bt = rng.standard_normal((n, n))
    return Bt - Bt.T


def rotate_subspace(P, B, gamma):
    """Rotate a basis by ``exp(γB)`` for a skew-symmetric generator ``B``."""
    P = np.asarray(P, dtype=float)
    B = np.asarray(B, dtype=float)
    n = P.shape[0]
    if B.shape != (n, n):
        raise DimensionMismatchError(f"generator has shape {B.shape}, expected {(n, n)}")
    scale = max(1.0, float(np.max(np.abs(B)))) if B.size else 1.0
    if np.max(np.abs(B + B.T), initial=0.0) > ORTHO_TOL * scale:
        raise ValueError("generator is not skew-symmetric")
    if gamma == 0:
        return P.copy()
    return orthonormalize(scipy.linalg.expm(gamma * B) @ P)
