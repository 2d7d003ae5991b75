"""Tracking with known missing entries (dynamic matrix completion).

The missing set of each frame plays the role of a known outlier support, so
the ℓ1 step is skipped: the missing entries are filled by the least-squares
fit against the current subspace estimate, and the same detect/update
machinery runs on the filled vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .sparse import ProjectedObservation, SparseEstimate, ls_debias
from .tracker import _adapt, _finish, _subspace_update, new_tracker  # noqa: F401


@dataclass(frozen=True)
class MaskedFrame:
    """Observed vector with its (known) missing index set; missing entries hold 0."""

    y_obs: np.ndarray
    missing: np.ndarray

    @classmethod
    def from_full(cls, y, missing):
        y = np.array(y, dtype=float, copy=True)
        missing = np.asarray(missing, dtype=np.intp)
        y[missing] = 0.0
        return cls(y, missing)


def mc_process_frame(state, frame):
    """Fill the missing entries of one frame and update the subspace tracker.

    ``x̂`` is supported on the missing set, so ``ℓ̂`` equals ``y_obs`` on every
    observed entry and carries the imputed values on the missing ones.
    """
    y = np.asarray(frame.y_obs, dtype=float)
    if y.shape != (state.n,):
        raise DimensionMismatchError(f"frame has shape {y.shape}, expected ({state.n},)")
    t = state.t
    p = state.params
    missing = np.unique(np.asarray(frame.missing, dtype=np.intp))
    obs = ProjectedObservation.from_observation(y, state.P_current)
    x_hat = ls_debias(obs, missing, p.cg_tol, p.cg_iters)
    est = SparseEstimate(np.zeros_like(y), missing, x_hat, y - x_hat, 0, 0.0)
    detected = _subspace_update(state, t, est.l_hat, detect=True)
    return _finish(state, t, y, est, detected)


def mc_run(state, Y_obs, missing_mask):
    """Feed columns ``state.t ..`` of a masked matrix (``missing_mask`` true where missing)."""
    out = []
    while state.t < Y_obs.shape[1]:
        t = state.t
        out.append(mc_process_frame(state, MaskedFrame(Y_obs[:, t], np.flatnonzero(missing_mask[:, t]))))
    return out


@dataclass(frozen=True)
class GateResult:
    passed: bool
    value: float
    bound: float


def coherence_gate(P_init, s, level=0.01):
    """Check ``max_{|T|≤2s} ‖I_Tᵀ P‖² ≤ 2s·max_i ‖I_iᵀ P‖² < level``.

    The reported value is the row-norm bound ``2s·max_i ‖row_i‖²``, capped at
    1 (no restriction of an orthonormal basis has norm above 1). ``bound``
    is the incoherence scale ``2s·r̄/n`` with ``r̄ = max(r, log n)``, for
    reference.
    """
    P = np.asarray(P_init, dtype=float)
    n, r = P.shape
    if s <= 0:
        return GateResult(True, 0.0, 0.0)
    value = float(min(2 * s * np.max(np.sum(P * P, axis=1)), 1.0))
    rbar = max(r, math.log(n))
    return GateResult(value < level, value, 2 * s * rbar / n)
