"""Streaming robust subspace tracker with change detection and offline smoothing.

The tracker alternates between two phases. In *update* it refines the
subspace estimate K times, each from the last ``alpha`` low-rank estimates
(an r-SVD at ``t = t̂_j + kα − 1``). In *detect* it checks, every ``alpha``
frames, whether the recent estimates have energy outside the last finalized
subspace. Frames are indexed globally; the first tracked frame is
``t_start`` (normally the training length).
"""

from __future__ import annotations

import enum
import math
import warnings
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatchError
from .geometry import as_basis, orthonormalize_drop, project_out, top_r_left_singular_vectors
from .sparse import (CG_ITERS, CG_TOL, L1_TOL, ProjectedObservation, ls_debias,
                     projected_cs_step)

XMIN_FLOOR = 1e-6


class Phase(enum.Enum):
    DETECT = "detect"
    UPDATE = "update"


@dataclass(frozen=True)
class TrackerParams:
    r: int
    K: int
    alpha: int
    omega_supp: float
    xi: float
    lambda_thresh: float
    adaptive_xmin: bool = False
    adaptive_xi: bool = False
    l1_tol: float = L1_TOL
    cg_tol: float = CG_TOL
    cg_iters: int = CG_ITERS

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.alpha < self.r:
            raise ValueError(f"alpha={self.alpha} must be >= r={self.r}")
        for name in ("omega_supp", "xi", "lambda_thresh"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_xmin(cls, r, K, alpha, x_min, lambda_thresh, **kw):
        """Thresholds set from the outlier magnitude bound: ``ω = x_min/2``, ``ξ = x_min/15``."""
        return cls(r=r, K=K, alpha=alpha, omega_supp=x_min / 2.0, xi=x_min / 15.0,
                   lambda_thresh=lambda_thresh, **kw)

    def with_(self, **kw):
        return replace(self, **kw)


def suggest_params(n, r, f, lambda_plus, x_min, zeta, *, c_alpha=1.45, f_power=0.0,
                   c_K=10.0, decay=math.exp(-1.0)):
    """Parameter defaults from the model quantities.

    ``alpha = round(c_alpha · f^f_power · r · ln n)``,
    ``K = ⌈ln(c_K/ζ) / ln(1/decay)⌉``, ``ω = x_min/2``, ``ξ = x_min/15`` and
    ``λ_thresh = 2ζ²λ⁺``. With ``decay=e⁻¹`` the K rule is ``⌈ln(c_K/ζ)⌉``;
    ``decay=0.3`` gives the per-step contraction form.
    """
    for name, v in (("n", n), ("r", r), ("f", f), ("lambda_plus", lambda_plus), ("x_min", x_min)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    if not 0 < zeta <= 0.01:
        raise ValueError("zeta must lie in (0, 0.01]")
    alpha = max(r, int(round(c_alpha * f ** f_power * r * math.log(n))))
    K = max(1, math.ceil(math.log(c_K / zeta) / math.log(1.0 / decay)))
    return TrackerParams(r=r, K=K, alpha=alpha, omega_supp=x_min / 2.0, xi=x_min / 15.0,
                         lambda_thresh=2.0 * zeta ** 2 * lambda_plus)


def compute_detection_stat(window, P_ref):
    """``λ_max((1/α) Σ Φℓ̂ℓ̂ᵀΦ)`` with ``Φ = I − P_ref P_refᵀ``.

    ``window`` is an ``(n, α)`` array or a sequence of ``n``-vectors.
    """
    W = np.column_stack(list(window)) if not isinstance(window, np.ndarray) else window
    if W.ndim != 2 or W.shape[1] == 0:
        raise ValueError("detection window is empty")
    B = project_out(P_ref, W)
    return float(np.linalg.norm(B, 2) ** 2 / W.shape[1])


def estimate_lambda_plus(L_train):
    """Top eigenvalue of the sample covariance ``(1/t) L Lᵀ`` of a low-rank block."""
    L_train = np.asarray(L_train, dtype=float)
    return float(np.linalg.norm(L_train, 2) ** 2 / L_train.shape[1])


@dataclass(frozen=True, eq=False)
class FrameEstimate:
    t: int
    x_hat: np.ndarray
    l_hat: np.ndarray
    support: np.ndarray
    subspace: np.ndarray
    change_detected_at: int | None = None
    l1_iters: int = 0


@dataclass
class Epoch:
    """One subspace epoch: entered at ``t_hat`` and refined ``K`` times.

    ``refinements`` lists ``(t, P̂_{j,k})`` in order; ``basis`` is the last one
    (or the starting estimate if no refinement has happened yet).
    """

    j: int
    t_hat: int
    t_fin: int
    basis: np.ndarray
    refinements: list = field(default_factory=list)

    @property
    def complete(self):
        return self.refinements and self.refinements[-1][0] == self.t_fin


@dataclass(eq=False)
class TrackerState:
    params: TrackerParams
    n: int
    phase: Phase
    j: int
    k: int
    t_hat_j: int
    t_hat_fin: int
    P_current: np.ndarray
    P_prev: np.ndarray
    window: deque
    t: int
    t_start: int
    omega: float
    xi: float
    epochs: list = field(default_factory=list)
    detections: list = field(default_factory=list)
    l1_iters_total: int = 0
    keep_history: bool = False
    history_y: list = field(default_factory=list)
    history_support: list = field(default_factory=list)

    @property
    def window_matrix(self):
        return np.column_stack(self.window)


def new_tracker(P_init, params, *, t_start=0, initial_update=True, keep_history=False):
    """Fresh tracker state.

    With ``initial_update`` (the default) tracking begins in the update phase
    with ``t̂_0 = t_start``, so ``P_init`` is refined K times before the first
    detection check. Otherwise it begins in detect, with
    ``t̂_{0,fin} = t_start − 1``.
    """
    P = as_basis(P_init)
    if P.shape[1] != params.r:
        raise DimensionMismatchError(f"initial basis has r={P.shape[1]}, params have r={params.r}")
    n = P.shape[0]
    epoch0 = Epoch(0, t_start, t_start + params.K * params.alpha - 1, P)
    state = TrackerState(
        params=params, n=n,
        phase=Phase.UPDATE if initial_update else Phase.DETECT,
        j=0, k=0,
        t_hat_j=t_start,
        t_hat_fin=epoch0.t_fin if initial_update else t_start - 1,
        P_current=P, P_prev=P,
        window=deque(maxlen=params.alpha),
        t=t_start, t_start=t_start,
        omega=params.omega_supp, xi=params.xi,
        keep_history=keep_history,
    )
    if initial_update:
        state.epochs.append(epoch0)
    else:
        state.epochs.append(Epoch(0, t_start, t_start - 1, P))
    return state


def _begin_update(state, t):
    p = state.params
    if state.phase is Phase.UPDATE:
        # previous epoch was cut short; keep whatever it reached
        state.P_prev = state.P_current
    state.j += 1
    state.k = 0
    state.t_hat_j = t
    state.t_hat_fin = t + p.K * p.alpha - 1
    state.phase = Phase.UPDATE
    state.epochs.append(Epoch(state.j, t, state.t_hat_fin, state.P_current))


def _subspace_update(state, t, l_hat, *, detect, change_times=None):
    """Shared detect/update bookkeeping after ``ℓ̂_t`` is known. Returns detection time or None."""
    p = state.params
    state.window.append(l_hat)
    detected = None
    if change_times is not None:
        if t in change_times:
            _begin_update(state, t)
            detected = t
    elif detect and state.phase is Phase.DETECT:
        since = t - state.t_hat_fin
        if since > 0 and since % p.alpha == 0 and len(state.window) == p.alpha:
            stat = compute_detection_stat(state.window_matrix, state.P_prev)
            if stat >= p.lambda_thresh:
                _begin_update(state, t)
                state.detections.append((t, stat))
                detected = t
    if state.phase is Phase.UPDATE:
        u = t - state.t_hat_j + 1
        if u >= p.alpha and u % p.alpha == 0 and len(state.window) == p.alpha:
            P_new = top_r_left_singular_vectors(state.window_matrix, p.r)
            state.P_current = P_new
            state.k += 1
            ep = state.epochs[-1]
            ep.refinements.append((t, P_new))
            ep.basis = P_new
        if t == state.t_hat_fin:
            state.P_prev = state.P_current
            state.k = 0
            state.phase = Phase.DETECT
    return detected


def _adapt(state, est, y):
    p = state.params
    if p.adaptive_xmin and est.support.size:
        x_min = max(float(np.min(np.abs(est.x_hat[est.support]))), XMIN_FLOOR)
        state.omega = x_min / 2.0
        if not p.adaptive_xi:
            state.xi = x_min / 15.0
    if p.adaptive_xi:
        state.xi = max(float(np.linalg.norm(project_out(state.P_current, est.l_hat))), XMIN_FLOOR)


def _cs_frame(state, y):
    y = np.asarray(y, dtype=float)
    if y.shape != (state.n,):
        raise DimensionMismatchError(f"frame has shape {y.shape}, expected ({state.n},)")
    p = state.params
    est = projected_cs_step(y, state.P_current, state.xi, state.omega, l1_tol=p.l1_tol,
                            cg_tol=p.cg_tol, cg_iters=p.cg_iters)
    state.l1_iters_total += est.l1_iters
    return y, est


def _finish(state, t, y, est, detected):
    if state.keep_history:
        state.history_y.append(y)
        state.history_support.append(est.support)
    state.t = t + 1
    return FrameEstimate(t, est.x_hat, est.l_hat, est.support, state.P_current, detected,
                         est.l1_iters)


def process_frame(state, y_t):
    """Process one observation with automatic change detection."""
    t = state.t
    y, est = _cs_frame(state, y_t)
    detected = _subspace_update(state, t, est.l_hat, detect=True)
    _adapt(state, est, y)
    return _finish(state, t, y, est, detected)


def process_frame_known_changes(state, y_t, change_times):
    """Process one observation when the change times are given (no detection test)."""
    t = state.t
    y, est = _cs_frame(state, y_t)
    detected = _subspace_update(state, t, est.l_hat, detect=False, change_times=set(change_times))
    _adapt(state, est, y)
    return _finish(state, t, y, est, detected)


def run(state, Y, change_times=None, t_range=None):
    """Feed columns of ``Y`` (indexed by global frame) from ``state.t`` on.

    Returns the list of :class:`FrameEstimate`.
    """
    stop = Y.shape[1] if t_range is None else t_range
    out = []
    cts = None if change_times is None else set(change_times)
    while state.t < stop:
        t = state.t
        if cts is None:
            out.append(process_frame(state, Y[:, t]))
        else:
            out.append(process_frame_known_changes(state, Y[:, t], cts))
    return out


# ----------------------------------------------------------------------------
# Offline smoothing


class UnionRankWarning(UserWarning):
    """The union of two consecutive subspace estimates lost dependent directions."""


def union_basis(P_prev, P_next, tol=1e-10):
    """``[P_prev, orth((I − P_prev P_prevᵀ) P_next)]``, dropping dependent directions."""
    R = project_out(P_prev, P_next)
    extra, dropped = orthonormalize_drop(R, tol=tol)
    if dropped:
        warnings.warn(f"union basis dropped {dropped} dependent direction(s)", UnionRankWarning,
                      stacklevel=2)
    return np.hstack([P_prev, extra])


@dataclass(frozen=True, eq=False)
class OfflineResult:
    t0: int
    X_hat: np.ndarray
    L_hat: np.ndarray
    bases: list  # (first_t, last_t, basis) per interval


def offline_intervals(epochs, K, alpha, t_start, t_end):
    """Frame intervals and their smoothing bases.

    Frames ``[t̂_{j−1}+Kα, t̂_j+Kα−1]`` use the union of the finalized
    estimates of epochs ``j−1`` and ``j``. Frames before the end of the first
    epoch use its final estimate alone, as do frames after the last epoch ends.
    """
    out = []
    first_end = epochs[0].t_fin if epochs[0].refinements else t_start - 1
    if first_end >= t_start:
        out.append((t_start, min(first_end, t_end - 1), [epochs[0].basis]))
    for prev, nxt in zip(epochs, epochs[1:]):
        a = prev.t_hat + K * alpha if prev.refinements else prev.t_fin + 1
        a = max(a, t_start)
        b = min(nxt.t_hat + K * alpha - 1, t_end - 1)
        if b >= a:
            out.append((a, b, [prev.basis, nxt.basis]))
    last = epochs[-1]
    a = max(last.t_hat + K * alpha if last.refinements else last.t_fin + 1, t_start)
    if len(epochs) == 1:
        a = max(a, first_end + 1)
    if a <= t_end - 1:
        out.append((a, t_end - 1, [last.basis]))
    return out


def offline_smooth(Y, supports, epochs, params, t_start, t_end=None):
    """Re-solve every tracked frame against the widened union subspace.

    ``supports[i]`` is the online support estimate of frame ``t_start + i``.
    """
    Y = np.asarray(Y, dtype=float)
    t_end = Y.shape[1] if t_end is None else t_end
    n = Y.shape[0]
    m = t_end - t_start
    X_hat = np.zeros((n, m))
    bases = []
    for a, b, parts in offline_intervals(epochs, params.K, params.alpha, t_start, t_end):
        U = parts[0] if len(parts) == 1 else union_basis(parts[0], parts[1])
        bases.append((a, b, U))
        for t in range(a, b + 1):
            obs = ProjectedObservation.from_observation(Y[:, t], U)
            X_hat[:, t - t_start] = ls_debias(obs, supports[t - t_start], params.cg_tol, params.cg_iters)
    return OfflineResult(t_start, X_hat, Y[:, t_start:t_end] - X_hat, bases)


def smooth_state(state):
    """Offline pass over everything a history-keeping tracker has seen."""
    if not state.keep_history:
        raise ValueError("tracker kept no history; call offline_smooth with the observations")
    Y = np.zeros((state.n, state.t))
    if state.history_y:
        Y[:, state.t_start:] = np.column_stack(state.history_y)
    return offline_smooth(Y, state.history_support, state.epochs, state.params, state.t_start, state.t)
