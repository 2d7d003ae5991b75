"""Initial subspace estimates for the tracker."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSubspaceError
from .geometry import as_basis, orthonormalize, project_out


def default_iters(r):
    """Alternations at the threshold floor."""
    return math.ceil(math.log2(max(r, 1))) + 4


def default_t_train(r):
    return max(100, 4 * r)


@dataclass(frozen=True)
class InitConfig:
    """Settings for the batch initializer.

    ``mode`` is one of ``"altproj_lite"``, ``"oracle"`` or ``"random_orthogonal"``.
    ``floor`` is the smallest hard threshold used (``x_min/2`` when the outlier
    magnitude bound is known, 0 to estimate it from the data).
    """

    r: int
    t_train: int | None = None
    iters: int | None = None
    decay: float = 0.7
    floor: float = 0.0
    mode: str = "altproj_lite"
    perturbation: float = 0.0

    def __post_init__(self):
        if self.t_train is None:
            object.__setattr__(self, "t_train", default_t_train(self.r))
        if self.iters is None:
            object.__setattr__(self, "iters", default_iters(self.r))
        if self.t_train < self.r:
            raise ValueError(f"t_train={self.t_train} is smaller than r={self.r}")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")
        if self.floor < 0:
            raise ValueError("floor must be non-negative")


def auto_floor(Y, c=6.0):
    """Threshold floor from the bulk of the data: ``c·1.4826·median|Y|``.

    Outliers are sparse, so the median absolute entry reflects the clean
    low-rank part (plus noise).
    """
    return float(c * 1.4826 * np.median(np.abs(Y)))


def init_altproj_lite(Y_train, cfg):
    """Alternating hard-threshold / truncated-SVD initializer.

    Outliers are first removed by thresholding ``Y`` itself at the floor
    (``cfg.floor``, or :func:`auto_floor` when that is 0). No low-rank fit is
    made before this step: a rank-``r`` fit taken while large outliers are
    still present absorbs them and then hides them from every later
    threshold. Then ``cfg.iters`` rounds alternate ``Ŝ = HT(Y − L̂)`` and
    ``L̂ = SVD_r(Y − Ŝ)`` at the floor. ``cfg.decay`` is kept for
    configurations that spell out a decaying schedule; it does not change
    the result, since against ``L̂ = 0`` that schedule ends at the same
    support.

    Raises
    ------
    DegenerateSubspaceError
        If ``σ_r(Y − Ŝ)`` is numerically zero.
    """
    Y = np.asarray(Y_train, dtype=float)
    r = cfg.r
    n, m = Y.shape
    if m < r or n < r:
        raise DegenerateSubspaceError(f"training block {Y.shape} too small for r={r}")
    floor = cfg.floor if cfg.floor > 0 else auto_floor(Y)
    # Against L̂ = 0 the detected support only grows as the threshold decays,
    # so the whole coarse descent collapses to one threshold at the floor.
    S = np.where(np.abs(Y) > floor, Y, 0.0)
    for _ in range(cfg.iters):
        U, s, Vt = np.linalg.svd(Y - S, full_matrices=False)
        if s[0] == 0.0 or s[r - 1] <= 1e-12 * s[0]:
            raise DegenerateSubspaceError(
                f"rank collapse: sigma_r/sigma_1 = {s[r - 1] / s[0] if s[0] else 0.0:.3e}")
        L = (U[:, :r] * s[:r]) @ Vt[:r]
        R = Y - L
        S = np.where(np.abs(R) > floor, R, 0.0)
    U, s, _ = np.linalg.svd(Y - S, full_matrices=False)
    if s[0] == 0.0 or s[r - 1] <= 1e-12 * s[0]:
        raise DegenerateSubspaceError("rank collapse in final refit")
    return U[:, :r]


def init_oracle(P_true, target_sin_theta, seed):
    """Perturb a true basis so that ``sinθ_max`` to it equals ``target_sin_theta``.

    Each column is tilted by the same angle toward an orthonormal set of
    directions drawn at random from the orthogonal complement.
    """
    P = as_basis(P_true)
    if not 0.0 <= target_sin_theta < 1.0:
        raise ValueError("target must lie in [0, 1)")
    if target_sin_theta == 0.0:
        return P.copy()
    n, r = P.shape
    rng = np.random.default_rng(seed)
    m = min(r, n - r)
    if m == 0:
        raise DegenerateSubspaceError("subspace has no orthogonal complement to tilt into")
    # random rotation inside span(P) so the tilted directions are not the given columns
    R = orthonormalize(rng.standard_normal((r, r)))
    Pr = P @ R
    W = orthonormalize(project_out(P, rng.standard_normal((n, m))))
    s = target_sin_theta
    c = math.sqrt(1.0 - s * s)
    out = Pr.copy()
    out[:, :m] = c * Pr[:, :m] + s * W
    return out


def init_random_orthogonal(n, r, seed):
    """Haar-distributed basis: QR of a standard Gaussian matrix."""
    if r > n:
        raise DegenerateSubspaceError(f"r={r} exceeds n={n}")
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((n, r)))
    return Q * np.sign(np.diag(R))


def initialize(cfg, Y_train=None, P_true=None, seed=0):
    """Dispatch on ``cfg.mode``."""
    if cfg.mode == "altproj_lite":
        return init_altproj_lite(Y_train, cfg)
    if cfg.mode == "oracle":
        return init_oracle(P_true, cfg.perturbation, seed)
    if cfg.mode == "random_orthogonal":
        n = Y_train.shape[0] if Y_train is not None else P_true.shape[0]
        return init_random_orthogonal(n, cfg.r, seed)
    raise ValueError(f"unknown init mode {cfg.mode!r}")
