"""Synthetic ground truth: rotating subspaces, bounded coefficients, sparse outliers.

Every random draw comes from a named sub-stream of the scenario seed, so the
coefficients, supports, magnitudes, rotations and noise can each be
reproduced independently of the others.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import orthonormalize, random_skew, rotate_subspace, sin_theta_max


def stream(seed, name):
    """Independent generator for sub-stream ``name`` of ``seed``."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), key])))


# ----------------------------------------------------------------------------
# Coefficients


@dataclass(frozen=True)
class CoeffModel:
    """``(a_t)_i ~ unif[−q_i, q_i]`` with ``q_i = √f − √f(i−1)/(2r)``, ``q_r = 1``.

    The uniform law gives ``λ_i = q_i²/3`` and ``(a_t)_i² ≤ η λ_i`` with
    ``η = 3``.
    """

    r: int
    f: float
    eta: float = 3.0

    @property
    def q(self):
        i = np.arange(1, self.r + 1, dtype=float)
        q = math.sqrt(self.f) - math.sqrt(self.f) * (i - 1) / (2 * self.r)
        q[-1] = 1.0
        return q

    @property
    def lambdas(self):
        return self.q ** 2 / 3.0

    @property
    def lambda_plus(self):
        return float(self.lambdas.max())

    @property
    def lambda_minus(self):
        return float(self.lambdas.min())

    def sample(self, d, rng):
        q = self.q
        return rng.uniform(-1.0, 1.0, size=(self.r, d)) * q[:, None]


# ----------------------------------------------------------------------------
# Supports


@dataclass(frozen=True)
class SupportModel:
    """Outlier-support law.

    ``kind="bernoulli"``: each entry is an outlier independently with
    probability ``rho``.

    ``kind="moving_object"``: a contiguous block of ``s`` indices stays put for
    ``dwell = ⌈b0·alpha⌉`` frames and then jumps to the next of ``⌊n/s⌋``
    disjoint slots (cycling). Column fraction is ``s/n``; the row fraction in
    any ``alpha``-window is ``dwell/alpha`` as long as a slot is not revisited
    inside one window.
    """

    kind: str = "bernoulli"
    rho: float = 0.0
    s: int = 0
    b0: float = 0.0
    alpha: int = 1

    @classmethod
    def bernoulli(cls, rho):
        return cls(kind="bernoulli", rho=rho)

    @classmethod
    def moving_object(cls, s, b0, alpha):
        return cls(kind="moving_object", s=int(s), b0=float(b0), alpha=int(alpha))

    @property
    def dwell(self):
        return max(1, math.ceil(self.b0 * self.alpha - 1e-9))

    def validate(self, n):
        if self.kind == "bernoulli":
            if not 0.0 <= self.rho <= 1.0:
                raise ValueError(f"bernoulli rho={self.rho} outside [0, 1]")
        elif self.kind == "moving_object":
            if not 0 <= self.s <= n:
                raise ValueError(f"moving object size s={self.s} outside [0, n={n}]")
            if self.s > 0 and self.b0 <= 0:
                raise ValueError("moving object needs b0 > 0")
            if self.alpha < 1:
                raise ValueError("moving object needs alpha >= 1")
        else:
            raise ValueError(f"unknown support model {self.kind!r}")

    def sample(self, n, frames, rng, phase=0):
        """Boolean ``(n, len(frames))`` mask; ``phase`` offsets the object clock."""
        m = len(frames)
        mask = np.zeros((n, m), dtype=bool)
        if self.kind == "bernoulli":
            if self.rho > 0:
                mask = rng.random((n, m)) < self.rho
            return mask
        if self.s == 0:
            return mask
        slots = n // self.s
        for c in range(m):
            k = (c + phase) // self.dwell
            start = (k % slots) * self.s
            mask[start:start + self.s, c] = True
        return mask

    def row_budget(self):
        if self.kind == "moving_object":
            return self.dwell / self.alpha if self.s else 0.0
        return None

    def col_budget(self, n):
        if self.kind == "moving_object":
            return self.s / n
        return None


def gen_magnitudes(support, x_min, x_max, mode="uniform", rng=None):
    """Outlier values on a support.

    ``support`` is a boolean array of any shape; the result has the same shape
    and is zero off the support. ``"uniform"`` draws magnitudes from
    ``unif[x_min, x_max]`` with a random sign; ``"constant"`` sets every
    nonzero to ``x_min``.
    """
    if not 0 < x_min <= x_max:
        raise ValueError("need 0 < x_min <= x_max")
    support = np.asarray(support, dtype=bool)
    out = np.zeros(support.shape)
    k = int(support.sum())
    if k == 0:
        return out
    if mode == "constant":
        out[support] = x_min
    elif mode == "uniform":
        if rng is None:
            raise ValueError("uniform magnitudes need a generator")
        mags = rng.uniform(x_min, x_max, size=k)
        signs = rng.choice(np.array([-1.0, 1.0]), size=k)
        out[support] = mags * signs
    else:
        raise ValueError(f"unknown magnitude mode {mode!r}")
    return out


# ----------------------------------------------------------------------------
# Outlier-fraction statistics


def _as_mask(supports, n=None):
    if isinstance(supports, np.ndarray) and supports.dtype == bool and supports.ndim == 2:
        return supports
    supports = list(supports)
    if n is None:
        n = 1 + max((int(np.max(s)) for s in supports if len(s)), default=-1)
    mask = np.zeros((n, len(supports)), dtype=bool)
    for t, s in enumerate(supports):
        mask[np.asarray(s, dtype=np.intp), t] = True
    return mask


def max_outlier_frac_row(supports, alpha, n=None):
    """Largest per-row outlier fraction over all windows of ``alpha`` consecutive frames.

    ``supports`` is either an ``(n, d)`` boolean mask or a sequence of index
    arrays, one per frame.
    """
    mask = _as_mask(supports, n)
    d = mask.shape[1]
    if alpha < 1 or alpha > d:
        raise ValueError(f"alpha={alpha} must lie in [1, d={d}]")
    if mask.size == 0:
        return 0.0
    c = np.zeros((mask.shape[0], d + 1), dtype=np.int64)
    np.cumsum(mask, axis=1, out=c[:, 1:])
    window = c[:, alpha:] - c[:, :-alpha]
    return float(window.max() / alpha)


def max_outlier_frac_col(supports, n):
    """``max_t |T_t| / n``."""
    mask = _as_mask(supports, n)
    if mask.shape[1] == 0:
        return 0.0
    return float(mask.sum(axis=0).max() / n)


# ----------------------------------------------------------------------------
# Scenario


@dataclass(frozen=True)
class ScenarioConfig:
    n: int = 200
    d: int = 3000
    r: int = 10
    f: float = 50.0
    t_train: int = 100
    change_times: tuple = (1000, 2000)
    gamma: float = 0.001
    # When set, each rotation angle is rescaled so sinθ(P_j, P_{j−1}) hits this value.
    change_sin_theta: float | None = None
    support: SupportModel = field(default_factory=lambda: SupportModel.bernoulli(0.0))
    train_support: SupportModel | None = None
    x_min: float = 10.0
    x_max: float = 20.0
    magnitude_mode: str = "uniform"
    noise_var: float = 0.0

    def validate(self):
        if self.r > self.n:
            raise ValueError(f"r={self.r} exceeds n={self.n}")
        if not 0 <= self.t_train <= self.d:
            raise ValueError("t_train must lie in [0, d]")
        ct = list(self.change_times)
        if any(b <= a for a, b in zip(ct, ct[1:])):
            raise ValueError("change times must be strictly increasing")
        if ct and (ct[0] < 1 or ct[-1] >= self.d):
            raise ValueError("change times must lie inside [1, d)")
        if not 0 < self.x_min <= self.x_max:
            raise ValueError("need 0 < x_min <= x_max")
        if self.noise_var < 0:
            raise ValueError("noise_var must be non-negative")
        self.support.validate(self.n)
        if self.train_support is not None:
            self.train_support.validate(self.n)

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class Scenario:
    config: ScenarioConfig
    seed: int
    subspaces: list
    change_times: tuple
    coeffs: np.ndarray
    L: np.ndarray
    X: np.ndarray
    V: np.ndarray | None
    Y: np.ndarray
    support_mask: np.ndarray

    @property
    def n(self):
        return self.L.shape[0]

    @property
    def d(self):
        return self.L.shape[1]

    @property
    def J(self):
        return len(self.change_times)

    @property
    def t_train(self):
        return self.config.t_train

    @property
    def coeff_model(self):
        return CoeffModel(self.config.r, self.config.f)

    @property
    def epoch_of_frame(self):
        return np.searchsorted(np.asarray(self.change_times, dtype=np.int64), np.arange(self.d), side="right")

    def subspace_at(self, t):
        return self.subspaces[int(np.searchsorted(self.change_times, t, side="right"))]

    def support(self, t):
        return np.flatnonzero(self.support_mask[:, t])

    @property
    def supports(self):
        return [self.support(t) for t in range(self.d)]


def _calibrated_rotation(P, B, gamma, target):
    """Rotate ``P`` with ``exp(γB)``, rescaling γ so that sinθ lands on ``target``."""
    Q = rotate_subspace(P, B, gamma)
    if target is None:
        return Q, gamma
    for _ in range(6):
        s = sin_theta_max(P, Q)
        if s == 0.0 or abs(s - target) <= 1e-3 * target:
            break
        gamma *= target / s
        Q = rotate_subspace(P, B, gamma)
    return Q, gamma


def gen_scenario(config, seed):
    """Generate a scenario; identical ``(config, seed)`` gives identical arrays."""
    config.validate()
    n, d, r = config.n, config.d, config.r
    P0 = orthonormalize(stream(seed, "basis").standard_normal((n, r)))
    subspaces = [P0]
    rot = stream(seed, "rotation")
    for _ in config.change_times:
        B = random_skew(n, rot)
        Pj, _ = _calibrated_rotation(subspaces[-1], B, config.gamma, config.change_sin_theta)
        subspaces.append(Pj)

    A = CoeffModel(r, config.f).sample(d, stream(seed, "coeffs"))
    epoch = np.searchsorted(np.asarray(config.change_times, dtype=np.int64), np.arange(d), side="right")
    L = np.empty((n, d))
    for j, Pj in enumerate(subspaces):
        cols = epoch == j
        L[:, cols] = Pj @ A[:, cols]

    sup_rng = stream(seed, "supports")
    t_train = config.t_train
    train_model = config.train_support or config.support
    mask = np.zeros((n, d), dtype=bool)
    mask[:, :t_train] = train_model.sample(n, range(t_train), sup_rng)
    mask[:, t_train:] = config.support.sample(n, range(t_train, d), sup_rng)

    X = gen_magnitudes(mask, config.x_min, config.x_max, config.magnitude_mode, stream(seed, "magnitudes"))
    V = None
    Y = L + X
    if config.noise_var > 0:
        b = math.sqrt(3.0 * config.noise_var)
        V = stream(seed, "noise").uniform(-b, b, size=(n, d))
        Y = Y + V

    _check_budgets(config, mask)
    return Scenario(config, int(seed), subspaces, tuple(int(t) for t in config.change_times),
                    A, L, X, V, Y, mask)


def _check_budgets(config, mask):
    n = config.n
    for model, cols in ((config.train_support or config.support, slice(0, config.t_train)),
                        (config.support, slice(config.t_train, config.d))):
        part = mask[:, cols]
        if part.shape[1] == 0 or model.kind != "moving_object" or model.s == 0:
            continue
        col = max_outlier_frac_col(part, n)
        if abs(col - model.s / n) > 1e-12:
            raise AssertionError(f"moving-object column fraction {col} != s/n = {model.s / n}")
        a = min(model.alpha, part.shape[1])
        row = max_outlier_frac_row(part, a)
        budget = model.dwell / a
        if row > budget + 1e-12:
            raise AssertionError(f"moving-object row fraction {row:.4f} exceeds budget {budget:.4f}")
