"""Monte-Carlo experiment drivers: repeated tracking trials, grids and sweeps.

A trial is fully determined by ``(ExperimentConfig, seed)``. Trials never
share mutable state, so they can run in worker processes; results are
always merged in seed order, which keeps aggregates independent of the
execution order.
"""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import NorstError
from .fileio import write_columns, write_grid, write_metrics_csv
from .geometry import sin_theta_max
from .initialization import InitConfig, auto_floor, initialize
from .metrics import compute_metrics
from .missing import mc_run
from .scenario import ScenarioConfig, SupportModel, gen_scenario
from .tracker import TrackerParams, new_tracker, offline_smooth, run

log = logging.getLogger(__name__)

MODES = ("norst_auto", "norst_known", "norst_offline", "mc")


class ExperimentError(NorstError):
    """Every trial of an experiment failed."""


PROFILE_ALPHA = {"desk": 100, "paper": 300}


def _profile(base, alpha, kw):
    base.update(kw)
    if "support" not in kw:
        base["support"], train = moving_object_supports(base["n"], alpha)
        base.setdefault("train_support", train)
    return ScenarioConfig(**base)


def desk_profile(**kw):
    """``n=200, d=3000, r=10``, changes at 1000 and 2000; moving-object
    outliers (``s/n = 0.05``, ``b0 = 0.3`` over α = 100) unless ``support`` is given."""
    return _profile(dict(n=200, d=3000, r=10, f=50.0, t_train=100, change_times=(1000, 2000)),
                    PROFILE_ALPHA["desk"], kw)


def paper_profile(**kw):
    """``n=1000, d=12000, r=30``, changes at 3000 and 8000, sinθ per change 0.01;
    moving-object outliers over α = 300 unless ``support`` is given."""
    return _profile(dict(n=1000, d=12000, r=30, f=50.0, t_train=100, change_times=(3000, 8000),
                         change_sin_theta=0.01), PROFILE_ALPHA["paper"], kw)


def moving_object_supports(n, alpha, s_frac=0.05, b0=0.3, train_s_frac=0.01, train_b0=0.01):
    """(tracking, training) moving-object support models."""
    return (SupportModel.moving_object(max(1, round(s_frac * n)), b0, alpha),
            SupportModel.moving_object(max(1, round(train_s_frac * n)), train_b0, alpha))


def bernoulli_supports(rho=0.3, train_rho=0.01):
    return SupportModel.bernoulli(rho), SupportModel.bernoulli(train_rho)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to run a batch of trials.

    Tracker thresholds follow ``ω = x/2`` and ``ξ = x/15`` with ``x``
    equal to ``x_min_param`` (default: the scenario's ``x_min``). The
    initializer's floor is ``max(x/2, auto_floor)`` so it never drops
    below the scale of the clean entries.
    """

    scenario: ScenarioConfig = field(default_factory=desk_profile)
    mode: str = "norst_auto"
    trials: int = 1
    seed: int = 0
    alpha: int = 100
    K: int = 8
    lambda_thresh: float = 7.5e-4
    x_min_param: float | None = None
    init_mode: str = "altproj_lite"
    init_perturbation: float = 0.0
    init_iters: int | None = None
    missing_rho: float = 0.05
    out_dir: str | None = None
    parallel: int = 1

    def validate(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.parallel < 1:
            raise ValueError("parallel must be >= 1")
        if self.mode == "mc" and not 0 <= self.missing_rho < 1:
            raise ValueError("missing_rho must lie in [0, 1)")
        if self.init_mode == "oracle" and not 0 <= self.init_perturbation < 1:
            raise ValueError("oracle init needs a perturbation in [0, 1)")
        self.scenario.validate()
        self.tracker_params()

    @property
    def seeds(self):
        return list(range(self.seed, self.seed + self.trials))

    def tracker_params(self):
        x = self.x_min_param if self.x_min_param is not None else self.scenario.x_min
        return TrackerParams.from_xmin(r=self.scenario.r, K=self.K, alpha=self.alpha, x_min=x,
                                       lambda_thresh=self.lambda_thresh)

    def with_(self, **kw):
        return replace(self, **kw)

    def to_dict(self):
        out = asdict(self)
        out["scenario"]["change_times"] = list(self.scenario.change_times)
        return out


@dataclass(eq=False)
class TrialResult:
    seed: int
    report: object = None  # MetricsReport
    error: str | None = None
    epochs: list = field(default_factory=list)  # (j, t_hat, [sinθ per refinement], entry sinθ)
    init_sin_theta: float = float("nan")
    elapsed: float = 0.0

    @property
    def ok(self):
        return self.error is None


def _scenario_for(cfg):
    sc = cfg.scenario
    if cfg.mode == "mc":
        miss = SupportModel.bernoulli(cfg.missing_rho)
        sc = replace(sc, support=miss, train_support=None, t_train=0)
    return sc


def _epoch_errors(scenario, epochs, P0):
    """``(j, t̂_j, [sinθ after each refinement], sinθ of the estimate entering the epoch)``."""
    out = []
    entry = P0
    for ep in epochs:
        P_true = scenario.subspaces[min(ep.j, scenario.J)]
        out.append((ep.j, ep.t_hat, [sin_theta_max(B, P_true) for _, B in ep.refinements],
                    sin_theta_max(entry, P_true)))
        entry = ep.basis
    return out


def run_trial(cfg, seed, *, return_estimates=False):
    """One seeded trial. Algorithm errors are captured in ``TrialResult.error``."""
    scenario = gen_scenario(_scenario_for(cfg), seed)
    return track_scenario(cfg, scenario, seed, return_estimates=return_estimates)


def track_scenario(cfg, scenario, seed=0, *, return_estimates=False):
    """Run ``cfg.mode`` on a given scenario.

    In ``mc`` mode the scenario's support mask is the missing set. With
    ``return_estimates`` the result is ``(TrialResult, estimates, L_offline)``.
    """
    params = cfg.tracker_params()
    res = TrialResult(seed)
    ests = L_off = None
    t0 = time.perf_counter()
    try:
        if cfg.mode == "mc":
            P0 = initialize(InitConfig(r=scenario.config.r, mode="random_orthogonal"),
                            Y_train=scenario.Y, seed=seed)
            state = new_tracker(P0, params, t_start=0)
            clean = scenario.L if scenario.V is None else scenario.L + scenario.V
            Y_obs = np.where(scenario.support_mask, 0.0, clean)
            ests = mc_run(state, Y_obs, scenario.support_mask)
        else:
            t_train = scenario.config.t_train
            P0 = _initial_basis(cfg, scenario, seed)
            res.init_sin_theta = sin_theta_max(P0, scenario.subspaces[0])
            state = new_tracker(P0, params, t_start=t_train)
            known = scenario.change_times if cfg.mode == "norst_known" else None
            ests = run(state, scenario.Y, change_times=known)
            if cfg.mode == "norst_offline":
                L_off = offline_smooth(scenario.Y, [e.support for e in ests], state.epochs, params,
                                       t_train).L_hat
        elapsed = time.perf_counter() - t0
        dets = [t for t, _ in state.detections] if cfg.mode != "norst_known" else None
        res.report = compute_metrics(scenario, ests, detections=dets, elapsed=elapsed, L_offline=L_off)
        res.epochs = _epoch_errors(scenario, state.epochs, P0)
        res.elapsed = elapsed
    except (NorstError, np.linalg.LinAlgError) as e:
        res.error = f"{type(e).__name__}: {e}"
        res.elapsed = time.perf_counter() - t0
        log.warning("trial seed=%d failed: %s", seed, res.error)
    if return_estimates:
        return res, ests, L_off
    return res


def _initial_basis(cfg, scenario, seed):
    r = scenario.config.r
    t_train = scenario.config.t_train
    Y_train = scenario.Y[:, :t_train]
    x = cfg.x_min_param if cfg.x_min_param is not None else scenario.config.x_min
    floor = max(x / 2.0, auto_floor(Y_train)) if t_train else 0.0
    icfg = InitConfig(r=r, t_train=max(t_train, r), iters=cfg.init_iters, floor=floor,
                      mode=cfg.init_mode, perturbation=cfg.init_perturbation)
    return initialize(icfg, Y_train=Y_train, P_true=scenario.subspaces[0], seed=seed)


def worker_count(requested):
    """``requested`` capped by ``NORST_THREADS`` (when set) and the CPU count."""
    cap = os.environ.get("NORST_THREADS")
    n = requested
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValueError(f"NORST_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(n, os.cpu_count() or 1))


def _run_one(args):
    cfg, seed = args
    return run_trial(cfg, seed)


def run_trials(cfg):
    """All trials of ``cfg``, in seed order."""
    cfg.validate()
    jobs = [(cfg, s) for s in cfg.seeds]
    workers = worker_count(cfg.parallel)
    if workers == 1 or len(jobs) == 1:
        results = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_one, jobs))
    return sorted(results, key=lambda r: r.seed)


def _stats(values):
    v = np.asarray([x for x in values if x is not None and np.isfinite(x)], dtype=float)
    if v.size == 0:
        return None
    q = np.quantile(v, [0.1, 0.5, 0.9])
    return {"mean": float(v.mean()), "median": float(q[1]), "q10": float(q[0]), "q90": float(q[2]),
            "min": float(v.min()), "max": float(v.max())}


def aggregate(results):
    """Deterministic summary over trials (wall-clock figures excluded)."""
    ok = [r for r in results if r.ok]
    reps = [r.report for r in ok]
    return {
        "trials": len(results),
        "failed": [{"seed": r.seed, "error": r.error} for r in results if not r.ok],
        "rel_err_fro": _stats([p.rel_err_fro for p in reps]),
        "offline_rel_err_fro": _stats([p.offline_rel_err_fro for p in reps]),
        "final_sin_theta": _stats([float(p.sin_theta[-1]) for p in reps]),
        "exact_support_frac": _stats([p.exact_support_frac for p in reps]),
        "false_detections": int(sum(p.n_false_detections for p in reps)),
        "missed_changes": int(sum(p.n_missed for p in reps)),
        "per_trial": [{"seed": r.seed, "rel_err_fro": r.report.rel_err_fro,
                       "offline_rel_err_fro": r.report.offline_rel_err_fro,
                       "init_sin_theta": r.init_sin_theta,
                       "detections": r.report.summary()["detections"]} for r in ok],
    }


@dataclass(eq=False)
class ExperimentResult:
    config: ExperimentConfig
    results: list
    summary: dict

    @property
    def reports(self):
        return [r.report for r in self.results if r.ok]


def run_experiment(cfg):
    """Run every trial, aggregate, and write files when ``cfg.out_dir`` is set.

    Files: ``trial_<seed>.csv`` (per-frame metrics), ``summary.json``
    (deterministic aggregate), ``timing.json`` (wall-clock per trial).

    Raises
    ------
    ExperimentError
        When no trial succeeded.
    """
    results = run_trials(cfg)
    summary = aggregate(results)
    if not any(r.ok for r in results):
        raise ExperimentError(f"all {len(results)} trials failed; first error: {results[0].error}")
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            for r in results:
                if r.ok:
                    write_metrics_csv(out / f"trial_{r.seed}.csv", r.report.rows())
            (out / "summary.json").write_text(json.dumps({"config": cfg.to_dict(), **summary}, indent=2))
            timing = {str(r.seed): {"seconds": r.elapsed,
                                    "ms_per_frame": r.report.ms_per_frame if r.ok else None}
                      for r in results}
            (out / "timing.json").write_text(json.dumps(timing, indent=2))
        except OSError as e:
            raise OSError(f"writing results to {out}: {e}") from e
    return ExperimentResult(cfg, results, summary)


# ----------------------------------------------------------------------------
# Phase transition and magnitude sweep


def phase_cell_config(base, r, b0, train_rho=0.02, gamma_scale=10.0):
    """Bernoulli(``b0``) outliers after training, Bernoulli(``train_rho``) during it,
    subspace rotations ``gamma_scale`` times larger than in ``base``."""
    sc = base.scenario
    scen = replace(sc, r=r, support=SupportModel.bernoulli(b0),
                   train_support=SupportModel.bernoulli(train_rho),
                   gamma=sc.gamma * gamma_scale,
                   change_sin_theta=None if sc.change_sin_theta is None else sc.change_sin_theta * gamma_scale)
    return replace(base, scenario=scen, mode="norst_auto")


def run_phase_transition(r_grid, b0_grid, trials, success_threshold=0.5, base=None, out_path=None):
    """Empirical success probability ``P(‖L̂ − L‖_F/‖L‖_F < threshold)`` on an ``(r, b0)`` grid.

    A failed trial counts as a failure. Returns an ``(len(r_grid), len(b0_grid))`` array.
    """
    if not len(r_grid) or not len(b0_grid):
        raise ValueError("grids must be nonempty")
    base = base or ExperimentConfig()
    grid = np.zeros((len(r_grid), len(b0_grid)))
    for i, r in enumerate(r_grid):
        for j, b0 in enumerate(b0_grid):
            cfg = replace(phase_cell_config(base, int(r), float(b0)), trials=trials, out_dir=None)
            results = run_trials(cfg)
            wins = sum(1 for res in results if res.ok and res.report.rel_err_fro < success_threshold)
            grid[i, j] = wins / trials
            log.info("phase cell r=%s b0=%s: %.2f", r, b0, grid[i, j])
    if out_path:
        write_grid(out_path, list(r_grid), list(b0_grid), grid)
    return grid


def xmin_config(base, x_min):
    """Constant outlier magnitude ``x_min`` on ``base``'s scenario; thresholds follow it."""
    scen = replace(base.scenario, x_min=x_min, x_max=x_min, magnitude_mode="constant")
    return replace(base, scenario=scen, x_min_param=None)


def run_xmin_sweep(xmin_values, cfg, out_path=None):
    """Per-frame error curves, averaged over trials, for each outlier magnitude.

    Returns ``{x_min: {"t", "sin_theta", "rel_err_l", "final_sin_theta",
    "final_rel_err"}}``; the ``final_*`` values average the last ``alpha``
    frames.
    """
    curves = {}
    for x in xmin_values:
        results = run_trials(replace(xmin_config(cfg, float(x)), out_dir=None))
        reps = [r.report for r in results if r.ok]
        if not reps:
            raise ExperimentError(f"every trial failed at x_min={x}: {results[0].error}")
        sin = np.mean([p.sin_theta for p in reps], axis=0)
        rel = np.mean([p.rel_err_l for p in reps], axis=0)
        tail = slice(-cfg.alpha, None)
        curves[float(x)] = {"t": reps[0].t, "sin_theta": sin, "rel_err_l": rel,
                            "final_sin_theta": float(np.mean(sin[tail])),
                            "final_rel_err": float(np.mean(rel[tail]))}
    if out_path:
        keys = list(curves)
        t = curves[keys[0]]["t"]
        header = ["t"] + [f"sin_theta_x{k:g}" for k in keys] + [f"rel_err_x{k:g}" for k in keys]
        write_columns(out_path, header, [t] + [curves[k]["sin_theta"] for k in keys]
                      + [curves[k]["rel_err_l"] for k in keys])
    return curves
