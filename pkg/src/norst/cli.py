"""Command-line entry point: ``norst <subcommand> [options]``.

Exit codes: 0 success, 2 usage or configuration error, 3 malformed input
file, 4 I/O failure, 5 algorithm failure (every trial failed), 1 anything
else.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import load_config
from .errors import NorstError, ParseError
from .experiments import ExperimentError, run_experiment, run_phase_transition, run_xmin_sweep, track_scenario
from .fileio import load_estimates, load_scenario, save_estimates, save_scenario, write_metrics_csv
from .metrics import compute_metrics
from .scenario import gen_scenario

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_PARSE, EXIT_IO, EXIT_ALGO = 0, 1, 2, 3, 4, 5

log = logging.getLogger("norst")


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _common(p):
    g = p.add_argument_group("experiment")
    g.add_argument("--config", type=Path, help="config file (key = value with sections)")
    g.add_argument("--profile", choices=("desk", "paper"), help="scenario size preset (default desk)")
    g.add_argument("--mode", choices=("norst_auto", "norst_known", "norst_offline", "mc"))
    g.add_argument("--seed", type=int)
    g.add_argument("--trials", type=int)
    g.add_argument("--out-dir", type=Path)
    g.add_argument("--parallel", type=int, help="worker processes (capped by NORST_THREADS)")
    g.add_argument("--n", type=int)
    g.add_argument("--d", type=int)
    g.add_argument("--r", type=int)
    g.add_argument("--f", type=float)
    g.add_argument("--alpha", type=int)
    g.add_argument("--K", type=int)
    g.add_argument("--xmin", type=float)
    g.add_argument("--support-model", choices=("moving_object", "bernoulli", "none"))
    g.add_argument("--rho", type=float)
    g.add_argument("--b0", type=float)
    g.add_argument("-v", "--verbose", action="store_true")


def _overrides(a, mode=None):
    return {
        "experiment": {"mode": mode or a.mode, "seed": a.seed, "trials": a.trials,
                       "out_dir": str(a.out_dir) if a.out_dir else None, "parallel": a.parallel,
                       "alpha": a.alpha, "K": a.K},
        "scenario": {"profile": a.profile, "n": a.n, "d": a.d, "r": a.r, "f": a.f, "x_min": a.xmin},
        "support": {"model": a.support_model, "rho": a.rho, "b0": a.b0},
    }


def build_parser():
    p = argparse.ArgumentParser(prog="norst", description="Robust subspace tracking experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a scenario and save it")
    _common(s)

    s = sub.add_parser("track", help="run the tracker on a saved or freshly generated scenario")
    _common(s)
    s.add_argument("--scenario", type=Path, help="directory written by 'simulate'")

    s = sub.add_parser("mc", help="tracking with known missing entries")
    _common(s)
    s.add_argument("--missing-rho", type=float, help="Bernoulli missing fraction (default 0.05)")

    s = sub.add_parser("phase", help="success probability over an (r, b0) grid")
    _common(s)
    s.add_argument("--r-grid", type=_ints, default=[2, 5, 10])
    s.add_argument("--b0-grid", type=_floats, default=[0.0, 0.1, 0.2, 0.3, 0.4])
    s.add_argument("--threshold", type=float, default=0.5)

    s = sub.add_parser("xmin", help="constant-magnitude outlier sweep")
    _common(s)
    s.add_argument("--values", type=_floats, default=[0.5, 5.0, 10.0])

    s = sub.add_parser("report", help="recompute metrics from saved estimates")
    s.add_argument("--scenario", type=Path, required=True)
    s.add_argument("--estimates", type=Path, required=True)
    s.add_argument("--out-dir", type=Path)
    s.add_argument("-v", "--verbose", action="store_true")
    return p


def _print(obj):
    print(json.dumps(obj, indent=2, default=float))


def cmd_simulate(a):
    cfg = load_config(a.config, _overrides(a))
    out = Path(cfg.out_dir or "scenario")
    sc = gen_scenario(cfg.scenario, cfg.seed)
    save_scenario(out, sc)
    _print({"scenario": str(out), "n": sc.n, "d": sc.d, "change_times": list(sc.change_times)})


def cmd_track(a, mode=None, extra=None):
    ov = _overrides(a, mode)
    if extra:
        ov["experiment"].update(extra)
    cfg = load_config(a.config, ov)
    if getattr(a, "scenario", None):
        sc = load_scenario(a.scenario)
        res, ests, L_off = track_scenario(cfg, sc, cfg.seed, return_estimates=True)
        if not res.ok:
            raise ExperimentError(res.error)
        summary = res.report.summary()
        if cfg.out_dir:
            out = Path(cfg.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            write_metrics_csv(out / "metrics.csv", res.report.rows())
            dets = None if cfg.mode == "norst_known" else \
                [e.t_hat for e in res.report.detections if e.t_hat is not None]
            save_estimates(out / "estimates", ests, L_off, dets)
            (out / "summary.json").write_text(json.dumps(summary, indent=2, default=float))
        _print(summary)
        return
    result = run_experiment(cfg)
    summary = dict(result.summary)
    summary.pop("per_trial")
    _print(summary)


def cmd_mc(a):
    extra = {"missing_rho": a.missing_rho} if a.missing_rho is not None else None
    cmd_track(a, mode="mc", extra=extra)


def cmd_phase(a):
    cfg = load_config(a.config, _overrides(a))
    out = Path(cfg.out_dir) if cfg.out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    grid = run_phase_transition(a.r_grid, a.b0_grid, cfg.trials, a.threshold,
                                base=replace(cfg, out_dir=None),
                                out_path=out / "phase.dat" if out else None)
    _print({"r": a.r_grid, "b0": a.b0_grid, "success": grid.tolist()})


def cmd_xmin(a):
    cfg = load_config(a.config, _overrides(a))
    out = Path(cfg.out_dir) if cfg.out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    curves = run_xmin_sweep(a.values, replace(cfg, out_dir=None),
                            out_path=out / "xmin.dat" if out else None)
    _print({str(k): {"final_sin_theta": v["final_sin_theta"], "final_rel_err": v["final_rel_err"]}
            for k, v in curves.items()})


def cmd_report(a):
    sc = load_scenario(a.scenario)
    ests, L_off, dets = load_estimates(a.estimates)
    rep = compute_metrics(sc, ests, detections=dets, L_offline=L_off)
    if a.out_dir:
        a.out_dir.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(a.out_dir / "metrics.csv", rep.rows())
    s = rep.summary()
    s.pop("ms_per_frame")
    _print(s)


COMMANDS = {"simulate": cmd_simulate, "track": cmd_track, "mc": cmd_mc, "phase": cmd_phase,
            "xmin": cmd_xmin, "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[a.command](a)
    except ParseError as e:
        print(f"norst: parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except NorstError as e:
        print(f"norst: algorithm failure: {e}", file=sys.stderr)
        return EXIT_ALGO
    except OSError as e:
        print(f"norst: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"norst: configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001  (category 1: unexpected)
        log.debug("unexpected failure", exc_info=True)
        print(f"norst: error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
