"""Per-frame and aggregate accuracy metrics for a tracking run."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import sin_theta_max


@dataclass(frozen=True)
class DetectionEvent:
    """A detection matched against the true change times.

    ``t_true`` is None for a detection with no change to claim; ``t_hat`` is
    None for a change that was never detected. A detection that precedes
    every unclaimed change is flagged ``false_detect`` and its delay is
    measured to the next change (negative) when there is one.
    """

    t_true: int | None
    t_hat: int | None
    delay: int | None
    false_detect: bool = False

    @property
    def missed(self):
        return self.t_hat is None


def match_detections(change_times, detections):
    """Pair detection times with true change times.

    Each detection claims the latest still-unclaimed change at or before it;
    otherwise it is a false detection. Unclaimed changes come back as missed
    events. Events are ordered by time.
    """
    cts = sorted(int(t) for t in change_times)
    claimed = set()
    events = []
    for th in sorted(int(t) for t in detections):
        cands = [c for c in cts if c <= th and c not in claimed]
        # a change that a later change already superseded can't be claimed
        cands = [c for c in cands if not any(c < o <= th for o in cts)]
        if cands:
            c = cands[-1]
            claimed.add(c)
            events.append(DetectionEvent(c, th, th - c, False))
        else:
            nxt = [c for c in cts if c > th]
            events.append(DetectionEvent(nxt[0] if nxt else None, th,
                                         th - nxt[0] if nxt else None, True))
    for c in cts:
        if c not in claimed:
            events.append(DetectionEvent(c, None, None, False))
    events.sort(key=lambda e: (e.t_hat if e.t_hat is not None else e.t_true))
    return events


def support_precision_recall(est, true):
    """Precision ``|T̂∩T|/|T̂|`` and recall ``|T̂∩T|/|T|``; an empty set scores 1."""
    est = np.asarray(est, dtype=np.intp)
    true = np.asarray(true, dtype=np.intp)
    hit = np.intersect1d(est, true).size
    prec = hit / est.size if est.size else 1.0
    rec = hit / true.size if true.size else 1.0
    return float(prec), float(rec)


def rel_fro_error(L_hat, L):
    den = np.linalg.norm(L)
    return float(np.linalg.norm(np.asarray(L_hat) - L) / den) if den > 0 else float(np.linalg.norm(L_hat))


@dataclass
class MetricsReport:
    """Metrics for the tracked frames ``t0 .. t0 + m − 1`` of one run."""

    t: np.ndarray
    sin_theta: np.ndarray
    rel_err_l: np.ndarray
    support_precision: np.ndarray
    support_recall: np.ndarray
    detected_epoch: np.ndarray
    rel_err_fro: float
    detections: list = field(default_factory=list)
    ms_per_frame: float = 0.0
    offline_rel_err_fro: float | None = None
    exact_support_frac: float = float("nan")

    def rows(self):
        return {"t": self.t, "sin_theta": self.sin_theta, "rel_err_l": self.rel_err_l,
                "support_precision": self.support_precision, "support_recall": self.support_recall,
                "detected_epoch": self.detected_epoch}

    @property
    def n_false_detections(self):
        return sum(e.false_detect for e in self.detections)

    @property
    def n_missed(self):
        return sum(e.missed for e in self.detections)

    def summary(self):
        out = {
            "frames": int(self.t.size),
            "rel_err_fro": self.rel_err_fro,
            "offline_rel_err_fro": self.offline_rel_err_fro,
            "final_sin_theta": float(self.sin_theta[-1]) if self.sin_theta.size else float("nan"),
            "mean_sin_theta": float(np.mean(self.sin_theta)) if self.sin_theta.size else float("nan"),
            "exact_support_frac": self.exact_support_frac,
            "mean_support_precision": float(np.mean(self.support_precision)) if self.t.size else float("nan"),
            "mean_support_recall": float(np.mean(self.support_recall)) if self.t.size else float("nan"),
            "false_detections": self.n_false_detections,
            "missed_changes": self.n_missed,
            "ms_per_frame": self.ms_per_frame,
            "detections": [[e.t_true, e.t_hat, e.delay, e.false_detect] for e in self.detections],
        }
        return out


def compute_metrics(scenario, estimates, *, detections=None, elapsed=0.0, L_offline=None,
                    known_supports=True):
    """Score a list of :class:`FrameEstimate` against a scenario's ground truth.

    ``detections`` is a sequence of detection times (``None`` skips matching).
    ``L_offline`` is the smoothed low-rank matrix over the same frames, if any.
    ``detected_epoch`` counts the detections at or before each frame.
    """
    if not estimates:
        raise ValueError("no estimates to score")
    ts = np.array([e.t for e in estimates], dtype=np.int64)
    m = ts.size
    L = scenario.L[:, ts]
    L_hat = np.column_stack([e.l_hat for e in estimates])
    sin = np.empty(m)
    cache = {}
    for i, e in enumerate(estimates):
        P_true = scenario.subspace_at(int(e.t))
        key = (id(e.subspace), id(P_true))
        if key not in cache:
            cache[key] = sin_theta_max(e.subspace, P_true)
        sin[i] = cache[key]
    norms = np.linalg.norm(L, axis=0)
    errs = np.linalg.norm(L_hat - L, axis=0)
    rel = np.divide(errs, norms, out=errs.copy(), where=norms > 0)
    prec = np.empty(m)
    rec = np.empty(m)
    exact = 0
    for i, e in enumerate(estimates):
        true = scenario.support(int(e.t))
        prec[i], rec[i] = support_precision_recall(e.support, true)
        exact += np.array_equal(np.sort(e.support), true)
    det_times = sorted(int(t) for t in (detections or ()))
    epoch_idx = np.searchsorted(np.asarray(det_times, dtype=np.int64), ts, side="right")
    events = match_detections(scenario.change_times, det_times) if detections is not None else []
    return MetricsReport(
        t=ts, sin_theta=sin, rel_err_l=rel, support_precision=prec, support_recall=rec,
        detected_epoch=epoch_idx.astype(np.int64), rel_err_fro=rel_fro_error(L_hat, L),
        detections=events, ms_per_frame=1e3 * elapsed / m,
        offline_rel_err_fro=None if L_offline is None else rel_fro_error(L_offline, L),
        exact_support_frac=exact / m,
    )


def exact_support_after_burn_in(scenario, estimates, epoch_starts, burn_in):
    """Fraction of frames with ``T̂_t = T_t`` among frames at least ``burn_in``
    after the start of their epoch. ``epoch_starts`` are the epoch entry times."""
    starts = np.sort(np.asarray(epoch_starts, dtype=np.int64))
    hits = total = 0
    for e in estimates:
        k = np.searchsorted(starts, e.t, side="right") - 1
        if k < 0 or e.t < starts[k] + burn_in:
            continue
        total += 1
        hits += np.array_equal(np.sort(e.support), scenario.support(int(e.t)))
    return hits / total if total else float("nan"), total
