"""On-disk formats: a binary matrix container and per-frame metric CSVs.

Binary layout (all little-endian)::

    b"NRST"            magic, 4 bytes
    uint32 version     currently 1
    int64 n, int64 d   matrix shape
    n*d float64        row-major payload

Boolean masks use the same container with 0.0/1.0 entries. A scenario is a
directory holding ``Y.nrst``, ``L.nrst``, ``X.nrst`` (and ``V.nrst`` when
noise is on), ``mask.nrst``, one ``P<j>.nrst`` per epoch and ``meta.json``.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import ParseError

MAGIC = b"NRST"
VERSION = 1
_HEADER = struct.Struct("<4sIqq")

METRIC_COLUMNS = ("t", "sin_theta", "rel_err_l", "support_precision", "support_recall",
                  "detected_epoch")


def write_matrix(path, M):
    M = np.asarray(M, dtype="<f8")
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {M.shape}")
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, M.shape[0], M.shape[1]))
            fh.write(np.ascontiguousarray(M).tobytes(order="C"))
    except OSError as e:
        raise OSError(f"{path}: {e.strerror or e}") from e


def read_matrix(path):
    """Read a matrix written by :func:`write_matrix`.

    Raises
    ------
    ParseError
        Bad magic, unknown version or a payload that does not match the
        header. For a short payload the message names the first incomplete
        row (1-based).
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise OSError(f"{path}: {e.strerror or e}") from e
    if len(raw) < _HEADER.size:
        raise ParseError(f"file too short for header ({len(raw)} bytes)", path=path)
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}", path=path)
    if version != VERSION:
        raise ParseError(f"unsupported version {version}", path=path)
    if n < 0 or d < 0:
        raise ParseError(f"negative dimensions n={n}, d={d}", path=path)
    payload = len(raw) - _HEADER.size
    want = 8 * n * d
    if payload < want:
        full_rows = payload // (8 * d) if d else n
        raise ParseError(f"truncated payload: {payload} of {want} bytes, row {full_rows + 1} of {n} incomplete",
                         line=full_rows + 1, path=path)
    if payload > want:
        raise ParseError(f"{payload - want} trailing bytes after {n}x{d} payload", path=path)
    return np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n, d).astype(float)


def write_mask(path, mask):
    write_matrix(path, np.asarray(mask, dtype=bool).astype(float))


def read_mask(path):
    M = read_matrix(path)
    if not np.all((M == 0.0) | (M == 1.0)):
        raise ParseError("mask holds values other than 0 and 1", path=path)
    return M.astype(bool)


# ----------------------------------------------------------------------------
# Scenarios


def save_scenario(directory, scenario):
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "Y.nrst", scenario.Y)
    write_matrix(out / "L.nrst", scenario.L)
    write_matrix(out / "X.nrst", scenario.X)
    if scenario.V is not None:
        write_matrix(out / "V.nrst", scenario.V)
    write_mask(out / "mask.nrst", scenario.support_mask)
    write_matrix(out / "coeffs.nrst", scenario.coeffs)
    for j, P in enumerate(scenario.subspaces):
        write_matrix(out / f"P{j}.nrst", P)
    meta = {"seed": scenario.seed, "change_times": list(scenario.change_times),
            "J": scenario.J, "config": _config_to_dict(scenario.config)}
    (out / "meta.json").write_text(json.dumps(meta, indent=2))
    return out


def load_scenario(directory):
    from .scenario import Scenario

    d = Path(directory)
    meta_path = d / "meta.json"
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, line=e.lineno, path=meta_path) from e
    except OSError as e:
        raise OSError(f"{meta_path}: {e.strerror or e}") from e
    cfg = _config_from_dict(meta["config"])
    V = read_matrix(d / "V.nrst") if (d / "V.nrst").exists() else None
    subspaces = [read_matrix(d / f"P{j}.nrst") for j in range(meta["J"] + 1)]
    return Scenario(cfg, int(meta["seed"]), subspaces, tuple(meta["change_times"]),
                    read_matrix(d / "coeffs.nrst"), read_matrix(d / "L.nrst"),
                    read_matrix(d / "X.nrst"), V, read_matrix(d / "Y.nrst"),
                    read_mask(d / "mask.nrst"))


def _config_to_dict(cfg):
    out = asdict(cfg)
    out["change_times"] = list(cfg.change_times)
    return out


def _config_from_dict(raw):
    from .scenario import ScenarioConfig, SupportModel

    raw = dict(raw)
    raw["change_times"] = tuple(raw["change_times"])
    raw["support"] = SupportModel(**raw["support"])
    if raw.get("train_support") is not None:
        raw["train_support"] = SupportModel(**raw["train_support"])
    return ScenarioConfig(**raw)


# ----------------------------------------------------------------------------
# Metric CSVs


def write_metrics_csv(path, rows):
    """``rows`` maps each column name in :data:`METRIC_COLUMNS` to a sequence."""
    cols = [np.asarray(rows[c]) for c in METRIC_COLUMNS]
    m = len(cols[0])
    if any(len(c) != m for c in cols):
        raise ValueError("metric columns differ in length")
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for i in range(m):
            w.writerow([int(cols[0][i]), repr(float(cols[1][i])), repr(float(cols[2][i])),
                        repr(float(cols[3][i])), repr(float(cols[4][i])), int(cols[5][i])])


def read_metrics_csv(path):
    """Parse and schema-check a per-frame metrics CSV.

    Returns a dict of column arrays. Header mismatches, ragged rows and
    non-numeric cells raise :class:`ParseError` with the 1-based line number.
    """
    path = Path(path)
    cols = {c: [] for c in METRIC_COLUMNS}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file", line=1, path=path)
        if tuple(header) != METRIC_COLUMNS:
            raise ParseError(f"header {header} does not match {list(METRIC_COLUMNS)}", line=1, path=path)
        for row in reader:
            line = reader.line_num
            if len(row) != len(METRIC_COLUMNS):
                raise ParseError(f"expected {len(METRIC_COLUMNS)} fields, got {len(row)}", line=line, path=path)
            try:
                cols["t"].append(int(row[0]))
                for c, v in zip(METRIC_COLUMNS[1:5], row[1:5]):
                    cols[c].append(float(v))
                cols["detected_epoch"].append(int(row[5]))
            except ValueError as e:
                raise ParseError(str(e), line=line, path=path) from e
    return {c: np.asarray(v, dtype=int if c in ("t", "detected_epoch") else float)
            for c, v in cols.items()}


def write_grid(path, row_values, col_values, grid, row_name="r", col_name="b0", value_name="success"):
    """Gnuplot-ready grid: one ``row col value`` line per cell, blank line between rows."""
    grid = np.asarray(grid, dtype=float)
    with open(path, "w") as fh:
        fh.write(f"# {row_name} {col_name} {value_name}\n")
        for i, rv in enumerate(row_values):
            for j, cv in enumerate(col_values):
                fh.write(f"{rv} {cv} {float(grid[i, j])!r}\n")
            fh.write("\n")


def read_grid(path):
    """Inverse of :func:`write_grid`; returns ``(row_values, col_values, grid)``."""
    rows, cols, vals = [], [], {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(f"expected 3 fields, got {len(parts)}", line=lineno, path=path)
            try:
                a, b, v = float(parts[0]), float(parts[1]), float(parts[2])
            except ValueError as e:
                raise ParseError(str(e), line=lineno, path=path) from e
            if a not in rows:
                rows.append(a)
            if b not in cols:
                cols.append(b)
            vals[(a, b)] = v
    grid = np.array([[vals.get((a, b), np.nan) for b in cols] for a in rows])
    return rows, cols, grid


def write_columns(path, header, columns):
    """Whitespace-separated numeric columns with a ``#`` header line."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, header=" ".join(header), comments="# ")


# ----------------------------------------------------------------------------
# Tracker estimates


def save_estimates(directory, estimates, L_offline=None, detections=None):
    """Write ``L_hat``, ``X_hat``, the support mask, frame indices and the
    distinct subspace estimates (``B<k>.nrst`` plus a per-frame index).

    ``detections`` (automatic change-detection times) go to
    ``detections.nrst`` when given."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    n = estimates[0].l_hat.shape[0]
    m = len(estimates)
    write_matrix(out / "t.nrst", np.array([[e.t for e in estimates]], dtype=float))
    write_matrix(out / "L_hat.nrst", np.column_stack([e.l_hat for e in estimates]))
    write_matrix(out / "X_hat.nrst", np.column_stack([e.x_hat for e in estimates]))
    mask = np.zeros((n, m), dtype=bool)
    for i, e in enumerate(estimates):
        mask[e.support, i] = True
    write_mask(out / "support.nrst", mask)
    ids, index = {}, np.empty(m)
    for i, e in enumerate(estimates):
        key = id(e.subspace)
        if key not in ids:
            ids[key] = len(ids)
            write_matrix(out / f"B{ids[key]}.nrst", e.subspace)
        index[i] = ids[key]
    write_matrix(out / "basis_index.nrst", index[None, :])
    if L_offline is not None:
        write_matrix(out / "L_offline.nrst", L_offline)
    if detections is not None:
        write_matrix(out / "detections.nrst", np.asarray(detections, dtype=float).reshape(1, -1))
    return out


def load_estimates(directory):
    """Rebuild the ``FrameEstimate`` list written by :func:`save_estimates`.

    Returns ``(estimates, L_offline or None, detections or None)``.
    """
    from .tracker import FrameEstimate

    d = Path(directory)
    t = read_matrix(d / "t.nrst")[0].astype(np.int64)
    L_hat = read_matrix(d / "L_hat.nrst")
    X_hat = read_matrix(d / "X_hat.nrst")
    mask = read_mask(d / "support.nrst")
    index = read_matrix(d / "basis_index.nrst")[0].astype(np.int64)
    m = t.size
    for name, M in (("L_hat", L_hat), ("X_hat", X_hat), ("support", mask)):
        if M.shape[1] != m:
            raise ParseError(f"{name} has {M.shape[1]} frames, t has {m}", path=d / f"{name}.nrst")
    if index.size != m:
        raise ParseError(f"basis_index has {index.size} frames, t has {m}", path=d / "basis_index.nrst")
    bases = {k: read_matrix(d / f"B{k}.nrst") for k in np.unique(index)}
    ests = [FrameEstimate(int(t[i]), X_hat[:, i], L_hat[:, i], np.flatnonzero(mask[:, i]), bases[index[i]])
            for i in range(m)]
    off = read_matrix(d / "L_offline.nrst") if (d / "L_offline.nrst").exists() else None
    dets = None
    if (d / "detections.nrst").exists():
        dets = [int(v) for v in read_matrix(d / "detections.nrst").ravel()]
    return ests, off, dets
