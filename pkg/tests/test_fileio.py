import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from norst.errors import ParseError
from norst.fileio import (METRIC_COLUMNS, load_estimates, load_scenario, read_grid, read_mask, read_matrix,
                          read_metrics_csv, save_estimates, save_scenario, write_columns, write_grid,
                          write_mask, write_matrix, write_metrics_csv)
from norst.scenario import ScenarioConfig, SupportModel, gen_scenario
from norst.tracker import FrameEstimate, TrackerParams, new_tracker, run


def test_header_layout(tmp_path):
    p = tmp_path / "m.nrst"
    write_matrix(p, np.arange(6.0).reshape(2, 3))
    raw = p.read_bytes()
    assert raw[:4] == b"NRST"
    assert struct.unpack("<Iqq", raw[4:24]) == (1, 2, 3)
    assert np.frombuffer(raw[24:], "<f8").tolist() == [0, 1, 2, 3, 4, 5]


@settings(max_examples=30)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, min_side=0, max_side=6)))
def test_matrix_round_trip(tmp_path_factory, M):
    p = tmp_path_factory.mktemp("rt") / "m.nrst"
    write_matrix(p, M)
    out = read_matrix(p)
    assert out.shape == M.shape
    assert np.array_equal(out, M, equal_nan=True)


def test_vector_written_as_column(tmp_path):
    write_matrix(tmp_path / "v.nrst", [1.0, 2.0])
    assert read_matrix(tmp_path / "v.nrst").shape == (2, 1)
    with pytest.raises(ValueError):
        write_matrix(tmp_path / "x.nrst", np.zeros((2, 2, 2)))


def test_truncation_names_row(tmp_path):
    p = tmp_path / "m.nrst"
    write_matrix(p, np.ones((4, 5)))
    raw = p.read_bytes()
    # keep two full rows plus part of the third
    p.write_bytes(raw[:24 + 8 * 5 * 2 + 12])
    with pytest.raises(ParseError) as ei:
        read_matrix(p)
    assert ei.value.line == 3
    assert "row 3 of 4" in str(ei.value)


@pytest.mark.parametrize("mutate, msg", [
    (lambda b: b"XXXX" + b[4:], "magic"),
    (lambda b: b[:4] + struct.pack("<I", 9) + b[8:], "version"),
    (lambda b: b[:10], "header"),
    (lambda b: b + b"\0" * 8, "trailing"),
])
def test_corrupt_headers(tmp_path, mutate, msg):
    p = tmp_path / "m.nrst"
    write_matrix(p, np.ones((2, 2)))
    p.write_bytes(mutate(p.read_bytes()))
    with pytest.raises(ParseError, match=msg):
        read_matrix(p)


def test_missing_file_is_oserror(tmp_path):
    with pytest.raises(OSError):
        read_matrix(tmp_path / "nope.nrst")


def test_mask_round_trip(tmp_path):
    m = np.random.default_rng(0).random((7, 9)) < 0.3
    write_mask(tmp_path / "k.nrst", m)
    assert np.array_equal(read_mask(tmp_path / "k.nrst"), m)
    write_matrix(tmp_path / "bad.nrst", np.full((2, 2), 0.5))
    with pytest.raises(ParseError):
        read_mask(tmp_path / "bad.nrst")


SC = ScenarioConfig(n=30, d=200, r=3, t_train=40, change_times=(120,),
                    support=SupportModel.moving_object(2, 0.3, 20), noise_var=1e-4)


def test_scenario_round_trip(tmp_path):
    sc = gen_scenario(SC, 4)
    save_scenario(tmp_path / "s", sc)
    back = load_scenario(tmp_path / "s")
    assert back.config == sc.config and back.seed == sc.seed
    for name in ("Y", "L", "X", "V", "coeffs", "support_mask"):
        assert np.array_equal(getattr(back, name), getattr(sc, name))
    assert all(np.array_equal(a, b) for a, b in zip(back.subspaces, sc.subspaces))


def test_scenario_bad_meta(tmp_path):
    save_scenario(tmp_path / "s", gen_scenario(SC, 0))
    (tmp_path / "s" / "meta.json").write_text('{"seed": 1,\n  oops}')
    with pytest.raises(ParseError) as ei:
        load_scenario(tmp_path / "s")
    assert ei.value.line == 2


def _rows(m=5):
    rng = np.random.default_rng(1)
    return {"t": np.arange(10, 10 + m), "sin_theta": rng.random(m), "rel_err_l": rng.random(m) * 1e-7,
            "support_precision": np.ones(m), "support_recall": rng.random(m),
            "detected_epoch": np.array([0, 0, 1, 1, 2][:m])}


def test_metrics_csv_round_trip(tmp_path):
    rows = _rows()
    write_metrics_csv(tmp_path / "m.csv", rows)
    back = read_metrics_csv(tmp_path / "m.csv")
    for c in METRIC_COLUMNS:
        assert np.array_equal(back[c], rows[c])
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == ",".join(METRIC_COLUMNS)


@pytest.mark.parametrize("edit, line", [
    (lambda ls: ["t,sin,rel"] + ls[1:], 1),
    (lambda ls: ls[:3] + ["12,0.1,0.2"] + ls[4:], 4),
    (lambda ls: ls[:2] + ["11,abc,0,1,1,0"] + ls[3:], 3),
    (lambda ls: [], 1),
])
def test_metrics_csv_schema_errors(tmp_path, edit, line):
    p = tmp_path / "m.csv"
    write_metrics_csv(p, _rows())
    p.write_text("\n".join(edit(p.read_text().splitlines())))
    with pytest.raises(ParseError) as ei:
        read_metrics_csv(p)
    assert ei.value.line == line


def test_metrics_csv_ragged_columns(tmp_path):
    rows = _rows()
    rows["sin_theta"] = rows["sin_theta"][:3]
    with pytest.raises(ValueError):
        write_metrics_csv(tmp_path / "m.csv", rows)


def test_grid_round_trip(tmp_path):
    g = np.array([[1.0, 0.5], [0.25, 0.0]])
    write_grid(tmp_path / "g.dat", [2, 5], [0.1, 0.2], g)
    rows, cols, back = read_grid(tmp_path / "g.dat")
    assert rows == [2, 5] and cols == [0.1, 0.2] and np.array_equal(back, g)
    (tmp_path / "bad.dat").write_text("# r b0 v\n1 2\n")
    with pytest.raises(ParseError) as ei:
        read_grid(tmp_path / "bad.dat")
    assert ei.value.line == 2


def test_write_columns(tmp_path):
    write_columns(tmp_path / "c.dat", ["t", "a"], [[1, 2], [0.5, 0.25]])
    text = (tmp_path / "c.dat").read_text().splitlines()
    assert text[0] == "# t a"
    assert np.array_equal(np.loadtxt(tmp_path / "c.dat"), [[1, 0.5], [2, 0.25]])


def test_estimates_round_trip(tmp_path):
    sc = gen_scenario(SC.with_(noise_var=0.0), 3)
    p = TrackerParams.from_xmin(r=3, K=2, alpha=20, x_min=10, lambda_thresh=7.5e-4)
    st = new_tracker(sc.subspaces[0], p, t_start=40)
    ests = run(st, sc.Y)
    L_off = np.random.default_rng(0).random((30, len(ests)))
    save_estimates(tmp_path / "e", ests, L_off, detections=[130])
    back, off, dets = load_estimates(tmp_path / "e")
    assert np.array_equal(off, L_off) and dets == [130]
    assert len(back) == len(ests)
    for a, b in zip(ests, back):
        assert a.t == b.t
        assert np.array_equal(a.x_hat, b.x_hat) and np.array_equal(a.l_hat, b.l_hat)
        assert np.array_equal(np.sort(a.support), b.support)
        assert np.array_equal(a.subspace, b.subspace)
    n_bases = len({id(e.subspace) for e in ests})
    assert len(list((tmp_path / "e").glob("B*.nrst"))) == n_bases


def test_estimates_without_extras(tmp_path):
    P = np.eye(4)[:, :1]
    ests = [FrameEstimate(t, np.zeros(4), np.ones(4), np.array([], int), P) for t in (5, 6)]
    save_estimates(tmp_path / "e", ests)
    back, off, dets = load_estimates(tmp_path / "e")
    assert off is None and dets is None and [e.t for e in back] == [5, 6]
