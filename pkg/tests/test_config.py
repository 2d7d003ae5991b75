import pytest

from norst.config import build_config, load_config, read_config_file
from norst.errors import ParseError


def _write(tmp_path, text):
    p = tmp_path / "exp.ini"
    p.write_text(text)
    return p


def test_defaults_are_desk():
    cfg = load_config()
    sc = cfg.scenario
    assert (sc.n, sc.d, sc.r, sc.change_times) == (200, 3000, 10, (1000, 2000))
    assert cfg.alpha == 100 and cfg.K == 8 and cfg.lambda_thresh == 7.5e-4
    assert sc.support.kind == "moving_object" and sc.support.s == 10


def test_paper_profile():
    cfg = load_config(overrides={"scenario": {"profile": "paper"}})
    sc = cfg.scenario
    assert (sc.n, sc.d, sc.r, sc.change_times) == (1000, 12000, 30, (3000, 8000))
    assert cfg.alpha == 300
    assert sc.support.s == 50 and sc.support.alpha == 300


def test_file_values_and_override_precedence(tmp_path):
    p = _write(tmp_path, """
# comment
[experiment]
mode = norst_offline
trials = 3   ; inline comment

[scenario]
n = 120
change_times = 500, 900

[support]
model = bernoulli
rho = 0.2

[init]
iters = 12
""")
    cfg = load_config(p, {"experiment": {"trials": 7, "seed": None}})
    assert cfg.mode == "norst_offline" and cfg.trials == 7 and cfg.seed == 0
    assert cfg.scenario.n == 120 and cfg.scenario.change_times == (500, 900)
    assert cfg.scenario.support.kind == "bernoulli" and cfg.scenario.support.rho == 0.2
    assert cfg.init_iters == 12


def test_xmin_raises_xmax():
    cfg = build_config(overrides={"scenario": {"x_min": 30.0}})
    assert cfg.scenario.x_max == 30.0


@pytest.mark.parametrize("text, line, msg", [
    ("n = 3\n", 1, "outside"),
    ("[scenario]\nn = 3\n[bogus]\nx = 1\n", 3, "unknown section"),
    ("[scenario]\n\nwidth = 3\n", 3, "unknown key"),
    ("[experiment]\ntrials = many\n", 2, "bad value"),
    ("[experiment]\ntrials = 1\ntrials = 2\n", 3, "duplicate"),
    ("[experiment]\nthis line has no separator\n", 2, "malformed"),
])
def test_parse_errors_carry_line(tmp_path, text, line, msg):
    with pytest.raises(ParseError, match=msg) as ei:
        read_config_file(_write(tmp_path, text))
    assert ei.value.line == line


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        read_config_file(tmp_path / "absent.ini")


@pytest.mark.parametrize("ov", [
    {"scenario": {"profile": "huge"}},
    {"support": {"model": "stripes"}},
    {"experiment": {"mode": "fast"}},
    {"experiment": {"trials": 0}},
    {"scenario": {"r": 500}},
    {"nosuch": {}},
    {"experiment": {"colour": 1}},
])
def test_invalid_values(ov):
    with pytest.raises(ValueError):
        build_config(overrides=ov)
