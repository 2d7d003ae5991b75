"""Experiment configuration files (``key = value`` with sections) and overrides.

Example::

    [experiment]
    mode = norst_offline
    trials = 5

    [scenario]
    profile = paper
    x_min = 10

    [support]
    model = bernoulli
    rho = 0.3

Every key is optional. Values left out fall back to the selected profile
(``desk`` unless stated), and command-line overrides win over the file.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import replace
from pathlib import Path

from .errors import ParseError
from .experiments import (PROFILE_ALPHA, ExperimentConfig, bernoulli_supports, desk_profile,
                          moving_object_supports, paper_profile)

_INT = int


def _float_or_none(v):
    return None if v.strip().lower() in ("", "none") else float(v)


def _int_or_none(v):
    return None if v.strip().lower() in ("", "none") else int(v)


def _times(v):
    v = v.strip()
    return tuple(int(x) for x in re.split(r"[,\s]+", v) if x) if v else ()


def _str(v):
    return v.strip()


SCHEMA = {
    "experiment": {"mode": _str, "trials": _INT, "seed": _INT, "alpha": _INT, "K": _INT,
                   "lambda_thresh": float, "x_min_param": _float_or_none, "missing_rho": float,
                   "out_dir": _str, "parallel": _INT},
    "scenario": {"profile": _str, "n": _INT, "d": _INT, "r": _INT, "f": float, "t_train": _INT,
                 "change_times": _times, "gamma": float, "change_sin_theta": _float_or_none,
                 "x_min": float, "x_max": float, "magnitude_mode": _str, "noise_var": float},
    "support": {"model": _str, "rho": float, "s_frac": float, "b0": float, "train_rho": float,
                "train_s_frac": float, "train_b0": float},
    "init": {"mode": _str, "iters": _int_or_none, "perturbation": float},
}

PROFILES = {"desk": desk_profile, "paper": paper_profile}


def _line_of(text, section, key):
    cur = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            cur = m.group(1).strip()
            continue
        if cur == section and re.match(rf"{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
            return i
    return None


def read_config_file(path):
    """Parse and type-check a config file into ``{section: {key: value}}``.

    Raises
    ------
    ParseError
        On syntax errors, unknown sections or keys, and bad values; the
        message carries the file path and line number.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise OSError(f"{path}: {e.strerror or e}") from e
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError as e:
        raise ParseError("key outside any [section]", line=e.lineno, path=path) from e
    except configparser.DuplicateOptionError as e:
        raise ParseError(f"duplicate key {e.option!r} in [{e.section}]", line=e.lineno, path=path) from e
    except configparser.DuplicateSectionError as e:
        raise ParseError(f"duplicate section [{e.section}]", line=e.lineno, path=path) from e
    except configparser.ParsingError as e:
        line = e.errors[0][0] if e.errors else None
        raise ParseError("malformed line", line=line, path=path) from e
    out = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ParseError(f"unknown section [{section}]", line=_line_of_section(text, section), path=path)
        out[section] = {}
        for key, raw in cp.items(section):
            conv = SCHEMA[section].get(key)
            if conv is None:
                raise ParseError(f"unknown key {key!r} in [{section}]", line=_line_of(text, section, key),
                                 path=path)
            try:
                out[section][key] = conv(raw)
            except ValueError as e:
                raise ParseError(f"bad value for {key!r}: {raw!r} ({e})", line=_line_of(text, section, key),
                                 path=path) from e
    return out


def _line_of_section(text, section):
    for i, line in enumerate(text.splitlines(), 1):
        if line.strip() == f"[{section}]":
            return i
    return None


def build_config(values=None, overrides=None):
    """Assemble an :class:`ExperimentConfig` from parsed file values plus overrides.

    ``overrides`` uses the same ``{section: {key: value}}`` layout; entries
    whose value is None are ignored.
    """
    merged = {s: {} for s in SCHEMA}
    for src in (values or {}, overrides or {}):
        for s, kv in src.items():
            if s not in SCHEMA:
                raise ValueError(f"unknown section {s!r}")
            for k, v in kv.items():
                if k not in SCHEMA[s]:
                    raise ValueError(f"unknown key {k!r} in section {s!r}")
                if v is not None:
                    merged[s][k] = v
    ex, sc, sp, ini = merged["experiment"], merged["scenario"], merged["support"], merged["init"]

    profile = sc.pop("profile", "desk")
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    scen = PROFILES[profile](**sc)
    if "x_min" in sc and "x_max" not in sc and scen.x_max < scen.x_min:
        scen = replace(scen, x_max=scen.x_min)
    alpha = ex.pop("alpha", PROFILE_ALPHA[profile])

    model = sp.get("model", "moving_object")
    if model == "moving_object":
        sup, train = moving_object_supports(scen.n, alpha, s_frac=sp.get("s_frac", 0.05), b0=sp.get("b0", 0.3),
                                            train_s_frac=sp.get("train_s_frac", 0.01),
                                            train_b0=sp.get("train_b0", 0.01))
    elif model == "bernoulli":
        sup, train = bernoulli_supports(rho=sp.get("rho", 0.3), train_rho=sp.get("train_rho", 0.01))
    elif model == "none":
        sup, train = bernoulli_supports(0.0, 0.0)
    else:
        raise ValueError(f"unknown support model {model!r}")
    scen = replace(scen, support=sup, train_support=train)

    kw = dict(ex)
    if "out_dir" in kw and not kw["out_dir"]:
        kw["out_dir"] = None
    if "mode" in ini:
        kw["init_mode"] = ini["mode"]
    if "iters" in ini:
        kw["init_iters"] = ini["iters"]
    if "perturbation" in ini:
        kw["init_perturbation"] = ini["perturbation"]
    cfg = ExperimentConfig(scenario=scen, alpha=alpha, **kw)
    cfg.validate()
    return cfg


def load_config(path=None, overrides=None):
    values = read_config_file(path) if path is not None else None
    return build_config(values, overrides)
