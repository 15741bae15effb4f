"""Sectioned ``key = value`` experiment configs (INI dialect via configparser)."""
from __future__ import annotations

import configparser
import io
import re
from dataclasses import replace
from typing import Iterable, Optional

from .bench import ExcitationSpec, ExperimentConfig
from .estimators import HyperParams, Method

METHOD_KEYS = ("gamma", "xi_G", "xi_C", "beta", "gamma1")
SCHEMA = {
    "experiment": (
        "system", "k0", "kf", "x_lo", "x_hi", "x0", "filter_pole", "stack_size",
        "seed", "b_eps_bar", "eta", "gamma_factor", "out_dir",
    ),
    "basis": ("kind", "rbf_centers", "rbf_spread"),
    "excitation": ("amplitude", "decay", "frequencies", "phase_jitter"),
    **{m.value: METHOD_KEYS for m in Method},
}


class ConfigError(ValueError):
    def __init__(self, msg: str, key: Optional[str] = None, line: Optional[int] = None):
        where = ""
        if line is not None:
            where = f"line {line}: "
        elif key is not None:
            where = f"{key}: "
        super().__init__(where + msg)
        self.key = key
        self.line = line


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive (xi_G)
    return cp


def _line_index(text: str) -> dict:
    """Map ``(section, key)`` to its 1-based line number."""
    out, section = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"\[(.+)\]$", line)
        if m:
            section = m.group(1).strip()
            out.setdefault((section, None), i)
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            out.setdefault((section, m.group(1)), i)
    return out


def _num(value: str, kind, key: str, line):
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind.__name__}", key, line) from None


def _opt(value: str, kind, key: str, line, none_words=("auto", "none")):
    return None if value.strip().lower() in none_words else _num(value, kind, key, line)


def _check_keys(cp: configparser.ConfigParser, lines: dict) -> None:
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", section, lines.get((section, None)))
        for key in cp[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}", f"{section}.{key}", lines.get((section, key)))


def apply_overrides(cp: configparser.ConfigParser, overrides: Iterable[str]) -> None:
    """Apply ``section.key=value`` strings; unknown keys are rejected by name."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        lhs, value = item.split("=", 1)
        if "." not in lhs:
            raise ConfigError(f"override key {lhs!r} needs a section prefix", lhs)
        section, key = lhs.strip().split(".", 1)
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {section}.{key}", f"{section}.{key}")
        if not cp.has_section(section):
            cp.add_section(section)
        cp[section][key] = value.strip()


def _to_config(cp: configparser.ConfigParser, lines: dict, base: ExperimentConfig) -> ExperimentConfig:
    def get(section, key):
        return cp[section][key] if cp.has_section(section) and key in cp[section] else None

    def ln(section, key):
        return lines.get((section, key))

    cfg = base
    upd = {}
    for key, kind in (("k0", int), ("kf", int), ("seed", int)):
        v = get("experiment", key)
        if v is not None:
            upd[key] = _num(v, kind, key, ln("experiment", key))
    for key in ("x_lo", "x_hi", "x0", "filter_pole", "eta", "gamma_factor"):
        v = get("experiment", key)
        if v is not None:
            upd[key] = _num(v, float, key, ln("experiment", key))
    if (v := get("experiment", "system")) is not None:
        upd["system"] = v.strip()
    if (v := get("experiment", "stack_size")) is not None:
        upd["stack_size"] = _opt(v, int, "stack_size", ln("experiment", "stack_size"))
    if (v := get("experiment", "out_dir")) is not None:
        upd["out_dir"] = None if v.strip().lower() == "none" else v.strip()
    if (v := get("experiment", "b_eps_bar")) is not None:
        w = v.strip().lower()
        if w == "auto":
            upd["b_eps_bar"] = "auto"
        elif w == "unknown":
            upd["b_eps_bar"] = None
        else:
            upd["b_eps_bar"] = _num(v, float, "b_eps_bar", ln("experiment", "b_eps_bar"))
    if (v := get("basis", "kind")) is not None:
        upd["basis"] = v.strip()
    if (v := get("basis", "rbf_centers")) is not None:
        upd["rbf_centers"] = _num(v, int, "rbf_centers", ln("basis", "rbf_centers"))
    if (v := get("basis", "rbf_spread")) is not None:
        upd["rbf_spread"] = _num(v, float, "rbf_spread", ln("basis", "rbf_spread"))

    ex = {}
    for key in ("amplitude", "decay", "phase_jitter"):
        if (v := get("excitation", key)) is not None:
            ex[key] = _num(v, float, key, ln("excitation", key))
    if (v := get("excitation", "frequencies")) is not None:
        parts = [s for s in v.split(",") if s.strip()]
        ex["frequencies"] = tuple(_num(s, float, "frequencies", ln("excitation", "frequencies")) for s in parts)
    if ex:
        try:
            upd["excitation"] = replace(cfg.excitation, **ex)
        except ValueError as exc:
            raise ConfigError(str(exc), "excitation", lines.get(("excitation", None))) from None

    present = [m.value for m in Method if cp.has_section(m.value)]
    if present:
        methods = {}
        for name in present:
            hp = cfg.methods.get(name, HyperParams())
            vals = {}
            for key in METHOD_KEYS:
                if (v := get(name, key)) is None:
                    continue
                kind = float
                vals[key] = _opt(v, kind, f"{name}.{key}", ln(name, key)) if key == "gamma" else _num(
                    v, kind, f"{name}.{key}", ln(name, key)
                )
            methods[name] = replace(hp, **vals)
        upd["methods"] = methods
    cfg = replace(cfg, **upd)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def loads(text: str, overrides: Iterable[str] = (), base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"malformed config: {exc.message if hasattr(exc, 'message') else exc}", line=line) from None
    lines = _line_index(text)
    _check_keys(cp, lines)
    apply_overrides(cp, overrides)
    return _to_config(cp, lines, base or ExperimentConfig())


def load(path, overrides: Iterable[str] = ()) -> ExperimentConfig:
    with open(path) as fh:
        return loads(fh.read(), overrides)


def _fmt(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dumps(cfg: ExperimentConfig) -> str:
    cp = _parser()
    b = cfg.b_eps_bar
    cp["experiment"] = {
        "system": cfg.system,
        "k0": str(cfg.k0),
        "kf": str(cfg.kf),
        "x_lo": repr(float(cfg.x_lo)),
        "x_hi": repr(float(cfg.x_hi)),
        "x0": repr(float(cfg.x0)),
        "filter_pole": repr(float(cfg.filter_pole)),
        "stack_size": _fmt(cfg.stack_size),
        "seed": str(cfg.seed),
        "b_eps_bar": "unknown" if b is None else (b if isinstance(b, str) else repr(float(b))),
        "eta": repr(float(cfg.eta)),
        "gamma_factor": repr(float(cfg.gamma_factor)),
        "out_dir": "none" if cfg.out_dir is None else str(cfg.out_dir),
    }
    cp["basis"] = {"kind": cfg.basis, "rbf_centers": str(cfg.rbf_centers), "rbf_spread": repr(float(cfg.rbf_spread))}
    ex = cfg.excitation
    cp["excitation"] = {
        "amplitude": repr(float(ex.amplitude)),
        "decay": repr(float(ex.decay)),
        "frequencies": ", ".join(repr(w) for w in ex.frequencies),
        "phase_jitter": repr(float(ex.phase_jitter)),
    }
    for name, hp in cfg.methods.items():
        cp[name] = {
            "gamma": _fmt(hp.gamma),
            "xi_G": repr(float(hp.xi_G)),
            "xi_C": repr(float(hp.xi_C)),
            "beta": repr(float(hp.beta)),
            "gamma1": repr(float(hp.gamma1)),
        }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def dump(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(cfg))
