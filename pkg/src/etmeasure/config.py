"""Experiment config files.

INI syntax (``configparser``), case-sensitive keys, one section per concern::

    [experiment]
    kind = measure          ; measure | chain | probe | spacetime
    units = natural         ; natural (hbar = 1) or si (spacetime only)
    seed = 0

    [model]
    kind = stern_gerlach_2d
    scale = 1.0

    [protocol]
    method = auto           ; auto | exact | split

Every key is checked against the schema below; unknown keys and bad values
raise :class:`ConfigFileError` with the line number of the entry.
"""
from __future__ import annotations

import configparser
import hashlib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigFileError


def _floats(text: str) -> tuple[float, ...]:
    vals = tuple(float(v) for v in text.replace(",", " ").split())
    if not vals:
        raise ValueError("empty list")
    return vals


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_or_auto(text: str):
    return None if text.strip().lower() == "auto" else float(text)


def _count(text: str):
    t = text.strip().lower()
    return math.inf if t in ("inf", "infinity") else int(t)


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t
    return parse


MODEL_KINDS: dict[str, dict[str, Callable[[str], Any]]] = {
    "stern_gerlach_2d": {"delta": float, "Delta": float, "epsilon": float, "scale": float,
                         "kick": float, "grid_nx": int, "grid_nz": int, "energy_n": int},
    "chiral": {"delta": float, "Delta": float, "grid_n": int},
    "gaussian": {"m": float, "k": float, "sigma": float, "Delta": float, "T": float,
                 "grid_n": int, "coupling": _choice("x", "z"), "v_width": float},
    "standard": {"pointer_width": float, "tau": float, "grid_n": int},
    "free": {"d_s": int, "d_a": int, "tau": float},
    "controlled_shift": {"n": int, "coupling": float},
    "rotation_meter": {"coupling": float},
    "random_finite": {"d_s": int, "d_a": int, "seed": int},
}

SWEEPABLE: dict[str, tuple[str, ...]] = {
    "stern_gerlach_2d": ("scale", "epsilon", "delta", "Delta", "kick"),
    "chiral": ("delta", "Delta"),
    "gaussian": ("k", "sigma", "m", "Delta", "T"),
    "standard": ("pointer_width", "tau"),
    "controlled_shift": ("coupling",),
    "rotation_meter": ("coupling",),
    "random_finite": ("seed",),
}

SECTIONS: dict[str, dict[str, Callable[[str], Any]]] = {
    "experiment": {"kind": _choice("measure", "chain", "probe", "spacetime"),
                   "units": _choice("natural", "si"), "seed": int, "name": str},
    "protocol": {"tau": _float_or_auto, "method": _choice("auto", "exact", "split"),
                 "p_samples": int, "pair": lambda s: tuple(int(v) for v in s.replace(",", " ").split()),
                 "condition_samples": int, "horizon": _float_or_auto, "dt": float},
    "audit": {"alphas": _floats},
    "sweep": {"parameter": str, "values": _floats, "workers": int},
    "chain": {"L": int, "J": float, "seed": int, "t": float, "eps": float, "tau": float,
              "observable": _choice("x", "y", "z"), "samples": int},
    "probe": {"d_s": int, "d_a": int, "trials": int, "seed": int, "grid_window": _bool,
              "workers": int},
    "spacetime": {"R": float, "tau": float},
    "output": {"svg": _bool},
}

_KEY_RE = re.compile(r"^\s*([^=:\s;#\[][^=:]*?)\s*[=:]")
_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")


def _line_index(text: str) -> dict[tuple[str, str], int]:
    where, section = {}, None
    for i, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip()), i)
    return where


@dataclass
class ExperimentConfig:
    sections: dict[str, dict[str, Any]]
    sha256: str
    source: str = ""
    lines: dict[tuple[str, str], int] = field(default_factory=dict)

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    @property
    def kind(self) -> str:
        return self.get("experiment", "kind", "measure")

    @property
    def model(self) -> dict[str, Any]:
        return dict(self.sections.get("model", {}))

    def line_of(self, section: str, key: str) -> int | None:
        return self.lines.get((section, key))


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"),
                                       strict=True, default_section="__defaults__")
    parser.optionxform = str  # keep case: delta and Delta are different parameters
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigFileError(str(exc).splitlines()[0], getattr(exc, "lineno", None)) from None
    lines = _line_index(text)
    out: dict[str, dict[str, Any]] = {}
    for name in parser.sections():
        if name == "model":
            schema = _model_schema(parser, lines)
        elif name in SECTIONS:
            schema = SECTIONS[name]
        else:
            raise ConfigFileError(f"unknown section [{name}]", _section_line(text, name))
        vals: dict[str, Any] = {}
        for key, raw in parser.items(name):
            if key not in schema:
                raise ConfigFileError(f"unknown key {key!r} in [{name}]", lines.get((name, key)))
            try:
                vals[key] = schema[key](raw)
            except (TypeError, ValueError) as exc:
                raise ConfigFileError(f"bad value for {name}.{key}: {exc}", lines.get((name, key))) from None
        out[name] = vals
    cfg = ExperimentConfig(out, hashlib.sha256(text.encode()).hexdigest(), source, lines)
    _check_units(cfg)
    return cfg


def _section_line(text: str, name: str) -> int | None:
    for i, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m and m.group(1).strip() == name:
            return i
    return None


def _model_schema(parser: configparser.ConfigParser, lines) -> dict[str, Callable[[str], Any]]:
    if not parser.has_option("model", "kind"):
        raise ConfigFileError("[model] needs a kind", None)
    kind = parser.get("model", "kind").strip()
    if kind not in MODEL_KINDS:
        raise ConfigFileError(f"unknown model kind {kind!r}; expected one of {', '.join(MODEL_KINDS)}",
                              lines.get(("model", "kind")))
    return {"kind": str, **MODEL_KINDS[kind]}


def _check_units(cfg: ExperimentConfig) -> None:
    units = cfg.get("experiment", "units", "natural")
    if units == "si" and cfg.kind != "spacetime":
        raise ConfigFileError("SI units are only supported for the spacetime estimate",
                              cfg.line_of("experiment", "units"))
    if cfg.kind == "measure" and "model" not in cfg.sections:
        raise ConfigFileError("a measure experiment needs a [model] section", None)


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigFileError(f"cannot read {p}: {exc.strerror}") from None
    return parse_config(text, str(p))
