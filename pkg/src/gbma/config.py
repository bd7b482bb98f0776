"""Flat key = value scenario files.

Grammar::

    # comment
    [section]          sets the prefix for the keys that follow
    key = value        stored as "section.key"
    other.key = value  a dotted key is absolute, whatever section it sits in

Blank lines and ``#`` comments (whole-line, or after whitespace at the end
of a line) are ignored.  Keys are validated against
:data:`SCHEMA`; unknown keys, duplicates and malformed values are errors.
``derived.*`` keys are written by the report module and checked against the
recomputed values when a manifest is re-run.
"""

from __future__ import annotations

import math
import os
import re

from .errors import ConfigError

DATA_DIR_ENV = "GBMA_DATA_DIR"


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _float(s):
    v = float(s)
    if math.isnan(v):
        raise ValueError("NaN is not a valid setting")
    return v


def _floats(s):
    return tuple(_float(p) for p in s.split(",") if p.strip())


def _choice(*options):
    def parse(s):
        v = s.strip()
        if v not in options:
            raise ValueError(f"expected one of {options}, got {v!r}")
        return v
    parse.options = options
    return parse


def _beta(s):
    v = s.strip()
    if v.startswith("auto:"):
        if v not in ("auto:strong", "auto:convex_equal", "auto:convex_fading"):
            raise ValueError(f"unknown stepsize designer {v!r}")
        return v
    b = _float(v)
    if not b > 0:
        raise ValueError("beta must be positive")
    return b


def _theta0(s):
    v = s.strip()
    if v == "zeros":
        return ("zeros", ())
    for kind in ("vector", "offset", "star_offset"):
        if v.startswith(kind + ":"):
            return (kind, _floats(v[len(kind) + 1:]))
    raise ValueError("theta0 must be zeros, vector:a,b,..., offset:a,b,... or star_offset:a,b,...")


def _B(s):
    v = s.strip()
    return "auto" if v == "auto" else _float(v)


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise ValueError("must be >= 1")
    return v


def _str(s):
    return s.strip()


def _opt(parse):
    def wrapped(s):
        return None if s.strip() in ("", "none") else parse(s)
    return wrapped


SWEEP_PARAMS = ("nodes.N", "energy.epsilon", "energy.p", "energy.value", "run.algorithm",
                "noise.sigma_w_sq", "run.beta", "channel.scale")

# key -> (parser, default)
SCHEMA = {
    "name": (_str, "run"),
    "figure": (_str, ""),
    "notes": (_str, ""),
    "data.source": (_choice("synthetic", "msd", "localization"), "synthetic"),
    "data.path": (_str, "YearPredictionMSD.txt"),
    "data.limit": (_opt(_positive_int), None),
    "data.standardize": (_bool, True),
    "data.seed": (int, 0),
    "data.d": (_positive_int, 10),
    "data.conditioning": (_float, 1.0),
    "data.noise_std": (_float, 0.1),
    "loss.kind": (_choice("ridge", "localization"), "ridge"),
    "loss.lambda": (_float, 0.5),
    "loss.guard_radius": (_float, 1e-3),
    "field.size": (_float, 100.0),
    "field.source": (_floats, (60.0, 60.0)),
    "field.exclusion_radius": (_float, 8.0),
    "field.A": (_float, 100.0),
    "field.snr_db": (_float, math.inf),
    "field.per_rep": (_bool, False),
    "constants.mu": (_opt(_float), None),
    "constants.L": (_opt(_float), None),
    "constants.L_bar": (_opt(_float), None),
    "nodes.N": (_positive_int, 100),
    "channel.kind": (_choice("unit", "rayleigh", "generic"), "unit"),
    "channel.scale": (_float, 1.0),
    "channel.mean": (_float, 1.0),
    "channel.var": (_float, 0.0),
    "channel.sampler": (_choice("gamma", "lognormal", "uniform"), "gamma"),
    "channel.phase_max": (_float, 0.0),
    "noise.sigma_w_sq": (_opt(_float), None),
    "noise.snr_db": (_opt(_float), None),
    "energy.kind": (_choice("const", "powerlaw", "exponent"), "const"),
    "energy.value": (_float, 1.0),
    "energy.epsilon": (_float, 1.0),
    "energy.p": (_float, 0.0),
    "fdm.energy": (_float, 1.0),
    "run.algorithm": (_choice("gbma", "centralized", "fdm"), "gbma"),
    "run.beta": (_beta, "auto:strong"),
    "run.safety": (_float, 0.9),
    "run.k_max": (_positive_int, 300),
    "run.delta": (_opt(_float), None),
    "run.theta0": (_theta0, ("zeros", ())),
    "run.seed": (int, 0),
    "run.reps": (_positive_int, 200),
    "run.stop": (_choice("guard", "budget"), "guard"),
    "run.projection": (_bool, False),
    "run.projection_radius": (_opt(_float), None),
    "bounds.B_N": (_opt(_B), None),
    "bounds.probe_radius": (_opt(_float), None),
    "bounds.samples": (_positive_int, 200),
    "study.kind": (_choice("curves", "energy"), "curves"),
    "study.target": (_float, 1e-2),
    "sweep.param": (_opt(_choice(*SWEEP_PARAMS)), None),
    "sweep.values": (_str, ""),
    "checks.moments": (_bool, False),
    "checks.moment_draws": (_positive_int, 10_000),
    "checks.cocoercivity": (_bool, False),
    "checks.gradient_sum": (_bool, False),
    "checks.trials": (_positive_int, 1000),
    "output.dir": (_str, "out"),
    "output.plot": (_bool, True),
}

_LINE = re.compile(r"^([A-Za-z_][\w.]*)\s*=\s*(.*)$")
_SECTION = re.compile(r"^\[([A-Za-z_][\w.]*)\]$")


def parse_text(text, source="<string>"):
    """Raw ``{dotted key: string value}`` mapping from config text."""
    raw, section = {}, ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = re.sub(r"\s+#.*$", "", line).strip()
        if not s or s.startswith("#"):
            continue
        m = _SECTION.match(s)
        if m:
            section = m.group(1)
            continue
        m = _LINE.match(s)
        if not m:
            raise ConfigError(f"{source}:{lineno}: cannot parse {line!r}")
        key, value = m.group(1), m.group(2).strip()
        if section and "." not in key:
            key = f"{section}.{key}"
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


class Config:
    """Validated settings; ``cfg[key]`` returns the typed value or its default."""

    def __init__(self, raw=None, source="<config>"):
        self.source = source
        self.values = {}
        self.derived = {}
        for key, value in (raw or {}).items():
            self.set(key, value)
        self._cross_check()

    def set(self, key, value):
        if key.startswith("derived."):
            self.derived[key[len("derived."):]] = value.strip()
            return
        if key not in SCHEMA:
            raise ConfigError(f"{self.source}: unknown key {key!r}")
        parse = SCHEMA[key][0]
        try:
            self.values[key] = parse(value)
        except ValueError as exc:
            raise ConfigError(f"{self.source}: bad value for {key}: {exc}") from None

    def __getitem__(self, key):
        if key in self.values:
            return self.values[key]
        return SCHEMA[key][1]

    def __contains__(self, key):
        return key in self.values

    def with_overrides(self, pairs):
        """Copy with ``key=value`` strings applied on top."""
        raw = {k: _unparse(k, v) for k, v in self.values.items()}
        raw.update({f"derived.{k}": v for k, v in self.derived.items()})
        for item in pairs:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            k, v = item.split("=", 1)
            raw[k.strip()] = v.strip()
        return Config(raw, self.source)

    def sweep_values(self):
        param = self["sweep.param"]
        if param is None:
            return None, [None]
        text = self["sweep.values"]
        items = [p.strip() for p in text.split(",") if p.strip()]
        if not items:
            raise ConfigError(f"{self.source}: sweep.param set without sweep.values")
        parse = SCHEMA[param][0]
        for item in items:
            try:
                parse(item)
            except ValueError as exc:
                raise ConfigError(f"{self.source}: bad sweep value {item!r}: {exc}") from None
        return param, items

    def _cross_check(self):
        src = self.source
        kind, source = self["loss.kind"], self["data.source"]
        if (source == "localization") != (kind == "localization"):
            raise ConfigError(f"{src}: loss.kind={kind} does not match data.source={source}")
        if "noise.sigma_w_sq" in self and "noise.snr_db" in self:
            if self["noise.sigma_w_sq"] is not None and self["noise.snr_db"] is not None:
                raise ConfigError(f"{src}: give noise.sigma_w_sq or noise.snr_db, not both")
        if self["noise.sigma_w_sq"] is not None and self["noise.sigma_w_sq"] < 0:
            raise ConfigError(f"{src}: noise.sigma_w_sq must be >= 0")
        if self["loss.lambda"] < 0:
            raise ConfigError(f"{src}: loss.lambda must be >= 0")
        if not 0 < self["run.safety"] <= 1:
            raise ConfigError(f"{src}: run.safety must lie in (0, 1]")
        if self["run.projection"] and self["run.projection_radius"] is None:
            raise ConfigError(f"{src}: run.projection needs run.projection_radius")
        if len(self["field.source"]) != 2:
            raise ConfigError(f"{src}: field.source needs two coordinates")
        if self["sweep.values"] and self["sweep.param"] is None:
            raise ConfigError(f"{src}: sweep.values given without sweep.param")
        if self["study.kind"] == "energy" and self["sweep.param"] != "nodes.N":
            raise ConfigError(f"{src}: an energy study sweeps nodes.N")
        if not self["study.target"] > 0:
            raise ConfigError(f"{src}: study.target must be positive")
        if self["sweep.param"] is not None:
            self.sweep_values()

    def render(self, derived=None):
        """Config text holding every key (defaults included) plus ``derived``."""
        lines, current = [], None
        for key in SCHEMA:
            section, _, leaf = key.rpartition(".")
            if section != current:
                if lines:
                    lines.append("")
                if section:
                    lines.append(f"[{section}]")
                current = section
            lines.append(f"{leaf} = {_unparse(key, self[key])}")
        if derived:
            lines.append("")
            lines.append("[derived]")
            lines.extend(f"{k} = {v}" for k, v in derived.items())
        return "\n".join(lines) + "\n"


def _unparse(key, value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if key == "run.theta0":
        kind, vec = value
        return kind if kind == "zeros" else f"{kind}:" + ",".join(repr(float(x)) for x in vec)
    if isinstance(value, tuple):
        return ",".join(repr(float(x)) for x in value)
    return str(value)


def load(path):
    with open(path) as fh:
        text = fh.read()
    return Config(parse_text(text, str(path)), str(path))


def from_text(text, source="<string>"):
    return Config(parse_text(text, source), source)


def data_path(cfg):
    """Resolve data.path, relative paths against $GBMA_DATA_DIR when set."""
    path = cfg["data.path"]
    if os.path.isabs(path):
        return path
    base = os.environ.get(DATA_DIR_ENV)
    return os.path.join(base, path) if base else path
