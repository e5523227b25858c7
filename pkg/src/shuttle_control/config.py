"""INI run configuration with strict schema validation.

Example::

    [system]
    name = donor_chain
    delta = 2.7

    [optimizer]
    T = 1.0
    N = 8000
    seed = 0

    [spin]
    fields = 0, 500

    [output]
    dir = out
    formats = csv, json

Every key is validated before any computation starts.  Unknown sections or
keys, missing required keys and malformed values raise
:class:`ConfigError` carrying the offending line number.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from .optimizer import MODEL_DEFAULTS, OptimizerConfig
from .spin_sim import (
    GAMMA_E_MHZ_PER_G,
    GAMMA_P31_MHZ_PER_G,
    HYPERFINE_CONVENTIONS,
    HYPERFINE_P31_MHZ,
    SpinConfig,
)
from .systems import SystemModel, model_from_parameters

MODEL_PARAMETERS = {"triple_dot": ("J1", "J2"), "donor_chain": ("delta",)}
FORMATS = ("csv", "json")

_OPTIMIZER_TYPES = {
    "T": float, "N": int, "substeps": int, "epsilon0": float, "max_iters": int,
    "fidelity_target": float, "grad_tol": float, "restarts": int, "seed": int,
    "init_scale": float, "integrator": str, "frozen_controls": bool,
    "max_step_fraction": float, "stop_at_target": bool, "initial_site": int,
    "target_site": int, "max_halvings": int, "growth": float, "stall_window": int,
    "stall_fraction": float,
}
#: Optimizer keys that accept ``none`` to disable the feature.
_OPTIONAL = {"epsilon0", "max_step_fraction", "stall_window"}
_SPIN_KEYS = {
    "fields", "hyperfine_mhz", "gamma_e_mhz_per_gauss", "gamma_n_mhz_per_gauss",
    "hyperfine_convention",
}
_OUTPUT_KEYS = {"dir", "formats"}


class ConfigError(ValueError):
    def __init__(self, message: str, path=None, line: int | None = None):
        where = str(path) if path is not None else "<config>"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}")
        self.line = line


@dataclass(frozen=True)
class SpinSettings:
    fields: tuple[float, ...] = (0.0, 500.0)
    hyperfine_mhz: float = HYPERFINE_P31_MHZ
    gamma_e_mhz_per_gauss: float = GAMMA_E_MHZ_PER_G
    gamma_n_mhz_per_gauss: float = GAMMA_P31_MHZ_PER_G
    hyperfine_convention: str = "splitting"

    def spin_config(self, field_gauss: float) -> SpinConfig:
        return SpinConfig.from_frequencies(
            field_gauss,
            hyperfine_mhz=self.hyperfine_mhz,
            gamma_e_mhz_per_gauss=self.gamma_e_mhz_per_gauss,
            gamma_n_mhz_per_gauss=self.gamma_n_mhz_per_gauss,
            hyperfine_convention=self.hyperfine_convention,
        )


@dataclass(frozen=True)
class RunConfig:
    system: str
    parameters: dict
    optimizer: OptimizerConfig
    spin: SpinSettings | None = None
    output_dir: Path = Path(".")
    formats: tuple[str, ...] = FORMATS
    raw: dict = field(default_factory=dict)

    def model(self) -> SystemModel:
        return model_from_parameters(self.system, **self.parameters)

    def echo(self) -> dict:
        """Plain-data view of the configuration for reports."""
        out = {"system": {"name": self.system, **self.parameters}}
        out["optimizer"] = {f.name: getattr(self.optimizer, f.name) for f in fields(self.optimizer)}
        if self.spin is not None:
            out["spin"] = {f.name: getattr(self.spin, f.name) for f in fields(self.spin)}
            out["spin"]["fields"] = list(self.spin.fields)
        out["output"] = {"dir": str(self.output_dir), "formats": list(self.formats)}
        return out


_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^#;\s=:][^=:]*?)\s*[=:]")


def _line_index(text: str) -> dict:
    """Map ``section`` and ``(section, key)`` to 1-based line numbers."""
    index = {}
    section = None
    for number, line in enumerate(text.splitlines(), start=1):
        if m := _SECTION_RE.match(line):
            section = m.group(1).strip()
            index.setdefault(section, number)
        elif section is not None and (m := _KEY_RE.match(line)) and not line[:1].isspace():
            index.setdefault((section, m.group(1).strip()), number)
    return index


def _convert(value: str, kind, err):
    if kind is bool:
        lowered = value.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise err(f"expected a boolean, got {value!r}")
    if kind is int:
        try:
            return int(value)
        except ValueError:
            raise err(f"expected an integer, got {value!r}") from None
    if kind is float:
        try:
            return float(value)
        except ValueError:
            raise err(f"expected a number, got {value!r}") from None
    return value.strip()


def parse_config(text: str, path=None, seed: int | None = None) -> RunConfig:
    """Validate INI ``text``; ``seed`` overrides ``[optimizer] seed``."""
    lines = _line_index(text)
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path) if path else "<config>")
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"cannot parse: {exc.message if hasattr(exc, 'message') else exc}",
                          path, line) from None

    def err_at(section, key=None):
        line = lines.get((section, key)) if key is not None else lines.get(section)
        return lambda msg: ConfigError(f"[{section}] {key + ': ' if key else ''}{msg}", path, line)

    known = {"system", "optimizer", "spin", "output"}
    for section in parser.sections():
        if section not in known:
            raise err_at(section)("unknown section")
    if not parser.has_section("system"):
        raise ConfigError("missing required section [system]", path, None)

    # [system]
    sys_sec = parser["system"]
    if "name" not in sys_sec:
        raise err_at("system")("missing required key 'name'")
    name = sys_sec["name"].strip()
    if name not in MODEL_PARAMETERS:
        raise err_at("system", "name")(f"unknown system {name!r}; expected one of {sorted(MODEL_PARAMETERS)}")
    params = {}
    for key in sys_sec:
        if key == "name":
            continue
        if key not in MODEL_PARAMETERS[name]:
            raise err_at("system", key)(f"unknown key for {name}")
        params[key] = _convert(sys_sec[key], float, err_at("system", key))
    for key in MODEL_PARAMETERS[name]:
        if key not in params:
            raise err_at("system")(f"missing required key {key!r}")

    # [optimizer]
    opt = dict(MODEL_DEFAULTS.get(name, {}))
    if parser.has_section("optimizer"):
        for key, raw in parser["optimizer"].items():
            if key not in _OPTIMIZER_TYPES:
                raise err_at("optimizer", key)("unknown key")
            if key in _OPTIONAL and raw.strip().lower() == "none":
                opt[key] = None
            else:
                opt[key] = _convert(raw, _OPTIMIZER_TYPES[key], err_at("optimizer", key))
    if seed is not None:
        opt["seed"] = int(seed)
    try:
        optimizer = OptimizerConfig(**opt)
    except ValueError as exc:
        bad = next((k for k in opt if k in str(exc)), None)
        raise err_at("optimizer", bad)(str(exc)) from None

    # [spin]
    spin = None
    if parser.has_section("spin"):
        values = {}
        for key, raw in parser["spin"].items():
            err = err_at("spin", key)
            if key not in _SPIN_KEYS:
                raise err("unknown key")
            if key == "fields":
                items = [s for s in raw.split(",") if s.strip()]
                if not items:
                    raise err("needs at least one field value")
                values[key] = tuple(_convert(s, float, err) for s in items)
            elif key == "hyperfine_convention":
                if raw.strip() not in HYPERFINE_CONVENTIONS:
                    raise err(f"expected one of {HYPERFINE_CONVENTIONS}")
                values[key] = raw.strip()
            else:
                values[key] = _convert(raw, float, err)
        spin = SpinSettings(**values)
        try:
            for b in spin.fields:
                spin.spin_config(b)
        except ValueError as exc:
            raise err_at("spin")(str(exc)) from None

    # [output]
    output_dir = Path(".")
    formats = FORMATS
    if parser.has_section("output"):
        for key, raw in parser["output"].items():
            err = err_at("output", key)
            if key not in _OUTPUT_KEYS:
                raise err("unknown key")
            if key == "dir":
                output_dir = Path(raw.strip())
            else:
                formats = tuple(s.strip() for s in raw.split(",") if s.strip())
                bad = [f for f in formats if f not in FORMATS]
                if bad or not formats:
                    raise err(f"formats must be a non-empty subset of {FORMATS}")

    return RunConfig(
        system=name, parameters=params, optimizer=optimizer, spin=spin,
        output_dir=output_dir, formats=formats,
        raw={s: dict(parser[s]) for s in parser.sections()},
    )


def load_config(path, seed: int | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    return parse_config(text, path, seed)
