"""Experiment configuration: YAML with a closed schema and line-referenced errors."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


# (type, default); a type of ``list`` / ``dict`` is checked shallowly.
_NUM = (int, float)
SCHEMA: dict[str, dict[str, tuple]] = {
    "system": {
        "kind": (str, "cat"),
        "roof_base": (_NUM, 1.0),
        "roof_eps": (_NUM, 0.05),
        "psi_min": (_NUM, 0.5),
        "perturbation": (str, "benchmark"),
        "perturbation_scale": (_NUM, 1.0),
        "observable": (str, "benchmark"),
        "a": (_NUM, 0.0),
    },
    "estimator": {
        "T": (_NUM, 2000.0),
        "dt": (_NUM, 0.05),
        "warmup": (_NUM, 10.0),
        "n_orbits": (int, 100),
        "seeds": (list, [0]),
        "a_step": (_NUM, 0.02),
        "eps": (list, [0.2, 0.1]),
        "lag_T": (_NUM, 3.5),
        "n_samples": (int, 20000),
        "omega_re": (list, [-3.0, 3.0, 61]),
        "omega_eps": (_NUM, 0.1),
        "T_back": (_NUM, 20.0),
        "n_shadow": (int, 2000),
        "orbit_length": (_NUM, 500.0),
        "corr_T": (_NUM, 4.0),
        "stride": (int, 5),
        "schedule": (str, "constant"),
        "t0": (_NUM, 0.0),
        "t_eval": (_NUM, 5.0),
        "clv_T": (_NUM, 600.0),
        "clv_warmup": (_NUM, 200.0),
        "h": (_NUM, 1e-4),
    },
    "symbolic": {
        "tau": (list, [[1, 1], [1, 1]]),
        "memory": (int, 1),
        "psi": (list, [1.0, 1.0]),
        "phi": (list, [0.0, 0.0]),
        "psi_min": (_NUM, 1e-3),
        "strip": (list, [7.0, -0.5, 0.1]),
        "step": (_NUM, 1e-2),
        "newton_tol": (_NUM, 1e-10),
        "t_max": (_NUM, 5.0),
        "n_t": (int, 21),
        "n_samples": (int, 20000),
        "correlation": (str, "height_cos"),
    },
    "output": {
        "dir": (str, "results"),
        "formats": (list, ["json", "csv"]),
    },
    "acceptance": {
        "fd_orbits": (int, 200),
        "fd_T": (_NUM, 2.0e4),
        "fd_a": (_NUM, 0.02),
        "c_T_short": (_NUM, 5.0e3),
        "c_T_long": (_NUM, 2.0e4),
        "quick": (bool, False),
    },
}

KINDS = ("cat", "lorenz63")
PERTURBATIONS = ("benchmark", "flow", "zero", "vertical")
OBSERVABLES = ("benchmark", "constant", "cos_x1", "cos_x2", "height")
SCHEDULES = ("constant", "switch_off")
CORRELATIONS = ("height_cos", "symbol")


@dataclass
class ExperimentConfig:
    data: dict
    source: str = "<defaults>"

    def __getitem__(self, section: str) -> dict:
        return self.data[section]

    @property
    def hash(self) -> str:
        return config_hash(self.data)

    def seeds(self, offset: int = 0) -> list[int]:
        return [int(s) + offset for s in self.data["estimator"]["seeds"]]

    def with_overrides(self, **sections) -> "ExperimentConfig":
        d = copy.deepcopy(self.data)
        for sec, vals in sections.items():
            d[sec].update(vals)
        return ExperimentConfig(validate(d, self.source, None), self.source)


def config_hash(data: dict) -> str:
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def defaults() -> dict:
    return {sec: {k: copy.deepcopy(v[1]) for k, v in keys.items()} for sec, keys in SCHEMA.items()}


def _line_map(text: str) -> dict:
    """``(section, key) -> line`` from the YAML node tree (1-based)."""
    lines: dict = {}
    root = yaml.compose(text)
    if root is None:
        return lines
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError("top level must be a mapping", root.start_mark.line + 1)
    for knode, vnode in root.value:
        lines[(knode.value,)] = knode.start_mark.line + 1
        if isinstance(vnode, yaml.MappingNode):
            for k2, _ in vnode.value:
                lines[(knode.value, k2.value)] = k2.start_mark.line + 1
    return lines


def validate(raw: Any, source: str = "<config>", lines: dict | None = None) -> dict:
    lines = lines or {}
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping", 1, source)
    out = defaults()
    for sec, block in raw.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section '{sec}' (allowed: {', '.join(SCHEMA)})",
                              lines.get((sec,)), source)
        if block is None:
            continue
        if not isinstance(block, dict):
            raise ConfigError(f"section '{sec}' must be a mapping", lines.get((sec,)), source)
        for key, val in block.items():
            line = lines.get((sec, key), lines.get((sec,)))
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key '{key}' in section '{sec}'", line, source)
            typ = SCHEMA[sec][key][0]
            if typ is bool:
                ok = isinstance(val, bool)
            elif typ is int:
                ok = isinstance(val, int) and not isinstance(val, bool)
            elif typ == _NUM:
                ok = isinstance(val, _NUM) and not isinstance(val, bool)
            else:
                ok = isinstance(val, typ)
            if not ok:
                name = "number" if typ == _NUM else typ.__name__
                raise ConfigError(f"'{sec}.{key}' must be a {name}, got {val!r}", line, source)
            out[sec][key] = float(val) if typ == _NUM else val
    _check_semantics(out, lines, source)
    return out


def _check_semantics(cfg: dict, lines: dict, source: str) -> None:
    def fail(sec, key, msg):
        raise ConfigError(msg, lines.get((sec, key), lines.get((sec,))), source)

    s = cfg["system"]
    if s["kind"] not in KINDS:
        fail("system", "kind", f"system.kind must be one of {KINDS}")
    if s["perturbation"] not in PERTURBATIONS:
        fail("system", "perturbation", f"system.perturbation must be one of {PERTURBATIONS}")
    if s["observable"] not in OBSERVABLES:
        fail("system", "observable", f"system.observable must be one of {OBSERVABLES}")
    if s["psi_min"] < 0.5:
        fail("system", "psi_min", "system.psi_min must be >= 0.5")
    if s["roof_base"] - abs(s["roof_eps"]) < s["psi_min"]:
        fail("system", "roof_eps", f"roof minimum {s['roof_base'] - abs(s['roof_eps']):g} "
             f"is below psi_min={s['psi_min']:g}")
    e = cfg["estimator"]
    for key in ("T", "dt", "lag_T", "T_back", "orbit_length", "corr_T", "clv_T", "h", "a_step"):
        if e[key] <= 0:
            fail("estimator", key, f"estimator.{key} must be positive")
    if e["warmup"] < 0:
        fail("estimator", "warmup", "estimator.warmup must be non-negative")
    if any(not isinstance(x, _NUM) or x < 0 for x in e["eps"]) or not e["eps"]:
        fail("estimator", "eps", "estimator.eps must be a non-empty list of non-negative numbers")
    if any(not isinstance(x, int) for x in e["seeds"]) or not e["seeds"]:
        fail("estimator", "seeds", "estimator.seeds must be a non-empty list of integers")
    if len(e["omega_re"]) != 3:
        fail("estimator", "omega_re", "estimator.omega_re must be [start, stop, count]")
    if e["omega_eps"] <= 0:
        fail("estimator", "omega_eps", "estimator.omega_eps must be positive")
    if e["schedule"] not in SCHEDULES:
        fail("estimator", "schedule", f"estimator.schedule must be one of {SCHEDULES}")
    if e["t_eval"] < e["t0"]:
        fail("estimator", "t_eval", "estimator.t_eval must be >= t0")
    if e["n_orbits"] < 1:
        fail("estimator", "n_orbits", "estimator.n_orbits must be >= 1")
    y = cfg["symbolic"]
    tau = y["tau"]
    n = len(tau)
    if n == 0 or any(not isinstance(r, list) or len(r) != n for r in tau):
        fail("symbolic", "tau", "symbolic.tau must be a square list of rows")
    if any(v not in (0, 1) for r in tau for v in r):
        fail("symbolic", "tau", "symbolic.tau entries must be 0 or 1")
    if y["memory"] < 1:
        fail("symbolic", "memory", "symbolic.memory must be >= 1")
    if len(y["strip"]) != 3:
        fail("symbolic", "strip", "symbolic.strip must be [re_max, im_lo, im_hi]")
    if y["correlation"] not in CORRELATIONS:
        fail("symbolic", "correlation", f"symbolic.correlation must be one of {CORRELATIONS}")
    if any(not isinstance(v, _NUM) or v <= 0 for v in y["psi"]):
        fail("symbolic", "psi", "symbolic.psi entries must be positive numbers")


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig(validate({}), "<defaults>")
    path = Path(path)
    source = str(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", None, source) from exc
    try:
        lines = _line_map(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None, source) from exc
    return ExperimentConfig(validate(raw, source, lines), source)


def default_config_text() -> str:
    return yaml.safe_dump(defaults(), sort_keys=False)
