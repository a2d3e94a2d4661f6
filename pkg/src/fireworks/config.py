"""Scenario configuration: YAML parsing, defaults, overrides and validation.

A scenario file has the sections ``grid``, ``kernels``, ``solver``, ``mc``
and ``output``.  Only ``grid.x_box``, ``grid.v_box``, ``grid.nx`` and
``grid.nv`` are required; every other field has a default (see
``DEFAULTS``).  Kernel entries are mappings with a ``kind`` key, an
optional ``normalization_mode`` and the family parameters.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import ConfigError
from .kernels import KernelFamily, KernelSet
from .phase_space import PhaseSpaceGrid
from .solver import MAPPINGS

DEFAULTS = {
    "name": "scenario",
    "grid": {"d": 1, "t_final": 1.0, "dt": None, "nt": 257,
             "boundary": "zero", "relativistic": False},
    "kernels": {
        "eta": {"kind": "constant", "value": 0.5},
        "gamma": {"kind": "constant", "value": 1.0},
        "p": {"kind": "constant"},
        "f0": {"kind": "separable-product", "x_width": 1.0, "v_width": 0.3},
    },
    "solver": {"mapping": "J_plus", "a": None, "tol": 1e-10, "max_iter": 200},
    "mc": {"n_particles": 100000, "seed": 2026, "dt": None, "n_checkpoints": 5,
           "checkpoints": None, "histogram": False},
    "output": {"dir": "runs/scenario", "snapshot_every": None, "snapshot_format": "csv"},
}
REQUIRED = ("grid.x_box", "grid.v_box", "grid.nx", "grid.nv")
SECTIONS = tuple(DEFAULTS)
SNAPSHOT_FORMATS = ("csv", "binary", "both")


@dataclass
class ScenarioConfig:
    """Validated scenario.  ``raw`` is the fully defaulted mapping."""

    raw: dict
    grid: PhaseSpaceGrid
    kernels: KernelSet
    source: str | None = None

    @property
    def name(self):
        return self.raw["name"]

    @property
    def solver(self):
        return self.raw["solver"]

    @property
    def mc(self):
        return self.raw["mc"]

    @property
    def output(self):
        return self.raw["output"]

    @property
    def snapshot_every(self):
        every = self.output["snapshot_every"]
        return math.ceil(self.grid.nt / 10) if every is None else int(every)

    def snapshot_indices(self):
        idx = list(range(0, self.grid.nt, self.snapshot_every))
        if idx[-1] != self.grid.nt - 1:
            idx.append(self.grid.nt - 1)
        return idx

    def mc_checkpoints(self):
        """Checkpoint times, snapped to grid nodes."""
        cps = self.mc["checkpoints"]
        g = self.grid
        if cps is None:
            n = int(self.mc["n_checkpoints"])
            return [float(g.times[round(k * (g.nt - 1) / n)]) for k in range(1, n + 1)]
        return [float(g.times[g.time_index(t)]) for t in cps]

    def snapshot(self):
        """Plain-data copy suitable for JSON."""
        return copy.deepcopy(self.raw)


# ---- loading ---------------------------------------------------------------


def _line_of(node, path):
    """1-based line of ``path`` inside a composed YAML node, if present."""
    line = None if node is None else node.start_mark.line + 1
    for key in path:
        if not isinstance(node, yaml.MappingNode):
            break
        for k, v in node.value:
            if k.value == key:
                node = v
                line = v.start_mark.line + 1
                break
        else:
            break
    return line


def _merge(base, upd, path=()):
    out = copy.deepcopy(base)
    for k, v in upd.items():
        if isinstance(out.get(k), dict) and isinstance(v, dict) and path + (k,) != ("kernels", k):
            out[k] = _merge(out[k], v, path + (k,))
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_override(raw, item):
    """Apply ``KEY=VALUE`` where KEY is a dotted path and VALUE is YAML."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not KEY=VALUE", field=item)
    key, value = item.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"bad override key {key!r}", field=key)
    try:
        parsed = yaml.safe_load(value)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override value for {key} is not valid YAML: {exc}", field=key) from None
    node = raw
    for p in parts[:-1]:
        if not isinstance(node.setdefault(p, {}), dict):
            raise ConfigError(f"override path {key} crosses a non-mapping", field=key)
        node = node[p]
    node[parts[-1]] = parsed
    return raw


def _kernel(entry, name, base_dir):
    if not isinstance(entry, dict) or "kind" not in entry:
        raise ConfigError("kernel entry must be a mapping with a 'kind'", field=f"kernels.{name}")
    params = {k: v for k, v in entry.items() if k not in ("kind", "normalization_mode")}
    if "path" in params and base_dir is not None:
        params["path"] = str((Path(base_dir) / params["path"]).resolve())
    try:
        return KernelFamily(entry["kind"], params, entry.get("normalization_mode", "analytic"))
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), field=f"kernels.{name}") from None


def _build(raw, base_dir):
    for sec in raw:
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section {sec!r}", field=sec)
    for req in REQUIRED:
        sec, key = req.split(".")
        if raw.get(sec, {}).get(key) is None:
            raise ConfigError(f"missing required field {req}", field=req)
    for sec in SECTIONS[1:]:
        if not isinstance(raw[sec], dict):
            raise ConfigError(f"section {sec} must be a mapping", field=sec)
        unknown = set(raw[sec]) - set(DEFAULTS[sec]) - {"x_box", "v_box", "nx", "nv"}
        if sec != "kernels" and unknown:
            raise ConfigError(f"unknown field {sorted(unknown)[0]!r}", field=f"{sec}.{sorted(unknown)[0]}")
    g = raw["grid"]
    try:
        kw = dict(boundary=g["boundary"], relativistic=bool(g["relativistic"]))
        if g["dt"] is not None:
            grid = PhaseSpaceGrid(g["d"], g["x_box"], g["v_box"], g["nx"], g["nv"],
                                  float(g["dt"]), g["nt"], **kw)
        else:
            grid = PhaseSpaceGrid.uniform(g["d"], g["x_box"], g["v_box"], g["nx"], g["nv"],
                                          float(g["t_final"]), g["nt"], **kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid grid: {exc}", field="grid") from None
    kernels = raw["kernels"]
    for k in kernels:
        if k not in DEFAULTS["kernels"]:
            raise ConfigError(f"unknown kernel {k!r}", field=f"kernels.{k}")
    ks = KernelSet(*(_kernel(kernels[n], n, base_dir) for n in ("eta", "gamma", "p", "f0")))
    s = raw["solver"]
    if s["mapping"] not in MAPPINGS:
        raise ConfigError(f"mapping must be one of {MAPPINGS}", field="solver.mapping")
    _positive(s, "tol", "solver")
    _positive(s, "max_iter", "solver")
    if s["a"] is not None:
        _positive(s, "a", "solver")
        floor = 2.0 if s["mapping"] == "J" else 1.0
        if s["a"] <= floor:
            raise ConfigError(f"{s['mapping']} contracts only for a > {floor:g}", field="solver.a")
    m = raw["mc"]
    _positive(m, "n_particles", "mc")
    if not isinstance(m["seed"], int) or not 0 <= m["seed"] < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer", field="mc.seed")
    if m["dt"] is not None:
        _positive(m, "dt", "mc")
    if raw["output"]["snapshot_format"] not in SNAPSHOT_FORMATS:
        raise ConfigError(f"snapshot_format must be one of {SNAPSHOT_FORMATS}",
                          field="output.snapshot_format")
    if raw["output"]["snapshot_every"] is not None:
        _positive(raw["output"], "snapshot_every", "output")
    return grid, ks


def _positive(sec, key, name):
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
        raise ConfigError(f"{name}.{key} must be a positive number, got {v!r}", field=f"{name}.{key}")


def load_config(path=None, text=None, overrides=(), seed=None, out=None):
    """Parse, default, override and validate a scenario.

    Either ``path`` or ``text`` is given.  ``seed`` and ``out`` replace
    ``mc.seed`` and ``output.dir``.  Raises :class:`ConfigError` carrying
    the offending field and, when it came from the file, its line.
    """
    base_dir = None
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        base_dir = Path(path).parent
    text = text or ""
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {exc}",
                          line=None if mark is None else mark.line + 1) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", line=1)
    raw = _merge(DEFAULTS, data)
    for item in overrides:
        apply_override(raw, item)
    if seed is not None:
        raw["mc"]["seed"] = int(seed)
    if out is not None:
        raw["output"]["dir"] = str(out)
    try:
        grid, ks = _build(raw, base_dir)
    except ConfigError as exc:
        if exc.line is None and exc.field and exc.field.split(".")[0] in data:
            line = _line_of(node, exc.field.split("."))
            if line is not None:
                raise ConfigError(exc.args[0].split("] ", 1)[-1], exc.field, line) from None
        raise
    return ScenarioConfig(raw, grid, ks, None if path is None else str(path))
