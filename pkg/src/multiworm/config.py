"""Run configuration: TOML text -> fully resolved RunConfig.

Every accepted key is listed in ``SCHEMA`` with its type and default; any
other key is an error.  ``None`` defaults mean "derived from the model"
(see :meth:`UpdateParams.resolved`).
"""
from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .engine import ANY_SPECIES, UpdateParams
from .model import LatticeError, LatticeGraph, ModelParams, build_layered_lattice


class ConfigError(ValueError):
    pass


_NUM = (int, float)

# section -> key -> (accepted types, default, description)
SCHEMA: Dict[str, Dict[str, Tuple[tuple, Any, str]]] = {
    "model": {
        "n_layers": ((int,), 1, "number of chains M"),
        "sites_per_layer": ((int,), None, "sites per chain L (required)"),
        "pbc_intra": ((bool,), True, "periodic chains"),
        "pbc_inter": ((bool,), True, "periodic stacking (ring of layers)"),
        "J_intra": (_NUM, 1.0, "in-chain hopping J"),
        "J_inter": (_NUM, 0.0, "inter-layer hopping J'"),
        "V_inter": (_NUM, 0.0, "inter-layer attraction V"),
        "U_onsite": (_NUM, 0.0, "on-site repulsion (soft core only)"),
        "mu": (_NUM + (list,), 0.0, "chemical potential, scalar or one per layer"),
        "n_max": ((int,), 1, "occupation cap, 1 = hard core"),
        "beta": (_NUM, None, "inverse temperature (required)"),
    },
    "engine": {
        "gamma": (_NUM, 1.0, "worm source strength"),
        "xi_space": (_NUM + (str,), 2.0, "tether length in sites, \"inf\" disables"),
        "xi_time": (_NUM + (str,), None, "tether length in time, default 2/J"),
        "max_shift_window": (_NUM, None, "time window of shift and kink moves, default beta/4"),
        "update_weights": ((dict,), None, "{worm, shift, kink} probabilities in G"),
        "worm_spec": ((list,), None, "[[species, count], ...]; species \"any\" or a layer"),
        "worm_length": (_NUM, 1.0, "mean proposed worm length"),
        "steps_per_sweep": ((int,), None, "default ceil(M L beta J)"),
        "time_grid": ((int,), None, "discrete-time audit grid, unset = continuous"),
        "max_kinks": ((int,), None, "audit-only kink cap"),
        "backend": ((str,), "compiled", "\"compiled\" kernel or \"python\" reference"),
        "initial_filling": (_NUM, 0.0, "starting filling per layer, particles stacked in columns"),
    },
    "schedule": {
        "therm_sweeps": ((int,), 1000, "sweeps discarded per chain"),
        "measure_sweeps": ((int,), 10000, "measurements per chain"),
        "measure_every": ((int,), 1, "sweeps between measurements"),
        "n_chains": ((int,), 1, "independent chains"),
        "seed": ((int,), 0, "root seed, spawned per chain"),
    },
    "output": {
        "directory": ((str,), "run", "output directory"),
        "formats": ((list,), ["summary", "histograms"], "any of summary, histograms, stream"),
        "checkpoint_every": ((int,), 0, "measurement sweeps between checkpoints, 0 = end only"),
        "block_rows": ((int,), 1000, "rows per histogram block"),
        "histograms": ((list,), None, "projections; default chosen from worm_spec"),
        "gate": ((int,), None, "keep only Z rows with this particle number"),
    },
}

FORMATS = ("summary", "histograms", "stream")
HISTOGRAMS = ("end_sites", "head_separation", "tail_separation", "f1f2")


@dataclass(frozen=True)
class RunConfig:
    model: Dict[str, Any]
    engine: Dict[str, Any]
    schedule: Dict[str, Any]
    output: Dict[str, Any]

    # -- derived objects
    def graph(self) -> LatticeGraph:
        m = self.model
        return build_layered_lattice(m["n_layers"], m["sites_per_layer"], m["pbc_intra"],
                                     m["pbc_inter"])

    def model_params(self) -> ModelParams:
        m = self.model
        mu = tuple(m["mu"]) if isinstance(m["mu"], list) else m["mu"]
        return ModelParams(J_intra=m["J_intra"], J_inter=m["J_inter"], V_inter=m["V_inter"],
                           U_onsite=m["U_onsite"], mu=mu, n_max=m["n_max"], beta=m["beta"])

    def update_params(self) -> UpdateParams:
        e = self.engine
        kw = dict(gamma=e["gamma"], xi_space=_as_length(e["xi_space"]),
                  xi_time=None if e["xi_time"] is None else _as_length(e["xi_time"]),
                  max_shift_window=e["max_shift_window"],
                  worm_spec=tuple(tuple(x) for x in e["worm_spec"]),
                  worm_length=e["worm_length"], steps_per_sweep=e["steps_per_sweep"],
                  time_grid=e["time_grid"], max_kinks=e["max_kinks"])
        if e["update_weights"] is not None:
            kw["update_weights"] = e["update_weights"]
        return UpdateParams(**kw)

    def initial_occupation(self) -> List[int]:
        """Evenly spaced columns, the same ones in every layer."""
        m = self.model
        L, M = m["sites_per_layer"], m["n_layers"]
        k = int(round(self.engine["initial_filling"] * L))
        cols = {int(j * L // k) for j in range(k)} if k else set()
        return [1 if s % L in cols else 0 for s in range(M * L)]

    @property
    def n_worms(self) -> int:
        return sum(n for _, n in self.engine["worm_spec"])

    def as_dict(self) -> Dict[str, Dict[str, Any]]:
        return {"model": dict(self.model), "engine": dict(self.engine),
                "schedule": dict(self.schedule), "output": dict(self.output)}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=1)

    def replace(self, section: str, **changes) -> "RunConfig":
        d = self.as_dict()
        d[section].update(changes)
        return resolve(d)


def _as_length(x) -> float:
    if isinstance(x, str):
        if x.lower() in ("inf", "infinity"):
            return math.inf
        raise ConfigError(f"length {x!r}: expected a number or \"inf\"")
    return float(x)


def _parse_species(value, where: str) -> int:
    if isinstance(value, str):
        if value.lower() == "any":
            return ANY_SPECIES
        raise ConfigError(f"{where}: species {value!r} is neither \"any\" nor a layer index")
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: species must be \"any\" or an integer layer")
    return value


def _worm_spec(raw, where: str) -> List[List[int]]:
    out = []
    for k, item in enumerate(raw):
        w = f"{where}[{k}]"
        if isinstance(item, dict):
            extra = set(item) - {"species", "count"}
            if extra:
                raise ConfigError(f"{w}: unknown key(s) {sorted(extra)}")
            species, count = item.get("species", "any"), item.get("count", 1)
        elif isinstance(item, list) and len(item) == 2:
            species, count = item
        else:
            raise ConfigError(f"{w}: expected [species, count] or {{species, count}}")
        if isinstance(count, bool) or not isinstance(count, int) or count < 0:
            raise ConfigError(f"{w}: count must be a non-negative integer")
        out.append([_parse_species(species, w), count])
    return out


def _check_type(section: str, key: str, value):
    types = SCHEMA[section][key][0]
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(f"[{section}] {key}: expected {_type_names(types)}, got a boolean")
    if not isinstance(value, types):
        raise ConfigError(f"[{section}] {key}: expected {_type_names(types)}, "
                          f"got {type(value).__name__} {value!r}")


def _type_names(types) -> str:
    return " or ".join(sorted({t.__name__ for t in types}))


def resolve(raw: Dict[str, Any]) -> RunConfig:
    """Apply defaults, type checks and cross-field constraints to a parsed mapping."""
    unknown = set(raw) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown section(s) {sorted(unknown)}; "
                          f"expected {sorted(SCHEMA)}")
    out: Dict[str, Dict[str, Any]] = {}
    for section, keys in SCHEMA.items():
        given = raw.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"[{section}] must be a table")
        bad = set(given) - set(keys)
        if bad:
            raise ConfigError(f"[{section}] unknown key(s) {sorted(bad)}; "
                              f"valid keys: {', '.join(sorted(keys))}")
        block = {}
        for key, (_, default, _) in keys.items():
            if key in given and given[key] is not None:
                _check_type(section, key, given[key])
                value = given[key]
            else:
                value = default
            if isinstance(value, int) and not isinstance(value, bool) \
                    and float in keys[key][0] and int in keys[key][0]:
                value = float(value)
            block[key] = value
        out[section] = block
    m, e, s, o = out["model"], out["engine"], out["schedule"], out["output"]
    for key in ("sites_per_layer", "beta"):
        if m[key] is None:
            raise ConfigError(f"[model] {key} is required")
    if isinstance(m["mu"], list):
        if len(m["mu"]) != m["n_layers"] or not all(
                isinstance(x, _NUM) and not isinstance(x, bool) for x in m["mu"]):
            raise ConfigError(f"[model] mu: need {m['n_layers']} numbers, one per layer")
        m["mu"] = [float(x) for x in m["mu"]]
    e["worm_spec"] = _worm_spec(e["worm_spec"] if e["worm_spec"] is not None
                                else [["any", 1]], "[engine] worm_spec")
    if not 0.0 <= e["initial_filling"] <= 1.0:
        raise ConfigError("[engine] initial_filling must lie in [0, 1]")
    if e["backend"] not in ("compiled", "python"):
        raise ConfigError(f"[engine] backend: {e['backend']!r} is not compiled or python")
    for key in ("therm_sweeps", "measure_sweeps", "checkpoint_every"):
        blk = s if key in s else o
        if blk[key] < 0:
            raise ConfigError(f"{key} must be non-negative")
    if s["measure_every"] < 1 or s["n_chains"] < 1:
        raise ConfigError("[schedule] measure_every and n_chains must be at least 1")
    if not 0 <= s["seed"] < 2 ** 64:
        raise ConfigError("[schedule] seed must be an unsigned 64-bit integer")
    if o["block_rows"] < 1:
        raise ConfigError("[output] block_rows must be positive")
    bad = set(o["formats"]) - set(FORMATS)
    if bad:
        raise ConfigError(f"[output] formats: unknown {sorted(bad)}; valid: {list(FORMATS)}")
    if o["histograms"] is None:
        o["histograms"] = default_histograms(m, e["worm_spec"])
    bad = set(o["histograms"]) - set(HISTOGRAMS)
    if bad:
        raise ConfigError(f"[output] histograms: unknown {sorted(bad)}; "
                          f"valid: {list(HISTOGRAMS)}")
    cfg = RunConfig(m, e, s, o)
    try:
        graph = cfg.graph()
        model = cfg.model_params()
        params = cfg.update_params()
        # layer-locked worms and tables are checked by building a chain's setup
        from .engine import ChainState
        ChainState(graph, model, params, seed=0)
    except (LatticeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return cfg


def default_histograms(model: Dict[str, Any], worm_spec) -> List[str]:
    n = sum(c for _, c in worm_spec)
    size = model["n_layers"] * model["sites_per_layer"]
    out = []
    if size ** (2 * n) <= 4096:
        out.append("end_sites")
    if n >= 2:
        out += ["head_separation", "tail_separation"]
    if n == 3 and all(a != ANY_SPECIES for a, _ in worm_spec):
        out.append("f1f2")
    return out


def parse_config(text: str) -> RunConfig:
    """Parse TOML text; errors carry the line or key that caused them."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config syntax: {exc}") from exc
    return resolve(raw)


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return parse_config(text)


def defaults_table() -> str:
    """Markdown table of every key, its default and meaning."""
    rows = ["| key | default | meaning |", "| --- | --- | --- |"]
    for section, keys in SCHEMA.items():
        for key, (_, default, doc) in keys.items():
            shown = "derived" if default is None else json.dumps(default)
            rows.append(f"| {section}.{key} | {shown} | {doc} |")
    return "\n".join(rows)


def to_toml(cfg: RunConfig) -> str:
    """Minimal TOML writer for resolved configs (tables, scalars, flat lists)."""
    lines = []
    for section, block in cfg.as_dict().items():
        lines.append(f"[{section}]")
        for key, value in block.items():
            if value is None:
                continue
            if section == "engine" and key == "worm_spec":
                items = ", ".join(
                    f"[{json.dumps('any') if a == ANY_SPECIES else a}, {n}]" for a, n in value)
                lines.append(f"{key} = [{items}]")
            elif isinstance(value, dict):
                inner = ", ".join(f"{k} = {_toml_scalar(v)}" for k, v in value.items())
                lines.append(f"{key} = {{ {inner} }}")
            else:
                lines.append(f"{key} = {_toml_scalar(value)}")
        lines.append("")
    return "\n".join(lines)


def _toml_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isinf(v):
            return '"inf"'
        return repr(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_scalar(x) for x in v) + "]"
    if isinstance(v, str):
        return json.dumps(v)
    return str(v)
