"""Experiment configuration: YAML files with a strict schema.

Unknown keys are rejected and every error names the offending field, e.g.
``ce.elite_fraction: ...`` or ``terminals[2].energy_capacity: ...``.
Bundled configs (``paper_table1``, ``homogeneous_aoi``) can be loaded by
name instead of path.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Tuple

import yaml

from .ce import CeHyperparams
from .mac import MacConfig, Scenario
from .model import TerminalConfig, TerminalKind

MODES = ("train", "baseline", "compare")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PolicySettings:
    hidden_dim: int = 5
    norm: float = 10.0

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ValueError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        if not self.norm > 0:
            raise ValueError(f"norm must be positive, got {self.norm}")


@dataclass(frozen=True)
class BaselineSettings:
    p_const: Optional[float] = None  # None means 1/N
    long_run_slots: int = 1_000_000
    eval_episodes: int = 2000

    def __post_init__(self):
        if self.p_const is not None and not 0 < self.p_const <= 1:
            raise ValueError(f"p_const must be in (0, 1], got {self.p_const}")
        if self.long_run_slots < 1:
            raise ValueError("long_run_slots must be >= 1")
        if self.eval_episodes < 1:
            raise ValueError("eval_episodes must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario
    ce: CeHyperparams = field(default_factory=CeHyperparams)
    policy: PolicySettings = field(default_factory=PolicySettings)
    baseline: BaselineSettings = field(default_factory=BaselineSettings)
    seeds: Tuple[int, ...] = (1,)
    mode: str = "compare"
    output_dir: str = "results"
    workers: int = 1

    @property
    def p_const(self) -> float:
        if self.baseline.p_const is not None:
            return self.baseline.p_const
        return 1.0 / self.scenario.n_terminals

    @property
    def all_aoi(self) -> bool:
        return all(t.kind is TerminalKind.AOI for t in self.scenario.terminals)


_TYPES = {int: "an integer", float: "a number", bool: "a boolean", str: "a string"}


def _coerce(value, typ, path):
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected {_TYPES[float]}, got {value!r}")
        return float(value)
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected {_TYPES[int]}, got {value!r}")
        return value
    if not isinstance(value, typ):
        raise ConfigError(f"{path}: expected {_TYPES[typ]}, got {value!r}")
    return value


def _section(raw, path, schema, optional=()):
    """Validate a mapping against ``{key: type}`` and return coerced kwargs."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(raw).__name__}")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown field" if path else f"{unknown[0]}: unknown field")
    out = {}
    for key, value in raw.items():
        where = f"{path}.{key}" if path else key
        if value is None and key in optional:
            out[key] = None
            continue
        out[key] = _coerce(value, schema[key], where)
    return out


def _build(cls, kwargs, path):
    try:
        return cls(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        names = [f.name for f in dataclasses.fields(cls) if f.name in msg]
        name = min(names, key=msg.find, default=None)
        where = f"{path}.{name}" if name else path
        raise ConfigError(f"{where}: {msg}") from None


_TERMINAL = {"kind": str, "data_arrival_rate": float, "energy_arrival_rate": float,
             "energy_capacity": int, "weight": float}
_MAC = {"data_slot_ms": float, "mini_slot_ms": float, "mini_slot_count": int,
        "count_overhead_in_time": bool}
_CE = {"episode_length": int, "episodes_per_iteration": int, "elite_fraction": float,
       "initial_noise": float, "iterations": int, "init_mean": float, "init_variance": float,
       "eval_episodes": int}
_POLICY = {"hidden_dim": int, "norm": float}
_BASELINE = {"p_const": float, "long_run_slots": int, "eval_episodes": int}
_TOP = {"mode", "seeds", "output_dir", "workers", "terminals", "mac", "ce", "policy", "baseline"}


def config_from_dict(raw: Any) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a mapping")
    unknown = sorted(set(raw) - _TOP)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown field")

    terms_raw = raw.get("terminals")
    if not isinstance(terms_raw, list) or not terms_raw:
        raise ConfigError("terminals: expected a non-empty list of terminal mappings")
    terminals = []
    for i, t in enumerate(terms_raw):
        path = f"terminals[{i}]"
        kw = _section(t, path, _TERMINAL)
        if "kind" not in kw:
            raise ConfigError(f"{path}.kind: required field missing")
        try:
            kw["kind"] = TerminalKind.parse(kw["kind"])
        except ValueError as exc:
            raise ConfigError(f"{path}.kind: {exc}") from None
        terminals.append(_build(TerminalConfig, kw, path))
    mac = _build(MacConfig, _section(raw.get("mac"), "mac", _MAC), "mac")
    try:
        scenario = Scenario(tuple(terminals), mac)
    except ValueError as exc:
        raise ConfigError(f"terminals: {exc}") from None

    ce = _build(CeHyperparams, _section(raw.get("ce"), "ce", _CE), "ce")
    policy = _build(PolicySettings, _section(raw.get("policy"), "policy", _POLICY), "policy")
    baseline = _build(BaselineSettings,
                      _section(raw.get("baseline"), "baseline", _BASELINE, optional=("p_const",)),
                      "baseline")

    seeds = raw.get("seeds", [1])
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        seeds = [seeds]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds: expected a non-empty list of integers")
    for j, s in enumerate(seeds):
        _coerce(s, int, f"seeds[{j}]")
        if s < 0:
            raise ConfigError(f"seeds[{j}]: seeds must be nonnegative, got {s}")
    mode = _coerce(raw.get("mode", "compare"), str, "mode")
    if mode not in MODES:
        raise ConfigError(f"mode: expected one of {', '.join(MODES)}, got {mode!r}")
    output_dir = _coerce(raw.get("output_dir", "results"), str, "output_dir")
    workers = _coerce(raw.get("workers", 1), int, "workers")
    if workers < 1:
        raise ConfigError(f"workers: must be >= 1, got {workers}")
    return ExperimentConfig(scenario=scenario, ce=ce, policy=policy, baseline=baseline,
                            seeds=tuple(seeds), mode=mode, output_dir=output_dir, workers=workers)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    terminals = []
    for t in cfg.scenario.terminals:
        d = {"kind": t.kind.label, "data_arrival_rate": t.data_arrival_rate, "weight": t.weight}
        if t.kind is TerminalKind.IDT_EH:
            d["energy_arrival_rate"] = t.energy_arrival_rate
            d["energy_capacity"] = t.energy_capacity
        terminals.append(d)
    return {
        "mode": cfg.mode,
        "seeds": list(cfg.seeds),
        "output_dir": cfg.output_dir,
        "workers": cfg.workers,
        "terminals": terminals,
        "mac": dataclasses.asdict(cfg.scenario.mac),
        "ce": dataclasses.asdict(cfg.ce),
        "policy": dataclasses.asdict(cfg.policy),
        "baseline": dataclasses.asdict(cfg.baseline),
    }


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: not valid YAML: {exc}") from None
    return config_from_dict(raw)


def bundled_configs() -> list:
    root = resources.files("isda") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_config(path) -> ExperimentConfig:
    """Load a config file, or a bundled config by bare name."""
    p = Path(path)
    if not p.exists() and str(path) in bundled_configs():
        text = (resources.files("isda") / "configs" / f"{path}.yaml").read_text(encoding="utf-8")
        return parse_config(text, source=str(path))
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, source=str(path))
