"""Declarative experiment configuration (YAML).

Every mapping in the file is checked against a dataclass schema; unknown
keys, wrong types and bad values are reported as ``path:line: message``
using the YAML node positions.
"""

from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .bandits import normalize_kind

EXPERIMENTS = ("synthetic-grid", "cir", "ais", "custom")
COMBINERS = ("uniform", "weighted", "both")


class ConfigError(ValueError):
    """Invalid configuration; ``str()`` carries the location."""


# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------


@dataclass
class CostSpec:
    kind: str = "unit"
    mean: float = 1.0
    p: float = 0.5
    sigma: float = 0.1


@dataclass
class ArmSpec:
    kind: str = "scaled-bernoulli"
    midpoint: float = 0.5
    scale: float = 0.5
    p: float = 0.5
    mean: float = 0.0
    variance: float = 1.0
    lower: float | None = None
    upper: float | None = None
    cost: CostSpec = field(default_factory=CostSpec)


@dataclass
class GridSection:
    scales: list[float] = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])


@dataclass
class CIRSection:
    strike: float = 0.06
    thetas: list[float] | None = None
    sigma: float = 0.02
    n_steps: int = 100
    twist: str = "brownian"
    pilot_samples: int = 100_000
    reference_samples: int = 1_000_000
    reward_halfwidth: float | None = None
    pmc: bool = False
    pmc_population: int = 100


@dataclass
class TargetSpec:
    kind: str = "gaussian-toy"
    dim: int = 1
    precision: float = 2.0
    prior_var: float = 1.0
    centers: list[float] | None = None
    weights: list[float] | None = None
    dataset: str | None = None
    synthetic_n: int = 100
    synthetic_dim: int = 8


@dataclass
class AISSection:
    n_anneal: list[int] = field(default_factory=lambda: [400, 2000, 8000])
    target: TargetSpec = field(default_factory=TargetSpec)
    slice_width: float = 1.0
    unit_cost: float = 1.0
    overhead: float = 0.0
    cost_sigma: float = 0.1
    wall_clock: bool = False
    d_max: float | None = None
    x_range: float | None = None
    pilot_pairs: int = 500
    reference_samples: int = 100_000


@dataclass
class CustomSection:
    arms: list[ArmSpec] = field(default_factory=list)
    mean: float | None = None
    d_max: float | None = None
    x_range: float | None = None


@dataclass
class ExperimentConfig:
    experiment: str = "custom"
    policies: list[str] = field(default_factory=lambda: ["UCB1", "UCB-V", "KL-UCB", "TS"])
    n: int | None = None
    budget: float | None = None
    replicates: int = 100
    checkpoints: list[float] | None = None
    seed: int = 0
    out: str = "results"
    combiner: str = "uniform"
    workers: int | None = None
    block_size: int = 250
    trace: bool = False
    grid: GridSection = field(default_factory=GridSection)
    cir: CIRSection = field(default_factory=CIRSection)
    ais: AISSection = field(default_factory=AISSection)
    custom: CustomSection = field(default_factory=CustomSection)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------


def _where(source: str, node) -> str:
    return f"{source}:{node.start_mark.line + 1}"


def _scalar(node, source: str):
    if not isinstance(node, yaml.ScalarNode):
        raise ConfigError(f"{_where(source, node)}: expected a single value")
    return yaml.safe_load(yaml.serialize(node))


def _convert(node, tp, source: str, name: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or origin is types.UnionType:
        inner = [a for a in args if a is not type(None)]
        if isinstance(node, yaml.ScalarNode) and node.tag.endswith(":null"):
            return None
        return _convert(node, inner[0], source, name)
    if dataclasses.is_dataclass(tp):
        return _build(node, tp, source, name)
    if origin is list:
        if not isinstance(node, yaml.SequenceNode):
            raise ConfigError(f"{_where(source, node)}: {name} must be a list")
        return [_convert(item, args[0], source, name) for item in node.value]
    value = _scalar(node, source)
    if tp is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if tp is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if tp is int and isinstance(value, float) and value.is_integer():
        return int(value)
    if tp is bool and isinstance(value, bool):
        return value
    if tp is str and isinstance(value, (str, int, float)) and not isinstance(value, bool):
        return str(value)
    raise ConfigError(f"{_where(source, node)}: {name} must be of type {tp.__name__}, got {value!r}")


def _build(node, cls, source: str, name: str):
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"{_where(source, node)}: {name} must be a mapping")
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for key_node, value_node in node.value:
        key = _scalar(key_node, source)
        if key not in hints:
            allowed = ", ".join(sorted(hints))
            raise ConfigError(f"{_where(source, key_node)}: unknown field {key!r} in {name} (allowed: {allowed})")
        if key in kwargs:
            raise ConfigError(f"{_where(source, key_node)}: duplicate field {key!r} in {name}")
        kwargs[key] = _convert(value_node, hints[key], source, key if name == "config" else f"{name}.{key}")
    return cls(**kwargs)


def _line_of(root, path: tuple[str, ...]) -> int | None:
    node = root
    for key in path:
        if not isinstance(node, yaml.MappingNode):
            return None
        for k, v in node.value:
            if k.value == key:
                node = v
                break
        else:
            return None
    return node.start_mark.line + 1


def validate(cfg: ExperimentConfig, source: str = "<config>", root=None) -> ExperimentConfig:
    """Semantic checks; messages point at the offending line when known."""

    def fail(path: tuple[str, ...], msg: str):
        line = _line_of(root, path) if root is not None else None
        raise ConfigError(f"{source}:{line}: {msg}" if line else f"{source}: {msg}")

    if cfg.experiment not in EXPERIMENTS:
        fail(("experiment",), f"experiment must be one of {', '.join(EXPERIMENTS)}, got {cfg.experiment!r}")
    if cfg.combiner not in COMBINERS:
        fail(("combiner",), f"combiner must be one of {', '.join(COMBINERS)}")
    if not cfg.policies:
        fail(("policies",), "at least one policy is required")
    for p in cfg.policies:
        low = p.lower()
        if normalize_kind(p) is None and low not in ("uniform", "round-robin") and not (low.startswith("arm") and low[3:].isdigit()):
            fail(("policies",), f"unknown policy {p!r}")
    if cfg.replicates < 2:
        fail(("replicates",), "replicates must be at least 2")
    if cfg.n is not None and cfg.n < 1:
        fail(("n",), "n must be positive")
    if cfg.budget is not None and not cfg.budget > 0:
        fail(("budget",), "budget must be positive")
    if cfg.workers is not None and cfg.workers < 1:
        fail(("workers",), "workers must be positive")
    if cfg.block_size < 1:
        fail(("block_size",), "block_size must be positive")
    if cfg.checkpoints is not None and (any(c <= 0 for c in cfg.checkpoints) or sorted(set(cfg.checkpoints)) != list(cfg.checkpoints)):
        fail(("checkpoints",), "checkpoints must be positive and strictly increasing")
    if cfg.experiment == "cir":
        if cfg.cir.strike not in (0.06, 0.07, 0.08):
            fail(("cir", "strike"), "strike must be one of 0.06, 0.07, 0.08")
        if cfg.cir.twist not in ("brownian", "per_step"):
            fail(("cir", "twist"), "twist must be brownian or per_step")
    if cfg.experiment == "ais":
        if any(n < 2 for n in cfg.ais.n_anneal):
            fail(("ais", "n_anneal"), "every n_anneal must be at least 2")
        if cfg.ais.target.kind not in ("gaussian-toy", "logistic"):
            fail(("ais", "target", "kind"), "target kind must be gaussian-toy or logistic")
    if cfg.experiment == "custom":
        if not cfg.custom.arms:
            fail(("custom", "arms"), "custom experiments need at least one arm")
        for arm in cfg.custom.arms:
            if arm.kind not in ("scaled-bernoulli", "gaussian", "constant"):
                fail(("custom", "arms"), f"unknown arm kind {arm.kind!r}")
    return cfg


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{source}{line}: malformed YAML ({getattr(exc, 'problem', exc)})") from None
    if root is None:
        return validate(ExperimentConfig(), source)
    cfg = _build(root, ExperimentConfig, source, "config")
    return validate(cfg, source, root)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config(text, str(path))
