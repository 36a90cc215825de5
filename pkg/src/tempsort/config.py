"""Run configuration: a YAML file with four sections, every key defaulted.

Example (all keys shown with their defaults)::

    dataset:
      path: null          # CSV file; when null the generator below is used
      class_count: null   # declared H for the CSV; null infers it from labels
    dgp:
      kind: basic         # basic | nonmarkovian | nonmonotonic | nonindependent
      n: 1000
      seed: 0
    model:
      kind: tpl           # tpl | mrnn
      gamma: [4]          # scalar or list; lists are searched on validation
      tau: [0.5, 0.8, 0.95]
      c: [0.01, 0.1, 1.0]
      solver: dual        # dual | primal
      tol: 1.0e-3
      max_iter: 2000
      pair_cap: 20000
      hidden_size: 16
      q_hidden: 8
      epochs: 200
      learning_rate: 0.01
      momentum: 0.9
      batch_size: 32
      validation_patience: 20
      grad_clip: 10.0
      mode: strict        # strict | relaxed
    eval:
      k: 5
      seed: 0
      beta: 1.0
      ratios: [0.6, 0.2, 0.2]
      jobs: 1
    output:
      dir: out
      plots: true

Unknown sections or keys are rejected.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import yaml

from .errors import ConfigError


@dataclass(frozen=True)
class DatasetSection:
    path: Optional[str] = None
    class_count: Optional[int] = None


@dataclass(frozen=True)
class DgpSection:
    kind: str = "basic"
    n: int = 1000
    seed: int = 0


@dataclass(frozen=True)
class ModelSection:
    kind: str = "tpl"
    gamma: tuple = (4,)
    tau: tuple = (0.5, 0.8, 0.95)
    c: tuple = (0.01, 0.1, 1.0)
    solver: str = "dual"
    tol: float = 1e-3
    max_iter: int = 2000
    pair_cap: int = 20000
    hidden_size: int = 16
    q_hidden: int = 8
    epochs: int = 200
    learning_rate: float = 1e-2
    momentum: float = 0.9
    batch_size: int = 32
    validation_patience: int = 20
    grad_clip: float = 10.0
    mode: str = "strict"


@dataclass(frozen=True)
class EvalSection:
    k: int = 5
    seed: int = 0
    beta: float = 1.0
    ratios: tuple = (0.6, 0.2, 0.2)
    jobs: int = 1


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"
    plots: bool = True


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    dgp: DgpSection = field(default_factory=DgpSection)
    model: ModelSection = field(default_factory=ModelSection)
    eval: EvalSection = field(default_factory=EvalSection)
    output: OutputSection = field(default_factory=OutputSection)

    def to_dict(self) -> dict:
        data = asdict(self)
        for sec in data.values():
            for k, v in sec.items():
                if isinstance(v, tuple):
                    sec[k] = list(v)
        return data

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, dgp=replace(self.dgp, seed=seed), eval=replace(self.eval, seed=seed))


_LIST_KEYS = {"gamma": int, "tau": float, "c": float, "ratios": float}
_CHOICES = {
    ("model", "kind"): ("tpl", "mrnn"),
    ("model", "solver"): ("dual", "primal"),
    ("model", "mode"): ("strict", "relaxed"),
    ("dgp", "kind"): ("basic", "nonmarkovian", "nonmonotonic", "nonindependent"),
}


def _coerce(section: str, key: str, value, default):
    if key in _LIST_KEYS:
        items = value if isinstance(value, (list, tuple)) else [value]
        if not items:
            raise ConfigError(f"{section}.{key} must not be empty")
        try:
            return tuple(_LIST_KEYS[key](x) for x in items)
        except (TypeError, ValueError):
            raise ConfigError(f"{section}.{key} has a non-numeric entry: {value!r}") from None
    if value is None:
        return None
    kind = type(default) if default is not None else (int if key == "class_count" else str)
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{key} must be true or false")
        return value
    if kind is int and isinstance(value, float) and not value.is_integer():
        raise ConfigError(f"{section}.{key} must be an integer, got {value!r}")
    try:
        value = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key} must be {kind.__name__}, got {value!r}") from None
    choices = _CHOICES.get((section, key))
    if choices and value not in choices:
        raise ConfigError(f"{section}.{key} must be one of {choices}, got {value!r}")
    return value


def from_dict(data: Optional[dict]) -> RunConfig:
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of sections")
    sections = {f.name: f.default_factory for f in fields(RunConfig)}
    unknown = set(data) - set(sections)
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    built = {}
    for name, factory in sections.items():
        default = factory()
        raw = data.get(name) or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"section {name!r} must be a mapping")
        known = {f.name for f in fields(default)}
        bad = set(raw) - known
        if bad:
            raise ConfigError(f"unknown key(s) in {name}: {sorted(bad)}")
        values = {k: _coerce(name, k, v, getattr(default, k)) for k, v in raw.items()}
        built[name] = replace(default, **values)
    return RunConfig(**built)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return from_dict(data)
