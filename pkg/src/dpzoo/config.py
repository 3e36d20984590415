"""Experiment configuration: strict nested JSON with exact round-trips.

Every section is a dataclass; unknown keys anywhere are rejected. Floats are
written with ``repr`` (via the json module) so a load/dump cycle reproduces
the same file byte for byte. Infinite epsilon and lambda are spelled ``"inf"``.
"""

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from .bench import (make_blobs, make_lipschitz_norm, make_quadratic, make_tiny_mlp,
                    make_weakly_convex_logistic, read_dataset_csv)
from .errors import ConfigError
from .estimator import ZOScale
from .privacy import PrivacySpec
from .pruning import MATRIX_TYPES, PruningConfig
from .stagewise import REG_MODES, StageSchedule

OBJECTIVES = {
    "quadratic": {"d": 10, "cond": 10.0},
    "lipschitz_norm": {"d": 20, "L": 1.0},
    "weakly_convex_logistic": {"d": 20, "n": 512, "rho": 0.1, "margin": 8.0},
    "tiny_mlp": {"layers": [4, 8, 3], "activation": "tanh", "n": 256},
}
DATA_OBJECTIVES = ("weakly_convex_logistic", "tiny_mlp")


def _encode_float(x):
    return "inf" if x == math.inf else x


def _decode_float(x, name):
    if x == "inf":
        return math.inf
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{name}: expected a number or \"inf\", got {x!r}")
    return float(x)


def _number(x, name):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {x!r}")
    return float(x)


def _integer(x, name):
    if isinstance(x, bool) or not isinstance(x, int):
        raise ConfigError(f"{name}: expected an integer, got {x!r}")
    return x


def _boolean(x, name):
    if not isinstance(x, bool):
        raise ConfigError(f"{name}: expected true/false, got {x!r}")
    return x


def _check_keys(section, raw, allowed):
    if not isinstance(raw, dict):
        raise ConfigError(f"{section}: expected an object")
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"{section}: unknown field(s) {', '.join(unknown)}")


@dataclass
class ObjectiveConfig:
    name: str = "weakly_convex_logistic"
    params: dict = field(default_factory=lambda: dict(OBJECTIVES["weakly_convex_logistic"]))
    data_csv: Optional[str] = None

    @classmethod
    def from_dict(cls, raw):
        _check_keys("objective", raw, ("name", "params", "data_csv"))
        name = raw.get("name", cls.name)
        if name not in OBJECTIVES:
            raise ConfigError(f"objective.name must be one of {sorted(OBJECTIVES)}")
        params = dict(OBJECTIVES[name])
        given = raw.get("params", {})
        _check_keys(f"objective.params ({name})", given, OBJECTIVES[name])
        params.update(given)
        data_csv = raw.get("data_csv")
        if data_csv is not None and not isinstance(data_csv, str):
            raise ConfigError("objective.data_csv must be a path string or null")
        if data_csv is not None and name not in DATA_OBJECTIVES:
            raise ConfigError(f"objective {name} does not read a dataset")
        return cls(name, params, data_csv)


@dataclass
class ScheduleConfig:
    beta0: float = 1e-3
    beta_end: Optional[float] = 1e-2
    k: Optional[float] = None
    eta0: float = 0.04
    T0: int = 429
    lam: float = math.inf
    S: int = 3
    average: bool = False

    @classmethod
    def from_dict(cls, raw):
        keys = ("beta0", "beta_end", "k", "eta0", "T0", "lambda", "S", "average")
        _check_keys("schedule", raw, keys)
        out = cls()
        if "beta0" in raw:
            out.beta0 = _number(raw["beta0"], "schedule.beta0")
        if raw.get("k") is not None:
            out.k = _number(raw["k"], "schedule.k")
            out.beta_end = None
        if "beta_end" in raw:
            out.beta_end = (None if raw["beta_end"] is None
                            else _number(raw["beta_end"], "schedule.beta_end"))
        if out.beta_end is not None and out.k is not None:
            raise ConfigError("schedule: give beta_end or k, not both")
        if "eta0" in raw:
            out.eta0 = _number(raw["eta0"], "schedule.eta0")
        if "T0" in raw:
            out.T0 = _integer(raw["T0"], "schedule.T0")
        if "lambda" in raw:
            out.lam = _decode_float(raw["lambda"], "schedule.lambda")
        if "S" in raw:
            out.S = _integer(raw["S"], "schedule.S")
        if "average" in raw:
            out.average = _boolean(raw["average"], "schedule.average")
        return out

    def to_dict(self):
        return {"beta0": self.beta0, "beta_end": self.beta_end, "k": self.k, "eta0": self.eta0,
                "T0": self.T0, "lambda": _encode_float(self.lam), "S": self.S,
                "average": self.average}

    def build(self):
        try:
            if self.beta_end is not None:
                scale = ZOScale.from_range(self.beta0, self.beta_end, self.S)
            else:
                scale = ZOScale(self.beta0, 1.0 if self.k is None else self.k)
            return StageSchedule(self.lam, self.S, self.T0, self.eta0, scale)
        except ValueError as exc:
            raise ConfigError(f"schedule: {exc}") from exc


@dataclass
class PrivacyConfig:
    epsilon: float = math.inf
    delta: float = 1.0 / 1024
    C: float = 5.0
    c1: float = 1.0
    c2: float = 1.0
    sensitivity: float = 1.0
    route: str = "theorem1"

    @classmethod
    def from_dict(cls, raw):
        _check_keys("privacy", raw, [f.name for f in fields(cls)])
        out = cls()
        if "epsilon" in raw:
            out.epsilon = _decode_float(raw["epsilon"], "privacy.epsilon")
        for name in ("delta", "C", "c1", "c2", "sensitivity"):
            if name in raw:
                setattr(out, name, _number(raw[name], f"privacy.{name}"))
        if "route" in raw:
            if raw["route"] not in ("theorem1", "ma"):
                raise ConfigError("privacy.route must be \"theorem1\" or \"ma\"")
            out.route = raw["route"]
        return out

    def to_dict(self):
        d = asdict(self)
        d["epsilon"] = _encode_float(self.epsilon)
        return d

    def build(self):
        try:
            return PrivacySpec(self.epsilon, self.delta, self.C, self.c1, self.c2,
                               self.sensitivity)
        except ValueError as exc:
            raise ConfigError(f"privacy: {exc}") from exc


@dataclass
class EstimatorConfig:
    P: int = 1
    m: int = 16
    workers: int = 1

    @classmethod
    def from_dict(cls, raw):
        _check_keys("estimator", raw, ("P", "m", "workers"))
        out = cls()
        for name in ("P", "m", "workers"):
            if name in raw:
                value = _integer(raw[name], f"estimator.{name}")
                if value < 1:
                    raise ConfigError(f"estimator.{name} must be >= 1")
                setattr(out, name, value)
        return out


@dataclass
class PruningSection:
    enabled: bool = False
    r: float = 1.0
    type: str = "pruning-only"
    A: float = 1.0
    B: float = 1.0
    P_prune: int = 1000
    beta_prune: float = 1e-3

    @classmethod
    def from_dict(cls, raw):
        _check_keys("pruning", raw, [f.name for f in fields(cls)])
        out = cls()
        if "enabled" in raw:
            out.enabled = _boolean(raw["enabled"], "pruning.enabled")
        for name in ("r", "A", "B", "beta_prune"):
            if name in raw:
                setattr(out, name, _number(raw[name], f"pruning.{name}"))
        if "P_prune" in raw:
            out.P_prune = _integer(raw["P_prune"], "pruning.P_prune")
        if "type" in raw:
            if raw["type"] not in MATRIX_TYPES:
                raise ConfigError(f"pruning.type must be one of {MATRIX_TYPES}")
            out.type = raw["type"]
        return out

    def build(self):
        try:
            return PruningConfig(self.r, self.type, self.A, self.B, self.P_prune, self.beta_prune)
        except ValueError as exc:
            raise ConfigError(f"pruning: {exc}") from exc


@dataclass
class ExperimentConfig:
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    privacy: PrivacyConfig = field(default_factory=PrivacyConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    pruning: PruningSection = field(default_factory=PruningSection)
    reg_mode: str = "directional"
    seed: int = 0

    @classmethod
    def from_dict(cls, raw):
        _check_keys("config", raw, ("objective", "schedule", "privacy", "estimator", "pruning",
                                    "reg_mode", "seed"))
        out = cls(
            objective=ObjectiveConfig.from_dict(raw.get("objective", {})),
            schedule=ScheduleConfig.from_dict(raw.get("schedule", {})),
            privacy=PrivacyConfig.from_dict(raw.get("privacy", {})),
            estimator=EstimatorConfig.from_dict(raw.get("estimator", {})),
            pruning=PruningSection.from_dict(raw.get("pruning", {})),
        )
        if "reg_mode" in raw:
            if raw["reg_mode"] not in REG_MODES:
                raise ConfigError(f"reg_mode must be one of {REG_MODES}")
            out.reg_mode = raw["reg_mode"]
        if "seed" in raw:
            out.seed = _integer(raw["seed"], "seed")
            if not 0 <= out.seed < 2 ** 64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
        return out

    def to_dict(self):
        return {
            "objective": asdict(self.objective),
            "schedule": self.schedule.to_dict(),
            "privacy": self.privacy.to_dict(),
            "estimator": asdict(self.estimator),
            "pruning": asdict(self.pruning),
            "reg_mode": self.reg_mode,
            "seed": self.seed,
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def loads(cls, text):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.loads(text)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())


def build_objective(cfg):
    """``(BenchObjective, Dataset or None)`` for the configured objective."""
    obj_cfg = cfg.objective
    p = obj_cfg.params
    seed = cfg.seed
    try:
        if obj_cfg.name == "quadratic":
            return make_quadratic(int(p["d"]), float(p["cond"]), seed), None
        if obj_cfg.name == "lipschitz_norm":
            return make_lipschitz_norm(int(p["d"]), float(p["L"]), seed), None
        if obj_cfg.name == "weakly_convex_logistic":
            obj, data = make_weakly_convex_logistic(int(p["d"]), int(p["n"]), float(p["rho"]),
                                                    seed, margin=float(p["margin"]))
        else:
            layers = [int(v) for v in p["layers"]]
            obj, _ = make_tiny_mlp(layers, p["activation"], seed)
            data = make_blobs(int(p["n"]), layers[0], layers[-1], seed)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"objective {obj_cfg.name}: {exc}") from exc
    if obj_cfg.data_csv is not None:
        try:
            data = read_dataset_csv(obj_cfg.data_csv)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read dataset {obj_cfg.data_csv}: {exc}") from exc
        if data.dim != (obj.shape.layers[0][0]):
            raise ConfigError(f"dataset has {data.dim} features, objective expects "
                              f"{obj.shape.layers[0][0]}")
    return obj, data
