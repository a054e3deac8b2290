"""Run configuration: a YAML file with a model, a policy and per-command blocks.

Grids are either explicit lists or ``{start, stop, num}`` (inclusive
linspace). Every block has defaults, so an empty file is a valid config;
``seed`` has none and must be given for the stochastic commands.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError, DomainError
from .model import ControlPolicy, ModelParams, PolicyKind

STOCHASTIC = {"traj", "hist"}

DEFAULT_BLOCKS = {
    "steady": {},
    "survival": {"t_grid": {"start": 0.0, "stop": 20.0, "num": 401}},
    "occupations": {"t_grid": {"start": 0.0, "stop": 20.0, "num": 401}},
    "scgf": {"s_grid": {"start": -0.5, "stop": 2.0, "num": 241}},
    "gx": {"x_grid": {"start": -0.02, "stop": 2.0, "num": 203}},
    "rate": {"k_grid": {"start": 0.05, "stop": 1.0, "num": 96}, "s_bounds": [-0.5, 2.0]},
    "traj": {"n_traj": 10, "t_max": 100.0, "bin_width": 0.5, "micro_step": 1e-3, "start": "reset"},
    "hist": {"n_traj": 5000, "t_max": 2000.0, "micro_step": 1e-3, "start": "reset"},
    "hybrid": {"s_grid": [-0.1, 0.2, 0.5], "dt_divisors": [16, 32, 64]},
    "sweep_dt": {"delta_t_list": [1.0, 2.0, 3.0, 4.0, 5.0]},
}
GRID_KEYS = {"t_grid", "s_grid", "x_grid", "k_grid", "delta_t_list", "dt_divisors"}
TOP_KEYS = {"model", "policy", "seed", "threads"} | set(DEFAULT_BLOCKS)
UNITARY_NAMES = {None, "identity"}


def _grid(spec, where):
    if isinstance(spec, dict):
        extra = set(spec) - {"start", "stop", "num"}
        if extra or len(spec) != 3:
            raise ConfigError(f"{where}: a range grid needs exactly start, stop, num")
        try:
            values = np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
    elif isinstance(spec, (list, tuple)):
        try:
            values = np.array([float(v) for v in spec])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
    else:
        raise ConfigError(f"{where}: expected a list or a {{start, stop, num}} mapping")
    if values.size == 0:
        raise ConfigError(f"{where}: grid is empty")
    if not np.all(np.isfinite(values)):
        raise ConfigError(f"{where}: grid values must be finite")
    if np.any(np.diff(values) <= 0):
        raise ConfigError(f"{where}: grid must be strictly increasing")
    return values


def _merge(defaults, given, where):
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ConfigError(f"{where}: expected a mapping")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    out = copy.deepcopy(defaults)
    out.update(copy.deepcopy(given))
    return out


@dataclass
class RunConfig:
    model: dict = field(default_factory=lambda: {"omega01": 1.0, "omega02": 0.1, "gamma": 4.0})
    policy: dict = field(default_factory=lambda: {"kind": "none"})
    seed: int | None = None
    threads: int = 0
    blocks: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_BLOCKS))

    # -------------------------------------------------------------- parsing

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        unknown = set(data) - TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown top-level field(s) {sorted(unknown)}")
        model = _merge(cls().model, data.get("model"), "model")
        policy = _merge({"kind": "none", "delta_t": None, "repeats": None, "unitary": None},
                        data.get("policy"), "policy")
        policy = {k: v for k, v in policy.items() if v is not None or k == "kind"}
        blocks = {name: _merge(default, data.get(name), name) for name, default in DEFAULT_BLOCKS.items()}
        seed = data.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
            raise ConfigError(f"seed: expected a non-negative integer, got {seed!r}")
        threads = data.get("threads", 0)
        if isinstance(threads, bool) or not isinstance(threads, int) or threads < 0:
            raise ConfigError(f"threads: expected a non-negative integer, got {threads!r}")
        cfg = cls(model, policy, seed, threads, blocks)
        cfg.validate()
        return cfg

    @classmethod
    def from_yaml(cls, text: str) -> "RunConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
            raise ConfigError(f"{where}{getattr(exc, 'problem', None) or exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_yaml(text)

    def validate(self):
        try:
            self.params()
        except (DomainError, TypeError, ValueError) as exc:
            raise ConfigError(f"model: {exc}") from None
        try:
            self.control()
        except (DomainError, TypeError, ValueError) as exc:
            raise ConfigError(f"policy: {exc}") from None
        if self.policy.get("unitary") not in UNITARY_NAMES:
            raise ConfigError(f"policy.unitary: expected one of {sorted(map(str, UNITARY_NAMES))}")
        for name, block in self.blocks.items():
            for key, value in block.items():
                if key in GRID_KEYS:
                    _grid(value, f"{name}.{key}")
        for name in ("traj", "hist"):
            b = self.blocks[name]
            if not isinstance(b["n_traj"], int) or b["n_traj"] < 1:
                raise ConfigError(f"{name}.n_traj: expected a positive integer")
            for key in ("t_max", "micro_step"):
                if not (isinstance(b[key], (int, float)) and b[key] > 0 and math.isfinite(b[key])):
                    raise ConfigError(f"{name}.{key}: expected a positive finite number")
            if b["start"] not in ("reset", "stationary"):
                raise ConfigError(f"{name}.start: expected 'reset' or 'stationary'")
        if not self.blocks["traj"]["bin_width"] > 0:
            raise ConfigError("traj.bin_width: expected a positive number")
        lo_hi = self.blocks["rate"]["s_bounds"]
        if not (isinstance(lo_hi, list) and len(lo_hi) == 2 and lo_hi[0] < lo_hi[1]):
            raise ConfigError("rate.s_bounds: expected [lo, hi] with lo < hi")
        if any(d != int(d) or d < 2 for d in self.grid("hybrid", "dt_divisors")):
            raise ConfigError("hybrid.dt_divisors: expected integers >= 2")

    # ------------------------------------------------------------- accessors

    def params(self) -> ModelParams:
        return ModelParams(**{k: float(v) for k, v in self.model.items()})

    def control(self, delta_t=None) -> ControlPolicy:
        pol = dict(self.policy)
        unitary = pol.pop("unitary", None)
        kind = PolicyKind(pol.pop("kind"))
        if delta_t is not None:
            pol["delta_t"] = delta_t
        if "delta_t" in pol:
            pol["delta_t"] = float(pol["delta_t"])
        if kind is PolicyKind.REPEAT_RESET and "repeats" not in pol:
            pol["repeats"] = math.inf
        if "repeats" in pol:
            r = pol["repeats"]
            pol["repeats"] = math.inf if (isinstance(r, float) and math.isinf(r)) or r == "inf" else r
        policy = ControlPolicy(kind, **pol)
        if unitary == "identity":
            policy = policy.with_unitary(np.eye(3))
        return policy

    def grid(self, block: str, key: str) -> np.ndarray:
        return _grid(self.blocks[block][key], f"{block}.{key}")

    def require_seed(self, command):
        if command in STOCHASTIC and self.seed is None:
            raise ConfigError(f"seed: required for the stochastic command '{command}'")

    # -------------------------------------------------------------- echoing

    def to_dict(self) -> dict:
        out = {"model": dict(self.model), "policy": dict(self.policy),
               "seed": self.seed, "threads": self.threads}
        out.update(copy.deepcopy(self.blocks))
        return out

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=None)

    def __eq__(self, other):
        if not isinstance(other, RunConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()
