"""Experiment configuration: strict JSON parsing, emission and resolution.

Every field has a documented default (see ``defaults_reference``), so a file
naming only the game builder yields the full energy-demand setup. Unknown
keys, wrong types and out-of-range values are rejected with the key path.
"""

from __future__ import annotations

import json
import types
import typing
from dataclasses import MISSING, asdict, dataclass, field, fields, is_dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .compressor import PRESET_COMPRESSORS, IdentityCompressor, StochasticQuantizer
from .engine import CONSERVATION, LITERAL, Setup, StepSchedule
from .game import EnergyGameParams, GameSpec, auto_lambda_prime, energy_game, multiplier_bound
from .network import build_complete, build_ring, mixing_matrix, strict_weight, Topology
from .trigger import TriggerSchedule

DEFAULT_SEED = 20240917
PRESETS = ("energy-demand", "energy-demand-fig1", "energy-demand-fig2")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


@dataclass(frozen=True)
class GameConfig:
    builder: str = "energy-demand"
    nominal: tuple[float, ...] = (56.0, 60.0, 42.0, 57.0, 54.0)
    p0: float = 0.05
    p1: float = 9.0
    box: tuple[float, ...] = (30.0, 50.0)
    cap: float = 200.0

    def validate(self, path: str) -> None:
        if self.builder != "energy-demand":
            raise ConfigError(f"{path}.builder", f"unknown game builder {self.builder!r}")
        if len(self.box) != 2:
            raise ConfigError(f"{path}.box", "expected [lower, upper]")
        if len(self.nominal) < 2:
            raise ConfigError(f"{path}.nominal", "need at least two players")


@dataclass(frozen=True)
class TopologyConfig:
    kind: str = "ring"
    edges: tuple[tuple[int, ...], ...] | None = None
    strict_mixing: bool = True
    weight: float | None = None

    def validate(self, path: str) -> None:
        if self.kind not in ("ring", "complete", "edges"):
            raise ConfigError(f"{path}.kind", f"expected ring, complete or edges, got {self.kind!r}")
        if self.kind == "edges" and not self.edges:
            raise ConfigError(f"{path}.edges", "required when kind is 'edges'")
        if self.weight is not None and not self.weight > 0:
            raise ConfigError(f"{path}.weight", "must be positive")


@dataclass(frozen=True)
class ScheduleConfig:
    s: float = 0.7
    t: float = 0.9
    offset: int = 1

    def validate(self, path: str) -> None:
        if self.offset < 1:
            raise ConfigError(f"{path}.offset", "must be >= 1")


@dataclass(frozen=True)
class TriggerConfig:
    B: float | tuple[float, ...] = 20.0
    alpha: float | tuple[float, ...] = 0.8

    def validate(self, path: str) -> None:
        for a in np.atleast_1d(self.alpha):
            if not 0 < a < 1:
                raise ConfigError(f"{path}.alpha", f"decay rate must lie in (0, 1), got {a}")
        for b in np.atleast_1d(self.B):
            if b < 0:
                raise ConfigError(f"{path}.B", f"threshold amplitude must be >= 0, got {b}")


@dataclass(frozen=True)
class CompressorConfig:
    name: str = "C1"
    theta: float | None = None
    bits: int | None = None

    def validate(self, path: str) -> None:
        if self.name in PRESET_COMPRESSORS or self.name == "none":
            return
        if self.name != "custom":
            raise ConfigError(f"{path}.name", f"expected C1, C2, C3, none or custom, got {self.name!r}")
        if self.theta is None or self.bits is None:
            raise ConfigError(path, "custom compressor needs theta and bits")
        if not self.theta > 0 or self.bits < 1:
            raise ConfigError(path, "custom compressor needs theta > 0 and bits >= 1")

    def build(self):
        if self.name == "none":
            return IdentityCompressor()
        if self.name == "custom":
            return StochasticQuantizer(self.theta, self.bits, ident=0)
        return PRESET_COMPRESSORS[self.name]


@dataclass(frozen=True)
class PrivacyConfig:
    player: int = 0
    nominal_shift: float = 1.0
    horizon: int = 1000


@dataclass(frozen=True)
class ExperimentConfig:
    game: GameConfig = field(default_factory=GameConfig)
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    trigger: TriggerConfig = field(default_factory=TriggerConfig)
    compressor: CompressorConfig = field(default_factory=CompressorConfig)
    sweep: tuple[str, ...] = ("C1", "C2", "C3")
    horizon: int = 5000
    runs: int = 100
    seed: int = DEFAULT_SEED
    window: int = 100
    mode: str = LITERAL
    lambda_prime: float | str = "auto"
    baseline_dual_cap: bool = False
    baseline_horizon: int = 100000
    privacy: PrivacyConfig = field(default_factory=PrivacyConfig)
    workers: int = 1

    def validate(self) -> None:
        for f in ("game", "topology", "schedule", "trigger", "compressor"):
            getattr(self, f).validate(f)
        for i, name in enumerate(self.sweep):
            CompressorConfig(name).validate(f"sweep[{i}]")
        if self.runs < 1:
            raise ConfigError("runs", "must be >= 1")
        for key in ("horizon", "baseline_horizon"):
            if getattr(self, key) < 0:
                raise ConfigError(key, "must be >= 0")
        if self.window < 1:
            raise ConfigError("window", "must be >= 1")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        if self.mode not in (LITERAL, CONSERVATION):
            raise ConfigError("mode", f"expected {LITERAL!r} or {CONSERVATION!r}, got {self.mode!r}")
        if isinstance(self.lambda_prime, str) and self.lambda_prime != "auto":
            raise ConfigError("lambda_prime", "expected a number or 'auto'")
        if not isinstance(self.lambda_prime, str) and self.lambda_prime < 0:
            raise ConfigError("lambda_prime", "must be >= 0")
        if not 0 <= self.privacy.player < len(self.game.nominal):
            raise ConfigError("privacy.player", "no such player")
        if self.privacy.horizon < 0:
            raise ConfigError("privacy.horizon", "must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")

    def replace(self, **changes) -> "ExperimentConfig":
        import dataclasses

        out = dataclasses.replace(self, **changes)
        out.validate()
        return out


# --------------------------------------------------------------------------
# strict parsing


def _type_name(tp) -> str:
    return getattr(tp, "__name__", None) or str(tp).replace("typing.", "")


def _coerce(value, tp, path: str):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        options = typing.get_args(tp)
        if value is None:
            if type(None) in options:
                return None
            raise ConfigError(path, "null is not allowed")
        options = [o for o in options if o is not type(None)]
        if len(options) == 1:
            return _coerce(value, options[0], path)
        for opt in options:
            try:
                return _coerce(value, opt, path)
            except ConfigError:
                continue
        raise ConfigError(path, f"expected {_type_name(tp)}, got {type(value).__name__}")
    if is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected an object, got {type(value).__name__}")
        return _build(tp, value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {type(value).__name__}")
        args = typing.get_args(tp)
        item = args[0]
        return tuple(_coerce(v, item, f"{path}[{i}]") for i, v in enumerate(value))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {type(value).__name__}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {type(value).__name__}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {type(value).__name__}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {type(value).__name__}")
        return value
    raise ConfigError(path, f"unsupported field type {tp}")  # pragma: no cover


def _build(cls, data: dict, path: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown key")
    kwargs = {}
    for f in fields(cls):
        if f.name in data:
            kwargs[f.name] = _coerce(data[f.name], hints[f.name], f"{path}.{f.name}" if path else f.name)
        elif f.default is MISSING and f.default_factory is MISSING:  # pragma: no cover
            raise ConfigError(f"{path}.{f.name}" if path else f.name, "missing required key")
    return cls(**kwargs)


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("", "top level must be an object")
    data = dict(data)
    base = data.pop("preset", None)
    if base is not None:
        if not isinstance(base, str):
            raise ConfigError("preset", "expected a string")
        merged = _merge(_preset_data(base), data)
        return parse_config(merged)
    cfg = _build(ExperimentConfig, data)
    cfg.validate()
    return cfg


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(data)


def _preset_data(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("gne_mesh").joinpath("presets").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def load_preset(name: str) -> ExperimentConfig:
    return parse_config(_preset_data(name))


def to_dict(cfg: ExperimentConfig) -> dict:
    def plain(v):
        if isinstance(v, dict):
            return {k: plain(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [plain(x) for x in v]
        return v

    return plain(asdict(cfg))


def emit_config(cfg: ExperimentConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2) + "\n"


def defaults_reference() -> str:
    """Plain-text table of every key and its default."""
    lines = ["key | type | default"]

    def walk(cls, prefix):
        hints = typing.get_type_hints(cls)
        inst = cls()
        for f in fields(cls):
            key = f"{prefix}{f.name}"
            tp = hints[f.name]
            if is_dataclass(tp):
                walk(tp, key + ".")
            else:
                lines.append(f"{key} | {_type_name(tp)} | {json.dumps(to_plain(getattr(inst, f.name)))}")

    def to_plain(v):
        return [to_plain(x) for x in v] if isinstance(v, tuple) else v

    walk(ExperimentConfig, "")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# resolution to engine objects


def build_game(cfg: ExperimentConfig) -> GameSpec:
    g = cfg.game
    return energy_game(EnergyGameParams(tuple(g.nominal), g.p0, g.p1, tuple(g.box), g.cap))


def build_topology(cfg: ExperimentConfig, n: int) -> Topology:
    t = cfg.topology
    if t.kind == "ring":
        return build_ring(n)
    if t.kind == "complete":
        return build_complete(n)
    return Topology.from_edges(n, t.edges)


def build_trigger(cfg: ExperimentConfig, n: int) -> TriggerSchedule:
    B = np.atleast_1d(np.asarray(cfg.trigger.B, dtype=float))
    alpha = np.atleast_1d(np.asarray(cfg.trigger.alpha, dtype=float))
    if B.size not in (1, n) or alpha.size not in (1, n):
        raise ConfigError("trigger", f"per-player lists must have {n} entries")
    B, alpha = np.broadcast_to(B, (n,)), np.broadcast_to(alpha, (n,))
    return TriggerSchedule(B, alpha)


def lambda_caps(cfg: ExperimentConfig, game: GameSpec) -> np.ndarray:
    lp = auto_lambda_prime(game) if cfg.lambda_prime == "auto" else float(cfg.lambda_prime)
    return multiplier_bound(game, lambda_prime=lp)


def resolve(cfg: ExperimentConfig, compressor: str | None = None, force: bool = False) -> Setup:
    """Engine setup for ``cfg``; ``compressor`` overrides the configured one."""
    game = build_game(cfg)
    n = game.n_players
    topo = build_topology(cfg, n)
    if cfg.topology.weight is not None:
        w = cfg.topology.weight
    else:
        w = strict_weight(topo) if cfg.topology.strict_mixing else 1.0
    comp = CompressorConfig(compressor) if compressor is not None else cfg.compressor
    return Setup(
        game=game,
        mixing=mixing_matrix(topo, w),
        schedule=StepSchedule(cfg.schedule.s, cfg.schedule.t, cfg.schedule.offset),
        trigger=build_trigger(cfg, n),
        compressor=comp.build(),
        lambda_cap=lambda_caps(cfg, game),
        horizon=cfg.horizon,
        master_seed=cfg.seed,
        mode=cfg.mode,
        baseline_dual_cap=cfg.baseline_dual_cap,
        force=force,
    )
