"""Engine configuration: time step, crash and conflict parameters, behaviour
model location, worker count and seed. Loaded from TOML or JSON."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

from .behavior import PRE_ONSET_MODES, BehaviorModel, PRE_ONSET_HOLD, default_behavior_model, load_behavior_model
from .conflict import ConflictThresholds
from .enums import AgentClass
from .mechanics import CrashParams

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    """Everything that determines an engine run besides its inputs.

    ``behavior_model`` is a path; relative paths resolve against the config
    file's directory. ``None`` selects the shipped placeholder model.
    """

    dt: float = 0.05
    crash: CrashParams = field(default_factory=CrashParams)
    thresholds: ConflictThresholds = field(default_factory=ConflictThresholds)
    behavior_model: Optional[str] = None
    jobs: int = 1
    seed: int = 0
    pre_onset: str = PRE_ONSET_HOLD

    def validate(self) -> EngineConfig:
        if not 1e-4 <= self.dt <= 0.5:
            raise ConfigError("dt must lie in [1e-4, 0.5] s")
        if not isinstance(self.jobs, int) or self.jobs < 1:
            raise ConfigError("jobs must be a positive integer")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.pre_onset not in PRE_ONSET_MODES:
            raise ConfigError(f"pre_onset must be one of {PRE_ONSET_MODES}")
        try:
            self.crash.validate()
            self.thresholds.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def load_model(self) -> BehaviorModel:
        if self.behavior_model is None:
            return default_behavior_model()
        path = Path(self.behavior_model)
        try:
            text = path.read_text("utf-8")
        except OSError as exc:
            raise ConfigError(f"behavior_model: cannot read {path}: {exc.strerror}") from None
        fmt = "json" if path.suffix.lower() == ".json" else "toml"
        try:
            return load_behavior_model(text, fmt)
        except ValueError as exc:
            raise ConfigError(f"behavior_model {path}: {exc}") from None

    def to_dict(self) -> dict[str, Any]:
        crash = asdict(self.crash)
        crash["class_mass"] = {k.value: v for k, v in sorted(self.crash.class_mass.items())}
        crash["vehicle_thresholds_mph"] = list(self.crash.vehicle_thresholds_mph)
        crash["vru_thresholds_mph"] = list(self.crash.vru_thresholds_mph)
        return {
            "dt": self.dt,
            "crash": crash,
            "conflict": asdict(self.thresholds),
            "behavior_model": self.behavior_model,
            "jobs": self.jobs,
            "seed": self.seed,
            "pre_onset": self.pre_onset,
        }


def _section(cls, raw: Any, name: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected a table")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{name}: unknown key(s) {unknown}")
    return raw


def config_from_dict(doc: dict, base_dir: Optional[Path] = None) -> EngineConfig:
    top = {"dt", "crash", "conflict", "behavior_model", "jobs", "seed", "pre_onset"}
    unknown = sorted(set(doc) - top)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}")
    crash_raw = dict(_section(CrashParams, doc.get("crash", {}), "crash"))
    if "class_mass" in crash_raw:
        try:
            masses = {AgentClass(k): float(v) for k, v in crash_raw["class_mass"].items()}
        except (ValueError, AttributeError) as exc:
            raise ConfigError(f"crash.class_mass: {exc}") from None
        crash_raw["class_mass"] = {**CrashParams().class_mass, **masses}
    for key in ("vehicle_thresholds_mph", "vru_thresholds_mph"):
        if key in crash_raw:
            val = crash_raw[key]
            if not isinstance(val, (list, tuple)) or len(val) != 2:
                raise ConfigError(f"crash.{key}: expected [low, high] in mph")
            crash_raw[key] = (float(val[0]), float(val[1]))
    thr_raw = _section(ConflictThresholds, doc.get("conflict", {}), "conflict")
    model = doc.get("behavior_model")
    if model is not None:
        if not isinstance(model, str):
            raise ConfigError("behavior_model: expected a path string")
        if base_dir is not None and not Path(model).is_absolute():
            model = str(base_dir / model)
    try:
        cfg = EngineConfig(
            dt=float(doc.get("dt", 0.05)),
            crash=CrashParams(**crash_raw),
            thresholds=ConflictThresholds(**{k: float(v) for k, v in thr_raw.items()}),
            behavior_model=model,
            jobs=doc.get("jobs", 1),
            seed=doc.get("seed", 0),
            pre_onset=doc.get("pre_onset", PRE_ONSET_HOLD),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def load_config(path) -> EngineConfig:
    """Read a TOML or JSON config file (format chosen by extension, else sniffed)."""
    path = Path(path)
    try:
        text = path.read_text("utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    is_json = path.suffix.lower() == ".json" or (path.suffix.lower() != ".toml" and text.lstrip().startswith("{"))
    try:
        doc = json.loads(text) if is_json else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a table")
    return config_from_dict(doc, path.parent)


def with_overrides(cfg: EngineConfig, **kw) -> EngineConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw).validate() if kw else cfg
