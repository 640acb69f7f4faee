"""Trajectory and scene data types, JSON ingestion, resampling and validation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import IO, Any, NamedTuple, Optional, Union

import numpy as np

from .enums import AgentClass, ConflictType, SeverityLevel

ACCEL_CLAMP = 12.0  # m/s^2
MIN_DURATION = 0.5  # s
MIN_OVERLAP = 0.5  # s
DEFAULT_DT = 0.05  # s
_TIME_EPS = 1e-9


class SceneError(ValueError):
    """Raised when a scene document cannot be turned into a valid scene."""


def wrap_angle(a):
    """Wrap radians into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


def central_accel(t: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Central-difference derivative of speed, one-sided at the ends, clamped."""
    a = np.empty_like(v)
    if len(v) < 2:
        a[:] = 0.0
        return a
    a[1:-1] = (v[2:] - v[:-2]) / (t[2:] - t[:-2])
    a[0] = (v[1] - v[0]) / (t[1] - t[0])
    a[-1] = (v[-1] - v[-2]) / (t[-1] - t[-2])
    return np.clip(a, -ACCEL_CLAMP, ACCEL_CLAMP)


class TrajectorySample(NamedTuple):
    t: float
    x: float
    y: float
    heading: float
    speed: float
    accel_long: Optional[float] = None


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AgentTrack:
    """A timestamped planar trajectory of one agent, stored column-wise.

    ``accel`` is the logged longitudinal acceleration when one was supplied;
    otherwise ``accel_long`` derives it from the speed column.
    """

    agent_id: str
    agent_class: AgentClass
    length: float
    width: float
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    speed: np.ndarray
    accel: Optional[np.ndarray] = None
    mass: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "agent_class", AgentClass(self.agent_class))
        for name in ("t", "x", "y", "heading", "speed"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n = len(self.t)
        if any(len(getattr(self, k)) != n for k in ("x", "y", "heading", "speed")):
            raise SceneError(f"track {self.agent_id!r}: sample columns differ in length")
        if self.accel is not None:
            object.__setattr__(self, "accel", _frozen(self.accel))
            if len(self.accel) != n:
                raise SceneError(f"track {self.agent_id!r}: accel column differs in length")

    @property
    def accel_long(self) -> np.ndarray:
        if self.accel is not None:
            return self.accel
        a = central_accel(self.t, self.speed)
        a.setflags(write=False)
        return a

    @property
    def samples(self) -> list[TrajectorySample]:
        acc = self.accel if self.accel is not None else [None] * len(self.t)
        return [
            TrajectorySample(*map(float, row), None if a is None else float(a))
            for row, a in zip(zip(self.t, self.x, self.y, self.heading, self.speed), acc)
        ]

    @property
    def start(self) -> float:
        return float(self.t[0])

    @property
    def end(self) -> float:
        return float(self.t[-1])

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def __len__(self) -> int:
        return len(self.t)

    def __eq__(self, other):
        if not isinstance(other, AgentTrack):
            return NotImplemented
        if (self.agent_id, self.agent_class, self.length, self.width, self.mass) != (
            other.agent_id,
            other.agent_class,
            other.length,
            other.width,
            other.mass,
        ):
            return False
        if (self.accel is None) != (other.accel is None):
            return False
        cols = ["t", "x", "y", "heading", "speed"] + (["accel"] if self.accel is not None else [])
        return all(np.array_equal(getattr(self, c), getattr(other, c)) for c in cols)

    __hash__ = None

    def with_states(self, t, x, y, heading, speed, accel=None) -> AgentTrack:
        return replace(self, t=t, x=x, y=y, heading=heading, speed=speed, accel=accel)

    def pose_at(self, tq):
        """Interpolated ``(x, y, heading, speed)`` at time(s) ``tq``."""
        tq = np.asarray(tq, dtype=float)
        x = np.interp(tq, self.t, self.x)
        y = np.interp(tq, self.t, self.y)
        v = np.interp(tq, self.t, self.speed)
        return x, y, interp_heading(tq, self.t, self.heading), v


def interp_heading(tq, t, heading):
    """Shortest-arc interpolation of a heading column."""
    unwrapped = np.unwrap(heading)
    return wrap_angle(np.interp(tq, t, unwrapped))


@dataclass(frozen=True)
class Annotations:
    conflict_type: Optional[ConflictType] = None
    initiator_id: Optional[str] = None
    responder_id: Optional[str] = None
    por_t: Optional[float] = None
    gt_severity: Optional[SeverityLevel] = None


@dataclass(frozen=True)
class ConflictScene:
    scene_id: str
    track_a: AgentTrack
    track_b: AgentTrack
    annotations: Annotations = field(default_factory=Annotations)

    @property
    def tracks(self) -> tuple[AgentTrack, AgentTrack]:
        return (self.track_a, self.track_b)

    def track(self, agent_id: str) -> AgentTrack:
        for tr in self.tracks:
            if tr.agent_id == agent_id:
                return tr
        raise KeyError(agent_id)

    def other(self, agent_id: str) -> AgentTrack:
        a, b = self.tracks
        return b if a.agent_id == agent_id else a

    @property
    def common_span(self) -> tuple[float, float]:
        return (
            max(self.track_a.start, self.track_b.start),
            min(self.track_a.end, self.track_b.end),
        )

    def with_tracks(self, track_a: AgentTrack, track_b: AgentTrack) -> ConflictScene:
        return replace(self, track_a=track_a, track_b=track_b)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


def _track_violations(tr: AgentTrack, loc: str) -> list[Violation]:
    out = []
    if not (tr.length > 0 and tr.width > 0):
        out.append(Violation(f"{loc}", "footprint length and width must be positive"))
    if tr.mass is not None and not tr.mass > 0:
        out.append(Violation(f"{loc}.mass_kg", "mass must be positive"))
    n = len(tr.t)
    if n < 2:
        out.append(Violation(f"{loc}.samples", "track needs at least 2 samples"))
        return out
    cols = np.stack([tr.t, tr.x, tr.y, tr.heading, tr.speed])
    for i in np.flatnonzero(~np.isfinite(cols).all(axis=0)):
        out.append(Violation(f"{loc}.samples[{i}]", "non-finite value"))
    for i in np.flatnonzero(np.diff(tr.t) <= 0):
        out.append(Violation(f"{loc}.samples[{i + 1}].t", "timestamps must be strictly increasing"))
    if tr.duration < MIN_DURATION - _TIME_EPS:
        out.append(Violation(f"{loc}.samples", f"track duration {tr.duration:g} s is below {MIN_DURATION} s"))
    for i in np.flatnonzero(tr.speed < 0):
        out.append(Violation(f"{loc}.samples[{i}].speed", "speed must be non-negative"))
    bad_h = (tr.heading <= -np.pi) | (tr.heading > np.pi)
    for i in np.flatnonzero(bad_h):
        out.append(Violation(f"{loc}.samples[{i}].heading", "heading must lie in (-pi, pi]"))
    return out


def validate_scene(scene: ConflictScene) -> list[Violation]:
    """List every invariant the scene breaks; empty when the scene is valid."""
    out: list[Violation] = []
    for i, tr in enumerate(scene.tracks):
        out.extend(_track_violations(tr, f"tracks[{i}]"))
    ids = {scene.track_a.agent_id, scene.track_b.agent_id}
    if len(ids) < 2:
        out.append(Violation("tracks", "agent ids must differ"))
    if len(scene.track_a) and len(scene.track_b):
        lo, hi = scene.common_span
        if hi - lo < MIN_OVERLAP - _TIME_EPS:
            out.append(
                Violation("tracks", f"insufficient temporal overlap ({max(hi - lo, 0.0):g} s < {MIN_OVERLAP} s)")
            )
    ann = scene.annotations
    for key in ("initiator_id", "responder_id"):
        val = getattr(ann, key)
        if val is not None and val not in ids:
            out.append(Violation(f"annotations.{key}", f"{val!r} matches neither track"))
    if ann.initiator_id is not None and ann.initiator_id == ann.responder_id:
        out.append(Violation("annotations", "initiator and responder must differ"))
    if ann.por_t is not None and len(scene.track_a) and len(scene.track_b):
        lo, hi = scene.common_span
        if not (lo - _TIME_EPS <= ann.por_t <= hi + _TIME_EPS):
            out.append(Violation("annotations.por_t_s", "point of reaction outside the common time span"))
    return out


# ---------------------------------------------------------------------------
# Document I/O
# ---------------------------------------------------------------------------

_SAMPLE_KEYS = ("t_s", "x_m", "y_m", "heading_rad", "speed_mps")


def _require(obj: dict, key: str, path: str):
    if not isinstance(obj, dict):
        raise SceneError(f"{path}: expected an object")
    if key not in obj:
        raise SceneError(f"missing required field {path}.{key}" if path else f"missing required field {key}")
    return obj[key]


def _number(val, path: str) -> float:
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise SceneError(f"{path}: expected a number, got {val!r}")
    return float(val)


def _parse_samples(raw, path: str):
    if not isinstance(raw, list):
        raise SceneError(f"{path}: expected an array of samples")
    rows = []
    accel = []
    for i, s in enumerate(raw):
        sp = f"{path}[{i}]"
        if isinstance(s, list):
            if len(s) not in (5, 6):
                raise SceneError(f"{sp}: expected [t_s, x_m, y_m, heading_rad, speed_mps(, accel_mps2)]")
            vals = [_number(v, sp) for v in s]
            rows.append(vals[:5])
            accel.append(vals[5] if len(vals) == 6 else None)
        elif isinstance(s, dict):
            rows.append([_number(_require(s, k, sp), f"{sp}.{k}") for k in _SAMPLE_KEYS])
            accel.append(_number(s["accel_mps2"], f"{sp}.accel_mps2") if "accel_mps2" in s else None)
        else:
            raise SceneError(f"{sp}: sample must be an array or an object")
    have = [a is not None for a in accel]
    if any(have) and not all(have):
        raise SceneError(f"{path}: accel_mps2 given for some samples but not all")
    arr = np.array(rows, dtype=float).reshape(-1, 5)
    return arr, (np.array(accel, dtype=float) if have and all(have) else None)


def _parse_track(raw, path: str) -> AgentTrack:
    agent_id = _require(raw, "agent_id", path)
    if not isinstance(agent_id, str):
        raise SceneError(f"{path}.agent_id: expected a string")
    cls_raw = _require(raw, "agent_class", path)
    try:
        agent_class = AgentClass(cls_raw)
    except ValueError:
        raise SceneError(f"{path}.agent_class: unknown agent class {cls_raw!r}") from None
    length = _number(_require(raw, "length_m", path), f"{path}.length_m")
    width = _number(_require(raw, "width_m", path), f"{path}.width_m")
    mass = raw.get("mass_kg")
    mass = None if mass is None else _number(mass, f"{path}.mass_kg")
    arr, accel = _parse_samples(_require(raw, "samples", path), f"{path}.samples")
    return AgentTrack(
        agent_id=agent_id,
        agent_class=agent_class,
        length=length,
        width=width,
        mass=mass,
        t=arr[:, 0],
        x=arr[:, 1],
        y=arr[:, 2],
        heading=wrap_angle(arr[:, 3]),
        speed=arr[:, 4],
        accel=accel,
    )


def _parse_annotations(raw) -> Annotations:
    if raw is None:
        return Annotations()
    if not isinstance(raw, dict):
        raise SceneError("annotations: expected an object")
    ct = raw.get("conflict_type")
    if ct is not None:
        try:
            ct = ConflictType(ct)
        except ValueError:
            raise SceneError(f"annotations.conflict_type: unknown conflict type {ct!r}") from None
    sev = raw.get("gt_severity")
    if sev is not None:
        try:
            sev = SeverityLevel.parse(sev)
        except ValueError:
            raise SceneError(f"annotations.gt_severity: unknown severity {sev!r}") from None
    por = raw.get("por_t_s")
    por = None if por is None else _number(por, "annotations.por_t_s")
    return Annotations(
        conflict_type=ct,
        initiator_id=raw.get("initiator_id"),
        responder_id=raw.get("responder_id"),
        por_t=por,
        gt_severity=sev,
    )


def parse_scene(source: Union[bytes, str, IO]) -> ConflictScene:
    """Parse and validate a scene document.

    Raises :class:`SceneError` for malformed JSON, missing fields, or any
    violated invariant; the message names the offending field path.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SceneError(f"malformed document: {exc}") from None
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise SceneError(f"malformed document: {exc}") from None
    if not isinstance(doc, dict):
        raise SceneError("malformed document: top level must be an object")
    scene_id = _require(doc, "scene_id", "")
    tracks = _require(doc, "tracks", "")
    if not isinstance(tracks, list) or len(tracks) != 2:
        raise SceneError("tracks: expected exactly 2 tracks")
    scene = ConflictScene(
        scene_id=str(scene_id),
        track_a=_parse_track(tracks[0], "tracks[0]"),
        track_b=_parse_track(tracks[1], "tracks[1]"),
        annotations=_parse_annotations(doc.get("annotations")),
    )
    problems = validate_scene(scene)
    if problems:
        raise SceneError("; ".join(str(p) for p in problems))
    return scene


def track_to_dict(tr: AgentTrack) -> dict[str, Any]:
    cols = [tr.t, tr.x, tr.y, tr.heading, tr.speed]
    if tr.accel is not None:
        cols.append(tr.accel)
    out: dict[str, Any] = {
        "agent_id": tr.agent_id,
        "agent_class": tr.agent_class.value,
        "length_m": float(tr.length),
        "width_m": float(tr.width),
    }
    if tr.mass is not None:
        out["mass_kg"] = float(tr.mass)
    out["samples"] = np.stack(cols, axis=1).tolist()
    return out


def scene_to_dict(scene: ConflictScene) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "scene_id": scene.scene_id,
        "tracks": [track_to_dict(scene.track_a), track_to_dict(scene.track_b)],
    }
    ann = scene.annotations
    fields = {
        "conflict_type": ann.conflict_type.value if ann.conflict_type else None,
        "initiator_id": ann.initiator_id,
        "responder_id": ann.responder_id,
        "por_t_s": ann.por_t,
        "gt_severity": ann.gt_severity.name if ann.gt_severity is not None else None,
    }
    fields = {k: v for k, v in fields.items() if v is not None}
    if fields:
        doc["annotations"] = fields
    return doc


def serialize_scene(scene: ConflictScene) -> str:
    return json.dumps(scene_to_dict(scene), separators=(",", ":"))


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------


def _is_uniform(t: np.ndarray, dt: float) -> bool:
    return bool(np.all(np.abs(np.diff(t) - dt) <= 1e-9 * max(1.0, dt)))


def resample_track(track: AgentTrack, dt: float = DEFAULT_DT) -> AgentTrack:
    """Resample onto a uniform ``dt`` grid starting at the first timestamp.

    Position and speed are interpolated linearly, heading along the shortest
    arc; acceleration is recomputed from the resampled speed. A track already
    on the grid keeps its timestamps and states unchanged.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt > track.duration + _TIME_EPS:
        raise ValueError(f"dt={dt:g} s exceeds the track duration {track.duration:g} s")
    if _is_uniform(track.t, dt):
        return replace(track, accel=None)
    n = int(math.floor(track.duration / dt + 1e-9)) + 1
    t = track.t[0] + dt * np.arange(n)
    x, y, heading, speed = track.pose_at(t)
    return track.with_states(t, x, y, heading, speed)


def resample_scene(scene: ConflictScene, dt: float = DEFAULT_DT) -> ConflictScene:
    return scene.with_tracks(resample_track(scene.track_a, dt), resample_track(scene.track_b, dt))
