"""Seeded synthetic conflict scenes with known type, roles, point of reaction and
a ground-truth responder drawn from a behaviour model (or fixed / non-reactive).

Ground-truth severity is never asserted analytically: it is computed by running
the sampled ground-truth responder through the crash model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import ClassVar, Optional

import numpy as np

from .behavior import BehaviorModel, ReactionParams, default_behavior_model, enumerate_cells, sample_cell, synthesize_response
from .conflict import ConflictThresholds
from .enums import AgentClass, ConflictType
from .mechanics import CrashParams, assess_tracks, gt_outcome
from .scene import AgentTrack, Annotations, ConflictScene, validate_scene, wrap_angle

MAX_ATTEMPTS = 1000
GT_FROM_MODEL = "from-model"
GT_FIXED = "fixed-params"
GT_NONREACTIVE = "nonreactive"

# Default kinematic ranges per family, (lo, hi).
_DEFAULTS = {
    ConflictType.REAR_END_LEAD_BRAKE: dict(
        responder_speed=(12.0, 25.0), gap=(6.0, 25.0), lead_decel=(-8.0, -3.5), event_time=(1.0, 2.0)
    ),
    ConflictType.CROSSING_STRAIGHT: dict(
        responder_speed=(8.0, 20.0), initiator_speed=(4.0, 12.0), approach_angle_deg=(75.0, 105.0),
        arrival_offset=(-0.8, 0.2), event_time=(4.0, 6.0),
    ),
    ConflictType.VRU_CROSSING: dict(
        responder_speed=(8.0, 18.0), initiator_speed=(1.0, 6.5), approach_angle_deg=(70.0, 110.0),
        arrival_offset=(-0.8, 0.2), event_time=(4.0, 6.0),
    ),
    ConflictType.CUT_IN: dict(
        responder_speed=(15.0, 25.0), speed_deficit=(2.0, 8.0), gap=(0.5, 12.0),
        event_time=(1.0, 2.5), maneuver_time=(2.5, 4.5),
    ),
}

_LANE_WIDTH = 3.5  # m
_TAIL = 2.0  # s kept after the slowest plausible stop


class GeneratorError(RuntimeError):
    pass


@dataclass(frozen=True)
class SyntheticScenarioSpec:
    """Scene family, kinematic ranges and how the ground-truth responder is drawn.

    Ranges left as ``None`` take the family defaults; a range may be a point
    (``lo == hi``).
    """

    FAMILIES: ClassVar[tuple] = (
        ConflictType.REAR_END_LEAD_BRAKE,
        ConflictType.CROSSING_STRAIGHT,
        ConflictType.CUT_IN,
        ConflictType.VRU_CROSSING,
    )

    family: ConflictType
    responder_speed: Optional[tuple] = None
    initiator_speed: Optional[tuple] = None
    gap: Optional[tuple] = None
    lead_decel: Optional[tuple] = None
    approach_angle_deg: Optional[tuple] = None
    arrival_offset: Optional[tuple] = None
    speed_deficit: Optional[tuple] = None
    event_time: Optional[tuple] = None
    maneuver_time: Optional[tuple] = None
    vru_classes: tuple = (AgentClass.CYCLIST, AgentClass.PEDESTRIAN)
    gt_mode: str = GT_FROM_MODEL
    gt_params: Optional[ReactionParams] = None
    rigid_transform: bool = True

    def __post_init__(self):
        fam = ConflictType(self.family)
        if fam not in self.FAMILIES:
            raise ValueError(f"no generator for conflict type {fam.value!r}")
        object.__setattr__(self, "family", fam)
        for name, default in _DEFAULTS[fam].items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)
        for name in _DEFAULTS[fam]:
            lo, hi = (float(v) for v in getattr(self, name))
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ValueError(f"{name}: range must satisfy lo <= hi, got {(lo, hi)}")
            object.__setattr__(self, name, (lo, hi))
        if self.gt_mode not in (GT_FROM_MODEL, GT_FIXED, GT_NONREACTIVE):
            raise ValueError(f"unknown gt_mode {self.gt_mode!r}")
        if self.gt_mode == GT_FIXED and self.gt_params is None:
            raise ValueError("gt_mode 'fixed-params' needs gt_params")
        if fam is ConflictType.REAR_END_LEAD_BRAKE and self.lead_decel[1] >= 0:
            raise ValueError("lead_decel must be negative")


def _draw(rng: np.random.Generator, rng_pair: tuple) -> float:
    lo, hi = rng_pair
    return lo if lo == hi else float(rng.uniform(lo, hi))


def _grid(duration: float, dt: float) -> np.ndarray:
    return dt * np.arange(int(math.ceil(duration / dt)) + 1)


def _on_grid_at_or_after(t: float, dt: float) -> float:
    return dt * math.ceil(t / dt - 1e-9)


def _track(agent_id, cls, length, width, t, x, y, heading, speed) -> AgentTrack:
    return AgentTrack(
        agent_id=agent_id,
        agent_class=cls,
        length=length,
        width=width,
        t=t,
        x=x,
        y=y,
        heading=wrap_angle(heading),
        speed=speed,
    )


def _vehicle_dims(rng) -> tuple[float, float]:
    return float(rng.uniform(4.4, 5.2)), float(rng.uniform(1.75, 2.0))


def _straight(agent_id, cls, dims, t, x0, y0, heading, speed):
    v = np.full_like(t, speed)
    return _track(
        agent_id, cls, *dims, t, x0 + speed * t * math.cos(heading), y0 + speed * t * math.sin(heading),
        np.full_like(t, heading), v,
    )


@dataclass
class _Layout:
    initiator: AgentTrack
    responder: AgentTrack  # nominal (non-reactive) responder
    por_t: float


def _rear_end(spec, rng, dt) -> Optional[_Layout]:
    v0 = _draw(rng, spec.responder_speed)
    gap = _draw(rng, spec.gap)
    a_lead = _draw(rng, spec.lead_decel)
    t_b = _on_grid_at_or_after(_draw(rng, spec.event_time), dt)
    dims_r, dims_i = _vehicle_dims(rng), _vehicle_dims(rng)
    t = _grid(t_b + 3.0 + v0 / 2.5 + _TAIL, dt)
    responder = _straight("r", AgentClass.PASSENGER_VEHICLE, dims_r, t, 0.0, 0.0, 0.0, v0)
    x_lead0 = gap + 0.5 * (dims_r[0] + dims_i[0])
    tau = np.clip(t - t_b, 0.0, v0 / -a_lead)
    x = x_lead0 + v0 * np.minimum(t, t_b) + v0 * tau + 0.5 * a_lead * tau**2
    v = np.where(t <= t_b, v0, np.maximum(v0 + a_lead * (t - t_b), 0.0))
    lead = _track("i", AgentClass.PASSENGER_VEHICLE, *dims_i, t, x, np.zeros_like(t), np.zeros_like(t), v)
    return _Layout(lead, responder, t_b)


def _entry_time(t_arrive, speed, sin_angle, corridor_half_width, extent):
    """When a footprint travelling across a straight corridor first touches it."""
    return t_arrive - (corridor_half_width + extent) / (speed * sin_angle)


def _crossing(spec, rng, dt, th: ConflictThresholds, vru: bool) -> Optional[_Layout]:
    v_r = _draw(rng, spec.responder_speed)
    theta = math.radians(_draw(rng, spec.approach_angle_deg)) * (1 if rng.random() < 0.5 else -1)
    t_c = _draw(rng, spec.event_time)
    delta = _draw(rng, spec.arrival_offset)
    dims_r = _vehicle_dims(rng)
    if vru:
        cls = spec.vru_classes[int(rng.integers(len(spec.vru_classes)))]
        if cls is AgentClass.PEDESTRIAN:
            dims_i = (float(rng.uniform(0.4, 0.6)), float(rng.uniform(0.4, 0.6)))
            v_i = float(np.clip(_draw(rng, spec.initiator_speed), 0.8, 2.5))
        else:
            dims_i = (float(rng.uniform(1.6, 1.9)), float(rng.uniform(0.5, 0.7)))
            v_i = float(np.clip(_draw(rng, spec.initiator_speed), 2.5, 8.0))
    else:
        cls = AgentClass.PASSENGER_VEHICLE
        dims_i = _vehicle_dims(rng)
        v_i = _draw(rng, spec.initiator_speed)
    sin_t, cos_t = abs(math.sin(theta)), abs(math.cos(theta))
    t_ci = t_c + delta
    # initiator footprint reaching the responder's corridor (the x axis)
    ext_i = 0.5 * dims_i[0] * sin_t + 0.5 * dims_i[1] * cos_t
    t_enter_i = _entry_time(t_ci, v_i, sin_t, 0.5 * dims_r[1] + th.corridor_inflation, ext_i)
    # responder footprint reaching the initiator's corridor
    ext_r = 0.5 * dims_r[0] * sin_t + 0.5 * dims_r[1] * cos_t
    t_enter_r = _entry_time(t_c, v_r, sin_t, 0.5 * dims_i[1] + th.corridor_inflation, ext_r)
    if t_enter_i < 1.0 or t_enter_i > t_enter_r - 2 * dt:
        return None
    t = _grid(max(t_c, t_ci) + 3.0 + v_r / 2.5 + _TAIL, dt)
    responder = _straight("r", AgentClass.PASSENGER_VEHICLE, dims_r, t, -v_r * t_c, 0.0, 0.0, v_r)
    initiator = _straight(
        "i", cls, dims_i, t, -v_i * t_ci * math.cos(theta), -v_i * t_ci * math.sin(theta), theta, v_i
    )
    return _Layout(initiator, responder, _on_grid_at_or_after(t_enter_i, dt))


def _cut_in(spec, rng, dt, th: ConflictThresholds) -> Optional[_Layout]:
    v_r = _draw(rng, spec.responder_speed)
    v_i = v_r - _draw(rng, spec.speed_deficit)
    if v_i < 3.0:
        return None
    gap = _draw(rng, spec.gap)
    t_s = _draw(rng, spec.event_time)
    T = _draw(rng, spec.maneuver_time)
    side = 1.0 if rng.random() < 0.5 else -1.0
    dims_r, dims_i = _vehicle_dims(rng), _vehicle_dims(rng)
    t_e = t_s + T
    t = _grid(t_e + gap / (v_r - v_i) + 3.0 + v_r / 2.5 + _TAIL, dt)
    x_i0 = (v_r - v_i) * t_e + gap + 0.5 * (dims_r[0] + dims_i[0])
    tau = np.clip(t - t_s, 0.0, T)
    y = side * _LANE_WIDTH * (1.0 - 0.5 * (1.0 - np.cos(np.pi * tau / T)))
    vy = np.where((t > t_s) & (t < t_e), -side * _LANE_WIDTH * np.pi / (2 * T) * np.sin(np.pi * tau / T), 0.0)
    initiator = _track(
        "i", AgentClass.PASSENGER_VEHICLE, *dims_i, t, x_i0 + v_i * t, y, np.arctan2(vy, v_i), np.hypot(v_i, vy)
    )
    responder = _straight("r", AgentClass.PASSENGER_VEHICLE, dims_r, t, 0.0, 0.0, 0.0, v_r)
    # lateral closing speed crosses the trigger at a known phase of the manoeuvre
    ratio = th.lateral_speed_trigger * 2 * T / (_LANE_WIDTH * np.pi)
    if ratio >= 1.0:
        return None
    t_trig = t_s + T / np.pi * math.asin(ratio)
    return _Layout(initiator, responder, _on_grid_at_or_after(t_trig, dt))


def _rigid(track: AgentTrack, phi: float, shift: np.ndarray, agent_id: str) -> AgentTrack:
    c, s = math.cos(phi), math.sin(phi)
    x = c * track.x - s * track.y + shift[0]
    y = s * track.x + c * track.y + shift[1]
    return replace(track, agent_id=agent_id, x=x, y=y, heading=wrap_angle(track.heading + phi))


def generate_scene(
    spec: SyntheticScenarioSpec,
    rng: np.random.Generator,
    scene_id: str,
    *,
    model: Optional[BehaviorModel] = None,
    crash_cfg: Optional[CrashParams] = None,
    thresholds: Optional[ConflictThresholds] = None,
    dt: float = 0.05,
) -> ConflictScene:
    """One annotated scene; retries geometry up to ``MAX_ATTEMPTS`` times until
    the non-reactive responder collides after the point of reaction."""
    crash_cfg = crash_cfg or CrashParams()
    th = thresholds or ConflictThresholds()
    fam = spec.family
    for _ in range(MAX_ATTEMPTS):
        if fam is ConflictType.REAR_END_LEAD_BRAKE:
            lay = _rear_end(spec, rng, dt)
        elif fam is ConflictType.CUT_IN:
            lay = _cut_in(spec, rng, dt, th)
        else:
            lay = _crossing(spec, rng, dt, th, vru=fam is ConflictType.VRU_CROSSING)
        if lay is None:
            continue
        nrm = assess_tracks(lay.responder, lay.initiator, crash_cfg)
        if nrm.contact is None or nrm.contact.t_contact <= lay.por_t + dt:
            continue
        break
    else:
        raise GeneratorError(
            f"{fam.value}: no conflict-producing geometry after {MAX_ATTEMPTS} attempts; widen the kinematic ranges"
        )

    if spec.gt_mode == GT_NONREACTIVE:
        gt_resp = lay.responder
    else:
        if spec.gt_mode == GT_FIXED:
            params = spec.gt_params
        else:
            cell = sample_cell(enumerate_cells(model or default_behavior_model(), fam, lay.responder.agent_class), rng)
            params = cell.params
        gt_resp = lay.responder if params is None else synthesize_response(lay.responder, lay.por_t, params)

    ids = ("A", "B") if rng.random() < 0.5 else ("B", "A")  # (initiator, responder)
    if spec.rigid_transform:
        phi = float(rng.uniform(-math.pi, math.pi))
        shift = rng.uniform(-500.0, 500.0, size=2)
    else:
        phi, shift = 0.0, np.zeros(2)
    init = _rigid(lay.initiator, phi, shift, ids[0])
    resp = _rigid(gt_resp, phi, shift, ids[1])
    tracks = (init, resp) if ids[0] == "A" else (resp, init)
    scene = ConflictScene(scene_id, *tracks)
    sev, _ = gt_outcome(scene, crash_cfg)
    scene = replace(
        scene,
        annotations=Annotations(
            conflict_type=fam, initiator_id=ids[0], responder_id=ids[1], por_t=lay.por_t, gt_severity=sev
        ),
    )
    problems = validate_scene(scene)
    if problems:
        raise GeneratorError(f"{scene_id}: generated scene is invalid: {problems[0]}")
    return scene


def scene_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def generate_corpus(
    specs,
    n: int,
    seed: int,
    *,
    model: Optional[BehaviorModel] = None,
    crash_cfg: Optional[CrashParams] = None,
    thresholds: Optional[ConflictThresholds] = None,
    dt: float = 0.05,
) -> list[ConflictScene]:
    """``n`` scenes cycling through ``specs``; scene ``i`` depends only on ``(seed, i)``."""
    if isinstance(specs, SyntheticScenarioSpec):
        specs = [specs]
    model = model or default_behavior_model()
    out = []
    for i in range(n):
        spec = specs[i % len(specs)]
        sid = f"{spec.family.value}-{seed}-{i:05d}"
        out.append(
            generate_scene(
                spec, scene_rng(seed, i), sid, model=model, crash_cfg=crash_cfg, thresholds=thresholds, dt=dt
            )
        )
    return out
