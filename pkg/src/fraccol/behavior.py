"""Responder reaction-parameter distributions and counterfactual trajectories.

A behaviour model maps ``(conflict type, agent class)`` to a probability mass
over reaction parameters (reaction time, brake jerk, steady-state
deceleration) plus an optional non-reactive atom. Each parameter cell drives
a brake-only counterfactual of the responder along its logged path.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import IO, Optional, Union

import numpy as np

from . import kernels
from .enums import AgentClass, ConflictType
from .scene import AgentTrack, wrap_angle

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

WEIGHT_TOL = 1e-9
_TIME_EPS = 1e-9

# Deceleration capability per class, m/s^2 (negative).
DEFAULT_CAPABILITY = {
    AgentClass.PASSENGER_VEHICLE: -9.0,
    AgentClass.TRUCK: -6.5,
    AgentClass.MOTORCYCLE: -7.0,
    AgentClass.CYCLIST: -3.5,
    AgentClass.PEDESTRIAN: -3.0,
}

# How the responder moves between the point of reaction and brake onset.
PRE_ONSET_HOLD = "hold"  # keep the speed reached at the point of reaction
PRE_ONSET_LOGGED = "logged"  # replay the logged trajectory
PRE_ONSET_MODES = (PRE_ONSET_HOLD, PRE_ONSET_LOGGED)


class BehaviorModelError(ValueError):
    pass


@dataclass(frozen=True)
class ReactionParams:
    hrt: float  # s, >= 0
    jerk: float  # m/s^3, < 0
    a_ss: float  # m/s^2, < 0

    def __post_init__(self):
        if not self.hrt >= 0:
            raise ValueError(f"hrt must be >= 0, got {self.hrt}")
        if not self.jerk < 0:
            raise ValueError(f"jerk must be negative, got {self.jerk}")
        if not self.a_ss < 0:
            raise ValueError(f"a_ss must be negative, got {self.a_ss}")


@dataclass(frozen=True)
class ParameterCell:
    """One lattice cell. ``params is None`` marks the non-reactive atom."""

    params: Optional[ReactionParams]
    weight: float

    @property
    def is_nonreact(self) -> bool:
        return self.params is None


@dataclass(frozen=True)
class ModelEntry:
    hrt_values: tuple  # point masses, s
    hrt_weights: tuple
    jerk_values: tuple
    jerk_weights: tuple
    a_ss_values: tuple
    a_ss_weights: tuple
    p_nonreact: float = 0.0
    joint_mode: str = "independent"
    joint_table: tuple = ()  # rows (hrt, jerk, a_ss, weight) when joint_mode == "joint"


@dataclass(frozen=True)
class BehaviorModel:
    entries: dict  # (ConflictType | None, AgentClass | None) -> ModelEntry
    capability: dict = field(default_factory=lambda: dict(DEFAULT_CAPABILITY))

    def entry(self, ctype: Optional[ConflictType], agent_class: Optional[AgentClass]) -> ModelEntry:
        for key in ((ctype, agent_class), (ctype, None), (None, None)):
            if key in self.entries:
                return self.entries[key]
        raise KeyError("behaviour model has no default entry")


def _check_weights(values, weights, name: str) -> tuple[tuple, tuple]:
    values = tuple(float(v) for v in values)
    weights = tuple(float(w) for w in weights)
    if len(values) == 0 or len(values) != len(weights):
        raise BehaviorModelError(f"{name}: values and weights must be non-empty and of equal length")
    if any(w < 0 for w in weights):
        raise BehaviorModelError(f"{name}: negative weight")
    if abs(math.fsum(weights) - 1.0) > WEIGHT_TOL:
        raise BehaviorModelError(f"{name}: marginal not normalized (sum={math.fsum(weights):.12g})")
    return values, weights


def _parse_entry(raw: dict, name: str) -> ModelEntry:
    if not isinstance(raw, dict):
        raise BehaviorModelError(f"{name}: expected a table")
    p_nonreact = float(raw.get("p_nonreact", 0.0))
    if not 0.0 <= p_nonreact <= 1.0:
        raise BehaviorModelError(f"{name}: p_nonreact must lie in [0, 1]")
    mode = raw.get("joint_mode", "independent")
    if mode in ("independent", "independent-product"):
        mode = "independent"
    elif mode in ("joint", "explicit", "explicit-joint"):
        mode = "joint"
    else:
        raise BehaviorModelError(f"{name}: unknown joint_mode {mode!r}")

    if mode == "joint":
        rows = raw.get("joint_table")
        if not rows:
            raise BehaviorModelError(f"{name}: joint_mode 'joint' needs a joint_table")
        table = []
        for i, row in enumerate(rows):
            if len(row) != 4:
                raise BehaviorModelError(f"{name}.joint_table[{i}]: expected [hrt_s, jerk_mps3, a_ss_mps2, weight]")
            hrt, jerk, a_ss, w = (float(v) for v in row)
            try:
                ReactionParams(hrt, jerk, a_ss)
            except ValueError as exc:
                raise BehaviorModelError(f"{name}.joint_table[{i}]: {exc}") from None
            table.append((hrt, jerk, a_ss, w))
        _check_weights([r[0] for r in table], [r[3] for r in table], f"{name}.joint_table")
        return ModelEntry((), (), (), (), (), (), p_nonreact, mode, tuple(table))

    if "hrt_bin_edges_s" in raw:
        edges = np.asarray(raw["hrt_bin_edges_s"], dtype=float)
        if len(edges) < 2 or np.any(np.diff(edges) <= 0):
            raise BehaviorModelError(f"{name}: hrt bin edges not increasing")
        hrt_values = 0.5 * (edges[:-1] + edges[1:])
    elif "hrt_values_s" in raw:
        hrt_values = np.asarray(raw["hrt_values_s"], dtype=float)
        if np.any(np.diff(hrt_values) <= 0):
            raise BehaviorModelError(f"{name}: hrt values not increasing")
    else:
        raise BehaviorModelError(f"{name}: missing hrt_bin_edges_s (or hrt_values_s)")
    if np.any(hrt_values < 0):
        raise BehaviorModelError(f"{name}: hrt must be non-negative")
    try:
        hv, hw = _check_weights(hrt_values, raw["hrt_weights"], f"{name}.hrt")
        jv, jw = _check_weights(raw["jerk_mps3"], raw["jerk_weights"], f"{name}.jerk")
        av, aw = _check_weights(raw["a_ss_mps2"], raw["a_ss_weights"], f"{name}.a_ss")
    except KeyError as exc:
        raise BehaviorModelError(f"{name}: missing field {exc.args[0]}") from None
    if any(j >= 0 for j in jv):
        raise BehaviorModelError(f"{name}: jerk values must be negative")
    if any(a >= 0 for a in av):
        raise BehaviorModelError(f"{name}: a_ss values must be negative")
    return ModelEntry(hv, hw, jv, jw, av, aw, p_nonreact, mode)


def _parse_key(key: str, name: str):
    try:
        return ConflictType(key)
    except ValueError:
        raise BehaviorModelError(f"{name}: unknown conflict type {key!r}") from None


def behavior_model_from_dict(doc: dict) -> BehaviorModel:
    if "default" not in doc:
        raise BehaviorModelError("behaviour model needs a 'default' entry")
    entries = {(None, None): _parse_entry(doc["default"], "default")}
    capability = dict(DEFAULT_CAPABILITY)
    for cls, val in doc.get("capability_mps2", {}).items():
        try:
            capability[AgentClass(cls)] = float(val)
        except ValueError:
            raise BehaviorModelError(f"capability_mps2: unknown agent class {cls!r}") from None
    if any(v >= 0 for v in capability.values()):
        raise BehaviorModelError("capability_mps2 values must be negative")
    for key, table in doc.get("entries", {}).items():
        ctype = _parse_key(key, f"entries.{key}")
        if not isinstance(table, dict):
            raise BehaviorModelError(f"entries.{key}: expected a table")
        for sub, raw in table.items():
            if sub == "default":
                entries[(ctype, None)] = _parse_entry(raw, f"entries.{key}.default")
                continue
            try:
                cls = AgentClass(sub)
            except ValueError:
                raise BehaviorModelError(f"entries.{key}: unknown agent class {sub!r}") from None
            entries[(ctype, cls)] = _parse_entry(raw, f"entries.{key}.{sub}")
    return BehaviorModel(entries=entries, capability=capability)


def load_behavior_model(config: Union[bytes, str, IO], fmt: Optional[str] = None) -> BehaviorModel:
    """Load a behaviour model from TOML or JSON text.

    ``fmt`` is ``"toml"`` or ``"json"``; when omitted JSON is tried first.
    """
    if hasattr(config, "read"):
        config = config.read()
    if isinstance(config, bytes):
        config = config.decode("utf-8")
    if fmt is None:
        fmt = "json" if config.lstrip().startswith("{") else "toml"
    try:
        doc = json.loads(config) if fmt == "json" else tomllib.loads(config)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise BehaviorModelError(f"malformed behaviour model: {exc}") from None
    return behavior_model_from_dict(doc)


def default_behavior_model() -> BehaviorModel:
    """The shipped placeholder model (not literature data)."""
    text = resources.files("fraccol").joinpath("data/default_behavior.toml").read_text("utf-8")
    return load_behavior_model(text, "toml")


def single_cell_model(params: ReactionParams, p_nonreact: float = 0.0) -> BehaviorModel:
    entry = ModelEntry(
        (params.hrt,), (1.0,), (params.jerk,), (1.0,), (params.a_ss,), (1.0,), p_nonreact, "independent"
    )
    return BehaviorModel(entries={(None, None): entry})


def enumerate_cells(
    model: BehaviorModel, ctype: Optional[ConflictType], agent_class: Optional[AgentClass]
) -> list[ParameterCell]:
    """Weighted parameter lattice for one responder, hrt-major then jerk then a_ss.

    Steady-state decelerations beyond the class's capability are dropped and
    the remaining a_ss weights renormalised. The non-reactive atom, when
    ``p_nonreact > 0``, comes last.
    """
    entry = model.entry(ctype, agent_class)
    cap = model.capability.get(agent_class, -np.inf) if agent_class is not None else -np.inf
    scale = 1.0 - entry.p_nonreact
    cells: list[ParameterCell] = []
    if entry.joint_mode == "joint":
        rows = [r for r in entry.joint_table if r[2] >= cap]
        if not rows:
            raise BehaviorModelError(f"no joint-table row within the {agent_class} capability")
        total = math.fsum(r[3] for r in rows)
        for hrt, jerk, a_ss, w in rows:
            cells.append(ParameterCell(ReactionParams(hrt, jerk, a_ss), scale * w / total))
    else:
        keep = [(a, w) for a, w in zip(entry.a_ss_values, entry.a_ss_weights) if a >= cap]
        if not keep:
            raise BehaviorModelError(f"no a_ss value within the {agent_class} capability")
        a_total = math.fsum(w for _, w in keep)
        for (h, hw), (j, jw), (a, aw) in itertools.product(
            zip(entry.hrt_values, entry.hrt_weights), zip(entry.jerk_values, entry.jerk_weights), keep
        ):
            cells.append(ParameterCell(ReactionParams(h, j, a), scale * hw * jw * (aw / a_total)))
    if entry.p_nonreact > 0:
        cells.append(ParameterCell(None, entry.p_nonreact))
    return cells


def sample_cell(cells: list[ParameterCell], rng: np.random.Generator) -> ParameterCell:
    w = np.array([c.weight for c in cells])
    return cells[int(rng.choice(len(cells), p=w / w.sum()))]


# ---------------------------------------------------------------------------
# Counterfactual trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LoggedPath:
    """Arc-length parameterisation of a track's logged path polyline."""

    arc_at_sample: np.ndarray  # cumulative arc length at every sample
    arc: np.ndarray  # strictly increasing vertex arc lengths
    px: np.ndarray
    py: np.ndarray
    seg_heading: np.ndarray

    @classmethod
    def from_track(cls, track: AgentTrack, min_seg: float = 1e-9) -> LoggedPath:
        seg = np.hypot(np.diff(track.x), np.diff(track.y))
        arc_at_sample = np.concatenate([[0.0], np.cumsum(seg)])
        keep = np.concatenate([[True], seg > min_seg])
        px, py, arc = track.x[keep], track.y[keep], arc_at_sample[keep]
        if len(px) < 2:
            # stationary track: a unit stub along the first logged heading
            h = float(track.heading[0])
            px = np.array([px[0], px[0] + math.cos(h)])
            py = np.array([py[0], py[0] + math.sin(h)])
            arc = np.array([arc[0], arc[0] + 1.0])
        seg_heading = np.arctan2(np.diff(py), np.diff(px))
        return cls(
            arc_at_sample,
            np.ascontiguousarray(arc),
            np.ascontiguousarray(px, dtype=float),
            np.ascontiguousarray(py, dtype=float),
            seg_heading,
        )

    def arc_at_time(self, track: AgentTrack, tq: float) -> float:
        return float(np.interp(tq, track.t, self.arc_at_sample))


def _value_at(t: np.ndarray, col: np.ndarray, tq: float) -> float:
    k = int(np.searchsorted(t, tq))
    for j in (k - 1, k):
        if 0 <= j < len(t) and abs(t[j] - tq) <= _TIME_EPS:
            return float(col[j])
    return float(np.interp(tq, t, col))


def _continue_along_path(
    track: AgentTrack, path: LoggedPath, t_anchor: float, arc: np.ndarray, speed, accel
) -> AgentTrack:
    """Replace samples after ``t_anchor`` with states at arc lengths ``arc``."""
    t = track.t
    tail = t > t_anchor + _TIME_EPS
    x = np.array(track.x)
    y = np.array(track.y)
    h = np.array(track.heading)
    v = np.array(track.speed)
    a = np.array(track.accel_long)
    if tail.any():
        xs, ys, hs = kernels.follow_path(path.arc, path.px, path.py, path.seg_heading, np.ascontiguousarray(arc))
        x[tail], y[tail], h[tail] = xs, ys, wrap_angle(hs)
        v[tail] = speed
        a[tail] = accel
    return track.with_states(t, x, y, h, v, a)


def nrm_response(responder: AgentTrack, por_t: float, path: Optional[LoggedPath] = None) -> AgentTrack:
    """No-reaction baseline: logged up to ``por_t``, then the speed at ``por_t``
    held along the logged path (extended along its final tangent)."""
    path = path or LoggedPath.from_track(responder)
    v0 = max(_value_at(responder.t, responder.speed, por_t), 0.0)
    s0 = path.arc_at_time(responder, por_t)
    tail_t = responder.t[responder.t > por_t + _TIME_EPS]
    return _continue_along_path(responder, path, por_t, s0 + v0 * (tail_t - por_t), v0, 0.0)


def synthesize_response(
    responder: AgentTrack,
    por_t: float,
    params: ReactionParams,
    dt: Optional[float] = None,
    *,
    pre_onset: str = PRE_ONSET_HOLD,
    path: Optional[LoggedPath] = None,
) -> AgentTrack:
    """Brake-only counterfactual of ``responder`` for one reaction cell.

    Brake onset is at ``por_t + params.hrt``. Before onset the responder
    either holds its speed at ``por_t`` (``pre_onset="hold"``) or follows the
    logged trajectory (``"logged"``). From onset, acceleration ramps at
    ``params.jerk`` toward ``params.a_ss`` and holds it until the agent stops;
    the starting acceleration is the one at onset, limited to ``[a_ss, 0]``.
    Motion follows the logged path by arc length; stopped agents stay put.
    ``dt`` is accepted for interface symmetry; the output keeps the input
    timestamps.
    """
    if pre_onset not in PRE_ONSET_MODES:
        raise ValueError(f"pre_onset must be one of {PRE_ONSET_MODES}")
    path = path or LoggedPath.from_track(responder)
    t = responder.t
    t_on = por_t + params.hrt
    if t_on > t[-1] + _TIME_EPS:
        if pre_onset == PRE_ONSET_LOGGED:
            return responder
        return nrm_response(responder, por_t, path)

    if pre_onset == PRE_ONSET_LOGGED:
        t_anchor = t_on
        v_on = max(_value_at(t, responder.speed, t_on), 0.0)
        a_on = _value_at(t, responder.accel_long, t_on)
        s_on = path.arc_at_time(responder, t_on)
        hold_speed = None
    else:
        t_anchor = por_t
        hold_speed = max(_value_at(t, responder.speed, por_t), 0.0)
        v_on, a_on = hold_speed, 0.0
        s_on = path.arc_at_time(responder, por_t) + hold_speed * params.hrt

    a0 = min(max(a_on, params.a_ss), 0.0)
    tail_t = t[t > t_anchor + _TIME_EPS]
    tau = np.ascontiguousarray(tail_t - t_on)
    s, v, a = kernels.brake_profile(tau, v_on, a0, params.jerk, params.a_ss)
    if hold_speed is not None:
        # between the point of reaction and onset the speed is held
        pre = tau <= 0.0
        s = np.where(pre, hold_speed * (tail_t - t_on), s)
        a = np.where(pre, 0.0, a)
    return _continue_along_path(responder, path, t_anchor, s_on + s, v, a)
