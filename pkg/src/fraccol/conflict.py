"""Heuristic conflict classification, role assignment and point-of-reaction
detection. Scene annotations, when present, always override the heuristics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .enums import ConflictType
from .scene import AgentTrack, ConflictScene, wrap_angle

_EPS = 1e-9


@dataclass(frozen=True)
class ConflictThresholds:
    corridor_inflation: float = 0.2  # m added to each side of a corridor
    corridor_projection: float = 50.0  # m the corridor extends past the path end
    same_direction_deg: float = 30.0
    opposite_direction_deg: float = 150.0
    turn_deg: float = 45.0
    stationary_speed: float = 0.5  # m/s
    decel_trigger: float = -1.5  # m/s^2
    decel_sustain: float = 0.2  # s
    lateral_speed_trigger: float = 0.3  # m/s
    drift_min: float = 0.3  # m, head-on lateral drift needed to name an initiator
    vertex_spacing: float = 1.0  # m, corridor polyline decimation

    def validate(self) -> None:
        if not 0 <= self.corridor_inflation <= 2:
            raise ValueError("corridor_inflation must lie in [0, 2] m")
        if not 0 <= self.corridor_projection <= 500:
            raise ValueError("corridor_projection must lie in [0, 500] m")
        if not 0 < self.same_direction_deg < self.opposite_direction_deg < 180:
            raise ValueError("direction thresholds must satisfy 0 < same < opposite < 180 deg")
        if not self.decel_trigger < 0:
            raise ValueError("decel_trigger must be negative")
        if not self.decel_sustain >= 0:
            raise ValueError("decel_sustain must be non-negative")
        if not self.lateral_speed_trigger > 0:
            raise ValueError("lateral_speed_trigger must be positive")


@dataclass(frozen=True)
class Unclassifiable:
    reason: str

    def __bool__(self) -> bool:
        return False


class UnclassifiableError(ValueError):
    """Roles cannot be assigned to the scene."""


class PoRError(ValueError):
    """No point of reaction fires; the scene is not a conflict under this model."""


@dataclass(frozen=True)
class RoleAssignment:
    initiator_id: str
    responder_id: str
    por_t: Optional[float] = None
    provenance: str = "heuristic"  # or "annotated"


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


def _footprint(x, y, h, length, width) -> np.ndarray:
    """Corners, shape (n, 4, 2), counter-clockwise."""
    c, s = np.cos(h)[:, None], np.sin(h)[:, None]
    lx = np.array([1, -1, -1, 1]) * 0.5 * length
    ly = np.array([1, 1, -1, -1]) * 0.5 * width
    cx = x[:, None] + c * lx - s * ly
    cy = y[:, None] + s * lx + c * ly
    return np.stack([cx, cy], axis=-1)


def _seg_point_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Distances from points (N, 2) to segments a->b (M, 2); returns (N, M) and the
    projection parameter."""
    ab = b - a
    den = np.maximum((ab**2).sum(-1), 1e-18)
    ap = p[:, None, :] - a[None, :, :]
    u = np.clip((ap * ab[None]).sum(-1) / den, 0.0, 1.0)
    d = ap - u[..., None] * ab[None]
    return np.hypot(d[..., 0], d[..., 1]), u


def _segments_intersect(p1, p2, q1, q2) -> np.ndarray:
    """Pairwise proper-or-touching intersection of segments p (N) and q (M)."""

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    P1, P2 = p1[:, None], p2[:, None]
    Q1, Q2 = q1[None], q2[None]
    o1 = orient(P1, P2, Q1)
    o2 = orient(P1, P2, Q2)
    o3 = orient(Q1, Q2, P1)
    o4 = orient(Q1, Q2, P2)
    return (o1 * o2 <= 0) & (o3 * o4 <= 0)


@dataclass(frozen=True)
class Corridor:
    """Strip swept by an agent's footprint along its path, inflated on both sides
    and projected forward along the final tangent."""

    pts: np.ndarray  # (M + 1, 2) polyline
    half_width: float

    @classmethod
    def from_track(cls, track: AgentTrack, th: ConflictThresholds) -> Corridor:
        xy = np.stack([track.x, track.y], axis=1)
        seg = np.hypot(*np.diff(xy, axis=0).T)
        arc = np.concatenate([[0.0], np.cumsum(seg)])
        keep = [0]
        for i in range(1, len(xy)):
            if arc[i] - arc[keep[-1]] >= th.vertex_spacing:
                keep.append(i)
        if arc[-1] - arc[keep[-1]] > 1e-9:
            keep.append(len(xy) - 1)
        pts = xy[keep]
        if len(pts) < 2:
            h = float(track.heading[0])
            u0 = u1 = np.array([math.cos(h), math.sin(h)])
            pts = np.vstack([pts[:1], pts[:1]])
        else:
            u0 = (pts[1] - pts[0]) / np.hypot(*(pts[1] - pts[0]))
            u1 = (pts[-1] - pts[-2]) / np.hypot(*(pts[-1] - pts[-2]))
        half_len = 0.5 * track.length
        head = pts[0] - half_len * u0
        tail = pts[-1] + (half_len + th.corridor_projection) * u1
        pts = np.vstack([head, pts[:1], pts[1:-1], pts[-1:], tail]) if len(pts) > 1 else np.vstack([head, tail])
        return cls(pts=pts, half_width=0.5 * track.width + th.corridor_inflation)

    def distance(self, p: np.ndarray) -> np.ndarray:
        d, _ = _seg_point_distance(p.reshape(-1, 2), self.pts[:-1], self.pts[1:])
        return d.min(axis=1).reshape(p.shape[:-1])

    def signed_offset(self, p: np.ndarray) -> np.ndarray:
        """Lateral offset from the nearest polyline segment; left is positive."""
        a, b = self.pts[:-1], self.pts[1:]
        d, u = _seg_point_distance(p, a, b)
        j = d.argmin(axis=1)
        ab = (b - a)[j]
        rel = p - a[j]
        side = np.sign(ab[:, 0] * rel[:, 1] - ab[:, 1] * rel[:, 0])
        return side * d[np.arange(len(p)), j]

    def occupied_by(self, corners: np.ndarray) -> np.ndarray:
        """Per-sample flag: footprint (n, 4, 2) overlaps the corridor."""
        n = corners.shape[0]
        near = self.distance(corners).min(axis=1) <= self.half_width
        e1 = corners.reshape(-1, 2)
        e2 = np.roll(corners, -1, axis=1).reshape(-1, 2)
        cross = _segments_intersect(e1, e2, self.pts[:-1], self.pts[1:]).any(axis=1).reshape(n, 4).any(axis=1)
        return near | cross

    def intersects(self, other: Corridor) -> bool:
        return bool(_segments_intersect(self.pts[:-1], self.pts[1:], other.pts[:-1], other.pts[1:]).any())


@dataclass(frozen=True)
class _Aligned:
    """Both agents sampled on one time grid over the common span."""

    t: np.ndarray
    a: tuple  # x, y, heading, speed
    b: tuple
    track_a: AgentTrack
    track_b: AgentTrack

    def states(self, agent_id: str):
        return self.a if agent_id == self.track_a.agent_id else self.b


def _align(scene: ConflictScene) -> _Aligned:
    a, b = scene.track_a, scene.track_b
    lo, hi = scene.common_span
    if len(a.t) == len(b.t) and np.array_equal(a.t, b.t):
        t = a.t
        return _Aligned(t, (a.x, a.y, a.heading, a.speed), (b.x, b.y, b.heading, b.speed), a, b)
    ref = a if len(a.t) >= len(b.t) else b
    t = ref.t[(ref.t >= lo - _EPS) & (ref.t <= hi + _EPS)]
    if len(t) < 2:
        t = np.array([lo, hi])
    return _Aligned(t, a.pose_at(t), b.pose_at(t), a, b)


def _corners(track: AgentTrack, states) -> np.ndarray:
    x, y, h, _ = states
    return _footprint(np.asarray(x), np.asarray(y), np.asarray(h), track.length, track.width)


def _deriv(t: np.ndarray, v: np.ndarray) -> np.ndarray:
    d = np.empty_like(v, dtype=float)
    d[1:-1] = (v[2:] - v[:-2]) / (t[2:] - t[:-2])
    d[0] = (v[1] - v[0]) / (t[1] - t[0])
    d[-1] = (v[-1] - v[-2]) / (t[-1] - t[-2])
    return d


def _heading_change(h: np.ndarray) -> float:
    u = np.unwrap(h)
    return float(u[-1] - u[0])


def _first_entry(flags: np.ndarray) -> Optional[int]:
    """Index of the first outside->inside transition, or None."""
    if len(flags) == 0 or flags[0]:
        return None
    idx = np.flatnonzero(flags)
    return int(idx[0]) if len(idx) else None


class _SceneGeometry:
    def __init__(self, scene: ConflictScene, th: ConflictThresholds):
        self.scene = scene
        self.th = th
        self.al = _align(scene)
        self.corridor = {tr.agent_id: Corridor.from_track(tr, th) for tr in scene.tracks}

    def occupancy(self, agent_id: str) -> np.ndarray:
        """Flags: ``agent_id``'s footprint inside the other agent's corridor."""
        tr = self.scene.track(agent_id)
        other = self.scene.other(agent_id).agent_id
        return self.corridor[other].occupied_by(_corners(tr, self.al.states(agent_id)))

    def lateral_offset(self, agent_id: str) -> np.ndarray:
        x, y, _, _ = self.al.states(agent_id)
        other = self.scene.other(agent_id).agent_id
        return self.corridor[other].signed_offset(np.stack([x, y], axis=1))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def classify_conflict(
    scene: ConflictScene, thresholds: Optional[ConflictThresholds] = None
) -> Union[ConflictType, Unclassifiable]:
    """Conflict type from the annotation, else from relative-heading and
    corridor-geometry rules."""
    if scene.annotations.conflict_type is not None:
        return scene.annotations.conflict_type
    th = thresholds or ConflictThresholds()
    g = _SceneGeometry(scene, th)
    a, b = scene.track_a, scene.track_b
    sa, sb = g.al.a, g.al.b
    rel = abs(float(wrap_angle(sb[2][0] - sa[2][0])))
    rel_deg = math.degrees(rel)
    crossing_paths = g.corridor[a.agent_id].intersects(g.corridor[b.agent_id])

    if (a.agent_class.is_vru or b.agent_class.is_vru) and rel_deg >= th.same_direction_deg:
        if crossing_paths:
            return ConflictType.VRU_CROSSING
        return Unclassifiable("vulnerable road user path never meets the vehicle corridor")

    turns = {tr.agent_id: _heading_change(g.al.states(tr.agent_id)[2]) for tr in scene.tracks}
    turner = max(turns, key=lambda k: abs(turns[k]))
    if math.degrees(abs(turns[turner])) >= th.turn_deg:
        if turns[turner] > 0:
            return ConflictType.LEFT_TURN_ACROSS_PATH
        return ConflictType.RIGHT_TURN_MERGE

    if rel_deg >= th.opposite_direction_deg:
        occ = g.occupancy(a.agent_id) | g.occupancy(b.agent_id)
        if occ.any():
            return ConflictType.HEAD_ON
        return Unclassifiable("opposite-direction tracks never share a corridor")
    if rel_deg >= th.same_direction_deg:
        if crossing_paths:
            return ConflictType.CROSSING_STRAIGHT
        return Unclassifiable("crossing headings but corridors never intersect")

    occ_a, occ_b = g.occupancy(a.agent_id), g.occupancy(b.agent_id)
    moving = {a.agent_id: sa[3][0] >= th.stationary_speed, b.agent_id: sb[3][0] >= th.stationary_speed}
    for tr, occ in ((a, occ_a), (b, occ_b)):
        other = scene.other(tr.agent_id).agent_id
        if not moving[tr.agent_id] and moving[other] and _first_entry(occ) is not None:
            return ConflictType.PULLOUT
    if occ_a[0] or occ_b[0]:
        return ConflictType.REAR_END_LEAD_BRAKE
    if occ_a.any() or occ_b.any():
        return ConflictType.CUT_IN
    return Unclassifiable("same-direction tracks never share a corridor")


def _annotated_roles(scene: ConflictScene) -> Optional[RoleAssignment]:
    ann = scene.annotations
    ids = [tr.agent_id for tr in scene.tracks]
    if ann.initiator_id is None and ann.responder_id is None:
        return None
    init = ann.initiator_id
    resp = ann.responder_id
    if init is None:
        init = ids[1] if resp == ids[0] else ids[0]
    if resp is None:
        resp = ids[1] if init == ids[0] else ids[0]
    return RoleAssignment(init, resp, None, "annotated")


def assign_roles(
    scene: ConflictScene, ctype: ConflictType, thresholds: Optional[ConflictThresholds] = None
) -> RoleAssignment:
    """Initiator and responder (without a point of reaction)."""
    annotated = _annotated_roles(scene)
    if annotated is not None:
        return annotated
    th = thresholds or ConflictThresholds()
    g = _SceneGeometry(scene, th)
    a, b = scene.track_a, scene.track_b

    def roles(init: AgentTrack) -> RoleAssignment:
        return RoleAssignment(init.agent_id, scene.other(init.agent_id).agent_id)

    if ctype is ConflictType.REAR_END_LEAD_BRAKE:
        xa, ya, ha, _ = (s[0] for s in g.al.a)
        xb, yb, _, _ = (s[0] for s in g.al.b)
        ahead = math.cos(ha) * (xb - xa) + math.sin(ha) * (yb - ya)
        if abs(ahead) < _EPS:
            raise UnclassifiableError("ambiguous role: neither agent leads")
        return roles(b if ahead > 0 else a)

    if ctype is ConflictType.PULLOUT:
        va, vb = g.al.a[3][0], g.al.b[3][0]
        if (va < th.stationary_speed) != (vb < th.stationary_speed):
            return roles(a if va < th.stationary_speed else b)

    entry = {tr.agent_id: _first_entry(g.occupancy(tr.agent_id)) for tr in scene.tracks}
    ka, kb = entry[a.agent_id], entry[b.agent_id]
    if ka is not None or kb is not None:
        if kb is None or (ka is not None and ka < kb):
            return roles(a)
        if ka is None or kb < ka:
            return roles(b)

    if ctype is ConflictType.HEAD_ON:
        drift = {}
        for tr in scene.tracks:
            off = g.lateral_offset(tr.agent_id)
            drift[tr.agent_id] = float(np.max(np.abs(off - off[0])))
        da, db = drift[a.agent_id], drift[b.agent_id]
        if max(da, db) >= th.drift_min and abs(da - db) > _EPS:
            return roles(a if da > db else b)
    raise UnclassifiableError("ambiguous role: neither agent encroaches on the other's corridor first")


def detect_por(
    scene: ConflictScene,
    ctype: ConflictType,
    roles: RoleAssignment,
    thresholds: Optional[ConflictThresholds] = None,
) -> float:
    """Point of reaction: the annotation, else the first sample at which the
    conflict type's trigger fires."""
    if scene.annotations.por_t is not None:
        return float(scene.annotations.por_t)
    th = thresholds or ConflictThresholds()
    g = _SceneGeometry(scene, th)
    t = g.al.t
    init = scene.track(roles.initiator_id)
    ist = g.al.states(init.agent_id)
    inside = g.occupancy(init.agent_id)

    if ctype is ConflictType.REAR_END_LEAD_BRAKE:
        accel = _deriv(t, np.asarray(ist[3]))
        accel = np.clip(accel, -12.0, 12.0)
        braking = accel <= th.decel_trigger + _EPS
        for k in np.flatnonzero(braking & inside):
            window = (t >= t[k] - _EPS) & (t <= t[k] + th.decel_sustain + _EPS)
            if t[k] + th.decel_sustain <= t[-1] + _EPS and braking[window].all():
                return float(t[k])
    elif ctype in (ConflictType.CUT_IN, ConflictType.PULLOUT, ConflictType.RIGHT_TURN_MERGE):
        gap = np.abs(g.lateral_offset(init.agent_id))
        closing = -_deriv(t, gap)
        fire = np.flatnonzero(closing >= th.lateral_speed_trigger - _EPS)
        if len(fire):
            return float(t[fire[0]])
    elif ctype is ConflictType.HEAD_ON:
        rst = g.al.states(roles.responder_id)
        rng = np.hypot(np.asarray(ist[0]) - rst[0], np.asarray(ist[1]) - rst[1])
        closing = -_deriv(t, rng) > 0
        fire = np.flatnonzero(inside & closing)
        if len(fire):
            return float(t[fire[0]])
    else:
        fire = np.flatnonzero(inside)
        if len(fire):
            return float(t[fire[0]])
    raise PoRError("no PoR found")


def resolve_roles(
    scene: ConflictScene, thresholds: Optional[ConflictThresholds] = None
) -> tuple[ConflictType, RoleAssignment]:
    """Classification, roles and point of reaction in one call."""
    ctype = classify_conflict(scene, thresholds)
    if isinstance(ctype, Unclassifiable):
        raise UnclassifiableError(f"unclassifiable: {ctype.reason}")
    roles = assign_roles(scene, ctype, thresholds)
    por = detect_por(scene, ctype, roles, thresholds)
    prov = "annotated" if roles.provenance == "annotated" and scene.annotations.por_t is not None else "heuristic"
    return ctype, RoleAssignment(roles.initiator_id, roles.responder_id, por, prov)
