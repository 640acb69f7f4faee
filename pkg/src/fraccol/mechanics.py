"""Contact detection between oriented footprints, planar impulse-momentum
solution, and delta-v / contact-speed severity mapping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .enums import AgentClass, SeverityLevel
from .scene import AgentTrack, ConflictScene, wrap_angle

MPH = 0.44704  # m/s, exact


@dataclass(frozen=True)
class CrashParams:
    restitution: float = 0.1
    friction: float = 0.55
    mass_per_area: float = 175.0  # kg/m^2, passenger vehicles and trucks
    class_mass: dict = field(
        default_factory=lambda: {
            AgentClass.MOTORCYCLE: 240.0,
            AgentClass.CYCLIST: 90.0,
            AgentClass.PEDESTRIAN: 75.0,
        }
    )
    vehicle_thresholds_mph: tuple = (6.0, 20.0)  # L2|L1, L1|L0
    vru_thresholds_mph: tuple = (5.0, 15.0)
    penetration_tol: float = 0.01  # m
    time_tol: float = 1e-4  # s, contact-time bisection resolution

    def validate(self) -> None:
        if not 0.0 <= self.restitution <= 1.0:
            raise ValueError("restitution must lie in [0, 1]")
        if not 0.0 <= self.friction <= 2.0:
            raise ValueError("friction must lie in [0, 2]")
        if not 20.0 <= self.mass_per_area <= 2000.0:
            raise ValueError("mass_per_area must lie in [20, 2000] kg/m^2")
        for cls, m in self.class_mass.items():
            if not m > 0:
                raise ValueError(f"class mass for {cls} must be positive")
        for name in ("vehicle_thresholds_mph", "vru_thresholds_mph"):
            lo, hi = getattr(self, name)
            if not 0 < lo < hi:
                raise ValueError(f"{name} must be increasing and positive")
        if not 0 < self.time_tol <= 1e-3:
            raise ValueError("time_tol must lie in (0, 1 ms]")


# ---------------------------------------------------------------------------
# Contact detection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BodyState:
    position: np.ndarray  # CG, m
    velocity: np.ndarray  # CG velocity, m/s
    yaw_rate: float  # rad/s
    heading: float


@dataclass(frozen=True)
class ContactState:
    t_contact: float
    point: np.ndarray
    normal: np.ndarray  # unit, from a toward b
    state_a: BodyState
    state_b: BodyState


def box_corners(x, y, h, length, width) -> np.ndarray:
    c, s = math.cos(h), math.sin(h)
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([x, y])


def _clip(subject: np.ndarray, clipper: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a polygon by a counter-clockwise convex polygon."""
    out = list(subject)
    for i in range(len(clipper)):
        if not out:
            break
        a, b = clipper[i], clipper[(i + 1) % len(clipper)]
        edge = b - a

        def inside(p):
            return edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0]) >= 0.0

        def cross_point(p, q):
            d = q - p
            den = edge[0] * d[1] - edge[1] * d[0]
            u = (edge[1] * (p[0] - a[0]) - edge[0] * (p[1] - a[1])) / den
            return p + u * d

        src, out = out, []
        for j in range(len(src)):
            p, q = src[j], src[(j + 1) % len(src)]
            if inside(q):
                if not inside(p):
                    out.append(cross_point(p, q))
                out.append(q)
            elif inside(p):
                out.append(cross_point(p, q))
    return np.array(out).reshape(-1, 2)


def polygon_centroid(poly: np.ndarray) -> np.ndarray:
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    area = 0.5 * cr.sum()
    if abs(area) < 1e-12:
        return poly.mean(axis=0)
    return np.array([((x + xn) * cr).sum(), ((y + yn) * cr).sum()]) / (6.0 * area)


def _min_penetration_normal(ca: np.ndarray, cb: np.ndarray, ha, hb, da, db) -> np.ndarray:
    """Separating axis with the least overlap, oriented from a toward b."""
    best, axis = np.inf, None
    d = cb - ca
    for h in (ha, ha + 0.5 * np.pi, hb, hb + 0.5 * np.pi):
        u = np.array([math.cos(h), math.sin(h)])
        ra = sum(abs(u @ v) * r for v, r in zip(_axes(ha), da))
        rb = sum(abs(u @ v) * r for v, r in zip(_axes(hb), db))
        pen = ra + rb - abs(u @ d)
        if pen < best - 1e-12:
            best, axis = pen, u
    if axis @ d < 0:
        axis = -axis
    return axis


def _axes(h):
    return (np.array([math.cos(h), math.sin(h)]), np.array([-math.sin(h), math.cos(h)]))


def _yaw_rate(track: AgentTrack, tq: float) -> float:
    t = track.t
    k = int(np.clip(np.searchsorted(t, tq, side="right"), 1, len(t) - 1))
    dh = float(wrap_angle(track.heading[k] - track.heading[k - 1]))
    return dh / float(t[k] - t[k - 1])


def _body_state(track: AgentTrack, tq: float) -> BodyState:
    x, y, h, v = (float(q) for q in track.pose_at(tq))
    return BodyState(
        position=np.array([x, y]),
        velocity=v * np.array([math.cos(h), math.sin(h)]),
        yaw_rate=_yaw_rate(track, tq),
        heading=h,
    )


def _common_grid(a: AgentTrack, b: AgentTrack):
    if len(a.t) == len(b.t) and np.array_equal(a.t, b.t):
        return a.t, (a.x, a.y, a.heading), (b.x, b.y, b.heading)
    lo, hi = max(a.start, b.start), min(a.end, b.end)
    if hi < lo:
        return None
    dt = min(float(np.median(np.diff(a.t))), float(np.median(np.diff(b.t))))
    n = int(math.floor((hi - lo) / dt + 1e-9)) + 1
    t = lo + dt * np.arange(n)
    pa = a.pose_at(t)[:3]
    pb = b.pose_at(t)[:3]
    return t, pa, pb


def contact_at(track_a: AgentTrack, track_b: AgentTrack, tc: float, tol: float = 0.01) -> ContactState:
    sa, sb = _body_state(track_a, tc), _body_state(track_b, tc)
    ra = box_corners(*sa.position, sa.heading, track_a.length, track_a.width)
    rb = box_corners(*sb.position, sb.heading, track_b.length, track_b.width)
    poly = _clip(ra, rb)
    if len(poly) == 0:
        # grazing contact: retry against b grown by the penetration tolerance
        rb_grown = box_corners(*sb.position, sb.heading, track_b.length + 2 * tol, track_b.width + 2 * tol)
        poly = _clip(ra, rb_grown)
    point = polygon_centroid(poly) if len(poly) else 0.5 * (sa.position + sb.position)
    normal = _min_penetration_normal(
        sa.position,
        sb.position,
        sa.heading,
        sb.heading,
        (0.5 * track_a.length, 0.5 * track_a.width),
        (0.5 * track_b.length, 0.5 * track_b.width),
    )
    return ContactState(t_contact=float(tc), point=point, normal=normal, state_a=sa, state_b=sb)


def detect_collision(
    track_a: AgentTrack, track_b: AgentTrack, params: Optional[CrashParams] = None
) -> Optional[ContactState]:
    """Earliest footprint overlap over the common time span, or ``None``.

    The first overlapping grid step is bracketed and the contact time refined
    by bisection to ``params.time_tol``.
    """
    params = params or CrashParams()
    grid = _common_grid(track_a, track_b)
    if grid is None:
        return None
    t, (ax, ay, ah), (bx, by, bh) = grid
    a_hl, a_hw = 0.5 * track_a.length, 0.5 * track_a.width
    b_hl, b_hw = 0.5 * track_b.length, 0.5 * track_b.width
    k = kernels.first_overlap(
        np.ascontiguousarray(ax),
        np.ascontiguousarray(ay),
        np.ascontiguousarray(ah),
        np.ascontiguousarray(bx),
        np.ascontiguousarray(by),
        np.ascontiguousarray(bh),
        a_hl,
        a_hw,
        b_hl,
        b_hw,
    )
    if k < 0:
        return None
    if k == 0:
        tc = float(t[0])
    else:
        tc = kernels.refine_contact(
            float(t[k - 1]),
            float(t[k]),
            np.array([ax[k - 1], ay[k - 1], ah[k - 1]]),
            np.array([ax[k], ay[k], ah[k]]),
            np.array([bx[k - 1], by[k - 1], bh[k - 1]]),
            np.array([bx[k], by[k], bh[k]]),
            a_hl,
            a_hw,
            b_hl,
            b_hw,
            params.time_tol,
        )
    return contact_at(track_a, track_b, tc, params.penetration_tol)


# ---------------------------------------------------------------------------
# Impulse-momentum
# ---------------------------------------------------------------------------


def estimate_inertia(track: AgentTrack, params: Optional[CrashParams] = None) -> tuple[float, float]:
    """Mass (kg) and yaw moment of inertia (kg m^2) of a track's agent."""
    params = params or CrashParams()
    if track.mass is not None:
        mass = float(track.mass)
    elif track.agent_class in params.class_mass:
        mass = float(params.class_mass[track.agent_class])
    else:
        mass = params.mass_per_area * track.length * track.width
    return mass, mass * (track.length**2 + track.width**2) / 12.0


@dataclass(frozen=True)
class ImpulseSolution:
    impulse: np.ndarray  # applied to b; a receives the negative
    velocity_a: np.ndarray
    velocity_b: np.ndarray
    yaw_rate_a: float
    yaw_rate_b: float
    delta_v_a: float
    delta_v_b: float
    sliding: bool = False


def _cross(r, v) -> float:
    return float(r[0] * v[1] - r[1] * v[0])


def _k_matrix(r, m, inertia) -> np.ndarray:
    rx, ry = r
    return np.eye(2) / m + np.array([[ry * ry, -rx * ry], [-rx * ry, rx * rx]]) / inertia


def solve_impulse(
    contact: ContactState,
    inertia_a: tuple[float, float],
    inertia_b: tuple[float, float],
    restitution: float = 0.1,
    friction: float = 0.55,
) -> ImpulseSolution:
    """Planar rigid-body impulse at the contact point.

    Normal restitution with coefficient ``restitution``; the tangential
    impulse stops relative slip at the contact point unless that needs more
    than ``friction`` times the normal impulse, in which case the two bodies
    slide with the tangential impulse at the friction cap.
    """
    (ma, ia), (mb, ib) = inertia_a, inertia_b
    sa, sb = contact.state_a, contact.state_b
    n = np.asarray(contact.normal, dtype=float)
    tang = np.array([-n[1], n[0]])
    ra = contact.point - sa.position
    rb = contact.point - sb.position
    ua = sa.velocity + sa.yaw_rate * np.array([-ra[1], ra[0]])
    ub = sb.velocity + sb.yaw_rate * np.array([-rb[1], rb[0]])
    u = ub - ua
    un = float(u @ n)
    sliding = False
    if un >= 0.0:
        J = np.zeros(2)
    else:
        K = _k_matrix(ra, ma, ia) + _k_matrix(rb, mb, ib)
        J = np.linalg.solve(K, -restitution * un * n - u)
        jn, jt = float(J @ n), float(J @ tang)
        if abs(jt) > friction * jn * (1.0 + 1e-12) or jn < 0.0:
            d = n + friction * math.copysign(1.0, jt) * tang
            den = float(n @ K @ d)
            if den > 0.0:
                J = (-(1.0 + restitution) * un / den) * d
                sliding = True
    return ImpulseSolution(
        impulse=J,
        velocity_a=sa.velocity - J / ma,
        velocity_b=sb.velocity + J / mb,
        yaw_rate_a=sa.yaw_rate - _cross(ra, J) / ia,
        yaw_rate_b=sb.yaw_rate + _cross(rb, J) / ib,
        delta_v_a=float(np.hypot(*J)) / ma,
        delta_v_b=float(np.hypot(*J)) / mb,
        sliding=sliding,
    )


# ---------------------------------------------------------------------------
# Severity
# ---------------------------------------------------------------------------


def _band(value: float, lo_mph: float, hi_mph: float) -> SeverityLevel:
    if value >= hi_mph * MPH:
        return SeverityLevel.L0
    if value >= lo_mph * MPH:
        return SeverityLevel.L1
    return SeverityLevel.L2


def severity_vehicle(
    delta_v_responder: float, delta_v_initiator: float, thresholds_mph: tuple = (6.0, 20.0)
) -> SeverityLevel:
    """Worse of the two vehicles' levels; thresholds belong to the more severe band."""
    return _band(max(delta_v_responder, delta_v_initiator), *thresholds_mph)


def severity_vru(relative_contact_speed: float, thresholds_mph: tuple = (5.0, 15.0)) -> SeverityLevel:
    return _band(relative_contact_speed, *thresholds_mph)


@dataclass(frozen=True)
class CrashOutcome:
    severity: SeverityLevel
    contact: Optional[ContactState] = None
    delta_v: Optional[tuple[float, float]] = None  # (a, b)
    relative_speed: Optional[float] = None  # VRU contacts only

    @property
    def t_contact(self) -> Optional[float]:
        return None if self.contact is None else self.contact.t_contact


def assess_contact(
    contact: Optional[ContactState], track_a: AgentTrack, track_b: AgentTrack, params: Optional[CrashParams] = None
) -> CrashOutcome:
    params = params or CrashParams()
    if contact is None:
        return CrashOutcome(SeverityLevel.Lnone)
    if track_a.agent_class.is_vru or track_b.agent_class.is_vru:
        rel = float(np.hypot(*(contact.state_b.velocity - contact.state_a.velocity)))
        return CrashOutcome(severity_vru(rel, params.vru_thresholds_mph), contact, relative_speed=rel)
    sol = solve_impulse(
        contact,
        estimate_inertia(track_a, params),
        estimate_inertia(track_b, params),
        params.restitution,
        params.friction,
    )
    sev = severity_vehicle(sol.delta_v_a, sol.delta_v_b, params.vehicle_thresholds_mph)
    return CrashOutcome(sev, contact, delta_v=(sol.delta_v_a, sol.delta_v_b))


def assess_tracks(track_a: AgentTrack, track_b: AgentTrack, params: Optional[CrashParams] = None) -> CrashOutcome:
    """Detect first contact between two tracks and map it to a severity."""
    params = params or CrashParams()
    return assess_contact(detect_collision(track_a, track_b, params), track_a, track_b, params)


def gt_outcome(scene: ConflictScene, params: Optional[CrashParams] = None):
    """Severity and first contact of the logged tracks, unmodified."""
    out = assess_tracks(scene.track_a, scene.track_b, params)
    return out.severity, out.contact
