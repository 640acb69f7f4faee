"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Every kernel exists twice: a loop form compiled with ``numba.njit`` and a
vectorised numpy form. The module-level names (``first_overlap``,
``brake_profile``, ``follow_path``, ``refine_contact``) point at the numba
versions unless ``FRACCOL_NO_NUMBA`` is set to a truthy value or numba cannot
be imported. Both forms are importable explicitly for testing and
benchmarking (``*_numba`` / ``*_numpy``).
"""

from __future__ import annotations

import logging
import math
import os

import numpy as np

logger = logging.getLogger(__name__)

_FLAG = os.environ.get("FRACCOL_NO_NUMBA", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


def _njit(fn):
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True)(fn)


# ---------------------------------------------------------------------------
# Oriented rectangle separation (separating axis test)
# ---------------------------------------------------------------------------


def _separation_py(ax, ay, ah, a_hl, a_hw, bx, by, bh, b_hl, b_hw):
    """Largest signed gap over the four box axes; negative means overlap."""
    ca = math.cos(ah)
    sa = math.sin(ah)
    cb = math.cos(bh)
    sb = math.sin(bh)
    dx = bx - ax
    dy = by - ay
    # |cos| and |sin| of the relative heading
    c = abs(ca * cb + sa * sb)
    s = abs(ca * sb - sa * cb)
    g1 = abs(ca * dx + sa * dy) - (a_hl + b_hl * c + b_hw * s)
    g2 = abs(-sa * dx + ca * dy) - (a_hw + b_hl * s + b_hw * c)
    g3 = abs(cb * dx + sb * dy) - (b_hl + a_hl * c + a_hw * s)
    g4 = abs(-sb * dx + cb * dy) - (b_hw + a_hl * s + a_hw * c)
    return max(max(g1, g2), max(g3, g4))


_separation_nb = _njit(_separation_py)


def separation_numpy(ax, ay, ah, a_hl, a_hw, bx, by, bh, b_hl, b_hw):
    ca, sa = np.cos(ah), np.sin(ah)
    cb, sb = np.cos(bh), np.sin(bh)
    dx = np.asarray(bx) - ax
    dy = np.asarray(by) - ay
    c = np.abs(ca * cb + sa * sb)
    s = np.abs(ca * sb - sa * cb)
    g1 = np.abs(ca * dx + sa * dy) - (a_hl + b_hl * c + b_hw * s)
    g2 = np.abs(-sa * dx + ca * dy) - (a_hw + b_hl * s + b_hw * c)
    g3 = np.abs(cb * dx + sb * dy) - (b_hl + a_hl * c + a_hw * s)
    g4 = np.abs(-sb * dx + cb * dy) - (b_hw + a_hl * s + a_hw * c)
    return np.maximum(np.maximum(g1, g2), np.maximum(g3, g4))


def _first_overlap_loop(ax, ay, ah, bx, by, bh, a_hl, a_hw, b_hl, b_hw):
    reach = math.hypot(a_hl, a_hw) + math.hypot(b_hl, b_hw)
    reach2 = reach * reach
    for k in range(ax.shape[0]):
        dx = bx[k] - ax[k]
        dy = by[k] - ay[k]
        if dx * dx + dy * dy > reach2:
            continue
        if _separation_nb(ax[k], ay[k], ah[k], a_hl, a_hw, bx[k], by[k], bh[k], b_hl, b_hw) < 0.0:
            return k
    return -1


first_overlap_numba = _njit(_first_overlap_loop)


def first_overlap_numpy(ax, ay, ah, bx, by, bh, a_hl, a_hw, b_hl, b_hw):
    """Index of the first sample where the two boxes overlap, or -1."""
    hit = separation_numpy(ax, ay, ah, a_hl, a_hw, bx, by, bh, b_hl, b_hw) < 0.0
    if not hit.any():
        return -1
    return int(np.argmax(hit))


def _lerp_angle(h0, h1, f):
    d = (h1 - h0 + math.pi) % (2.0 * math.pi) - math.pi
    return h0 + f * d


_lerp_angle_nb = _njit(_lerp_angle)


def _make_refine(sep, lerp):
    def refine(t0, t1, pa0, pa1, pb0, pb1, a_hl, a_hw, b_hl, b_hw, tol):
        # pose rows are (x, y, heading); overlap holds at t1 and not at t0
        lo = 0.0
        hi = 1.0
        span = t1 - t0
        while (hi - lo) * span > tol:
            mid = 0.5 * (lo + hi)
            g = sep(
                pa0[0] + mid * (pa1[0] - pa0[0]),
                pa0[1] + mid * (pa1[1] - pa0[1]),
                lerp(pa0[2], pa1[2], mid),
                a_hl,
                a_hw,
                pb0[0] + mid * (pb1[0] - pb0[0]),
                pb0[1] + mid * (pb1[1] - pb0[1]),
                lerp(pb0[2], pb1[2], mid),
                b_hl,
                b_hw,
            )
            if g < 0.0:
                hi = mid
            else:
                lo = mid
        return t0 + hi * span

    return refine


refine_contact_numpy = _make_refine(_separation_py, _lerp_angle)
refine_contact_numba = _njit(_make_refine(_separation_nb, _lerp_angle_nb))


# ---------------------------------------------------------------------------
# Jerk-limited brake profile
# ---------------------------------------------------------------------------


def _brake_phases(v0, a0, jerk, a_ss):
    """Ramp duration, stop time, and speed/distance at the end of the ramp."""
    if math.isinf(jerk) or a0 <= a_ss:
        t_ramp = 0.0
    else:
        t_ramp = (a_ss - a0) / jerk
    if v0 <= 0.0:
        return 0.0, 0.0, 0.0, 0.0
    # first root of v0 + a0*t + jerk*t^2/2, written to avoid cancellation
    if t_ramp > 0.0:
        disc = a0 * a0 - 2.0 * jerk * v0
        den = -a0 + math.sqrt(disc)
        t_zero = 2.0 * v0 / den if den > 0.0 else 0.0
        if t_zero <= t_ramp:
            return t_zero, t_zero, 0.0, 0.0
    if t_ramp > 0.0:
        v1 = v0 + a0 * t_ramp + 0.5 * jerk * t_ramp * t_ramp
        s1 = v0 * t_ramp + 0.5 * a0 * t_ramp * t_ramp + jerk * t_ramp**3 / 6.0
    else:
        v1 = v0
        s1 = 0.0
    t_stop = t_ramp + v1 / (-a_ss)
    return t_ramp, t_stop, v1, s1


_brake_phases_nb = _njit(_brake_phases)


def _make_brake_loop(phases):
    def brake_profile(tau, v0, a0, jerk, a_ss):
        n = tau.shape[0]
        s = np.empty(n)
        v = np.empty(n)
        a = np.empty(n)
        t_ramp, t_stop, v1, s1 = phases(v0, a0, jerk, a_ss)
        s_stop = 0.0
        if t_stop > 0.0:
            if t_stop <= t_ramp:
                s_stop = v0 * t_stop + 0.5 * a0 * t_stop * t_stop + jerk * t_stop**3 / 6.0
            else:
                r = t_stop - t_ramp
                s_stop = s1 + v1 * r + 0.5 * a_ss * r * r
        for i in range(n):
            t = tau[i]
            if t <= 0.0:
                s[i] = 0.0
                v[i] = v0
                a[i] = a0
            elif t >= t_stop:
                s[i] = s_stop
                v[i] = 0.0
                a[i] = 0.0
            elif t <= t_ramp:
                s[i] = v0 * t + 0.5 * a0 * t * t + jerk * t**3 / 6.0
                v[i] = v0 + a0 * t + 0.5 * jerk * t * t
                a[i] = a0 + jerk * t
            else:
                r = t - t_ramp
                s[i] = s1 + v1 * r + 0.5 * a_ss * r * r
                v[i] = v1 + a_ss * r
                a[i] = a_ss
        return s, v, a

    return brake_profile


brake_profile_numba = _njit(_make_brake_loop(_brake_phases_nb))


def brake_profile_numpy(tau, v0, a0, jerk, a_ss):
    """Distance, speed and acceleration ``tau`` seconds after brake onset.

    Acceleration ramps linearly from ``a0`` to ``a_ss`` at rate ``jerk``
    (negative, may be ``-inf`` for a step), then holds ``a_ss`` until the
    speed reaches zero. Requires ``a_ss <= a0 <= 0``.
    """
    tau = np.asarray(tau, dtype=float)
    t_ramp, t_stop, v1, s1 = _brake_phases(v0, a0, jerk, a_ss)
    t = np.minimum(np.maximum(tau, 0.0), t_stop)
    in_ramp = t <= t_ramp
    r = np.maximum(t - t_ramp, 0.0)
    tr = np.where(in_ramp, t, t_ramp)
    s = np.where(
        in_ramp,
        v0 * tr + 0.5 * a0 * tr * tr + jerk * tr**3 / 6.0 if t_ramp > 0.0 else 0.0,
        s1 + v1 * r + 0.5 * a_ss * r * r,
    )
    v = np.where(in_ramp, v0 + a0 * tr + 0.5 * jerk * tr * tr if t_ramp > 0.0 else v0, v1 + a_ss * r)
    a = np.where(in_ramp, a0 + jerk * tr if t_ramp > 0.0 else a0, a_ss)
    stopped = tau >= t_stop
    v = np.where(stopped, 0.0, v)
    a = np.where(stopped, 0.0, a)
    before = tau <= 0.0
    s = np.where(before, 0.0, s)
    v = np.where(before, v0, v)
    a = np.where(before, a0, a)
    return s, v, a


# ---------------------------------------------------------------------------
# Arc-length path following
# ---------------------------------------------------------------------------


def _follow_path_loop(arc, px, py, seg_heading, s):
    # arc strictly increasing, len(arc) == len(px) >= 2, one heading per segment
    n = s.shape[0]
    m = arc.shape[0]
    x = np.empty(n)
    y = np.empty(n)
    h = np.empty(n)
    j = 0
    for i in range(n):
        q = s[i]
        if q >= arc[m - 1]:
            hh = seg_heading[m - 2]
            d = q - arc[m - 1]
            x[i] = px[m - 1] + d * math.cos(hh)
            y[i] = py[m - 1] + d * math.sin(hh)
            h[i] = hh
            continue
        if q <= arc[0]:
            x[i] = px[0]
            y[i] = py[0]
            h[i] = seg_heading[0]
            continue
        if arc[j] > q:
            j = 0
        while arc[j + 1] <= q:
            j += 1
        f = (q - arc[j]) / (arc[j + 1] - arc[j])
        x[i] = px[j] + f * (px[j + 1] - px[j])
        y[i] = py[j] + f * (py[j + 1] - py[j])
        h[i] = seg_heading[j]
    return x, y, h


follow_path_numba = _njit(_follow_path_loop)


def follow_path_numpy(arc, px, py, seg_heading, s):
    """Positions and tangent headings at arc lengths ``s`` along a polyline.

    Arc lengths past the end continue along the final segment's tangent.
    """
    s = np.asarray(s, dtype=float)
    x = np.interp(s, arc, px)
    y = np.interp(s, arc, py)
    j = np.clip(np.searchsorted(arc, s, side="right") - 1, 0, len(seg_heading) - 1)
    h = seg_heading[j]
    beyond = s >= arc[-1]
    if beyond.any():
        hh = seg_heading[-1]
        d = s[beyond] - arc[-1]
        x[beyond] = px[-1] + d * math.cos(hh)
        y[beyond] = py[-1] + d * math.sin(hh)
    return x, y, h


if USE_NUMBA:
    first_overlap = first_overlap_numba
    refine_contact = refine_contact_numba
    brake_profile = brake_profile_numba
    follow_path = follow_path_numba
else:
    first_overlap = first_overlap_numpy
    refine_contact = refine_contact_numpy
    brake_profile = brake_profile_numpy
    follow_path = follow_path_numpy

logger.debug("fraccol kernels backend: %s", BACKEND)
