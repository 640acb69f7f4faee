"""Numba and numpy kernels agree, and both match closed forms."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraccol import kernels as K

BRAKE = [K.brake_profile_numba, K.brake_profile_numpy]
FOLLOW = [K.follow_path_numba, K.follow_path_numpy]
OVERLAP = [K.first_overlap_numba, K.first_overlap_numpy]
REFINE = [K.refine_contact_numba, K.refine_contact_numpy]


def _stopping_distance(v0, jerk, a_ss):
    # ramp from 0 to a_ss, then constant deceleration
    tr = a_ss / jerk
    v1 = v0 + 0.5 * jerk * tr * tr
    s1 = v0 * tr + jerk * tr**3 / 6.0
    return s1 + v1 * v1 / (-2.0 * a_ss)


@pytest.mark.parametrize("fn", BRAKE)
def test_brake_stopping_distance(fn):
    tau = np.array([-1.0, 0.0, 0.25, 100.0])
    s, v, a = fn(tau, 20.0, 0.0, -10.0, -5.0)
    assert s[-1] == pytest.approx(_stopping_distance(20.0, -10.0, -5.0), abs=1e-9)
    assert s[-1] == pytest.approx(44.947916666666664, abs=1e-9)
    assert v[-1] == 0.0 and a[-1] == 0.0
    assert (s[0], v[0], a[0]) == (0.0, 20.0, 0.0)
    assert a[2] == pytest.approx(-2.5)


@pytest.mark.parametrize("fn", BRAKE)
def test_brake_step_jerk(fn):
    s, v, _ = fn(np.array([1.0, 10.0]), 10.0, 0.0, -math.inf, -5.0)
    assert v[0] == pytest.approx(5.0)
    assert s[1] == pytest.approx(10.0)


@pytest.mark.parametrize("fn", BRAKE)
def test_brake_stops_during_ramp(fn):
    # v0 small enough that the speed reaches zero before the ramp ends
    tau = np.linspace(0.0, 3.0, 301)
    s, v, a = fn(tau, 1.0, 0.0, -2.0, -8.0)
    t_stop = math.sqrt(2 * 1.0 / 2.0)
    assert v.min() == 0.0
    assert s[-1] == pytest.approx(1.0 * t_stop - 2.0 * t_stop**3 / 6.0, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    v0=st.floats(0.0, 40.0),
    a0=st.floats(-10.0, 0.0),
    jerk=st.floats(-40.0, -0.5),
    a_ss=st.floats(-10.0, -0.5),
)
def test_brake_backends_agree_and_monotone(v0, a0, jerk, a_ss):
    a0 = max(a0, a_ss)
    tau = np.linspace(-0.5, 15.0, 311)
    s1, v1, a1 = K.brake_profile_numba(tau, v0, a0, jerk, a_ss)
    s2, v2, a2 = K.brake_profile_numpy(tau, v0, a0, jerk, a_ss)
    np.testing.assert_allclose(s1, s2, rtol=0, atol=1e-9)
    np.testing.assert_allclose(v1, v2, rtol=0, atol=1e-9)
    np.testing.assert_allclose(a1, a2, rtol=0, atol=1e-9)
    assert np.all(np.diff(v1) <= 1e-9)
    assert np.all(np.diff(s1) >= -1e-9)
    assert np.all(v1 >= 0.0)
    assert np.all(a1 >= a_ss - 1e-12)


def _path():
    px = np.array([0.0, 10.0, 10.0])
    py = np.array([0.0, 0.0, 5.0])
    arc = np.array([0.0, 10.0, 15.0])
    return arc, px, py, np.array([0.0, math.pi / 2])


@pytest.mark.parametrize("fn", FOLLOW)
def test_follow_path(fn):
    arc, px, py, hh = _path()
    x, y, h = fn(arc, px, py, hh, np.array([-1.0, 5.0, 12.0, 20.0]))
    np.testing.assert_allclose(x, [0.0, 5.0, 10.0, 10.0], atol=1e-12)
    np.testing.assert_allclose(y, [0.0, 0.0, 2.0, 10.0], atol=1e-12)
    np.testing.assert_allclose(h, [0.0, 0.0, math.pi / 2, math.pi / 2], atol=1e-12)


def test_follow_path_backends_agree():
    rng = np.random.default_rng(1)
    pts = np.cumsum(rng.uniform(0.2, 2.0, size=(50, 2)), axis=0)
    seg = np.diff(pts, axis=0)
    arc = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
    hh = np.arctan2(seg[:, 1], seg[:, 0])
    s = np.sort(rng.uniform(-5, arc[-1] + 20, 500))
    for u, v in zip(K.follow_path_numba(arc, pts[:, 0], pts[:, 1], hh, s),
                    K.follow_path_numpy(arc, pts[:, 0], pts[:, 1], hh, s)):
        np.testing.assert_allclose(u, v, atol=1e-9)


@pytest.mark.parametrize("fn", OVERLAP)
def test_first_overlap_index(fn):
    t = 0.1 * np.arange(50)
    ax = 10.0 * t
    bx = np.full_like(t, 30.0)
    z = np.zeros_like(t)
    # contact once the front bumpers meet: 10 t + 2.4 + 2.4 >= 30
    i = fn(ax, z, z, bx, z, z, 2.4, 0.95, 2.4, 0.95)
    assert i == int(math.ceil((30.0 - 4.8) / 1.0))
    assert fn(ax, z + 5.0, z, bx, z, z, 2.4, 0.95, 2.4, 0.95) == -1


@pytest.mark.parametrize("fn", REFINE)
def test_refine_contact_time(fn):
    pa0 = np.array([0.0, 0.0, 0.0])
    pa1 = np.array([1.0, 0.0, 0.0])
    pb = np.array([5.5, 0.0, 0.0])
    # separation = 5.5 - x - 5.0, contact at x = 0.5
    tc = fn(0.0, 1.0, pa0, pa1, pb, pb, 2.5, 1.0, 2.5, 1.0, 1e-9)
    assert tc == pytest.approx(0.5, abs=2e-9)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-10, 10), min_size=2, max_size=2),
    st.floats(-4, 4),
    st.floats(-4, 4),
    st.floats(0.2, 3),
    st.floats(0.2, 3),
)
def test_separation_backends_agree_and_symmetric(d, ha, hb, hl, hw):
    args = (0.0, 0.0, ha, hl, hw, d[0], d[1], hb, hw, hl)
    g1 = K._separation_nb(*args)
    g2 = K._separation_py(*args)
    g3 = float(K.separation_numpy(*args))
    swapped = K._separation_py(d[0], d[1], hb, hw, hl, 0.0, 0.0, ha, hl, hw)
    assert g1 == pytest.approx(g2, abs=1e-9)
    assert g3 == pytest.approx(g2, abs=1e-9)
    assert swapped == pytest.approx(g2, abs=1e-9)


@pytest.mark.parametrize("flag, backend", [("1", "numpy"), ("0", "numba")])
def test_env_flag_selects_backend(flag, backend):
    import os
    import subprocess
    import sys

    env = dict(os.environ, FRACCOL_NO_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "from fraccol import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == backend
