"""Acceptance criteria, each checked at its stated tolerance.

Every test records one PASS/FAIL line, listed together in the terminal
summary under "acceptance criteria".
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from fraccol.behavior import ReactionParams, behavior_model_from_dict, default_behavior_model, single_cell_model, synthesize_response
from fraccol.cli import EXIT_OK, main
from fraccol.conflict import resolve_roles
from fraccol.enums import SEVERITY_COLUMNS, ConflictType, SeverityLevel
from fraccol.mechanics import MPH, BodyState, ContactState, severity_vehicle, severity_vru, solve_impulse
from fraccol.risk import (
    FRAMEWORKS,
    SPLITS,
    evaluate_scene,
    qa_scene,
    relative_risk,
    result_from_pmf,
    run_aggregate_match,
)
from fraccol.synth import GT_NONREACTIVE, SyntheticScenarioSpec, generate_corpus

from conftest import record_criterion, straight

L0, L1, L2, NONE = SeverityLevel.L0, SeverityLevel.L1, SeverityLevel.L2, SeverityLevel.Lnone
CORPUS_SEED = 2024
CORPUS_SIZE = 500


def _check(number, name, ok, detail):
    record_criterion(number, name, bool(ok), detail)
    assert ok, detail


# ---------------------------------------------------------------------------
# 1-3: crash mechanics
# ---------------------------------------------------------------------------


def _perp(r):
    return np.array([-r[1], r[0]])


def _cross(r, v):
    return r[0] * v[1] - r[1] * v[0]


def test_criterion_01_impulse_conservation():
    rng = np.random.default_rng(1)
    worst_p = worst_l = worst_e = 0.0
    t0 = time.perf_counter()
    for _ in range(1000):
        theta = rng.uniform(0, 2 * np.pi)
        n = np.array([math.cos(theta), math.sin(theta)])
        point = rng.uniform(-50, 50, 2)
        pa = point - rng.uniform(0.5, 3.0) * n + rng.uniform(-1.5, 1.5) * _perp(n)
        pb = point + rng.uniform(0.5, 3.0) * n + rng.uniform(-1.5, 1.5) * _perp(n)
        va, vb = rng.uniform(-25, 25, 2), rng.uniform(-25, 25, 2)
        wa, wb = rng.uniform(-1, 1, 2)
        ma, mb = rng.uniform(60, 30000, 2)
        ia, ib = ma * rng.uniform(0.1, 5.0), mb * rng.uniform(0.1, 5.0)
        e, mu = rng.uniform(0, 1), rng.uniform(0, 1.2)
        ra, rb = point - pa, point - pb
        un = (vb + wb * _perp(rb) - va - wa * _perp(ra)) @ n
        if un >= 0:  # push a toward b so the pair approaches
            va = va + (un + rng.uniform(0.5, 10.0)) * n
            un = (vb + wb * _perp(rb) - va - wa * _perp(ra)) @ n
        c = ContactState(0.0, point, n, BodyState(pa, va, wa, 0.0), BodyState(pb, vb, wb, 0.0))
        s = solve_impulse(c, (ma, ia), (mb, ib), e, mu)
        p0 = ma * va + mb * vb
        p1 = ma * s.velocity_a + mb * s.velocity_b
        scale_p = ma * np.hypot(*va) + mb * np.hypot(*vb)
        l0 = ia * wa + ib * wb + ma * _cross(pa, va) + mb * _cross(pb, vb)
        l1 = ia * s.yaw_rate_a + ib * s.yaw_rate_b + ma * _cross(pa, s.velocity_a) + mb * _cross(pb, s.velocity_b)
        scale_l = abs(ia * wa) + abs(ib * wb) + ma * abs(_cross(pa, va)) + mb * abs(_cross(pb, vb))
        un1 = (s.velocity_b + s.yaw_rate_b * _perp(rb) - s.velocity_a - s.yaw_rate_a * _perp(ra)) @ n
        worst_p = max(worst_p, np.hypot(*(p1 - p0)) / scale_p)
        worst_l = max(worst_l, abs(l1 - l0) / scale_l)
        worst_e = max(worst_e, abs(un1 + e * un) / abs(un))
    elapsed = time.perf_counter() - t0
    ok = worst_p <= 1e-9 and worst_l <= 1e-9 and worst_e <= 1e-9 and elapsed < 5.0
    _check(1, "impulse conservation", ok,
           f"max rel linear {worst_p:.1e}, angular {worst_l:.1e}, restitution {worst_e:.1e}; {elapsed:.2f} s")


def _collinear(m_a, m_b, v_a, v_b):
    n = np.array([1.0, 0.0])
    c = ContactState(
        0.0, np.array([0.0, 0.0]), n,
        BodyState(np.array([-2.0, 0.0]), np.array([v_a, 0.0]), 0.0, 0.0),
        BodyState(np.array([2.0, 0.0]), np.array([v_b, 0.0]), 0.0, 0.0),
    )
    return solve_impulse(c, (m_a, m_a * 2.0), (m_b, m_b * 2.0), restitution=0.0, friction=0.55)


def test_criterion_02_analytic_collisions():
    s1 = _collinear(1500.0, 1500.0, 12.0, -12.0)
    s2 = _collinear(2000.0, 1000.0, 15.0, 0.0)
    errs = [abs(s1.delta_v_a - 12.0), abs(s1.delta_v_b - 12.0), abs(s2.delta_v_a - 5.0), abs(s2.delta_v_b - 10.0)]
    _check(2, "analytic collisions", max(errs) <= 1e-9,
           f"head-on dv {s1.delta_v_a!r}/{s1.delta_v_b!r} (expect 12), 2000/1000 kg dv {s2.delta_v_a!r}/{s2.delta_v_b!r}")


def test_criterion_03_severity_thresholds():
    below = lambda mph: np.nextafter(mph * MPH, 0.0)
    cases = [
        (severity_vehicle(6 * MPH, 0.0), L1), (severity_vehicle(below(6), 0.0), L2),
        (severity_vehicle(0.0, 20 * MPH), L0), (severity_vehicle(below(20), 0.0), L1),
        (severity_vru(5 * MPH), L1), (severity_vru(below(5)), L2),
        (severity_vru(15 * MPH), L0), (severity_vru(below(15)), L1),
    ]
    ok = MPH == 0.44704 and all(got is want for got, want in cases)
    _check(3, "severity thresholds", ok, f"{sum(g is w for g, w in cases)}/{len(cases)} boundary cases, mph={MPH!r}")


# ---------------------------------------------------------------------------
# 4-5: behaviour oracles
# ---------------------------------------------------------------------------


def test_criterion_04_brake_profile_oracle():
    v0, jerk, a_ss, por, hrt = 20.0, -10.0, -5.0, 1.0, 0.5
    tr = straight("r", speed=v0, duration=12.0, dt=0.001)
    out = synthesize_response(tr, por, ReactionParams(hrt, jerk, a_ss))
    onset = (por + hrt) * v0
    # closed form: jerk ramp to a_ss, then constant deceleration to rest
    t_r = a_ss / jerk
    v1 = v0 + 0.5 * jerk * t_r**2
    expected = v0 * t_r + jerk * t_r**3 / 6.0 + v1**2 / (2.0 * -a_ss)
    err = abs((out.x[-1] - onset) - expected)
    _check(4, "brake-profile oracle", err <= 1e-4 and out.speed[-1] == 0.0,
           f"stopping distance {out.x[-1] - onset:.9f} m vs {expected:.9f} m (err {err:.1e})")


def _euler_brake(v0, jerk, a_ss, dt, n):
    s = np.zeros(n)
    v = v0
    for k in range(1, n):
        a = max(jerk * (k - 1) * dt, a_ss)
        s[k] = s[k - 1] + v * dt
        v = max(v + a * dt, 0.0)
    return s


def _dense_sweep_threshold(scene, por, jerk, a_ss, h_max=3.0, dt=0.001):
    """Smallest reaction time (on a ``dt`` grid) whose 1-D brake response hits
    the lead, by brute force over every grid reaction time."""
    ann = scene.annotations
    fol, lead = scene.track(ann.responder_id), scene.track(ann.initiator_id)
    u = np.array([math.cos(fol.heading[0]), math.sin(fol.heading[0])])
    origin = np.array([fol.x[0], fol.y[0]])
    v0 = float(fol.speed[0])
    t = np.arange(por, fol.t[-1] + 1e-12, dt)
    s_lead = (np.interp(t, lead.t, lead.x) - origin[0]) * u[0] + (np.interp(t, lead.t, lead.y) - origin[1]) * u[1]
    s_por = v0 * (por - fol.t[0])
    reach = 0.5 * (fol.length + lead.length)
    brake = _euler_brake(v0, jerk, a_ss, dt, len(t))
    k = np.arange(len(t))
    for m in range(int(round(h_max / dt)) + 1):
        lag = np.maximum(k - m, 0)
        s_fol = s_por + v0 * np.minimum(k, m) * dt + brake[lag]
        if np.any(s_lead - s_fol <= reach):
            return m * dt
    return math.inf


def test_criterion_05_fractional_score_oracle():
    base = default_behavior_model().entry(None, None)
    edges = np.round(np.arange(0.0, 3.0 + 1e-9, 0.1), 10)
    model = behavior_model_from_dict({"default": {
        "hrt_bin_edges_s": edges.tolist(), "hrt_weights": list(base.hrt_weights),
        "jerk_mps3": [-10.0], "jerk_weights": [1.0], "a_ss_mps2": [-5.0], "a_ss_weights": [1.0]}})
    centres = np.array(base.hrt_values)
    weights = np.array(base.hrt_weights)
    spec = SyntheticScenarioSpec(family=ConflictType.REAR_END_LEAD_BRAKE, gt_mode=GT_NONREACTIVE)
    scenes = generate_corpus(spec, 100, 5, model=model)
    elapsed = 0.0
    worst, bad = 0.0, 0
    for sc in scenes:
        t0 = time.perf_counter()
        ctype, roles = resolve_roles(sc)
        score = evaluate_scene(sc, roles, ctype, model).fractional_score
        elapsed += time.perf_counter() - t0
        t_star = _dense_sweep_threshold(sc, roles.por_t, -10.0, -5.0)
        oracle = math.fsum(weights[centres > t_star])
        tol = float(weights[np.argmin(np.abs(centres - t_star))]) if math.isfinite(t_star) else 0.0
        worst = max(worst, abs(score - oracle))
        bad += abs(score - oracle) > tol + 1e-12
    _check(5, "fractional-score oracle", bad == 0 and elapsed < 60.0,
           f"{100 - bad}/100 scenes within one bin mass (max |diff| {worst:.2e}); evaluate {elapsed:.1f} s")


# ---------------------------------------------------------------------------
# 6-7: generated corpus
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def corpus_run():
    t0 = time.perf_counter()
    run = run_aggregate_match(default_behavior_model(), CORPUS_SEED, CORPUS_SIZE)
    return run, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_06_qa_checks(corpus_run):
    run, _ = corpus_run
    counts = [0, 0, 0]
    rear = 0
    for sc, res in zip(run.scenes, run.results):
        c1, c2, c3 = qa_scene(sc, res).checks
        counts[0] += c1.passed
        counts[1] += c2.passed
        if sc.annotations.conflict_type is ConflictType.REAR_END_LEAD_BRAKE:
            rear += 1
            counts[2] += c3.passed
    n = len(run.scenes)
    ok = counts[0] == n and counts[1] == n and counts[2] == rear
    _check(6, "QA checks", ok, f"check1 {counts[0]}/{n}, check2 {counts[1]}/{n}, check3 (rear-end) {counts[2]}/{rear}")


@pytest.mark.slow
def test_criterion_07_aggregate_hypothesis(corpus_run):
    run, elapsed = corpus_run
    bound = 3.0 * run.binomial_sigma
    dev = run.fractional_total - run.gt_total
    ok = abs(dev) <= bound and run.nrm_total >= run.gt_total and elapsed < 600.0
    _check(7, "aggregate hypothesis", ok,
           f"fractional {run.fractional_total:.3f}, GT {run.gt_total}, NRM {run.nrm_total}; "
           f"|diff| {abs(dev):.3f} <= 3 sigma {bound:.3f}; {elapsed:.0f} s")


# ---------------------------------------------------------------------------
# 8-11: identities, report, relative risk, determinism
# ---------------------------------------------------------------------------


def test_criterion_08_degenerate_models():
    specs = [SyntheticScenarioSpec(family=f) for f in SyntheticScenarioSpec.FAMILIES]
    atom = single_cell_model(ReactionParams(1.0, -10.0, -5.0), p_nonreact=1.0)
    mismatches = 0
    scenes = generate_corpus(specs, 24, 8)
    for sc in scenes:
        ctype, roles = resolve_roles(sc)
        res = evaluate_scene(sc, roles, ctype, atom)
        indicator = {s: float(s is res.nrm_severity) for s in SEVERITY_COLUMNS}
        mismatches += res.p != indicator
    cell = single_cell_model(ReactionParams(0.8, -12.0, -6.0))
    run = run_aggregate_match(cell, 17, 40)
    ok = mismatches == 0 and run.fractional_total == run.gt_total
    _check(8, "degenerate-model identities", ok,
           f"nonreact atom matches NRM on {len(scenes) - mismatches}/{len(scenes)}; "
           f"single cell fractional {run.fractional_total!r} vs GT {run.gt_total}")


def _float_cell(x: str) -> bool:
    return "." in x or "e" in x


def test_criterion_09_report_structure(tmp_path):
    scenes, res, rep = tmp_path / "scenes", tmp_path / "res", tmp_path / "rep"
    assert main(["generate", "-n", "8", "--seed", "4", "--out-dir", str(scenes)]) == EXIT_OK
    assert main(["evaluate", str(scenes), "--out-dir", str(res)]) == EXIT_OK
    assert main(["aggregate", str(res), "--out-dir", str(rep)]) == EXIT_OK
    rows = list(csv.reader((rep / "report.csv").open(newline="")))
    header_ok = rows[0] == ["Post-PoR Framework", "GT Collision?", "L0", "L1", "L2", "NC", "Total"]
    layout_ok = [(r[0], r[1]) for r in rows[1:]] == [(fw, sp) for fw in FRAMEWORKS for sp in SPLITS]
    table = {(r[0], r[1]): r[2:] for r in rows[1:]}
    ints_ok = all(not _float_cell(x) for fw in FRAMEWORKS[1:] for sp in SPLITS for x in table[(fw, sp)])
    reals_ok = all(_float_cell(x) for sp in SPLITS for x in table[(FRAMEWORKS[0], sp)])
    add_ok = True
    for fw in FRAMEWORKS:
        vals = {sp: [float(x) for x in table[(fw, sp)]] for sp in SPLITS}
        for j in range(5):
            add_ok &= math.isclose(vals["All"][j], vals["Yes"][j] + vals["No"][j], rel_tol=1e-12, abs_tol=1e-12)
        for sp in SPLITS:
            add_ok &= math.isclose(vals[sp][4], sum(vals[sp][:3]), rel_tol=1e-12, abs_tol=1e-12)
    ok = header_ok and layout_ok and ints_ok and reals_ok and add_ok
    _check(9, "report structure", ok,
           f"layout {layout_ok and header_ok}, GT/NRM integral {ints_ok}, fractional real {reals_ok}, additive {add_ok}")


def test_criterion_10_relative_risk():
    rng = np.random.default_rng(10)
    zero_ok = True
    for _ in range(200):
        w = rng.dirichlet(np.ones(4))
        res = result_from_pmf("r", {s.name: float(x) for s, x in zip(SEVERITY_COLUMNS, w)})
        zero_ok &= relative_risk(res, NONE).p_human_strictly_better == 0.0
    mixed_l2 = relative_risk(result_from_pmf("mixed_l2", {"L1": 0.06, "L2": 0.38, "Lnone": 0.56}), L2)
    mostly_avoided_l1 = relative_risk(result_from_pmf("mostly_avoided_l1", {"L1": 0.085, "Lnone": 0.915}), L1)
    ok = zero_ok and mixed_l2.p_human_strictly_better == 0.56 and mostly_avoided_l1.p_human_strictly_better == 0.915
    _check(10, "relative-risk fixed points", ok,
           f"Lnone fixed point {zero_ok}; mixed_l2 {mixed_l2.p_human_strictly_better!r}, mostly_avoided_l1 {mostly_avoided_l1.p_human_strictly_better!r}")


def test_criterion_11_determinism(tmp_path):
    scenes = tmp_path / "scenes"
    assert main(["generate", "-n", "6", "--seed", "9", "--out-dir", str(scenes)]) == EXIT_OK
    cfg = tmp_path / "engine.toml"
    cfg.write_text("dt = 0.05\nseed = 3\n[crash]\nrestitution = 0.1\n")
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["evaluate", str(scenes), "--config", str(cfg), "--seed", "3", "--out-dir", str(out)]) == EXIT_OK
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    ok = outs[0] == outs[1] and len(outs[0]) == 7
    _check(11, "determinism", ok, f"{len(outs[0])} output files byte-identical across two runs: {outs[0] == outs[1]}")
