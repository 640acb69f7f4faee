from __future__ import annotations

import csv
import io
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from fraccol.behavior import ReactionParams, behavior_model_from_dict, single_cell_model
from fraccol.conflict import RoleAssignment, resolve_roles
from fraccol.enums import SEVERITY_COLUMNS, ConflictType, SeverityLevel
from fraccol.risk import (
    COLUMNS,
    FAIL,
    FRAMEWORKS,
    NOT_APPLICABLE,
    PASS,
    SPLITS,
    aggregate_corpus,
    aggregate_match_test,
    evaluate_scene,
    qa_scene,
    relative_risk,
    result_from_dict,
    result_from_pmf,
    result_to_dict,
)
from fraccol.synth import SyntheticScenarioSpec, generate_corpus

from conftest import scene_of, straight

L0, L1, L2, NONE = SeverityLevel.L0, SeverityLevel.L1, SeverityLevel.L2, SeverityLevel.Lnone
ROLES = RoleAssignment("lead", "fol", 0.0, "annotated")


def _rear_end(v0=15.0, gap=20.0, **ann):
    fol = straight("fol", speed=v0, duration=8.0)
    lead = straight("lead", x0=gap + 4.8, speed=0.0, duration=8.0)
    return scene_of(fol, lead, **ann)


def _joint(rows):
    return behavior_model_from_dict({"default": {"joint_mode": "joint", "joint_table": rows}})


def test_single_cell_avoiding_contact():
    m = single_cell_model(ReactionParams(0.0, -1000.0, -8.0))
    res = evaluate_scene(_rear_end(), ROLES, ConflictType.REAR_END_LEAD_BRAKE, m)
    assert res.p[NONE] == 1.0 and res.fractional_score == 0.0
    assert res.nrm_severity is L1


def test_three_cell_pmf():
    # stop short; touch at ~1 m/s; hit at ~12 m/s
    m = _joint([[0.0, -1000.0, -8.0, 0.5], [0.4, -1000.0, -8.0, 0.3], [1.0, -1000.0, -8.0, 0.2]])
    res = evaluate_scene(_rear_end(), ROLES, ConflictType.REAR_END_LEAD_BRAKE, m)
    assert [c.severity for c in res.ledger] == [NONE, L2, L1]
    assert res.pmf() == {"L0": 0.0, "L1": 0.2, "L2": 0.3, "Lnone": 0.5}
    assert res.fractional_score == pytest.approx(0.5)
    assert res.most_probable is NONE
    assert res.worst_supported is L1


def test_pure_nonreact_reduces_to_nrm():
    m = single_cell_model(ReactionParams(0.0, -10.0, -5.0), p_nonreact=1.0)
    res = evaluate_scene(_rear_end(), ROLES, ConflictType.REAR_END_LEAD_BRAKE, m)
    cells = [c for c in res.ledger if c.weight > 0]
    assert len(cells) == 1 and cells[0].params is None
    assert res.p[res.nrm_severity] == 1.0


def test_unresolved_por_is_an_error():
    with pytest.raises(ValueError, match="point of reaction"):
        evaluate_scene(_rear_end(), RoleAssignment("lead", "fol"), None, single_cell_model(ReactionParams(0, -1, -1)))


def test_qa_all_pass():
    sc = _rear_end(v0=3.0, gt_severity=L2)
    res = replace(result_from_pmf("s", {"L2": 0.3, "Lnone": 0.7}), nrm_severity=L1)
    qa = qa_scene(sc, res)
    assert [c.status for c in qa.checks] == [PASS, PASS, PASS]
    assert qa.checks[0].evidence["reconstructed"] == "L2"


def test_qa_no_contact_reproduced():
    fol = straight("fol", speed=10.0, duration=4.0)
    lead = straight("lead", y0=5.0, speed=10.0, duration=4.0)
    sc = scene_of(fol, lead, gt_severity=L1)
    res = replace(result_from_pmf("s", {"L1": 1.0}), nrm_severity=L1)
    c1 = qa_scene(sc, res).checks[0]
    assert c1.status == FAIL and "no contact reproduced" in c1.detail


def test_qa_near_miss_all_pass():
    fol = straight("fol", speed=10.0, duration=4.0)
    lead = straight("lead", y0=5.0, speed=10.0, duration=4.0)
    sc = scene_of(fol, lead, gt_severity=NONE)
    res = replace(result_from_pmf("s", {"Lnone": 1.0}), nrm_severity=NONE)
    assert qa_scene(sc, res).all_passed


def test_qa_check2_and_check3_failures():
    sc = _rear_end(v0=3.0, gt_severity=L2)
    res = replace(result_from_pmf("s", {"L1": 1.0}), nrm_severity=NONE)
    _, c2, c3 = qa_scene(sc, res).checks
    assert c2.status == FAIL and c3.status == FAIL


def test_qa_not_applicable_without_gt():
    qa = qa_scene(_rear_end(), None)
    assert {c.status for c in qa.checks} == {NOT_APPLICABLE}


def test_aggregate_two_scenes():
    results = [result_from_pmf("a", {"L1": 0.6, "Lnone": 0.4}), result_from_pmf("b", {"L2": 0.1, "Lnone": 0.9})]
    rep = aggregate_corpus(results, {"a": L1, "b": NONE}, {"a": L0, "b": NONE})
    assert rep.total(FRAMEWORKS[0]) == pytest.approx(0.7)
    assert rep.total(FRAMEWORKS[1]) == 1
    assert rep.total(FRAMEWORKS[2]) == 1
    assert rep.value(FRAMEWORKS[2], "All", "L0") == 1
    assert rep.value(FRAMEWORKS[0], "Yes", "L1") == 0.6
    assert rep.value(FRAMEWORKS[0], "No", "L2") == 0.1


def test_aggregate_empty_and_mismatch():
    rep = aggregate_corpus([], {}, {})
    for fw in FRAMEWORKS:
        for sp in SPLITS:
            assert all(rep.value(fw, sp, c) == 0 for c in COLUMNS)
    with pytest.raises(ValueError, match="mismatch"):
        aggregate_corpus([result_from_pmf("a", {"L1": 1.0})], {"b": L1}, {"a": L1})


def test_csv_layout_rfc4180():
    rep = aggregate_corpus([result_from_pmf("a", {"L1": 0.25, "Lnone": 0.75})], {"a": L1}, {"a": L1})
    text = rep.to_csv()
    assert text.endswith("\r\n")
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["Post-PoR Framework", "GT Collision?", "L0", "L1", "L2", "NC", "Total"]
    assert [(r[0], r[1]) for r in rows[1:]] == [(fw, sp) for fw in FRAMEWORKS for sp in SPLITS]
    assert rows[4][2:] == ["0", "1", "0", "0", "1"]


def test_relative_risk_worked_cases():
    rr = relative_risk(result_from_pmf("f4", {"L1": 0.06, "L2": 0.38, "Lnone": 0.56}), L2)
    assert rr.p_human_strictly_better == 0.56
    assert rr.p_human_strictly_worse == 0.06
    assert rr.p_tie == 0.38
    rr = relative_risk(result_from_pmf("f5", {"L1": 0.085, "Lnone": 0.915}), L1)
    assert rr.p_human_strictly_better == 0.915
    assert rr.diff[L1] == pytest.approx(0.915)


@given(st.lists(st.floats(0, 1), min_size=4, max_size=4).filter(lambda w: sum(w) > 0), st.sampled_from(SEVERITY_COLUMNS))
def test_relative_risk_partition(w, ads):
    total = math.fsum(w)
    res = result_from_pmf("x", {s.name: v / total for s, v in zip(SEVERITY_COLUMNS, w)})
    rr = relative_risk(res, ads)
    assert rr.p_human_strictly_better + rr.p_human_strictly_worse + rr.p_tie == pytest.approx(1.0, abs=1e-9)
    if ads is NONE:
        assert rr.p_human_strictly_better == 0.0


def test_result_round_trip():
    m = _joint([[0.0, -1000.0, -8.0, 0.5], [0.4, -1000.0, -8.0, 0.3], [1.0, -1000.0, -8.0, 0.2]])
    res = evaluate_scene(_rear_end(), ROLES, ConflictType.REAR_END_LEAD_BRAKE, m)
    back = result_from_dict(result_to_dict(res, L1))
    assert back.p == res.p and back.nrm_severity == res.nrm_severity and back.roles == res.roles


def test_aggregate_match_zero_scenes(default_model):
    assert aggregate_match_test(default_model, 0, 0) == (0, 0, 0)


@pytest.fixture(scope="module")
def corpus(default_model):
    specs = [SyntheticScenarioSpec(family=f) for f in SyntheticScenarioSpec.FAMILIES]
    return generate_corpus(specs, 12, 99, model=default_model)


def test_normalisation_and_recall(corpus, default_model):
    for sc in corpus:
        ctype, roles = resolve_roles(sc)
        res = evaluate_scene(sc, roles, ctype, default_model)
        assert math.fsum(res.p.values()) == pytest.approx(1.0, abs=1e-9)
        assert 0.0 <= res.fractional_score <= 1.0 + 1e-12
        if res.p[sc.annotations.gt_severity] > 0:
            assert res.worst_supported >= sc.annotations.gt_severity


def test_additivity(corpus, default_model):
    results, gt, nrm = [], {}, {}
    for sc in corpus:
        ctype, roles = resolve_roles(sc)
        r = evaluate_scene(sc, roles, ctype, default_model)
        results.append(r)
        gt[sc.scene_id] = sc.annotations.gt_severity
        nrm[sc.scene_id] = r.nrm_severity
    rep = aggregate_corpus(results, gt, nrm)
    fw = FRAMEWORKS[0]
    for c in ("L0", "L1", "L2", "NC"):
        col = SeverityLevel.parse(c)
        assert rep.value(fw, "All", c) == pytest.approx(math.fsum(r.p[col] for r in results), abs=1e-12)
        assert rep.value(fw, "All", c) == pytest.approx(rep.value(fw, "Yes", c) + rep.value(fw, "No", c), abs=1e-12)
    assert rep.total(fw) == pytest.approx(math.fsum(r.fractional_score for r in results), abs=1e-12)
    assert isinstance(rep.total(FRAMEWORKS[1]), int)


def _bins(width):
    edges = np.round(np.arange(0.0, 3.0 + 1e-9, width), 10)
    centres = 0.5 * (edges[:-1] + edges[1:])
    w = np.exp(-0.5 * ((np.log(np.maximum(centres, 1e-3)) - 0.0) / 0.45) ** 2) / centres
    return edges, w / w.sum()


@settings(max_examples=8, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(0, 10_000))
def test_refinement_stability(default_model, seed):
    (sc,) = generate_corpus(SyntheticScenarioSpec(family=ConflictType.REAR_END_LEAD_BRAKE), 1, seed, model=default_model)
    ctype, roles = resolve_roles(sc)
    coarse_edges, cw = _bins(0.1)
    fine = np.repeat(cw / 2, 2)
    fine_edges = np.round(np.arange(0.0, 3.0 + 1e-9, 0.05), 10)
    out = []
    for edges, w in ((coarse_edges, cw), (fine_edges, fine)):
        w = w / math.fsum(w)
        w[-1] = 1.0 - math.fsum(w[:-1])
        m = behavior_model_from_dict({"default": {
            "hrt_bin_edges_s": edges.tolist(), "hrt_weights": w.tolist(),
            "jerk_mps3": [-10.0], "jerk_weights": [1.0], "a_ss_mps2": [-5.0], "a_ss_weights": [1.0]}})
        out.append(evaluate_scene(sc, roles, ctype, m))
    coarse, finer = out
    changed = 0.0
    boundary = 0.0
    sev_c = [c.severity for c in coarse.ledger]
    for i, c in enumerate(coarse.ledger):
        halves = finer.ledger[2 * i: 2 * i + 2]
        changed += sum(h.weight for h in halves if h.severity is not c.severity)
        # end cells count too: a transition can hide between 0 and the first centre
        at_end = i == 0 or i + 1 == len(sev_c)
        if at_end or sev_c[i - 1] is not c.severity or sev_c[i + 1] is not c.severity:
            boundary = max(boundary, c.weight)
    for lvl in SEVERITY_COLUMNS:
        d = abs(coarse.p[lvl] - finer.p[lvl])
        assert d <= changed + 1e-12
        assert d <= 2 * 2 * boundary + 1e-12
