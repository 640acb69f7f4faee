"""Fractional-collision evaluation over the behaviour lattice, per-scene QA
checks, corpus aggregation and relative risk against a point outcome."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional

from .behavior import (
    PRE_ONSET_HOLD,
    BehaviorModel,
    LoggedPath,
    ReactionParams,
    enumerate_cells,
    nrm_response,
    synthesize_response,
)
from .conflict import RoleAssignment
from .enums import SEVERITY_COLUMNS, ConflictType, SeverityLevel
from .mechanics import CrashOutcome, CrashParams, assess_tracks, gt_outcome
from .scene import ConflictScene


@dataclass(frozen=True)
class CellOutcome:
    params: Optional[ReactionParams]  # None for the non-reactive atom
    weight: float
    severity: SeverityLevel
    t_contact: Optional[float] = None
    delta_v_responder: Optional[float] = None
    delta_v_initiator: Optional[float] = None
    relative_speed: Optional[float] = None

    def to_dict(self) -> dict:
        p = self.params
        return {
            "hrt_s": None if p is None else p.hrt,
            "jerk_mps3": None if p is None else p.jerk,
            "a_ss_mps2": None if p is None else p.a_ss,
            "nonreact": p is None,
            "weight": self.weight,
            "severity": self.severity.name,
            "t_contact_s": self.t_contact,
            "delta_v_responder_mps": self.delta_v_responder,
            "delta_v_initiator_mps": self.delta_v_initiator,
            "relative_speed_mps": self.relative_speed,
        }


def _cell_outcome(params, weight, out: CrashOutcome) -> CellOutcome:
    dv = out.delta_v or (None, None)
    return CellOutcome(params, weight, out.severity, out.t_contact, dv[0], dv[1], out.relative_speed)


@dataclass(frozen=True)
class FractionalCollisionResult:
    scene_id: str
    p: dict  # SeverityLevel -> probability
    ledger: tuple = ()
    conflict_type: Optional[ConflictType] = None
    roles: Optional[RoleAssignment] = None
    nrm_severity: Optional[SeverityLevel] = None

    @property
    def fractional_score(self) -> float:
        return math.fsum(self.p[s] for s in SEVERITY_COLUMNS if s.is_collision)

    @property
    def most_probable(self) -> SeverityLevel:
        return max(SEVERITY_COLUMNS, key=lambda s: (self.p[s], s))

    @property
    def worst_supported(self) -> SeverityLevel:
        return max(s for s in SEVERITY_COLUMNS if self.p[s] > 0)

    def pmf(self) -> dict[str, float]:
        return {s.name: self.p[s] for s in SEVERITY_COLUMNS}


def result_to_dict(result: FractionalCollisionResult, gt_severity: Optional[SeverityLevel] = None) -> dict:
    roles = result.roles
    return {
        "scene_id": result.scene_id,
        "conflict_type": None if result.conflict_type is None else ConflictType(result.conflict_type).value,
        "initiator_id": None if roles is None else roles.initiator_id,
        "responder_id": None if roles is None else roles.responder_id,
        "por_t_s": None if roles is None else roles.por_t,
        "role_provenance": None if roles is None else roles.provenance,
        "pmf": result.pmf(),
        "fractional_score": result.fractional_score,
        "most_probable": result.most_probable.name,
        "nrm_severity": None if result.nrm_severity is None else result.nrm_severity.name,
        "gt_severity": None if gt_severity is None else gt_severity.name,
        "cells": [c.to_dict() for c in result.ledger],
    }


def result_from_dict(doc: Mapping) -> FractionalCollisionResult:
    """Inverse of :func:`result_to_dict` for the fields aggregation needs (the
    cell ledger is not rebuilt)."""
    try:
        res = result_from_pmf(str(doc["scene_id"]), doc["pmf"])
        nrm = doc.get("nrm_severity")
        ctype = doc.get("conflict_type")
        roles = None
        if doc.get("initiator_id") is not None:
            roles = RoleAssignment(
                doc["initiator_id"], doc["responder_id"], doc.get("por_t_s"), doc.get("role_provenance") or "annotated"
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed result document: {exc}") from None
    return replace(
        res,
        conflict_type=None if ctype is None else ConflictType(ctype),
        roles=roles,
        nrm_severity=None if nrm is None else SeverityLevel.parse(nrm),
    )


def pmf_from_cells(cells: Iterable[CellOutcome]) -> dict:
    buckets: dict = {s: [] for s in SEVERITY_COLUMNS}
    for c in cells:
        buckets[c.severity].append(c.weight)
    return {s: math.fsum(w) for s, w in buckets.items()}


def evaluate_scene(
    scene: ConflictScene,
    roles: RoleAssignment,
    ctype: Optional[ConflictType],
    model: BehaviorModel,
    crash_cfg: Optional[CrashParams] = None,
    *,
    pre_onset: str = PRE_ONSET_HOLD,
) -> FractionalCollisionResult:
    """Probability mass over severities across the responder's reaction lattice.

    Each cell's counterfactual responder is replayed against the logged
    initiator; cells without contact count as ``Lnone``. Every cell is kept in
    the ledger, in lattice order.
    """
    if roles.por_t is None:
        raise ValueError("roles must carry a resolved point of reaction")
    crash_cfg = crash_cfg or CrashParams()
    responder = scene.track(roles.responder_id)
    initiator = scene.track(roles.initiator_id)
    path = LoggedPath.from_track(responder)
    por = roles.por_t

    nrm_track = nrm_response(responder, por, path)
    nrm_out = assess_tracks(nrm_track, initiator, crash_cfg)

    ledger = []
    for cell in enumerate_cells(model, ctype, responder.agent_class):
        if cell.is_nonreact:
            out = nrm_out
        else:
            cf = synthesize_response(responder, por, cell.params, pre_onset=pre_onset, path=path)
            out = assess_tracks(cf, initiator, crash_cfg)
        ledger.append(_cell_outcome(cell.params, cell.weight, out))
    return FractionalCollisionResult(
        scene_id=scene.scene_id,
        p=pmf_from_cells(ledger),
        ledger=tuple(ledger),
        conflict_type=ctype,
        roles=roles,
        nrm_severity=nrm_out.severity,
    )


def nrm_outcome(scene: ConflictScene, roles: RoleAssignment, crash_cfg: Optional[CrashParams] = None) -> CrashOutcome:
    responder = scene.track(roles.responder_id)
    return assess_tracks(nrm_response(responder, roles.por_t), scene.track(roles.initiator_id), crash_cfg)


# ---------------------------------------------------------------------------
# Scene QA
# ---------------------------------------------------------------------------

PASS, FAIL, NOT_APPLICABLE = "pass", "fail", "n/a"


@dataclass(frozen=True)
class CheckVerdict:
    name: str
    status: str
    detail: str = ""
    evidence: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == PASS


@dataclass(frozen=True)
class SceneQA:
    scene_id: str
    checks: tuple  # three CheckVerdicts

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)


def qa_scene(
    scene: ConflictScene,
    result: FractionalCollisionResult,
    crash_cfg: Optional[CrashParams] = None,
) -> SceneQA:
    """Three data-quality checks against the annotated ground-truth severity.

    1. The logged tracks reproduce the annotated collision / no-collision.
    2. The fractional result gives the annotated severity non-zero mass.
    3. The no-reaction baseline is at least as severe as ground truth.
    """
    gt = scene.annotations.gt_severity
    names = ("reconstruction", "gt_in_support", "nrm_not_milder")
    if gt is None:
        return SceneQA(scene.scene_id, tuple(CheckVerdict(n, NOT_APPLICABLE, "no gt_severity annotation") for n in names))

    sev, contact = gt_outcome(scene, crash_cfg)
    ev1 = {"reconstructed": sev.name, "annotated": gt.name, "t_contact_s": None if contact is None else contact.t_contact}
    if sev.is_collision == gt.is_collision:
        c1 = CheckVerdict(names[0], PASS, evidence=ev1)
    elif gt.is_collision:
        c1 = CheckVerdict(names[0], FAIL, "no contact reproduced", ev1)
    else:
        c1 = CheckVerdict(names[0], FAIL, "contact reproduced where none was annotated", ev1)

    mass = result.p[gt]
    ev2 = {"p_gt": mass, "pmf": result.pmf()}
    c2 = (
        CheckVerdict(names[1], PASS, evidence=ev2)
        if mass > 0
        else CheckVerdict(names[1], FAIL, f"zero probability for annotated {gt.name}", ev2)
    )

    nrm = result.nrm_severity
    if nrm is None:
        nrm = nrm_outcome(scene, result.roles, crash_cfg).severity
    ev3 = {"nrm": nrm.name, "annotated": gt.name}
    c3 = (
        CheckVerdict(names[2], PASS, evidence=ev3)
        if nrm >= gt
        else CheckVerdict(names[2], FAIL, f"no-reaction outcome {nrm.name} milder than {gt.name}", ev3)
    )
    return SceneQA(scene.scene_id, (c1, c2, c3))


# ---------------------------------------------------------------------------
# Corpus aggregation
# ---------------------------------------------------------------------------

FRAMEWORKS = ("Fractional Collisions", "Ground Truth (GT)", "No Reaction Model (NRM)")
SPLITS = ("Yes", "No", "All")
COLUMNS = ("L0", "L1", "L2", "NC", "Total")
_COL_LEVEL = dict(zip(COLUMNS[:4], SEVERITY_COLUMNS))


@dataclass(frozen=True)
class CorpusReport:
    """Three frameworks x {GT collision yes, no, all} x {L0, L1, L2, NC, Total}.

    ``Total`` counts collisions only (L0 + L1 + L2); ``NC`` is reported beside it.
    """

    rows: dict  # (framework, split) -> {column: value}
    n_scenes: int = 0

    def value(self, framework: str, split: str, column: str):
        return self.rows[(framework, split)][column]

    def total(self, framework: str) -> float:
        return self.rows[(framework, "All")]["Total"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["Post-PoR Framework", "GT Collision?", *COLUMNS])
        for fw in FRAMEWORKS:
            for sp in SPLITS:
                row = self.rows[(fw, sp)]
                w.writerow([fw, sp, *(_fmt(row[c]) for c in COLUMNS)])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'Post-PoR Framework':<26}{'GT Collision?':<15}" + "".join(f"{c:>10}" for c in COLUMNS)]
        for fw in FRAMEWORKS:
            for sp in SPLITS:
                row = self.rows[(fw, sp)]
                cells = "".join(
                    f"{row[c]:>10d}" if isinstance(row[c], int) else f"{row[c]:>10.2f}" for c in COLUMNS
                )
                lines.append(f"{fw if sp == 'Yes' else '':<26}{sp:<15}{cells}")
        return "\n".join(lines)


def _fmt(v) -> str:
    return str(v) if isinstance(v, int) else repr(float(v))


def _finish_row(vals: dict) -> dict:
    vals["Total"] = vals["L0"] + vals["L1"] + vals["L2"]
    return vals


def aggregate_corpus(
    results: Iterable[FractionalCollisionResult],
    gt_outcomes: Mapping[str, SeverityLevel],
    nrm_outcomes: Mapping[str, SeverityLevel],
) -> CorpusReport:
    """Sum fractional masses and count discrete GT / NRM severities per split."""
    results = list(results)
    ids = [r.scene_id for r in results]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate scene ids among results")
    if set(ids) != set(gt_outcomes) or set(ids) != set(nrm_outcomes):
        missing = (set(ids) ^ set(gt_outcomes)) | (set(ids) ^ set(nrm_outcomes))
        raise ValueError(f"scene-id mismatch across inputs: {sorted(missing)[:5]}")

    frac = {sp: {c: [] for c in COLUMNS[:4]} for sp in SPLITS[:2]}
    counts = {fw: {sp: {c: 0 for c in COLUMNS[:4]} for sp in SPLITS[:2]} for fw in FRAMEWORKS[1:]}
    for r in sorted(results, key=lambda r: r.scene_id):
        gt = gt_outcomes[r.scene_id]
        sp = "Yes" if gt.is_collision else "No"
        for c, lvl in _COL_LEVEL.items():
            frac[sp][c].append(r.p[lvl])
        counts[FRAMEWORKS[1]][sp][_col(gt)] += 1
        counts[FRAMEWORKS[2]][sp][_col(nrm_outcomes[r.scene_id])] += 1

    rows = {}
    for sp in SPLITS[:2]:
        rows[(FRAMEWORKS[0], sp)] = _finish_row({c: math.fsum(v) for c, v in frac[sp].items()})
        for fw in FRAMEWORKS[1:]:
            rows[(fw, sp)] = _finish_row(dict(counts[fw][sp]))
    for fw in FRAMEWORKS:
        yes, no = rows[(fw, "Yes")], rows[(fw, "No")]
        rows[(fw, "All")] = _finish_row({c: yes[c] + no[c] for c in COLUMNS[:4]})
    return CorpusReport(rows, len(results))


def _col(level: SeverityLevel) -> str:
    return "NC" if level is SeverityLevel.Lnone else level.name


# ---------------------------------------------------------------------------
# Relative risk
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RelativeRisk:
    ads_severity: SeverityLevel
    human: FractionalCollisionResult
    diff: dict  # level -> (1 if ads level else 0) - p_human(level)
    p_human_strictly_better: float
    p_human_strictly_worse: float
    p_tie: float


def relative_risk(human: FractionalCollisionResult, ads_severity: SeverityLevel) -> RelativeRisk:
    """Compare a point severity outcome against a modeled-human distribution."""
    p = human.p
    diff = {s: (1.0 if s is ads_severity else 0.0) - p[s] for s in SEVERITY_COLUMNS}
    better = math.fsum(p[s] for s in SEVERITY_COLUMNS if s < ads_severity)
    worse = math.fsum(p[s] for s in SEVERITY_COLUMNS if s > ads_severity)
    return RelativeRisk(ads_severity, human, diff, better, worse, p[ads_severity])


def result_from_pmf(scene_id: str, pmf: Mapping) -> FractionalCollisionResult:
    """Build a result from a severity -> probability mapping (missing levels are 0)."""
    p = {s: 0.0 for s in SEVERITY_COLUMNS}
    for k, v in pmf.items():
        p[SeverityLevel.parse(k) if isinstance(k, str) else SeverityLevel(k)] = float(v)
    return FractionalCollisionResult(scene_id, p)


# ---------------------------------------------------------------------------
# Aggregate hypothesis harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AggregateMatch:
    fractional_total: float
    gt_total: int
    nrm_total: int
    scores: tuple  # per-scene fractional scores, corpus order
    report: CorpusReport
    results: tuple = ()
    scenes: tuple = ()

    @property
    def binomial_sigma(self) -> float:
        return math.sqrt(math.fsum(p * (1.0 - p) for p in self.scores))

    def as_tuple(self) -> tuple[float, int, int]:
        return (self.fractional_total, self.gt_total, self.nrm_total)


def run_aggregate_match(
    model: BehaviorModel,
    seed: int,
    n_scenes: int,
    *,
    families=None,
    crash_cfg: Optional[CrashParams] = None,
    pre_onset: str = PRE_ONSET_HOLD,
    dt: float = 0.05,
) -> AggregateMatch:
    """Generate scenes whose ground-truth responders are drawn from ``model``
    and compare fractional, ground-truth and no-reaction collision totals."""
    from .synth import SyntheticScenarioSpec, generate_corpus  # generator depends on this module

    crash_cfg = crash_cfg or CrashParams()
    specs = [SyntheticScenarioSpec(family=f) for f in (families or SyntheticScenarioSpec.FAMILIES)]
    scenes = generate_corpus(specs, n_scenes, seed, model=model, crash_cfg=crash_cfg, dt=dt)
    results = []
    gts, nrms = {}, {}
    for sc in scenes:
        ann = sc.annotations
        roles = RoleAssignment(ann.initiator_id, ann.responder_id, ann.por_t, "annotated")
        res = evaluate_scene(sc, roles, ann.conflict_type, model, crash_cfg, pre_onset=pre_onset)
        results.append(res)
        gts[sc.scene_id] = ann.gt_severity
        nrms[sc.scene_id] = res.nrm_severity
    report = aggregate_corpus(results, gts, nrms)
    return AggregateMatch(
        fractional_total=report.total(FRAMEWORKS[0]),
        gt_total=report.total(FRAMEWORKS[1]),
        nrm_total=report.total(FRAMEWORKS[2]),
        scores=tuple(r.fractional_score for r in results),
        report=report,
        results=tuple(results),
        scenes=tuple(scenes),
    )


def aggregate_match_test(model: BehaviorModel, seed: int, n_scenes: int, **kwargs) -> tuple[float, int, int]:
    """``(fractional_total, gt_total, nrm_total)`` over a generated corpus."""
    return run_aggregate_match(model, seed, n_scenes, **kwargs).as_tuple()
