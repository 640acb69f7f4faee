"""Command-line entry point: ``evaluate``, ``qa``, ``aggregate`` and ``generate``.

Exit status is 0 on success, 1 on a hard error (unreadable config, bad
arguments, nothing processed) and 2 when some scenes failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

from .behavior import BehaviorModel, ReactionParams
from .config import ConfigError, EngineConfig, load_config, with_overrides
from .conflict import PoRError, UnclassifiableError, resolve_roles
from .enums import ConflictType, SeverityLevel
from .risk import (
    FRAMEWORKS,
    NOT_APPLICABLE,
    PASS,
    aggregate_corpus,
    evaluate_scene,
    qa_scene,
    result_from_dict,
    result_to_dict,
)
from .scene import SceneError, parse_scene, resample_scene, serialize_scene, validate_scene
from .synth import GT_FIXED, GT_FROM_MODEL, GT_NONREACTIVE, GeneratorError, SyntheticScenarioSpec, generate_scene, scene_rng

EXIT_OK, EXIT_ERROR, EXIT_PARTIAL = 0, 1, 2
RESULT_SUFFIX = ".result.json"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2, which means "partial" here
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _dump(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _expand(inputs: Sequence[str], pattern: str) -> list[Path]:
    out = []
    for raw in inputs:
        p = Path(raw)
        if p.is_dir():
            found = sorted(q for q in p.glob(pattern) if q.is_file())
            if pattern == "*.json":  # skip engine outputs sharing a scene directory
                found = [q for q in found if not q.name.endswith(RESULT_SUFFIX) and q.name != "errors.json"]
            out.extend(found)
        else:
            out.append(p)
    return out


# ---------------------------------------------------------------------------
# Per-scene work (module level so worker processes can import it)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Job:
    path: str
    cfg: EngineConfig
    model: BehaviorModel
    qa: bool = False


def _load_scene(path: str, dt: float):
    with open(path, "rb") as fh:
        scene = parse_scene(fh)
    problems = validate_scene(scene)
    if problems:
        raise SceneError("; ".join(f"{v.location}: {v.message}" for v in problems))
    return scene, resample_scene(scene, dt)


def _run_job(job: _Job) -> dict:
    """Returns ``{"ok": doc}`` or ``{"error": record}``; never raises for scene faults."""
    scene_id = None
    try:
        raw, scene = _load_scene(job.path, job.cfg.dt)
        scene_id = scene.scene_id
        gt = scene.annotations.gt_severity
        if job.qa and gt is None:
            qa = qa_scene(raw, None, job.cfg.crash)
            return {"ok": {"scene_id": scene_id, "checks": [_verdict(c) for c in qa.checks]}}
        ctype, roles = resolve_roles(scene, job.cfg.thresholds)
        res = evaluate_scene(scene, roles, ctype, job.model, job.cfg.crash, pre_onset=job.cfg.pre_onset)
        if job.qa:
            qa = qa_scene(scene, res, job.cfg.crash)
            return {"ok": {"scene_id": scene_id, "checks": [_verdict(c) for c in qa.checks]}}
        return {"ok": result_to_dict(res, gt)}
    except OSError as exc:
        err = f"unreadable file: {exc.strerror or exc}"
    except (SceneError, UnclassifiableError, PoRError, ValueError) as exc:
        err = f"{type(exc).__name__}: {exc}"
    return {"error": {"file": job.path, "scene_id": scene_id, "error": err}}


def _verdict(c) -> dict:
    return {"name": c.name, "status": c.status, "detail": c.detail, "evidence": c.evidence}


def _map(fn: Callable, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _config(args) -> EngineConfig:
    cfg = load_config(args.config) if args.config else EngineConfig().validate()
    return with_overrides(cfg, seed=args.seed, jobs=args.jobs, dt=args.dt)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _status(n_ok: int, n_err: int) -> int:
    if n_err == 0:
        return EXIT_OK
    return EXIT_PARTIAL if n_ok else EXIT_ERROR


def _write_errors(out: Path, errors: list) -> None:
    _write_atomic(out / "errors.json", _dump(sorted(errors, key=lambda e: e["file"])))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    model = cfg.load_model()
    paths = _expand(args.scenes, "*.json")
    if not paths:
        print("no scene files given", file=sys.stderr)
        return EXIT_ERROR
    out = _out_dir(args)
    outcomes = _map(_run_job, [_Job(str(p), cfg, model) for p in paths], cfg.jobs)
    docs = [o["ok"] for o in outcomes if "ok" in o]
    errors = [o["error"] for o in outcomes if "error" in o]
    seen = set()
    for doc in docs:
        if doc["scene_id"] in seen:
            errors.append({"file": "", "scene_id": doc["scene_id"], "error": "duplicate scene id"})
            continue
        seen.add(doc["scene_id"])
        _write_atomic(out / f"{doc['scene_id']}{RESULT_SUFFIX}", _dump(doc))
    _write_errors(out, errors)
    for e in errors:
        print(f"error: {e['file']}: {e['error']}", file=sys.stderr)
    print(f"evaluated {len(seen)} scene(s), {len(errors)} error(s)")
    return _status(len(seen), len(errors))


QA_FIELDS = ("scene_id", "check", "status", "detail", "evidence")


def cmd_qa(args) -> int:
    cfg = _config(args)
    model = cfg.load_model()
    paths = _expand(args.scenes, "*.json")
    if not paths:
        print("no scene files given", file=sys.stderr)
        return EXIT_ERROR
    out = _out_dir(args)
    outcomes = _map(_run_job, [_Job(str(p), cfg, model, qa=True) for p in paths], cfg.jobs)
    rows = sorted((o["ok"] for o in outcomes if "ok" in o), key=lambda d: d["scene_id"])
    errors = [o["error"] for o in outcomes if "error" in o]

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(QA_FIELDS)
    for doc in rows:
        for c in doc["checks"]:
            w.writerow([doc["scene_id"], c["name"], c["status"], c["detail"], json.dumps(c["evidence"], sort_keys=True)])
    _write_atomic(out / "qa.csv", buf.getvalue())
    summary = qa_summary(rows, errors)
    _write_atomic(out / "qa_summary.txt", summary)
    _write_errors(out, errors)
    print(summary, end="")
    return _status(len(rows), len(errors))


def qa_summary(rows: list, errors: list) -> str:
    names = [c["name"] for c in rows[0]["checks"]] if rows else ["reconstruction", "gt_in_support", "nrm_not_milder"]
    lines = [f"scenes checked: {len(rows)}", f"scenes failed to evaluate: {len(errors)}"]
    for i, name in enumerate(names):
        st = [r["checks"][i]["status"] for r in rows]
        applicable = [s for s in st if s != NOT_APPLICABLE]
        n_pass = sum(s == PASS for s in applicable)
        rate = f"{100.0 * n_pass / len(applicable):.1f}%" if applicable else "n/a"
        lines.append(f"check {i + 1} {name}: {n_pass}/{len(applicable)} pass ({rate}), {len(st) - len(applicable)} n/a")
    return "\n".join(lines) + "\n"


def _read_outcomes(path: str) -> dict:
    """Scene id -> severity from a JSON mapping or a two-column CSV (scene_id, severity)."""
    text = Path(path).read_text("utf-8")
    if path.lower().endswith(".json") or text.lstrip().startswith("{"):
        raw = json.loads(text)
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: expected a JSON object of scene_id -> severity")
        items = raw.items()
    else:
        reader = csv.reader(io.StringIO(text))
        items = [tuple(r[:2]) for r in reader if r and r[0] != "scene_id"]
    return {str(k): SeverityLevel.parse(str(v)) for k, v in items}


def cmd_aggregate(args) -> int:
    paths = _expand(args.results, f"*{RESULT_SUFFIX}")
    try:
        docs = [json.loads(Path(p).read_text("utf-8")) for p in paths]
        results = [result_from_dict(d) for d in docs]
        gt = _read_outcomes(args.gt) if args.gt else {}
        nrm = _read_outcomes(args.nrm) if args.nrm else {}
        for d in docs:
            sid = str(d["scene_id"])
            if not args.gt:
                if d.get("gt_severity") is None:
                    raise ValueError(f"{sid}: no gt_severity in result; pass --gt")
                gt[sid] = SeverityLevel.parse(d["gt_severity"])
            if not args.nrm:
                if d.get("nrm_severity") is None:
                    raise ValueError(f"{sid}: no nrm_severity in result; pass --nrm")
                nrm[sid] = SeverityLevel.parse(d["nrm_severity"])
        report = aggregate_corpus(results, gt, nrm)
    except OSError as exc:
        print(f"error: unreadable file: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = _out_dir(args)
    _write_atomic(out / "report.csv", report.to_csv())
    print(report.to_text())
    for fw in FRAMEWORKS:
        print(f"total {fw}: {report.total(fw)!r}")
    return EXIT_OK


_SPEC_RANGES = (
    "responder_speed",
    "initiator_speed",
    "gap",
    "lead_decel",
    "approach_angle_deg",
    "arrival_offset",
    "speed_deficit",
    "event_time",
    "maneuver_time",
)


def _spec_from_args(args, family: ConflictType) -> SyntheticScenarioSpec:
    kw = {}
    if args.spec:
        text = Path(args.spec).read_text("utf-8")
        if args.spec.lower().endswith(".json"):
            doc = json.loads(text)
        else:
            from .config import tomllib

            doc = tomllib.loads(text)
        unknown = sorted(set(doc) - set(_SPEC_RANGES) - {"gt_hrt", "gt_jerk", "gt_a_ss", "gt_mode"})
        if unknown:
            raise ValueError(f"spec: unknown key(s) {unknown}")
        for k in _SPEC_RANGES:
            if k in doc:
                v = doc[k]
                kw[k] = (float(v), float(v)) if isinstance(v, (int, float)) else tuple(float(x) for x in v)
        for k in ("gt_hrt", "gt_jerk", "gt_a_ss", "gt_mode"):
            if k in doc and getattr(args, k) is None:
                setattr(args, k, doc[k])
    for k in _SPEC_RANGES:
        v = getattr(args, k, None)
        if v is not None:
            if len(v) > 2:
                raise ValueError(f"--{k.replace('_', '-')}: give a value or LO HI")
            kw[k] = tuple(v) if len(v) == 2 else (v[0], v[0])
    mode = args.gt_mode or (GT_FIXED if args.gt_hrt is not None else GT_FROM_MODEL)
    params = None
    if mode == GT_FIXED:
        params = ReactionParams(
            float(args.gt_hrt if args.gt_hrt is not None else 1.0),
            float(args.gt_jerk if args.gt_jerk is not None else -10.0),
            float(args.gt_a_ss if args.gt_a_ss is not None else -5.0),
        )
    return SyntheticScenarioSpec(family=family, gt_mode=mode, gt_params=params, **kw)


@dataclass(frozen=True)
class _GenJob:
    spec: SyntheticScenarioSpec
    index: int
    seed: int
    cfg: EngineConfig
    model: BehaviorModel


def _run_gen(job: _GenJob):
    sid = f"{job.spec.family.value}-{job.seed}-{job.index:05d}"
    try:
        return generate_scene(
            job.spec,
            scene_rng(job.seed, job.index),
            sid,
            model=job.model,
            crash_cfg=job.cfg.crash,
            thresholds=job.cfg.thresholds,
            dt=job.cfg.dt,
        )
    except GeneratorError as exc:
        return str(exc)


def cmd_generate(args) -> int:
    cfg = _config(args)
    model = cfg.load_model()
    families = SyntheticScenarioSpec.FAMILIES if args.family == ["all"] else [ConflictType(f) for f in args.family]
    try:
        specs = [_spec_from_args(args, f) for f in families]
    except (OSError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = _out_dir(args)
    jobs = [_GenJob(specs[i % len(specs)], i, cfg.seed, cfg, model) for i in range(args.n)]
    scenes = _map(_run_gen, jobs, cfg.jobs)
    errors = [s for s in scenes if isinstance(s, str)]
    for sc in scenes:
        if not isinstance(sc, str):
            _write_atomic(out / f"{sc.scene_id}.json", serialize_scene(sc) + "\n")
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    print(f"generated {len(scenes) - len(errors)} scene(s) in {out}")
    return _status(len(scenes) - len(errors), len(errors))


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, out_default: str) -> None:
    p.add_argument("--config", help="engine config file (TOML or JSON)")
    p.add_argument("--out-dir", default=out_default, help=f"output directory (default: {out_default})")
    p.add_argument("--seed", type=int, help="random seed (overrides config)")
    p.add_argument("--jobs", type=int, help="worker processes (overrides config)")
    p.add_argument("--dt", type=float, help="resampling time step in seconds (overrides config)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fraccol", description="Counterfactual fractional-collision analysis of two-agent conflicts.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("evaluate", help="score scenes: one result JSON per scene")
    p.add_argument("scenes", nargs="+", help="scene files or directories of *.json")
    _common(p, "results")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("qa", help="run the three data-quality checks on annotated scenes")
    p.add_argument("scenes", nargs="+", help="scene files or directories of *.json")
    _common(p, "qa")
    p.set_defaults(func=cmd_qa)

    p = sub.add_parser("aggregate", help="corpus report in the per-framework table layout")
    p.add_argument("results", nargs="*", help=f"result files or directories of *{RESULT_SUFFIX}")
    p.add_argument("--gt", help="ground-truth severities (JSON object or CSV scene_id,severity)")
    p.add_argument("--nrm", help="no-reaction severities (JSON object or CSV scene_id,severity)")
    _common(p, "report")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("generate", help="write seeded synthetic conflict scenes")
    p.add_argument("--family", nargs="+", default=["all"],
                   choices=["all", *(f.value for f in SyntheticScenarioSpec.FAMILIES)])
    p.add_argument("-n", type=int, default=10, help="number of scenes")
    p.add_argument("--spec", help="TOML/JSON file with kinematic ranges and GT settings")
    p.add_argument("--gt-mode", choices=[GT_FROM_MODEL, GT_FIXED, GT_NONREACTIVE])
    p.add_argument("--gt-hrt", type=float, help="fixed GT reaction time, s")
    p.add_argument("--gt-jerk", type=float, help="fixed GT brake jerk, m/s^3 (default -10)")
    p.add_argument("--gt-a-ss", type=float, help="fixed GT steady deceleration, m/s^2 (default -5)")
    for name in _SPEC_RANGES:
        p.add_argument(f"--{name.replace('_', '-')}", type=float, nargs="+", metavar="V", help="value or LO HI")
    _common(p, "scenes")
    p.set_defaults(func=cmd_generate)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "generate" and args.n < 0:
        print("error: -n must be non-negative", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: config invalid: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
