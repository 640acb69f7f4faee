"""Numba vs numpy kernel timings, plus end-to-end scene evaluation per backend.

    python3 benchmarks/bench_kernels.py [--repeat N] [--scenes N]

Kernel timings call the ``*_numba`` and ``*_numpy`` functions directly after
one warm-up call (so compilation is excluded). The end-to-end section runs a
child interpreter per backend, selected with ``FRACCOL_NO_NUMBA``.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from fraccol import kernels as K


def _inputs(rng):
    n = 400  # 20 s at 0.05 s
    t = 0.05 * np.arange(n)
    ax, ay, ah = 15.0 * t, np.zeros(n), np.zeros(n)
    bx, by, bh = np.full(n, 250.0), np.zeros(n), np.zeros(n)
    pts = np.cumsum(rng.uniform(0.2, 1.0, size=(n, 2)), axis=0)
    seg = np.diff(pts, axis=0)
    arc = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
    s = np.linspace(0.0, arc[-1] + 10.0, n)
    tau = np.linspace(-1.0, 12.0, n)
    return {
        "first_overlap": (ax, ay, ah, bx, by, bh, 2.4, 0.95, 2.4, 0.95),
        "brake_profile": (tau, 20.0, 0.0, -10.0, -5.0),
        "follow_path": (arc, pts[:, 0].copy(), pts[:, 1].copy(), np.arctan2(seg[:, 1], seg[:, 0]), s),
        "refine_contact": (0.0, 0.05, np.array([0.0, 0, 0]), np.array([0.75, 0, 0]),
                           np.array([5.2, 0, 0]), np.array([5.2, 0, 0]), 2.4, 0.95, 2.4, 0.95, 1e-4),
    }


def bench_kernels(repeat: int) -> list[tuple[str, float, float]]:
    rows = []
    for name, args in _inputs(np.random.default_rng(0)).items():
        fns = [getattr(K, f"{name}_numba"), getattr(K, f"{name}_numpy")]
        times = []
        for fn in fns:
            fn(*args)  # warm-up / compile
            n = max(1, repeat)
            times.append(min(timeit.repeat(lambda: fn(*args), number=n, repeat=3)) / n)
        rows.append((name, *times))
    return rows


_CHILD = """
import json, time
from fraccol import kernels
from fraccol.behavior import default_behavior_model
from fraccol.conflict import resolve_roles
from fraccol.risk import evaluate_scene
from fraccol.synth import SyntheticScenarioSpec, generate_corpus
m = default_behavior_model()
scenes = generate_corpus([SyntheticScenarioSpec(family=f) for f in SyntheticScenarioSpec.FAMILIES], {n} + 1, 1, model=m)
ctype, roles = resolve_roles(scenes[0]); evaluate_scene(scenes[0], roles, ctype, m)  # warm-up
t0 = time.perf_counter()
score = 0.0
for sc in scenes[1:]:
    ctype, roles = resolve_roles(sc)
    score += evaluate_scene(sc, roles, ctype, m).fractional_score
print(json.dumps({{"backend": kernels.BACKEND, "seconds": time.perf_counter() - t0, "score": score}}))
"""


def bench_end_to_end(n_scenes: int) -> list[dict]:
    out = []
    for flag in ("0", "1"):
        env = dict(os.environ, FRACCOL_NO_NUMBA=flag)
        proc = subprocess.run([sys.executable, "-c", _CHILD.format(n=n_scenes)], env=env,
                              capture_output=True, text=True, check=True)
        out.append(json.loads(proc.stdout.strip().splitlines()[-1]))
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200, help="calls per kernel timing")
    ap.add_argument("--scenes", type=int, default=20, help="scenes in the end-to-end run")
    args = ap.parse_args(argv)

    print(f"{'kernel':<16}{'numba us':>12}{'numpy us':>12}{'speed-up':>10}")
    for name, t_nb, t_np in bench_kernels(args.repeat):
        print(f"{name:<16}{t_nb * 1e6:>12.1f}{t_np * 1e6:>12.1f}{t_np / t_nb:>10.1f}")

    print(f"\nend-to-end, {args.scenes} scenes x default lattice")
    runs = bench_end_to_end(args.scenes)
    for r in runs:
        print(f"  {r['backend']:<6} {r['seconds']:7.2f} s  ({r['seconds'] / args.scenes * 1e3:.0f} ms/scene)")
    same = abs(runs[0]["score"] - runs[1]["score"]) <= 1e-9 * max(1.0, runs[0]["score"])
    print(f"  summed fractional score agrees across backends: {same}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
