"""Acceptance criteria 1-9, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the report; the
lines are also written through a disabled capture so plain ``pytest -v``
shows them.
"""

import csv
import math
import time

import numpy as np
import pytest

from symlayer import cli
from symlayer.analysis import (
    WeightSet,
    astride_cancellation_check,
    criterion_sum,
    extremum_divergence,
    refutability_value,
)
from symlayer.geometry import PlaneBasis, build_symmetric_layout, layout_angles, random_basis
from symlayer.head import cross_entropy, init_head
from symlayer.suite import run_lemma_suite
from symlayer.trainer.data import make_blobs
from symlayer.trainer.loop import TrainConfig, train
from symlayer.trainer.studies import bench_epoch, stability_study

# brute-force oracle: direct float sum of sin(j pi/3) e^{cos(j pi/3)}, j = 0, 1, 2
N3_ORACLE = math.sin(math.pi / 3) * math.exp(0.5) + math.sin(2 * math.pi / 3) * math.exp(-0.5)


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance] criterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})")

    return emit


@pytest.fixture(scope="module")
def blobs10():
    # 625 per class with an 80/20 split gives 5000 training samples
    return make_blobs(10, 64, 625, 0.05, seed=0)


def test_c1_lemma_suite(report):
    t0 = time.perf_counter()
    rows = run_lemma_suite(range(3, 33), (2, 3, 8, 32), 50, 1e-9)
    dt = time.perf_counter() - t0
    worst = max(r.residual for r in rows)
    ok = all(r.passed for r in rows) and dt < 30
    report(1, ok, f"{len(rows)} checks, worst residual {worst:.2e} <= 1e-9, {dt:.1f}s < 30s")
    assert ok


def test_c2_criterion_roots(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_root = worst_astride = 0.0
    for n in range(3, 65):
        ws = WeightSet.from_layout(build_symmetric_layout(PlaneBasis.axes(2), n))
        worst_root = max(worst_root, float(np.max(np.abs(criterion_sum(ws, layout_angles(n))))))
        for p in range(100):
            d = (3, 8, 32)[p % 3]
            lay = build_symmetric_layout(random_basis(rng, d), n)
            worst_astride = max(worst_astride, astride_cancellation_check(lay, p % n, rng.standard_normal(d)))
    dt = time.perf_counter() - t0
    ok = worst_root <= 1e-10 and worst_astride <= 1e-10 and dt < 60
    report(2, ok, f"in-plane {worst_root:.2e}, astride {worst_astride:.2e} <= 1e-10 over 6200 planes, {dt:.1f}s < 60s")
    assert ok


def test_c3_refutability(report):
    t0 = time.perf_counter()
    values = np.array([refutability_value(n) for n in range(3, 257)])
    dt = time.perf_counter() - t0
    err = abs(values[0] - N3_ORACLE)
    ok = bool(np.all(values > 0)) and err <= 1e-9 and dt < 1
    report(3, ok, f"min {values.min():.4f} > 0 for n in [3, 256], n=3 {values[0]:.10f} (err {err:.1e}), {dt:.3f}s < 1s")
    assert ok


def test_c4_divergence(report):
    t0 = time.perf_counter()
    basis = PlaneBasis.axes(2)
    asym = extremum_divergence(WeightSet.from_angles(np.radians([0.0, 30.0, 180.0])), basis).max
    sym = max(extremum_divergence(WeightSet.from_layout(build_symmetric_layout(basis, n)), basis).max for n in (3, 4, 7, 10, 16))
    dt = time.perf_counter() - t0
    ok = asym > 0.5 and sym <= 0.02 and dt < 10
    report(4, ok, f"asymmetric {asym:.2f} deg > 0.5, symmetric {sym:.2e} deg <= 0.02, {dt:.1f}s < 10s")
    assert ok


def _central_diff(f, arr, eps=1e-5):
    out = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        keep = arr[idx]
        arr[idx] = keep + eps
        hi = f()
        arr[idx] = keep - eps
        lo = f()
        arr[idx] = keep
        out[idx] = (hi - lo) / (2 * eps)
    return out


def _rel_err(num, ana):
    scale = max(np.max(np.abs(num)), np.max(np.abs(ana)), 1e-12)
    return float(np.max(np.abs(num - ana)) / scale)


def test_c5_gradients(report):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        kind = ("symmetric", "fc", "arcface", "sphereface")[seed % 4]
        n, d, batch = int(rng.integers(3, 9)), int(rng.integers(2, 17)), int(rng.integers(1, 5))
        m = {"arcface": float(rng.uniform(0.0, 0.5)), "sphereface": int(rng.integers(1, 5))}.get(kind)
        head = init_head(kind, n, d, seed, sigma=float(rng.uniform(1.0, 16.0)), m=m)
        x = rng.standard_normal((batch, d))
        y = rng.integers(0, n, size=batch)

        def loss():
            if kind == "symmetric":
                head._derived = None  # weights were perturbed in place
            return cross_entropy(head.forward(x, y), y)[0]

        _, g = cross_entropy(head.forward(x, y), y)
        grads = head.backward(x, g, y)
        for name, p in head.params.items():
            worst = max(worst, _rel_err(_central_diff(loss, p), grads[name]))
        worst = max(worst, _rel_err(_central_diff(loss, x), grads.d_input))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-5 and dt < 30
    report(5, ok, f"worst relative error {worst:.2e} <= 1e-5 over 20 configs, {dt:.1f}s < 30s")
    assert ok


def test_c6_convergence_parity(report, blobs10):
    t0 = time.perf_counter()
    fc = train(TrainConfig(head="fc"), blobs10).best_eval_acc
    gaps = {}
    for sigma in (8.0, 16.0, 32.0):
        acc = train(TrainConfig(head="symmetric", sigma=sigma), blobs10).best_eval_acc
        gaps[sigma] = fc - acc
    dt = time.perf_counter() - t0
    ok = all(g <= 0.02 for g in gaps.values()) and dt < 600
    detail = ", ".join(f"sigma {s:g} gap {100 * g:+.2f}pt" for s, g in gaps.items())
    report(6, ok, f"FC {fc:.4f}; {detail}; within 2pt; {dt:.1f}s < 600s")
    assert ok


@pytest.fixture(scope="module")
def stability(blobs10):
    t0 = time.perf_counter()
    grid = [("symmetric", s, None) for s in (8.0, 16.0, 32.0, 64.0)]
    grid += [("arcface", s, 0.1) for s in (4.0, 8.0, 16.0, 32.0, 64.0)]
    table = stability_study(grid, 3, TrainConfig(), blobs10, workers=4)
    return table.summary(), time.perf_counter() - t0


def test_c7a_symmetric_never_diverges(report, stability):
    summary, dt = stability
    sym = [r for r in summary if r["kind"] == "symmetric"]
    n_div = sum(r["diverged"] for r in sym)
    ok = len(sym) == 4 and n_div == 0 and dt < 1800
    report("7a", ok, f"{n_div} diverged cells over sigma 8-64 x 3 repeats, {dt:.1f}s < 1800s")
    assert ok


# ArcFace trains cleanly on the desk blobs at every scale tried; see README
@pytest.mark.xfail(strict=True, reason="ArcFace is not less stable than the symmetric head on desk-scale blobs")
def test_c7b_arcface_more_variable(report, stability):
    summary, dt = stability
    sym = {r["sigma"]: r for r in summary if r["kind"] == "symmetric"}
    arc = [r for r in summary if r["kind"] == "arcface"]
    # symmetric reference at the same sigma; sigma 4 has none, so compare with the calmest symmetric cell
    calm = min(sym.values(), key=lambda r: (r["spread"], r["flag_disagreement"]))
    hits = []
    for r in arc:
        ref = sym.get(r["sigma"], calm)
        if r["spread"] > ref["spread"] or (r["flag_disagreement"] and not ref["flag_disagreement"]):
            hits.append(r["sigma"])
    ok = bool(hits) and dt < 1800
    detail = "; ".join(
        f"sigma {r['sigma']:g} arcface spread {r['spread']:.4f} div {r['diverged']}/3 vs symmetric spread "
        f"{sym.get(r['sigma'], calm)['spread']:.4f}"
        for r in arc
    )
    report("7b", ok, detail)
    assert ok


def test_c8_timing_parity(report, blobs10):
    rows = {r.kind: r for r in bench_epoch(TrainConfig(), blobs10, repeats=3, kinds=("fc", "symmetric"))}
    ratio = rows["symmetric"].mean_sec / rows["fc"].mean_sec
    ok = ratio <= 1.5
    report(8, ok, f"symmetric {rows['symmetric'].mean_sec:.4f}s vs FC {rows['fc'].mean_sec:.4f}s per epoch, ratio {ratio:.2f} <= 1.5")
    assert ok


def test_c9_manifest_determinism(report, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["train", "--head", "symmetric", "--sigma", "32", "--epochs", "5", "--seed", "7", "--out", str(a)]) == 0
    assert cli.main(["train", "--config", str(a / "manifest.txt"), "--out", str(b)]) == 0

    def losses(p):
        with open(p / "runlog.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        cols = [rows[0].index("train_loss"), rows[0].index("eval_loss")]
        return [[r[c] for c in cols] for r in rows[1:]]

    la, lb = losses(a), losses(b)
    ok = la == lb and len(la) == 5
    report(9, ok, f"{len(la)} epochs replayed from manifest, loss columns bit-identical: {la == lb}")
    assert ok
