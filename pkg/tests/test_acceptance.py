"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line."""

import os
import subprocess
import sys
import time

import numpy as np
import pytest

from celluq import evaluation as ev
from celluq.bayes import exact_edge_probabilities, mc_edge_probabilities, sni_edge_probabilities
from celluq.costs import make_cost_model
from celluq.dbmc import LabeledEdges, apply_temperature, fit_temperature, softmax_columns
from celluq.io import write_detections_jsonl
from celluq.model import Detection, Frame, count_feasible
from celluq.perturb import (
    GAUSSIAN,
    NoiseSpec,
    detection_rng,
    fp_assignment_ensemble,
    perturb_detection,
)
from celluq.pipeline import MethodSpec, compute_pair, labeled_edges, subsample
from celluq.solver import solve_map, top_k
from celluq.synthetic import brownian_classification, brownian_sequence, random_frame_pair
from oracles import all_scores

pytestmark = pytest.mark.acceptance

N_INSTANCES = 200


def oracle_instances():
    rng = np.random.default_rng(20240501)
    out = []
    for _ in range(N_INSTANCES):
        m, n = int(rng.integers(0, 5)), int(rng.integers(0, 6))
        src, tgt = random_frame_pair(rng, m, n, box=6.0)
        cm = make_cost_model("l2", lam=float(rng.uniform(0.3, 2.0)),
                             appear_cost=float(rng.uniform(0.5, 8.0)),
                             disappear_cost=float(rng.uniform(0.5, 8.0)))
        out.append((src, tgt, cm))
    return out


@pytest.fixture(scope="module")
def instances():
    return oracle_instances()


def test_oracle_equivalence(instances, verdict):
    start = time.perf_counter()
    worst_p, map_misses = 0.0, 0
    for src, tgt, cm in instances:
        costs = cm.matrix(src, tgt)
        scored = all_scores(costs, cm.appear_cost, cm.disappear_cost)
        best = max(s for _, s in scored)
        sol = solve_map(src, tgt, cm)
        vec = tuple(None if i < 0 else int(i) for i in sol.assignment.mother_vector())
        if dict(scored)[vec] != best:
            map_misses += 1
        full = top_k(src, tgt, cm, count_feasible(len(src), len(tgt)))
        sni = sni_edge_probabilities(full, src, tgt, cm)
        exact = exact_edge_probabilities(src, tgt, cm)
        if exact.values.size:
            worst_p = max(worst_p, float(np.abs(sni.values - exact.values).max()))
        if len(src):
            worst_p = max(worst_p, float(np.abs(sni.disappear - exact.disappear).max()))
    elapsed = time.perf_counter() - start
    ok = worst_p <= 1e-9 and map_misses == 0 and elapsed < 60
    verdict(1, ok, f"{len(instances)} instances, max |SNI-exact| = {worst_p:.1e}, "
                   f"MAP misses = {map_misses}, {elapsed:.1f} s")


def test_top_k_prefix(instances, verdict):
    worst, dupes, short = 0.0, 0, 0
    rng = np.random.default_rng(7)
    for src, tgt, cm in instances:
        costs = cm.matrix(src, tgt)
        ref = sorted((s for _, s in all_scores(costs, cm.appear_cost, cm.disappear_cost)),
                     reverse=True)
        k = int(rng.integers(1, len(ref) + 1))
        sols = top_k(src, tgt, cm, k)
        if len(sols) != k:
            short += 1
        got = np.array([s.log_score for s in sols])
        worst = max(worst, float(np.abs(got - ref[:len(sols)]).max()))
        if len({s.assignment.canonical() for s in sols}) != len(sols):
            dupes += 1
    ok = worst <= 1e-9 and dupes == 0 and short == 0
    verdict(2, ok, f"max score gap = {worst:.1e}, duplicate lists = {dupes}, short lists = {short}")


def test_stochasticity(instances, verdict):
    col_err, row_max, trials = 0.0, 0.0, 0
    noise = NoiseSpec(GAUSSIAN, gamma=0.5, samples=10, seed=3)
    for src, tgt, cm in instances:
        if not len(tgt):
            continue
        joint = [exact_edge_probabilities(src, tgt, cm),
                 sni_edge_probabilities(top_k(src, tgt, cm, 3), src, tgt, cm),
                 mc_edge_probabilities([s.assignment for s in top_k(src, tgt, cm, 4)]),
                 fp_assignment_ensemble(src, tgt, cm, noise)]
        columns = []
        if len(src):
            w = cm.matrix(src, tgt)
            columns = [softmax_columns(w), softmax_columns(w, parental=True),
                       apply_temperature(softmax_columns(w), 0.3)]
        for p in joint + columns:
            col_err = max(col_err, float(np.abs(p.values.sum(axis=0) - 1).max()))
            trials += 1
        for p in joint:
            if len(src):
                row_max = max(row_max, float(p.row_mass().max()))
    ok = col_err <= 1e-9 and row_max <= 2 + 1e-9
    verdict(3, ok, f"{trials} matrices, max |column sum - 1| = {col_err:.1e}, "
                   f"max mother mass = {row_max:.6f}")


def test_tempered_cost_equivalence(verdict):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(1000):
        m, n = rng.integers(1, 7, size=2)
        w = rng.uniform(0, 20, (m, n))
        for tau in (0.1, 1.0, 10.0):
            a = apply_temperature(softmax_columns(w), tau).values
            b = softmax_columns(tau * w).values
            worst = max(worst, float(np.abs(a - b).max()))
    verdict(4, worst <= 1e-9, f"1000 matrices x 3 temperatures, max gap = {worst:.1e}")


def sm_labeled(pairs, cm):
    parts = []
    for src, tgt, truth in pairs:
        res = compute_pair(MethodSpec("SM"), src, tgt, cm)
        parts.append(ev.evaluate_predictions(res.map_assignment, res.conditional, truth))
    return LabeledEdges.concat(parts)


def test_temperature_recovery(verdict):
    start = time.perf_counter()
    cm = make_cost_model("l2", lam=1.0)
    ratios, sizes = {}, []
    for v in (0.5, 2.0, 8.0):
        data = sm_labeled(brownian_classification(50, 100, v, density=0.1, seed=int(v * 10)), cm)
        sizes.append(len(data))
        ratios[v] = fit_temperature(data).tau * v
    elapsed = time.perf_counter() - start
    ok = all(abs(r - 1) <= 0.1 for r in ratios.values()) and min(sizes) >= 5000 and elapsed < 30
    detail = ", ".join(f"v={v}: tau*v={r:.3f}" for v, r in ratios.items())
    verdict(5, ok, f"{detail}; N={min(sizes)} per variance, {elapsed:.1f} s")


def test_subsampling_trend(verdict):
    seq = brownian_sequence(200, 901, 1.0, density=0.1, seed=3)
    cm = make_cost_model("l2", lam=1.0)
    taus = {}
    for factor in (1, 10, 30):
        sub = subsample(seq, factor)
        sub.frames, sub.ground_truth = sub.frames[:31], sub.ground_truth[:30]
        _, data = labeled_edges(sub, MethodSpec("SM"), cm)
        taus[factor] = fit_temperature(data).tau
    scaled = {f: t * f / taus[1] for f, t in taus.items()}
    absolute = {f: t * f for f, t in taus.items()}
    monotone = taus[1] > taus[10] > taus[30]
    ok = monotone and all(abs(s - 1) <= 0.15 for s in list(scaled.values()) + list(absolute.values()))
    detail = ", ".join(f"s={f}: tau={t:.4f} (tau*s={absolute[f]:.3f})" for f, t in taus.items())
    verdict(6, ok, f"{detail}; strictly decreasing = {monotone}")


def sampled_columns(rng, n, scale):
    w = rng.uniform(0, 3, (4, n))
    truth_p = softmax_columns(w, parental=True).values.T
    u = rng.uniform(size=(n, 1))
    truth = np.minimum((u > np.cumsum(truth_p, axis=1)).sum(axis=1), 4)
    reported = softmax_columns(scale * w, parental=True).values.T
    return LabeledEdges(reported, truth, reported.argmax(axis=1), np.full(n, 5))


def test_calibration(verdict):
    rng = np.random.default_rng(5)
    n = 100_000
    calibrated, _ = ev.expected_calibration_error(sampled_columns(rng, n, 1.0), 10)
    fit_set = sampled_columns(rng, n, 4.0)
    held_out = sampled_columns(rng, n, 4.0)
    before, _ = ev.expected_calibration_error(held_out, 10)
    tau = fit_temperature(fit_set)
    after, _ = ev.expected_calibration_error(held_out.tempered(tau), 10)
    ok = calibrated < 0.02 and before > 0.1 and after < 0.03
    verdict(7, ok, f"ECE calibrated = {calibrated:.4f}, 4x mis-scaled = {before:.4f}, "
                   f"after TS (tau={tau.tau:.3f}) = {after:.4f}")


def test_sparsification(verdict):
    # dense Brownian cells: errors come from daughters between two mothers
    cm = make_cost_model("l2", lam=1.0)
    data = sm_labeled(brownian_classification(40, 60, 2.0, density=0.03, seed=9), cm)
    ent = data.entropies()
    gain = ev.accuracy_improvement(ev.sparsification(data, ent, ev.DAUGHTER_ENTROPY))
    mean, sd = ev.permutation_null(data, ent, n_perm=200, seed=0)
    shuffled = np.random.default_rng(99).permutation(ent)
    random_gain = ev.accuracy_improvement(ev.sparsification(data, shuffled, ev.DAUGHTER_ENTROPY))
    inside = abs(random_gain - mean) <= 3 * sd
    ok = gain > 0 and inside
    verdict(8, ok, f"accuracy {data.accuracy():.3f}, entropy gain = {gain:+.4f}, "
                   f"random gain = {random_gain:+.4f} vs null {mean:+.4f} +/- 3*{sd:.4f}")


def run_cli(args, cwd, hashseed):
    env = dict(os.environ, PYTHONHASHSEED=str(hashseed))
    return subprocess.run([sys.executable, "-m", "celluq.cli", *args], cwd=cwd, env=env,
                          capture_output=True, text=True)


def test_cli_determinism(tmp_path, verdict):
    write_detections_jsonl(tmp_path / "seq.jsonl",
                           brownian_sequence(12, 6, 2.0, density=0.05, seed=21))
    write_detections_jsonl(tmp_path / "cal.jsonl",
                           brownian_sequence(12, 6, 2.0, density=0.05, seed=22))
    base = ["evaluate", "seq.jsonl", "--calibration", "cal.jsonl", "--method",
            "SM,SM+TS,FP,FP+A,AS,AS+TS", "--k", "5", "--samples", "8", "--seed", "4",
            "--workers", "2"]
    codes = [run_cli(base + ["--out-dir", d], tmp_path, h).returncode
             for d, h in (("run1", 1), ("run2", 2))]
    files = sorted(p.name for p in (tmp_path / "run1").iterdir())
    same = [p for p in files
            if (tmp_path / "run1" / p).read_bytes() == (tmp_path / "run2" / p).read_bytes()]
    ok = codes == [0, 0] and len(files) >= 10 and len(same) == len(files) \
        and sorted(p.name for p in (tmp_path / "run2").iterdir()) == files
    verdict(9, ok, f"exit codes {codes}, {len(same)}/{len(files)} files byte-identical")


def test_perturbation_statistics(verdict):
    spec = NoiseSpec(GAUSSIAN, gamma=0.1)
    d = Detection(0, [25.0, 40.0])
    pts = np.array([perturb_detection(d, spec, detection_rng(spec, k, 0, d.id)).centroid
                    for k in range(1000)])
    var = pts.var(axis=0, ddof=1)
    var_ok = bool(np.all(np.abs(var / 0.1 - 1) <= 0.1))
    src = Frame(0, [Detection(i, [30.0 * i, 0.0]) for i in range(4)])
    tgt = Frame(1, [Detection(i, [30.0 * i + 0.5, 0.3]) for i in range(4)])
    cm = make_cost_model("l2")
    ens = fp_assignment_ensemble(src, tgt, cm, NoiseSpec(GAUSSIAN, gamma=0.1, samples=10))
    indicator = mc_edge_probabilities([solve_map(src, tgt, cm).assignment])
    same = np.array_equal(ens.values, indicator.values) and \
        np.array_equal(ens.disappear, indicator.disappear)
    verdict(10, var_ok and same, f"per-axis variance {var[0]:.4f}, {var[1]:.4f} (target 0.1); "
                                 f"FP+A equals MAP indicator = {same}")
