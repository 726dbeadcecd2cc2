"""Acceptance suite: one test per criterion, each logging a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the terminal summary under "acceptance criteria".
"""

import math
import time

import numpy as np

from helpers import (
    LEMMA_KINDS,
    active_input,
    active_spec,
    brute_force_convex,
    brute_force_separable,
    convex_run_violations,
    count_close_components,
    inactive_by_brute_force,
    lemma_violations,
    merge_input,
    mixed_convexity_config,
    quadrant_input,
    random_spec,
    random_unit,
    sparse_support_config,
    with_corr,
)
from opsphere.analysis import epsilon_activity, separability, strict_convexity
from opsphere.constructive import active_convexify, cluster_merge, greedy_inactivation, quadrant_2d
from opsphere.engine import SimulationParams, StopRule, apply_sequence, run
from opsphere.experiments import (
    PAIRS3,
    concentration_experiment,
    counterexample_experiment,
    preset_figure1,
    preset_figure2,
    run_experiment,
)
from opsphere.constructive import counterexample
from opsphere.generators import strictly_convex_configuration, uniform_configuration
from opsphere.geometry import Configuration
from opsphere.rng import philox
from opsphere.update_rules import UpdateSpec, apply_update, contraction_constant, predicted_correlation, slerp_update


def test_criterion_01_claim1_oracle(criteria):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    cases = 0
    while cases < 100_000:
        spec = random_spec(rng)
        d = int(rng.integers(2, 7))
        m = 1000
        u = random_unit(d, rng, m)
        v = with_corr(u, rng.uniform(-1, 1, m), rng)
        a = np.clip(np.einsum("nk,nk->n", u, v), -1, 1)
        new = apply_update(u, v, spec)
        measured = np.einsum("nk,nk->n", new, v)
        worst = max(worst, float(np.max(np.abs(predicted_correlation(a, spec) - measured))))
        cases += m
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 10
    criteria.record(1, ok, f"{cases} cases, max error {worst:.2e} (<= 1e-12), {elapsed:.1f}s (< 10s)")
    assert ok


def test_criterion_02_slerp_consistency(criteria):
    rng = np.random.default_rng(102)
    start = time.perf_counter()
    worst = 0.0
    for k in range(10_000):
        d = 2 + k % 2
        u, v = random_unit(d, rng), random_unit(d, rng)
        eta = float(rng.uniform(0.01, 0.99))
        worst = max(worst, float(np.max(np.abs(slerp_update(u, v, eta) - apply_update(u, v, UpdateSpec.slerp(eta))))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 5
    criteria.record(2, ok, f"10^4 pairs, max deviation {worst:.2e} (<= 1e-9), {elapsed:.1f}s (< 5s)")
    assert ok


def test_criterion_03_monotonicity(criteria):
    rng = np.random.default_rng(103)
    bad = 0
    fixed_bad = 0
    for _ in range(100):
        spec = random_spec(rng, stable_only=True)
        a = rng.uniform(-1, 1, 1000)
        a = a[(a != 0) & (np.abs(a) != 1)]
        new = predicted_correlation(a, spec)
        bad += int(np.count_nonzero((np.abs(new) <= np.abs(a)) | (np.sign(new) != np.sign(a))))
        for x in (-1.0, 0.0, 1.0):
            fixed_bad += predicted_correlation(x, spec) != x
    ok = bad == 0 and fixed_bad == 0
    criteria.record(3, ok, f"10^5 values, {bad} monotonicity/sign violations, {fixed_bad} moved fixed points")
    assert ok


def test_criterion_04_contraction(criteria):
    spec = UpdateSpec.linear(0.1)
    c = contraction_constant(spec, 0.5)
    rng = np.random.default_rng(104)
    a = rng.uniform(0.5, 1.0, 100_000) * rng.choice([-1, 1], 100_000)
    new = predicted_correlation(a, spec)
    bad = int(np.count_nonzero(1 - np.abs(new) > c * (1 - np.abs(a)) + 1e-12))
    ok = abs(c - 1 / 1.05) < 1e-15 and bad == 0
    criteria.record(4, ok, f"c = {c:.6f} (1/1.05), {bad} violations over 10^5 values")
    assert ok


def test_criterion_05_preservation(criteria):
    rng = np.random.default_rng(105)
    cert_bad = pot_bad = 0
    for _ in range(10_000):
        n = int(rng.integers(2, 11))
        d = int(rng.integers(2, 5))
        cfg = strictly_convex_configuration(n, d, rng)
        cert = strict_convexity(cfg)
        assert cert, "generator produced a non-convex configuration"
        signs = np.array(cert.certificate.signs, dtype=float)
        spec = random_spec(rng, stable_only=True)
        idx = rng.integers(0, n * (n - 1), 1000)
        pi = idx // (n - 1)
        r = idx % (n - 1)
        pj = r + (r >= pi)
        U, C = cfg.opinions.copy(), cfg.corr.copy()
        cb, pb = convex_run_violations(U, C, signs, pi, pj, *spec.kernel_args(), 1e-12)
        assert cb >= 0, "update vector vanished"
        cert_bad += cb
        pot_bad += pb
    # exact separable and 0-inactive configurations stay that way
    sep_bad = act_bad = 0
    for k in range(100):
        u = np.zeros((6, 4))
        u[:3, :2] = random_unit(2, rng, 3)
        u[3:, 2:] = random_unit(2, rng, 3)
        spec = random_spec(rng, stable_only=True)
        p = SimulationParams(n=6, d=4, update=spec, max_steps=1000, seed=k, stop=StopRule.max_steps())
        trace, _ = run(p, Configuration(u))
        sep_bad += separability(trace.final, tol=0.0).parts != ((0, 1, 2), (3, 4, 5))
        e = np.eye(4)[rng.integers(0, 4, 6)] * rng.choice([-1.0, 1.0], (6, 1))
        trace, _ = run(SimulationParams(n=6, d=4, update=spec, max_steps=1000, seed=k, stop=StopRule.max_steps(),
                                        record_every=1), Configuration(e))
        act_bad += bool(np.any(trace.max_activity > 0))
    ok = cert_bad == pot_bad == sep_bad == act_bad == 0
    criteria.record(5, ok, f"10^4 runs x 10^3 steps: {cert_bad} certificate failures, {pot_bad} potential increases; "
                           f"{sep_bad} separability and {act_bad} 0-activity losses on exact configs")
    assert ok


def test_criterion_06_transitivity_lemmas(criteria):
    counts = {kind: lemma_violations(kind, 1_000_000, np.random.default_rng(106 + k))
              for k, kind in enumerate(LEMMA_KINDS)}
    ok = all(v == 0 for v in counts.values())
    criteria.record(6, ok, "10^6 instances each, violations " + ", ".join(f"{k}={v}" for k, v in counts.items()))
    assert ok


def test_criterion_07_brute_force_equivalence(criteria):
    rng = np.random.default_rng(107)
    conv_bad = sep_bad = 0
    conv_true = sep_true = 0
    for _ in range(10_000):
        n = int(rng.integers(2, 13))
        cfg = Configuration(mixed_convexity_config(rng, n))
        c = 0.0 if rng.random() < 0.8 else float(rng.uniform(0, 0.5))
        got = bool(strict_convexity(cfg, c))
        conv_true += got
        conv_bad += got != brute_force_convex(cfg.corr, c)
    for _ in range(10_000):
        n = int(rng.integers(2, 11))
        cfg = Configuration(sparse_support_config(rng, n))
        got = bool(separability(cfg, 1e-9))
        sep_true += got
        sep_bad += got != brute_force_separable(cfg.corr, 1e-9)
    ok = conv_bad == 0 and sep_bad == 0
    criteria.record(7, ok, f"convexity: {conv_bad} disagreements in 10^4 ({conv_true} convex); "
                           f"separability: {sep_bad} disagreements in 10^4 ({sep_true} separable)")
    assert ok


def _polarize_all(spec, n, d, make, seeds=100, record_every=100):
    results = []
    for s in range(seeds):
        cfg = make(s)
        p = SimulationParams(n=n, d=d, update=spec, max_steps=1_000_000, seed=s, stream=1,
                             stop=StopRule.polarized(1e-6), record_every=record_every, keep_interactions=False)
        results.append((cfg,) + run(p, cfg))
    return results


def test_criterion_08_planar_stable_polarization(criteria):
    start = time.perf_counter()
    inits = []

    def make(s):
        cfg = uniform_configuration(5, 2, philox(8, s))
        inits.append(bool(separability(cfg)))
        return cfg

    res = _polarize_all(UpdateSpec.linear(0.2), 5, 2, make)
    elapsed = time.perf_counter() - start
    pol = sum(s.polarized for _, _, s in res)
    ok = pol == 100 and not any(inits) and elapsed < 120
    criteria.record(8, ok, f"{pol}/100 polarized, max steps {max(s.steps for _, _, s in res)}, {elapsed:.1f}s (< 120s)")
    assert ok


def test_criterion_09_active_polarization(criteria):
    e = np.eye(3)
    cfg = Configuration(e[[0, 1, 2, 0, 1]])
    res = _polarize_all(UpdateSpec.sign(0.3), 5, 3, lambda s: cfg)
    pol = sum(s.polarized for _, _, s in res)
    ok = pol == 100
    criteria.record(9, ok, f"{pol}/100 polarized from (e1,e2,e3,e1,e2), max steps {max(s.steps for _, _, s in res)}")
    assert ok


def test_criterion_10_three_opinions(criteria):
    inits = []

    def make(s):
        cfg = uniform_configuration(3, 3, philox(10, s))
        inits.append(bool(separability(cfg)))
        return cfg

    res = _polarize_all(UpdateSpec.linear(0.1), 3, 3, make, record_every=1)
    pol = sum(s.polarized for _, _, s in res)
    worst = max(float(np.max(np.diff(t.potential_triangle))) for _, t, _ in res)
    ok = pol == 100 and worst <= 1e-12 and not any(inits)
    criteria.record(10, ok, f"{pol}/100 polarized, max step increase of P {worst:.2e} (<= 1e-12)")
    assert ok


def test_criterion_11_figure1(criteria):
    start = time.perf_counter()
    report = run_experiment(preset_figure1(replicas=100), workers=4)
    elapsed = time.perf_counter() - start
    agg = report.aggregates
    mean = agg["agent1_cluster_size_mean"]
    ok = agg["polarization_rate"] >= 0.95 and mean is not None and 45 <= mean <= 55 and elapsed < 300
    criteria.record(11, ok, f"polarization rate {agg['polarization_rate']:.2f} (>= 0.95), "
                            f"agent-1 cluster mean {mean:.2f} (in [45, 55]), {elapsed:.1f}s (< 300s)")
    assert ok


def test_criterion_12_figure2(criteria):
    report = run_experiment(preset_figure2(replicas=100), workers=4)
    agg = report.aggregates
    rate = agg["active_and_polarized_rate"]
    ok = rate >= 0.95
    criteria.record(12, ok, f"became 0.1-active and polarized: {rate:.2f} (>= 0.95); "
                            f"polarization rate {agg['polarization_rate']:.2f}")
    assert ok


def test_criterion_13_concentration(criteria):
    table = concentration_experiment(n=101, c_values=(2.0,), replicas=400, workers=4)
    row = table.rows[0]
    ok = row.passed and table.polarized > 0
    criteria.record(13, ok, f"c=2: empirical tail {row.empirical:.4f} <= {row.bound:.4f} + 3*{row.sigma:.4f} "
                            f"over {table.polarized} polarized of {table.replicas}")
    assert ok


def test_criterion_14_counterexample(criteria):
    start = time.perf_counter()
    exhaustive = counterexample_experiment(0.1, 6)
    sampled = counterexample_experiment(0.1, 10, samples=100_000)
    # spot-check the vectorized verdicts against the general engine and library predicate
    rng = np.random.default_rng(114)
    cx = counterexample(3, 0.1, 10)
    c0 = np.sign(cx.configuration.corr)
    spot_bad = 0
    for _ in range(300):
        seq = PAIRS3[rng.integers(0, 6, 10)]
        for t in range(1, 11):
            after = apply_sequence(cx.configuration, seq[:t], cx.spec)
            spot_bad += bool(strict_convexity(after)) or bool(np.any(np.sign(after.corr) != c0))
    elapsed = time.perf_counter() - start
    ok = exhaustive.passed and exhaustive.sequences == 6**6 and sampled.passed and spot_bad == 0 and elapsed < 120
    criteria.record(14, ok, f"T=6 exhaustive over {exhaustive.sequences} sequences (eps={exhaustive.epsilon:.4g}): "
                            f"{exhaustive.message}; T=10 on {sampled.sequences} samples (eps={sampled.epsilon:.4g}): "
                            f"{sampled.message}; {spot_bad} engine spot-check failures; {elapsed:.1f}s (< 120s)")
    assert ok


def test_criterion_15_constructive_contracts(criteria):
    rng = np.random.default_rng(115)
    fails = {"greedy_inactivation": 0, "quadrant_2d": 0, "active_convexify": 0, "cluster_merge": 0}
    for _ in range(1000):
        n, d = int(rng.integers(2, 11)), int(rng.integers(2, 4))
        cfg = Configuration(random_unit(d, rng, n))
        eps = float(rng.uniform(0.01, 0.24))
        spec = random_spec(rng, stable_only=True)
        after = apply_sequence(cfg, greedy_inactivation(cfg, eps, spec).pairs, spec)
        fails["greedy_inactivation"] += not inactive_by_brute_force(after.corr, eps)
    done = 0
    while done < 1000:
        cfg = Configuration(quadrant_input(rng))
        if separability(cfg) or epsilon_activity(cfg, 1 / 256):
            continue
        spec = random_spec(rng, stable_only=True)
        after = apply_sequence(cfg, quadrant_2d(cfg, spec).pairs, spec)
        fails["quadrant_2d"] += not brute_force_convex(after.corr)
        done += 1
    for _ in range(1000):
        cfg = Configuration(active_input(rng))
        spec = active_spec(rng)
        after = apply_sequence(cfg, active_convexify(cfg, spec).pairs, spec)
        fails["active_convexify"] += not brute_force_convex(after.corr, abs(spec.threshold))
    for _ in range(1000):
        prev, cur, witness, eps, spec, k = merge_input(rng)
        after = apply_sequence(cur, cluster_merge(cur, witness, eps, spec, previous=prev).pairs, spec)
        fails["cluster_merge"] += not (inactive_by_brute_force(after.corr, eps)
                                       and count_close_components(after.corr, eps) < k)
    ok = all(v == 0 for v in fails.values())
    criteria.record(15, ok, "10^3 inputs each, failures " + ", ".join(f"{k}={v}" for k, v in fails.items()))
    assert ok


def test_criterion_16_determinism(criteria, tmp_path):
    same = True
    for make in (preset_figure1, preset_figure2):
        spec = make(replicas=12, master_seed=16)
        run_experiment(spec, tmp_path / f"{spec.name}-1", workers=1)
        run_experiment(spec, tmp_path / f"{spec.name}-4", workers=4)
        run_experiment(spec, tmp_path / f"{spec.name}-again", workers=1)
        ref = (tmp_path / f"{spec.name}-1" / "summary.json").read_bytes()
        for tag in ("4", "again"):
            same &= ref == (tmp_path / f"{spec.name}-{tag}" / "summary.json").read_bytes()
    criteria.record(16, same, "summary.json byte-identical across reruns and 1 vs 4 workers (figure1, figure2)")
    assert same
