"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` or
``python tests/test_acceptance.py``. Criterion 8 writes its seed-level table
to ``$MIPRUNE_ACCEPTANCE_OUT/summary.csv`` (default ``acceptance_output/``).
"""

import os
import sys
import time
from pathlib import Path

import numpy as np

from miprune.bench import bench_kernels
from miprune.data import make_splits
from miprune.experiment import (
    ExperimentConfig,
    benchmark_config,
    direction_checks,
    run_experiment,
    write_claims_csv,
)
from miprune.mi import GreedyState, brute_force_best_subset, mutual_information
from miprune.nn import (
    Batch,
    LayerSpec,
    MaskSet,
    Network,
    TrainConfig,
    forward,
    init_network,
    loss_and_grads,
    squeeze,
    train,
)
from miprune.pruner import SparsitySchedule, layerwise_prune, make_schedule
from miprune.selector import SelectorConfig, select_exact
from miprune.stats import CovarianceModel, LayerPairStats, collect, finalize

sys.path.insert(0, str(Path(__file__).parent))
from oracles import random_pd  # noqa: E402

OUT_DIR = Path(os.environ.get("MIPRUNE_ACCEPTANCE_OUT", Path(__file__).resolve().parents[1] / "acceptance_output"))


def _line(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n[acceptance] criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")


def test_criterion_1_gaussian_mi(capsys):
    t0 = time.perf_counter()
    errors = {}
    identity = Network([LayerSpec(np.eye(2), np.zeros(2), "identity")])
    for i, rho in enumerate((0.0, 0.5, 0.8, 0.95)):
        rng = np.random.default_rng(100 + i)
        x = rng.multivariate_normal([0.0, 0.0], [[1.0, rho], [rho, 1.0]], size=100_000)
        stats = collect(identity, Batch(x, np.zeros(len(x), int)))
        cov = finalize(stats[0])
        got = mutual_information(cov, [0], [1])
        errors[rho] = abs(got - (-0.5 * np.log(1 - rho * rho)))
    elapsed = time.perf_counter() - t0
    ok = max(errors.values()) <= 0.02 and elapsed < 10
    detail = ", ".join(f"rho={r}: err {e:.4f}" for r, e in errors.items()) + f"; {elapsed:.2f}s"
    _line(capsys, 1, ok, detail)
    assert ok, detail


def test_criterion_2_oracle_equivalence(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    ratios, drift = [], []
    for _ in range(50):
        width = int(rng.integers(4, 11))
        n_up = int(rng.integers(1, 4))
        k = int(rng.integers(1, min(4, width) + 1))
        cov = CovarianceModel.from_matrix(random_pd(rng, width + n_up), width)
        upper = list(range(width, width + n_up))
        greedy = select_exact(cov, upper, k)
        _, best = brute_force_best_subset(cov, upper, k)
        ratios.append(greedy.trace[-1] / best)
        state = GreedyState(cov, upper)
        for d in greedy.chosen:
            state.extend(d)
        drift.append(abs(state.value - state.from_scratch()))
    elapsed = time.perf_counter() - t0
    ratios = np.array(ratios)
    n_bad = int((ratios < 0.95).sum())
    ok = n_bad == 0 and max(drift) <= 1e-8 and elapsed < 60
    detail = (f"{50 - n_bad}/50 instances >= 0.95x optimum (min {ratios.min():.3f}, mean {ratios.mean():.3f}); "
              f"max incremental drift {max(drift):.1e}; {elapsed:.2f}s")
    _line(capsys, 2, ok, detail)
    assert ok, detail


def _random_triple(rng):
    depth = int(rng.integers(1, 5))
    widths = [int(rng.integers(2, 11))]
    residual = []
    for l in range(depth):
        res = l < depth - 1 and rng.random() < 0.4
        residual.append(bool(res))
        widths.append(widths[-1] if res else int(rng.integers(2, 11)))
    act = str(rng.choice(["relu", "tanh", "identity"]))
    net = init_network(widths, act, residual=residual, seed=int(rng.integers(1 << 30)))
    for layer in net.layers:
        layer.bias[:] = rng.standard_normal(layer.bias.shape)
    keep: list = [None] * (depth + 1)
    keep[depth] = np.arange(widths[depth])
    for l in range(depth - 1, -1, -1):
        if residual[l]:
            keep[l] = keep[l + 1]
        else:
            keep[l] = np.sort(rng.choice(widths[l], int(rng.integers(1, widths[l] + 1)), replace=False))
    return net, MaskSet.from_indices(widths, keep), rng.standard_normal((int(rng.integers(1, 20)), widths[0]))


def test_criterion_3_squeeze_equivalence(capsys):
    rng = np.random.default_rng(3)
    worst, n_res = 0.0, 0
    for _ in range(200):
        net, masks, x = _random_triple(rng)
        n_res += any(l.residual for l in net.layers)
        masked = forward(net, x, masks).logits
        squeezed = forward(squeeze(net, masks), x[:, masks.preserved[0]]).logits
        scale = np.maximum(np.abs(masked), 1e-12)
        worst = max(worst, float((np.abs(squeezed - masked) / np.maximum(scale, 1.0)).max()))
    w = np.array([[11, 12, 13, 14], [21, 22, 23, 24], [31, 32, 33, 34], [41, 42, 43, 44]], float)
    example = Network([LayerSpec(w.T, np.zeros(4), "identity"), LayerSpec(np.ones((2, 4)), np.zeros(2))])
    sq = squeeze(example, MaskSet([[1, 1, 0, 1], [0, 1, 1, 1], [1, 1]]))
    pattern = np.array_equal(sq.layers[0].weight.T, [[12, 13, 14], [22, 23, 24], [42, 43, 44]])
    ok = worst <= 1e-6 and pattern and n_res > 0
    detail = f"200 triples ({n_res} with residual links), max rel err {worst:.1e}; 4x4 pattern {'ok' if pattern else 'WRONG'}"
    _line(capsys, 3, ok, detail)
    assert ok, detail


def test_criterion_4_planted_recovery(capsys):
    t0 = time.perf_counter()
    hits = []
    for seed in range(5):
        task, splits = make_splits("planted-subspace(4,32)", seed, n_train=2000, n_dev=500, n_test=1000)
        net = init_network([32, 64, 64, 4], "relu", seed=seed)
        net = train(net, splits["train"], TrainConfig(steps=1500, lr=3e-3, seed=seed)).net
        stats = collect(net, splits["train"], seed=seed)
        masks = layerwise_prune(net, stats, SparsitySchedule.custom([4 / 32, 0.5, 0.5]), SelectorConfig())
        hits.append(set(masks.preserved[0].tolist()) == set(task.planted.tolist()))
    elapsed = time.perf_counter() - t0
    ok = sum(hits) >= 4 and elapsed < 300
    detail = f"all 4 planted dims kept in {sum(hits)}/5 seeds ({''.join('x' if h else '.' for h in hits)}); {elapsed:.1f}s"
    _line(capsys, 4, ok, detail)
    assert ok, detail


def test_criterion_5_speedup(capsys):
    (t,) = bench_kernels(sizes=(1024,), keep_ratios=(0.5,), trials=30, warmups=5)
    ok = t.squeezed_ratio <= 0.5 and t.masked_ratio >= 0.9
    detail = (f"D=1024 keep 0.5: squeezed/dense {t.squeezed_ratio:.3f} (<= 0.5), "
              f"masked/dense {t.masked_ratio:.3f} (>= 0.9)")
    _line(capsys, 5, ok, detail)
    assert ok, detail


def test_criterion_6_gradient_check(capsys):
    rng = np.random.default_rng(6)
    net = init_network([6, 16, 12, 4], "tanh", seed=6)
    batch = Batch(rng.standard_normal((12, 6)), rng.integers(0, 4, 12))
    _, grads = loss_and_grads(net, batch)
    h, worst = 1e-4, 0.0
    for l, layer in enumerate(net.layers):
        for arr, g in ((layer.weight, grads[l][0]), (layer.bias, grads[l][1])):
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + h
                up, _ = loss_and_grads(net, batch)
                arr[idx] = old - h
                down, _ = loss_and_grads(net, batch)
                arr[idx] = old
                num = (up - down) / (2 * h)
                worst = max(worst, abs(g[idx] - num) / max(abs(num) + abs(g[idx]), 1e-8))
    ok = worst <= 1e-4
    detail = f"3-layer tanh net (6-16-12-4), max relative error {worst:.2e}"
    _line(capsys, 6, ok, detail)
    assert ok, detail


def _invariants(tmp_path):
    rng = np.random.default_rng(7)
    failures = []
    # MI symmetry and sign.
    for _ in range(100):
        n = int(rng.integers(2, 10))
        cov = CovarianceModel.from_matrix(random_pd(rng, n))
        cut = int(rng.integers(1, n))
        perm = rng.permutation(n)
        a, b = np.sort(perm[:cut]), np.sort(perm[cut:])
        ab, ba = mutual_information(cov, a, b), mutual_information(cov, b, a)
        if abs(ab - ba) > 1e-10:
            failures.append("symmetry")
        if ab < -1e-9:
            failures.append("nonnegativity")
    # Greedy trace monotone; argmax invariant under rescaling.
    for _ in range(30):
        m = random_pd(rng, 10)
        c = rng.uniform(0.05, 20.0, 10)
        a = select_exact(CovarianceModel.from_matrix(m, 7), [7, 8, 9], 5)
        b = select_exact(CovarianceModel.from_matrix(m * np.outer(c, c), 7), [7, 8, 9], 5)
        if np.any(np.diff(a.trace) < -1e-9) or a.trace[0] < -1e-9:
            failures.append("monotone trace")
        if a.chosen != b.chosen:
            failures.append("scaling-invariant argmax")
    # Streaming accumulator equals two-pass.
    for _ in range(20):
        n = int(rng.integers(2, 10_001))
        rows = rng.standard_normal((n, 6)) * rng.uniform(0.1, 100, 6) + rng.uniform(-50, 50, 6)
        acc = LayerPairStats(0, 3, 3)
        for chunk in np.array_split(rows, int(rng.integers(1, 20))):
            acc.update(chunk)
        c = rows - rows.mean(axis=0)
        two_pass = c.T @ c / n
        if np.abs(acc.covariance() - two_pass).max() > 1e-9 * np.abs(two_pass).max():
            failures.append("streaming == two-pass")
    # Mask cardinality and schedule mean.
    net = init_network([12, 10, 8, 3], "tanh", seed=0)
    data = Batch(rng.standard_normal((500, 12)), rng.integers(0, 3, 500))
    stats = collect(net, data)
    for shape in ("uniform", "pyramid", "inverted_pyramid"):
        for keep in (0.3, 0.5, 0.8):
            sched = make_schedule(shape, keep, net.depth)
            masks = layerwise_prune(net, stats, sched)
            if masks.counts[:-1] != sched.counts(net.widths[:-1]):
                failures.append("mask cardinality")
        for depth in range(1, 65):
            for keep in (0.15, 0.2, 0.5, 0.85):
                if abs(np.mean(make_schedule(shape, keep, depth).keep_ratios) - keep) > 1e-9:
                    failures.append("schedule mean")
    # Determinism of selections and reports.
    first = layerwise_prune(net, stats, make_schedule("uniform", 0.5, 3))
    second = layerwise_prune(net, collect(net, data), make_schedule("uniform", 0.5, 3))
    if [s.to_json() for s in first.selections] != [s.to_json() for s in second.selections]:
        failures.append("selection determinism")
    cfg = ExperimentConfig.from_dict(dict(
        task={"generator": "planted-subspace(4,16)"}, n_train=300, n_dev=50, n_test=100, hidden=[12],
        train={"steps": 100}, finetune={"steps": 10}, movement_steps=5, seeds=[0], keep_ratios=[0.5],
    ))
    timing = {"time_dense_s", "time_pruned_s", "speedup"}
    runs = [[{k: v for k, v in r.items() if k not in timing} for r in run_experiment(cfg, tmp_path / name)]
            for name in ("a", "b")]
    if runs[0] != runs[1]:
        failures.append("report determinism")
    return sorted(set(failures))


def test_criterion_7_invariants(capsys, tmp_path):
    failures = _invariants(tmp_path)
    ok = not failures
    detail = ("symmetry, nonnegativity, monotone trace, scaling-invariant argmax, streaming==two-pass, "
              "mask cardinality, schedule mean, determinism all hold" if ok else "broken: " + ", ".join(failures))
    _line(capsys, 7, ok, detail)
    assert ok, detail


def test_criterion_8_direction_checks(capsys):
    outcomes = direction_checks(benchmark_config())
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    write_claims_csv(outcomes, OUT_DIR / "summary.csv")
    ok = all(o.passed(required=4) for o in outcomes)
    detail = "; ".join(
        f"{o.name} {o.wins}/{o.n} (mean {np.mean(o.acc_a):.3f} vs {np.mean(o.acc_b):.3f})" for o in outcomes
    )
    _line(capsys, 8, ok, detail + f"; table in {OUT_DIR / 'summary.csv'}")
    assert ok, detail


if __name__ == "__main__":
    import pytest

    sys.exit(pytest.main([__file__, "-v", "-p", "no:cacheprovider"]))
