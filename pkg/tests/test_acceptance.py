"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run just this gate with ``pytest tests/test_acceptance.py -s``
(the verdict lines are printed even without ``-s``).
"""
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from mwld import audit as au
from mwld.cli import run
from mwld.core import LossVector, PowerK
from mwld.data import BUNDLED_SCHEMAS, load_csv, split_train_test, synth_two_group, write_csv
from mwld.estimator import brute_force_mwld, discrepancy_by_size, empirical_mwld
from mwld.model import LOG_LOSS_BOUND, LinearModel
from mwld.trainer import (
    CLV_LAMBDA_GRID,
    LAMBDA_GRID,
    Batch,
    Objective,
    TrainConfig,
    fit,
    objective_gradient,
    objective_value,
)
from mwld.variance import (
    coarse_loss_variance,
    conditional_coarse_loss_variance,
    conditional_loss_variance,
    group_unfairness,
    loss_variance,
    sandwich_envelope,
    variance_upper_bound_general_L,
)

FIXTURES = Path(__file__).parent / "fixtures"
EXPECTED_T = {"candc": 16, "income": 30, "german": 6, "compas5": 30}


@pytest.fixture
def verdict(capsys):
    def emit(number, name, ok, detail):
        with capsys.disabled():
            sys.stdout.write(f"\n[acceptance {number:>2}] {'PASS' if ok else 'FAIL'}  {name}: {detail}\n")
        assert ok, f"criterion {number} ({name}) failed: {detail}"

    return emit


def test_01_oracle_equivalence(verdict):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst, count = 0.0, 0
    for _ in range(1000):
        values = rng.random(int(rng.integers(1, 13)))
        for k in (0.1, 0.3, 0.5, 1.0):
            fast = empirical_mwld(values, k).value
            slow = brute_force_mwld(values, PowerK(k)).value
            worst = max(worst, abs(fast - slow))
            count += 1
    elapsed = time.perf_counter() - start
    verdict(1, "scan equals brute force", worst <= 1e-12 and elapsed < 30,
            f"{count} instances, max |diff| {worst:.2e}, {elapsed:.1f}s")


def _cpu_time(values, repeats=5):
    best = math.inf
    for _ in range(repeats):
        t0 = time.process_time()
        empirical_mwld(values, 0.5)
        best = min(best, time.process_time() - t0)
    return best


def test_02_n_log_n_scaling(verdict):
    rng = np.random.default_rng(102)
    small, large = rng.random(10**5), rng.random(10**6)
    _cpu_time(small, 1)
    t_small, t_large = _cpu_time(small), _cpu_time(large)
    ratio = t_large / t_small
    verdict(2, "n log n scaling", t_large < 1.0 and ratio < 15,
            f"1e5: {t_small * 1e3:.1f} ms, 1e6: {t_large * 1e3:.1f} ms (sort included), ratio {ratio:.1f}")


def test_03_sandwich(verdict):
    rng = np.random.default_rng(103)
    lower = upper = general = 0
    checked_upper = 0
    for i in range(1000):
        n = int(rng.integers(1, 13)) if i % 2 else int(rng.integers(13, 400))
        values = rng.random(n) ** float(rng.uniform(0.2, 5))
        half = brute_force_mwld(values, PowerK(0.5)).value if n <= 12 else empirical_mwld(values, 0.5).value
        sd = math.sqrt(loss_variance(values))
        lower += half > sd + 1e-9
        if half <= 1:
            checked_upper += 1
            upper += sd > sandwich_envelope(half) + 1e-9
        scaled = LossVector(values * LOG_LOSS_BOUND, loss_bound_L=LOG_LOSS_BOUND)
        gamma = empirical_mwld(scaled, 0.5).value
        if gamma > 0:
            general += loss_variance(scaled) > variance_upper_bound_general_L(gamma, LOG_LOSS_BOUND) + 1e-9
    ok = lower == upper == general == 0
    verdict(3, "variance sandwich", ok,
            f"1000 vectors: lower violations {lower}, upper violations {upper}/{checked_upper}, "
            f"general-L (L={LOG_LOSS_BOUND:.3f}) violations {general}")


def test_04_shift_certificate(verdict):
    rng = np.random.default_rng(104)
    start = time.perf_counter()
    worst, masks = math.inf, 0
    while masks < 10**4:
        n = int(rng.integers(2, 300))
        values = rng.random(n) ** float(rng.uniform(0.2, 5))
        losses = LossVector(values)
        k = float(rng.choice([0.1, 0.3, 0.5, 1.0]))
        bound = empirical_mwld(losses, k).value
        order = np.argsort(values)
        for _ in range(100):
            if rng.random() < 0.25:
                # lowest or highest t losses: the groups the maximum ranges over
                t = int(rng.integers(1, n))
                chosen = order[:t] if rng.random() < 0.5 else order[n - t:]
                members = np.zeros(n, bool)
                members[chosen] = True
            else:
                members = rng.random(n) < rng.uniform(0.01, 0.99)
            if not members.any() or members.all():
                continue
            worst = min(worst, au.shift_margin(losses, members, k, bound))
            masks += 1
    elapsed = time.perf_counter() - start
    verdict(4, "demographic-shift certificate", worst >= -1e-9,
            f"{masks} masks, min margin {worst:.3e}, {elapsed:.1f}s")


ATOMS = [(0.0, 0.18), (0.1, 0.07), (0.25, 0.15), (0.4, 0.1), (0.55, 0.12), (0.7, 0.08), (0.9, 0.2), (1.0, 0.1)]


def test_05_convergence(verdict):
    start = time.perf_counter()
    rows = au.convergence_study(ATOMS, [10**3, 10**4, 10**5], ks=(0.5, 1.0), delta=0.2, trials=200, seed=105)
    elapsed = time.perf_counter() - start
    worst_rate = max(r["violation_rate"] for r in rows)
    monotone = True
    for k in (0.5, 1.0):
        medians = [r["median_deviation"] for r in rows if r["k"] == k]
        monotone &= all(a > b for a, b in zip(medians, medians[1:]))
    detail = ", ".join(f"k={r['k']} n={r['n']}: rate {r['violation_rate']:.3f} med {r['median_deviation']:.2e}"
                       for r in rows)
    verdict(5, "convergence rates", worst_rate <= 0.2 and monotone and elapsed < 120,
            f"{detail}; {elapsed:.1f}s")


def test_06_deviation_bounds(verdict):
    delta, T = 0.02, 4
    out = au.deviation_study([0.4, 0.3, 0.2, 0.1], [0.1, 0.3, 0.5, 0.8], n=2000, delta=delta, trials=500, seed=106)
    ok = out["maurer_violation_rate"] <= delta and out["coarse_violation_rate"] <= (T + 3) * delta
    verdict(6, "deviation bounds", ok,
            f"std radius {out['maurer_radius']:.4f} violated {out['maurer_violation_rate']:.3f} (<= {delta}); "
            f"coarse radius {out['coarse_radius']:.4f} violated {out['coarse_violation_rate']:.3f} "
            f"(<= {(T + 3) * delta:.2f})")


def _fd(theta, batch, config, h=1e-5):
    out = np.empty_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = h
        out[j] = (objective_value(LinearModel(theta + e), batch, config)
                  - objective_value(LinearModel(theta - e), batch, config)) / (2 * h)
    return out


def test_07_gradients(verdict):
    rng = np.random.default_rng(107)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n, d = int(rng.integers(2, 64)), int(rng.integers(1, 8))
        xa = np.hstack([rng.normal(size=(n, d)), np.ones((n, 1))])
        batch = Batch(xa, rng.integers(0, 2, n), rng.integers(0, 4, n))
        theta = rng.normal(size=d + 1)
        eta, lam = float(rng.uniform(0, 0.1)), float(rng.uniform(0, 6))
        for objective in Objective:
            config = TrainConfig(objective, eta=eta, lam=lam)
            g = objective_gradient(LinearModel(theta), batch, config)
            fd = _fd(theta, batch, config)
            worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(g), np.linalg.norm(fd), 1e-8))
    elapsed = time.perf_counter() - start
    verdict(7, "objective gradients", worst <= 1e-5,
            f"100 configs x 3 objectives, max rel err {worst:.2e}, {elapsed:.1f}s")


def _tradeoff(objective, grid, penalty, seeds):
    losses = np.zeros((len(seeds), len(grid)))
    penalties = np.zeros_like(losses)
    for i, seed in enumerate(seeds):
        train, test = split_train_test(synth_two_group(5000, 0.2, 0.3, seed=seed), 0.3, seed)
        for j, lam in enumerate(grid):
            model, _ = fit(train, TrainConfig(objective, lam=lam, seed=seed))
            test_losses = au.model_losses(model, test)
            losses[i, j] = test_losses.mean()
            penalties[i, j] = penalty(test_losses, test)
    return losses.mean(axis=0), penalties.mean(axis=0)


def _halving_point(grid, loss, penalty):
    for lam, l, p in zip(grid, loss, penalty):
        if p <= 0.5 * penalty[0] and l <= 1.15 * loss[0]:
            return lam, p / penalty[0], l / loss[0] - 1
    return None


def test_08_regularization_tradeoff(verdict):
    seeds = range(5)
    start = time.perf_counter()
    lv_loss, lv_pen = _tradeoff(Objective.LV, LAMBDA_GRID,
                                lambda l, d: conditional_loss_variance(l, d.labels), seeds)
    clv_loss, clv_pen = _tradeoff(Objective.CLV, CLV_LAMBDA_GRID,
                                  lambda l, d: conditional_coarse_loss_variance(l, d.sensitive_keys, d.labels), seeds)
    elapsed = time.perf_counter() - start
    lv = _halving_point(LAMBDA_GRID, lv_loss, lv_pen)
    clv = _halving_point(CLV_LAMBDA_GRID, clv_loss, clv_pen)

    def show(name, hit):
        if hit is None:
            return f"{name}: no grid point halves the penalty within +15% loss"
        return f"{name}: lambda={hit[0]:g} penalty x{hit[1]:.2f}, loss {hit[2]:+.1%}"

    verdict(8, "variance-penalty trade-off", lv is not None and clv is not None,
            f"{show('LV', lv)}; {show('CLV', clv)}; 5 seeds, {elapsed:.0f}s")


def test_09_small_k_generalizes_worse(verdict):
    gaps = []
    for seed in range(10):
        train, test = split_train_test(synth_two_group(5000, 0.2, 0.3, seed=seed), 0.3, seed)
        model, _ = fit(train, TrainConfig(seed=seed))
        rows = au.k_sweep(model, train, test, [0.1, 1.0])["rows"]
        gaps.append([r["gap"] for r in rows])
    g01, g1 = np.mean(gaps, axis=0)
    verdict(9, "train/test gap by k", g01 > g1, f"mean gap k=0.1: {g01:.4f}, k=1: {g1:.4f} over 10 seeds")


def test_10_size_envelope(verdict):
    rng = np.random.default_rng(110)
    worst = -math.inf
    for _ in range(100):
        n = int(rng.integers(1, 500))
        values = rng.random(n) ** float(rng.uniform(0.2, 5))
        profile = discrepancy_by_size(values)
        alpha = np.arange(1, n + 1) / n
        for k in (0.1, 0.5, 1.0):
            envelope = empirical_mwld(values, k).value / alpha**k
            worst = max(worst, float(np.max(profile - envelope)))
    verdict(10, "size-profile envelope", worst <= 1e-9, f"100 vectors, max(profile - envelope) {worst:.2e}")


def test_11_total_variance(verdict):
    rng = np.random.default_rng(111)
    coarse_excess = group_excess = -math.inf
    for _ in range(1000):
        n = int(rng.integers(1, 200))
        values = rng.random(n) ** float(rng.uniform(0.2, 5))
        keys = rng.integers(0, int(rng.integers(1, 12)), n)
        var = loss_variance(values)
        coarse_excess = max(coarse_excess, coarse_loss_variance(values, keys) - var)
        mask = rng.random(n) < rng.uniform(0.05, 1)
        if mask.any():
            group_excess = max(group_excess, group_unfairness(values, mask) - var)
    ok = coarse_excess <= 1e-12 and group_excess <= 1e-12
    verdict(11, "law of total variance", ok,
            f"1000 inputs, max(coarse - var) {coarse_excess:.2e}, max(group term - var) {group_excess:.2e}")


def _snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_12_cli_determinism(verdict, tmp_path):
    runs = {
        "synth": ["synth", "--n", "1500", "--seed", "12", "--out", str(tmp_path / "synth")],
    }
    data, schema = str(tmp_path / "synth" / "data.csv"), str(tmp_path / "synth" / "two_group.yaml")
    common = ["--data", data, "--schema", schema]
    runs["train"] = ["train", *common, "--objective", "clv", "--lambda", "0.4", "--eta", "0.001",
                     "--seed", "7", "--out", str(tmp_path / "train")]
    runs["audit"] = ["audit", *common, "--model", str(tmp_path / "train" / "model.weights.json"),
                     "--ks", "0.1,0.5,1", "--seed", "7", "--out", str(tmp_path / "audit")]
    runs["sweep"] = ["sweep", *common, "--lambdas", "0,0.4,2", "--epochs", "10", "--seed", "7",
                     "--out", str(tmp_path / "sweep")]
    identical, codes = [], []
    for name, argv in runs.items():
        out = Path(argv[argv.index("--out") + 1])
        codes.append(run(argv))
        first = _snapshot(out)
        codes.append(run(argv))
        identical.append(first == _snapshot(out) and bool(first))
    ok = all(identical) and not any(codes)
    verdict(12, "CLI determinism", ok,
            ", ".join(f"{n}: {'identical' if same else 'DIFFERS'}" for n, same in zip(runs, identical)))


def test_13_ingestion(verdict, tmp_path):
    parts, ok = [], True
    for name in BUNDLED_SCHEMAS:
        data = load_csv(FIXTURES / f"{name}.csv", name)
        write_csv(data, tmp_path / f"{name}.csv")
        again = load_csv(tmp_path / f"{name}.csv", name, data.feature_manifest)
        lossless = (np.array_equal(again.features, data.features)
                    and np.array_equal(again.labels, data.labels)
                    and again.sensitive_keys == data.sensitive_keys)
        ok &= data.T == EXPECTED_T[name] and lossless
        parts.append(f"{name} T={data.T} (expected {EXPECTED_T[name]}) round-trip {'ok' if lossless else 'LOSSY'}")
    verdict(13, "schema ingestion", ok, "; ".join(parts))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
