"""Experiment harness: MWLD sweeps, size profiles, shift checks, variance and
bound blocks, regularization trade-offs, and JSON reports."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import ExplicitSet, GroupMask, LossVector, SizePower, Unit
from .data import TabularDataset, atom_population, synth_discrete_loss_population
from .estimator import (
    as_losses,
    brute_force_mwld,
    convergence_error_bound,
    discrepancy_by_size,
    empirical_mwld,
    mwld_over_explicit_groups,
    shifted_population_loss,
)
from .core import PowerK, group_fraction
from .model import LOG_LOSS_BOUND, LinearModel, log_loss
from .trainer import Batch, Objective, TrainConfig, evaluate, fit
from .variance import (
    coarse_deviation,
    coarse_loss_variance,
    coarse_mwld,
    conditional_coarse_loss_variance,
    conditional_loss_variance,
    loss_variance,
    maurer_deviation,
    sandwich,
    unbiased_variance,
    variance_sandwich,
    variance_upper_bound_general_L,
)

SCHEMA_VERSION = 1
SECTIONS = (
    "mwld_by_k",
    "size_profile",
    "variance_block",
    "bounds_block",
    "sweep_curves",
    "shift_checks",
)


def model_losses(model: LinearModel, data: TabularDataset) -> LossVector:
    """Per-sample clipped log losses of ``model`` on ``data``."""
    return LossVector(log_loss(model, data.features, data.labels), loss_bound_L=LOG_LOSS_BOUND)


def config_digest(config) -> str:
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


# -- sections ----------------------------------------------------------------


def k_sweep_losses(train_losses, test_losses, ks) -> dict:
    train_losses, test_losses = as_losses(train_losses), as_losses(test_losses)
    rows = []
    for k in ks:
        tr = empirical_mwld(train_losses, k).value
        te = empirical_mwld(test_losses, k).value
        rows.append({"k": float(k), "train": tr, "test": te, "gap": abs(tr - te)})
    return {"n_train": train_losses.n, "n_test": test_losses.n, "rows": rows}


def k_sweep(model: LinearModel, train: TabularDataset, test: TabularDataset, ks) -> dict:
    """Train and test MWLD(w^k) for each k and their absolute gap."""
    return k_sweep_losses(model_losses(model, train), model_losses(model, test), ks)


def size_profile_losses(losses, sizes=None, ks=(0.1, 0.5, 1.0)) -> dict:
    losses = as_losses(losses)
    n = losses.n
    profile = discrepancy_by_size(losses)
    if sizes is None:
        sizes = range(1, n + 1)
    sizes = [int(m) for m in sizes]
    if any(not 1 <= m <= n for m in sizes):
        raise ValueError(f"sizes must lie in [1, {n}]")
    totals = {float(k): empirical_mwld(losses, k).value for k in ks}
    rows = []
    for m in sizes:
        alpha = m / n
        row = {"m": m, "alpha": alpha, "max_discrepancy": float(profile[m - 1])}
        row["envelope"] = {str(k): v / alpha**k for k, v in totals.items()}
        rows.append(row)
    return {"n": n, "mwld": {str(k): v for k, v in totals.items()}, "rows": rows}


def size_profile(model: LinearModel, dataset: TabularDataset, sizes=None, ks=(0.1, 0.5, 1.0)) -> dict:
    """Largest discrepancy per group size against the MWLD(w^k)/alpha^k envelopes."""
    return size_profile_losses(model_losses(model, dataset), sizes, ks)


def shift_margin(losses, mask, k: float, mwld_value: float | None = None) -> float:
    """Certified bound minus the loss under the mixture tilted by ``E[g]^k``."""
    losses = as_losses(losses)
    if mwld_value is None:
        mwld_value = empirical_mwld(losses, k).value
    w_g = group_fraction(losses, mask) ** k
    return losses.mean() + mwld_value - shifted_population_loss(losses, mask, w_g)


def shift_check_losses(losses, k: float, trials: int, seed: int) -> dict:
    if trials < 1:
        raise ValueError("trials must be at least 1")
    losses = as_losses(losses)
    bound = empirical_mwld(losses, k).value
    rng = np.random.default_rng(seed)
    margins, skipped = [], 0
    for _ in range(trials):
        members = rng.random(losses.n) < 0.5
        if not members.any() or members.all():
            skipped += 1
            continue
        margins.append(shift_margin(losses, members, k, bound))
    return {
        "n": losses.n,
        "k": float(k),
        "trials": trials,
        "evaluated": len(margins),
        "skipped_degenerate": skipped,
        "mwld": bound,
        "min_margin": min(margins) if margins else None,
    }


def shift_check(model: LinearModel, dataset: TabularDataset, k: float, trials: int, seed: int) -> dict:
    """Random fair-coin groups; margin of the demographic-shift certificate."""
    return shift_check_losses(model_losses(model, dataset), k, trials, seed)


def variance_block(losses, labels=None, keys=None) -> dict:
    """Variances, their label-conditioned forms and the sandwich checks.

    The [0, 1] sandwich is evaluated on losses divided by ``loss_bound_L``;
    the general-L bound is checked in raw units.
    """
    losses = as_losses(losses)
    var = loss_variance(losses)
    sw, rescaled = variance_sandwich(losses)
    gamma = sw.mwld_half * losses.loss_bound_L
    block = {
        "n": losses.n,
        "loss_bound_L": losses.loss_bound_L,
        "rescaled": rescaled,
        "loss_variance": var,
        "sandwich": {
            "mwld_half": sw.mwld_half,
            "sqrt_variance": sw.sqrt_variance,
            "upper_envelope": sw.upper_envelope,
            "holds": sw.holds(),
        },
        "general_L": {
            "gamma": gamma,
            "bound": variance_upper_bound_general_L(gamma, losses.loss_bound_L) if gamma > 0 else 0.0,
        },
    }
    block["general_L"]["holds"] = var <= block["general_L"]["bound"] + 1e-12
    if labels is not None:
        block["conditional_loss_variance"] = conditional_loss_variance(losses, labels)
    if keys is not None:
        clv = coarse_loss_variance(losses, keys)
        unit = losses.rescaled() if rescaled else losses
        coarse_half = coarse_mwld(unit, keys, 0.5)
        csw = sandwich(coarse_half, math.sqrt(coarse_loss_variance(unit, keys)))
        block["coarse_loss_variance"] = clv
        block["coarse_sandwich"] = {
            "mwld_half": csw.mwld_half,
            "sqrt_variance": csw.sqrt_variance,
            "upper_envelope": csw.upper_envelope,
            "holds": csw.holds(),
        }
        if labels is not None:
            block["conditional_coarse_loss_variance"] = conditional_coarse_loss_variance(losses, keys, labels)
    return block


def bounds_block(n: int, delta: float, ks=(0.5, 1.0), T: int | None = None) -> dict:
    block: dict = {"n": n, "delta": delta, "convergence": []}
    for k in ks:
        try:
            b = convergence_error_bound(n, delta, k)
        except ValueError as exc:
            block["convergence"].append({"k": float(k), "error": str(exc)})
            continue
        block["convergence"].append(
            {"k": float(k), "lower_side": b.lower_side_bound, "upper_side": b.upper_side_bound}
        )
    block["maurer"] = maurer_deviation(n, delta)
    if T is not None:
        block["T"] = T
        block["coarse_deviation"] = coarse_deviation(n, delta, T)
    return block


# -- Monte Carlo studies -------------------------------------------------------


def _spawn(seed: int, count: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def _run(fn, generators, n_jobs: int):
    if n_jobs == 1:
        return [fn(g) for g in generators]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, generators))


def convergence_study(atoms, ns, ks=(0.5, 1.0), delta: float = 0.2, trials: int = 200,
                      seed: int = 0, n_jobs: int = 1) -> list[dict]:
    """Deviation of the plug-in MWLD from the exact population value.

    Every (n, trial) pair owns a generator spawned from ``seed``, so results
    do not depend on ``n_jobs``.
    """
    population = atom_population(atoms)
    truth = {float(k): brute_force_mwld(population, PowerK(k)).value for k in ks}
    rows = []
    for i, n in enumerate(ns):
        gens = _spawn(seed + i, trials)

        def one(rng, n=n):
            sample = synth_discrete_loss_population(atoms, n, rng)
            return [abs(empirical_mwld(sample, k).value - truth[float(k)]) for k in ks]

        devs = np.array(_run(one, gens, n_jobs))
        for j, k in enumerate(ks):
            bound = convergence_error_bound(n, delta, k)
            d = devs[:, j]
            rows.append({
                "n": int(n),
                "k": float(k),
                "population_mwld": truth[float(k)],
                "radius": bound.total,
                "violation_rate": float(np.mean(d > bound.total)),
                "median_deviation": float(np.median(d)),
            })
    return rows


def deviation_study(cell_probs, cell_rates, n: int, delta: float, trials: int,
                    seed: int = 0, n_jobs: int = 1) -> dict:
    """Violation rates of the standard-deviation and coarse-variance radii
    under Bernoulli losses with per-cell rates."""
    cell_probs = np.asarray(cell_probs, dtype=float)
    cell_rates = np.asarray(cell_rates, dtype=float)
    T = cell_probs.size
    p_bar = float(cell_probs @ cell_rates)
    true_sd = math.sqrt(p_bar * (1 - p_bar))
    true_coarse = float(cell_probs @ (cell_rates - p_bar) ** 2)
    r_sd = maurer_deviation(n, delta)
    r_coarse = coarse_deviation(n, delta, T)

    def one(rng):
        cells = rng.choice(T, size=n, p=cell_probs)
        losses = (rng.random(n) < cell_rates[cells]).astype(float)
        sd_gap = abs(true_sd - math.sqrt(unbiased_variance(losses)))
        coarse_gap = abs(true_coarse - coarse_loss_variance(LossVector(losses), cells))
        return sd_gap > r_sd, coarse_gap > r_coarse

    flags = np.array(_run(one, _spawn(seed, trials), n_jobs))
    return {
        "n": n,
        "T": T,
        "delta": delta,
        "trials": trials,
        "maurer_radius": r_sd,
        "maurer_violation_rate": float(flags[:, 0].mean()),
        "coarse_radius": r_coarse,
        "coarse_violation_rate": float(flags[:, 1].mean()),
    }


# -- regularization trade-off -------------------------------------------------


def key_groups(keys) -> ExplicitSet:
    """One explicit group per sensitive setting (unit weights)."""
    keys = list(keys)
    uniques = sorted(set(keys), key=repr)
    return ExplicitSet(tuple(GroupMask(np.array([k == u for k in keys])) for u in uniques), Unit())


def _tradeoff_row(model: LinearModel, test: TabularDataset, lam: float) -> dict:
    losses = model_losses(model, test)
    y = test.labels
    half_by_label = {}
    for b in (0, 1):
        sel = y == b
        if sel.any():
            half_by_label[str(b)] = empirical_mwld(LossVector(losses.values[sel], loss_bound_L=LOG_LOSS_BOUND), 0.5).value
    explicit, _ = mwld_over_explicit_groups(losses, key_groups(test.sensitive_keys))
    return {
        "lambda": lam,
        "test_loss": losses.mean(),
        "conditional_lv": conditional_loss_variance(losses, y),
        "conditional_clv": conditional_coarse_loss_variance(losses, test.sensitive_keys, y),
        "mwld_half_by_label": half_by_label,
        "explicit_group_mwld": explicit,
        "coarse_mwld_half": coarse_mwld(losses, test.sensitive_keys, 0.5),
    }


def tradeoff_report(train: TabularDataset, test: TabularDataset, base_config: TrainConfig,
                    lambdas, clv_lambdas=None) -> dict:
    """LV and CLV lambda sweeps evaluated on ``test``."""
    clv_lambdas = lambdas if clv_lambdas is None else clv_lambdas
    out = {"n_train": train.n, "n_test": test.n, "config": base_config.to_dict()}
    for objective, grid in ((Objective.LV, lambdas), (Objective.CLV, clv_lambdas)):
        rows = []
        for lam in sorted(float(v) for v in grid):
            model, _ = fit(train, replace(base_config, objective=objective, lam=lam))
            rows.append(_tradeoff_row(model, test, lam))
        out[objective.value] = rows
    return out


# -- reports -----------------------------------------------------------------


@dataclass
class AuditReport:
    metadata: dict = field(default_factory=dict)
    sections: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "metadata": self.metadata,
            "sections": {name: self.sections.get(name) for name in SECTIONS}
            | {k: v for k, v in self.sections.items() if k not in SECTIONS},
        }


def _check_finite(obj, path="report"):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise ValueError(f"non-finite number at {path}")
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _check_finite(v, f"{path}[{i}]")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_report(report: AuditReport) -> str:
    doc = _plain(report.to_dict())
    _check_finite(doc)
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False, ensure_ascii=False) + "\n"


def write_report(report: AuditReport, path) -> None:
    Path(path).write_text(dumps_report(report), encoding="utf-8", newline="\n")


def read_report(path) -> AuditReport:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed report {path}: {exc}") from exc
    if not isinstance(doc, dict) or "sections" not in doc or "metadata" not in doc:
        raise ValueError(f"malformed report {path}: missing metadata or sections")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema_version {version!r}")
    sections = doc["sections"]
    unknown = sorted(set(sections) - set(SECTIONS))
    if unknown:
        warnings.warn(f"report has unknown sections {unknown}; kept as-is")
    return AuditReport(doc["metadata"], {k: v for k, v in sections.items() if v is not None})


def write_curve(rows: list[dict], columns: list[str], path) -> None:
    """Comma-separated table with 17-significant-digit numbers."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(_cell(row[c]) for c in columns)


def _cell(value) -> str:
    if isinstance(value, bool) or value is None:
        return "" if value is None else str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)
