"""Loss variance, coarse loss variance and their bounds.

All variances here use the population form ``E[(x - E[x])^2]`` under the
sample probabilities, except :func:`unbiased_variance`, which exists only
for the empirical-variance deviation bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import LossVector, PowerK, check_labels, factorize_keys, group_fraction, group_mean
from .estimator import as_losses, brute_force_mwld, empirical_mwld

ORDER_TOL = 1e-9


def _cell_means(values: np.ndarray, probs: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Per-sample mean of ``values`` over the sample's cell."""
    mass = np.bincount(codes, weights=probs)
    sums = np.bincount(codes, weights=probs * values)
    with np.errstate(divide="ignore", invalid="ignore"):
        means = np.where(mass > 0, sums / mass, 0.0)
    return means[codes]


def penalty_residuals(values, labels=None, key_codes=None, probs=None) -> np.ndarray:
    """Residuals ``r`` whose probability-weighted mean square is a penalty.

    * no labels, no keys: ``loss - E[loss]`` (loss variance)
    * labels only: ``loss - E[loss | y]`` (label-conditioned loss variance)
    * keys only: ``E[loss | A] - E[loss]`` (coarse loss variance)
    * both: ``E[loss | A, y] - E[loss | y]`` (label-conditioned coarse)

    The penalty's gradient is ``2 * sum_i p_i r_i grad(loss_i)`` because the
    centering terms average to zero within every conditioning cell.
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    probs = np.full(n, 1.0 / n) if probs is None else np.asarray(probs, dtype=float)
    outer = np.zeros(n, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
    baseline = _cell_means(values, probs, outer)
    if key_codes is None:
        return values - baseline
    inner = np.asarray(key_codes, dtype=np.int64) * 2 + outer
    return _cell_means(values, probs, inner) - baseline


def _weighted_square_mean(residuals: np.ndarray, probs: np.ndarray) -> float:
    return math.fsum(probs * residuals * residuals)


def _check_classes(y: np.ndarray, classes) -> None:
    if classes is None:
        return
    missing = [c for c in classes if not np.any(y == c)]
    if missing:
        raise ValueError(f"label classes {missing} are absent")


def loss_variance(losses) -> float:
    """``E[(loss - E[loss])^2]``."""
    losses = as_losses(losses)
    residuals = losses.values - losses.mean()
    return _weighted_square_mean(residuals, losses.probs)


def unbiased_variance(values) -> float:
    """Sample variance with the ``n - 1`` denominator."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError("the unbiased variance needs at least two samples")
    mu = math.fsum(values) / values.size
    return math.fsum((values - mu) ** 2) / (values.size - 1)


def conditional_loss_variance(losses, labels, classes=None) -> float:
    """``sum_b P(y=b) Var[loss | y=b]`` over the observed label classes.

    Pass ``classes=(0, 1)`` to require both classes to be present.
    """
    losses = as_losses(losses)
    y = check_labels(labels, losses.n)
    _check_classes(y, classes)
    r = penalty_residuals(losses.values, labels=y, probs=losses.probs)
    return _weighted_square_mean(r, losses.probs)


def coarse_loss_variance(losses, keys) -> float:
    """``Var[E[loss | A]]``: variance of the per-setting mean losses."""
    losses = as_losses(losses)
    codes, _ = factorize_keys(keys, losses.n)
    r = penalty_residuals(losses.values, key_codes=codes, probs=losses.probs)
    return _weighted_square_mean(r, losses.probs)


def conditional_coarse_loss_variance(losses, keys, labels, classes=None) -> float:
    """``E[Var[E[loss | A, y] | y]]``."""
    losses = as_losses(losses)
    y = check_labels(labels, losses.n)
    _check_classes(y, classes)
    codes, _ = factorize_keys(keys, losses.n)
    r = penalty_residuals(losses.values, labels=y, key_codes=codes, probs=losses.probs)
    return _weighted_square_mean(r, losses.probs)


def group_unfairness(losses, mask) -> float:
    """``E[g] (E[loss | g=1] - E[loss])^2`` for one group."""
    losses = as_losses(losses)
    gap = group_mean(losses, mask) - losses.mean()
    return group_fraction(losses, mask) * gap * gap


# -- the variance / MWLD(w^{1/2}) sandwich -----------------------------------


def sandwich_envelope(x: float) -> float:
    """``x * sqrt(2 - 4 ln x)``, extended by continuity to 0 at x = 0."""
    if x < 0 or x > 1:
        raise ValueError(f"the envelope is defined on [0, 1], got {x}")
    if x == 0:
        return 0.0
    return x * math.sqrt(2.0 - 4.0 * math.log(x))


@dataclass(frozen=True)
class VarianceSandwich:
    mwld_half: float
    sqrt_variance: float
    upper_envelope: float

    def holds(self, tol: float = ORDER_TOL) -> bool:
        return (
            self.mwld_half <= self.sqrt_variance + tol
            and self.sqrt_variance <= self.upper_envelope + tol
        )


def sandwich(mwld_half: float, sqrt_variance: float) -> VarianceSandwich:
    """Pair MWLD(w^{1/2}) and the loss standard deviation with the envelope.

    For losses in [0, 1]: ``mwld_half <= sqrt_variance <= upper_envelope``.
    """
    if mwld_half > 1:
        raise ValueError("mwld_half exceeds 1; rescale the losses to [0, 1] first")
    if mwld_half < 0 or sqrt_variance < 0:
        raise ValueError("inputs must be nonnegative")
    return VarianceSandwich(mwld_half, sqrt_variance, sandwich_envelope(mwld_half))


def variance_sandwich(losses) -> tuple[VarianceSandwich, bool]:
    """Evaluate the sandwich on data, rescaling by ``loss_bound_L`` if needed.

    Returns the sandwich and whether the losses were rescaled.
    """
    losses = as_losses(losses)
    rescaled = losses.loss_bound_L != 1.0
    unit = losses.rescaled() if rescaled else losses
    if unit.is_uniform:
        half = empirical_mwld(unit, 0.5).value
    else:
        half = brute_force_mwld(unit, PowerK(0.5)).value
    return sandwich(half, math.sqrt(loss_variance(unit))), rescaled


def coarse_mwld(losses, keys, k: float = 0.5) -> float:
    """MWLD over all groups defined by the sensitive attributes.

    Such groups are unions of sensitive settings. For an empirical sample
    the settings carry integer counts, so for every group size ``m`` the
    most extreme centered loss sum is an exact-capacity knapsack over the
    T settings, solved in O(T n). Weighted inputs fall back to brute force
    over the settings.
    """
    PowerK(k)
    losses = as_losses(losses)
    codes, _ = factorize_keys(keys, losses.n)
    if not losses.is_uniform:
        probs = losses.probs
        mass = np.bincount(codes, weights=probs)
        means = np.bincount(codes, weights=probs * losses.values) / mass
        means = np.clip(means, 0.0, losses.loss_bound_L)
        cells = LossVector(means, mass / math.fsum(mass), losses.loss_bound_L)
        return brute_force_mwld(cells, PowerK(k)).value
    n = losses.n
    counts = np.bincount(codes)
    centered = np.bincount(codes, weights=losses.values - losses.mean()) / n
    hi = np.full(n + 1, -np.inf)
    lo = np.full(n + 1, np.inf)
    hi[0] = lo[0] = 0.0
    for c, v in zip(counts, centered):
        hi[c:] = np.maximum(hi[c:], hi[:-c] + v)
        lo[c:] = np.minimum(lo[c:], lo[:-c] + v)
    sizes = np.arange(1, n)
    reach = np.isfinite(hi[1:n])
    if not reach.any():
        return 0.0
    alpha = sizes[reach] / n
    extreme = np.maximum(np.abs(hi[1:n][reach]), np.abs(lo[1:n][reach]))
    return float(np.max(alpha ** (k - 1.0) * extreme))


# -- bound formulas ------------------------------------------------------------


def variance_upper_bound_general_L(gamma: float, L: float) -> float:
    """``2 gamma^2 (1 + 2 ln(L / gamma))`` for losses in [0, L]."""
    if not 0 < gamma <= L:
        raise ValueError(f"need 0 < gamma <= L, got gamma={gamma}, L={L}")
    return 2.0 * gamma * gamma * (1.0 + 2.0 * (math.log(L) - math.log(gamma)))


def maurer_deviation(n: int, delta: float) -> float:
    """Radius ``sqrt(2 ln(2/delta) / (n-1))`` bounding the gap between the
    true and the (unbiased) empirical standard deviation of [0, 1] losses
    with probability at least ``1 - delta``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    return math.sqrt(2.0 * math.log(2.0 / delta) / (n - 1))


def coarse_deviation(n: int, delta: float, T: int) -> float:
    """Deviation radius of the empirical coarse loss variance.

    Holds with probability at least ``1 - (T + 3) delta`` for [0, 1] losses
    and T sensitive settings.
    """
    if n <= 2:
        raise ValueError("n must exceed 2")
    if T < 1:
        raise ValueError("T must be at least 1")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    log_term = math.log(2.0 / delta)
    return math.sqrt(2.0 * log_term / (n - 1)) + math.sqrt((2 * T + 8) * log_term / n)
