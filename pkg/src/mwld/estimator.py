"""Plug-in estimation of the maximum weighted loss discrepancy (MWLD).

For ``w(g) = E[g]^k`` the empirical maximum over all ``2^n - 1`` groups is
attained by a group made of the ``t`` smallest or the ``t`` largest losses,
so sorting once and scanning prefix/suffix sums gives the exact value in
``O(n log n)``. :func:`brute_force_mwld` enumerates every group and serves as
the independent oracle (and as the exact population value for small
weighted supports).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ExplicitSet,
    GroupMask,
    LargeGroup,
    LossVector,
    PowerK,
    Weighting,
    _checked_members,
    group_fraction,
    group_mean,
    weighted_discrepancy,
)

BRUTE_FORCE_MAX_N = 20
_CHUNK = 1 << 15


class Side(str, enum.Enum):
    BELOW = "below"  # group of the smallest losses
    ABOVE = "above"  # group of the largest losses


@dataclass(frozen=True, eq=False)
class MwldResult:
    value: float
    argmax_side: Side
    threshold_index: int
    argmax_mask: GroupMask


@dataclass(frozen=True)
class ConvergenceBound:
    """One-sided deviation radii for ``|MWLD - empirical MWLD|``.

    ``lower_side_bound`` controls how far the estimate can fall below the
    population value, ``upper_side_bound`` how far it can rise above it.
    """

    n: int
    delta: float
    k: float
    lower_side_bound: float
    upper_side_bound: float

    @property
    def total(self) -> float:
        return self.lower_side_bound + self.upper_side_bound

    @property
    def loosest(self) -> float:
        return max(self.lower_side_bound, self.upper_side_bound)


def as_losses(losses) -> LossVector:
    """Wrap raw arrays; the declared bound defaults to ``max(1, max loss)``."""
    if isinstance(losses, LossVector):
        return losses
    values = np.asarray(losses, dtype=float)
    bound = max(1.0, float(values.max())) if values.size else 1.0
    return LossVector(values, loss_bound_L=bound)


def _require_uniform(losses: LossVector, what: str) -> None:
    if not losses.is_uniform:
        raise ValueError(
            f"{what} assumes uniform empirical weights; use brute_force_mwld "
            "for weighted supports"
        )


def _full_group(n: int) -> MwldResult:
    return MwldResult(0.0, Side.BELOW, n, GroupMask(np.ones(n, dtype=bool)))


def _sorted_centered_sums(losses: LossVector):
    """Sort order plus centered prefix and suffix sums for sizes 1..n-1."""
    values = losses.values
    order = np.argsort(values, kind="stable")
    # extended precision keeps the accumulated error near 1e-16 at n = 10^6
    centered = values[order].astype(np.longdouble) - np.longdouble(losses.mean())
    prefix = np.cumsum(centered)[:-1]
    suffix = np.cumsum(centered[::-1])[:-1]
    return order, prefix, suffix


def empirical_mwld(losses, k: float) -> MwldResult:
    """Exact empirical MWLD for ``w(g) = E[g]^k`` via a sorted scan.

    Parameters
    ----------
    losses : LossVector or array_like
        Uniformly weighted per-sample losses.
    k : float
        Weighting exponent in (0, 1]. ``k = 0`` is rejected because uniform
        weighting admits no consistent estimator.

    Returns
    -------
    MwldResult
        The maximum, which side of the sorted order attains it, the group
        size and the group mask in original sample order.
    """
    PowerK(k)  # validates k
    losses = as_losses(losses)
    _require_uniform(losses, "empirical_mwld")
    n = losses.n
    if n == 1:
        return _full_group(1)

    order, prefix, suffix = _sorted_centered_sums(losses)
    sizes = np.arange(1, n, dtype=float)
    scale = (sizes / n) ** k / sizes
    d_below = (scale * np.abs(prefix)).astype(float)
    d_above = (scale * np.abs(suffix)).astype(float)

    i_below = int(np.argmax(d_below))
    i_above = int(np.argmax(d_above))
    if d_above[i_above] > d_below[i_below]:
        value, side, t = float(d_above[i_above]), Side.ABOVE, i_above + 1
        chosen = order[n - t:]
    else:
        value, side, t = float(d_below[i_below]), Side.BELOW, i_below + 1
        chosen = order[:t]
    if value == 0.0:
        return _full_group(n)
    return MwldResult(value, side, t, GroupMask.from_indices(n, chosen))


def discrepancy_by_size(losses) -> np.ndarray:
    """Largest unweighted discrepancy among groups of each size ``m = 1..n``.

    Entry ``m - 1`` is ``max_{|g| = m} |E[loss | g] - E[loss]|``, attained by
    the ``m`` smallest or the ``m`` largest losses.
    """
    losses = as_losses(losses)
    _require_uniform(losses, "discrepancy_by_size")
    n = losses.n
    if n == 1:
        return np.zeros(1)
    _, prefix, suffix = _sorted_centered_sums(losses)
    sizes = np.arange(1, n, dtype=float)
    best = np.maximum(np.abs(prefix), np.abs(suffix)).astype(float) / sizes
    return np.append(best, 0.0)


def max_discrepancy_at_size(losses, m: int) -> float:
    losses = as_losses(losses)
    if not 1 <= m <= losses.n:
        raise ValueError(f"group size must be in [1, {losses.n}], got {m}")
    return float(discrepancy_by_size(losses)[m - 1])


def large_group_mwld(losses, alpha: float) -> float:
    """MWLD for ``w(g) = 1[E[g] >= alpha]`` (uniform empirical weights)."""
    LargeGroup(alpha)
    losses = as_losses(losses)
    profile = discrepancy_by_size(losses)
    sizes = np.arange(1, losses.n + 1)
    eligible = sizes / losses.n >= alpha
    return float(profile[eligible].max()) if eligible.any() else 0.0


def _group_weights(weighting: Weighting, fractions: np.ndarray) -> np.ndarray:
    if isinstance(weighting, PowerK):
        return fractions**weighting.k
    if isinstance(weighting, LargeGroup):
        return (fractions >= weighting.alpha).astype(float)
    raise TypeError(f"unsupported weighting {weighting!r}")


def brute_force_mwld(losses, weighting: Weighting, max_n: int = BRUTE_FORCE_MAX_N) -> MwldResult:
    """Exhaustive maximization over all nonempty groups.

    Works with probability weights, so on a small discrete support it gives
    the exact population MWLD. Groups carrying zero probability mass are
    skipped since their conditional loss is undefined.
    """
    losses = as_losses(losses)
    if isinstance(weighting, ExplicitSet):
        value, idx = mwld_over_explicit_groups(losses, weighting)
        mask = weighting.masks[idx]
        return _result_for_mask(losses, mask.members, value)
    n = losses.n
    if n > max_n:
        raise ValueError(f"brute force enumerates 2^n groups; n={n} exceeds {max_n}")
    if not isinstance(weighting, (PowerK, LargeGroup)):
        raise TypeError(f"unsupported weighting {weighting!r}")

    probs = losses.probs
    weighted_values = probs * losses.values
    mu = losses.mean()
    shifts = np.arange(n, dtype=np.int64)
    full = (1 << n) - 1
    best_value, best_code = -1.0, full
    for start in range(1, full + 1, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, full + 1), dtype=np.int64)
        bits = ((codes[:, None] >> shifts) & 1).astype(float)
        fractions = bits @ probs
        sums = bits @ weighted_values
        with np.errstate(divide="ignore", invalid="ignore"):
            gaps = np.abs(sums / fractions - mu)
        values = _group_weights(weighting, fractions) * gaps
        values[fractions <= 0] = -np.inf
        values[codes == full] = 0.0
        i = int(np.argmax(values))
        if values[i] > best_value:
            best_value, best_code = float(values[i]), int(codes[i])
    members = ((best_code >> shifts) & 1).astype(bool)
    if best_value <= 0.0:
        return _full_group(n)
    return _result_for_mask(losses, members, best_value)


def _result_for_mask(losses: LossVector, members: np.ndarray, value: float) -> MwldResult:
    side = Side.BELOW if group_mean(losses, members) <= losses.mean() else Side.ABOVE
    return MwldResult(value, side, int(members.sum()), GroupMask(members))


def mwld_over_explicit_groups(losses, weighting: ExplicitSet) -> tuple[float, int]:
    """Maximum weighted discrepancy over a finite list of groups.

    Ties go to the lowest list index.
    """
    losses = as_losses(losses)
    if not isinstance(weighting, ExplicitSet):
        raise TypeError("mwld_over_explicit_groups needs an ExplicitSet weighting")
    best, best_idx = -1.0, 0
    for idx, mask in enumerate(weighting.masks):
        value = weighted_discrepancy(losses, mask, weighting)
        if value > best:
            best, best_idx = value, idx
    return best, best_idx


def mwld(losses, weighting: Weighting) -> float:
    """MWLD value for any supported weighting, choosing the exact method."""
    losses = as_losses(losses)
    if isinstance(weighting, ExplicitSet):
        return mwld_over_explicit_groups(losses, weighting)[0]
    if not losses.is_uniform:
        return brute_force_mwld(losses, weighting).value
    if isinstance(weighting, PowerK):
        return empirical_mwld(losses, weighting.k).value
    if isinstance(weighting, LargeGroup):
        return large_group_mwld(losses, weighting.alpha)
    raise TypeError(f"unsupported weighting {weighting!r}")


def group_loss_bound(mwld_value: float, group_weight: float) -> float:
    """Largest loss discrepancy a group of weight ``group_weight`` can have."""
    if not group_weight > 0:
        raise ValueError("group weight must be positive")
    return mwld_value / group_weight


def shifted_population_loss(losses, mask, w_g: float) -> float:
    """Expected loss under the mixture that puts mass ``w_g`` on the group.

    The mixture is ``w_g * P(. | g=1) + (1 - w_g) * P(. | g=0)``; it only
    upweights the group, so ``w_g`` must be at least the group's own mass.
    """
    losses = as_losses(losses)
    members = _checked_members(losses, mask)
    if members.all():
        raise ValueError("the complement of the group is empty")
    if not 0 <= w_g <= 1:
        raise ValueError(f"w_g must be in [0, 1], got {w_g}")
    fraction = group_fraction(losses, members)
    if w_g < fraction - 1e-12:
        raise ValueError(
            f"w_g={w_g} is below the group's mass {fraction}; the mixture "
            "must tilt toward the group"
        )
    inside = group_mean(losses, members)
    outside = group_mean(losses, ~members)
    return w_g * inside + (1.0 - w_g) * outside


def convergence_validity_threshold(delta: float) -> float:
    return 108.0 * math.log(18.0 / delta)


def convergence_error_bound(n: int, delta: float, k: float) -> ConvergenceBound:
    """High-probability radii for the plug-in estimator of MWLD(w^k).

    With probability at least ``1 - delta``::

        MWLD - estimate <= (108 ln(18/delta) / n) ** (k / (2k + 1))
        estimate - MWLD <= (108 ln(18/delta) / n) ** (k / (2k + 2))

    valid once ``n >= 108 ln(18/delta)``.
    """
    PowerK(k)
    if not 0 < delta < 0.5:
        raise ValueError(f"delta must be in (0, 0.5), got {delta}")
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    base = convergence_validity_threshold(delta)
    if n < base:
        raise ValueError(f"n={n} is below the validity threshold 108 ln(18/delta) = {base:.1f}")
    ratio = base / n
    return ConvergenceBound(
        n=int(n),
        delta=delta,
        k=k,
        lower_side_bound=ratio ** (k / (2 * k + 1)),
        upper_side_bound=ratio ** (k / (2 * k + 2)),
    )
