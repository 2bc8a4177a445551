"""Domain types and the elementary group-discrepancy arithmetic.

Every estimator in the package consumes a :class:`LossVector` (per-sample
losses, optional probability weights, declared loss bound) and evaluates
groups given as boolean :class:`GroupMask` objects.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

WEIGHT_SUM_TOL = 1e-12

IMPOSSIBLE_K_MESSAGE = (
    "k = 0 (uniform weighting over all groups) is not supported: no estimator "
    "of the maximum weighted loss discrepancy with uniform group weights can "
    "converge from finite samples. Use 0 < k <= 1."
)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LossVector:
    """Per-sample losses with optional probability weights.

    Parameters
    ----------
    values : array_like
        One finite loss per sample, each in ``[0, loss_bound_L]``.
    weights : array_like, optional
        Nonnegative probability mass per sample summing to one. ``None``
        means the uniform empirical distribution.
    loss_bound_L : float
        Declared upper bound on the losses.
    """

    values: np.ndarray
    weights: np.ndarray | None = None
    loss_bound_L: float = 1.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if values.size == 0:
            raise ValueError("a LossVector needs at least one sample")
        if not np.all(np.isfinite(values)):
            raise ValueError("losses must be finite")
        bound = float(self.loss_bound_L)
        if not (bound > 0 and math.isfinite(bound)):
            raise ValueError(f"loss_bound_L must be positive and finite, got {bound}")
        if values.min() < 0 or values.max() > bound:
            raise ValueError(
                f"losses must lie in [0, {bound}], got range "
                f"[{values.min()}, {values.max()}]"
            )
        weights = self.weights
        if weights is not None:
            weights = np.array(weights, dtype=float).ravel()
            if weights.shape != values.shape:
                raise ValueError("weights and values differ in length")
            if not np.all(np.isfinite(weights)) or weights.min() < 0:
                raise ValueError("weights must be finite and nonnegative")
            if abs(math.fsum(weights) - 1.0) > WEIGHT_SUM_TOL:
                raise ValueError("weights must sum to 1")
            weights = _readonly(weights)
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "loss_bound_L", bound)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def is_uniform(self) -> bool:
        return self.weights is None

    @property
    def probs(self) -> np.ndarray:
        """Probability mass per sample (``1/n`` each when unweighted)."""
        if self.weights is None:
            return np.full(self.n, 1.0 / self.n)
        return self.weights

    def mean(self) -> float:
        if self.weights is None:
            return math.fsum(self.values) / self.n
        return math.fsum(self.values * self.weights)

    def rescaled(self) -> "LossVector":
        """Losses divided by ``loss_bound_L`` so they lie in [0, 1]."""
        return LossVector(self.values / self.loss_bound_L, self.weights, 1.0)

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True, eq=False)
class GroupMask:
    """Binary group membership, one boolean per sample."""

    members: np.ndarray

    def __post_init__(self):
        members = np.array(self.members).ravel()
        if members.dtype != bool:
            if not np.isin(members, (0, 1)).all():
                raise ValueError("mask entries must be boolean or 0/1")
            members = members.astype(bool)
        object.__setattr__(self, "members", _readonly(members))

    @classmethod
    def from_indices(cls, n: int, indices) -> "GroupMask":
        members = np.zeros(n, dtype=bool)
        members[np.asarray(indices, dtype=int)] = True
        return cls(members)

    @property
    def size(self) -> int:
        return int(self.members.sum())

    def complement(self) -> "GroupMask":
        return GroupMask(~self.members)

    def __len__(self) -> int:
        return self.members.size


def as_mask(mask) -> GroupMask:
    return mask if isinstance(mask, GroupMask) else GroupMask(mask)


# -- weighting functions -----------------------------------------------------


@dataclass(frozen=True)
class Unit:
    """Every listed group gets weight one."""

    def __call__(self, fraction: float) -> float:
        return 1.0


@dataclass(frozen=True)
class SizePower:
    """Listed groups are weighted by their size raised to ``k``."""

    k: float = 1.0

    def __post_init__(self):
        if not 0 < self.k <= 1:
            raise ValueError(f"SizePower exponent must be in (0, 1], got {self.k}")

    def __call__(self, fraction: float) -> float:
        return fraction**self.k


@dataclass(frozen=True)
class PowerK:
    """``w(g) = E[g]^k`` over all groups."""

    k: float

    def __post_init__(self):
        if self.k == 0:
            raise ValueError(IMPOSSIBLE_K_MESSAGE)
        if not 0 < self.k <= 1:
            raise ValueError(f"k must be in (0, 1], got {self.k}")

    def weight(self, fraction: float) -> float:
        return fraction**self.k


@dataclass(frozen=True)
class ExplicitSet:
    """A finite list of groups with a rule assigning their weights.

    ``Unit`` reproduces classic group fairness over fixed sensitive groups;
    ``SizePower(1)`` reproduces size-weighted subgroup fairness.
    """

    masks: tuple
    weight_rule: Unit | SizePower = field(default_factory=Unit)

    def __post_init__(self):
        masks = tuple(as_mask(m) for m in self.masks)
        if not masks:
            raise ValueError("ExplicitSet needs at least one group")
        object.__setattr__(self, "masks", masks)

    def weight(self, fraction: float) -> float:
        return self.weight_rule(fraction)


@dataclass(frozen=True)
class LargeGroup:
    """``w(g) = 1[E[g] >= alpha]``: only groups of size at least alpha count."""

    alpha: float

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")

    def weight(self, fraction: float) -> float:
        return 1.0 if fraction >= self.alpha else 0.0


Weighting = PowerK | ExplicitSet | LargeGroup


# -- labels and sensitive keys -----------------------------------------------


def check_labels(labels, n: int | None = None) -> np.ndarray:
    """Validate a binary label vector and return it as an int array."""
    y = np.asarray(labels).ravel()
    if n is not None and y.size != n:
        raise ValueError(f"expected {n} labels, got {y.size}")
    if y.size == 0:
        raise ValueError("labels are empty")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return y.astype(np.int64)


def factorize_keys(keys: Sequence[Hashable], n: int | None = None):
    """Map opaque sensitive keys to integer codes in first-seen order.

    Returns ``(codes, uniques)``; ``len(uniques)`` is the number of
    distinct sensitive settings T.
    """
    if isinstance(keys, np.ndarray) and keys.ndim == 1 and keys.dtype != object:
        keys = keys.tolist()
    keys = [tuple(k) if isinstance(k, (list, np.ndarray)) else k for k in keys]
    if n is not None and len(keys) != n:
        raise ValueError(f"expected {n} sensitive keys, got {len(keys)}")
    index: dict = {}
    codes = np.empty(len(keys), dtype=np.int64)
    for i, key in enumerate(keys):
        codes[i] = index.setdefault(key, len(index))
    return codes, list(index)


# -- discrepancy arithmetic --------------------------------------------------


def _checked_members(losses: LossVector, mask) -> np.ndarray:
    members = as_mask(mask).members
    if members.size != losses.n:
        raise ValueError(
            f"mask length {members.size} does not match {losses.n} samples"
        )
    if not members.any():
        raise ValueError("empty group: the conditional loss is undefined")
    return members


def group_fraction(losses: LossVector, mask) -> float:
    """Probability mass of the group, ``E[g]``."""
    members = _checked_members(losses, mask)
    if losses.weights is None:
        return int(members.sum()) / losses.n
    return math.fsum(losses.weights[members])


def group_mean(losses: LossVector, mask) -> float:
    """Mean loss of the group members, ``E[loss | g = 1]``."""
    members = _checked_members(losses, mask)
    if losses.weights is None:
        return math.fsum(losses.values[members]) / int(members.sum())
    w = losses.weights[members]
    total = math.fsum(w)
    if total == 0:
        raise ValueError("group carries zero probability mass")
    return math.fsum(w * losses.values[members]) / total


def group_weight(weighting: Weighting, fraction: float) -> float:
    if isinstance(weighting, (PowerK, ExplicitSet, LargeGroup)):
        return weighting.weight(fraction)
    raise TypeError(f"unsupported weighting {weighting!r}")


def weighted_discrepancy(losses: LossVector, mask, weighting: Weighting) -> float:
    """``w(g) * |E[loss | g=1] - E[loss]|`` for a single group."""
    members = _checked_members(losses, mask)
    if members.all():
        return 0.0
    fraction = group_fraction(losses, members)
    gap = abs(group_mean(losses, members) - losses.mean())
    return group_weight(weighting, fraction) * gap
