"""Minibatch SGD for logistic regression under (coarse) loss-variance penalties.

Objectives, evaluated on a batch with log losses ``l_i``::

    LR  : mean(l) + eta * ||theta||^2
    LV  : LR + lambda * E[Var[l | y]]
    CLV : LR + lambda * E[Var[E[l | A, y] | y]]

Penalties are computed within each minibatch. Batches are stratified by
label so both classes appear in every batch whenever possible.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core import LossVector
from .data import TabularDataset
from .estimator import empirical_mwld
from .model import LOG_LOSS_BOUND, LinearModel, augment, log_losses_from_scores
from .variance import penalty_residuals

ETA_GRID = (0.1, 0.01, 0.001, 0.0001)
LAMBDA_GRID = (0.0, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0, 2.0, 3.0)
CLV_LAMBDA_GRID = tuple(2 * u for u in LAMBDA_GRID)


class Objective(str, enum.Enum):
    LR = "lr"
    LV = "lv"
    CLV = "clv"


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    objective: Objective = Objective.LR
    eta: float = 0.001
    lam: float = 0.0
    learning_rate: float = 0.1
    batch_size: int = 128
    epochs: int = 30
    seed: int = 0
    stratify_by_label: bool = True

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective))
        for name in ("eta", "lam", "learning_rate"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if self.objective is not Objective.LR and self.batch_size < 2:
            raise ValueError("variance objectives need batch_size >= 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objective"] = self.objective.value
        return d


@dataclass(frozen=True)
class EpochRecord:
    train_loss: float
    train_penalty: float
    test_loss: float | None = None
    test_penalty: float | None = None


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class Batch:
    """Augmented features, labels and sensitive codes for a set of rows."""

    xa: np.ndarray
    y: np.ndarray
    codes: np.ndarray | None = None

    @classmethod
    def from_dataset(cls, data: TabularDataset) -> "Batch":
        return cls(augment(data.features), data.labels.astype(np.int64), data.key_codes())

    def take(self, idx) -> "Batch":
        return Batch(self.xa[idx], self.y[idx], None if self.codes is None else self.codes[idx])


def _residuals(losses: np.ndarray, batch: Batch, objective: Objective) -> np.ndarray | None:
    if objective is Objective.LR:
        return None
    if objective is Objective.LV:
        return penalty_residuals(losses, labels=batch.y)
    if batch.codes is None:
        raise ValueError("the CLV objective needs sensitive keys")
    return penalty_residuals(losses, labels=batch.y, key_codes=batch.codes)


def _penalty_kind(config: TrainConfig) -> Objective:
    # LR runs still report the label-conditioned loss variance
    return Objective.LV if config.objective is Objective.LR else config.objective


def _check_batch(batch: Batch) -> None:
    if batch.y.size == 0:
        raise ValueError("empty batch")


def objective_value(model: LinearModel, batch: Batch, config: TrainConfig) -> float:
    _check_batch(batch)
    theta = model.weights
    losses, _ = log_losses_from_scores(batch.xa @ theta, batch.y)
    value = losses.mean() + config.eta * float(theta @ theta)
    r = _residuals(losses, batch, config.objective)
    if r is not None:
        value += config.lam * float(np.mean(r * r))
    return float(value)


def objective_gradient(model: LinearModel, batch: Batch, config: TrainConfig) -> np.ndarray:
    """Analytic gradient of :func:`objective_value`.

    Both penalties have the form ``mean(r_i^2)`` with residuals that sum to
    zero inside each conditioning cell, hence gradient
    ``(2/n) sum_i r_i grad(l_i)``.
    """
    _check_batch(batch)
    theta = model.weights
    losses, dscore = log_losses_from_scores(batch.xa @ theta, batch.y)
    n = batch.y.size
    coef = dscore / n
    r = _residuals(losses, batch, config.objective)
    if r is not None:
        coef = coef + config.lam * (2.0 / n) * r * dscore
    return batch.xa.T @ coef + 2.0 * config.eta * theta


def _epoch_order(y: np.ndarray, rng: np.random.Generator, stratify: bool) -> np.ndarray:
    n = y.size
    perm = rng.permutation(n)
    if not stratify:
        return perm
    # spread each class evenly through the epoch
    position = np.empty(n)
    for cls in (0, 1):
        members = perm[y[perm] == cls]
        position[members] = (np.arange(members.size) + 0.5) / max(members.size, 1)
    return perm[np.argsort(position[perm], kind="stable")]


def evaluate(model: LinearModel, data: TabularDataset | Batch, objective: Objective = Objective.LV):
    """Mean log loss and the penalty of ``objective`` on a full dataset."""
    batch = data if isinstance(data, Batch) else Batch.from_dataset(data)
    losses, _ = log_losses_from_scores(batch.xa @ model.weights, batch.y)
    r = _residuals(losses, batch, objective)
    penalty = 0.0 if r is None else float(np.mean(r * r))
    return float(losses.mean()), penalty


def fit(dataset: TabularDataset, config: TrainConfig, test: TabularDataset | None = None,
        initial: LinearModel | None = None):
    """Run SGD from zero weights; deterministic for a fixed ``config.seed``.

    Returns the final model and a per-epoch :class:`TrainHistory`.
    """
    if dataset.n == 0:
        raise ValueError("empty training set")
    train = Batch.from_dataset(dataset)
    test_batch = Batch.from_dataset(test) if test is not None else None
    rng = np.random.default_rng(config.seed)
    theta = (np.zeros(dataset.features.shape[1] + 1) if initial is None
             else np.array(initial.weights, dtype=float))
    kind = _penalty_kind(config)
    history = TrainHistory()
    for epoch in range(config.epochs):
        order = _epoch_order(train.y, rng, config.stratify_by_label)
        for start in range(0, order.size, config.batch_size):
            batch = train.take(order[start:start + config.batch_size])
            with np.errstate(over="ignore", invalid="ignore"):
                theta = theta - config.learning_rate * objective_gradient(LinearModel(theta), batch, config)
            if not np.all(np.isfinite(theta)):
                raise TrainingDivergedError(
                    f"weights became non-finite in epoch {epoch}; lower the learning rate"
                )
        model = LinearModel(theta)
        train_loss, train_pen = evaluate(model, train, kind)
        if not math.isfinite(train_loss):
            raise TrainingDivergedError(f"training loss became non-finite in epoch {epoch}")
        record = EpochRecord(train_loss, train_pen)
        if test_batch is not None:
            record = replace(record, **dict(zip(("test_loss", "test_penalty"), evaluate(model, test_batch, kind))))
        history.records.append(record)
    return LinearModel(theta), history


@dataclass(frozen=True)
class SweepRow:
    lam: float
    test_loss: float
    test_penalty: float
    test_mwld_half: float


def lambda_sweep(train: TabularDataset, test: TabularDataset, base_config: TrainConfig, lambdas):
    """One independent fit per lambda (same seed), evaluated on ``test``.

    Returns ``(rows, models)`` ordered by lambda.
    """
    lambdas = sorted(float(v) for v in lambdas)
    if not lambdas or lambdas[0] < 0:
        raise ValueError("lambdas must be a nonempty set of nonnegative values")
    kind = _penalty_kind(base_config)
    test_batch = Batch.from_dataset(test)
    rows, models = [], []
    for lam in lambdas:
        model, _ = fit(train, replace(base_config, lam=lam))
        loss, penalty = evaluate(model, test_batch, kind)
        losses, _ = log_losses_from_scores(test_batch.xa @ model.weights, test_batch.y)
        half = empirical_mwld(LossVector(losses, loss_bound_L=LOG_LOSS_BOUND), 0.5).value
        rows.append(SweepRow(lam, loss, penalty, half))
        models.append(model)
    return rows, models


def select_eta(train: TabularDataset, base_config: TrainConfig, etas=ETA_GRID,
               validation_fraction: float = 0.3, seed: int = 0) -> float:
    """Grid-search ``eta`` by validation mean log loss at ``lambda = 0``."""
    from .data import split_train_test

    fit_part, val_part = split_train_test(train, validation_fraction, seed)
    val_batch = Batch.from_dataset(val_part)
    best_eta, best_loss = None, math.inf
    for eta in etas:
        model, _ = fit(fit_part, replace(base_config, eta=eta, lam=0.0))
        loss, _ = evaluate(model, val_batch, Objective.LR)
        if loss < best_loss:
            best_eta, best_loss = eta, loss
    return best_eta
