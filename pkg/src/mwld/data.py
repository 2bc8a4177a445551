"""Tabular ingestion with sensitive-attribute schemas, and synthetic data.

A dataset schema is a YAML document::

    name: income
    target: {column: income, positive: [">50K", ">50K."]}
    sensitive:
      - column: sex
        discretizer: {kind: passthrough, levels: [Female, Male]}
    features:
      numeric: [age, hours-per-week]
      categorical: [workclass]
      remaining: ignore          # or numeric / categorical
    drop: [fnlwgt]
    missing_values: ["", "?"]

Discretizer kinds are ``threshold`` (``cut``; Low below, High otherwise),
``bins`` (ascending ``edges`` with optional ``labels``; bins are
``[e_{i-1}, e_i)``), ``map`` (explicit value mapping) and ``passthrough``
(optional declared ``levels``).
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .core import LossVector, factorize_keys

DEFAULT_MISSING = ("", "?", "NA", "N/A", "NaN", "nan")
UNKNOWN_LEVEL = "unknown"
BUNDLED_SCHEMAS = ("candc", "income", "german", "compas5")


class SchemaError(ValueError):
    pass


# -- discretizers ------------------------------------------------------------


@dataclass(frozen=True)
class Discretizer:
    kind: str = "passthrough"
    cut: float | None = None
    edges: tuple = ()
    labels: tuple = ()
    mapping: dict = field(default_factory=dict)
    levels: tuple = ()

    def __post_init__(self):
        if self.kind == "threshold":
            if self.cut is None:
                raise SchemaError("threshold discretizer needs 'cut'")
        elif self.kind == "bins":
            edges = tuple(float(e) for e in self.edges)
            if not edges or any(b <= a for a, b in zip(edges, edges[1:])):
                raise SchemaError("bin edges must be nonempty and strictly ascending")
            object.__setattr__(self, "edges", edges)
            if self.labels and len(self.labels) != len(edges) + 1:
                raise SchemaError("bins need len(edges) + 1 labels")
        elif self.kind == "map":
            if not self.mapping:
                raise SchemaError("map discretizer needs a nonempty 'mapping'")
        elif self.kind != "passthrough":
            raise SchemaError(f"unknown discretizer kind {self.kind!r}")

    @property
    def cardinality(self) -> int | None:
        """Number of distinct outputs, or None when not declared."""
        if self.kind == "threshold":
            return 2
        if self.kind == "bins":
            return len(self.edges) + 1
        if self.kind == "map":
            return len(set(self.mapping.values()))
        return len(self.levels) or None

    def __call__(self, raw: str) -> str:
        if self.kind == "threshold":
            return "Low" if float(raw) < self.cut else "High"
        if self.kind == "bins":
            i = int(np.searchsorted(self.edges, float(raw), side="right"))
            return str(self.labels[i]) if self.labels else f"bin{i}"
        if self.kind == "map":
            if raw not in self.mapping:
                raise ValueError(f"value {raw!r} has no mapping")
            return str(self.mapping[raw])
        if self.levels and raw not in self.levels:
            raise ValueError(f"value {raw!r} is not a declared level")
        return raw

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind}
        if self.kind == "threshold":
            out["cut"] = self.cut
        if self.kind == "bins":
            out["edges"] = list(self.edges)
            if self.labels:
                out["labels"] = list(self.labels)
        if self.kind == "map":
            out["mapping"] = dict(self.mapping)
        if self.levels:
            out["levels"] = list(self.levels)
        return out


# -- schema ------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSchema:
    name: str
    target_column: str
    positive: tuple = ()
    negative: tuple = ()
    top_fraction: float | None = None
    sensitive: tuple = ()  # of (column, Discretizer)
    numeric: tuple = ()
    categorical: tuple = ()
    remaining: str = "ignore"
    drop: tuple = ()
    missing_values: tuple = DEFAULT_MISSING

    def __post_init__(self):
        if bool(self.positive) == (self.top_fraction is not None):
            raise SchemaError("target needs exactly one of 'positive' or 'top_fraction'")
        if self.top_fraction is not None and not 0 < self.top_fraction < 1:
            raise SchemaError("top_fraction must be in (0, 1)")
        if self.target_column in self.numeric or self.target_column in self.categorical:
            raise SchemaError("the target column cannot also be a feature")
        if self.remaining not in ("ignore", "numeric", "categorical"):
            raise SchemaError(f"features.remaining must be ignore/numeric/categorical")

    @property
    def predicted_T(self) -> int | None:
        """Product of the sensitive discretizer cardinalities."""
        total = 1
        for _, disc in self.sensitive:
            if disc.cardinality is None:
                return None
            total *= disc.cardinality
        return total

    @classmethod
    def from_dict(cls, doc: dict) -> "DatasetSchema":
        try:
            target = doc["target"]
            features = doc.get("features", {}) or {}
            sensitive = tuple(
                (str(s["column"]), Discretizer(**_discretizer_args(s.get("discretizer", {}))))
                for s in doc.get("sensitive", []) or []
            )
            return cls(
                name=str(doc.get("name", "dataset")),
                target_column=str(target["column"]),
                positive=tuple(str(v) for v in target.get("positive", []) or []),
                negative=tuple(str(v) for v in target.get("negative", []) or []),
                top_fraction=target.get("top_fraction"),
                sensitive=sensitive,
                numeric=tuple(str(c) for c in features.get("numeric", []) or []),
                categorical=tuple(str(c) for c in features.get("categorical", []) or []),
                remaining=str(features.get("remaining", "ignore")),
                drop=tuple(str(c) for c in doc.get("drop", []) or []),
                missing_values=tuple(str(v) for v in doc.get("missing_values", DEFAULT_MISSING)),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema: {exc}") from exc

    def to_dict(self) -> dict:
        target: dict[str, Any] = {"column": self.target_column}
        if self.positive:
            target["positive"] = list(self.positive)
        if self.negative:
            target["negative"] = list(self.negative)
        if self.top_fraction is not None:
            target["top_fraction"] = self.top_fraction
        return {
            "name": self.name,
            "target": target,
            "sensitive": [{"column": c, "discretizer": d.to_dict()} for c, d in self.sensitive],
            "features": {
                "numeric": list(self.numeric),
                "categorical": list(self.categorical),
                "remaining": self.remaining,
            },
            "drop": list(self.drop),
            "missing_values": list(self.missing_values),
        }


def _discretizer_args(doc: dict) -> dict:
    args = dict(doc)
    for key in ("edges", "labels", "levels"):
        if key in args:
            args[key] = tuple(args[key])
    if "mapping" in args:
        args["mapping"] = {str(k): str(v) for k, v in args["mapping"].items()}
    if "levels" in args:
        args["levels"] = tuple(str(v) for v in args["levels"])
    return args


def load_schema(source) -> DatasetSchema:
    """Load a schema from a YAML path or the name of a bundled schema."""
    if isinstance(source, DatasetSchema):
        return source
    if str(source) in BUNDLED_SCHEMAS:
        text = resources.files("mwld").joinpath("schemas", f"{source}.yaml").read_text("utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict):
        raise SchemaError(f"schema {source} is not a mapping")
    return DatasetSchema.from_dict(doc)


def write_schema(schema: DatasetSchema, path) -> None:
    text = yaml.safe_dump(schema.to_dict(), sort_keys=False, allow_unicode=True)
    Path(path).write_text(text, encoding="utf-8", newline="\n")


# -- dataset -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TabularDataset:
    """Encoded features, binary labels and sensitive keys, plus the cleaned
    raw table they were derived from (kept for lossless CSV export)."""

    features: np.ndarray
    labels: np.ndarray
    sensitive_keys: tuple
    feature_manifest: dict
    columns: tuple = ()
    raw: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.features.shape[0]
        if self.labels.shape[0] != n or len(self.sensitive_keys) != n:
            raise ValueError("features, labels and sensitive keys differ in length")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite entries")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def feature_names(self) -> list[str]:
        return list(self.feature_manifest.get("feature_names", []))

    @property
    def T(self) -> int:
        return len(set(self.sensitive_keys))

    def key_codes(self) -> np.ndarray:
        return factorize_keys(self.sensitive_keys)[0]

    def subset(self, indices) -> "TabularDataset":
        idx = np.asarray(indices, dtype=int)
        return TabularDataset(
            features=self.features[idx],
            labels=self.labels[idx],
            sensitive_keys=tuple(self.sensitive_keys[i] for i in idx),
            feature_manifest=self.feature_manifest,
            columns=self.columns,
            raw={c: [v[i] for i in idx] for c, v in self.raw.items()},
            info=dict(self.info),
        )


def _is_missing(value: str, schema: DatasetSchema) -> bool:
    return value.strip() in schema.missing_values


def _parse_float(value: str) -> float | None:
    try:
        x = float(value)
    except ValueError:
        return None
    return x if math.isfinite(x) else None


def _feature_columns(schema: DatasetSchema, columns) -> tuple[list[str], list[str]]:
    numeric, categorical = list(schema.numeric), list(schema.categorical)
    if schema.remaining != "ignore":
        taken = set(numeric) | set(categorical) | set(schema.drop) | {schema.target_column}
        rest = [c for c in columns if c not in taken]
        (numeric if schema.remaining == "numeric" else categorical).extend(rest)
    return numeric, categorical


def _labels(values: list[str], schema: DatasetSchema, manifest: dict):
    """Return (labels, kept mask, threshold)."""
    n = len(values)
    keep = np.ones(n, dtype=bool)
    y = np.zeros(n, dtype=np.int64)
    threshold = None
    if schema.top_fraction is not None:
        parsed = np.array([_parse_float(v) if not _is_missing(v, schema) else None for v in values], dtype=object)
        keep = np.array([p is not None for p in parsed])
        numbers = np.array([p for p in parsed if p is not None], dtype=float)
        threshold = manifest.get("target_threshold")
        if threshold is None:
            if numbers.size == 0:
                raise ValueError("no parseable target values")
            threshold = float(np.quantile(numbers, 1.0 - schema.top_fraction))
        y[keep] = (numbers >= threshold).astype(np.int64)
        return y, keep, threshold
    for i, v in enumerate(values):
        v = v.strip()
        if _is_missing(v, schema):
            keep[i] = False
        elif v in schema.positive:
            y[i] = 1
        elif schema.negative and v not in schema.negative:
            keep[i] = False
    return y, keep, threshold


def dataset_from_columns(
    columns: list[str],
    table: dict[str, list[str]],
    schema: DatasetSchema,
    manifest: dict | None = None,
) -> TabularDataset:
    """Encode a raw string table according to ``schema``.

    When ``manifest`` is given, its stored statistics (category levels,
    numeric means and scales, target threshold) are reused instead of being
    fitted, so the same raw rows always encode to the same features.
    """
    fitting = manifest is None
    manifest = {} if manifest is None else manifest
    needed = [schema.target_column] + [c for c, _ in schema.sensitive]
    numeric_cols, categorical_cols = _feature_columns(schema, columns)
    needed += numeric_cols + categorical_cols
    missing_cols = [c for c in needed if c not in table]
    if missing_cols:
        raise SchemaError(f"columns missing from the data: {missing_cols}")

    n_rows = len(table[schema.target_column])
    y, keep, threshold = _labels(table[schema.target_column], schema, manifest)
    dropped_target = int((~keep).sum())

    keys = []
    for i in range(n_rows):
        if not keep[i]:
            keys.append(None)
            continue
        raw_values = [table[c][i].strip() for c, _ in schema.sensitive]
        if any(_is_missing(v, schema) for v in raw_values):
            keep[i] = False
            keys.append(None)
            continue
        keys.append(tuple(d(v) for (_, d), v in zip(schema.sensitive, raw_values)))
    dropped_sensitive = int((~keep).sum()) - dropped_target
    if dropped_target:
        warnings.warn(f"dropped {dropped_target} rows with a missing or unparseable target")
    if dropped_sensitive:
        warnings.warn(f"dropped {dropped_sensitive} rows with a missing sensitive attribute")
    rows = np.flatnonzero(keep)
    if rows.size == 0:
        raise ValueError("no rows left after cleaning")

    blocks, names = [], []
    numeric_stats = []
    for col in numeric_cols:
        raw = [table[col][i].strip() for i in rows]
        parsed = np.array(
            [np.nan if _is_missing(v, schema) else (_parse_float(v) if _parse_float(v) is not None else np.nan) for v in raw]
        )
        if fitting:
            observed = parsed[~np.isnan(parsed)]
            fill = float(np.mean(observed)) if observed.size else 0.0
            filled = np.where(np.isnan(parsed), fill, parsed)
            center = float(np.mean(filled))
            scale = float(np.std(filled))
            scale = scale if scale > 0 else 1.0
            stats = {"column": col, "fill": fill, "mean": center, "std": scale}
        else:
            stats = next(s for s in manifest["numeric"] if s["column"] == col)
            filled = np.where(np.isnan(parsed), stats["fill"], parsed)
        numeric_stats.append(stats)
        blocks.append(((filled - stats["mean"]) / stats["std"])[:, None])
        names.append(col)

    categorical_levels = []
    for col in categorical_cols:
        raw = [table[col][i].strip() for i in rows]
        raw = [UNKNOWN_LEVEL if _is_missing(v, schema) else v for v in raw]
        if fitting:
            levels = sorted(set(raw))
        else:
            levels = next(s["levels"] for s in manifest["categorical"] if s["column"] == col)
        categorical_levels.append({"column": col, "levels": list(levels)})
        index = {lv: j for j, lv in enumerate(levels)}
        block = np.zeros((rows.size, len(levels)))
        unseen = 0
        for r, v in enumerate(raw):
            j = index.get(v)
            if j is None:
                unseen += 1
            else:
                block[r, j] = 1.0
        if unseen:
            warnings.warn(f"{unseen} values of {col!r} were not seen when fitting; encoded as all zeros")
        blocks.append(block)
        names.extend(f"{col}={lv}" for lv in levels)

    features = np.hstack(blocks) if blocks else np.zeros((rows.size, 0))
    out_manifest = {
        "schema": schema.name,
        "feature_names": names,
        "numeric": numeric_stats,
        "categorical": categorical_levels,
        "target_threshold": threshold,
    }
    kept_raw = {c: [table[c][i] for i in rows] for c in columns}
    return TabularDataset(
        features=features,
        labels=y[rows],
        sensitive_keys=tuple(keys[i] for i in rows),
        feature_manifest=out_manifest,
        columns=tuple(columns),
        raw=kept_raw,
        info={
            "rows_read": n_rows,
            "dropped_target": dropped_target,
            "dropped_sensitive": dropped_sensitive,
            "raw_attributes": len(numeric_cols) + len(categorical_cols),
        },
    )


def read_csv_table(path) -> tuple[list[str], dict[str, list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, strict=True)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path} is empty") from None
        except csv.Error as exc:
            raise ValueError(f"malformed CSV {path}: {exc}") from exc
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise ValueError(f"{path} has duplicate column names")
        table: dict[str, list[str]] = {h: [] for h in header}
        try:
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise ValueError(
                        f"malformed CSV {path}: line {line_no} has {len(row)} fields, expected {len(header)}"
                    )
                for h, v in zip(header, row):
                    table[h].append(v)
        except csv.Error as exc:
            raise ValueError(f"malformed CSV {path}: {exc}") from exc
    return header, table


def load_csv(path, schema, manifest: dict | None = None) -> TabularDataset:
    """Read a CSV file and encode it with ``schema`` (a schema or its path/name)."""
    schema = load_schema(schema)
    header, table = read_csv_table(path)
    return dataset_from_columns(header, table, schema, manifest)


def write_csv(dataset: TabularDataset, path) -> None:
    """Write the cleaned raw table; reloading it with the dataset's manifest
    reproduces the features exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(dataset.columns)
        for row in zip(*(dataset.raw[c] for c in dataset.columns)):
            writer.writerow(row)


# -- splitting ---------------------------------------------------------------


def split_indices(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n_train = int(math.floor(n * (1.0 - test_fraction)))
    if n_train == 0 or n_train == n:
        raise ValueError(f"a split of {n} rows at test_fraction={test_fraction} is degenerate")
    perm = np.random.default_rng(seed).permutation(n)
    return perm[:n_train], perm[n_train:]


def split_train_test(dataset: TabularDataset, test_fraction: float = 0.3, seed: int = 0):
    train_idx, test_idx = split_indices(dataset.n, test_fraction, seed)
    return dataset.subset(train_idx), dataset.subset(test_idx)


def repeated_splits(dataset: TabularDataset, evaluate, repeats: int = 10,
                    test_fraction: float = 0.3, seed: int = 0) -> dict:
    """Average ``evaluate(train, test) -> dict of floats`` over seeded splits."""
    seeds = np.random.SeedSequence(seed).generate_state(repeats)
    results = [evaluate(*split_train_test(dataset, test_fraction, int(s))) for s in seeds]
    return {key: float(np.mean([r[key] for r in results])) for key in results[0]}


# -- synthetic data ------------------------------------------------------------

_SYNTH_DIM = 4
_SYNTH_COEF = np.array([2.0, -1.5, 1.0, 0.0])
_SYNTH_MINORITY_SHIFT = np.array([0.0, 0.0, 0.0, 1.5])  # orthogonal to the coefficients


def two_group_schema() -> DatasetSchema:
    return DatasetSchema(
        name="two_group",
        target_column="label",
        positive=("1",),
        negative=("0",),
        sensitive=(("group", Discretizer("passthrough", levels=("majority", "minority"))),),
        numeric=tuple(f"x{j}" for j in range(_SYNTH_DIM)),
    )


def synth_two_group(n: int, minority_fraction: float = 0.2, noise_gap: float = 0.3,
                    seed: int = 0, base_noise: float = 0.05) -> TabularDataset:
    """Two sensitive groups whose labels differ only in their noise rate.

    Features are Gaussian; the minority's mean is shifted along a direction
    the labels do not depend on, so with ``noise_gap = 0`` both groups see
    the same classification problem. The minority's labels are flipped with
    probability ``base_noise + noise_gap``, the majority's with
    ``base_noise``.
    """
    if not 0 < minority_fraction < 0.5:
        raise ValueError("minority_fraction must be in (0, 0.5)")
    if n < 100:
        raise ValueError("n must be at least 100")
    if not 0 <= base_noise + noise_gap < 0.5 or noise_gap < 0:
        raise ValueError("noise rates must be in [0, 0.5)")
    rng = np.random.default_rng(seed)
    minority = rng.random(n) < minority_fraction
    x = rng.standard_normal((n, _SYNTH_DIM)) + np.outer(minority, _SYNTH_MINORITY_SHIFT)
    clean = (x @ _SYNTH_COEF + 0.5 * rng.standard_normal(n) > 0).astype(np.int64)
    flip = rng.random(n) < np.where(minority, base_noise + noise_gap, base_noise)
    y = np.where(flip, 1 - clean, clean)

    columns = [f"x{j}" for j in range(_SYNTH_DIM)] + ["group", "label"]
    table = {f"x{j}": [repr(float(v)) for v in x[:, j]] for j in range(_SYNTH_DIM)}
    table["group"] = ["minority" if m else "majority" for m in minority]
    table["label"] = [str(int(v)) for v in y]
    return dataset_from_columns(columns, table, two_group_schema())


def atom_population(atoms) -> LossVector:
    """The atom distribution itself as a weighted LossVector."""
    values, probs = _check_atoms(atoms)
    return LossVector(values, probs, loss_bound_L=max(1.0, float(values.max())))


def _check_atoms(atoms):
    if not 1 <= len(atoms) <= 12:
        raise ValueError("need between 1 and 12 atoms")
    values = np.array([a[0] for a in atoms], dtype=float)
    probs = np.array([a[1] for a in atoms], dtype=float)
    if probs.min() < 0 or abs(math.fsum(probs) - 1.0) > 1e-12:
        raise ValueError("atom probabilities must be nonnegative and sum to 1")
    if values.min() < 0:
        raise ValueError("atom losses must be nonnegative")
    return values, probs


def synth_discrete_loss_population(atoms, n: int, seed) -> LossVector:
    """I.i.d. sample of size ``n`` from a finite loss distribution."""
    values, probs = _check_atoms(atoms)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    draws = rng.choice(values.size, size=n, p=probs)
    return LossVector(values[draws], loss_bound_L=max(1.0, float(values.max())))
