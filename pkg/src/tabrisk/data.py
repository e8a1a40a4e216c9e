"""Typed tabular data: CSV ingestion, outlier filtering, scaling, encoding,
stratified splitting and SMOTE oversampling."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .rng import derive_rng

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"
LABEL = "label"
WEIGHT = "weight"
KINDS = (NUMERIC, CATEGORICAL, LABEL, WEIGHT)

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "?"})


class DataError(ValueError):
    """Malformed input data or schema."""


# --------------------------------------------------------------------------
# schema
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    categories: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.categories is not None:
            object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
            if len(set(self.categories)) != len(self.categories):
                raise DataError(f"column {self.name!r}: duplicate categories")


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("column names must be unique")
        n_label = sum(c.kind == LABEL for c in self.columns)
        if n_label != 1:
            raise DataError(f"schema needs exactly one label column, found {n_label}")
        if sum(c.kind == WEIGHT for c in self.columns) > 1:
            raise DataError("at most one weight column is supported")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def of_kind(self, kind: str) -> list[Column]:
        return [c for c in self.columns if c.kind == kind]

    @property
    def numeric(self) -> list[Column]:
        return self.of_kind(NUMERIC)

    @property
    def categorical(self) -> list[Column]:
        return self.of_kind(CATEGORICAL)

    @property
    def label(self) -> Column:
        return self.of_kind(LABEL)[0]

    @property
    def weight(self) -> Column | None:
        w = self.of_kind(WEIGHT)
        return w[0] if w else None

    def to_dict(self) -> dict:
        return {
            "columns": [
                {"name": c.name, "kind": c.kind, "categories": list(c.categories) if c.categories is not None else None}
                for c in self.columns
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        return cls(
            tuple(
                Column(c["name"], c["kind"], tuple(c["categories"]) if c.get("categories") is not None else None)
                for c in d["columns"]
            )
        )

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def heart_schema(weight_column: bool = False) -> Schema:
    """Schema of the 1190-row combined heart-disease table.

    FastingBS is read as numeric by default; ``weight_column=True`` gives it
    the weight role instead.
    """
    return Schema(
        (
            Column("Age", NUMERIC),
            Column("Sex", CATEGORICAL),
            Column("ChestPainType", CATEGORICAL),
            Column("RestingBP", NUMERIC),
            Column("Cholesterol", NUMERIC),
            Column("FastingBS", WEIGHT if weight_column else NUMERIC),
            Column("RestingECG", CATEGORICAL),
            Column("MaxHR", NUMERIC),
            Column("ExerciseAngina", CATEGORICAL),
            Column("Oldpeak", NUMERIC),
            Column("ST_Slope", CATEGORICAL),
            Column("HeartDisease", LABEL),
        )
    )


# header names used by the public IEEE DataPort release of the same table
IEEE_HEADER_ALIASES = {
    "age": "Age",
    "sex": "Sex",
    "chest pain type": "ChestPainType",
    "resting bp s": "RestingBP",
    "cholesterol": "Cholesterol",
    "fasting blood sugar": "FastingBS",
    "resting ecg": "RestingECG",
    "max heart rate": "MaxHR",
    "exercise angina": "ExerciseAngina",
    "oldpeak": "Oldpeak",
    "st slope": "ST_Slope",
    "target": "HeartDisease",
}


# --------------------------------------------------------------------------
# dataset
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Column store with numeric, categorical-code, label and weight blocks.

    ``row_ids`` carries provenance: the row's index in the originally loaded
    file.  Subsets keep the ids of the rows they contain.
    """

    schema: Schema
    numeric_data: np.ndarray
    categorical_data: np.ndarray
    labels: np.ndarray
    weights: np.ndarray | None = None
    row_ids: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.labels)
        num = np.asarray(self.numeric_data, dtype=np.float64).reshape(n, len(self.schema.numeric))
        cat = np.asarray(self.categorical_data, dtype=np.int64).reshape(n, len(self.schema.categorical))
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "numeric_data", num)
        object.__setattr__(self, "categorical_data", cat)
        object.__setattr__(self, "labels", labels)
        if self.row_ids is None:
            object.__setattr__(self, "row_ids", np.arange(n, dtype=np.int64))
        else:
            object.__setattr__(self, "row_ids", np.asarray(self.row_ids, dtype=np.int64))
        if self.weights is not None:
            object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        if n and not np.isin(labels, (0, 1)).all():
            raise DataError("labels must be 0/1")
        for j, col in enumerate(self.schema.categorical):
            if col.categories is None:
                raise DataError(f"categorical column {col.name!r} has no resolved categories")
            if n and (cat[:, j].min() < 0 or cat[:, j].max() > len(col.categories)):
                raise DataError(f"categorical column {col.name!r}: code out of range")

    @property
    def n_rows(self) -> int:
        return len(self.labels)

    @property
    def numeric_names(self) -> list[str]:
        return [c.name for c in self.schema.numeric]

    @property
    def categorical_names(self) -> list[str]:
        return [c.name for c in self.schema.categorical]

    @property
    def cardinalities(self) -> list[int]:
        """Number of real categories per categorical column (missing slot excluded)."""
        return [len(c.categories) for c in self.schema.categorical]

    def subset(self, index: np.ndarray) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            self.schema,
            self.numeric_data[index],
            self.categorical_data[index],
            self.labels[index],
            None if self.weights is None else self.weights[index],
            self.row_ids[index],
        )

    def with_numeric(self, numeric_data: np.ndarray) -> "Dataset":
        return replace(self, numeric_data=numeric_data)


def _parse_float(token: str, row: int, col: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"row {row}, column {col!r}: non-numeric token {token!r}") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {col!r}: non-finite value {token!r}")
    return value


def _category_key(token: str) -> tuple:
    try:
        return (0, float(token), token)
    except ValueError:
        return (1, 0.0, token)


def _canonical_token(token: str) -> str:
    """'1.0' and '1' denote the same category."""
    token = token.strip()
    try:
        f = float(token)
    except ValueError:
        return token
    if math.isfinite(f) and f == int(f):
        return str(int(f))
    return token


def load_csv(path: str | Path, schema: Schema, header_aliases: dict[str, str] | None = None) -> Dataset:
    """Read a comma-separated file whose header matches ``schema``.

    Categorical columns without declared categories take the sorted set of
    observed values.  Values outside declared categories, and empty/NA tokens,
    map to the reserved missing code.  Column order in the file may differ
    from the schema.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8-sig") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header_aliases:
        header = [header_aliases.get(h.lower(), header_aliases.get(h, h)) for h in header]
    if sorted(header) != sorted(schema.names):
        missing = sorted(set(schema.names) - set(header))
        extra = sorted(set(header) - set(schema.names))
        raise DataError(f"{path}: header mismatch (missing {missing}, unexpected {extra})")
    pos = {name: header.index(name) for name in schema.names}
    body = [r for r in rows[1:] if any(t.strip() for t in r)]
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DataError(f"{path}: line {i} has {len(r)} fields, expected {len(header)}")

    n = len(body)
    numeric = np.empty((n, len(schema.numeric)))
    for j, col in enumerate(schema.numeric):
        for i, r in enumerate(body):
            numeric[i, j] = _parse_float(r[pos[col.name]], i, col.name)

    labels = np.empty(n, dtype=np.int64)
    lab = schema.label.name
    for i, r in enumerate(body):
        value = _parse_float(r[pos[lab]], i, lab)
        if value not in (0.0, 1.0):
            raise DataError(f"row {i}, column {lab!r}: label must be 0 or 1, got {r[pos[lab]]!r}")
        labels[i] = int(value)

    weights = None
    if schema.weight is not None:
        wname = schema.weight.name
        weights = np.array([_parse_float(r[pos[wname]], i, wname) for i, r in enumerate(body)])

    resolved = []
    codes = np.empty((n, len(schema.categorical)), dtype=np.int64)
    for j, col in enumerate(schema.categorical):
        tokens = [_canonical_token(r[pos[col.name]]) for r in body]
        if col.categories is None:
            observed = {t for t in tokens if t.lower() not in MISSING_TOKENS}
            cats = tuple(sorted(observed, key=_category_key))
        else:
            cats = tuple(_canonical_token(c) for c in col.categories)
        lookup = {c: k for k, c in enumerate(cats)}
        unseen = set()
        for i, t in enumerate(tokens):
            code = lookup.get(t)
            if code is None:
                if t.lower() not in MISSING_TOKENS:
                    unseen.add(t)
                code = len(cats)
            codes[i, j] = code
        if unseen:
            logger.warning("column %r: unseen categories %s mapped to missing", col.name, sorted(unseen))
        resolved.append(Column(col.name, col.kind, cats))

    it = iter(resolved)
    final = Schema(tuple(next(it) if c.kind == CATEGORICAL else c for c in schema.columns))
    return Dataset(final, numeric, codes, labels, weights)


def write_csv(path: str | Path, ds: Dataset) -> None:
    """Inverse of :func:`load_csv` (missing categories written as empty)."""
    num = {c.name: j for j, c in enumerate(ds.schema.numeric)}
    cat = {c.name: j for j, c in enumerate(ds.schema.categorical)}
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ds.schema.names)
        for i in range(ds.n_rows):
            out = []
            for c in ds.schema.columns:
                if c.kind == NUMERIC:
                    out.append(repr(float(ds.numeric_data[i, num[c.name]])))
                elif c.kind == CATEGORICAL:
                    code = ds.categorical_data[i, cat[c.name]]
                    out.append(c.categories[code] if code < len(c.categories) else "")
                elif c.kind == LABEL:
                    out.append(str(int(ds.labels[i])))
                else:
                    out.append(repr(float(ds.weights[i])))
            w.writerow(out)


# --------------------------------------------------------------------------
# outlier filtering
# --------------------------------------------------------------------------


@dataclass
class RemovalReport:
    tau: float
    columns: list[str]
    n_in: int
    n_out: int
    removed_row_ids: list[int] = field(default_factory=list)
    offending_columns: list[list[str]] = field(default_factory=list)
    skipped_columns: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "columns": self.columns,
            "n_in": self.n_in,
            "n_out": self.n_out,
            "n_removed": len(self.removed_row_ids),
            "removed": [
                {"row_id": r, "columns": c} for r, c in zip(self.removed_row_ids, self.offending_columns)
            ],
            "skipped_columns": self.skipped_columns,
        }


def zscore_filter(ds: Dataset, tau: float = 3.0, columns: Sequence[str] | None = None):
    """Drop rows whose |z| exceeds ``tau`` in any selected numeric column.

    Means and population standard deviations come from the full input.
    Returns ``(filtered dataset, RemovalReport)``.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    names = ds.numeric_names
    columns = list(names if columns is None else columns)
    for c in columns:
        if c not in names:
            raise DataError(f"z-score column {c!r} is not numeric")
    report = RemovalReport(float(tau), columns, ds.n_rows, ds.n_rows)
    if ds.n_rows == 0:
        return ds, report
    flagged = np.zeros((ds.n_rows, len(columns)), dtype=bool)
    for k, c in enumerate(columns):
        x = ds.numeric_data[:, names.index(c)]
        sd = x.std()
        if sd == 0.0:
            logger.warning("z-score filter: column %r has zero spread, skipped", c)
            report.skipped_columns.append(c)
            continue
        flagged[:, k] = np.abs(x - x.mean()) / sd > tau
    bad = flagged.any(axis=1)
    for i in np.flatnonzero(bad):
        report.removed_row_ids.append(int(ds.row_ids[i]))
        report.offending_columns.append([c for k, c in enumerate(columns) if flagged[i, k]])
    out = ds.subset(np.flatnonzero(~bad))
    report.n_out = out.n_rows
    return out, report


# --------------------------------------------------------------------------
# scaling
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalerParams:
    columns: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"columns": list(self.columns), "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(tuple(d["columns"]), np.asarray(d["mean"], float), np.asarray(d["std"], float))


def fit_scaler(ds: Dataset) -> ScalerParams:
    """Per-numeric-column mean and population standard deviation."""
    if ds.n_rows == 0:
        raise DataError("cannot fit a scaler on an empty partition")
    return ScalerParams(tuple(ds.numeric_names), ds.numeric_data.mean(axis=0), ds.numeric_data.std(axis=0))


def scale_array(params: ScalerParams, x: np.ndarray) -> np.ndarray:
    safe = np.where(params.std > 0, params.std, 1.0)
    out = (x - params.mean) / safe
    out[:, params.std == 0] = 0.0
    return out


def apply_scaler(params: ScalerParams, ds: Dataset) -> Dataset:
    if tuple(ds.numeric_names) != params.columns:
        raise DataError(f"scaler columns {list(params.columns)} do not match dataset {ds.numeric_names}")
    return ds.with_numeric(scale_array(params, ds.numeric_data))


def standard_scale(fit: Dataset, *others: Dataset):
    """Fit on ``fit`` and transform it plus ``others``; returns ``(params, fit', *others')``."""
    params = fit_scaler(fit)
    return (params, apply_scaler(params, fit), *(apply_scaler(params, o) for o in others))


# --------------------------------------------------------------------------
# encoding
# --------------------------------------------------------------------------


def encode(ds: Dataset, mode: str = "onehot"):
    """Feature matrix and names.

    ``onehot`` expands each categorical column into one indicator per real
    category (a missing value gives an all-zero block); ``codes`` passes the
    integer codes through.  Numeric columns come first, unchanged.
    """
    blocks = [ds.numeric_data]
    names = list(ds.numeric_names)
    for j, col in enumerate(ds.schema.categorical):
        codes = ds.categorical_data[:, j]
        if mode == "onehot":
            k = len(col.categories)
            block = np.zeros((ds.n_rows, k))
            ok = codes < k
            block[np.flatnonzero(ok), codes[ok]] = 1.0
            blocks.append(block)
            names.extend(f"{col.name}={c}" for c in col.categories)
        elif mode == "codes":
            blocks.append(codes[:, None].astype(np.float64))
            names.append(col.name)
        else:
            raise ValueError(f"unknown encoding mode {mode!r}")
    return np.hstack(blocks) if blocks else np.empty((ds.n_rows, 0)), names


# --------------------------------------------------------------------------
# splitting
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    """Fold index per row; ``-1`` marks held-out rows outside every fold."""

    k: int
    assignments: np.ndarray
    seed: int

    def train_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero((self.assignments >= 0) & (self.assignments != fold))

    def test_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    @property
    def holdout_index(self) -> np.ndarray:
        return np.flatnonzero(self.assignments < 0)

    @property
    def cv_index(self) -> np.ndarray:
        return np.flatnonzero(self.assignments >= 0)

    def to_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "assignments": self.assignments.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FoldPlan":
        return cls(int(d["k"]), np.asarray(d["assignments"], dtype=np.int64), int(d["seed"]))


def stratified_split(labels: np.ndarray | Dataset, k: int = 5, holdout_fraction: float = 0.0, seed: int = 0):
    """Stratified hold-out draw followed by stratified k-fold assignment.

    Within each class the shuffled rows are dealt round-robin, with each
    class starting where the previous one stopped so fold sizes stay even.
    Returns ``(FoldPlan, holdout_mask)``.
    """
    y = labels.labels if isinstance(labels, Dataset) else np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise ValueError("k must be at least 2")
    if not 0.0 <= holdout_fraction < 1.0:
        raise ValueError("holdout_fraction must lie in [0, 1)")
    rng = derive_rng(seed, "stratified_split")
    assign = np.full(len(y), -1, dtype=np.int64)
    holdout = np.zeros(len(y), dtype=bool)
    offset = 0
    for cls in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == cls))
        n_hold = int(round(holdout_fraction * len(members)))
        holdout[members[:n_hold]] = True
        rest = members[n_hold:]
        if len(rest) < k:
            raise DataError(f"class {int(cls)} has {len(rest)} rows, fewer than k={k}")
        assign[rest] = (np.arange(len(rest)) + offset) % k
        offset = (offset + len(rest)) % k
    return FoldPlan(k, assign, seed), holdout


# --------------------------------------------------------------------------
# SMOTE
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")


def nearest_neighbors(x: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest other rows (Euclidean), ties by index."""
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * x @ x.T
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def smote(x: np.ndarray, y: np.ndarray, cfg: SmoteConfig = SmoteConfig()):
    """Oversample the minority class up to the majority count.

    Each synthetic row is ``a + u * (b - a)`` for a uniformly chosen minority
    row ``a``, one of its ``k`` nearest minority neighbours ``b`` and
    ``u ~ U(0, 1)``.  Original rows keep their order; synthetic rows follow.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2 or counts[0] == counts[1]:
        return x.copy(), y.copy()
    minority = classes[np.argmin(counts)]
    n_min, n_maj = counts.min(), counts.max()
    if n_min < 2:
        raise DataError("SMOTE needs at least 2 minority rows")
    k = cfg.k_neighbors
    if k >= n_min:
        logger.warning("SMOTE k_neighbors=%d clamped to %d (minority size %d)", k, n_min - 1, n_min)
        k = n_min - 1
    xm = x[y == minority]
    nn = nearest_neighbors(xm, k)
    rng = derive_rng(cfg.seed, "smote")
    n_new = n_maj - n_min
    base = rng.integers(0, n_min, size=n_new)
    pick = nn[base, rng.integers(0, k, size=n_new)]
    u = rng.random((n_new, 1))
    synth = xm[base] + u * (xm[pick] - xm[base])
    return np.vstack([x, synth]), np.concatenate([y, np.full(n_new, minority, dtype=np.int64)])
