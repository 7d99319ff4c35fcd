"""Datasets, CSV ingestion, standardization and experimental splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import EmptyDatasetError, ParseError, SchemaError, SplitSizeError

# Stream identifiers for seed splitting; appended to the user seed so that
# the split, the synthetic draw and any random init never share a stream.
_PURPOSES = {"split": 1, "synth": 2, "init": 3, "fair_synth": 4}


def make_rng(seed: int, purpose: str) -> np.random.Generator:
    """64-bit PCG generator keyed by ``(seed, purpose)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), _PURPOSES[purpose]]))


def _as_matrix(values, n_rows=None) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        if n_rows is not None and arr.size == 0:
            return np.zeros((n_rows, 0))
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D array")
    return arr


def _as_labels(values) -> np.ndarray:
    y = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be in {-1, +1}")
    return y


@dataclass(frozen=True)
class LabeledDataset:
    """Labeled anchor sample ``S_P``: feature rows ``X`` and labels ``y``."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = _as_matrix(self.X)
        y = _as_labels(self.y)
        if X.shape[0] < 1:
            raise EmptyDatasetError("labeled dataset has no rows")
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y have different lengths")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m1(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class AuxDataset:
    """Unlabeled anchor sample ``S_A``: shared features ``X`` and auxiliary ``A``."""

    X: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        X = _as_matrix(self.X)
        A = _as_matrix(self.A, n_rows=X.shape[0])
        if X.shape[0] < 1:
            raise EmptyDatasetError("auxiliary dataset has no rows")
        if A.shape[0] != X.shape[0]:
            raise ValueError("X and A have different numbers of rows")
        X.setflags(write=False)
        A.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "A", A)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m1(self) -> int:
        return self.X.shape[1]

    @property
    def m2(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class FullDataset:
    """Rows carrying all of ``(x, a, y)``; used for test sets and splitting."""

    X: np.ndarray
    A: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = _as_matrix(self.X)
        A = _as_matrix(self.A, n_rows=X.shape[0])
        y = _as_labels(self.y)
        if X.shape[0] < 1:
            raise EmptyDatasetError("dataset has no rows")
        if not (A.shape[0] == X.shape[0] == y.shape[0]):
            raise ValueError("X, A and y have different numbers of rows")
        for arr in (X, A, y):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def take(self, idx) -> "FullDataset":
        idx = np.asarray(idx, dtype=int)
        return FullDataset(self.X[idx], self.A[idx], self.y[idx])

    def labeled(self) -> LabeledDataset:
        return LabeledDataset(self.X, self.y)

    def aux(self) -> AuxDataset:
        return AuxDataset(self.X, self.A)


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CsvSchema:
    """Column roles. ``aux`` holds auxiliary (or group) columns."""

    features: Sequence[str]
    label: str | None = None
    aux: Sequence[str] = field(default_factory=tuple)


def _parse_label(cell: str, row: int, column: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"row {row}, column {column!r}: cannot parse label {cell!r}", row, column)
    if v == 1.0:
        return 1.0
    if v in (0.0, -1.0):
        return -1.0
    raise ParseError(f"row {row}, column {column!r}: label {cell!r} not in {{-1,0,1}}", row, column)


def read_csv_header(path) -> list[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise EmptyDatasetError(f"{path}: empty file")
    return [h.strip() for h in header]


def load_csv(path, schema: CsvSchema):
    """Load a headed UTF-8 CSV according to ``schema``.

    Returns a :class:`LabeledDataset` when only a label is declared, an
    :class:`AuxDataset` when only auxiliary columns are declared, and a
    :class:`FullDataset` when both are. Labels in ``{0, 1}`` are remapped to
    ``{-1, +1}``.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise EmptyDatasetError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    wanted = list(schema.features) + list(schema.aux) + ([schema.label] if schema.label else [])
    missing = [c for c in wanted if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    if not body:
        raise EmptyDatasetError(f"{path}: no data rows")
    pos = {name: header.index(name) for name in wanted}

    def numeric(names):
        out = np.empty((len(body), len(names)))
        for r, cells in enumerate(body, start=1):
            for c, name in enumerate(names):
                try:
                    out[r - 1, c] = float(cells[pos[name]])
                except (ValueError, IndexError):
                    cell = cells[pos[name]] if pos[name] < len(cells) else ""
                    raise ParseError(f"{path}: row {r}, column {name!r}: cannot parse {cell!r}", r, name)
        return out

    X = numeric(list(schema.features))
    A = numeric(list(schema.aux)) if schema.aux else np.zeros((len(body), 0))
    if schema.label is None:
        return AuxDataset(X, A)
    y = np.array([_parse_label(cells[pos[schema.label]] if pos[schema.label] < len(cells) else "",
                               r, schema.label) for r, cells in enumerate(body, start=1)])
    if schema.aux:
        return FullDataset(X, A, y)
    return LabeledDataset(X, y)


def write_csv(path, columns: Sequence[str], data: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in np.asarray(data, dtype=float):
            w.writerow([repr(float(v)) for v in row])


# --------------------------------------------------------------------------
# Standardization
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    scale: np.ndarray
    constant: np.ndarray  # bool mask of zero-variance columns (scale forced to 1)

    def apply(self, data) -> np.ndarray:
        data = np.asarray(data, dtype=float)
        return (data - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist(),
                "constant": self.constant.tolist()}

    @classmethod
    def from_dict(cls, d) -> "StandardizationStats":
        return cls(np.asarray(d["mean"], float), np.asarray(d["scale"], float),
                   np.asarray(d["constant"], bool))


def fit_standardization(data) -> StandardizationStats:
    data = _as_matrix(data)
    if data.shape[0] < 1:
        raise EmptyDatasetError("cannot standardize an empty matrix")
    mean = data.mean(axis=0)
    sd = data.std(axis=0)  # population standard deviation
    constant = ~(sd > 0)
    scale = np.where(constant, 1.0, sd)
    return StandardizationStats(mean, scale, constant)


def standardize(data) -> tuple[np.ndarray, StandardizationStats]:
    """Center each column and scale it to unit population variance."""
    stats = fit_standardization(data)
    return stats.apply(_as_matrix(data)), stats


# --------------------------------------------------------------------------
# Splits
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    n_P: int
    v: int
    test_fraction: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.n_P < 0 or self.v < 0:
            raise ValueError("n_P and v must be non-negative")


class SplitIndices(NamedTuple):
    train: np.ndarray
    test: np.ndarray
    labeled: np.ndarray
    aux: np.ndarray


class Split(NamedTuple):
    labeled: LabeledDataset
    aux: AuxDataset
    test: FullDataset


def split_indices(n: int, spec: SplitSpec) -> SplitIndices:
    """Row indices for the overlap protocol.

    A seeded permutation puts ``ceil(test_fraction * n)`` rows in the test
    set; of the remaining ``n_train`` training rows, the first ``n_P + v``
    form the labeled sample and rows ``n_P`` onwards form the auxiliary one,
    so exactly ``v`` rows are shared.
    """
    n_test = int(math.ceil(spec.test_fraction * n))
    n_train = n - n_test
    if spec.n_P + spec.v > n_train:
        raise SplitSizeError(f"n_P + v = {spec.n_P + spec.v} exceeds n_train = {n_train}")
    if n_train - spec.n_P < 1 or spec.n_P + spec.v < 1:
        raise SplitSizeError("split leaves an empty labeled or auxiliary sample")
    perm = make_rng(spec.seed, "split").permutation(n)
    train, test = perm[:n_train], perm[n_train:]
    return SplitIndices(train, test, train[: spec.n_P + spec.v], train[spec.n_P:])


def split_overlap(full: FullDataset, spec: SplitSpec) -> Split:
    idx = split_indices(full.n, spec)
    return Split(
        LabeledDataset(full.X[idx.labeled], full.y[idx.labeled]),
        AuxDataset(full.X[idx.aux], full.A[idx.aux]),
        full.take(idx.test),
    )


# --------------------------------------------------------------------------
# Synthetic distribution-shift data
# --------------------------------------------------------------------------

SYNTH_DIM = 10
SYNTH_M1 = 2
SYNTH_SD = 0.2
BETA_1 = np.eye(SYNTH_DIM)[0]
BETA_2 = np.ones(SYNTH_DIM)


def _two_group_block(rng, n_group1, n_group2):
    """Class-balanced Gaussian blocks; rows ordered group 1 then group 2,
    positives before negatives within a group."""
    xs, ys, gs = [], [], []
    for beta, n, g in ((BETA_1, n_group1, 1), (BETA_2, n_group2, 2)):
        half = n // 2
        xs.append(rng.normal(beta, SYNTH_SD, size=(half, SYNTH_DIM)))
        xs.append(rng.normal(-beta, SYNTH_SD, size=(n - half, SYNTH_DIM)))
        ys.append(np.r_[np.ones(half), -np.ones(n - half)])
        gs.append(np.full(n, g))
    return np.vstack(xs), np.concatenate(ys), np.concatenate(gs)


def gen_synthetic(seed: int, n1=(400, 20), n2=(200, 2000), aux_fraction=0.7) -> Split:
    """Two-group covariate/label shift data.

    The labeled sample is dominated by group 1 (mean ``+-BETA_1``) and keeps
    only the first two coordinates; the unlabeled and test samples are
    dominated by group 2 (mean ``+-BETA_2``) and keep the remaining eight as
    auxiliary features.
    """
    rng = make_rng(seed, "synth")
    X1, y1, _ = _two_group_block(rng, *n1)
    X2, y2, _ = _two_group_block(rng, *n2)
    perm = rng.permutation(len(y2))
    X2, y2 = X2[perm], y2[perm]
    n_aux = int(round(aux_fraction * len(y2)))
    labeled = LabeledDataset(X1[:, :SYNTH_M1], y1)
    aux = AuxDataset(X2[:n_aux, :SYNTH_M1], X2[:n_aux, SYNTH_M1:])
    test = FullDataset(X2[n_aux:, :SYNTH_M1], X2[n_aux:, SYNTH_M1:], y2[n_aux:])
    return Split(labeled, aux, test)


def synthetic_group1_positives(seed: int, n: int) -> np.ndarray:
    """Draw ``n`` group-1 positives from the synthetic generator's law."""
    rng = make_rng(seed, "synth")
    return rng.normal(BETA_1, SYNTH_SD, size=(n, SYNTH_DIM))


def add_intercept_column(X) -> np.ndarray:
    X = _as_matrix(X)
    return np.hstack([X, np.ones((X.shape[0], 1))])


def gen_fair_synthetic(seed: int, n_P: int = 100, n_A: int = 400, n_test: int = 1000,
                       rate0: float = 0.3, rate1: float = 0.7, label_sd: float = 0.8,
                       group_sd: float = 0.3) -> Split:
    """Group-biased instance for the fairness program.

    The group ``a`` is a fair coin and ``P(y=+1 | a)`` is ``rate0`` or
    ``rate1``, so the joint positive rates are ``(rate0 / 2, rate1 / 2)``.
    The first feature is ``y`` plus noise (``label_sd``); the second is
    ``2a - 1`` plus noise (``group_sd``), so the shared features reveal the
    group and matching reproduces the joint law of ``(x, a, y)``. A plain
    classifier leans on the group and scores group-1 positives higher.
    """
    rng = make_rng(seed, "fair_synth")

    def draw(n):
        a = rng.integers(0, 2, size=n).astype(float)
        y = np.where(rng.random(n) < np.where(a == 1, rate1, rate0), 1.0, -1.0)
        X = np.column_stack([y + rng.normal(0.0, label_sd, n), 2 * a - 1 + rng.normal(0.0, group_sd, n)])
        return X, a[:, None], y

    XP, _, yP = draw(n_P)
    XA, AA, _ = draw(n_A)
    XT, AT, yT = draw(n_test)
    return Split(LabeledDataset(XP, yP), AuxDataset(XA, AA), FullDataset(XT, AT, yT))


FAIR_SYNTH_RATES = (0.15, 0.35)
