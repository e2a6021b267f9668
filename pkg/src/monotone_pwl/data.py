"""Datasets: the synthetic sin(x) + e^y surface and UCI Adult.

UCI Adult preprocessing
-----------------------
* ``fnlwgt`` (a sampling weight) and the ``education`` string are dropped;
  the latter duplicates ``education-num``, which is a monotone feature, and
  keeping both would let the model route around the constraint.
* Continuous columns (age, education-num, capital-gain, capital-loss,
  hours-per-week) are min-max scaled with training-split statistics.
* The remaining 7 categorical columns are one-hot encoded with levels
  taken from the training split; ``?`` is kept as its own level. A level
  first seen outside the training split encodes as an all-zero group.
* The training split is a seeded 80% subset of ``adult.data`` (26,048 of
  32,561 rows); ``adult.test`` is used whole (16,281 rows).
"""

from __future__ import annotations

import json
import logging
import math
import os
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, DataError

log = logging.getLogger(__name__)

REGRESSION = "regression"
CLASSIFICATION = "classification"

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
]
ADULT_CONTINUOUS = ["age", "education-num", "capital-gain", "capital-loss", "hours-per-week"]
ADULT_CATEGORICAL = ["workclass", "marital-status", "occupation", "relationship",
                     "race", "sex", "native-country"]
ADULT_MONOTONE = ["education-num", "hours-per-week", "capital-gain"]
ADULT_TRAIN_ROWS = 26_048
ADULT_TEST_ROWS = 16_281
# realized one-hot width under the encoding above; the published figure is 90
ADULT_EXPECTED_WIDTH = 91
ADULT_WIDTH_TOLERANCE = (85, 95)

SYNTHETIC_TRAIN_ROWS = 10_000


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    task: str
    feature_names: list[str]
    feature_kinds: list[str] = field(default_factory=list)
    scaling: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        if self.features.ndim != 2:
            raise DataError(f"features must be a matrix, got shape {self.features.shape}")
        n, d = self.features.shape
        if self.labels.shape != (n,):
            raise DataError(f"{n} rows but {self.labels.size} labels")
        if len(self.feature_names) != d:
            raise DataError(f"{d} features but {len(self.feature_names)} names")
        if not self.feature_kinds:
            self.feature_kinds = ["continuous"] * d
        if self.task not in (REGRESSION, CLASSIFICATION):
            raise ConfigurationError(f"unknown task {self.task!r}")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.labels))):
            raise DataError("dataset contains non-finite values")
        if self.task == CLASSIFICATION and not np.all((self.labels == 0) | (self.labels == 1)):
            raise DataError("classification labels must be 0 or 1")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return replace(self, features=self.features[index], labels=self.labels[index])

    def feature_index(self, name_or_index) -> int:
        if isinstance(name_or_index, (int, np.integer)):
            k = int(name_or_index)
        elif name_or_index in self.feature_names:
            k = self.feature_names.index(name_or_index)
        else:
            try:
                k = int(name_or_index)
            except ValueError:
                raise ConfigurationError(f"unknown feature {name_or_index!r}") from None
        if not 0 <= k < self.n_features:
            raise ConfigurationError(f"feature index {k} out of range")
        return k


# synthetic ---------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    n: int = SYNTHETIC_TRAIN_ROWS
    seed: int = 0
    noise_std: float = 0.0


def synthetic_target(x, y):
    return np.sin(x) + np.exp(y)


def generate_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> Dataset:
    """Uniform points on [0, 1]^2 labelled with sin(x) + e^y (+ noise)."""
    if spec.n < 1:
        raise ConfigurationError(f"n must be >= 1, got {spec.n}")
    if spec.noise_std < 0:
        raise ConfigurationError("noise_std must be >= 0")
    rng = np.random.default_rng(spec.seed)
    X = rng.uniform(0.0, 1.0, size=(spec.n, 2))
    y = synthetic_target(X[:, 0], X[:, 1])
    if spec.noise_std > 0:
        y = y + rng.normal(0.0, spec.noise_std, size=spec.n)
    return Dataset(X, y, REGRESSION, ["x", "y"])


# splitting ---------------------------------------------------------------

def split_indices(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < fraction < 1.0:
        raise ConfigurationError(f"fraction must lie in (0, 1), got {fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    k = int(math.floor(fraction * n + 1e-9))
    return np.sort(perm[:k]), np.sort(perm[k:])


def split(dataset: Dataset, fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Disjoint (first, rest) split with ``floor(fraction * n)`` rows first."""
    a, b = split_indices(len(dataset), fraction, seed)
    return dataset.subset(a), dataset.subset(b)


# UCI Adult -----------------------------------------------------------------

def read_adult_rows(path: str | os.PathLike) -> list[tuple[int, list[str]]]:
    """(line number, fields) for every record in a raw UCI Adult file."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"adult file not found: {path}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("|"):
                continue
            fields = [f.strip() for f in line.split(",")]
            if len(fields) != len(ADULT_COLUMNS):
                raise DataError(f"expected {len(ADULT_COLUMNS)} fields, got {len(fields)}", lineno)
            label = fields[-1].rstrip(".")
            if label not in ("<=50K", ">50K"):
                raise DataError(f"unknown income label {fields[-1]!r}", lineno)
            fields[-1] = label
            rows.append((lineno, fields))
    return rows


def _continuous(rows, name: str) -> np.ndarray:
    j = ADULT_COLUMNS.index(name)
    out = np.empty(len(rows))
    for i, (lineno, fields) in enumerate(rows):
        try:
            out[i] = float(fields[j])
        except ValueError:
            raise DataError(f"{name}: not a number: {fields[j]!r}", lineno) from None
    return out


class _AdultEncoder:
    def __init__(self, rows):
        self.levels = {}
        for name in ADULT_CATEGORICAL:
            j = ADULT_COLUMNS.index(name)
            self.levels[name] = sorted({fields[j] for _, fields in rows})
        self.scaling = {}
        for name in ADULT_CONTINUOUS:
            col = _continuous(rows, name)
            lo, hi = float(col.min()), float(col.max())
            if hi == lo:
                hi = lo + 1.0
            self.scaling[name] = (lo, hi)

    @property
    def feature_names(self) -> list[str]:
        names = list(ADULT_CONTINUOUS)
        for name in ADULT_CATEGORICAL:
            names += [f"{name}={_level_name(v)}" for v in self.levels[name]]
        return names

    @property
    def feature_kinds(self) -> list[str]:
        kinds = ["continuous"] * len(ADULT_CONTINUOUS)
        for name in ADULT_CATEGORICAL:
            kinds += [f"onehot:{name}"] * len(self.levels[name])
        return kinds

    def transform(self, rows, split_name: str) -> Dataset:
        cols = []
        for name in ADULT_CONTINUOUS:
            lo, hi = self.scaling[name]
            cols.append(((_continuous(rows, name) - lo) / (hi - lo))[:, None])
        for name in ADULT_CATEGORICAL:
            j = ADULT_COLUMNS.index(name)
            lookup = {v: k for k, v in enumerate(self.levels[name])}
            block = np.zeros((len(rows), len(lookup)))
            unseen = set()
            for i, (_, fields) in enumerate(rows):
                k = lookup.get(fields[j])
                if k is None:
                    unseen.add(fields[j])
                else:
                    block[i, k] = 1.0
            if unseen:
                warnings.warn(f"{split_name}: {name} levels not seen in training, "
                              f"encoded as all-zero: {sorted(unseen)}", stacklevel=3)
            cols.append(block)
        X = np.hstack(cols)
        y = np.array([1.0 if fields[-1] == ">50K" else 0.0 for _, fields in rows])
        return Dataset(X, y, CLASSIFICATION, self.feature_names, self.feature_kinds,
                       dict(self.scaling))


def _level_name(level: str) -> str:
    return "missing" if level == "?" else level


def load_adult(train_path, test_path, train_fraction: float | None = 0.8, seed: int = 0,
               expected_rows: tuple[int, int] | None = None) -> tuple[Dataset, Dataset]:
    """(train, test) datasets from the raw UCI files.

    ``train_fraction`` keeps a seeded subset of ``adult.data`` as the training
    split (``None`` keeps every row). With ``expected_rows`` the realized
    (train, test) sizes are checked.
    """
    train_rows = read_adult_rows(train_path)
    test_rows = read_adult_rows(test_path)
    if train_fraction is not None:
        keep, _ = split_indices(len(train_rows), train_fraction, seed)
        train_rows = [train_rows[i] for i in keep]
    if not train_rows or not test_rows:
        raise DataError("empty adult split")
    enc = _AdultEncoder(train_rows)
    train = enc.transform(train_rows, "train")
    test = enc.transform(test_rows, "test")
    log.info("adult: %d train rows, %d test rows, %d encoded features",
             len(train), len(test), train.n_features)
    if expected_rows is not None and (len(train), len(test)) != tuple(expected_rows):
        raise DataError(f"adult row counts {(len(train), len(test))} != expected {tuple(expected_rows)}")
    return train, test


def adult_monotone_indices(dataset: Dataset) -> list[int]:
    return [dataset.feature_names.index(n) for n in ADULT_MONOTONE]


def check_adult_width(dataset: Dataset, expected: int = ADULT_EXPECTED_WIDTH) -> None:
    lo, hi = ADULT_WIDTH_TOLERANCE
    if dataset.n_features != expected or not lo <= dataset.n_features <= hi:
        raise DataError(f"adult encoding has {dataset.n_features} features, "
                        f"configured {expected} (tolerated range {lo}-{hi})")


# canonical CSV cache ---------------------------------------------------------

def write_dataset_csv(dataset: Dataset, path: str | os.PathLike) -> None:
    """CSV with a header row (feature names, then ``label``) plus a JSON sidecar."""
    header = ",".join([*dataset.feature_names, "label"])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row, label in zip(dataset.features, dataset.labels):
            fh.write(",".join(repr(float(v)) for v in row) + "," + repr(float(label)) + "\n")
    meta = {"task": dataset.task, "feature_kinds": dataset.feature_kinds,
            "scaling": {k: list(v) for k, v in dataset.scaling.items()}}
    with open(_meta_path(path), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _meta_path(path) -> str:
    return os.fspath(path) + ".meta.json"


def read_dataset_csv(path: str | os.PathLike, task: str | None = None) -> Dataset:
    """Read a canonical dataset CSV.

    The task comes from ``task``, else the sidecar, else it is inferred
    (labels all in {0, 1} means classification).
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"dataset not found: {path}")
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if len(header) < 2 or header[-1] != "label":
            raise DataError("dataset header must end with a 'label' column", 1)
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split(",")
            if len(parts) != len(header):
                raise DataError(f"expected {len(header)} fields, got {len(parts)}", lineno)
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise DataError(str(exc), lineno) from None
    if not rows:
        raise DataError(f"dataset {path} has no rows")
    arr = np.array(rows)
    meta = {}
    if os.path.exists(_meta_path(path)):
        with open(_meta_path(path), encoding="utf-8") as fh:
            meta = json.load(fh)
    labels = arr[:, -1]
    if task is None:
        task = meta.get("task")
    if task is None:
        task = CLASSIFICATION if np.all((labels == 0) | (labels == 1)) else REGRESSION
    return Dataset(arr[:, :-1], labels, task, header[:-1],
                   meta.get("feature_kinds", []),
                   {k: tuple(v) for k, v in meta.get("scaling", {}).items()})
