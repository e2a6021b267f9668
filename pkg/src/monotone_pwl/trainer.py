"""Minibatch SGD on empirical risk plus the monotonicity penalty.

Two regimes:

``weighted``
    every step descends ``mean risk + penalty_weight * mean hinge`` over the
    minibatch.
``switching``
    steps alternate between phases: ``switch_frequency`` minibatches on the
    risk alone, then ``penalty_switch_frequency`` minibatches on the penalty
    alone, repeating across epoch boundaries.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ConfigurationError
from .loss import MonotoneSpec, NonFiniteGradientError, empirical_risk, objective_gradient, penalty
from .metrics import DEFAULT_RESOLUTION, monotonicity_metric
from .model import MlpModel

log = logging.getLogger(__name__)

WEIGHTED = "weighted"
SWITCHING = "switching"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 64
    epochs: int = 50
    penalty_weight: float = 1.0
    regime: str = WEIGHTED
    switch_frequency: int | None = None
    penalty_switch_frequency: int | None = None
    seed: int = 0
    shuffle: bool = True
    probe_size: int = 500
    resolution: int = DEFAULT_RESOLUTION

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.penalty_weight < 0:
            raise ConfigurationError("penalty_weight must be >= 0")
        if self.regime not in (WEIGHTED, SWITCHING):
            raise ConfigurationError(f"unknown regime {self.regime!r}")
        if self.regime == SWITCHING:
            if self.switch_frequency is None or self.switch_frequency < 1:
                raise ConfigurationError("switching regime needs switch_frequency >= 1")
            if self.penalty_switch_frequency is not None and self.penalty_switch_frequency < 1:
                raise ConfigurationError("penalty_switch_frequency must be >= 1")
        elif self.switch_frequency is not None or self.penalty_switch_frequency is not None:
            raise ConfigurationError("switch frequencies only apply to the switching regime")
        if self.probe_size < 1:
            raise ConfigurationError("probe_size must be >= 1")

    @property
    def penalty_phase_length(self) -> int:
        return self.penalty_switch_frequency or self.switch_frequency


@dataclass
class EpochRecord:
    epoch: int
    empirical: float
    penalty: float  # mean hinge per training example
    mk: dict[int, float]
    seconds: float  # optimisation time only


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    train_seconds: float = 0.0
    total_seconds: float = 0.0

    def write_csv(self, path: str | os.PathLike) -> None:
        keys = sorted(self.records[0].mk) if self.records else []
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(["epoch", "empirical", "penalty",
                               *[f"mk_{k}" for k in keys], "seconds"]) + "\n")
            for r in self.records:
                vals = [str(r.epoch), repr(r.empirical), repr(r.penalty),
                        *[repr(r.mk[k]) for k in keys], repr(r.seconds)]
                fh.write(",".join(vals) + "\n")


class TrainingDivergedError(FloatingPointError):
    """Raised when the loss or parameters become non-finite.

    ``model`` holds the last parameters that were finite.
    """

    def __init__(self, message: str, model: MlpModel, log: TrainLog, step: int):
        super().__init__(message)
        self.model = model
        self.log = log
        self.step = step


def minibatch_iterator(n: int, batch_size: int, seed=0, shuffle: bool = True) -> list[np.ndarray]:
    """Index batches covering ``range(n)`` once; the last batch may be short."""
    if batch_size < 1:
        raise ConfigurationError("batch_size must be >= 1")
    if n < 1:
        raise ConfigurationError("cannot batch an empty dataset")
    if batch_size > n:
        raise ConfigurationError(f"batch_size {batch_size} exceeds dataset size {n}")
    order = np.random.default_rng(seed).permutation(n) if shuffle else np.arange(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def sgd_step(theta: np.ndarray, grad: np.ndarray, learning_rate: float) -> np.ndarray:
    return theta - learning_rate * grad


def _step_coefficients(config: TrainConfig, step: int, batch_len: int) -> tuple[float, float]:
    pen = config.penalty_weight / batch_len
    if config.regime == WEIGHTED:
        return 1.0, pen
    period = config.switch_frequency + config.penalty_phase_length
    if step % period < config.switch_frequency:
        return 1.0, 0.0
    return 0.0, pen


def train(model: MlpModel, dataset: Dataset, spec: MonotoneSpec | None,
          config: TrainConfig = TrainConfig()) -> tuple[MlpModel, TrainLog]:
    """Train a copy of ``model``; the input model is not modified."""
    t_start = time.perf_counter()
    n = len(dataset)
    if n == 0:
        raise ConfigurationError("empty dataset")
    if dataset.n_features != model.input_dim:
        raise ConfigurationError(
            f"dataset has {dataset.n_features} features, model expects {model.input_dim}")
    if dataset.task != model.task:
        raise ConfigurationError(f"{dataset.task} data with a {model.task} model")
    if spec is not None:
        spec.validate(model.input_dim)
    elif config.penalty_weight > 0:
        raise ConfigurationError("penalty_weight > 0 needs a monotone spec")
    batch_size = min(config.batch_size, n)
    X, y = dataset.features, dataset.labels
    probe_rng = np.random.default_rng([config.seed, 1])
    probe = X[np.sort(probe_rng.choice(n, size=min(config.probe_size, n), replace=False))]

    current = model.copy()
    theta = current.flat_params()
    train_log = TrainLog()
    step = 0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        batches = minibatch_iterator(n, batch_size, seed=[config.seed, 0, epoch],
                                     shuffle=config.shuffle)
        for idx in batches:
            risk_coef, pen_coef = _step_coefficients(config, step, idx.size)
            step += 1
            if risk_coef == 0.0 and pen_coef == 0.0:
                continue
            try:
                grad = objective_gradient(current, X[idx], y[idx], spec,
                                          risk_coef, pen_coef, dataset.task)[0]
            except NonFiniteGradientError as exc:
                raise TrainingDivergedError(f"step {step}: {exc}", current, train_log, step) from exc
            new_theta = sgd_step(theta, grad, config.learning_rate)
            if not np.all(np.isfinite(new_theta)):
                raise TrainingDivergedError(f"step {step}: parameters became non-finite",
                                            current, train_log, step)
            theta = new_theta
            current = current.with_flat_params(theta)
        seconds = time.perf_counter() - t0
        train_log.train_seconds += seconds
        record = _epoch_record(epoch, current, dataset, spec, probe, config, seconds)
        if not (np.isfinite(record.empirical) and np.isfinite(record.penalty)):
            raise TrainingDivergedError(f"epoch {epoch}: non-finite loss", current, train_log, step)
        train_log.records.append(record)
        log.debug("epoch %d empirical %.6g penalty %.6g", epoch, record.empirical, record.penalty)
    train_log.total_seconds = time.perf_counter() - t_start
    return current, train_log


def _epoch_record(epoch, model, dataset, spec, probe, config, seconds) -> EpochRecord:
    emp = empirical_risk(model, dataset.features, dataset.labels, dataset.task)
    if spec is None:
        return EpochRecord(epoch, emp, 0.0, {}, seconds)
    pen = penalty(model, dataset.features, spec) / len(dataset)
    mk = monotonicity_metric(model, probe, spec, config.resolution).mk
    return EpochRecord(epoch, emp, pen, mk, seconds)
