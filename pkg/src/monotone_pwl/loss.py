"""Point-wise monotonicity loss: hinge on negative divergence plus empirical risk.

For a batch of points the objective is::

    total = risk(f(X), y) + penalty_weight * sum_i max(0, -div(x_i))

where ``div(x_i)`` is the sum over monotone features j of
``direction_j * d f(x_i) / d x_j``. Non-increasing features carry
direction -1, so one hinge covers both cases.

The parameter gradient of the hinge term needs d/dtheta of an input
gradient; it is obtained by recording the input-gradient pass on the tape
(:func:`~monotone_pwl.autodiff.backward_as_graph`) and differentiating again.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, DataError
from .model import (
    Activation,
    MlpModel,
    add_param_inputs,
    flatten_gradient,
    input_gradients,
    param_names,
    record_scores,
    scores,
)

PROB_CLAMP = 1e-12
# clamping p to [1e-12, 1 - 1e-12] is clamping the score to +-LOGIT_CLAMP
LOGIT_CLAMP = float(np.log((1.0 - PROB_CLAMP) / PROB_CLAMP))


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, term: str, detail: str = ""):
        msg = f"non-finite gradient in the {term} term"
        super().__init__(f"{msg}: {detail}" if detail else msg)
        self.term = term


@dataclass(frozen=True)
class MonotoneFeature:
    index: int
    direction: int = 1
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.direction not in (1, -1):
            raise ConfigurationError(f"direction must be +1 or -1, got {self.direction}")
        if not self.low < self.high:
            raise ConfigurationError(
                f"feature {self.index}: sweep range needs low < high, got [{self.low}, {self.high})")


@dataclass(frozen=True)
class MonotoneSpec:
    """Monotone feature indices with direction and sweep range [low, high)."""

    entries: tuple[MonotoneFeature, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if not self.entries:
            raise ConfigurationError("monotone spec has no features")
        idx = [e.index for e in self.entries]
        if len(set(idx)) != len(idx):
            raise ConfigurationError(f"duplicate monotone feature indices {idx}")
        if min(idx) < 0:
            raise ConfigurationError(f"negative feature index in {idx}")

    @classmethod
    def from_data(cls, X, indices: Sequence[int], directions: Sequence[int] | None = None):
        """Sweep ranges default to the min and max of each column of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        directions = directions or [1] * len(indices)
        entries = []
        for k, d in zip(indices, directions):
            col = X[:, k]
            entries.append(MonotoneFeature(int(k), int(d), float(col.min()), float(col.max())))
        return cls(tuple(entries))

    @property
    def indices(self) -> list[int]:
        return [e.index for e in self.entries]

    def validate(self, n_features: int) -> None:
        bad = [i for i in self.indices if i >= n_features]
        if bad:
            raise ConfigurationError(f"monotone features {bad} out of range for {n_features} inputs")

    def direction_vector(self, n_features: int) -> np.ndarray:
        self.validate(n_features)
        v = np.zeros((n_features, 1))
        for e in self.entries:
            v[e.index, 0] = e.direction
        return v

    def flipped(self, index: int) -> "MonotoneSpec":
        return MonotoneSpec(tuple(
            MonotoneFeature(e.index, -e.direction, e.low, e.high) if e.index == index else e
            for e in self.entries))


@dataclass(frozen=True)
class LossBreakdown:
    empirical: float
    penalty: float
    total: float
    penalty_weight: float = 1.0


def _batch(model: MlpModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ConfigurationError(f"expected inputs with {model.input_dim} features, got {X.shape}")
    if X.shape[0] == 0:
        raise ConfigurationError("empty batch")
    return X


def _warn_relu(model: MlpModel) -> None:
    if model.hidden_activation is Activation.RELU:
        warnings.warn(
            "relu hidden units: input gradients are piecewise constant, so the "
            "penalty's parameter gradient is piecewise as well", RuntimeWarning, stacklevel=3)


def signed_divergences(model: MlpModel, X, spec: MonotoneSpec) -> np.ndarray:
    X = _batch(model, X)
    d = spec.direction_vector(model.input_dim)
    return (input_gradients(model, X) @ d)[:, 0]


def signed_divergence(model: MlpModel, x, spec: MonotoneSpec) -> float:
    return float(signed_divergences(model, x, spec)[0])


def penalty(model: MlpModel, X, spec: MonotoneSpec) -> float:
    """sum_i max(0, -div(x_i)) over the batch."""
    div = signed_divergences(model, X, spec)
    return float(np.maximum(-div, 0.0).sum())


def _check_labels(y, task: str, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape != (n,):
        raise ConfigurationError(f"expected {n} labels, got {y.size}")
    if task == "classification" and not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("classification labels must be 0 or 1")
    if task not in ("classification", "regression"):
        raise ConfigurationError(f"unknown task {task!r}")
    return y


def empirical_risk(model: MlpModel, X, y, task: str | None = None) -> float:
    """Mean squared error (regression) or mean cross-entropy (classification)."""
    X = _batch(model, X)
    task = task or model.task
    y = _check_labels(y, task, X.shape[0])
    s = scores(model, X)
    if task == "regression":
        return float(np.mean((s - y) ** 2))
    z = np.clip(s, -LOGIT_CLAMP, LOGIT_CLAMP)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def total_loss(model: MlpModel, X, y, spec: MonotoneSpec,
               penalty_weight: float = 1.0, task: str | None = None) -> LossBreakdown:
    if penalty_weight < 0:
        raise ConfigurationError(f"penalty_weight must be >= 0, got {penalty_weight}")
    emp = empirical_risk(model, X, y, task)
    pen = penalty(model, X, spec)
    return LossBreakdown(emp, pen, emp + penalty_weight * pen, penalty_weight)


# taped objective --------------------------------------------------------

def _record_risk(s: ad.Var, y: np.ndarray, task: str) -> ad.Var:
    tape = s.tape
    n = s.shape[0]
    yv = tape.const(y[:, None])
    if task == "regression":
        d = s - yv
        return ad.total(d * d) * (1.0 / n)
    z = ad.max0(s + LOGIT_CLAMP) - ad.max0(s - LOGIT_CLAMP) - LOGIT_CLAMP
    return ad.total(ad.softplus(z) - yv * z) * (1.0 / n)


def _record_penalty(tape: ad.Tape, seed: ad.Var, spec: MonotoneSpec, n_features: int):
    gtape = ad.backward_as_graph(tape, seed, wrt=["x"])
    dX = gtape.var(gtape.gradients["x"])
    div = dX @ gtape.const(spec.direction_vector(n_features))
    return gtape, ad.total(ad.max0(-div))


def record_objective(model: MlpModel, X, y, spec: MonotoneSpec | None,
                     risk_coef: float = 1.0, penalty_coef: float = 1.0,
                     task: str | None = None):
    """Record ``risk_coef * risk + penalty_coef * penalty`` on a fresh tape.

    Returns ``(tape, objective, risk, penalty)``; terms with a zero
    coefficient are not recorded at all (their node is ``None``).
    """
    X = _batch(model, X)
    task = task or model.task
    y = _check_labels(y, task, X.shape[0])
    tape = ad.Tape()
    xv = tape.input("x", X)
    layers = add_param_inputs(tape, model)
    s = record_scores(model, xv, layers)
    risk = pen = None
    if penalty_coef != 0.0:
        if spec is None:
            raise ConfigurationError("penalty requested without a monotone spec")
        _warn_relu(model)
        seed = ad.total(s)
        tape, pen = _record_penalty(tape, seed, spec, model.input_dim)
        s = tape.var(s.index)
    if risk_coef != 0.0:
        risk = _record_risk(s, y, task)
    terms = []
    if risk is not None:
        terms.append(risk if risk_coef == 1.0 else risk * risk_coef)
    if pen is not None:
        terms.append(pen if penalty_coef == 1.0 else pen * penalty_coef)
    if not terms:
        raise ConfigurationError("objective has no terms")
    obj = terms[0] if len(terms) == 1 else terms[0] + terms[1]
    return tape, obj, risk, pen


def objective_gradient(model: MlpModel, X, y, spec: MonotoneSpec | None,
                       risk_coef: float = 1.0, penalty_coef: float = 1.0,
                       task: str | None = None):
    """(flat gradient over theta, objective value, risk value, penalty value).

    Values of terms that were not recorded are reported as ``nan``.
    """
    try:
        tape, obj, risk, pen = record_objective(model, X, y, spec, risk_coef, penalty_coef, task)
        grads = ad.backward(tape, obj, wrt=param_names(model))
        flat = flatten_gradient(model, grads)
    except ad.NonFiniteValueError as exc:
        raise NonFiniteGradientError(_blame(model, X, y, spec, risk_coef, penalty_coef, task),
                                     str(exc)) from exc
    if not np.all(np.isfinite(flat)):
        raise NonFiniteGradientError(_blame(model, X, y, spec, risk_coef, penalty_coef, task))
    value = lambda v: float(v.value) if v is not None else float("nan")  # noqa: E731
    return flat, value(obj), value(risk), value(pen)


def _blame(model, X, y, spec, risk_coef, penalty_coef, task) -> str:
    """Name the first term whose gradient alone is non-finite."""
    for name, rc, pc in (("empirical", risk_coef, 0.0), ("penalty", 0.0, penalty_coef)):
        if rc == 0.0 and pc == 0.0:
            continue
        try:
            tape, obj, _, _ = record_objective(model, X, y, spec, rc, pc, task)
            grads = ad.backward(tape, obj, wrt=param_names(model))
            if not np.all(np.isfinite(flatten_gradient(model, grads))):
                return name
        except ad.NonFiniteValueError:
            return name
    return "combined"


def parameter_gradient(model: MlpModel, X, y, spec: MonotoneSpec,
                       penalty_weight: float = 1.0, task: str | None = None) -> np.ndarray:
    """Gradient over theta of ``total_loss(...).total``."""
    if penalty_weight < 0:
        raise ConfigurationError(f"penalty_weight must be >= 0, got {penalty_weight}")
    return objective_gradient(model, X, y, spec, 1.0, penalty_weight, task)[0]


def penalty_gradient(model: MlpModel, X, spec: MonotoneSpec) -> np.ndarray:
    X = _batch(model, X)
    y = np.zeros(X.shape[0])
    return objective_gradient(model, X, y, spec, 0.0, 1.0, "regression")[0]


def per_point_penalties(model: MlpModel, X, spec: MonotoneSpec) -> np.ndarray:
    return np.maximum(-signed_divergences(model, X, spec), 0.0)


def parse_monotone(text: str, feature_names: Iterable[str] | None = None) -> list[tuple[int, int]]:
    """Parse ``"name_or_index[:+1|-1],..."`` into (index, direction) pairs."""
    names = list(feature_names) if feature_names is not None else None
    out = []
    for item in filter(None, (t.strip() for t in text.split(","))):
        key, _, sign = item.rpartition(":") if ":" in item else (item, "", "+1")
        if sign not in ("+1", "1", "-1", "+", "-"):
            raise ConfigurationError(f"bad direction in {item!r}")
        direction = -1 if sign.startswith("-") else 1
        if names is not None and key in names:
            idx = names.index(key)
        else:
            try:
                idx = int(key)
            except ValueError:
                raise ConfigurationError(f"unknown feature {key!r}") from None
        out.append((idx, direction))
    if not out:
        raise ConfigurationError("empty monotone feature list")
    return out


def spec_to_dict(spec: MonotoneSpec, feature_names: Sequence[str] | None = None) -> dict:
    entries = []
    for e in spec.entries:
        item = {"index": e.index, "direction": e.direction, "low": e.low, "high": e.high}
        if feature_names is not None:
            item["name"] = feature_names[e.index]
        entries.append(item)
    return {"entries": entries}


def spec_from_dict(obj: dict) -> MonotoneSpec:
    try:
        return MonotoneSpec(tuple(
            MonotoneFeature(int(e["index"]), int(e["direction"]), float(e["low"]), float(e["high"]))
            for e in obj["entries"]))
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed monotone spec: {exc}") from None
