"""Least-squares response-surface models scored by the coefficient of determination.

Features are standardized internally before the normal-equation solve (with a
small fixed ridge floor for conditioning) and coefficients are mapped back to
raw units, so callers never see the scaling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

LINEAR = "linear"
QUADRATIC = "quadratic_with_interactions"
FEATURE_MAPS = (LINEAR, QUADRATIC)

RIDGE_FLOOR = 1e-10
_RANK_RTOL = 1e-8


class FitError(ValueError):
    """Underdetermined or rank-deficient fit."""


class InputError(ValueError):
    """Bad prediction input or metric arguments."""


class UndefinedMetricError(ValueError):
    """R^2 is undefined: the observed values are constant."""


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray  # (n, d) raw features
    targets: np.ndarray  # (n,) observed values

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        y = np.asarray(self.targets, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise InputError(f"{X.shape[0]} input rows vs {y.shape[0]} targets")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InputError("dataset entries must be finite")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "targets", y)

    @property
    def n_rows(self) -> int:
        return self.inputs.shape[0]


def expanded_width(n_raw: int, feature_map: str) -> int:
    if feature_map == LINEAR:
        return n_raw
    if feature_map == QUADRATIC:
        return n_raw + n_raw * (n_raw + 1) // 2
    raise InputError(f"unknown feature map {feature_map!r}")


def expand_features(X: np.ndarray, feature_map: str) -> np.ndarray:
    """Raw rows -> expanded design columns (no intercept column).

    Quadratic order: x_1..x_d, then products x_i*x_j for i <= j in row-major
    index order.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if feature_map == LINEAR:
        return X
    if feature_map == QUADRATIC:
        d = X.shape[1]
        cols = [X]
        for i in range(d):
            for j in range(i, d):
                cols.append((X[:, i] * X[:, j])[:, None])
        return np.hstack(cols)
    raise InputError(f"unknown feature map {feature_map!r}")


def _raw_width_from_expanded(p: int, feature_map: str) -> int:
    if feature_map == LINEAR:
        return p
    # p = d + d(d+1)/2  =>  d = (-3 + sqrt(9 + 8p)) / 2
    d = (-3 + math.isqrt(9 + 8 * p)) // 2
    if expanded_width(d, feature_map) != p:
        raise InputError(f"{p} expanded features do not match map {feature_map!r}")
    return d


@dataclass(frozen=True)
class RegressionModel:
    feature_map: str
    coefficients: np.ndarray  # intercept first, then one weight per expanded feature
    train_r2: float
    ridge: float = RIDGE_FLOOR

    def __post_init__(self):
        object.__setattr__(
            self, "coefficients", np.asarray(self.coefficients, dtype=float).ravel()
        )
        if self.feature_map not in FEATURE_MAPS:
            raise InputError(f"unknown feature map {self.feature_map!r}")

    @property
    def n_raw_features(self) -> int:
        return _raw_width_from_expanded(len(self.coefficients) - 1, self.feature_map)


def fit(data: Dataset, feature_map: str = QUADRATIC, ridge: float = RIDGE_FLOOR) -> RegressionModel:
    """Least-squares fit of the expanded feature map; raises on degeneracy."""
    X, y = data.inputs, data.targets
    n, d = X.shape
    p = expanded_width(d, feature_map)
    if n < p + 1:
        raise FitError(f"underdetermined: {n} rows for {p + 1} coefficients")
    Z = expand_features(X, feature_map)
    mu = Z.mean(axis=0)
    sd = Z.std(axis=0)
    constant = np.flatnonzero(sd == 0.0)
    if constant.size:
        raise FitError(
            f"rank-deficient design: expanded columns {constant.tolist()} are constant"
        )
    Zs = (Z - mu) / sd
    singular = np.linalg.svd(Zs, compute_uv=False)
    if singular[-1] <= _RANK_RTOL * singular[0]:
        raise FitError(
            "rank-deficient design: collinear expanded columns "
            f"{_collinear_columns(Zs).tolist()}"
        )
    y_mean = y.mean()
    gram = Zs.T @ Zs + ridge * np.eye(p)
    beta_std = np.linalg.solve(gram, Zs.T @ (y - y_mean))
    beta = beta_std / sd
    intercept = y_mean - float(beta @ mu)
    coefficients = np.concatenate(([intercept], beta))
    predictions = intercept + Z @ beta
    try:
        train_r2 = r2_score(y, predictions)
    except UndefinedMetricError as exc:
        raise FitError(f"constant targets: {exc}") from exc
    return RegressionModel(feature_map, coefficients, float(train_r2), ridge)


def _collinear_columns(Zs: np.ndarray) -> np.ndarray:
    """Greedy pass naming columns that do not increase design rank."""

    def rank(cols: list[int]) -> int:
        s = np.linalg.svd(Zs[:, cols], compute_uv=False)
        return int(np.sum(s > _RANK_RTOL * s[0]))

    kept: list[int] = []
    collinear: list[int] = []
    for j in range(Zs.shape[1]):
        if rank(kept + [j]) > len(kept):
            kept.append(j)
        else:
            collinear.append(j)
    return np.array(collinear, dtype=int)


def predict(model: RegressionModel, x: Sequence[float] | np.ndarray) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != model.n_raw_features:
        raise InputError(f"expected {model.n_raw_features} features, got {x.size}")
    z = expand_features(x[None, :], model.feature_map)[0]
    return float(model.coefficients[0] + z @ model.coefficients[1:])


def predict_many(model: RegressionModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_raw_features:
        raise InputError(f"expected {model.n_raw_features} features, got {X.shape[1]}")
    Z = expand_features(X, model.feature_map)
    return model.coefficients[0] + Z @ model.coefficients[1:]


def r2_score(observed: Sequence[float] | np.ndarray, predicted: Sequence[float] | np.ndarray) -> float:
    """1 - (residual sum of squares) / (total sum of squares).

    May be negative for predictors worse than the mean. Errors out rather
    than silently returning 0 or 1 when the observed values are constant.
    """
    y = np.asarray(observed, dtype=float).ravel()
    yhat = np.asarray(predicted, dtype=float).ravel()
    if y.size != yhat.size:
        raise InputError(f"length mismatch: {y.size} observed vs {yhat.size} predicted")
    if y.size < 2:
        raise InputError("need at least 2 samples")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(yhat))):
        raise InputError("observed and predicted must be finite")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedMetricError("observed values are constant; R^2 undefined")
    ss_res = float(np.sum((y - yhat) ** 2))
    return 1.0 - ss_res / ss_tot


def model_to_json(model: RegressionModel) -> str:
    return json.dumps(
        {
            "feature_map": model.feature_map,
            "coefficients": model.coefficients.tolist(),
            "train_r2": model.train_r2,
        },
        sort_keys=True,
    )


def model_from_json(text: str) -> RegressionModel:
    raw = json.loads(text)
    return RegressionModel(
        feature_map=raw["feature_map"],
        coefficients=np.array(raw["coefficients"], dtype=float),
        train_r2=float(raw["train_r2"]),
    )


def save_model(model: RegressionModel, path: str | Path) -> None:
    Path(path).write_text(model_to_json(model) + "\n")


def load_model(path: str | Path) -> RegressionModel:
    return model_from_json(Path(path).read_text())


def dataset_from_telemetry(run, input_channels: Sequence[str], target_channel: str,
                           t_from: float = 0.0, t_to: float = math.inf) -> Dataset:
    """Build a Dataset by aligning channels on shared sample times.

    Rows are formed at timestamps where every input channel and the target
    have an ok-quality sample inside [t_from, t_to].
    """
    per_channel: dict[str, dict[float, float]] = {}
    for ch in [*input_channels, target_channel]:
        per_channel[ch] = {
            r.t_min: r.value
            for r in run.read_window([ch], t_from, t_to)
            if r.quality == "ok"
        }
    shared = set(per_channel[target_channel])
    for ch in input_channels:
        shared &= set(per_channel[ch])
    times = sorted(shared)
    if not times:
        raise InputError("no shared sample times across requested channels")
    X = np.array([[per_channel[ch][t] for ch in input_channels] for t in times])
    y = np.array([per_channel[target_channel][t] for t in times])
    return Dataset(X, y)
