"""Stochastic classifier model and classification accuracy metrics.

Detection behavior is summarized by a row-stochastic confusion matrix plus a
per-cell bounded confidence distribution: prediction quality is preserved as
the quantities the sorting metrics consume, with no image processing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class WasteClass(enum.Enum):
    FOOD_WASTE = 0
    METAL = 1
    PAPER = 2
    PLASTIC = 3


N_CLASSES = len(WasteClass)
BIODEGRADABLE = (WasteClass.FOOD_WASTE,)

_ROW_SUM_TOL = 1e-12


class ModelError(ValueError):
    """Malformed classifier model."""


class MetricError(ValueError):
    """Metric requested on an empty outcome sequence."""


@dataclass(frozen=True)
class ClassifierModel:
    """Confusion rows condition predicted class on true class.

    confidence_beta holds (alpha, beta) per (true, predicted) cell; defaults
    concentrate correct predictions near high confidence and mistakes lower,
    so confidence thresholding meaningfully filters errors.
    """

    confusion: np.ndarray                      # (4, 4) row-stochastic
    confidence_beta: np.ndarray                # (4, 4, 2)
    detect_prob: float = 1.0
    seed: int = 0

    def __post_init__(self):
        confusion = np.asarray(self.confusion, dtype=float)
        betas = np.asarray(self.confidence_beta, dtype=float)
        if confusion.shape != (N_CLASSES, N_CLASSES):
            raise ModelError(f"confusion must be {N_CLASSES}x{N_CLASSES}")
        if np.any(confusion < 0):
            raise ModelError("confusion entries must be >= 0")
        rows = confusion.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > _ROW_SUM_TOL):
            raise ModelError(f"confusion rows must sum to 1, got {rows.tolist()}")
        if betas.shape != (N_CLASSES, N_CLASSES, 2) or np.any(betas <= 0):
            raise ModelError("confidence_beta must be positive (4, 4, 2) parameters")
        if not (0.0 <= self.detect_prob <= 1.0):
            raise ModelError("detect_prob must be in [0, 1]")
        object.__setattr__(self, "confusion", confusion)
        object.__setattr__(self, "confidence_beta", betas)


def diagonal_model(diagonal: float = 0.98, correct_beta=(8.0, 2.0),
                   incorrect_beta=(2.0, 4.0), detect_prob: float = 1.0,
                   seed: int = 0) -> ClassifierModel:
    """Uniform-off-diagonal model with the given per-class correct rate."""
    if not (0.0 <= diagonal <= 1.0):
        raise ModelError("diagonal must be in [0, 1]")
    off = (1.0 - diagonal) / (N_CLASSES - 1)
    confusion = np.full((N_CLASSES, N_CLASSES), off)
    np.fill_diagonal(confusion, diagonal)
    betas = np.empty((N_CLASSES, N_CLASSES, 2))
    betas[:, :] = incorrect_beta
    for i in range(N_CLASSES):
        betas[i, i] = correct_beta
    return ClassifierModel(confusion, betas, detect_prob, seed)


@dataclass(frozen=True)
class Detection:
    true_class: WasteClass
    predicted_class: WasteClass | None
    confidence: float
    pixel_pos: tuple[float, float] = (0.0, 0.0)
    accepted: bool = False

    def __post_init__(self):
        if self.accepted and self.predicted_class is None:
            raise ModelError("accepted detection must carry a predicted class")


def classify(model: ClassifierModel, true_class: WasteClass, threshold: float,
             rng: np.random.Generator,
             pixel_pos: tuple[float, float] = (0.0, 0.0)) -> Detection:
    """Sample one detection outcome for an object of the given true class."""
    if not (0.0 <= threshold <= 1.0):
        raise ModelError("threshold must be in [0, 1]")
    if rng.random() >= model.detect_prob:
        return Detection(true_class, None, 0.0, pixel_pos, accepted=False)
    row = model.confusion[true_class.value]
    predicted = WasteClass(int(rng.choice(N_CLASSES, p=row)))
    a, b = model.confidence_beta[true_class.value, predicted.value]
    confidence = float(rng.beta(a, b))
    return Detection(true_class, predicted, confidence, pixel_pos,
                     accepted=confidence >= threshold)


def classify_batch(model: ClassifierModel, true_idx: np.ndarray, threshold: float,
                   rng: np.random.Generator) -> dict:
    """Vectorized sampling for an object stream.

    All draws happen for every object regardless of detection outcome, so the
    sampled set is identical across thresholds for a fixed generator state.
    """
    if not (0.0 <= threshold <= 1.0):
        raise ModelError("threshold must be in [0, 1]")
    n = len(true_idx)
    detected = rng.random(n) < model.detect_prob
    cum = np.cumsum(model.confusion, axis=1)[true_idx]
    u = rng.random(n)
    predicted = (u[:, None] > cum).sum(axis=1)
    a = model.confidence_beta[true_idx, predicted, 0]
    b = model.confidence_beta[true_idx, predicted, 1]
    confidence = rng.beta(a, b)
    accepted = detected & (confidence >= threshold)
    return {
        "detected": detected,
        "predicted": predicted,
        "confidence": confidence,
        "accepted": accepted,
    }


@dataclass(frozen=True)
class ClassCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / (self.tp + self.tn + self.fp + self.fn)


@dataclass(frozen=True)
class AccuracyReport:
    overall: float
    per_class: dict = field(default_factory=dict)
    n_outcomes: int = 0


def accuracy(outcomes: Iterable[tuple[WasteClass, WasteClass]]) -> AccuracyReport:
    """Correct/total over (true, predicted) pairs plus one-vs-rest counts.

    The overall number is the multiclass proportion of correctly classified
    samples; per-class TP/TN/FP/FN make the same ratio computable one class
    at a time.
    """
    pairs = list(outcomes)
    if not pairs:
        raise MetricError("accuracy of an empty outcome sequence is undefined")
    correct = sum(1 for t, p in pairs if t == p)
    per_class = {}
    for cls in WasteClass:
        tp = sum(1 for t, p in pairs if t == cls and p == cls)
        fp = sum(1 for t, p in pairs if t != cls and p == cls)
        fn = sum(1 for t, p in pairs if t == cls and p != cls)
        tn = len(pairs) - tp - fp - fn
        per_class[cls] = ClassCounts(tp, tn, fp, fn)
    return AccuracyReport(overall=correct / len(pairs), per_class=per_class,
                          n_outcomes=len(pairs))


def class_mix_array(mix: dict | Sequence[float]) -> np.ndarray:
    """Normalize a class-mix spec (dict by name or 4-sequence) to probabilities."""
    if isinstance(mix, dict):
        probs = np.array([float(mix[cls.name.lower()]) for cls in WasteClass])
    else:
        probs = np.asarray(mix, dtype=float)
    if probs.shape != (N_CLASSES,) or np.any(probs < 0) or probs.sum() == 0:
        raise ModelError("class mix needs 4 non-negative weights")
    return probs / probs.sum()
