"""Softmax-regression model shared by all federated participants.

The global model is a single linear layer with bias over flattened
inputs, trained with mini-batch gradient descent on cross-entropy.
Weights travel as a flat vector plus shape descriptor so aggregation
stays model-agnostic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .behaviors import AdversaryBehavior, BehaviorKind, normalize


class TrainingDivergenceError(RuntimeError):
    """Raised when a client's local training produces non-finite weights."""


@dataclass(frozen=True, eq=False)
class ModelWeights:
    """Flat parameter vector: n_features*n_classes weights then n_classes biases."""

    values: np.ndarray
    n_features: int
    n_classes: int

    def __post_init__(self):
        expected = self.n_features * self.n_classes + self.n_classes
        values = np.asarray(self.values, dtype=np.float64).reshape(expected)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def matrix(self) -> np.ndarray:
        return self.values[: self.n_features * self.n_classes].reshape(
            self.n_features, self.n_classes
        )

    @property
    def bias(self) -> np.ndarray:
        return self.values[self.n_features * self.n_classes :]


def zeros(n_features: int, n_classes: int) -> ModelWeights:
    size = n_features * n_classes + n_classes
    return ModelWeights(values=np.zeros(size), n_features=n_features, n_classes=n_classes)


def _logits(weights: ModelWeights, X: np.ndarray) -> np.ndarray:
    return X @ weights.matrix + weights.bias


def predict_proba(weights: ModelWeights, X: np.ndarray) -> np.ndarray:
    z = _logits(weights, X)
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(weights: ModelWeights, X: np.ndarray, y: np.ndarray) -> float:
    p = predict_proba(weights, X)
    picked = np.clip(p[np.arange(len(y)), y], 1e-12, None)
    return float(-np.log(picked).mean())


def gradient(weights: ModelWeights, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Analytic cross-entropy gradient, flat like the weight vector."""
    n = len(y)
    delta = predict_proba(weights, X)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grad_matrix = X.T @ delta
    grad_bias = delta.sum(axis=0)
    return np.concatenate([grad_matrix.ravel(), grad_bias])


def _flip_labels(y: np.ndarray, fraction: float, n_classes: int, rng) -> np.ndarray:
    """Send a fraction of labels one class over, a cyclic permutation."""
    flipped = y.copy()
    n_flip = int(round(min(fraction, 1.0) * len(y)))
    if n_flip > 0:
        idx = rng.choice(len(y), size=n_flip, replace=False)
        flipped[idx] = (flipped[idx] + 1) % n_classes
    return flipped


def local_train(
    weights: ModelWeights,
    X: np.ndarray,
    y: np.ndarray,
    epochs: int,
    learning_rate: float,
    behavior=None,
    rng: Optional[np.random.Generator] = None,
    batch_size: int = 32,
    device_id: str = "?",
) -> ModelWeights:
    """Run local mini-batch gradient descent, honoring adversary behaviors.

    Label flippers corrupt a fraction of their labels before training;
    random-weight clients skip training entirely and return the incoming
    weights perturbed by Gaussian noise scaled by intensity. Resource
    behaviors do not touch training. Zero epochs returns the weights
    unchanged.
    """
    if not np.all(np.isfinite(weights.values)):
        raise TrainingDivergenceError(f"client {device_id}: incoming weights not finite")
    rng = rng or np.random.default_rng()
    behaviors = normalize(behavior)

    for b in behaviors:
        if b.kind is BehaviorKind.RANDOM_WEIGHTS:
            noise = rng.standard_normal(weights.values.shape) * b.intensity
            return ModelWeights(
                values=weights.values + noise,
                n_features=weights.n_features,
                n_classes=weights.n_classes,
            )

    labels = y
    for b in behaviors:
        if b.kind is BehaviorKind.LABEL_FLIP:
            labels = _flip_labels(labels, b.intensity, weights.n_classes, rng)

    values = weights.values.copy()
    current = ModelWeights(values=values, n_features=weights.n_features, n_classes=weights.n_classes)
    n = len(labels)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            step = gradient(current, X[batch], labels[batch])
            current = ModelWeights(
                values=current.values - learning_rate * step,
                n_features=current.n_features,
                n_classes=current.n_classes,
            )
    if not np.all(np.isfinite(current.values)):
        raise TrainingDivergenceError(f"client {device_id}: training diverged")
    return current


def fedavg(updates: Sequence[Tuple[ModelWeights, int]]) -> ModelWeights:
    """Sample-count-weighted coordinate mean of client weight vectors."""
    if not updates:
        raise ValueError("fedavg requires at least one update")
    first, _ = updates[0]
    for w, n_samples in updates:
        if (w.n_features, w.n_classes) != (first.n_features, first.n_classes):
            raise ValueError(
                f"shape mismatch in aggregation: ({w.n_features}, {w.n_classes}) "
                f"vs ({first.n_features}, {first.n_classes})"
            )
        if n_samples <= 0:
            raise ValueError("update sample counts must be positive")
    total = sum(n for _, n in updates)
    stacked = np.stack([w.values for w, _ in updates])
    coeffs = np.array([n / total for _, n in updates])
    return ModelWeights(
        values=coeffs @ stacked, n_features=first.n_features, n_classes=first.n_classes
    )


def evaluate(weights: ModelWeights, X: np.ndarray, y: np.ndarray) -> float:
    """Argmax-class accuracy on a test set."""
    if len(y) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    predictions = predict_proba(weights, X).argmax(axis=1)
    return float((predictions == y).mean())
