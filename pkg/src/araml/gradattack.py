"""Gradient evasion attacks on linear (logistic) classifiers.

Restricting to linear models keeps every gradient analytically checkable:
the single-step signed update, the projected iterative ascent and the
min-max adversarial training loop all run against the exact logistic loss
and its closed-form input gradient.  The attacker's objective is the
negation of the defender's loss, so attacks ASCEND the defender loss.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError, NumericError, ParameterError
from .rng import SeededRng

__all__ = [
    "LinearModel",
    "PerturbationBudget",
    "loss_and_gradient",
    "fgsm",
    "pgd",
    "adversarial_training",
    "train_logistic",
    "make_margin_dataset",
    "accuracy",
]


@dataclass(frozen=True)
class LinearModel:
    """Logistic classifier: p(y=+1 | x) = sigmoid(w.x + b)."""

    weights: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1:
            raise DimensionError("weights must be a vector")
        if not (np.all(np.isfinite(w)) and np.isfinite(self.bias)):
            raise ParameterError("model parameters must be finite")
        object.__setattr__(self, "weights", w)

    def margin(self, X: np.ndarray) -> np.ndarray:
        return np.atleast_2d(X) @ self.weights + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Labels in {-1, +1}; the boundary itself maps to +1."""
        return np.where(self.margin(X) >= 0, 1, -1)


@dataclass(frozen=True)
class PerturbationBudget:
    """Attack budget: norm ('linf' or 'l2'), radius, PGD schedule."""

    norm: str = "linf"
    epsilon: float = 0.1
    steps: int = 10
    step_size: float | None = None  # defaults to epsilon / steps

    def __post_init__(self):
        if self.norm not in ("linf", "l2"):
            raise ParameterError(f"unknown norm {self.norm!r}")
        if self.epsilon < 0:
            raise ParameterError("epsilon must be non-negative")
        if self.steps < 1:
            raise ParameterError("steps must be >= 1")
        if self.step_size is not None and self.step_size <= 0:
            raise ParameterError("step_size must be positive")

    @property
    def effective_step(self) -> float:
        return self.step_size if self.step_size is not None else self.epsilon / self.steps


def _sigmoid(z):
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def loss_and_gradient(model: LinearModel, x: np.ndarray, y: int):
    """Logistic loss log(1 + exp(-y (w.x + b))) and its input gradient."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite input")
    if x.shape != model.weights.shape:
        raise DimensionError(
            f"input dim {x.shape} != weight dim {model.weights.shape}"
        )
    if y not in (-1, 1):
        raise ParameterError(f"label must be -1 or +1, got {y!r}")
    z = float(model.weights @ x + model.bias)
    m = -y * z
    # log(1 + e^m) computed stably
    loss = float(np.logaddexp(0.0, m))
    grad = -y * _sigmoid(np.array([m]))[0] * model.weights
    return loss, grad


def _project(delta: np.ndarray, budget: PerturbationBudget) -> np.ndarray:
    if budget.norm == "linf":
        return np.clip(delta, -budget.epsilon, budget.epsilon)
    norm = float(np.linalg.norm(delta))
    if norm > budget.epsilon and norm > 0:
        return delta * (budget.epsilon / norm)
    return delta


def _ascent_direction(grad: np.ndarray, norm: str) -> np.ndarray:
    if norm == "linf":
        return np.sign(grad)
    n = float(np.linalg.norm(grad))
    if n == 0.0:
        return np.zeros_like(grad)
    return grad / n


def fgsm(model: LinearModel, x: np.ndarray, y: int,
         budget: PerturbationBudget) -> np.ndarray:
    """Single signed-gradient step increasing the defender loss.

    Requires the l-infinity budget; the perturbation saturates it exactly
    on every coordinate with a nonzero gradient.
    """
    if budget.norm != "linf":
        raise ParameterError("fgsm is the l-infinity single-step update")
    _, grad = loss_and_gradient(model, x, y)
    return np.asarray(x, dtype=float) + budget.epsilon * np.sign(grad)


def pgd(model: LinearModel, x: np.ndarray, y: int,
        budget: PerturbationBudget, box: tuple | None = None) -> np.ndarray:
    """Projected gradient ascent on the defender loss within the budget.

    Steps move along the sign (linf) or normalized (l2) gradient and are
    projected back onto the epsilon-ball around x; an optional box
    constraint additionally clips into [lo, hi].
    """
    x = np.asarray(x, dtype=float)
    x_t = x.copy()
    step = budget.effective_step
    for _ in range(budget.steps):
        _, grad = loss_and_gradient(model, x_t, y)
        x_t = x_t + step * _ascent_direction(grad, budget.norm)
        x_t = x + _project(x_t - x, budget)
        if box is not None:
            x_t = np.clip(x_t, box[0], box[1])
    return x_t


def attack_batch(model, X, y, budget, method="pgd") -> np.ndarray:
    attack = fgsm if method == "fgsm" else pgd
    return np.stack([attack(model, xi, int(yi), budget) for xi, yi in zip(X, y)])


# ---------------------------------------------------------------------------
# Training


def _batch_loss_grads(model: LinearModel, X, y):
    z = X @ model.weights + model.bias
    m = -y * z
    losses = np.logaddexp(0.0, m)
    s = _sigmoid(m)
    coeff = -y * s  # dloss/dz per instance
    grad_w = X.T @ coeff / len(X)
    grad_b = float(coeff.mean())
    return float(losses.mean()), grad_w, grad_b


def train_logistic(
    X: np.ndarray,
    y: np.ndarray,
    epochs: int = 100,
    learning_rate: float = 0.5,
    rng: SeededRng | None = None,
    batch_size: int | None = None,
) -> LinearModel:
    """Plain logistic-regression training by (mini-batch) gradient descent."""
    return adversarial_training(
        X, y,
        budget=PerturbationBudget(norm="linf", epsilon=0.0, steps=1),
        epochs=epochs, learning_rate=learning_rate, rng=rng,
        batch_size=batch_size,
    )


def adversarial_training(
    X: np.ndarray,
    y: np.ndarray,
    budget: PerturbationBudget,
    epochs: int = 100,
    learning_rate: float = 0.5,
    rng: SeededRng | None = None,
    batch_size: int | None = None,
) -> LinearModel:
    """Min-max training: parameter descent on PGD-perturbed minibatches.

    With epsilon = 0 this reduces to standard logistic training under the
    same seed.  Raises on divergence.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if len(X) == 0:
        raise ParameterError("training data must be nonempty")
    if set(np.unique(y)) - {-1, 1}:
        raise ParameterError("labels must be -1/+1")
    rng = rng or SeededRng(0)
    n, dim = X.shape
    model = LinearModel(weights=np.zeros(dim), bias=0.0)
    batch_size = batch_size or n

    for epoch in range(epochs):
        gen = rng.substream("epoch", epoch).generator()
        order = gen.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            Xb, yb = X[idx], y[idx]
            if budget.epsilon > 0:
                Xb = attack_batch(model, Xb, yb, budget)
            loss, gw, gb = _batch_loss_grads(model, Xb, yb)
            with np.errstate(over="ignore", invalid="ignore"):
                new_w = model.weights - learning_rate * gw
                new_b = model.bias - learning_rate * gb
            if (not np.isfinite(loss) or not np.all(np.isfinite(new_w))
                    or not np.isfinite(new_b)):
                raise NumericError(
                    f"training diverged at epoch {epoch} (loss={loss!r}, "
                    f"|w|={np.linalg.norm(model.weights):.3g})"
                )
            model = LinearModel(weights=new_w, bias=new_b)
    return model


# ---------------------------------------------------------------------------
# Synthetic data and metrics


def make_margin_dataset(
    n: int,
    dim: int,
    margin: float,
    rng: SeededRng,
    spread: float = 1.0,
) -> tuple:
    """Linearly separable two-class set with the given margin.

    Points are Gaussian around the origin, pushed away from the separating
    hyperplane (first coordinate axis) by margin/2.  Labels are -1/+1.
    """
    if n < 2 or dim < 1:
        raise ParameterError("need n >= 2 and dim >= 1")
    if margin < 0:
        raise ParameterError("margin must be non-negative")
    gen = rng.generator()
    y = np.where(gen.random(n) < 0.5, -1, 1)
    X = gen.normal(scale=spread, size=(n, dim))
    X[:, 0] = np.abs(X[:, 0]) + margin / 2.0
    X[:, 0] *= y
    return X, y


def accuracy(model: LinearModel, X, y) -> float:
    return float((model.predict(X) == np.asarray(y)).mean())


def robust_accuracy(model: LinearModel, X, y, budget: PerturbationBudget) -> float:
    X_adv = attack_batch(model, X, y, budget)
    return accuracy(model, X_adv, y)
