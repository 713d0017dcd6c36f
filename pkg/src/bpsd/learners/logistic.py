from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

FORMAT_VERSION = 1


@dataclass(frozen=True)
class LogisticParams:
    l2: float = 1e-4
    learning_rate: float = 0.1
    epochs: int = 500
    seed: int = 0  # unused by the optimizer (zero init, full batch); kept for a uniform config surface


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(eq=False)
class LogisticModel:
    weights: np.ndarray  # (n_classes, d)
    bias: np.ndarray  # (n_classes,)
    params: LogisticParams
    loss_history: tuple[float, ...] = ()

    @property
    def n_classes(self) -> int:
        return len(self.bias)

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[-1]}")
        return softmax(X @ self.weights.T + self.bias)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=-1)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "logistic",
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "params": asdict(self.params),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        if d.get("format_version") != FORMAT_VERSION or d.get("kind") != "logistic":
            raise ValueError("not a logistic record of a supported format_version")
        return cls(np.asarray(d["weights"], dtype=float), np.asarray(d["bias"], dtype=float), LogisticParams(**d["params"]))


def cross_entropy(model_w: np.ndarray, model_b: np.ndarray, X: np.ndarray, Y: np.ndarray, l2: float) -> float:
    P = softmax(X @ model_w.T + model_b)
    return float(-np.mean(np.sum(Y * np.log(np.clip(P, 1e-300, None)), axis=1)) + 0.5 * l2 * np.sum(model_w**2))


def gradients(W: np.ndarray, b: np.ndarray, X: np.ndarray, Y: np.ndarray, l2: float) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of :func:`cross_entropy` with respect to weights and bias."""
    G = (softmax(X @ W.T + b) - Y) / len(X)
    return G.T @ X + l2 * W, G.sum(axis=0)


def fit_logistic(X: np.ndarray, y: np.ndarray, n_classes: int, params: LogisticParams = LogisticParams()) -> LogisticModel:
    """Multinomial logistic regression by full-batch gradient descent from zero weights."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise ValueError("logistic regression needs at least two classes in the training set")
    d = X.shape[1]
    Y = np.eye(n_classes)[y]
    W = np.zeros((n_classes, d))
    b = np.zeros(n_classes)
    history = []
    for _ in range(params.epochs):
        history.append(cross_entropy(W, b, X, Y, params.l2))
        gW, gb = gradients(W, b, X, Y, params.l2)
        W -= params.learning_rate * gW
        b -= params.learning_rate * gb
    return LogisticModel(W, b, params, tuple(history))
