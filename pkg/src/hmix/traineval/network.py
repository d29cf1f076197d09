"""Small dense softmax classifier with hand-derived gradients.

Everything is float64 numpy: forward pass, backprop through tanh hidden
layers, and input gradients for adversarial perturbation. tanh (rather than
ReLU) keeps the loss smooth everywhere so finite-difference gradient checks
are well-defined. With an empty hidden spec the model is plain multinomial
logistic regression, which the convexity tests rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_LOG_EPS = 1e-12


@dataclass
class SoftmaxMLP:
    """Fully-connected tanh network ending in a softmax over K classes."""

    weights: list[np.ndarray]  # layer l: (fan_in, fan_out)
    biases: list[np.ndarray]

    @classmethod
    def init(
        cls,
        input_dim: int,
        hidden: tuple[int, ...],
        num_classes: int,
        rng: np.random.Generator,
    ) -> "SoftmaxMLP":
        dims = [input_dim, *hidden, num_classes]
        weights = []
        biases = []
        for fan_in, fan_out in zip(dims, dims[1:]):
            scale = np.sqrt(1.0 / fan_in)
            weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights=weights, biases=biases)

    @property
    def num_classes(self) -> int:
        return int(self.weights[-1].shape[1])

    @property
    def input_dim(self) -> int:
        return int(self.weights[0].shape[0])

    def _forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        activations = [x]
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ w + b)
            activations.append(h)
        logits = h @ self.weights[-1] + self.biases[-1]
        return logits, activations

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Class probabilities for a batch (B, D) -> (B, K)."""
        logits, _ = self._forward_cached(np.atleast_2d(x))
        return _softmax(logits)

    def loss(self, x: np.ndarray, targets: np.ndarray) -> float:
        logits, _ = self._forward_cached(np.atleast_2d(x))
        return _soft_ce_from_logits(logits, np.atleast_2d(targets))

    def loss_and_grads(
        self, x: np.ndarray, targets: np.ndarray
    ) -> tuple[float, list[np.ndarray], list[np.ndarray], np.ndarray]:
        """Mean soft cross-entropy plus gradients.

        Returns (loss, d_weights, d_biases, d_inputs); gradients of the
        batch-mean loss.
        """
        x = np.atleast_2d(x)
        targets = np.atleast_2d(targets)
        batch = x.shape[0]
        logits, activations = self._forward_cached(x)
        probs = _softmax(logits)
        loss = _soft_ce_from_logits(logits, targets)

        delta = (probs - targets) / batch  # d loss / d logits
        d_weights: list[np.ndarray] = [None] * len(self.weights)
        d_biases: list[np.ndarray] = [None] * len(self.biases)
        for layer in range(len(self.weights) - 1, -1, -1):
            a_prev = activations[layer]
            d_weights[layer] = a_prev.T @ delta
            d_biases[layer] = delta.sum(axis=0)
            if layer > 0:
                upstream = delta @ self.weights[layer].T
                delta = upstream * (1.0 - activations[layer] ** 2)  # tanh'
            else:
                d_input = delta @ self.weights[layer].T
        return loss, d_weights, d_biases, d_input

    def input_gradient(self, x: np.ndarray, targets: np.ndarray) -> np.ndarray:
        """Gradient of the summed per-example loss w.r.t. each input row."""
        x = np.atleast_2d(x)
        _, _, _, d_input = self.loss_and_grads(x, targets)
        return d_input * x.shape[0]  # undo the batch-mean scaling

    # -- flat parameter access (finite-difference checks) ------------------

    def get_flat_params(self) -> np.ndarray:
        return np.concatenate(
            [w.ravel() for w in self.weights] + [b.ravel() for b in self.biases]
        )

    def set_flat_params(self, flat: np.ndarray) -> None:
        offset = 0
        for i, w in enumerate(self.weights):
            self.weights[i] = flat[offset : offset + w.size].reshape(w.shape).copy()
            offset += w.size
        for i, b in enumerate(self.biases):
            self.biases[i] = flat[offset : offset + b.size].reshape(b.shape).copy()
            offset += b.size

    def flat_gradient(self, x: np.ndarray, targets: np.ndarray) -> np.ndarray:
        _, dw, db, _ = self.loss_and_grads(x, targets)
        return np.concatenate([g.ravel() for g in dw] + [g.ravel() for g in db])

    def copy(self) -> "SoftmaxMLP":
        return SoftmaxMLP(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _soft_ce_from_logits(logits: np.ndarray, targets: np.ndarray) -> float:
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-(targets * log_probs).sum(axis=1).mean())


def soft_cross_entropy(probs: np.ndarray, targets: np.ndarray) -> tuple[float, int]:
    """Mean soft cross-entropy between predicted probabilities and targets.

    Predicted probabilities below 1e-12 on classes the target supports are
    clamped; the second return value counts how many were.
    """
    probs = np.atleast_2d(probs)
    targets = np.atleast_2d(targets)
    supported = targets > 0.0
    clamped = int(np.count_nonzero(supported & (probs < _LOG_EPS)))
    safe = np.clip(probs, _LOG_EPS, None)
    per_example = -(np.where(supported, targets * np.log(safe), 0.0)).sum(axis=1)
    return float(per_example.mean()), clamped
