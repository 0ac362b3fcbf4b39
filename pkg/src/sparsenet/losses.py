"""Fidelity terms, penalties and evaluation metrics.

Two fidelity terms: the squared-sum loss for regression and softmax
cross-entropy for classification, both summed over the batch.  Penalties
cover single-lambda l1, per-layer l1, single-lambda l2 and none, with an
optional bias term under the same lambda(s).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import nn

SQUARED_SUM = "squared_sum"
CROSS_ENTROPY = "cross_entropy"

# Probabilities are floored here before the log so a dead softmax yields a
# huge but finite loss instead of -inf.
PROBABILITY_FLOOR = 1e-300
_MAX_NEG_LOG = -np.log(PROBABILITY_FLOOR)


class ProbabilityFloorWarning(RuntimeWarning):
    """A predicted class probability hit the 1e-300 floor."""


@dataclass(frozen=True)
class LossSpec:
    """Fidelity term choice; cross-entropy also carries the class count."""

    kind: str
    classes: Optional[int] = None

    def __post_init__(self):
        if self.kind not in (SQUARED_SUM, CROSS_ENTROPY):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == CROSS_ENTROPY:
            if self.classes is None or self.classes < 2:
                raise ValueError("cross-entropy needs classes >= 2")

    @property
    def is_classification(self) -> bool:
        return self.kind == CROSS_ENTROPY

    def batch_loss_and_output_grad(self, outputs: np.ndarray, targets: np.ndarray):
        """Summed batch loss and its gradient w.r.t. the network outputs."""
        if self.kind == SQUARED_SUM:
            if outputs.shape != targets.shape:
                raise ValueError(f"outputs {outputs.shape} vs targets {targets.shape}")
            diff = outputs - targets
            return float(np.sum(diff * diff)), 2.0 * diff
        k = self.classes
        if outputs.shape[1] != k:
            raise ValueError(f"network emits {outputs.shape[1]} values but loss expects {k} classes")
        _check_labels(targets, k)
        logp = log_softmax(outputs)
        picked = logp[np.arange(outputs.shape[0]), targets]
        loss = float(-np.sum(_floor_log_probs(picked)))
        grad = np.exp(logp)
        grad[np.arange(outputs.shape[0]), targets] -= 1.0
        return loss, grad


def squared_sum_loss() -> LossSpec:
    return LossSpec(SQUARED_SUM)


def cross_entropy_loss(classes: int) -> LossSpec:
    return LossSpec(CROSS_ENTROPY, classes)


def _check_labels(labels: np.ndarray, classes: int) -> None:
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        bad = labels[(labels < 0) | (labels >= classes)][0]
        raise ValueError(f"class label {bad} out of range 0..{classes - 1}")


def _floor_log_probs(logp: np.ndarray) -> np.ndarray:
    floored = np.maximum(logp, -_MAX_NEG_LOG)
    if np.any(logp < -_MAX_NEG_LOG):
        warnings.warn("predicted probability hit the 1e-300 floor", ProbabilityFloorWarning)
    return floored


def softmax(z) -> np.ndarray:
    """Softmax with max-subtraction; rows sum to 1 without overflowing."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


L1_SINGLE = "l1_single"
L1_PER_LAYER = "l1_per_layer"
L2_SINGLE = "l2_single"
NO_PENALTY = "none"


@dataclass(frozen=True)
class RegularizerSpec:
    """Penalty choice; lambdas is () for none, (lam,) for single, one per layer otherwise."""

    kind: str
    lambdas: tuple[float, ...] = ()
    include_bias: bool = False

    def __post_init__(self):
        if self.kind not in (L1_SINGLE, L1_PER_LAYER, L2_SINGLE, NO_PENALTY):
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        lam = tuple(float(x) for x in self.lambdas)
        object.__setattr__(self, "lambdas", lam)
        if any(x < 0 for x in lam):
            raise ValueError("regularization parameters must be >= 0")
        if self.kind in (L1_SINGLE, L2_SINGLE) and len(lam) != 1:
            raise ValueError(f"{self.kind} takes exactly one lambda")
        if self.kind == NO_PENALTY and lam:
            raise ValueError("'none' takes no lambdas")

    def per_layer(self, depth: int) -> np.ndarray:
        """Expand to one lambda per layer."""
        if self.kind == NO_PENALTY:
            return np.zeros(depth)
        if self.kind == L1_PER_LAYER:
            if len(self.lambdas) != depth:
                raise ValueError(f"{len(self.lambdas)} lambdas for {depth} layers")
            return np.asarray(self.lambdas)
        return np.full(depth, self.lambdas[0])


def l1_single(lam: float, include_bias: bool = False) -> RegularizerSpec:
    return RegularizerSpec(L1_SINGLE, (lam,), include_bias)


def l1_per_layer(lams: Sequence[float], include_bias: bool = False) -> RegularizerSpec:
    return RegularizerSpec(L1_PER_LAYER, tuple(lams), include_bias)


def l2_single(lam: float, include_bias: bool = False) -> RegularizerSpec:
    return RegularizerSpec(L2_SINGLE, (lam,), include_bias)


def no_penalty() -> RegularizerSpec:
    return RegularizerSpec(NO_PENALTY)


def fidelity(loss: LossSpec, arch: nn.NetworkArchitecture, params: nn.Parameters, batch) -> float:
    """Summed fidelity term over the batch.

    Squared-sum: sum_i ||N(x_i) - y_i||^2.  Cross-entropy:
    -sum_i log(softmax(N(x_i))_{y_i}) with the probability floor applied.
    """
    X, targets = nn.as_batch_arrays(batch, loss.is_classification)
    out = nn.forward_batch(arch, params, X)
    if loss.kind == SQUARED_SUM:
        if out.shape != targets.shape:
            raise ValueError(f"outputs {out.shape} vs targets {targets.shape}")
        d = out - targets
        return float(np.sum(d * d))
    _check_labels(targets, loss.classes)
    logp = log_softmax(out)[np.arange(out.shape[0]), targets]
    return float(-np.sum(_floor_log_probs(logp)))


def penalty(reg: RegularizerSpec, params: nn.Parameters) -> float:
    """Penalty value for the given parameters."""
    if reg.kind == NO_PENALTY:
        return 0.0
    lams = reg.per_layer(params.depth)
    total = 0.0
    for k in range(params.depth):
        w = params.weights[k]
        b = params.biases[k]
        if reg.kind == L2_SINGLE:
            total += lams[k] * float(np.sum(w * w))
            if reg.include_bias:
                total += lams[k] * float(np.sum(b * b))
        else:
            total += lams[k] * float(np.sum(np.abs(w)))
            if reg.include_bias:
                total += lams[k] * float(np.sum(np.abs(b)))
    return total


@dataclass(frozen=True)
class Metrics:
    """Evaluation metrics; mse for regression, accuracy for classification."""

    mse: Optional[float] = None
    accuracy: Optional[float] = None

    def as_dict(self) -> dict:
        out = {}
        if self.mse is not None:
            out["mse"] = self.mse
        if self.accuracy is not None:
            out["accuracy"] = self.accuracy
        return out


def metrics(loss: LossSpec, arch: nn.NetworkArchitecture, params: nn.Parameters, dataset) -> Metrics:
    """Mean squared error (regression) or argmax accuracy (classification)."""
    batch = dataset if isinstance(dataset, tuple) else (dataset.features, dataset.targets)
    X, targets = nn.as_batch_arrays(batch, loss.is_classification)
    out = nn.forward_batch(arch, params, X)
    if loss.kind == SQUARED_SUM:
        d = out - targets
        return Metrics(mse=float(np.sum(d * d)) / X.shape[0])
    predicted = out.argmax(axis=1)
    return Metrics(accuracy=float(np.mean(predicted == targets)))
