"""Fully connected ReLU networks and their exact batch gradients.

A network of depth D maps an input through D affine layers; ReLU is applied
after every layer except the last, whose output stays affine (any softmax
belongs to the loss, not the network).  Weight matrices are stored dense in
row-major order; the flattened per-layer weight vectors are what the
sparsity machinery counts and thresholds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .numerics import SeededRng, ShapeError

if TYPE_CHECKING:
    from .losses import LossSpec

CHECKPOINT_SCHEMA = 1


@dataclass(frozen=True)
class NetworkArchitecture:
    """Layer widths [n_0, ..., n_D] plus the activation name ("relu" only)."""

    widths: tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 2:
            raise ValueError("an architecture needs at least an input and an output width")
        if any(w < 1 for w in widths):
            raise ValueError(f"widths must all be >= 1, got {widths}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def depth(self) -> int:
        return len(self.widths) - 1

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    @property
    def weight_counts(self) -> tuple[int, ...]:
        """Per-layer weight counts d_k = n_k * n_{k-1}."""
        return tuple(self.widths[k + 1] * self.widths[k] for k in range(self.depth))

    @property
    def total_weights(self) -> int:
        return sum(self.weight_counts)


@dataclass
class Parameters:
    """Per-layer weight matrices (n_k, n_{k-1}) and bias vectors (n_k,).

    Also used for gradients, which are shape-congruent by construction.
    For layers without biases (the convex surrogate), the bias array is
    empty.
    """

    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.weights)

    def copy(self) -> "Parameters":
        return Parameters([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat_weights(self) -> np.ndarray:
        """All weights concatenated in layer order, each layer row-major."""
        return np.concatenate([w.ravel() for w in self.weights])

    def weight_count(self) -> int:
        return sum(w.size for w in self.weights)

    def validate_finite(self) -> None:
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k + 1} contains non-finite parameters")


Gradients = Parameters


def init_parameters(arch: NetworkArchitecture, rng: SeededRng) -> Parameters:
    """Glorot-uniform weights, zero biases.

    Weights of layer k are drawn uniform on +-sqrt(6 / (n_{k-1} + n_k)),
    filled in row-major order, layer by layer, so a given seed always
    produces the same parameters.
    """
    weights, biases = [], []
    for k in range(arch.depth):
        fan_in, fan_out = arch.widths[k], arch.widths[k + 1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniforms(fan_out * fan_in, -limit, limit).reshape(fan_out, fan_in)
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return Parameters(weights, biases)


def _check_params(arch: NetworkArchitecture, params: Parameters) -> None:
    if params.depth != arch.depth:
        raise ShapeError(f"parameters have {params.depth} layers, architecture has {arch.depth}")
    for k in range(arch.depth):
        expect = (arch.widths[k + 1], arch.widths[k])
        if params.weights[k].shape != expect:
            raise ShapeError(f"layer {k + 1} weight shape {params.weights[k].shape} != {expect}")
        if params.biases[k].shape != (arch.widths[k + 1],):
            raise ShapeError(f"layer {k + 1} bias shape {params.biases[k].shape} != ({arch.widths[k + 1]},)")


def forward(arch: NetworkArchitecture, params: Parameters, x) -> np.ndarray:
    """Evaluate the network on a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (arch.input_dim,):
        raise ShapeError(f"input shape {x.shape} does not match input width {arch.input_dim}")
    return forward_batch(arch, params, x[None, :])[0]


def forward_batch(arch: NetworkArchitecture, params: Parameters, X: np.ndarray) -> np.ndarray:
    """Evaluate the network on a (N, n_0) batch; returns (N, n_D)."""
    _check_params(arch, params)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != arch.input_dim:
        raise ShapeError(f"batch shape {X.shape} does not match input width {arch.input_dim}")
    a = X
    for k in range(arch.depth):
        z = a @ params.weights[k].T + params.biases[k]
        a = np.maximum(z, 0.0) if k < arch.depth - 1 else z
    return a


def as_batch_arrays(batch, classification: bool):
    """Normalize a batch to (X, targets) float64/int64 arrays.

    Accepts an (X, targets) pair of arrays or a list of (x, target) pairs.
    Regression targets become a 2-d (N, q) array; classification targets a
    1-d int array.
    """
    if isinstance(batch, tuple) and len(batch) == 2:
        X, t = batch
    else:
        pairs = list(batch)
        if not pairs:
            raise ValueError("batch is empty")
        X = np.stack([np.asarray(x, dtype=np.float64).ravel() for x, _ in pairs])
        t = [y for _, y in pairs]
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"batch features must be 2-d, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("batch is empty")
    if classification:
        targets = np.asarray(t, dtype=np.int64)
        if targets.ndim != 1:
            raise ShapeError(f"class labels must be 1-d, got shape {targets.shape}")
    else:
        targets = np.asarray(t, dtype=np.float64)
        if targets.ndim == 1:
            targets = targets[:, None]
        if targets.ndim != 2:
            raise ShapeError(f"regression targets must be 1-d or 2-d, got shape {targets.shape}")
    if targets.shape[0] != X.shape[0]:
        raise ShapeError(f"{X.shape[0]} inputs but {targets.shape[0]} targets")
    return X, targets


def backward(arch: NetworkArchitecture, params: Parameters, batch, loss: "LossSpec"):
    """Batch loss (sum over samples) and its exact gradients.

    Reverse-mode differentiation through the affine/ReLU stack; the ReLU
    derivative at exactly 0 is taken as 0.  Returns (loss_sum, Gradients),
    where the gradients are of the summed batch loss; any 1/|batch|
    normalization is the caller's business.
    """
    X, targets = as_batch_arrays(batch, loss.is_classification)
    _check_params(arch, params)
    if X.shape[1] != arch.input_dim:
        raise ShapeError(f"batch feature width {X.shape[1]} != input width {arch.input_dim}")

    activations = [X]
    pre = []
    a = X
    for k in range(arch.depth):
        z = a @ params.weights[k].T + params.biases[k]
        pre.append(z)
        a = np.maximum(z, 0.0) if k < arch.depth - 1 else z
        activations.append(a)

    loss_sum, d_out = loss.batch_loss_and_output_grad(activations[-1], targets)

    grads = Gradients([np.empty_like(w) for w in params.weights],
                      [np.empty_like(b) for b in params.biases])
    dz = d_out
    for k in range(arch.depth - 1, -1, -1):
        grads.weights[k][:] = dz.T @ activations[k]
        grads.biases[k][:] = dz.sum(axis=0)
        if k > 0:
            dz = (dz @ params.weights[k]) * (pre[k - 1] > 0.0)
    return float(loss_sum), grads


def save_checkpoint(arch: NetworkArchitecture, params: Parameters, path) -> None:
    """Write a JSON checkpoint: architecture header, then per-layer arrays
    in layer order with weights (row-major) before biases."""
    _check_params(arch, params)
    doc = {
        "schema": CHECKPOINT_SCHEMA,
        "widths": list(arch.widths),
        "activation": arch.activation,
        "layers": [
            {"weights": params.weights[k].ravel().tolist(),
             "bias": params.biases[k].tolist()}
            for k in range(arch.depth)
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> tuple[NetworkArchitecture, Parameters]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != CHECKPOINT_SCHEMA:
        raise ValueError(f"unsupported checkpoint schema {doc.get('schema')!r}")
    arch = NetworkArchitecture(tuple(doc["widths"]), doc.get("activation", "relu"))
    weights, biases = [], []
    for k, layer in enumerate(doc["layers"]):
        shape = (arch.widths[k + 1], arch.widths[k])
        w = np.asarray(layer["weights"], dtype=np.float64).reshape(shape)
        b = np.asarray(layer["bias"], dtype=np.float64)
        weights.append(w)
        biases.append(b)
    params = Parameters(weights, biases)
    _check_params(arch, params)
    params.validate_finite()
    return arch, params


def parameters_like(arch: NetworkArchitecture, fill: float = 0.0) -> Parameters:
    """Constant-filled parameters matching an architecture (mostly for tests)."""
    return Parameters(
        [np.full((arch.widths[k + 1], arch.widths[k]), fill) for k in range(arch.depth)],
        [np.full(arch.widths[k + 1], fill) for k in range(arch.depth)],
    )


def parameters_from(weights: Sequence, biases: Sequence) -> Parameters:
    """Build Parameters from nested lists/arrays."""
    return Parameters([np.asarray(w, dtype=np.float64) for w in weights],
                      [np.asarray(b, dtype=np.float64) for b in biases])
