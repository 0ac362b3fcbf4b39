"""The l1 proximity operator and the training loops.

Two loops: multi-parameter mini-batch proximal gradient descent (weights
soft-thresholded, biases plain gradient steps), and plain gradient descent
with an l2 penalty for the dense baselines.

Update rule, written exactly as used: per mini-batch G and layer k,

    w_k <- prox(w_k - alpha * (1/|G|) * grad_w_k,  alpha * lambda_k)
    b_k <- b_k - alpha * (1/|G|) * grad_b_k

Note the gradient carries the 1/|G| factor but the prox threshold
alpha*lambda_k does not, so lambda effectively weighs the l1 term against
the MEAN fidelity.  All diagnostics in this package (objective traces,
stationarity residuals, gradient magnitudes) therefore use the mean-form
fidelity, the quantity whose stationary points equate |gradient| with
lambda on the support.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import losses as losses_mod
from . import nn
from .numerics import SeededRng, shuffle_indices

DIVERGENCE_LIMIT = 1e12


class DivergenceError(RuntimeError):
    """Training loss became non-finite or exceeded the divergence limit."""

    def __init__(self, epoch: int, value: float):
        super().__init__(f"training diverged at epoch {epoch} (loss {value!r})")
        self.epoch = epoch
        self.value = value


def prox_l1(x, beta: float) -> np.ndarray:
    """Componentwise soft threshold: sign(x) * max(|x| - beta, 0).

    sign(0) is taken as +1.  Entries with |x_i| <= beta come out as
    bit-exact +0.0 so downstream nonzero counting is unambiguous.
    """
    if beta < 0:
        raise ValueError(f"threshold must be >= 0, got {beta}")
    x = np.asarray(x, dtype=np.float64)
    mag = np.abs(x) - beta
    signs = np.where(x >= 0, 1.0, -1.0)
    return np.where(mag > 0, signs * mag, 0.0)


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one training run.

    batch_size None means full batch.  max_grad_norm, when set, rescales
    the (already 1/|G|-scaled) gradient so its global norm never exceeds
    it; off by default.  log_every > 0 writes a progress line to stderr
    every that many epochs.
    """

    epochs: int
    learning_rate: float
    batch_size: Optional[int] = None
    seed: int = 0
    max_grad_norm: Optional[float] = None
    log_every: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be > 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch size must be >= 1 (or None for full batch)")
        if self.max_grad_norm is not None and not self.max_grad_norm > 0:
            raise ValueError("max_grad_norm must be > 0 when given")


@dataclass
class TrainResult:
    """Final parameters plus the per-epoch objective trace.

    loss values are mean fidelity + penalty (see module docstring);
    trace[e] is the objective after epoch e, final_loss == trace[-1].
    """

    params: nn.Parameters
    final_loss: float
    loss_trace: np.ndarray
    seconds: float


class NetworkProblem:
    """A network + dataset + fidelity bundled for the training engines.

    The engine-facing surface (shared with the convex surrogate in
    sparsenet.data): depth, weight_counts, sample_count, init_params(rng),
    batch_fidelity_and_grads(params, idx) -> (sum fidelity, Gradients),
    fidelity(params) over the full data, and metrics(params) (may be None).
    """

    def __init__(self, arch: nn.NetworkArchitecture, dataset, loss: losses_mod.LossSpec):
        self.arch = arch
        self.loss = loss
        batch = dataset if isinstance(dataset, tuple) else (dataset.features, dataset.targets)
        self.X, self.targets = nn.as_batch_arrays(batch, loss.is_classification)
        if self.X.shape[1] != arch.input_dim:
            raise ValueError(f"dataset has {self.X.shape[1]} features but the network expects {arch.input_dim}")
        if not loss.is_classification and self.targets.shape[1] != arch.output_dim:
            raise ValueError(f"targets have width {self.targets.shape[1]} but the network emits {arch.output_dim}")
        if loss.is_classification and arch.output_dim != loss.classes:
            raise ValueError(f"network emits {arch.output_dim} values but loss expects {loss.classes} classes")

    @property
    def depth(self) -> int:
        return self.arch.depth

    @property
    def weight_counts(self) -> tuple[int, ...]:
        return self.arch.weight_counts

    @property
    def sample_count(self) -> int:
        return self.X.shape[0]

    def init_params(self, rng: SeededRng) -> nn.Parameters:
        return nn.init_parameters(self.arch, rng)

    def batch_fidelity_and_grads(self, params: nn.Parameters, idx: np.ndarray):
        return nn.backward(self.arch, params, (self.X[idx], self.targets[idx]), self.loss)

    def fidelity(self, params: nn.Parameters) -> float:
        return losses_mod.fidelity(self.loss, self.arch, params, (self.X, self.targets))

    def metrics(self, params: nn.Parameters) -> Optional[losses_mod.Metrics]:
        return losses_mod.metrics(self.loss, self.arch, params, (self.X, self.targets))


def _as_lambda_vector(lambdas, depth: int) -> np.ndarray:
    lam = np.atleast_1d(np.asarray(lambdas, dtype=np.float64))
    if lam.size == 1:
        lam = np.full(depth, lam[0])
    if lam.shape != (depth,):
        raise ValueError(f"expected {depth} per-layer lambdas, got shape {lam.shape}")
    if np.any(lam < 0):
        raise ValueError("lambdas must be >= 0")
    return lam


def _nonzero_weights(params: nn.Parameters) -> int:
    return int(sum(np.count_nonzero(w) for w in params.weights))


def _run_loop(problem, params0, cfg: TrainConfig, *, prox_lambdas=None, l2_lambda=None) -> TrainResult:
    params = params0.copy()
    n = problem.sample_count
    batch = n if cfg.batch_size is None else min(cfg.batch_size, n)
    alpha = cfg.learning_rate
    rng = SeededRng(cfg.seed)

    if prox_lambdas is not None:
        def penalty_value(p):
            return float(sum(lam_k * np.sum(np.abs(w)) for lam_k, w in zip(prox_lambdas, p.weights)))
    else:
        def penalty_value(p):
            return float(l2_lambda * sum(np.sum(w * w) for w in p.weights))

    trace = np.empty(cfg.epochs)
    start = time.perf_counter()
    for epoch in range(cfg.epochs):
        # Full-batch epochs keep the natural sample order; the gradient sum
        # is order-independent and this keeps the rng stream untouched.
        order = shuffle_indices(n, rng) if batch < n else np.arange(n)
        for lo in range(0, n, batch):
            idx = order[lo:lo + batch]
            fid, grads = problem.batch_fidelity_and_grads(params, idx)
            if not np.isfinite(fid) or fid > DIVERGENCE_LIMIT:
                raise DivergenceError(epoch, fid)
            scale = 1.0 / idx.size
            if cfg.max_grad_norm is not None:
                norm = scale * np.sqrt(sum(np.sum(g * g) for g in grads.weights)
                                       + sum(np.sum(g * g) for g in grads.biases))
                if norm > cfg.max_grad_norm:
                    scale *= cfg.max_grad_norm / norm
            for k in range(problem.depth):
                w = params.weights[k]
                if prox_lambdas is not None:
                    params.weights[k] = prox_l1(w - alpha * scale * grads.weights[k],
                                                alpha * prox_lambdas[k])
                else:
                    params.weights[k] = w - alpha * (scale * grads.weights[k] + 2.0 * l2_lambda * w)
                if params.biases[k].size:
                    params.biases[k] = params.biases[k] - alpha * scale * grads.biases[k]
        objective = problem.fidelity(params) / n + penalty_value(params)
        if not np.isfinite(objective) or objective > DIVERGENCE_LIMIT:
            raise DivergenceError(epoch, objective)
        trace[epoch] = objective
        if cfg.log_every and (epoch + 1) % cfg.log_every == 0:
            print(f"epoch {epoch + 1} loss {objective:.6e} nonzeros {_nonzero_weights(params)}",
                  file=sys.stderr)
    return TrainResult(params, float(trace[-1]), trace, time.perf_counter() - start)


def proximal_descent(problem, params0: nn.Parameters, lambdas, cfg: TrainConfig) -> TrainResult:
    """Mini-batch proximal gradient descent on any training problem."""
    lam = _as_lambda_vector(lambdas, problem.depth)
    return _run_loop(problem, params0, cfg, prox_lambdas=lam)


def train_prox(arch: nn.NetworkArchitecture, params0: nn.Parameters, dataset,
               loss: losses_mod.LossSpec, lambdas, cfg: TrainConfig) -> TrainResult:
    """Proximal gradient descent on a network; lambdas is per-layer (or scalar)."""
    return proximal_descent(NetworkProblem(arch, dataset, loss), params0, lambdas, cfg)


def l2_descent(problem, params0: nn.Parameters, lam: float, cfg: TrainConfig) -> TrainResult:
    """Plain gradient descent on fidelity + lam * ||w||_2^2 (biases unpenalized)."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    return _run_loop(problem, params0, cfg, l2_lambda=float(lam))


def train_l2(arch: nn.NetworkArchitecture, params0: nn.Parameters, dataset,
             loss: losses_mod.LossSpec, lam: float, cfg: TrainConfig) -> TrainResult:
    """Dense l2-penalized baseline trainer."""
    return l2_descent(NetworkProblem(arch, dataset, loss), params0, lam, cfg)


def full_mean_gradient(problem, params: nn.Parameters) -> nn.Gradients:
    """Gradient of the mean fidelity over the full dataset."""
    n = problem.sample_count
    _, grads = problem.batch_fidelity_and_grads(params, np.arange(n))
    scale = 1.0 / n
    for k in range(len(grads.weights)):
        grads.weights[k] *= scale
        if grads.biases[k].size:
            grads.biases[k] *= scale
    return grads


def problem_stationarity_residual(problem, params: nn.Parameters, lambdas) -> tuple[float, float]:
    """How far the parameters are from the first-order optimality conditions.

    Returns (support residual, off-support residual): the max over nonzero
    weights of |g_i + lambda_k * sign(w_i)| and the max over zero weights
    of max(|g_i| - lambda_k, 0), with g the mean fidelity gradient over the
    full dataset.  Both near zero certifies a stationary point of the
    l1-penalized objective.
    """
    lam = _as_lambda_vector(lambdas, problem.depth)
    grads = full_mean_gradient(problem, params)
    support = 0.0
    off_support = 0.0
    for k in range(problem.depth):
        w = params.weights[k].ravel()
        g = grads.weights[k].ravel()
        nz = w != 0
        if np.any(nz):
            support = max(support, float(np.max(np.abs(g[nz] + lam[k] * np.sign(w[nz])))))
        if np.any(~nz):
            off_support = max(off_support, float(np.max(np.maximum(np.abs(g[~nz]) - lam[k], 0.0))))
    return support, off_support


def stationarity_residual(arch: nn.NetworkArchitecture, params: nn.Parameters, dataset,
                          loss: losses_mod.LossSpec, lambdas) -> tuple[float, float]:
    """Network-facing wrapper around problem_stationarity_residual."""
    return problem_stationarity_residual(NetworkProblem(arch, dataset, loss), params, lambdas)
