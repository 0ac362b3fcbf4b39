"""Iterative selection of l1 regularization parameters.

Given a target sparsity level (total, or one per layer) the selector
alternates between training to a local minimizer at the current lambda and
updating lambda from the trained network's gradient-magnitude order
statistics: among all runs so far, the smallest-lambda run that landed at
or above the target and the largest-lambda run that landed at or below it
bracket the answer; the median of the magnitude values strictly inside the
bracket (midpoint if there are none) is the next candidate.

Two initialization runs seed the bracket: a large lambda that undershoots
the target level and a small one that overshoots it.  Both are validated
after training and auto-escalated (x10 / /10, a bounded number of times)
when the "large enough"/"small enough" guess was wrong.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

from . import nn
from .losses import Metrics
from .numerics import SeededRng, derived_seed
from .optim import TrainConfig, proximal_descent
from .sparsity import (Bracket, GradientMagnitudes, SparsityProfile,
                       next_lambda, problem_gradient_magnitudes, sparsity_profile)

log = logging.getLogger(__name__)

LambdaLike = Union[float, Sequence[float]]


class Termination(Enum):
    TOLERANCE_MET = "tolerance_met"
    MAX_ITERATIONS = "max_iterations"
    BRACKET_COLLAPSE = "bracket_collapse"
    INITIALIZATION_FAILED = "initialization_failed"


@dataclass(frozen=True)
class SelectionConfig:
    """Targets, stopping tolerance and the per-run training budget.

    targets: total nonzero-weight target (single mode) or one per layer
    (multi mode).  tolerance is the relative error allowed by the stopping
    rule.  quorum (multi mode) is how many layers must be within tolerance;
    None means all.  lambda_high/lambda_low seed the bracket and may be
    scalars or per-layer vectors in multi mode.  warm_start starts each
    inner run from the history entry with the log-closest lambda instead
    of a fresh init; it changes which local minimizer is found, so reports
    flag it.
    """

    targets: Union[int, tuple[int, ...]]
    tolerance: float
    train: TrainConfig
    lambda_high: LambdaLike = 1e-3
    lambda_low: LambdaLike = 1e-7
    quorum: Optional[int] = None
    max_iterations: int = 50
    warm_start: bool = False
    escalation_factor: float = 10.0
    max_escalations: int = 6

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if self.max_iterations < 2:
            raise ValueError("max_iterations must allow at least the two initialization runs")
        if self.escalation_factor <= 1:
            raise ValueError("escalation factor must be > 1")


@dataclass
class SelectionRecord:
    """One outer iteration: the lambda(s) trained with and what came out."""

    iteration: int
    lam: Union[float, np.ndarray]
    params: nn.Parameters
    profile: SparsityProfile
    loss: float
    metrics: Optional[Metrics]
    seconds: float

    def lam_for_layer(self, k: int) -> float:
        return float(self.lam[k]) if isinstance(self.lam, np.ndarray) else float(self.lam)


@dataclass
class SelectionResult:
    lambda_star: Union[float, np.ndarray]
    params: nn.Parameters
    profile: SparsityProfile
    num: int
    history: list[SelectionRecord] = field(default_factory=list)
    termination: Termination = Termination.TOLERANCE_MET

    @property
    def tolerance_met(self) -> bool:
        return self.termination is Termination.TOLERANCE_MET


def warm_start_policy(history: list[SelectionRecord], new_lam: Union[float, np.ndarray],
                      *, warm_start: bool, problem, base_seed: int, iteration: int) -> nn.Parameters:
    """Initial parameters for the next inner run.

    Warm start picks the history entry whose lambda is closest to the new
    one in log space; otherwise a fresh init with seed base + iteration.
    """
    if warm_start and history:
        new_log = np.log(np.atleast_1d(np.asarray(new_lam, dtype=np.float64)))

        def distance(rec: SelectionRecord) -> float:
            old = np.log(np.atleast_1d(np.asarray(rec.lam, dtype=np.float64)))
            return float(np.linalg.norm(old - new_log))

        nearest = min(history, key=distance)
        return nearest.params.copy()
    return problem.init_params(SeededRng(base_seed + iteration))


def _conforms(level: int, target: int, tolerance: float) -> bool:
    return abs(level - target) / target <= tolerance


def _conforming_layers(profile: SparsityProfile, targets: Sequence[int], tolerance: float) -> int:
    return sum(1 for lk, tk in zip(profile.per_layer, targets) if _conforms(lk, tk, tolerance))


class _Runner:
    """Trains one inner run per candidate lambda, with derived seeds."""

    def __init__(self, problem, cfg: SelectionConfig):
        self.problem = problem
        self.cfg = cfg
        self.base_seed = cfg.train.seed

    def run(self, lam: Union[float, np.ndarray], iteration: int,
            history: list[SelectionRecord]) -> SelectionRecord:
        params0 = warm_start_policy(history, lam, warm_start=self.cfg.warm_start,
                                    problem=self.problem, base_seed=self.base_seed,
                                    iteration=iteration)
        train_cfg = TrainConfig(
            epochs=self.cfg.train.epochs,
            learning_rate=self.cfg.train.learning_rate,
            batch_size=self.cfg.train.batch_size,
            seed=derived_seed(self.base_seed, iteration),
            max_grad_norm=self.cfg.train.max_grad_norm,
            log_every=self.cfg.train.log_every,
        )
        lam_vec = np.full(self.problem.depth, lam) if np.isscalar(lam) else np.asarray(lam, dtype=np.float64)
        result = proximal_descent(self.problem, params0, lam_vec, train_cfg)
        record_lam = float(lam) if np.isscalar(lam) else lam_vec.copy()
        return SelectionRecord(iteration, record_lam, result.params,
                               sparsity_profile(result.params), result.final_loss,
                               self.problem.metrics(result.params), result.seconds)


def _closest_record_single(history: list[SelectionRecord], target: int) -> SelectionRecord:
    return min(history, key=lambda r: abs(r.profile.total - target) / target)


def _result_from(record: SelectionRecord, history: list[SelectionRecord],
                 termination: Termination) -> SelectionResult:
    return SelectionResult(record.lam, record.params, record.profile,
                           record.iteration, history, termination)


def select_single(problem, cfg: SelectionConfig) -> SelectionResult:
    """Pick one lambda so the total nonzero weight count hits the target.

    Stops as soon as a trained run satisfies |l - l*|/l* <= tolerance (the
    first possible stop is the small-lambda initialization run itself).
    """
    target = cfg.targets
    if not np.isscalar(target):
        raise ValueError("select_single takes a single integer target")
    target = int(target)
    total_weights = sum(problem.weight_counts)
    if not 0 < target <= total_weights:
        raise ValueError(f"target must be in 1..{total_weights}, got {target}")
    lam_high = float(np.atleast_1d(np.asarray(cfg.lambda_high, dtype=np.float64))[0])
    lam_low = float(np.atleast_1d(np.asarray(cfg.lambda_low, dtype=np.float64))[0])
    if not 0 < lam_low < lam_high:
        raise ValueError(f"need 0 < lambda_low < lambda_high, got {lam_low} and {lam_high}")

    runner = _Runner(problem, cfg)
    history: list[SelectionRecord] = []

    # Initialization run 1: lambda large enough that the level undershoots.
    rec = runner.run(lam_high, 1, history)
    for _ in range(cfg.max_escalations):
        if rec.profile.total < target:
            break
        lam_high *= cfg.escalation_factor
        log.warning("lambda_high run landed at level %d >= target %d; escalating to %g",
                    rec.profile.total, target, lam_high)
        rec = runner.run(lam_high, 1, history)
    if rec.profile.total >= target:
        return _result_from(rec, [rec], Termination.INITIALIZATION_FAILED)
    history.append(rec)

    # Initialization run 2: lambda small enough that the level overshoots.
    # The stopping rule is checked first, so a run that already conforms
    # terminates the search even if it does not strictly overshoot.
    rec = runner.run(lam_low, 2, history)
    for _ in range(cfg.max_escalations):
        if _conforms(rec.profile.total, target, cfg.tolerance) or rec.profile.total > target:
            break
        lam_low /= cfg.escalation_factor
        log.warning("lambda_low run landed at level %d <= target %d; lowering to %g",
                    rec.profile.total, target, lam_low)
        rec = runner.run(lam_low, 2, history)
    history.append(rec)
    if _conforms(rec.profile.total, target, cfg.tolerance):
        return _result_from(rec, history, Termination.TOLERANCE_MET)
    if rec.profile.total <= target:
        return _result_from(rec, history, Termination.INITIALIZATION_FAILED)

    while len(history) < cfg.max_iterations:
        current = history[-1]
        mags = problem_gradient_magnitudes(problem, current.params)
        bracket = _single_bracket(history, target)
        if bracket is None:
            log.warning("bracket collapsed after iteration %d", current.iteration)
            best = _closest_record_single(history, target)
            return _result_from(best, history, Termination.BRACKET_COLLAPSE)
        lam = next_lambda(bracket, mags)
        rec = runner.run(lam, len(history) + 1, history)
        history.append(rec)
        if _conforms(rec.profile.total, target, cfg.tolerance):
            return _result_from(rec, history, Termination.TOLERANCE_MET)

    best = _closest_record_single(history, target)
    return _result_from(best, history, Termination.MAX_ITERATIONS)


def _single_bracket(history: list[SelectionRecord], target: int) -> Optional[Bracket]:
    """Bracket from the run levels: hi from the best run at or below the
    target, lo from the best run at or above it (ties take the tighter
    lambda).  None when the pair does not satisfy 0 < lo < hi."""
    below = [r for r in history if r.profile.total <= target]
    above = [r for r in history if r.profile.total >= target]
    if not below or not above:
        return None
    hi_rec = min(below, key=lambda r: (target - r.profile.total, r.lam))
    lo_rec = min(above, key=lambda r: (r.profile.total - target, -r.lam))
    lo, hi = float(lo_rec.lam), float(hi_rec.lam)
    if not 0 < lo < hi:
        return None
    return Bracket(lo, hi)


def _layer_bracket(history: list[SelectionRecord], k: int, target: int) -> Optional[Bracket]:
    below = [r for r in history if r.profile.per_layer[k] <= target]
    above = [r for r in history if r.profile.per_layer[k] >= target]
    if not below or not above:
        return None
    hi_rec = min(below, key=lambda r: (target - r.profile.per_layer[k], r.lam_for_layer(k)))
    lo_rec = min(above, key=lambda r: (r.profile.per_layer[k] - target, -r.lam_for_layer(k)))
    lo, hi = lo_rec.lam_for_layer(k), hi_rec.lam_for_layer(k)
    if not 0 < lo < hi:
        return None
    return Bracket(lo, hi)


def _closest_record_multi(history: list[SelectionRecord], targets: Sequence[int],
                          tolerance: float) -> SelectionRecord:
    def badness(rec: SelectionRecord):
        conforming = _conforming_layers(rec.profile, targets, tolerance)
        rel = sum(abs(l - t) / t for l, t in zip(rec.profile.per_layer, targets))
        return (-conforming, rel)

    return min(history, key=badness)


def select_multi(problem, cfg: SelectionConfig) -> SelectionResult:
    """Pick per-layer lambdas so each layer's nonzero count hits its target.

    Stops once at least `quorum` layers are within tolerance of their
    targets; every layer's lambda is updated every iteration regardless of
    whether that layer already conforms.
    """
    depth = problem.depth
    targets = [int(t) for t in np.atleast_1d(np.asarray(cfg.targets))]
    if len(targets) != depth:
        raise ValueError(f"{len(targets)} targets for a depth-{depth} problem")
    for k, (t, dk) in enumerate(zip(targets, problem.weight_counts)):
        if not 0 < t <= dk:
            raise ValueError(f"layer {k + 1} target must be in 1..{dk}, got {t}")
    quorum = depth if cfg.quorum is None else int(cfg.quorum)
    if not 0 <= quorum <= depth:
        raise ValueError(f"quorum must be in 0..{depth}, got {quorum}")

    lam_high = np.full(depth, cfg.lambda_high, dtype=np.float64) if np.isscalar(cfg.lambda_high) \
        else np.asarray(cfg.lambda_high, dtype=np.float64).copy()
    lam_low = np.full(depth, cfg.lambda_low, dtype=np.float64) if np.isscalar(cfg.lambda_low) \
        else np.asarray(cfg.lambda_low, dtype=np.float64).copy()
    if lam_high.shape != (depth,) or lam_low.shape != (depth,):
        raise ValueError("lambda_high/lambda_low must be scalars or one value per layer")
    if np.any(lam_low <= 0) or np.any(lam_low >= lam_high):
        raise ValueError("need 0 < lambda_low < lambda_high componentwise")

    runner = _Runner(problem, cfg)
    history: list[SelectionRecord] = []

    # Initialization run 1: every layer must undershoot its target.
    rec = runner.run(lam_high, 1, history)
    for _ in range(cfg.max_escalations):
        violating = [k for k in range(depth) if rec.profile.per_layer[k] >= targets[k]]
        if not violating:
            break
        lam_high[violating] *= cfg.escalation_factor
        log.warning("layers %s at or above target after lambda_high run; escalating those lambdas",
                    [k + 1 for k in violating])
        rec = runner.run(lam_high, 1, history)
    if any(rec.profile.per_layer[k] >= targets[k] for k in range(depth)):
        return _result_from(rec, [rec], Termination.INITIALIZATION_FAILED)
    history.append(rec)

    # Initialization run 2: every layer must overshoot (quorum checked first).
    rec = runner.run(lam_low, 2, history)
    for _ in range(cfg.max_escalations):
        if _conforming_layers(rec.profile, targets, cfg.tolerance) >= quorum:
            break
        violating = [k for k in range(depth) if rec.profile.per_layer[k] <= targets[k]]
        if not violating:
            break
        lam_low[violating] /= cfg.escalation_factor
        log.warning("layers %s at or below target after lambda_low run; lowering those lambdas",
                    [k + 1 for k in violating])
        rec = runner.run(lam_low, 2, history)
    history.append(rec)
    if _conforming_layers(rec.profile, targets, cfg.tolerance) >= quorum:
        return _result_from(rec, history, Termination.TOLERANCE_MET)
    if any(rec.profile.per_layer[k] <= targets[k] for k in range(depth)):
        return _result_from(rec, history, Termination.INITIALIZATION_FAILED)

    while len(history) < cfg.max_iterations:
        current = history[-1]
        mags = problem_gradient_magnitudes(problem, current.params)
        new_lam = np.array([current.lam_for_layer(k) for k in range(depth)])
        moved = 0
        for k in range(depth):
            bracket = _layer_bracket(history, k, targets[k])
            if bracket is None:
                log.warning("layer %d bracket collapsed at iteration %d; keeping its lambda",
                            k + 1, current.iteration)
                continue
            new_lam[k] = next_lambda(bracket, mags, layer=k)
            moved += 1
        if moved == 0:
            best = _closest_record_multi(history, targets, cfg.tolerance)
            return _result_from(best, history, Termination.BRACKET_COLLAPSE)
        rec = runner.run(new_lam, len(history) + 1, history)
        history.append(rec)
        if _conforming_layers(rec.profile, targets, cfg.tolerance) >= quorum:
            return _result_from(rec, history, Termination.TOLERANCE_MET)

    best = _closest_record_multi(history, targets, cfg.tolerance)
    return _result_from(best, history, Termination.MAX_ITERATIONS)


def selection_report(result: SelectionResult, cfg: SelectionConfig) -> dict:
    """JSON-ready view of a selection run: config echo, per-iteration table,
    termination reason."""
    def lam_json(lam):
        return lam.tolist() if isinstance(lam, np.ndarray) else lam

    return {
        "config": {
            "targets": lam_json(np.asarray(cfg.targets)) if not np.isscalar(cfg.targets) else cfg.targets,
            "tolerance": cfg.tolerance,
            "quorum": cfg.quorum,
            "lambda_high": lam_json(np.asarray(cfg.lambda_high)) if not np.isscalar(cfg.lambda_high) else cfg.lambda_high,
            "lambda_low": lam_json(np.asarray(cfg.lambda_low)) if not np.isscalar(cfg.lambda_low) else cfg.lambda_low,
            "max_iterations": cfg.max_iterations,
            "warm_start": cfg.warm_start,
            "epochs": cfg.train.epochs,
            "learning_rate": cfg.train.learning_rate,
            "batch_size": cfg.train.batch_size,
            "seed": cfg.train.seed,
        },
        "termination": result.termination.value,
        "num": result.num,
        "lambda_star": lam_json(result.lambda_star),
        "sparsity": {"per_layer": list(result.profile.per_layer),
                     "total": result.profile.total,
                     "ratio": result.profile.ratio},
        "iterations": [
            {
                "iteration": rec.iteration,
                "lambda": lam_json(rec.lam),
                "levels": list(rec.profile.per_layer),
                "total_level": rec.profile.total,
                "loss": rec.loss,
                "metrics": rec.metrics.as_dict() if rec.metrics else None,
                "seconds": rec.seconds,
            }
            for rec in result.history
        ],
    }
