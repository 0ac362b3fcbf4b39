"""Sparsity accounting and the gradient-magnitude machinery behind the
regularization-parameter search.

Sparsity level means the number of bit-exact nonzero weight entries; the
prox produces literal zeros, so no epsilon thresholding is involved.  The
magnitude sequences are the componentwise absolute values of the mean
fidelity gradient; their order statistics inside the current (lo, hi)
lambda bracket supply the next candidate lambda.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import nn
from . import optim


@dataclass(frozen=True)
class SparsityProfile:
    """Per-layer and total nonzero weight counts."""

    per_layer: tuple[int, ...]
    layer_sizes: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.per_layer)

    @property
    def total_weights(self) -> int:
        return sum(self.layer_sizes)

    @property
    def ratio(self) -> float:
        return self.total / self.total_weights


def sparsity_profile(params: nn.Parameters) -> SparsityProfile:
    """Count exactly-nonzero weight entries, per layer and in total."""
    counts = tuple(int(np.count_nonzero(w)) for w in params.weights)
    sizes = tuple(int(w.size) for w in params.weights)
    return SparsityProfile(counts, sizes)


@dataclass(frozen=True)
class GradientMagnitudes:
    """|mean fidelity gradient| per weight: per-layer vectors plus the
    concatenated single-parameter view."""

    per_layer: tuple[np.ndarray, ...]

    @property
    def concatenated(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.per_layer])

    def layer(self, k: int) -> np.ndarray:
        return self.per_layer[k]


def problem_gradient_magnitudes(problem, params: nn.Parameters) -> GradientMagnitudes:
    grads = optim.full_mean_gradient(problem, params)
    return GradientMagnitudes(tuple(np.abs(g.ravel()) for g in grads.weights))


def gradient_magnitudes(arch: nn.NetworkArchitecture, params: nn.Parameters, dataset, loss) -> GradientMagnitudes:
    """Magnitude sequences on the full dataset (these drive lambda updates)."""
    return problem_gradient_magnitudes(optim.NetworkProblem(arch, dataset, loss), params)


@dataclass(frozen=True)
class Bracket:
    """lo comes from a run with too many nonzeros (l >= target), hi from a
    run with too few (l <= target); a valid bracket has 0 < lo < hi."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (0 < self.lo < self.hi):
            raise ValueError(f"degenerate bracket ({self.lo}, {self.hi})")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)


# Magnitudes within this relative distance of a bracket endpoint count as
# equal to it.  At a stationary point the support magnitudes equal lambda
# exactly, but float rounding can leave them a few ulps inside the bracket;
# without the band those phantom candidates stall the search at the endpoint.
ENDPOINT_BAND = 1e-6


def next_lambda(bracket: Bracket, mags: GradientMagnitudes, layer: Optional[int] = None) -> float:
    """Next candidate lambda from the magnitudes strictly inside the bracket.

    Uses the layer-k sequence when a layer is given, else the concatenated
    sequence.  When candidates exist the lower median is returned (even
    counts take the smaller middle element, which leans the next run toward
    more nonzeros); otherwise the bracket midpoint.  Either way the result
    is strictly inside (lo, hi), so brackets shrink.
    """
    values = mags.layer(layer) if layer is not None else mags.concatenated
    inside = values[(values > bracket.lo * (1 + ENDPOINT_BAND))
                    & (values < bracket.hi * (1 - ENDPOINT_BAND))]
    if inside.size == 0:
        return bracket.midpoint
    ordered = np.sort(inside, kind="stable")
    return float(ordered[(ordered.size - 1) // 2])
