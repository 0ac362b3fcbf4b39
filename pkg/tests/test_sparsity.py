import numpy as np
import pytest

from sparsenet.data import SurrogateProblem
from sparsenet.nn import NetworkArchitecture, Parameters, init_parameters
from sparsenet.numerics import SeededRng
from sparsenet.optim import TrainConfig, proximal_descent
from sparsenet.sparsity import (Bracket, GradientMagnitudes, next_lambda,
                                problem_gradient_magnitudes, sparsity_profile)


def test_profile_counts_nonzeros_per_layer():
    params = Parameters([np.array([0.0, 1.0, 0.0, -2.0])], [np.zeros(0)])
    profile = sparsity_profile(params)
    assert profile.per_layer == (2,)
    assert profile.total == 2
    assert profile.layer_sizes == (4,)


def test_profile_all_zero_network():
    params = Parameters([np.zeros((3, 2)), np.zeros((1, 3))], [np.zeros(3), np.zeros(1)])
    profile = sparsity_profile(params)
    assert profile.total == 0 and profile.ratio == 0.0


def test_profile_dense_random_init():
    arch = NetworkArchitecture((5, 7, 2))
    params = init_parameters(arch, SeededRng(12))
    assert sparsity_profile(params).ratio == 1.0


def test_profile_counts_only_bit_exact_zeros():
    w = np.array([0.0, 0.5, -0.5])
    profile = sparsity_profile(Parameters([w], [np.zeros(0)]))
    assert profile.total == 2
    w2 = w.copy()
    w2[1] += 1e-300  # still nonzero: count unchanged
    assert sparsity_profile(Parameters([w2], [np.zeros(0)])).total == 2
    w3 = w.copy()
    w3[1] = 0.0
    assert sparsity_profile(Parameters([w3], [np.zeros(0)])).total == 1


def test_gradient_magnitudes_surrogate_hand_value():
    problem = SurrogateProblem(np.array([3.0, 1.0]))
    mags = problem_gradient_magnitudes(problem, Parameters([np.array([2.0, 0.0])], [np.zeros(0)]))
    assert np.allclose(mags.concatenated, [1.0, 1.0])


def test_gradient_magnitudes_equal_lambda_on_support_at_solution():
    c = np.array([3.0, 1.0, -0.2, 2.5])
    problem = SurrogateProblem(c)
    lam = 1.0
    solution = Parameters([problem.lasso_solution(lam)], [np.zeros(0)])
    mags = problem_gradient_magnitudes(problem, solution).concatenated
    support = problem.lasso_solution(lam) != 0
    assert np.allclose(mags[support], lam, atol=1e-12)


def test_gradient_magnitudes_zero_gradient():
    c = np.array([0.5, -1.5])
    problem = SurrogateProblem(c)
    mags = problem_gradient_magnitudes(problem, Parameters([c.copy()], [np.zeros(0)]))
    assert np.array_equal(mags.concatenated, [0.0, 0.0])


def _mags(values):
    return GradientMagnitudes((np.asarray(values, dtype=float),))


def test_next_lambda_odd_count_median():
    got = next_lambda(Bracket(0.05, 0.5), _mags([0.1, 0.2, 0.3]))
    assert got == pytest.approx(0.2)


def test_next_lambda_midpoint_when_no_candidates():
    got = next_lambda(Bracket(1e-7, 1e-3), _mags([1e-9, 0.5]))
    assert got == pytest.approx((1e-7 + 1e-3) / 2)  # = 5.0005e-4


def test_next_lambda_even_count_takes_lower_median():
    got = next_lambda(Bracket(0.05, 0.5), _mags([0.1, 0.2, 0.3, 0.4]))
    assert got == pytest.approx(0.2)


def test_next_lambda_excludes_bracket_endpoints():
    # values equal to lo or hi are not candidates (strict inequalities)
    got = next_lambda(Bracket(0.1, 0.4), _mags([0.1, 0.4]))
    assert got == pytest.approx(0.25)


def test_next_lambda_strictly_inside_bracket():
    rng = SeededRng(3)
    for _ in range(100):
        lo = rng.uniform(1e-6, 0.5)
        hi = lo + rng.uniform(1e-6, 1.0)
        values = rng.uniforms(30, 0.0, 1.5)
        got = next_lambda(Bracket(lo, hi), _mags(values))
        assert lo < got < hi


def test_next_lambda_layer_selects_that_layer():
    mags = GradientMagnitudes((np.array([0.2]), np.array([0.3])))
    assert next_lambda(Bracket(0.1, 0.5), mags, layer=0) == pytest.approx(0.2)
    assert next_lambda(Bracket(0.1, 0.5), mags, layer=1) == pytest.approx(0.3)


def test_degenerate_bracket_rejected():
    with pytest.raises(ValueError):
        Bracket(0.5, 0.5)
    with pytest.raises(ValueError):
        Bracket(0.5, 0.1)
    with pytest.raises(ValueError):
        Bracket(0.0, 0.1)


def test_zero_weights_of_converged_run_obey_ordering_relation():
    # after a converged full-batch run, every zero weight has magnitude
    # value a_i <= lambda + tau (exact on the convex surrogate)
    rng = SeededRng(40)
    problem = SurrogateProblem(rng.uniforms(50, -2, 2))
    lam = 0.8
    cfg = TrainConfig(epochs=400, learning_rate=0.5, seed=0)
    result = proximal_descent(problem, problem.init_params(rng), [lam], cfg)
    mags = problem_gradient_magnitudes(problem, result.params).concatenated
    zero = result.params.weights[0] == 0.0
    assert np.all(mags[zero] <= lam + 1e-6)
