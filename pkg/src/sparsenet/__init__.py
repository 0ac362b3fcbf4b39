"""Sparse fully connected networks with l1 proximal training and automatic
regularization-parameter selection for prescribed sparsity levels."""

__version__ = "0.1.0"

from .numerics import SeededRng, ShapeError, matvec, shuffle_indices
from .nn import (NetworkArchitecture, Parameters, Gradients, init_parameters,
                 forward, forward_batch, backward, save_checkpoint, load_checkpoint)
from .losses import (LossSpec, RegularizerSpec, Metrics, softmax, fidelity, penalty,
                     metrics, squared_sum_loss, cross_entropy_loss, l1_single,
                     l1_per_layer, l2_single, no_penalty, ProbabilityFloorWarning)
from .optim import (TrainConfig, TrainResult, DivergenceError, prox_l1, train_prox,
                    train_l2, proximal_descent, l2_descent, NetworkProblem,
                    stationarity_residual, problem_stationarity_residual)
from .sparsity import (SparsityProfile, GradientMagnitudes, Bracket, sparsity_profile,
                       gradient_magnitudes, problem_gradient_magnitudes, next_lambda)
from .select import (SelectionConfig, SelectionRecord, SelectionResult, Termination,
                     select_single, select_multi, warm_start_policy, selection_report)
from .data import (Dataset, SurrogateProblem, parse_libsvm, serialize_libsvm, parse_idx,
                   split, make_surrogate, make_mackey_glass, make_cluster_classification,
                   load_mnist, DataFormatError, EmptyDatasetError)
