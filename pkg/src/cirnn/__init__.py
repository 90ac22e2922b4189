"""Context-integrated GRU for sequence regression.

The context cell makes the input-to-hidden weights functions of a
context vector through a polynomial basis expansion; a plain GRU
baseline, manual BPTT gradients, a prognostics data pipeline, the
asymmetric scoring metric, and a synthetic multi-regime task round out
the toolkit.
"""

from .basis import BasisSpec, basis_size, build_spec, eval_basis
from .cells import (CiRnnParams, GruParams, StepTrace, cirnn_step,
                    context_weights, forward_sequence, gru_step, init_cirnn,
                    init_gru, output)
from .metrics import EvalReport, evaluate_per_unit, rmse, score
from .numerics import Rng, ShapeError, hadamard, kron, matmul, sigmoid, tanh
from .pipeline import (PipelineOptions, SequenceBatch, contextual_normalize,
                       kmeans, label_rul, minmax_normalize, parse_cmapss,
                       preprocess, select_features, smooth, window_and_split)
from .sensitivity import forward_sensitivity_gradients
from .storage import Checkpoint, load_checkpoint, load_dataset, save_checkpoint, save_dataset
from .synthetic import SynthSpec, generate, oracle_best_rmse
from .training import (Gradients, OptimizerState, TrainConfig, backward,
                       backward_gru, fd_gradient, loss, optimizer_step, train)

__version__ = "0.1.0"
