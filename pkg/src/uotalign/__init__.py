"""Unbalanced optimal transport alignment of acoustic and linguistic sequences."""

from .alignment import (AdapterParams, Direction, PredictionHead, adapter_forward, alignment_loss, predict,
                        preset_marginals, project_to_linguistic)
from .ctc import ctc_bruteforce, ctc_grad, ctc_loss, greedy_decode
from .errors import (ConfigError, DomainError, InfeasibleError, InputFormatError, ShapeError, SizeError,
                     SolverError, TrainingDivergedError, UOTAlignError)
from .geometry import CostMatrix, FeatureSequence, Metric, ProjectionParams, Side, cost_matrix, normalize_rows, \
    project_features
from .synth import SynthSpec, detection_metrics, generate_dataset, generate_instance, uniform_alignment
from .trainer import ToyModelParams, TrainConfig, grad_params, total_loss, train
from .uot import (Measure, SolverConfig, TransportPlan, generalized_kl, gibbs_kernel, oracle_solve_uot,
                  solve_balanced, solve_grid, solve_uot)

__version__ = "0.1.0"
