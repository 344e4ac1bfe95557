"""Differentiable hierarchical rule induction with a crisp Datalog oracle."""

from .extraction import ExtractionResult, extract_program, symbolic_evaluate
from .harness import ExperimentReport, RunRecord, run_experiment, sweep
from .inference import ValuationState, build_state, compute_scores, run_inference
from .logic import (
    DefiniteClause,
    GroundAtom,
    Literal,
    PredicateSymbol,
    SymbolicProgram,
    forward_chain,
    mse,
    normalize_aux_clause,
)
from .model import Model, ModelConfig, build_model, candidate_set, load_checkpoint, save_checkpoint
from .operators import OperatorConfig
from .tasks import IlpTask, TaskSpec, generate_task, load_task, reference_solution, save_task
from .training import TrainConfig, bce_loss, check_gradients, interpretability_reg, train

__version__ = "0.1.0"
