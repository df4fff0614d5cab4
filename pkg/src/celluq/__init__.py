"""Uncertainty quantification for linear-assignment cell tracking."""

from .bayes import (
    PosteriorSample,
    exact_edge_probabilities,
    mc_edge_probabilities,
    sni_edge_probabilities,
)
from .costs import (
    BrownianParams,
    CostModel,
    activity_cost,
    joint_log_likelihood,
    l2_cost,
    make_cost_model,
    overlap_cost,
)
from .dbmc import (
    LabeledEdges,
    Temperature,
    apply_temperature,
    column_normalize,
    daughter_entropy,
    fit_temperature,
    softmax_columns,
)
from .evaluation import (
    ReliabilityBin,
    SparsificationCurve,
    accuracy_improvement,
    evaluate_predictions,
    expected_calibration_error,
    sparsification,
)
from .io import Sequence, load_sequence
from .model import (
    BOTTOM,
    Assignment,
    Detection,
    Edge,
    EdgeProbabilityMatrix,
    Frame,
    count_feasible,
    enumerate_feasible,
    is_feasible,
)
from .perturb import NoiseSpec, fp_assignment_ensemble, fp_mean_cost, perturb_frame
from .pipeline import MethodSpec, run_experiment, subsample
from .solver import LapEncoding, RankedSolution, encode_lap, solve_map, top_k

__version__ = "0.1.0"
