"""Low-rank recovery from quantized learner responses and tag-level learning analytics."""

__version__ = "0.1.0"

from .quantized_model import (ObservedResponses, QuantizerSpec, inverse_logit,
                              inverse_logit_deriv, label_likelihood, nll, nll_gradient,
                              quantize)
from .solver import FitResult, SolverConfig, fit, project_l1_ball, project_nuclear_ball
from .analytics import (PredictionMetrics, TagKnowledge, TagMatrix, accuracy, auc,
                        denoised_grades, evaluate, mean_likelihood, predict_label, tag_knowledge)
from .data_io import (CVReport, Dataset, SyntheticTruth, cross_validate_lambda,
                      holdout_split, load_responses, synthesize)
from .protocol import ProtocolResult, run_holdout_trials
