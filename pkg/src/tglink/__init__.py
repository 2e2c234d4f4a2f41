"""Streaming temporal-graph link prediction.

A chronological event log feeds three pair scorers: a trained recent-neighbor
perceptron, a training-free overlap of temporal-walk vectors, and an adaptive
hybrid of the two. The package also ships the full chronological evaluation
protocol (sampled-negative ranking metrics), a node-classification head, and
a scaling benchmark harness.
"""

from .graph import DatasetSplit, Event, TemporalGraph
from .io import convert, load_events
from .synthetic import SyntheticConfig, generate
from .tppr import (TpprConfig, TpprStore, TpprVector, TransitionRow,
                   top_k_nodes, tppr_dense_oracle, transition_row)
from .nn import (AdamState, MlpParams, adam_step, init_mlp, load_checkpoint,
                 mlp_backward, mlp_forward, save_checkpoint)
from .scoring import (LAMBDA_GRID, CandidateScores, ScoreTriple, ScoringConfig,
                      hybrid_score, structure_score, time_aware_representation,
                      time_score, tune_lambda)
from .training import TrainConfig, sample_train_negative, train_time_model
from .evaluation import (EvalConfig, EvalReport, aggregate_reports,
                         average_precision, evaluate, hit_ratio, mrr,
                         rank_positive, sample_test_negatives)
from .classify import (LabelRecord, NodeClassifier, evaluate_nc, load_labels,
                       ndcg_at_10, nc_predict, nc_struct_representation,
                       nc_time_representation, train_nc_model)
from .bench import BenchPlan, fit_scaling_exponent, run_benchmark
from .pipeline import RunManifest, run_eval, run_motiv, run_sweep, run_train, run_train_eval

__version__ = "0.1.0"
