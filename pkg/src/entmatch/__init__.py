"""Low-resource entity resolution: a deep pair matcher on a hand-written
autodiff core, adversarial multi-dataset transfer, and an active-learning
labeling loop that can run against an oracle or a served labeling session.
"""

from .active import (ALConfig, Annotator, AnnotatorError, CallbackAnnotator,
                     IterationLog, IterationWriter, LabeledSet,
                     OracleAnnotator, SelectionResult, UnlabeledPool,
                     al_iteration, compute_selection, entropy, gold_map,
                     partition, run_dtal)
from .autodiff import NumericError, ShapeError, Tape, Tensor
from .baselines import (extract_features, feature_names, pair_features,
                        predict_gnb, predict_logreg, train_gnb, train_logreg)
from .checkpoint import CheckpointError, load_model, read_manifest, save_model
from .data import (BlockingError, BlockingRule, CandidateSet, ConfigError,
                   EntityTable, RecordPair, Splits, SynthConfig,
                   TableFormatError, block, candidate_set_from_tables,
                   default_blocking_rules, load_blocking_rules,
                   load_candidates, load_matches, load_table, split, stats,
                   synth_generate)
from .estimators import (DeepERMatcher, GaussianNBMatcher, LogisticMatcher,
                         PairFeaturizer)
from .model import DeepERModel, EncodedPair, ModelConfig, encode_pairs
from .prepared import PreparedDataset, load_prepared, write_prepared
from .text import EmbeddingStore, tokenize
from .training import (EvalReport, MetricsWriter, SourceDataset, TrainConfig,
                       confusion, evaluate, report_from_counts,
                       train_adversarial, train_supervised)

__version__ = "0.1.0"

__all__ = [
    "ALConfig", "Annotator", "AnnotatorError", "BlockingError",
    "BlockingRule", "CallbackAnnotator", "CandidateSet", "CheckpointError",
    "ConfigError", "DeepERMatcher", "DeepERModel", "EmbeddingStore",
    "EncodedPair", "EntityTable", "EvalReport", "GaussianNBMatcher",
    "IterationLog", "IterationWriter", "LabeledSet", "LogisticMatcher",
    "MetricsWriter", "ModelConfig", "NumericError", "OracleAnnotator",
    "PairFeaturizer", "PreparedDataset", "RecordPair", "SelectionResult",
    "ShapeError", "SourceDataset", "Splits", "SynthConfig",
    "TableFormatError", "Tape", "Tensor", "TrainConfig", "UnlabeledPool",
    "al_iteration", "block", "candidate_set_from_tables", "compute_selection",
    "confusion", "default_blocking_rules", "encode_pairs", "entropy",
    "evaluate", "extract_features", "feature_names", "gold_map",
    "load_blocking_rules", "load_candidates", "load_matches", "load_model",
    "load_prepared", "load_table", "pair_features", "partition",
    "predict_gnb", "predict_logreg", "read_manifest", "report_from_counts",
    "run_dtal", "save_model", "split", "stats", "synth_generate",
    "tokenize", "train_adversarial", "train_gnb", "train_logreg",
    "train_supervised", "write_prepared",
]
