"""Shared low-dimensional entity embeddings over multi-relational binary data,
trained by logistic collective matrix factorization with SGD."""

from .errors import DataError, DivergenceError, RelfactorError
from .schema import (Database, Entity, Manifest, Relation, build_database,
                     degree_stats, load_manifest, lookup, parse_manifest)
from .ingest import (PreprocessConfig, RawRating, RawReview, binarize_rating,
                     build_word_relations, default_stopwords, filter_categories,
                     resolve_rating_conflicts, tokenize_review, unwrap_attribute)
from .porter import porter_stem
from .model import (EmbeddingStore, init_embeddings, load_model, log_likelihood,
                    save_model, score, sigmoid)
from .train import TrainConfig, TrainLog, sample_negatives, sgd_step, train
from .evaluation import (ConfusionCounts, EvalReport, SplitSpec, classify,
                         evaluate, f1_report, micro_f1, pr_curve,
                         split_cold_start, split_held_out)
from .embed_tools import NeighborResult, nearest_neighbors, project_2d
from .synth import SynthSpec, generate_planted

__version__ = "0.1.0"

__all__ = [
    "Database", "DataError", "DivergenceError", "Entity", "EmbeddingStore",
    "EvalReport", "ConfusionCounts", "Manifest", "NeighborResult",
    "PreprocessConfig", "RawRating", "RawReview", "Relation", "RelfactorError",
    "SplitSpec", "SynthSpec", "TrainConfig", "TrainLog", "binarize_rating",
    "build_database", "build_word_relations", "classify", "default_stopwords",
    "degree_stats", "evaluate", "f1_report", "filter_categories",
    "generate_planted", "init_embeddings", "load_manifest", "load_model",
    "log_likelihood", "lookup", "micro_f1", "nearest_neighbors",
    "parse_manifest", "porter_stem", "pr_curve", "project_2d",
    "resolve_rating_conflicts", "sample_negatives", "save_model", "score",
    "sgd_step", "sigmoid", "split_cold_start", "split_held_out",
    "tokenize_review", "train", "unwrap_attribute",
]
