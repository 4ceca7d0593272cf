"""Rank-based optimization of face image quality labels, distillation and ERC evaluation."""

from .datamodel import (
    DataError,
    DatasetBundle,
    EmbeddingRecord,
    OptimConfig,
    QualityTable,
    load_embeddings,
    load_quality_scores,
    validate_bundle,
)
from .rankopt import optimize_labels

__version__ = "0.1.0"
