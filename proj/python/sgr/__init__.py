"""Spectral graph reasoning for hyperspectral image classification.

Thin Python surface over the C++ core: per-sample KNN graphs over spectral
embedding channels, first-order graph convolution, top-k pooling/unpooling,
GRU-gated ensembling, the full classification model, evaluation metrics, and
the seeded synthetic-scene generator.
"""

from ._core import (
    DimensionError,
    Graph,
    IngestionError,
    Model,
    ParameterError,
    StructureError,
    gcn_layer,
    gradcheck,
    graph_unpool,
    gru_step,
    knn_graph,
    message_passing,
    metrics,
    synth_cube,
    topk_pool,
)

__all__ = [
    "DimensionError",
    "Graph",
    "IngestionError",
    "Model",
    "ParameterError",
    "StructureError",
    "gcn_layer",
    "gradcheck",
    "graph_unpool",
    "gru_step",
    "knn_graph",
    "message_passing",
    "metrics",
    "synth_cube",
    "topk_pool",
]
