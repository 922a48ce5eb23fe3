"""Social recommendation on a learned heterogeneous global graph.

The package joins three subgraphs (user-user social links, user-item ratings
partitioned by level, item-item similarities) into one global graph, refines
the user-user / item-item structure per mini-batch by learned similarity, and
predicts ratings with heterogeneous message passing plus a layer-attention
readout. Training optimizes a hybrid of rating MSE and graph-regularization
losses on a small built-in reverse-mode autodiff engine.
"""

from .engine import ShapeError, Tape, Tensor, backward
from .graph import SOCIAL, RATING, SIMILARITY, HeteroGlobalGraph, NodeId, NodeKind, RatingScale
from .data import (
    DatasetBundle,
    InteractionTriple,
    build_bundle,
    build_graph,
    generate_synthetic,
    load_links,
    load_ratings,
    split,
    train_rating_matrix,
)
from .learner import (
    ADD_ATTENTION,
    ATTENTION,
    WEIGHTED_COSINE,
    AnchorSet,
    OpCounter,
    RefinedAdjacency,
    SimilarityConfig,
    build_item_item_edges,
    fuse_with_initial,
    learn_subgraph,
    learn_subgraph_anchored,
    pairwise_similarity,
    sample_anchors,
    truncate_top_l,
)
from .hgnn import BatchSubgraph, HgnnLayerParams, build_batch_subgraph, hgnn_forward
from .predictor import MlpParams, ReadoutParams, layer_attention_readout, predict_rating
from .losses import (
    LossWeights,
    connectivity_sparsity,
    graph_learner_loss,
    hybrid_loss,
    rating_loss,
    smoothness_loss,
    symmetrize,
)
from .optim import AdamState, NanGradientError, adam_step, gaussian_init, l2_penalty
from .model import ModelParams, forward_batch, init_model
from .trainer import (
    MetricsReport,
    TrainConfig,
    TrainResult,
    TrainedState,
    compute_metrics,
    evaluate_state,
    load_checkpoint,
    predict_pair,
    prepare_state,
    save_checkpoint,
    train,
)
from .bench import scaling_bench

__version__ = "0.1.0"
