"""Cross-modal metric learning with a quadruplet partial-order loss.

Core pieces: deterministic distance primitives, a minimal manually
differentiated encoder, the family of batch ranking losses (contrastive,
triplet, bidirectional max-margin, transport-weighted, partial-order),
an entropic optimal-transport solver, mining heuristics, a synthetic
ring benchmark, retrieval metrics with an exact signed-rank test, and an
experiment runner with a CLI.
"""

from .encoder import (
    AdamState,
    EncoderParams,
    EncoderSpec,
    Gradients,
    adam_step,
    backward,
    backward_batch,
    forward,
    forward_batch,
    init_params,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
)
from .losses import (
    LossOutput,
    MarginConfig,
    QuadrupletSets,
    bidirectional_max_margin,
    contrastive_pair_loss,
    ot_ground_costs,
    ot_weighted_loss,
    partial_order_loss,
    triplet_loss,
)
from .metrics import (
    DegenerateSampleError,
    mean_rank,
    median_rank,
    metric_record,
    rank_queries,
    recall_at_k,
    wilcoxon_signed_rank,
)
from .mining import (
    AnnotationMissingError,
    CaptionRecord,
    EmptyNegativeSetError,
    RelevanceLabel,
    RelevanceTable,
    build_quadruplet_sets,
    distance_weighted_negative,
    hardest_negative,
    heuristic_table,
    noun_verb_label,
    semi_hard_negative,
)
from .numerics import (
    ZeroNormError,
    distance_gradients,
    normalize_l2,
    pairwise_distances,
    seeded_rng,
)
from .rings import LabeledPoint, RingSpec, generate_rings, ring_relevance, split_budget
from .sinkhorn import (
    SinkhornUnderflowError,
    TransportPlan,
    TransportProblem,
    plan_entropy,
    solve_sinkhorn,
    transport_cost,
    uniform_problem,
)

__version__ = "0.1.0"
