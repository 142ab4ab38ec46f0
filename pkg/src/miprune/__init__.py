"""Mutual-information guided, top-down structured pruning for dense networks."""

__version__ = "0.1.0"

from .nn import (  # noqa: E402
    Batch,
    FreezeSpec,
    LayerSpec,
    MaskSet,
    Network,
    TrainConfig,
    accuracy,
    count_flops,
    forward,
    init_network,
    squeeze,
    train,
)
from .stats import CovarianceModel, LayerPairStats, collect, finalize, logdet_principal  # noqa: E402
from .mi import GreedyState, brute_force_best_subset, conditional_mi, entropy, mutual_information  # noqa: E402
from .selector import Selection, SelectorConfig, select_exact, select_mrmr  # noqa: E402
from .pruner import (  # noqa: E402
    IterativePlan,
    SparsitySchedule,
    iterative_prune,
    layerwise_prune,
    make_schedule,
    retrain_pruned,
)
from .baselines import WeightMaskSet, magnitude_prune, masked_eval, movement_prune  # noqa: E402
