"""Safe crossover of feed-forward networks via functional neuron alignment."""

from .activation_stats import CorrelationMatrix, LayerActivations, cross_correlation, standardize, within_correlation
from .cca import CCA, CcaConfig, CcaResult, bartlett_significant_count, cca, ridge_cca, svcca
from .crossover import (
    AlignedPair,
    SafeCrossover,
    SweepRecord,
    align_pair,
    default_t_grid,
    interpolate,
    permute_network,
    sweep,
)
from .datasets import SplitDataset, generate_blobs, load_cifar10_batches, load_mnist_idx, split
from .matching import NeuronMapping, bipartite_match, match_cca, semi_match
from .mlp import (
    Architecture,
    Dataset,
    MLPClassifier,
    Network,
    TrainConfig,
    evaluate,
    forward,
    init_network,
    load_network,
    save_network,
    train_adam,
)

__version__ = "0.1.0"
