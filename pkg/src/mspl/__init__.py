"""Multi-space prototypical learning for few-shot network intrusion detection."""
from .dataio import Dataset, DatasetSchema, FeatureStats, load_csv, split, standardize, stratified_sample, synth_generate
from .embedder import Architecture, ModelParams
from .episodic import Episode, EpisodePlan, create_episodes, sample_class
from .evaluator import EvalReport, SeedAggregate, aggregate_seeds, evaluate
from .metric_spaces import MetricId, MetricWeights, compute_distances, fuse, normalize_metric
from .prototypes import EmaParams, compute_prototypes, ema_init, ema_update
from .trainer import TrainConfig, TrainHistory, train

__version__ = "0.1.0"
