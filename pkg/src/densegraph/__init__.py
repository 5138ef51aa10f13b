"""Density-aware conditional graph generation with a WGAN-GP and a GCN critic."""
from .checkpoint import Checkpoint, CheckpointError, generate_corpus, load_checkpoint, save_checkpoint
from .critic import Critic, CriticConfig, critic_score, gcn_layer, global_mean_pool
from .datasets import (ClassStatistics, DatasetParseError, LabeledGraphSet,
                       compute_class_statistics, load_tudataset, save_tudataset, split)
from .evaluation import (EvalReport, HistogramSpec, clustering_histogram, combined_mmd,
                         degree_histogram, evaluate, mmd2, novelty, spectral_histogram,
                         uniqueness)
from .generator import (Generator, GeneratorConfig, SoftGraph, TemperatureSchedule,
                        generate_random_baseline, sample_size, select_edges, temperature)
from .graph import (DenseGraph, Graph, GraphValidationError, degree_sequence, new_graph,
                    permute, to_dense, wl_hash)
from .training import (TrainConfig, critic_step, generator_step, gradient_penalty,
                       interpolate_pair, load_config, train)

__version__ = "0.1.0"
