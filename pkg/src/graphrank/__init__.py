"""Pairwise learning to rank over graphs with message-passing embedders."""

from .autodiff import ParamStore, Tensor, forward_backward
from .embed import EmbedderConfig
from .graphs import Graph, GraphBatch, PreferencePair, build_batch, load_dataset, save_dataset
from .heads import HeadConfig
from .metrics import count_inversions, kendall_tau_b
from .model import RankModel
from .ranking import Ranking, borda_rank, quicksort_rank, utility_rank
from .training import GridSpec, Splits, TrainConfig, grid_search, sample_pairs, train

__version__ = "0.1.0"
