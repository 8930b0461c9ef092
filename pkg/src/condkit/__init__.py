"""Forensics toolkit for conditional embeddings in AdaLN diffusion transformers."""

from . import adaln, errors, metrics, pruning, sampling, sparse, tensorio, toydit
from .adaln import adaln_forward, condition_vector, embed_timestep, modulation
from .metrics import (
    analyze_embedding_set,
    cosine_matrix,
    cosine_summary,
    head_tail_split,
    magnitude_histogram,
    npr,
    participation_ratio,
    sparsity_tail,
    variance_per_dim,
)
from .pruning import PruneConfig, PruneSchedule, prune, removed_count, should_prune
from .sampling import compare_runs, ddpm_sample, eval_mixture, sample_all_classes
from .sparse import SparseVec, bench, densify, sparsify, spmv
from .tensorio import EmbeddingSet, read_npy, read_report, write_npy, write_report
from .toydit import (
    ModelParams,
    ToyConfig,
    diffusion_schedule,
    forward_eps,
    loss_and_grads,
    make_dataset,
    q_sample,
    train,
)

__version__ = "0.1.0"
