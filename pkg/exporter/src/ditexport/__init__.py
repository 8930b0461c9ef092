"""Checkpoint-to-NPY exporter for diffusion-transformer conditioning tensors."""

from .embedder import TimestepMlp, sinusoidal_frequency_embedding
from .errors import ExportError, KeyNotFound, ShapeUnexpected
from .export import (
    export_all,
    export_class_table,
    export_condition_vectors,
    export_timestep_embeddings,
)
from .loader import load_state_dict

__version__ = "0.1.0"
