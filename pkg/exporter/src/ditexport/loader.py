"""Checkpoint loading and state-dict key lookup.

Handles plain torch pickles, wrapped training checkpoints (model / ema /
state_dict / module nesting), and safetensors files. Everything is returned
as float32 numpy arrays; the exporter never keeps torch tensors around.
"""

from __future__ import annotations

import fnmatch
from pathlib import Path

import numpy as np

from .errors import ExportError, KeyNotFound

_WRAPPER_KEYS = ("ema", "model", "state_dict", "module", "net")

# state-dict naming used by the DiT lineage (DiT, SiT, REPA, MDT,
# LightningDiT, MG all inherit it); other families need explicit patterns
FAMILY_PATTERNS = {
    "dit": {
        "class_table": ["y_embedder.embedding_table.weight"],
        "t_mlp": ["t_embedder.mlp.0.weight", "t_embedder.mlp.0.bias",
                  "t_embedder.mlp.2.weight", "t_embedder.mlp.2.bias"],
    },
    "generic": {
        "class_table": ["*y_embedder*embedding*weight", "*label_emb*weight",
                        "*class_emb*weight", "*embedding_table*weight"],
        "t_mlp": ["*t_embedder*mlp*0*weight", "*t_embedder*mlp*0*bias",
                  "*t_embedder*mlp*2*weight", "*t_embedder*mlp*2*bias"],
    },
}


def _unwrap(obj) -> dict:
    if not isinstance(obj, dict):
        raise ExportError(f"checkpoint top level is {type(obj).__name__}, expected a dict")
    # descend into the innermost dict that looks like a flat state dict
    for key in _WRAPPER_KEYS:
        inner = obj.get(key)
        if isinstance(inner, dict) and inner:
            sample = next(iter(inner.values()))
            if hasattr(sample, "shape") or isinstance(sample, dict):
                return _unwrap(inner) if isinstance(sample, dict) else inner
    return obj


def load_state_dict(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise ExportError(f"no such checkpoint: {path}")
    if path.suffix == ".safetensors":
        from safetensors.numpy import load_file

        raw = load_file(str(path))
        return {k: np.asarray(v) for k, v in raw.items()}

    import torch

    obj = torch.load(str(path), map_location="cpu", weights_only=True)
    state = _unwrap(obj)
    out = {}
    for k, v in state.items():
        if hasattr(v, "detach"):
            out[k] = v.detach().to(torch.float32).cpu().numpy()
    if not out:
        raise ExportError(f"{path}: no tensors found in checkpoint")
    return out


def _embedding_like(keys) -> list[str]:
    return [k for k in keys if any(s in k.lower() for s in ("embed", "label", "class", "y_"))]


def find_key(state: dict[str, np.ndarray], patterns: list[str]) -> str:
    """First key matching any fnmatch pattern, in pattern order."""
    for pattern in patterns:
        if pattern in state:
            return pattern
        hits = sorted(fnmatch.filter(state.keys(), pattern))
        if hits:
            return hits[0]
    raise KeyNotFound("|".join(patterns), _embedding_like(sorted(state.keys())))


def patterns_for(family: str, kind: str, override: str | None = None) -> list[str]:
    if override:
        return [override]
    fam = FAMILY_PATTERNS.get(family.lower())
    if fam is None:
        raise ExportError(
            f"unknown model family {family!r}; known: {sorted(FAMILY_PATTERNS)} "
            "(pass an explicit key pattern for anything else)"
        )
    return fam[kind]
