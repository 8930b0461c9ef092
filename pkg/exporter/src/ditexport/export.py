"""Export operations: class table, timestep grid, condition vectors, manifest.

Output files are NPY v1.0 float32 plus a `<name>.meta.json` sidecar; a
manifest.json ties the batch together. The exporter computes no metrics:
the analysis toolkit consumes these files through its documented formats.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .embedder import TimestepMlp
from .errors import ExportError, ShapeUnexpected
from .loader import find_key, load_state_dict, patterns_for


def write_npy_f32(arr: np.ndarray, path: str | Path) -> None:
    np.save(str(path), np.ascontiguousarray(arr, dtype="<f4"), allow_pickle=False)


def _write_sidecar(path: Path, model_name: str, kind: str, timestep_value=None, notes: str = "") -> None:
    sidecar = {
        "model_name": model_name,
        "kind": kind,
        "timestep_value": timestep_value,
        "notes": notes,
    }
    meta = path.with_name(path.stem + ".meta.json")
    meta.write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _entry(name: str, kind: str, arr: np.ndarray, output_file: str) -> dict:
    return {"name": name, "kind": kind, "shape": list(arr.shape), "output_file": output_file}


def export_class_table(
    state: dict[str, np.ndarray],
    out_path: str | Path,
    model_name: str,
    family: str = "dit",
    key_pattern: str | None = None,
) -> dict:
    key = find_key(state, patterns_for(family, "class_table", key_pattern))
    table = np.asarray(state[key])
    if table.ndim != 2:
        raise ShapeUnexpected(f"{key} has shape {table.shape}, expected a rank-2 table")
    out_path = Path(out_path)
    write_npy_f32(table, out_path)
    _write_sidecar(out_path, model_name, "class_table", notes=f"state-dict key {key}; {table.shape[0]} rows")
    return _entry(key, "class_table", table, out_path.name)


def load_timestep_mlp(
    state: dict[str, np.ndarray],
    family: str = "dit",
    key_patterns: list[str] | None = None,
) -> TimestepMlp:
    pats = key_patterns or patterns_for(family, "t_mlp")
    if len(pats) != 4:
        raise ExportError(f"t-embedder needs 4 key patterns (w1, b1, w2, b2), got {len(pats)}")
    keys = [find_key(state, [p]) for p in pats]
    return TimestepMlp(state[keys[0]], state[keys[1]], state[keys[2]], state[keys[3]])


def export_timestep_embeddings(
    state: dict[str, np.ndarray],
    timesteps: list[float],
    out_path: str | Path,
    model_name: str,
    family: str = "dit",
) -> dict:
    if not timesteps:
        raise ExportError("timestep grid is empty")
    mlp = load_timestep_mlp(state, family)
    grid = mlp(timesteps)
    out_path = Path(out_path)
    write_npy_f32(grid, out_path)
    _write_sidecar(out_path, model_name, "timestep_grid",
                   notes=f"timesteps {list(map(float, timesteps))}")
    return _entry("t_embedder", "timestep_grid", grid, out_path.name)


def export_condition_vectors(
    class_table_npy: str | Path,
    t_emb_npy: str | Path,
    out_path: str | Path,
    model_name: str,
    t_row: int = 0,
    timestep_value: float | None = None,
) -> dict:
    table = np.load(str(class_table_npy))
    grid = np.load(str(t_emb_npy))
    if grid.ndim == 1:
        grid = grid[None, :]
    if table.ndim != 2 or grid.shape[1] != table.shape[1]:
        raise ShapeUnexpected(f"dimension mismatch: table {table.shape} vs grid {grid.shape}")
    if not (0 <= t_row < grid.shape[0]):
        raise ExportError(f"t_row {t_row} outside 0..{grid.shape[0] - 1}")
    cond = table.astype(np.float64) + grid[t_row].astype(np.float64)
    out_path = Path(out_path)
    write_npy_f32(cond, out_path)
    _write_sidecar(out_path, model_name, "condition", timestep_value=timestep_value,
                   notes=f"class_table + timestep row {t_row}")
    return _entry("condition", "condition", cond, out_path.name)


def export_all(
    checkpoint: str | Path,
    out_dir: str | Path,
    model_name: str,
    timesteps: list[float],
    family: str = "dit",
    class_key: str | None = None,
) -> dict:
    """One-shot export: class table, t grid, condition vectors, manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state = load_state_dict(checkpoint)

    entries = [
        export_class_table(state, out_dir / "class_table.npy", model_name, family, class_key),
        export_timestep_embeddings(state, timesteps, out_dir / "t_emb.npy", model_name, family),
        export_condition_vectors(
            out_dir / "class_table.npy",
            out_dir / "t_emb.npy",
            out_dir / "condition.npy",
            model_name,
            t_row=0,
            timestep_value=float(timesteps[0]),
        ),
    ]
    manifest = {
        "model_name": model_name,
        "checkpoint_source": str(checkpoint),
        "tensors": entries,
        "timestep_grid": [float(t) for t in timesteps],
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return manifest
