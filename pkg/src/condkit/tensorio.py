"""Neutral tensor file format (NPY v1.0 subset) and JSON report serialization.

Only C-order, little-endian float32/float64 arrays are accepted; anything else
is rejected loudly instead of silently converted. Writes are byte-deterministic
so fixture files and re-exports can be compared with plain ``cmp``.
"""

from __future__ import annotations

import ast
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import (
    FortranOrderUnsupported,
    IoFailure,
    MagicMismatch,
    NonFiniteValue,
    NpyFormatError,
    TruncatedPayload,
    UnsupportedDtype,
)

MAGIC = b"\x93NUMPY\x01\x00"
HEADER_ALIGN = 64

_DESCR_TO_DTYPE = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}
_KIND_CHOICES = ("class_table", "timestep_grid", "condition")


def validate_tensor(arr: np.ndarray) -> np.ndarray:
    """Check the array is a supported tensor; returns it in C order."""
    # asarray (not ascontiguousarray) so rank-0 shapes survive
    arr = np.asarray(arr, order="C")
    if arr.dtype not in (np.float32, np.float64):
        raise UnsupportedDtype(f"dtype {arr.dtype} is not float32/float64")
    return arr


def _format_header(descr: str, shape: tuple[int, ...]) -> bytes:
    # Literal dict syntax identical to the reference writer, padded with
    # spaces so the whole header block is a multiple of 64 bytes, newline last.
    text = "{'descr': '%s', 'fortran_order': False, 'shape': %s, }" % (
        descr,
        repr(shape),
    )
    unpadded = len(MAGIC) + 2 + len(text) + 1
    pad = (-unpadded) % HEADER_ALIGN
    return (text + " " * pad + "\n").encode("latin1")


def write_npy(arr: np.ndarray, path: str | Path) -> None:
    """Write ``arr`` as an NPY v1.0 file readable by any conforming reader."""
    arr = validate_tensor(arr)
    descr = "<f4" if arr.dtype == np.float32 else "<f8"
    header = _format_header(descr, arr.shape)
    payload = arr.astype(_DESCR_TO_DTYPE[descr], copy=False).tobytes(order="C")
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<H", len(header)))
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_npy(path: str | Path) -> np.ndarray:
    """Read an NPY v1.0 file; only the supported subset is accepted."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    if len(raw) < 10 or raw[:6] != MAGIC[:6]:
        raise MagicMismatch(f"{path}: not an NPY file")
    if raw[6:8] != MAGIC[6:8]:
        raise MagicMismatch(f"{path}: unsupported NPY version {raw[6]}.{raw[7]}")
    (hlen,) = struct.unpack("<H", raw[8:10])
    header_bytes = raw[10 : 10 + hlen]
    if len(header_bytes) != hlen or not header_bytes.endswith(b"\n"):
        raise NpyFormatError(f"{path}: truncated or unterminated header")
    try:
        header = ast.literal_eval(header_bytes.decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise NpyFormatError(f"{path}: malformed header literal") from exc
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise NpyFormatError(f"{path}: header keys {sorted(header)} unexpected")

    descr = header["descr"]
    if descr not in _DESCR_TO_DTYPE:
        raise UnsupportedDtype(f"{path}: descr {descr!r} not in supported set {sorted(_DESCR_TO_DTYPE)}")
    if header["fortran_order"]:
        raise FortranOrderUnsupported(f"{path}: fortran_order files are not accepted")
    shape = header["shape"]
    if not isinstance(shape, tuple) or not all(isinstance(n, int) and n >= 0 for n in shape):
        raise NpyFormatError(f"{path}: bad shape {shape!r}")

    dtype = _DESCR_TO_DTYPE[descr]
    expected = dtype.itemsize * math.prod(shape)
    payload = raw[10 + hlen :]
    if len(payload) != expected:
        raise TruncatedPayload(f"{path}: payload {len(payload)} bytes, expected {expected}")
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape)
    # native-endian copy; bit pattern preserved (little-endian host assumed)
    return arr.astype(dtype.newbyteorder("="), copy=True)


# --- JSON reports ------------------------------------------------------------

def _check_finite(obj: Any, path: str = "$") -> None:
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise NonFiniteValue(f"non-finite number at {path}")
        return
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{path}.{k}")
        return
    if isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _check_finite(v, f"{path}[{i}]")
        return
    raise NonFiniteValue(f"unserializable value of type {type(obj).__name__} at {path}")


def report_bytes(report: dict) -> bytes:
    """Canonical serialized form: sorted keys, shortest round-trip floats."""
    _check_finite(report)
    return (json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n").encode("utf-8")


def write_report(report: dict, path: str | Path) -> None:
    data = report_bytes(report)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_report(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return json.loads(fh.read().decode("utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


# --- embedding sets with sidecar metadata ------------------------------------

@dataclass
class EmbeddingSet:
    """A rank-2 collection of embeddings plus provenance metadata.

    ``kind`` is one of class_table / timestep_grid / condition; condition sets
    must record the timestep at which they were formed.
    """

    matrix: np.ndarray
    kind: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = validate_tensor(self.matrix)
        if self.matrix.ndim != 2:
            raise NpyFormatError(f"embedding matrix must be rank-2, got shape {self.matrix.shape}")
        if self.kind not in _KIND_CHOICES:
            raise NpyFormatError(f"kind {self.kind!r} not in {_KIND_CHOICES}")
        if self.kind == "condition" and self.meta.get("timestep_value") is None:
            raise NpyFormatError("condition embeddings require meta.timestep_value")


def meta_path(npy_path: str | Path) -> Path:
    p = Path(npy_path)
    return p.with_name(p.stem + ".meta.json")


def write_embedding_set(es: EmbeddingSet, npy_path: str | Path) -> None:
    write_npy(es.matrix, npy_path)
    sidecar = {
        "model_name": es.meta.get("model_name", ""),
        "kind": es.kind,
        "timestep_value": es.meta.get("timestep_value"),
        "notes": es.meta.get("notes", ""),
    }
    write_report(sidecar, meta_path(npy_path))


def read_embedding_set(npy_path: str | Path, kind: str | None = None) -> EmbeddingSet:
    """Load matrix + sidecar; ``kind`` overrides a missing sidecar."""
    matrix = read_npy(npy_path)
    side = meta_path(npy_path)
    meta: dict = {}
    if side.exists():
        meta = read_report(side)
        kind = kind or meta.get("kind")
    if kind is None:
        raise NpyFormatError(f"{npy_path}: no sidecar and no explicit kind")
    return EmbeddingSet(matrix=matrix, kind=kind, meta=meta)
