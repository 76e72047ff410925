"""On-disk formats.

Binary field file::

    offset  size  content
    0       4     magic b"NSV4"
    4       4     format version, uint32 LE
    8       4     n_per_dim, uint32 LE
    12      8     box_length, float64 LE
    20      ...   coefficients, complex128 LE (re, im interleaved),
                  component-major: C order of shape (4, n, n, n, n)

Checkpoints are a field file plus a JSON sidecar ``<name>.json`` with the
step, time, config hash and seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .spectral import SpectralVectorField, WaveGrid

MAGIC = b"NSV4"
VERSION = 1
_HEADER = struct.Struct("<4sIId")


class FieldFormatError(ValueError):
    pass


def write_field(path, field: SpectralVectorField) -> None:
    g = field.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, g.n_per_dim, float(g.box_length)))
        fh.write(np.ascontiguousarray(field.coeffs, dtype="<c16").tobytes())


def read_field(path) -> SpectralVectorField:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FieldFormatError(f"{path}: truncated header")
    magic, version, n, box = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FieldFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FieldFormatError(f"{path}: unsupported version {version}")
    grid = WaveGrid(int(n), box)
    count = 4 * n**4
    body = data[_HEADER.size:]
    if len(body) != 16 * count:
        raise FieldFormatError(f"{path}: expected {16 * count} coefficient bytes, found {len(body)}")
    c = np.frombuffer(body, dtype="<c16").astype(complex).reshape((4,) + grid.shape)
    return SpectralVectorField(grid, c)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def save_checkpoint(path, field: SpectralVectorField, *, step: int, t: float, cfg_hash: str, seed: int,
                    extra: dict | None = None) -> Path:
    path = Path(path)
    write_field(path, field)
    meta = {"step": int(step), "t": float(t), "config_hash": cfg_hash, "seed": int(seed)}
    if extra:
        meta.update(extra)
    side = path.with_suffix(path.suffix + ".json")
    side.write_text(json.dumps(meta, sort_keys=True, indent=1))
    return side


def load_checkpoint(path) -> tuple[SpectralVectorField, dict]:
    path = Path(path)
    f = read_field(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    return SpectralVectorField(f.grid, f.coeffs, solenoidal=True), meta


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1, default=_jsonable) + "\n")


def write_csv(path, columns: dict) -> None:
    """Write equal-length columns; floats use ``repr`` so output is byte-stable."""
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    n = {len(c) for c in cols}
    if len(n) > 1:
        raise ValueError(f"column lengths differ: {dict(zip(names, map(len, cols)))}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([repr(float(v)) if np.ndim(v) == 0 and not isinstance(v, (bool, np.bool_))
                        else v for v in row])


def read_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    return {k: np.array([float(r[i]) for r in body]) for i, k in enumerate(head)}
