"""Flat-file formats: binary feature matrices, checkpoints, and TSV/JSONL sidecars."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

FEATURE_MAGIC = b"NTDF"
CHECKPOINT_MAGIC = b"NTDP"
FORMAT_VERSION = 1


class FileFormatError(ValueError):
    """A file does not conform to its declared on-disk format."""


def write_feature_file(path, matrix: np.ndarray) -> None:
    """Write a row-major little-endian float32 matrix with an NTDF header."""
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise FileFormatError(f"feature matrix must be 2-D, got shape {matrix.shape}")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", matrix.shape[0]))
        fh.write(struct.pack("<I", matrix.shape[1]))
        fh.write(matrix.tobytes())


def read_feature_file(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 20 or raw[:4] != FEATURE_MAGIC:
        raise FileFormatError(f"{path}: not a feature file (bad magic)")
    version, = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported feature file version {version}")
    rows, = struct.unpack_from("<Q", raw, 8)
    dim, = struct.unpack_from("<I", raw, 16)
    if dim <= 0:
        raise FileFormatError(f"{path}: feature dimension must be positive")
    payload = raw[20:]
    expected = rows * dim * 4
    if len(payload) != expected:
        raise FileFormatError(
            f"{path}: payload holds {len(payload)} bytes, header implies {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(rows, dim)
    return data.astype(np.float32)


def write_index_file(path, labels) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, label in enumerate(labels):
            fh.write(f"{i}\t{label}\n")


def read_index_file(path) -> dict[str, int]:
    """Map node label -> row index. Rejects duplicate labels."""
    mapping: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FileFormatError(f"{path}:{lineno}: expected row_index<TAB>label")
            row, label = parts
            try:
                row_i = int(row)
            except ValueError as exc:
                raise FileFormatError(f"{path}:{lineno}: bad row index {row!r}") from exc
            if label in mapping:
                raise FileFormatError(f"{path}:{lineno}: duplicate label {label!r}")
            mapping[label] = row_i
    return mapping


def write_checkpoint(path, params: dict[str, np.ndarray]) -> None:
    """Per-tensor records: name length, name, rank, dims, float32 payload."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        for name, value in params.items():
            value = np.ascontiguousarray(value, dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", value.ndim))
            for d in value.shape:
                fh.write(struct.pack("<Q", d))
            fh.write(value.tobytes())


def read_checkpoint(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != CHECKPOINT_MAGIC:
        raise FileFormatError(f"{path}: not a checkpoint file (bad magic)")
    version, = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported checkpoint version {version}")
    params: dict[str, np.ndarray] = {}
    offset = 8
    while offset < len(raw):
        name_len, = struct.unpack_from("<I", raw, offset)
        offset += 4
        name = raw[offset:offset + name_len].decode("utf-8")
        offset += name_len
        rank, = struct.unpack_from("<I", raw, offset)
        offset += 4
        dims = []
        for _ in range(rank):
            d, = struct.unpack_from("<Q", raw, offset)
            dims.append(d)
            offset += 8
        count = int(np.prod(dims)) if dims else 1
        payload = raw[offset:offset + count * 4]
        if len(payload) != count * 4:
            raise FileFormatError(f"{path}: truncated payload for tensor {name!r}")
        offset += count * 4
        params[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    return params


def read_sentences(path) -> dict[str, str]:
    """JSONL of {"id": ..., "text": ...} objects keyed by id."""
    sentences: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FileFormatError(f"{path}:{lineno}: invalid JSON") from exc
            if not isinstance(obj, dict) or "id" not in obj or "text" not in obj:
                raise FileFormatError(f"{path}:{lineno}: expected id and text fields")
            sentences[str(obj["id"])] = str(obj["text"])
    return sentences


def write_sentences(path, sentences: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sid, text in sentences.items():
            fh.write(json.dumps({"id": sid, "text": text}) + "\n")
