"""Bit-exact on-disk formats: tensor container, scan files, label packing.

Tensor container layout (little-endian throughout):

    magic   4 bytes  b"PPT1"
    dtype   1 byte   0 = float32, 1 = uint32, 2 = uint8
    ndim    1 byte
    dims    ndim * uint64
    payload row-major element data

Scan files follow the common LiDAR dump convention: the point file holds
consecutive float32 (x, y, z, reflectance) quadruples; the label file holds
one uint32 per point with the semantic class in the low 16 bits and the
instance id in the high 16 bits.

All writers are atomic (write to a temp file, then rename) and all
round-trips are byte-exact.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .fusion import PanopticLabeling
from .grid import PointCloud

MAGIC = b"PPT1"
_CODE_TO_DTYPE = {0: np.dtype("<f4"), 1: np.dtype("<u4"), 2: np.dtype("u1")}
_DTYPE_TO_CODE = {np.dtype("float32"): 0, np.dtype("uint32"): 1, np.dtype("uint8"): 2}
_MAX_NDIM = 8


class FileFormatError(Exception):
    """Base for malformed or inconsistent on-disk data."""


class BadMagicError(FileFormatError):
    pass


class TruncatedFileError(FileFormatError):
    pass


class UnsupportedDtypeError(FileFormatError):
    pass


class CountMismatchError(FileFormatError):
    pass


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write a file atomically: temp file in the target directory + rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_tensor(path: str | os.PathLike, array: np.ndarray) -> None:
    """Serialize an array. Only float32/uint32/uint8 are representable."""
    arr = np.ascontiguousarray(array)
    code = _DTYPE_TO_CODE.get(arr.dtype)
    if code is None:
        raise UnsupportedDtypeError(
            f"dtype {arr.dtype} not supported; convert to float32, uint32, or uint8"
        )
    if arr.ndim < 1 or arr.ndim > _MAX_NDIM:
        raise ValueError(f"tensor rank must be 1..{_MAX_NDIM}, got {arr.ndim}")
    header = MAGIC + bytes([code, arr.ndim])
    header += b"".join(int(d).to_bytes(8, "little") for d in arr.shape)
    payload = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes(order="C")
    atomic_write_bytes(path, header + payload)


def read_tensor(path: str | os.PathLike) -> np.ndarray:
    """Read a tensor container; rejects any structural mismatch."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 4:
        raise TruncatedFileError(f"{path}: file ends inside the magic (got {len(blob)} bytes)")
    if blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {blob[:4]!r} at offset 0, expected {MAGIC!r}")
    if len(blob) < 6:
        raise TruncatedFileError(f"{path}: file ends inside the header at offset {len(blob)}")
    code, ndim = blob[4], blob[5]
    dtype = _CODE_TO_DTYPE.get(code)
    if dtype is None:
        raise UnsupportedDtypeError(f"{path}: unknown dtype code {code} at offset 4")
    if ndim < 1 or ndim > _MAX_NDIM:
        raise FileFormatError(f"{path}: ndim {ndim} at offset 5 outside 1..{_MAX_NDIM}")
    dims_end = 6 + 8 * ndim
    if len(blob) < dims_end:
        raise TruncatedFileError(f"{path}: file ends inside the dims field at offset {len(blob)}")
    dims = tuple(int.from_bytes(blob[6 + 8 * i: 14 + 8 * i], "little") for i in range(ndim))
    count = 1
    for d in dims:
        count *= d
    expected = dims_end + count * dtype.itemsize
    if len(blob) != expected:
        raise CountMismatchError(
            f"{path}: payload is {len(blob) - dims_end} bytes, dims {dims} require {count * dtype.itemsize}"
        )
    return np.frombuffer(blob[dims_end:], dtype=dtype).reshape(dims).copy()


def pack_labels(semantic: np.ndarray, instance: np.ndarray) -> np.ndarray:
    """Combine class/instance arrays into the uint32 label word."""
    sem = np.asarray(semantic, dtype=np.int64)
    inst = np.asarray(instance, dtype=np.int64)
    if sem.min(initial=0) < 0 or sem.max(initial=0) > 0xFFFF:
        raise ValueError("semantic class ids must fit in 16 bits")
    if inst.min(initial=0) < 0 or inst.max(initial=0) > 0xFFFF:
        raise ValueError("instance ids must fit in 16 bits")
    return (sem | (inst << 16)).astype(np.uint32)


def unpack_labels(words: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split packed label words into (semantic, instance) int32 arrays."""
    w = np.asarray(words, dtype=np.uint32)
    return (w & 0xFFFF).astype(np.int32), (w >> 16).astype(np.int32)


def read_points(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) % 16 != 0:
        raise TruncatedFileError(
            f"{path}: point file length {len(blob)} is not a multiple of 16 (x,y,z,r float32 rows)"
        )
    return np.frombuffer(blob, dtype="<f4").reshape(-1, 4).copy()


def write_points(path: str | os.PathLike, points: np.ndarray) -> None:
    pts = np.ascontiguousarray(points, dtype="<f4")
    if pts.ndim != 2 or pts.shape[1] != 4:
        raise ValueError(f"points must have shape (N, 4), got {pts.shape}")
    atomic_write_bytes(path, pts.tobytes(order="C"))


def read_label_words(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) % 4 != 0:
        raise TruncatedFileError(
            f"{path}: label file length {len(blob)} is not a multiple of 4 (uint32 words)"
        )
    return np.frombuffer(blob, dtype="<u4").copy()


def write_label_words(path: str | os.PathLike, words: np.ndarray) -> None:
    w = np.ascontiguousarray(words, dtype="<u4")
    if w.ndim != 1:
        raise ValueError(f"label words must be 1-D, got shape {w.shape}")
    atomic_write_bytes(path, w.tobytes(order="C"))


def read_scan(points_path: str | os.PathLike, labels_path: str | os.PathLike | None = None) -> PointCloud:
    """Load a scan, optionally with its label file, as a PointCloud."""
    pts = read_points(points_path)
    semantic = instance = None
    if labels_path is not None:
        words = read_label_words(labels_path)
        if len(words) != len(pts):
            raise CountMismatchError(
                f"{labels_path}: {len(words)} labels for {len(pts)} points in {points_path}"
            )
        semantic, instance = unpack_labels(words)
    return PointCloud(pts, semantic=semantic, instance=instance)


def write_scan(
    points_path: str | os.PathLike,
    cloud: PointCloud,
    labels_path: str | os.PathLike | None = None,
) -> None:
    write_points(points_path, cloud.points)
    if labels_path is not None:
        if cloud.semantic is None:
            raise ValueError("cloud has no labels to write")
        instance = cloud.instance if cloud.instance is not None else np.zeros(len(cloud), dtype=np.int32)
        write_label_words(labels_path, pack_labels(cloud.semantic, instance))


def write_labeling(path: str | os.PathLike, labeling: PanopticLabeling) -> None:
    write_label_words(path, pack_labels(labeling.semantic, labeling.instance))


def read_labeling(path: str | os.PathLike) -> PanopticLabeling:
    semantic, instance = unpack_labels(read_label_words(path))
    return PanopticLabeling(semantic, instance)
