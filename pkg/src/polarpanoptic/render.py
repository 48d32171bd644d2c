"""Static top-down renderer for BEV tensors (binary PPM, bit-deterministic)."""

from __future__ import annotations

import os

import numpy as np

from .formats import atomic_write_bytes
from .grid import CellIndex, PolarGridConfig

_BACKGROUND = (24, 24, 24)
_CENTER_MARK = (255, 32, 32)
_PALETTE = (
    (70, 130, 180), (220, 20, 60), (119, 11, 32), (0, 0, 142), (0, 0, 230),
    (106, 0, 228), (0, 60, 100), (0, 80, 100), (128, 64, 128), (244, 35, 232),
    (250, 170, 160), (230, 150, 140), (70, 70, 70), (190, 153, 153), (107, 142, 35),
    (152, 251, 152), (0, 130, 180), (153, 153, 153), (250, 170, 30), (220, 220, 0),
)


def class_color(class_id: int) -> tuple[int, int, int]:
    return _PALETTE[class_id % len(_PALETTE)]


def render_bev(
    labels: np.ndarray,
    cfg: PolarGridConfig,
    centers: list[CellIndex] | None = None,
) -> np.ndarray:
    """Color image of a (H, W) or (H, W, Z) label grid with center marks.

    For a voxel grid each pixel takes the class of its topmost non-ignore
    voxel. Centers are drawn as 3x3 crosses.

    Returns:
        (H, W, 3) uint8.
    """
    arr = np.asarray(labels)
    if arr.ndim == 3:
        if arr.shape != (cfg.H, cfg.W, cfg.Z):
            raise ValueError(f"shape mismatch: labels {arr.shape} vs grid {(cfg.H, cfg.W, cfg.Z)}")
        occupied = arr != cfg.ignore_class
        top = (cfg.Z - 1) - occupied[:, :, ::-1].argmax(axis=2)
        flat = np.take_along_axis(arr, top[:, :, None], axis=2)[:, :, 0]
        flat = np.where(occupied.any(axis=2), flat, cfg.ignore_class)
    elif arr.ndim == 2:
        if arr.shape != (cfg.H, cfg.W):
            raise ValueError(f"shape mismatch: labels {arr.shape} vs grid {(cfg.H, cfg.W)}")
        flat = arr
    else:
        raise ValueError(f"labels must be 2-D or 3-D, got shape {arr.shape}")
    img = np.empty((cfg.H, cfg.W, 3), dtype=np.uint8)
    img[:] = _BACKGROUND
    for c in np.unique(flat):
        if c == cfg.ignore_class:
            continue
        img[flat == c] = class_color(int(c))
    for c in centers or []:
        for di, dj in ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)):
            i, j = c.i + di, c.j + dj
            if 0 <= i < cfg.H and 0 <= j < cfg.W:
                img[i, j] = _CENTER_MARK
    return img


def render_heatmap(heatmap: np.ndarray) -> np.ndarray:
    """Grayscale image of a heatmap in [0, 1]."""
    h = np.clip(np.asarray(heatmap, dtype=np.float64), 0.0, 1.0)
    gray = np.round(h * 255.0).astype(np.uint8)
    return np.repeat(gray[:, :, None], 3, axis=2)


def write_ppm(path: str | os.PathLike, image: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 image as binary PPM (P6)."""
    img = np.ascontiguousarray(image, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"image must have shape (H, W, 3), got {img.shape}")
    header = f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
    atomic_write_bytes(path, header + img.tobytes(order="C"))
