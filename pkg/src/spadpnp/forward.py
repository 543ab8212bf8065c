"""Noiseless image formation shared by the simulator and the solver."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, OutOfRange
from .types import ImagingModel

# HR rows of histograms materialized at once; bounds peak memory at full 896x1024 scale
_CHUNK_ELEMS = 1 << 22


def block_mean(a: np.ndarray, f: int) -> np.ndarray:
    """Uniform ``f x f`` box filter followed by ``f``-fold decimation on axes 0 and 1."""
    a = np.asarray(a, dtype=np.float64)
    if f == 1:
        return a.copy()
    nx, ny = a.shape[0], a.shape[1]
    if nx % f or ny % f:
        raise DimensionMismatch(f"shape {a.shape[:2]} not divisible by factor {f}")
    return a.reshape(nx // f, f, ny // f, f, *a.shape[2:]).mean(axis=(1, 3))


def block_histogram(depth_hr: np.ndarray, refl_hr: np.ndarray, model: ImagingModel,
                    background: float | None = None) -> np.ndarray:
    """Low-resolution expected histogram ``[(r * g(z, d) + b) * k] downsampled by f``.

    The per-HR-pixel histograms are formed first and block-averaged, so
    mixed-depth LR pixels carry several peaks.
    """
    depth_hr = np.asarray(depth_hr, dtype=np.float64)
    refl_hr = np.asarray(refl_hr, dtype=np.float64)
    if depth_hr.shape != refl_hr.shape:
        raise DimensionMismatch(f"depth {depth_hr.shape} and reflectivity {refl_hr.shape} differ")
    if depth_hr.min() < 0 or depth_hr.max() > model.max_depth_m:
        raise OutOfRange(f"depth outside [0, {model.max_depth_m}] m")
    b = model.background_per_bin if background is None else background
    f = model.upsample_factor
    nx, ny = depth_hr.shape
    if nx % f or ny % f:
        raise DimensionMismatch(f"HR shape {depth_hr.shape} not divisible by factor {f}")
    out = np.empty((nx // f, ny // f, model.nbins))
    lr_rows = max(1, _CHUNK_ELEMS // (f * ny * model.nbins))
    for x0 in range(0, nx // f, lr_rows):
        x1 = min(nx // f, x0 + lr_rows)
        sl = slice(x0 * f, x1 * f)
        hist = refl_hr[sl, :, None] * model.irf(depth_hr[sl])
        out[x0:x1] = block_mean(hist, f)
    out += b
    return out
