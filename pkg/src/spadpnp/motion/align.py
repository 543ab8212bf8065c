"""Fractional motion compensation of binary histogram frames."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import ndimage

from ..errors import DimensionMismatch, EmptyInput
from ..forward import block_mean
from ..types import DepthMap, HistogramVolume, ImagingModel, MotionField


def motion_proportions(M: int) -> list[float]:
    """``p_j = (M - j) / (M - 1)`` for ``j = 1..M``; a single frame gets ``p = 0``."""
    if M < 1:
        raise EmptyInput("need at least one frame")
    if M == 1:
        return [0.0]
    return [(M - j) / (M - 1) for j in range(1, M + 1)]


def warp_image(img: np.ndarray, dx: np.ndarray, dy: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Backward bilinear warp ``out(p) = img(p - scale * (dx, dy)(p))`` with replicate edges."""
    img = np.asarray(img, dtype=np.float64)
    nx, ny = img.shape
    gx, gy = np.meshgrid(np.arange(nx, dtype=np.float64), np.arange(ny, dtype=np.float64), indexing="ij")
    coords = np.stack([gx - scale * dx, gy - scale * dy])
    return ndimage.map_coordinates(img, coords, order=1, mode="nearest")


def _bilinear_taps(n: int, coord: np.ndarray):
    c = np.clip(coord, 0.0, n - 1)
    i0 = np.floor(c).astype(np.intp)
    i1 = np.minimum(i0 + 1, n - 1)
    return i0, i1, c - i0


def warp_histogram(h: HistogramVolume, motion: MotionField, p_j: float) -> HistogramVolume:
    """Reference ``h`` to the anchor instant by applying ``p_j`` times ``motion``.

    ``motion`` must live on ``h``'s grid (LR pixels, ``dz`` in meters).  The
    spatial shift is a backward bilinear warp with replicate padding; the depth
    shift moves every pixel's histogram by ``p_j * dz / bin_width`` bins with
    linear interpolation, dropping counts pushed past either end.
    """
    if motion.shape != h.spatial_shape:
        raise DimensionMismatch(f"motion grid {motion.shape} differs from histogram grid {h.spatial_shape}")
    if p_j == 0 or motion.is_zero():
        return h
    counts = h.counts
    nx, ny, nbins = counts.shape

    if motion.dx.any() or motion.dy.any():
        gx, gy = np.meshgrid(np.arange(nx, dtype=np.float64), np.arange(ny, dtype=np.float64), indexing="ij")
        x0, x1, wx = _bilinear_taps(nx, gx - p_j * motion.dx)
        y0, y1, wy = _bilinear_taps(ny, gy - p_j * motion.dy)
        wx = wx[..., None]
        wy = wy[..., None]
        counts = ((1 - wx) * (1 - wy) * counts[x0, y0] + wx * (1 - wy) * counts[x1, y0]
                  + (1 - wx) * wy * counts[x0, y1] + wx * wy * counts[x1, y1])

    if motion.dz.any():
        shift = p_j * motion.dz / h.bin_width_m
        src = np.arange(nbins, dtype=np.float64) - shift[..., None]
        z0 = np.floor(src).astype(np.intp)
        w = src - z0
        z1 = z0 + 1
        ok0 = (z0 >= 0) & (z0 < nbins)
        ok1 = (z1 >= 0) & (z1 < nbins)
        c0 = np.take_along_axis(counts, np.clip(z0, 0, nbins - 1), axis=-1)
        c1 = np.take_along_axis(counts, np.clip(z1, 0, nbins - 1), axis=-1)
        counts = (1 - w) * c0 * ok0 + w * c1 * ok1

    return h.replace(counts=counts)


def align_and_sum(frames: Sequence[HistogramVolume], motion: MotionField) -> HistogramVolume:
    """Sum of the ``M`` binary frames of one interval, each warped by ``p_j * motion``."""
    if len(frames) == 0:
        raise EmptyInput("no frames to align")
    shape = frames[0].shape
    for h in frames:
        if h.shape != shape:
            raise DimensionMismatch(f"frame shapes differ: {h.shape} vs {shape}")
    total = np.zeros(shape)
    for h, p in zip(frames, motion_proportions(len(frames))):
        total += warp_histogram(h, motion, p).counts
    return frames[-1].replace(counts=total)


def downscale_motion(motion: MotionField, f: int, dz_reduce: str = "mean") -> MotionField:
    """HR motion to the LR histogram grid: block-reduce, divide ``dx``/``dy`` by ``f``.

    ``dz_reduce`` selects the block statistic for the depth motion
    (``"mean"`` or ``"median"``).
    """
    if f == 1:
        return motion
    dx = block_mean(motion.dx, f) / f
    dy = block_mean(motion.dy, f) / f
    if dz_reduce == "mean":
        dz = block_mean(motion.dz, f)
    elif dz_reduce == "median":
        nx, ny = motion.shape
        dz = np.median(motion.dz.reshape(nx // f, f, ny // f, f), axis=(1, 3))
    else:
        raise ValueError(f"unknown dz reduction {dz_reduce!r}")
    return MotionField(dx, dy, dz)


def estimate_depth_motion(d_prev: DepthMap, d_cur: DepthMap, flow: MotionField) -> MotionField:
    """Depth-direction motion ``d_cur - warp(d_prev, flow)`` on the HR grid."""
    if not (d_prev.shape == d_cur.shape == flow.shape):
        raise DimensionMismatch(f"depth maps {d_prev.shape}, {d_cur.shape} and flow {flow.shape} differ")
    realigned = warp_image(d_prev.depth_m, flow.dx, flow.dy)
    return flow.with_dz(d_cur.depth_m - realigned)
