"""Coarse-to-fine TV-L1 optical flow (duality-based primal-dual scheme).

The flow ``(u1, u2)`` returned for ``(I0, I1)`` satisfies ``I1(p + u(p)) ~ I0(p)``:
content at ``p`` in the first image is found at ``p + u`` in the second.
``u1`` runs along axis 0 and ``u2`` along axis 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import DimensionMismatch
from ..types import IntensityFrame, MotionField

_GRAD_EPS = 1e-10


@dataclass(frozen=True)
class FlowParams:
    lam: float = 0.15          # data-term weight (images scaled to [0, 255])
    theta: float = 0.3         # coupling between u and v
    tau: float = 0.25          # dual step
    levels: int = 5
    zoom: float = 0.5          # pyramid downscaling per level
    warps: int = 5
    iterations: int = 300      # inner iterations per warp
    tol: float = 0.01          # stop when RMS update falls below this
    median_size: int = 5       # median filter applied to the flow after every warp; 0 disables
    min_size: int = 16         # coarsest pyramid level keeps at least this many pixels per axis
    global_init: bool = True   # seed the coarsest level with the phase-correlation translation


def _forward_gradient(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:-1] = u[1:] - u[:-1]
    gy[:, :-1] = u[:, 1:] - u[:, :-1]
    return gx, gy


def _divergence(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Negative adjoint of :func:`_forward_gradient`."""
    d = np.zeros_like(px)
    d[0] = px[0]
    d[1:-1] = px[1:-1] - px[:-2]
    d[-1] = -px[-2]
    d[:, 0] += py[:, 0]
    d[:, 1:-1] += py[:, 1:-1] - py[:, :-2]
    d[:, -1] += -py[:, -2]
    return d


def _normalize_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi - lo <= 0:
        return np.zeros_like(a), np.zeros_like(b)
    scale = 255.0 / (hi - lo)
    return (a - lo) * scale, (b - lo) * scale


def _pyramid(img: np.ndarray, shapes: list[tuple[int, int]], zoom: float) -> list[np.ndarray]:
    sigma = 0.6 * math.sqrt(1.0 / zoom**2 - 1.0)
    levels = [img]
    for shape in shapes[1:]:
        prev = ndimage.gaussian_filter(levels[-1], sigma, mode="nearest")
        factors = (shape[0] / prev.shape[0], shape[1] / prev.shape[1])
        levels.append(ndimage.zoom(prev, factors, order=1, mode="nearest", grid_mode=True))
    return levels


def _resize_flow(u: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    factors = (shape[0] / u.shape[0], shape[1] / u.shape[1])
    return ndimage.zoom(u, factors, order=1, mode="nearest", grid_mode=True)


def _tvl1_level(I0, I1, u1, u2, p: FlowParams):
    nx, ny = I0.shape
    I1x, I1y = np.gradient(I1)
    coeffs = [ndimage.spline_filter(a, order=3, mode="nearest") for a in (I1, I1x, I1y)]
    gx, gy = np.meshgrid(np.arange(nx, dtype=np.float64), np.arange(ny, dtype=np.float64), indexing="ij")
    p11 = np.zeros_like(I0)
    p12 = np.zeros_like(I0)
    p21 = np.zeros_like(I0)
    p22 = np.zeros_like(I0)
    l_t = p.lam * p.theta
    taut = p.tau / p.theta
    tol2 = p.tol * p.tol

    for _ in range(p.warps):
        coords = np.stack([gx + u1, gy + u2])
        I1w, I1wx, I1wy = (
            ndimage.map_coordinates(c, coords, order=3, mode="nearest", prefilter=False) for c in coeffs
        )
        grad = I1wx**2 + I1wy**2
        rho_c = I1w - I1wx * u1 - I1wy * u2 - I0
        safe_grad = np.where(grad > _GRAD_EPS, grad, 1.0)

        for _ in range(p.iterations):
            rho = rho_c + I1wx * u1 + I1wy * u2
            lo = rho < -l_t * grad
            hi = rho > l_t * grad
            step = np.where(lo, -l_t, np.where(hi, l_t, np.where(grad > _GRAD_EPS, rho / safe_grad, 0.0)))
            v1 = u1 - step * I1wx
            v2 = u2 - step * I1wy

            u1_old, u2_old = u1, u2
            u1 = v1 + p.theta * _divergence(p11, p12)
            u2 = v2 + p.theta * _divergence(p21, p22)
            err = ((u1 - u1_old) ** 2 + (u2 - u2_old) ** 2).mean()

            u1x, u1y = _forward_gradient(u1)
            u2x, u2y = _forward_gradient(u2)
            ng1 = 1.0 + taut * np.hypot(u1x, u1y)
            ng2 = 1.0 + taut * np.hypot(u2x, u2y)
            p11 = (p11 + taut * u1x) / ng1
            p12 = (p12 + taut * u1y) / ng1
            p21 = (p21 + taut * u2x) / ng2
            p22 = (p22 + taut * u2y) / ng2
            if err < tol2:
                break

        if p.median_size > 1:
            u1 = ndimage.median_filter(u1, size=p.median_size, mode="nearest")
            u2 = ndimage.median_filter(u2, size=p.median_size, mode="nearest")
    return u1, u2


def global_shift(I0: np.ndarray, I1: np.ndarray) -> tuple[float, float]:
    """Dominant integer translation from ``I0`` to ``I1`` by phase correlation."""
    win = np.outer(np.hanning(I0.shape[0]), np.hanning(I0.shape[1]))
    F0 = np.fft.rfft2((I0 - I0.mean()) * win)
    F1 = np.fft.rfft2((I1 - I1.mean()) * win)
    cross = F1 * np.conj(F0)
    cross /= np.maximum(np.abs(cross), 1e-12)
    corr = np.fft.irfft2(cross, s=I0.shape)
    k = np.unravel_index(np.argmax(corr), corr.shape)
    return tuple(float(ki - n if ki > n // 2 else ki) for ki, n in zip(k, I0.shape))


def pyramid_shapes(shape: tuple[int, int], params: FlowParams) -> list[tuple[int, int]]:
    shapes = [tuple(shape)]
    while len(shapes) < params.levels:
        nx, ny = shapes[-1]
        nxt = (int(round(nx * params.zoom)), int(round(ny * params.zoom)))
        if min(nxt) < params.min_size:
            break
        shapes.append(nxt)
    return shapes


def tvl1(I0: np.ndarray, I1: np.ndarray, params: FlowParams | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Dense flow from ``I0`` to ``I1`` as two arrays ``(u1, u2)``."""
    params = params or FlowParams()
    I0 = np.asarray(I0, dtype=np.float64)
    I1 = np.asarray(I1, dtype=np.float64)
    if I0.shape != I1.shape:
        raise DimensionMismatch(f"flow inputs differ in shape: {I0.shape} vs {I1.shape}")
    I0, I1 = _normalize_pair(I0, I1)
    shapes = pyramid_shapes(I0.shape, params)
    pyr0 = _pyramid(I0, shapes, params.zoom)
    pyr1 = _pyramid(I1, shapes, params.zoom)

    u1 = np.zeros(shapes[-1])
    u2 = np.zeros(shapes[-1])
    if params.global_init:
        sx, sy = global_shift(I0, I1)
        u1 += sx * shapes[-1][0] / shapes[0][0]
        u2 += sy * shapes[-1][1] / shapes[0][1]
    for level in range(len(shapes) - 1, -1, -1):
        shape = shapes[level]
        if u1.shape != shape:
            sx = shape[0] / u1.shape[0]
            sy = shape[1] / u1.shape[1]
            u1 = _resize_flow(u1, shape) * sx
            u2 = _resize_flow(u2, shape) * sy
        u1, u2 = _tvl1_level(pyr0[level], pyr1[level], u1, u2, params)
    return u1, u2


def estimate_flow_tvl1(r_prev: IntensityFrame, r_cur: IntensityFrame,
                       params: FlowParams | None = None) -> MotionField:
    """2D motion from ``r_prev`` to ``r_cur`` on the HR grid; ``dz`` is zero."""
    if r_prev.shape != r_cur.shape:
        raise DimensionMismatch(f"intensity frames differ in shape: {r_prev.shape} vs {r_cur.shape}")
    u1, u2 = tvl1(r_prev.values, r_cur.values, params)
    return MotionField(u1, u2)
