"""Synthetic SPAD measurements from a ground-truth scene under linear 3D motion.

Binary frame ``j`` of interval ``t`` (both 1-based) is acquired at global
binary index ``n = (t - 1) * M + j``; the scene is shifted by ``n`` times the
per-frame velocity.  Intensity frame ``R^t`` and the reference depth are taken
at ``n = t * M``, i.e. at the same instant as the last binary frame of the
interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DegenerateScene, DimensionMismatch, InvalidValue, OutOfRange
from .forward import block_histogram
from .types import DepthMap, HistogramVolume, ImagingModel, IntensityFrame


@dataclass(frozen=True)
class SceneTruth:
    depth_hr: DepthMap
    intensity_hr: IntensityFrame

    def __post_init__(self):
        if self.depth_hr.shape != self.intensity_hr.shape:
            raise DimensionMismatch(
                f"scene depth {self.depth_hr.shape} and intensity {self.intensity_hr.shape} differ"
            )


@dataclass(frozen=True)
class MotionSpec:
    """Linear scene motion: ``vx``/``vy`` in LR pixels and ``vz`` in bins, per binary frame."""

    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0
    M: int = 100
    T: int = 6

    def __post_init__(self):
        if self.M < 1 or self.T < 1:
            raise InvalidValue("M and T must be >= 1")


@dataclass(frozen=True)
class NoiseSpec:
    sbr: float = 16.0
    ppp: float = 64.0
    seed: int = 0

    def __post_init__(self):
        if not self.sbr > 0 or not (self.ppp > 0 and math.isfinite(self.ppp)):
            raise InvalidValue("sbr and ppp must be positive")


@dataclass
class SimulatedSequence:
    frames: list[list[HistogramVolume]]  # frames[t][j], t and j 0-based
    intensities: list[IntensityFrame]
    depths: list[DepthMap]
    alpha: float
    background_per_bin: float
    metadata: dict = field(default_factory=dict)


def expected_histogram(depth: DepthMap, reflect, model: ImagingModel) -> HistogramVolume:
    """Mean photon counts ``r * g(z, d) + b`` on the grid of ``depth``."""
    d = depth.depth_m
    r = np.asarray(reflect, dtype=np.float64)
    if r.shape != d.shape:
        raise DimensionMismatch(f"depth {d.shape} and reflectivity {r.shape} differ")
    if np.any(r < 0):
        raise InvalidValue("reflectivity must be nonnegative")
    if d.min() < 0 or d.max() > model.max_depth_m:
        raise OutOfRange(f"depth outside [0, {model.max_depth_m}] m")
    lam = r[..., None] * model.irf(d) + model.background_per_bin
    return HistogramVolume(lam, model.bin_width_m, depth.t_index)


def calibrate_noise(reflect, spec: NoiseSpec, model: ImagingModel) -> tuple[np.ndarray, float]:
    """Scale reflectivity and choose a per-bin background hitting ``spec.sbr`` and ``spec.ppp``.

    SBR is total signal over total background, where each pixel's background
    is ``nbins * b``.  The block-mean image formation preserves the spatial
    mean, so calibrating on an HR reflectivity is equivalent to calibrating on
    its LR version.
    """
    r = np.asarray(reflect, dtype=np.float64)
    mean_r = r.mean()
    if not mean_r > 0:
        raise DegenerateScene("reflectivity sums to zero")
    if math.isinf(spec.sbr):
        signal, b = spec.ppp, 0.0
    else:
        signal = spec.ppp * spec.sbr / (1.0 + spec.sbr)
        b = spec.ppp / (model.nbins * (1.0 + spec.sbr))
    alpha = signal / mean_r
    return alpha * r, b


def sample_poisson(lam: HistogramVolume, seed) -> HistogramVolume:
    """Independent Poisson draw per cell; ``seed`` is anything ``default_rng`` accepts."""
    rng = np.random.default_rng(seed)
    counts = rng.poisson(lam.counts).astype(np.float64)
    return HistogramVolume(counts, lam.bin_width_m, lam.t_index)


def shift_scene(depth_hr: np.ndarray, refl_hr: np.ndarray, shift_hr: tuple[float, float],
                depth_offset_m: float, max_depth_m: float) -> tuple[np.ndarray, np.ndarray]:
    """Translate the HR scene by ``shift_hr`` pixels (bilinear, replicate edges) and offset its depth."""
    if shift_hr[0] or shift_hr[1]:
        depth_hr = ndimage.shift(depth_hr, shift_hr, order=1, mode="nearest")
        refl_hr = ndimage.shift(refl_hr, shift_hr, order=1, mode="nearest")
    depth = np.clip(depth_hr + depth_offset_m, 0.0, max_depth_m)
    return depth, np.maximum(refl_hr, 0.0)


def simulate_sequence(scene: SceneTruth, motion: MotionSpec, noise: NoiseSpec,
                      model: ImagingModel) -> SimulatedSequence:
    f = model.upsample_factor
    depth0 = scene.depth_hr.depth_m
    refl0 = scene.intensity_hr.values
    if depth0.shape[0] % f or depth0.shape[1] % f:
        raise DimensionMismatch(f"scene shape {depth0.shape} not divisible by factor {f}")
    refl_scaled, b = calibrate_noise(refl0, noise, model)
    alpha = float(refl_scaled.mean() / refl0.mean())
    M, T = motion.M, motion.T

    def scene_at(n: int):
        return shift_scene(depth0, refl_scaled, (n * motion.vx * f, n * motion.vy * f),
                           n * motion.vz * model.bin_width_m, model.max_depth_m)

    frames: list[list[HistogramVolume]] = []
    intensities, depths = [], []
    for t in range(1, T + 1):
        interval = []
        for j in range(1, M + 1):
            n = (t - 1) * M + j
            d_n, r_n = scene_at(n)
            lam = block_histogram(d_n, r_n, model, background=b) / M
            h = sample_poisson(HistogramVolume(lam, model.bin_width_m, t - 1), [noise.seed, n])
            interval.append(h)
        frames.append(interval)
        d_t, r_t = scene_at(t * M)
        intensities.append(IntensityFrame(r_t / alpha, t_index=t - 1))
        depths.append(DepthMap(d_t, t_index=t - 1, max_depth_m=model.max_depth_m))

    meta = {
        "M": M,
        "T": T,
        "alpha": alpha,
        "background_per_bin": b,
        "sbr": noise.sbr,
        "ppp": noise.ppp,
        "seed": noise.seed,
        "velocity": {"vx_lr_px": motion.vx, "vy_lr_px": motion.vy, "vz_bins": motion.vz},
        "displacement_per_intensity_frame": {
            "x_lr_px": M * motion.vx,
            "y_lr_px": M * motion.vy,
            "x_hr_px": M * motion.vx * f,
            "y_hr_px": M * motion.vy * f,
            "z_bins": M * motion.vz,
            "z_m": M * motion.vz * model.bin_width_m,
        },
    }
    return SimulatedSequence(frames, intensities, depths, alpha, b, meta)
