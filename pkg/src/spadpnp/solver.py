"""Plug-and-play half-quadratic-splitting reconstruction.

Each outer iteration, for every frame ``t`` of a window: estimate 3D motion,
realign the binary frames and blend the aligned sum with the histogram
predicted from the current depth (closed-form ``V`` update); then one
super-resolution call over the window yields new HR depth maps.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .errors import DimensionMismatch, EmptyInput, SRFailure
from .forward import block_histogram, block_mean
from .motion.align import align_and_sum, downscale_motion, estimate_depth_motion
from .motion.flow import FlowParams, estimate_flow_tvl1
from .peaks import centroid_depth, default_window
from .types import DepthMap, HistogramVolume, ImagingModel, IntensityFrame, MotionField, pair_check

log = logging.getLogger(__name__)


def worker_count() -> int:
    """Thread cap from ``SPADPNP_THREADS`` (default: CPU count)."""
    env = os.environ.get("SPADPNP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer SPADPNP_THREADS=%r", env)
    return os.cpu_count() or 1


def parallel_map(fn: Callable, items: Sequence) -> list:
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class SolverConfig:
    mu: float = 1.0
    max_iters: int = 10
    rmse_stop_m: float = 0.05
    window: int = 6
    mu_schedule: tuple[float, ...] | None = None   # per-iteration multipliers of mu; last one persists
    dz_reduce: str = "mean"                        # block statistic taking HR depth motion to LR
    first_motion: str = "next"                     # anchor frame without a predecessor: "next" reuses the
                                                   # following interval's motion, "zero" assumes none
    estimate_photometry: bool = True               # fit reflectivity scale/background from the data

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.rmse_stop_m > 0:
            raise ValueError("rmse_stop_m must be > 0")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.dz_reduce not in ("mean", "median"):
            raise ValueError(f"dz_reduce must be 'mean' or 'median', got {self.dz_reduce!r}")
        if self.first_motion not in ("zero", "next"):
            raise ValueError(f"first_motion must be 'zero' or 'next', got {self.first_motion!r}")
        if self.mu_schedule is not None:
            object.__setattr__(self, "mu_schedule", tuple(float(m) for m in self.mu_schedule))
            if any(m < 0 for m in self.mu_schedule):
                raise ValueError("mu_schedule entries must be >= 0")

    def mu_at(self, iteration: int) -> float:
        """Penalty used in loop iteration ``iteration`` (1-based)."""
        if not self.mu_schedule:
            return self.mu
        return self.mu * self.mu_schedule[min(iteration, len(self.mu_schedule)) - 1]


@dataclass
class SolverState:
    V: list[HistogramVolume]
    D: list[DepthMap]
    motions: list[MotionField]
    iteration: int = 0
    last_rmse_delta: float | None = None


@dataclass
class PnPResult:
    depths: list[DepthMap]
    state: SolverState
    diagnostics: dict = field(default_factory=dict)


def forward_project(d: DepthMap, r: IntensityFrame, model: ImagingModel) -> HistogramVolume:
    """LR noiseless histogram ``[A(d, r) * k]`` decimated by ``f``."""
    if d.shape != r.shape:
        raise DimensionMismatch(f"depth {d.shape} and intensity {r.shape} differ")
    lam = block_histogram(d.depth_m, r.values, model)
    return HistogramVolume(lam, model.bin_width_m, d.t_index)


def denoise_update(aligned_sum: HistogramVolume, projected: HistogramVolume, mu: float) -> HistogramVolume:
    """Closed-form auxiliary update ``(aligned + mu * projected) / (mu + 1)``."""
    if aligned_sum.shape != projected.shape:
        raise DimensionMismatch(f"aligned {aligned_sum.shape} and projected {projected.shape} differ")
    if mu < 0:
        raise ValueError("mu must be >= 0")
    if mu == 0:
        return aligned_sum
    v = (aligned_sum.counts + mu * projected.counts) / (mu + 1.0)
    return aligned_sum.replace(counts=v)


def estimate_photometry(aligned: HistogramVolume, r: IntensityFrame, model: ImagingModel) -> tuple[float, float]:
    """Reflectivity scale ``alpha`` and per-bin background ``b`` matching ``aligned``.

    ``b`` is the mean count outside each pixel's main-peak window, pooled
    over the frame; ``alpha`` maps the block-mean guide onto the remaining
    signal photons.
    """
    counts = aligned.counts
    nbins = counts.shape[-1]
    w = default_window(model)
    peak = np.argmax(gaussian_filter1d(counts, model.irf_sigma_bins, axis=-1, mode="constant"), axis=-1)
    z = np.arange(nbins)
    outside = np.abs(z - peak[..., None]) > w
    n_out = outside.sum()
    b = float(counts[outside].sum() / n_out) if n_out else 0.0
    signal = max(float(counts.sum()) - counts.shape[0] * counts.shape[1] * nbins * b, 0.0)
    guide = block_mean(r.values, model.upsample_factor).sum()
    alpha = signal / guide if guide > 0 else 0.0
    return alpha, b


def naive_baseline(frames: Sequence[HistogramVolume], model: ImagingModel, upsample: bool = False,
                   **centroid_kwargs) -> DepthMap:
    """Unaligned sum of the binary frames, then main-peak centroid per pixel."""
    if len(frames) == 0:
        raise EmptyInput("no frames")
    total = np.zeros(frames[0].shape)
    for h in frames:
        if h.shape != total.shape:
            raise DimensionMismatch(f"frame shapes differ: {h.shape} vs {total.shape}")
        total += h.counts
    depth, valid = centroid_depth(total, model, **centroid_kwargs)
    if upsample and model.upsample_factor > 1:
        f = model.upsample_factor
        depth = np.repeat(np.repeat(depth, f, axis=0), f, axis=1)
        valid = np.repeat(np.repeat(valid, f, axis=0), f, axis=1)
    return DepthMap(depth, t_index=frames[-1].t_index, max_depth_m=model.max_depth_m, valid=valid)


def depth_rmse_delta(new: Sequence[DepthMap], old: Sequence[DepthMap]) -> float:
    """RMSE between two windows of depth maps, pooled over all frames on jointly valid pixels."""
    sq, n = 0.0, 0
    for a, b in zip(new, old):
        m = a.mask() & b.mask()
        if not m.any():
            continue
        diff = a.depth_m[m] - b.depth_m[m]
        sq += float(diff @ diff)
        n += int(m.sum())
    return float(np.sqrt(sq / n)) if n else 0.0


def _check_inputs(frames, intensities, model):
    if len(frames) == 0:
        raise EmptyInput("no intensity instants")
    if len(frames) != len(intensities):
        raise DimensionMismatch(f"{len(frames)} frame groups but {len(intensities)} intensity frames", axis="t")
    for group, r in zip(frames, intensities):
        if len(group) == 0:
            raise EmptyInput("an interval has no binary frames")
        pair_check(group[0], r, model)


def run_pnp(frames: Sequence[Sequence[HistogramVolume]], intensities: Sequence[IntensityFrame],
            sr, config: SolverConfig, model: ImagingModel, flow_params: FlowParams | None = None,
            prev_intensity: IntensityFrame | None = None, prev_depth: DepthMap | None = None) -> PnPResult:
    """Reconstruct one window of ``T`` HR depth maps.

    ``frames[t]`` holds the ``M`` binary frames acquired up to intensity frame
    ``t``.  ``prev_intensity``/``prev_depth`` describe the instant just before
    the window (from the previous window); without them the first frame's
    motion follows ``config.first_motion``.
    """
    _check_inputs(frames, intensities, model)
    T = len(frames)
    f = model.upsample_factor
    hr_shape = intensities[0].shape
    diag: dict = {"iterations": [], "init": {}, "window": T}

    # 2D flow depends on the intensity frames only, so it is computed once
    tic = time.perf_counter()

    def flow_for(t):
        prev = prev_intensity if t == 0 else intensities[t - 1]
        if prev is None:
            return None
        return estimate_flow_tvl1(prev, intensities[t], flow_params)

    flows = parallel_map(flow_for, range(T))
    if flows[0] is None:
        if config.first_motion == "next" and T > 1:
            flows[0] = flows[1]
        else:
            flows[0] = MotionField.zeros(hr_shape)
    diag["init"]["flow_s"] = time.perf_counter() - tic

    def aligned_for(t, motion_hr):
        return align_and_sum(frames[t], downscale_motion(motion_hr, f, config.dz_reduce))

    def call_sr(V, motions, stage):
        try:
            return list(sr.solve(V, intensities, model, motions=motions))
        except Exception as exc:
            diag["failed_stage"] = stage
            raise SRFailure(f"super-resolution failed during {stage}: {exc}", diagnostics=diag) from exc

    tic = time.perf_counter()
    motions = list(flows)
    V = parallel_map(lambda t: aligned_for(t, motions[t]), range(T))
    diag["init"]["align_s"] = time.perf_counter() - tic
    tic = time.perf_counter()
    D = call_sr(V, motions, "initialization")
    diag["init"]["sr_s"] = time.perf_counter() - tic
    state = SolverState(V=V, D=D, motions=motions)
    diag["stopped_by"] = "max_iters"

    for it in range(1, config.max_iters + 1):
        mu = config.mu_at(it)
        t0 = time.perf_counter()

        def motion_for(t):
            d_prev = prev_depth if t == 0 else D[t - 1]
            if d_prev is None:
                if config.first_motion == "next" and T > 1:
                    return estimate_depth_motion(D[0], D[1], flows[1])
                return flows[0]
            return estimate_depth_motion(d_prev, D[t], flows[t])

        motions = parallel_map(motion_for, range(T))
        t1 = time.perf_counter()

        def v_for(t):
            aligned = aligned_for(t, motions[t])
            if mu == 0:
                return aligned
            if config.estimate_photometry:
                alpha, b = estimate_photometry(aligned, intensities[t], model)
            else:
                alpha, b = 1.0, model.background_per_bin
            r = IntensityFrame(alpha * intensities[t].values, t_index=intensities[t].t_index)
            projected = forward_project(D[t], r, model.with_background(b))
            return denoise_update(aligned, projected, mu)

        V = parallel_map(v_for, range(T))
        t2 = time.perf_counter()
        D_new = call_sr(V, motions, f"iteration {it}")
        t3 = time.perf_counter()
        delta = depth_rmse_delta(D_new, D)
        D = D_new
        state = SolverState(V=V, D=D, motions=motions, iteration=it, last_rmse_delta=delta)
        diag["iterations"].append({
            "iteration": it,
            "mu": mu,
            "rmse_delta_m": delta,
            "timings_s": {"motion": t1 - t0, "denoise": t2 - t1, "sr": t3 - t2},
        })
        log.debug("iteration %d: rmse delta %.4f m", it, delta)
        if delta < config.rmse_stop_m:
            diag["stopped_by"] = "rmse"
            break

    diag["n_iterations"] = state.iteration
    return PnPResult(depths=D, state=state, diagnostics=diag)


def reconstruct_sequence(frames, intensities, sr, config: SolverConfig, model: ImagingModel,
                         flow_params: FlowParams | None = None) -> PnPResult:
    """Tile a sequence into consecutive non-overlapping windows and run :func:`run_pnp` on each."""
    _check_inputs(frames, intensities, model)
    W = config.window
    depths: list[DepthMap] = []
    windows = []
    prev_r = prev_d = None
    state = None
    for start in range(0, len(frames), W):
        stop = min(start + W, len(frames))
        res = run_pnp(frames[start:stop], intensities[start:stop], sr, config, model, flow_params,
                      prev_intensity=prev_r, prev_depth=prev_d)
        depths.extend(res.depths)
        windows.append({"start": start, "stop": stop, **res.diagnostics})
        prev_r, prev_d = intensities[stop - 1], res.depths[-1]
        state = res.state
    return PnPResult(depths=depths, state=state, diagnostics={"windows": windows})
