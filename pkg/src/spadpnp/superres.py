"""Guided video super-resolution stage.

Two interchangeable resolvers share the :class:`SuperResolver` protocol:

* :class:`BuiltinSuperResolver` -- centroid depth on each LR histogram, joint
  bilateral weighted-median upsampling guided by the HR intensity, then a
  motion-compensated temporal median.
* :class:`ExternalSuperResolver` -- hands the window to an executable through
  ``.spt`` files (see :func:`write_plugin_inputs`), e.g. a trained network.
"""

from __future__ import annotations

import json
import shlex
import shutil
import subprocess
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
from scipy import ndimage

from .errors import (
    DegenerateGuideWarning,
    DimensionMismatch,
    EmptyInput,
    PluginExit,
    PluginFormat,
    PluginRange,
    SptFormatError,
)
from .forward import block_mean
from .peaks import centroid_depth
from .spt import read_spt, write_spt
from .types import DepthMap, HistogramVolume, ImagingModel, IntensityFrame, MotionField, pair_check

HVSR_WINDOW = 6
HVSR_FACTOR = 16


class SuperResolver(Protocol):
    """``solve`` maps ``T`` LR histograms plus ``T`` HR guides to ``T`` HR depth maps."""

    window: int | None

    def solve(self, v_seq: Sequence[HistogramVolume], r_seq: Sequence[IntensityFrame],
              model: ImagingModel, motions: Sequence[MotionField] | None = None) -> list[DepthMap]:
        ...


def _check_window(v_seq, r_seq, model):
    if len(v_seq) == 0:
        raise EmptyInput("empty super-resolution window")
    if len(v_seq) != len(r_seq):
        raise DimensionMismatch(f"{len(v_seq)} histograms but {len(r_seq)} intensity frames", axis="t")
    for v, r in zip(v_seq, r_seq):
        pair_check(v, r, model)


# -- builtin ---------------------------------------------------------------


def _candidates(a: np.ndarray, radius: int, fill):
    """Stack of the ``(2r+1)^2`` neighbours of every pixel, ``fill`` outside the grid."""
    k = 2 * radius + 1
    padded = np.pad(a, radius, mode="constant", constant_values=fill)
    nx, ny = a.shape
    out = np.empty((nx, ny, k * k), dtype=a.dtype)
    for i in range(k):
        for j in range(k):
            out[..., i * k + j] = padded[i:i + nx, j:j + ny]
    return out


def joint_bilateral_median(lr_depth: np.ndarray, lr_valid: np.ndarray, guide: np.ndarray, f: int,
                           sigma_s: float = 1.0, sigma_r: float = 0.1, radius: int = 2
                           ) -> tuple[np.ndarray, np.ndarray]:
    """HR depth as the weighted median of nearby LR depths.

    ``guide`` is the HR intensity already scaled to [0, 1].  Each LR candidate
    is weighted by a spatial Gaussian (``sigma_s`` in LR pixels, between the HR
    pixel centre and the LR pixel centre) times a range Gaussian on the
    difference between the HR guide value and the candidate's block-mean
    guide.
    """
    nx, ny = lr_depth.shape
    k = 2 * radius + 1
    guide_lr = block_mean(guide, f)
    cand_d = _candidates(lr_depth, radius, 0.0)
    cand_g = _candidates(guide_lr, radius, 0.0)
    cand_ok = _candidates(lr_valid.astype(bool), radius, False)

    order = np.argsort(cand_d, axis=-1, kind="stable")
    cand_d = np.take_along_axis(cand_d, order, axis=-1)
    cand_g = np.take_along_axis(cand_g, order, axis=-1)
    cand_ok = np.take_along_axis(cand_ok, order, axis=-1)

    off = np.arange(-radius, radius + 1, dtype=np.float64)
    ax, ay = np.repeat(off, k), np.tile(off, k)  # candidate offsets, row-major like _candidates

    out = np.empty((nx * f, ny * f))
    valid = np.empty((nx * f, ny * f), dtype=bool)
    for ox in range(f):
        cx = (ox + 0.5) / f - 0.5  # HR pixel centre relative to its LR pixel centre
        for oy in range(f):
            cy = (oy + 0.5) / f - 0.5
            ws = np.exp(-((ax - cx) ** 2 + (ay - cy) ** 2) / (2 * sigma_s**2))[order]
            g = guide[ox::f, oy::f][..., None]
            w = ws * np.exp(-((g - cand_g) ** 2) / (2 * sigma_r**2)) * cand_ok
            cum = np.cumsum(w, axis=-1)
            total = cum[..., -1:]
            pick = np.argmax(cum >= 0.5 * total, axis=-1)
            out[ox::f, oy::f] = np.take_along_axis(cand_d, pick[..., None], axis=-1)[..., 0]
            valid[ox::f, oy::f] = total[..., 0] > 0
    # pixels with no valid LR neighbour keep their own (invalid) LR value
    fallback = np.repeat(np.repeat(lr_depth, f, axis=0), f, axis=1)
    out = np.where(valid, out, fallback)
    return out, valid


def _smooth_dz(dz: np.ndarray, f: int) -> np.ndarray:
    if f == 1:
        return dz
    nx, ny = dz.shape
    blk = np.median(dz.reshape(nx // f, f, ny // f, f), axis=(1, 3))
    return np.repeat(np.repeat(blk, f, axis=0), f, axis=1)


def _pull(img: np.ndarray, dx: np.ndarray, dy: np.ndarray, sign: float) -> np.ndarray:
    """``out(p) = img(p + sign * (dx, dy)(p))``; samples leaving the grid become NaN."""
    nx, ny = img.shape
    gx, gy = np.meshgrid(np.arange(nx, dtype=np.float64), np.arange(ny, dtype=np.float64), indexing="ij")
    coords = np.stack([gx + sign * dx, gy + sign * dy])
    return ndimage.map_coordinates(img, coords, order=1, mode="constant", cval=np.nan)


def temporal_median(depths: Sequence[np.ndarray], motions: Sequence[MotionField] | None, f: int,
                    radius: int | None = 1) -> list[np.ndarray]:
    """Per-pixel median over motion-compensated neighbouring frames.

    ``motions[t]`` is the HR motion from frame ``t-1`` to ``t``; only its 2D
    part is used.  Depth motion between consecutive frames is re-derived from
    ``depths`` themselves as the block median of ``D_k - warp(D_{k-1})``, so
    the pass also works when the caller has no depth motion yet.  Frames are
    carried to the target grid by chaining; pixels whose source leaves the
    field of view do not vote.
    """
    T = len(depths)
    depths = [np.asarray(d, dtype=np.float64) for d in depths]
    if motions is None:
        motions = [MotionField.zeros(depths[0].shape)] * T
    dz = [np.zeros(depths[0].shape)]
    for k in range(1, T):
        realigned = _pull(depths[k - 1], motions[k].dx, motions[k].dy, -1.0)
        dz.append(_smooth_dz(np.nan_to_num(depths[k] - realigned), f))

    out = []
    for t in range(T):
        lo = 0 if radius is None else max(0, t - radius)
        hi = T - 1 if radius is None else min(T - 1, t + radius)
        stack = []
        for s in range(lo, hi + 1):
            cur = depths[s]
            for k in range(s + 1, t + 1):  # forward to t
                cur = _pull(cur, motions[k].dx, motions[k].dy, -1.0) + dz[k]
            for k in range(s, t, -1):  # backward to t
                cur = _pull(cur, motions[k].dx, motions[k].dy, 1.0) - dz[k]
            stack.append(cur)
        out.append(np.nanmedian(np.stack(stack), axis=0))
    return out


def normalized_guide(values: np.ndarray) -> np.ndarray | None:
    lo, hi = float(values.min()), float(values.max())
    if hi - lo <= 0:
        return None
    return (values - lo) / (hi - lo)


@dataclass
class BuiltinSuperResolver:
    sigma_s: float = 1.0
    sigma_r: float = 0.1
    radius: int = 2
    temporal: bool = True
    temporal_radius: int | None = 1   # None: every frame of the window votes
    matched_filter: bool = True
    window: int | None = None

    def solve(self, v_seq, r_seq, model, motions=None):
        return builtin_solve(v_seq, r_seq, model, motions=motions, sigma_s=self.sigma_s,
                             sigma_r=self.sigma_r, radius=self.radius, temporal=self.temporal,
                             temporal_radius=self.temporal_radius, matched_filter=self.matched_filter)


def builtin_solve(v_seq: Sequence[HistogramVolume], r_seq: Sequence[IntensityFrame], model: ImagingModel,
                  motions: Sequence[MotionField] | None = None, sigma_s: float = 1.0, sigma_r: float = 0.1,
                  radius: int = 2, temporal: bool = True, temporal_radius: int | None = 1,
                  matched_filter: bool = True) -> list[DepthMap]:
    _check_window(v_seq, r_seq, model)
    f = model.upsample_factor
    hr, masks = [], []
    for v, r in zip(v_seq, r_seq):
        lr, ok = centroid_depth(v.counts, model, matched_filter=matched_filter)
        if f == 1:
            hr.append(lr)
            masks.append(ok)
            continue
        guide = normalized_guide(r.values)
        if guide is None:
            warnings.warn("constant guide image; using spline upsampling", DegenerateGuideWarning, stacklevel=2)
            up = ndimage.zoom(lr, f, order=3, mode="nearest", grid_mode=True)
            hr.append(np.clip(up, 0.0, model.max_depth_m))
            masks.append(np.repeat(np.repeat(ok, f, axis=0), f, axis=1))
            continue
        d, m = joint_bilateral_median(lr, ok, guide, f, sigma_s, sigma_r, radius)
        hr.append(d)
        masks.append(m)

    if temporal and len(hr) >= 3:
        hr = temporal_median(hr, motions, f, temporal_radius)
    return [
        DepthMap(np.clip(d, 0.0, model.max_depth_m), t_index=v.t_index, max_depth_m=model.max_depth_m, valid=m)
        for d, m, v in zip(hr, masks, v_seq)
    ]


# -- external plug-in ------------------------------------------------------


def plugin_meta(model: ImagingModel, window: int) -> dict:
    return {
        "nbins": model.nbins,
        "bin_width_m": model.bin_width_m,
        "factor": model.upsample_factor,
        "window": window,
        "irf_sigma_m": model.irf_sigma_m,
    }


def write_plugin_inputs(directory: Path, v_seq, r_seq, model: ImagingModel) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for t, (v, r) in enumerate(zip(v_seq, r_seq)):
        write_spt(directory / f"V_{t:03d}.spt", v.counts, "float32")
        write_spt(directory / f"R_{t:03d}.spt", r.values, "float32")
    (directory / "meta.json").write_text(json.dumps(plugin_meta(model, len(v_seq)), indent=2, sort_keys=True))


def read_plugin_outputs(directory: Path, window: int, hr_shape: tuple[int, int],
                        model: ImagingModel) -> list[DepthMap]:
    maps = []
    for t in range(window):
        path = directory / f"D_{t:03d}.spt"
        if not path.is_file():
            raise PluginFormat(f"plugin did not write depth map {t} ({path.name})", index=t)
        try:
            d = read_spt(path)
        except SptFormatError as exc:
            raise PluginFormat(f"ill-formed depth map {t}: {exc}", index=t) from exc
        if d.shape != hr_shape:
            raise PluginFormat(f"depth map {t} has shape {d.shape}, expected {hr_shape}", index=t)
        d = d.astype(np.float64)
        if not np.all(np.isfinite(d)):
            raise PluginFormat(f"depth map {t} contains NaN or Inf", index=t)
        if d.min() < 0 or d.max() > model.max_depth_m:
            raise PluginRange(
                f"depth map {t} spans [{d.min()}, {d.max()}] m, outside [0, {model.max_depth_m}] m"
            )
        maps.append(DepthMap(d, t_index=t, max_depth_m=model.max_depth_m))
    return maps


@dataclass
class ExternalSuperResolver:
    """Runs ``<cmd> --input DIR --output DIR`` once per window.

    With ``strict_hvsr`` the capability of the reference network (six frames,
    factor 16) is enforced as soon as the model is known.
    """

    cmd: Sequence[str] | str
    workdir: str | Path | None = None
    strict_hvsr: bool = False
    timeout: float | None = None
    window: int | None = None
    last_stderr: str = ""

    def __post_init__(self):
        if isinstance(self.cmd, str):
            self.cmd = shlex.split(self.cmd)
        self.cmd = list(self.cmd)
        if not self.cmd:
            raise ValueError("empty plugin command")
        if self.strict_hvsr:
            if self.window is not None and self.window != HVSR_WINDOW:
                raise ValueError(f"HVSR plug-in processes exactly {HVSR_WINDOW} frames, got window={self.window}")
            self.window = HVSR_WINDOW

    def check_model(self, model: ImagingModel) -> None:
        if self.strict_hvsr and model.upsample_factor != HVSR_FACTOR:
            raise ValueError(f"HVSR plug-in requires factor {HVSR_FACTOR}, got {model.upsample_factor}")

    def solve(self, v_seq, r_seq, model, motions=None):
        return external_solve(v_seq, r_seq, self.cmd, self.workdir, model=model, resolver=self)


def external_solve(v_seq, r_seq, plugin_cmd, workdir, model: ImagingModel,
                   resolver: ExternalSuperResolver | None = None) -> list[DepthMap]:
    _check_window(v_seq, r_seq, model)
    if resolver is not None:
        resolver.check_model(model)
        if resolver.window is not None and len(v_seq) != resolver.window:
            raise DimensionMismatch(f"plug-in expects {resolver.window} frames, got {len(v_seq)}", axis="t")
    cmd = shlex.split(plugin_cmd) if isinstance(plugin_cmd, str) else list(plugin_cmd)
    tmp = None
    if workdir is None:
        tmp = tempfile.mkdtemp(prefix="spadpnp-sr-")
        workdir = tmp
    workdir = Path(workdir)
    in_dir, out_dir = workdir / "in", workdir / "out"
    try:
        for d in (in_dir, out_dir):
            if d.exists():
                shutil.rmtree(d)
        write_plugin_inputs(in_dir, v_seq, r_seq, model)
        out_dir.mkdir(parents=True)
        proc = subprocess.run(
            [*cmd, "--input", str(in_dir), "--output", str(out_dir)],
            capture_output=True, text=True,
            timeout=None if resolver is None else resolver.timeout,
        )
        if resolver is not None:
            resolver.last_stderr = proc.stderr
        if proc.returncode != 0:
            raise PluginExit(proc.returncode, proc.stderr)
        hr_shape = r_seq[0].shape
        maps = read_plugin_outputs(out_dir, len(v_seq), hr_shape, model)
    finally:
        if tmp is not None:
            shutil.rmtree(tmp, ignore_errors=True)
    return [DepthMap(m.depth_m, t_index=v.t_index, max_depth_m=model.max_depth_m) for m, v in zip(maps, v_seq)]
