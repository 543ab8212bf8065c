"""On-disk dataset layout.

A dataset directory holds ``meta.json`` plus one ``.spt`` file per tensor:

* ``H_t{t:03d}_j{j:03d}.spt`` -- binary frame ``j`` of interval ``t`` (uint32)
* ``R_{t:03d}.spt`` -- HR intensity at instant ``t`` (float32)
* ``Dref_{t:03d}.spt`` -- HR reference depth in meters (float32, simulated data only)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .simulator import SimulatedSequence
from .spt import read_spt, write_spt
from .types import DepthMap, HistogramVolume, ImagingModel, IntensityFrame

FORMAT = "spadpnp-dataset/1"


def frame_name(t: int, j: int) -> str:
    return f"H_t{t:03d}_j{j:03d}.spt"


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def model_to_dict(model: ImagingModel) -> dict:
    return {
        "nbins": model.nbins,
        "bin_width_m": model.bin_width_m,
        "irf_sigma_m": model.irf_sigma_m,
        "upsample_factor": model.upsample_factor,
        "background_per_bin": model.background_per_bin,
    }


@dataclass
class Dataset:
    frames: list[list[HistogramVolume]]
    intensities: list[IntensityFrame]
    model: ImagingModel
    depths: list[DepthMap] | None = None
    meta: dict = field(default_factory=dict)


def write_dataset(directory: str | Path, seq: SimulatedSequence, model: ImagingModel) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for t, interval in enumerate(seq.frames):
        for j, h in enumerate(interval):
            write_spt(d / frame_name(t, j), h.counts, "uint32")
    for t, r in enumerate(seq.intensities):
        write_spt(d / f"R_{t:03d}.spt", r.values, "float32")
    for t, dep in enumerate(seq.depths):
        write_spt(d / f"Dref_{t:03d}.spt", dep.depth_m, "float32")
    meta = {"format": FORMAT, "model": model_to_dict(model), **seq.metadata}
    (d / "meta.json").write_text(dumps_json(meta))
    return d


def load_dataset(directory: str | Path) -> Dataset:
    d = Path(directory)
    meta_path = d / "meta.json"
    if not meta_path.is_file():
        raise FileNotFoundError(f"missing dataset metadata: {meta_path}")
    meta = json.loads(meta_path.read_text())
    model = ImagingModel(**meta["model"])
    T, M = int(meta["T"]), int(meta["M"])
    frames = [
        [HistogramVolume(read_spt(d / frame_name(t, j)).astype(np.float64), model.bin_width_m, t) for j in range(M)]
        for t in range(T)
    ]
    intensities = [IntensityFrame(read_spt(d / f"R_{t:03d}.spt"), t_index=t) for t in range(T)]
    depths = None
    if all((d / f"Dref_{t:03d}.spt").is_file() for t in range(T)):
        depths = [
            DepthMap(np.clip(read_spt(d / f"Dref_{t:03d}.spt").astype(np.float64), 0, model.max_depth_m),
                     t_index=t, max_depth_m=model.max_depth_m)
            for t in range(T)
        ]
    return Dataset(frames, intensities, model, depths, meta)


def read_depth_dir(directory: str | Path, T: int, prefix: str = "D_") -> list[DepthMap]:
    d = Path(directory)
    return [DepthMap(read_spt(d / f"{prefix}{t:03d}.spt").astype(np.float64), t_index=t) for t in range(T)]


def write_depth_png(path: str | Path, depth: np.ndarray, max_depth_m: float) -> None:
    """16-bit grayscale preview, 0 at the sensor and 65535 at the range gate."""
    from PIL import Image

    scaled = np.clip(np.asarray(depth) / max_depth_m, 0.0, 1.0) * 65535.0
    Image.fromarray(np.round(scaled).astype(np.uint16)).save(path)
