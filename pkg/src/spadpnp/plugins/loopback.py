"""Reference super-resolution plug-in: nearest-upsampled centroid depths.

Usage: ``python -m spadpnp.plugins.loopback --input DIR --output DIR``.
The ``--fail-*`` flags make it misbehave on purpose, for exercising the
adapter's error handling.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ..peaks import centroid_depth
from ..spt import read_spt, write_spt
from ..types import ImagingModel


def loopback_depth(v: np.ndarray, model: ImagingModel) -> np.ndarray:
    """Depth the loopback plug-in emits for one float32 histogram ``v``."""
    d, _ = centroid_depth(np.asarray(v, dtype=np.float64), model)
    f = model.upsample_factor
    return np.repeat(np.repeat(d, f, axis=0), f, axis=1).astype(np.float32)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="spadpnp-loopback")
    ap.add_argument("--input", required=True, type=Path)
    ap.add_argument("--output", required=True, type=Path)
    ap.add_argument("--fail-exit", type=int, default=0, help="exit with this code after writing to stderr")
    ap.add_argument("--fail-skip", type=int, default=None, help="do not write this frame index")
    ap.add_argument("--fail-range", action="store_true", help="emit depths beyond the range gate")
    args = ap.parse_args(argv)

    if args.fail_exit:
        print(f"loopback: induced failure {args.fail_exit}", file=sys.stderr)
        return args.fail_exit

    meta = json.loads((args.input / "meta.json").read_text())
    model = ImagingModel(
        nbins=meta["nbins"],
        bin_width_m=meta["bin_width_m"],
        irf_sigma_m=meta.get("irf_sigma_m", meta["bin_width_m"]),
        upsample_factor=meta["factor"],
    )
    args.output.mkdir(parents=True, exist_ok=True)
    for t in range(meta["window"]):
        if t == args.fail_skip:
            continue
        d = loopback_depth(read_spt(args.input / f"V_{t:03d}.spt"), model)
        if args.fail_range:
            d = d + np.float32(2 * model.max_depth_m)
        write_spt(args.output / f"D_{t:03d}.spt", d, "float32")
    return 0


if __name__ == "__main__":
    sys.exit(main())
