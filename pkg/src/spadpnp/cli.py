"""Command-line interface: ``spadpnp {simulate,reconstruct,baseline,flow,metrics}``.

Exit status: 0 on success, 1 on usage or configuration errors, 2 on runtime
failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .dataset import (
    dumps_json,
    load_dataset,
    read_depth_dir,
    write_dataset,
    write_depth_png,
)
from .errors import ConfigError, SpadPnPError
from .metrics import score, sweep_grid, SweepSetup, write_csv
from .motion.flow import estimate_flow_tvl1
from .scenes import synthetic_scene
from .simulator import SceneTruth, simulate_sequence
from .solver import naive_baseline, reconstruct_sequence
from .spt import read_spt, write_spt
from .types import DepthMap, IntensityFrame

log = logging.getLogger("spadpnp")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_array(path: str) -> np.ndarray:
    if path.endswith(".npy"):
        return np.load(path)
    return read_spt(path)


def build_scene(cfg: RunConfig) -> SceneTruth:
    model = cfg.model
    if cfg.scene.kind == "files":
        if not (cfg.paths.scene_depth and cfg.paths.scene_intensity):
            raise ConfigError("scene.kind 'files' needs paths.scene_depth and paths.scene_intensity", key="paths")
        depth = np.asarray(_load_array(cfg.paths.scene_depth), dtype=np.float64)
        return SceneTruth(DepthMap(np.clip(depth, 0, model.max_depth_m), max_depth_m=model.max_depth_m),
                          IntensityFrame(_load_array(cfg.paths.scene_intensity)))
    f = model.upsample_factor
    hr = (cfg.scene.lr_shape[0] * f, cfg.scene.lr_shape[1] * f)
    seed = cfg.seed if cfg.scene.seed is None else cfg.scene.seed
    return synthetic_scene(hr, model, seed=seed)


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _out_dir(args, cfg: RunConfig | None = None) -> Path:
    out = args.out or (cfg.paths.out if cfg else None)
    if not out:
        raise UsageError("an output directory is required (--out or paths.out)")
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _dataset_dir(args, cfg: RunConfig | None = None) -> Path:
    d = args.dataset or (cfg.paths.dataset if cfg else None)
    if not d:
        raise UsageError("a dataset directory is required (--dataset or paths.dataset)")
    return Path(d)


def cmd_simulate(args) -> None:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    seq = simulate_sequence(build_scene(cfg), cfg.motion_spec, cfg.noise(), cfg.model)
    write_dataset(out, seq, cfg.model)
    log.info("wrote %d binary frames to %s", sum(len(g) for g in seq.frames), out)


def cmd_reconstruct(args) -> None:
    cfg = _config(args)
    ds = load_dataset(_dataset_dir(args, cfg))
    out = _out_dir(args, cfg)
    sr = cfg.sr.build()
    tic = time.perf_counter()
    res = reconstruct_sequence(ds.frames, ds.intensities, sr, cfg.solver, ds.model, cfg.flow_params)
    for t, d in enumerate(res.depths):
        write_spt(out / f"D_{t:03d}.spt", d.depth_m, "float32")
        write_depth_png(out / f"D_{t:03d}.png", d.depth_m, ds.model.max_depth_m)
    diag = {"total_s": time.perf_counter() - tic, **res.diagnostics}
    if ds.depths is not None:
        diag["metrics"] = score(res.depths, ds.depths)
    (out / "diagnostics.json").write_text(dumps_json(diag))


def cmd_baseline(args) -> None:
    ds = load_dataset(_dataset_dir(args))
    out = _out_dir(args)
    for t, group in enumerate(ds.frames):
        d = naive_baseline(group, ds.model, upsample=True)
        write_spt(out / f"D_{t:03d}.spt", d.depth_m, "float32")
        write_depth_png(out / f"D_{t:03d}.png", d.depth_m, ds.model.max_depth_m)


def cmd_flow(args) -> None:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    if args.frames:
        pairs = [(IntensityFrame(read_spt(args.frames[0])), IntensityFrame(read_spt(args.frames[1])))]
        names = ["flow.spt"]
    else:
        ds = load_dataset(_dataset_dir(args, cfg))
        r = ds.intensities
        pairs = [(r[t - 1], r[t]) for t in range(1, len(r))]
        names = [f"flow_{t:03d}.spt" for t in range(1, len(r))]
    for (a, b), name in zip(pairs, names):
        m = estimate_flow_tvl1(a, b, cfg.flow_params)
        write_spt(out / name, np.stack([m.dx, m.dy]), "float32")


def cmd_metrics(args) -> None:
    if args.pred:
        ds_dir = _dataset_dir(args)
        ds = load_dataset(ds_dir)
        if ds.depths is None:
            raise FileNotFoundError(f"dataset {ds_dir} has no reference depth maps")
        pred = read_depth_dir(args.pred, len(ds.depths))
        row = {"sbr": ds.meta.get("sbr", float("nan")), "ppp": ds.meta.get("ppp", float("nan")),
               **score(pred, ds.depths)}
        rows = [row]
        if args.out:
            out = Path(args.out)
            out.parent.mkdir(parents=True, exist_ok=True)
            with out.open("w") as fh:
                write_csv(rows, fh)
        else:
            write_csv(rows, sys.stdout)
        return

    cfg = _config(args)
    out = _out_dir(args, cfg)
    scene = build_scene(cfg)
    sr = cfg.sr.build()

    def simulate(sbr, ppp):
        noise = dataclasses.replace(cfg.noise(), sbr=sbr, ppp=ppp)
        return simulate_sequence(scene, cfg.motion_spec, noise, cfg.model)

    def reconstruct(seq):
        return reconstruct_sequence(seq.frames, seq.intensities, sr, cfg.solver, cfg.model, cfg.flow_params).depths

    with (out / "metrics.csv").open("w") as fh:
        sweep_grid(SweepSetup(simulate, reconstruct), cfg.sweep.sbr, cfg.sweep.ppp, out=fh)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="spadpnp", description="Single-photon LiDAR depth video super-resolution")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, dataset=True):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the configuration seed")
        if dataset:
            p.add_argument("--dataset", help="dataset directory")

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    common(p, dataset=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="run the plug-and-play reconstruction")
    common(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("baseline", help="naive averaging depth")
    common(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("flow", help="TV-L1 flow between consecutive intensity frames")
    common(p)
    p.add_argument("--frames", nargs=2, metavar="SPT", help="two intensity .spt files instead of a dataset")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("metrics", help="score predictions, or run the SBR/ppp sweep")
    common(p)
    p.add_argument("--pred", help="directory of predicted D_*.spt maps to score against the dataset")
    p.set_defaults(func=cmd_metrics)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"spadpnp {args.command}: {exc}", file=sys.stderr)
        return 1
    except (SpadPnPError, OSError, KeyError, ValueError) as exc:
        print(f"spadpnp {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
