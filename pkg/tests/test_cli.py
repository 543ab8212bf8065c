import hashlib
import json
import sys

import numpy as np
import pytest

from spadpnp.cli import main
from spadpnp.dataset import load_dataset
from spadpnp.solver import SolverConfig, naive_baseline, run_pnp
from spadpnp.spt import read_spt, write_spt
from spadpnp.types import DepthMap


def _write_config(path, **overrides):
    cfg = {
        "model": {"upsample_factor": 4},
        "motion_spec": {"vx": 0.1, "vy": 0.05, "vz": 0.05, "M": 3, "T": 3},
        "scene": {"lr_shape": [6, 8]},
        "solver": {"max_iters": 3},
        "seed": 4,
    }
    for k, v in overrides.items():
        cfg.setdefault(k, {})
        cfg[k] = {**cfg[k], **v} if isinstance(v, dict) else v
    path.write_text(json.dumps(cfg, indent=2))
    return str(path)


def _tree_digest(root):
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def dataset(tmp_path):
    cfg = _write_config(tmp_path / "cfg.json")
    out = tmp_path / "ds"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    return cfg, out


def test_simulate_is_byte_identical(tmp_path, dataset):
    cfg, first = dataset
    second = tmp_path / "ds2"
    assert main(["simulate", "--config", cfg, "--out", str(second)]) == 0
    assert _tree_digest(first) == _tree_digest(second)
    assert len(list(first.glob("H_*.spt"))) == 9


def test_seed_flag_changes_data(tmp_path, dataset):
    cfg, first = dataset
    other = tmp_path / "ds3"
    assert main(["simulate", "--config", cfg, "--out", str(other), "--seed", "5"]) == 0
    assert _tree_digest(first) != _tree_digest(other)


def test_minimal_dataset_round_trip(tmp_path):
    cfg = _write_config(tmp_path / "c.json", model={"upsample_factor": 1},
                        motion_spec={"M": 1, "T": 1}, scene={"lr_shape": [4, 4]})
    out = tmp_path / "mini"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    ds = load_dataset(out)
    assert len(ds.frames) == 1 and len(ds.frames[0]) == 1
    assert ds.frames[0][0].shape == (4, 4, 100)
    assert read_spt(out / "H_t000_j000.spt").dtype == np.uint32


def test_reconstruct_builtin(tmp_path, dataset):
    cfg, ds = dataset
    out = tmp_path / "rec"
    assert main(["reconstruct", "--config", cfg, "--dataset", str(ds), "--out", str(out)]) == 0
    diag = json.loads((out / "diagnostics.json").read_text())
    (window,) = diag["windows"]
    its = [it["iteration"] for it in window["iterations"]]
    assert its == list(range(1, len(its) + 1)) and len(its) <= 3
    assert {"rmse_m", "pct_3cm", "pct_5cm"} <= set(diag["metrics"])
    for t in range(3):
        assert read_spt(out / f"D_{t:03d}.spt").shape == (24, 32)
        assert (out / f"D_{t:03d}.png").is_file()


def test_reconstruct_external_loopback(tmp_path, dataset):
    _, ds = dataset
    cfg = _write_config(tmp_path / "ext.json",
                        sr={"kind": "external", "cmd": [sys.executable, "-m", "spadpnp.plugins.loopback"]})
    out = tmp_path / "rec_ext"
    assert main(["reconstruct", "--config", cfg, "--dataset", str(ds), "--out", str(out)]) == 0
    for t in range(3):
        d = read_spt(out / f"D_{t:03d}.spt")
        assert d.shape == (24, 32)
        assert np.all((d >= 0) & (d <= 5.52))


def test_missing_frame_file(tmp_path, dataset, capsys):
    cfg, ds = dataset
    (ds / "H_t001_j002.spt").unlink()
    code = main(["reconstruct", "--config", cfg, "--dataset", str(ds), "--out", str(tmp_path / "x")])
    assert code == 2
    assert "H_t001_j002.spt" in capsys.readouterr().err


def test_baseline_matches_library(tmp_path, dataset):
    _, ds = dataset
    out = tmp_path / "base"
    assert main(["baseline", "--dataset", str(ds), "--out", str(out)]) == 0
    data = load_dataset(ds)
    for t, group in enumerate(data.frames):
        ref = naive_baseline(group, data.model, upsample=True).depth_m.astype(np.float32)
        np.testing.assert_array_equal(read_spt(out / f"D_{t:03d}.spt"), ref)


class _ConstantSR:
    window = None

    def solve(self, v_seq, r_seq, model, motions=None):
        return [DepthMap(np.full(r.shape, 2.0), t_index=t) for t, r in enumerate(r_seq)]


def test_static_mu_zero_input_is_baseline_sum(tmp_path):
    # no lateral motion and a depth-static SR output: the aligned sum must be the plain sum
    cfg = _write_config(tmp_path / "s.json", motion_spec={"vx": 0.0, "vy": 0.0, "vz": 0.0})
    ds_dir = tmp_path / "static"
    assert main(["simulate", "--config", cfg, "--out", str(ds_dir)]) == 0
    data = load_dataset(ds_dir)
    res = run_pnp(data.frames, data.intensities, _ConstantSR(), SolverConfig(mu=0.0, max_iters=1), data.model)
    for t, group in enumerate(data.frames):
        total = sum(h.counts for h in group)
        np.testing.assert_allclose(res.state.V[t].counts, total, rtol=0, atol=1e-9)
        base = naive_baseline(group, data.model)
        lr = naive_baseline([res.state.V[t]], data.model)
        np.testing.assert_allclose(lr.depth_m, base.depth_m, rtol=0, atol=1e-12)


def test_flow_on_duplicate_frame(tmp_path):
    img = np.random.default_rng(0).random((32, 32)).astype(np.float32)
    write_spt(tmp_path / "a.spt", img)
    out = tmp_path / "flow"
    assert main(["flow", "--frames", str(tmp_path / "a.spt"), str(tmp_path / "a.spt"), "--out", str(out)]) == 0
    field = read_spt(out / "flow.spt")
    assert field.shape == (2, 32, 32)
    assert np.abs(field).max() < 1e-6


def test_flow_on_dataset(tmp_path, dataset):
    cfg, ds = dataset
    out = tmp_path / "fl"
    assert main(["flow", "--config", cfg, "--dataset", str(ds), "--out", str(out)]) == 0
    assert sorted(p.name for p in out.glob("*.spt")) == ["flow_001.spt", "flow_002.spt"]


def test_metrics_identical_maps(tmp_path, dataset):
    _, ds = dataset
    pred = tmp_path / "pred"
    pred.mkdir()
    for p in ds.glob("Dref_*.spt"):
        (pred / p.name.replace("Dref_", "D_")).write_bytes(p.read_bytes())
    csv_path = tmp_path / "m.csv"
    assert main(["metrics", "--dataset", str(ds), "--pred", str(pred), "--out", str(csv_path)]) == 0
    header, row = csv_path.read_text().splitlines()
    assert header == "sbr,ppp,rmse_m,pct_3cm,pct_5cm"
    values = [float(x) for x in row.split(",")]
    assert values[:2] == [16.0, 64.0]
    assert values[2:] == [0.0, 100.0, 100.0]


def test_metrics_sweep(tmp_path):
    cfg = _write_config(tmp_path / "sw.json", sweep={"sbr": [16.0], "ppp": [16.0, 64.0]},
                        solver={"max_iters": 1})
    out = tmp_path / "sweep"
    assert main(["metrics", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "metrics.csv").read_text().splitlines()
    assert len(lines) == 3


def test_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["bogus"])
    assert info.value.code == 1
    assert main(["simulate"]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"solver": {"nope": 1}}')
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "solver.nope" in capsys.readouterr().err
    assert main(["baseline", "--dataset", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 2
