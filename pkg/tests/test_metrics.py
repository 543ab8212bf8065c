import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spadpnp.errors import DimensionMismatch, EmptyMask
from spadpnp.metrics import CSV_HEADER, SweepSetup, pct_correct, rmse, rows_to_csv, score, sweep_grid
from spadpnp.scenes import synthetic_scene
from spadpnp.simulator import MotionSpec, NoiseSpec, simulate_sequence
from spadpnp.solver import naive_baseline
from spadpnp.types import DepthMap


def test_rmse_examples():
    d = np.random.default_rng(0).uniform(0, 5, (6, 7))
    assert rmse(d, d) == 0.0
    assert rmse(d + 0.05, d) == pytest.approx(0.05, abs=1e-12)
    assert rmse(DepthMap(d), DepthMap(d)) == 0.0


def test_rmse_loop_oracle():
    rng = np.random.default_rng(1)
    a, b = rng.uniform(0, 5, (2, 4, 4))
    acc = 0.0
    for i in range(4):
        for j in range(4):
            acc += (a[i, j] - b[i, j]) ** 2
    assert rmse(a, b) == pytest.approx(math.sqrt(acc / 16), abs=1e-12)


def test_pct_examples():
    d = np.ones((4, 4))
    assert pct_correct(d, d, 0.05) == 100.0
    off = d.copy()
    off[:2] += 0.10
    assert pct_correct(off, d, 0.05) == 50.0
    # strict inequality at the threshold
    assert pct_correct(d + 0.05, d + 0.0, 0.0500001) == 100.0
    assert pct_correct(np.array([[0.5]]), np.array([[0.0]]), 0.5) == 0.0


def test_pct_monotone_on_ramp():
    ref = np.zeros((10, 10))
    ramp = np.linspace(0, 0.1, 100).reshape(10, 10)
    p3, p5 = pct_correct(ramp, ref, 0.03), pct_correct(ramp, ref, 0.05)
    assert 0 <= p3 <= p5 <= 100


def test_mask_and_border():
    d = np.zeros((6, 6))
    ref = np.zeros((6, 6))
    d[0, :] = 1.0
    assert rmse(d, ref, border=1) == 0.0
    mask = np.zeros((6, 6), dtype=bool)
    mask[0, 0] = True
    assert rmse(d, ref, mask=mask) == 1.0
    with pytest.raises(EmptyMask):
        rmse(d, ref, mask=np.zeros((6, 6), dtype=bool))
    with pytest.raises(EmptyMask):
        rmse(d, ref, border=3)


def test_shape_mismatch_and_bad_threshold():
    with pytest.raises(DimensionMismatch):
        rmse(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        pct_correct(np.zeros((2, 2)), np.zeros((2, 2)), 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_permutation_invariance_and_bounds(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0, 1, (2, 5, 5))
    perm = rng.permutation(25)
    pa, pb = a.ravel()[perm].reshape(5, 5), b.ravel()[perm].reshape(5, 5)
    assert rmse(pa, pb) == pytest.approx(rmse(a, b), abs=1e-15)
    assert pct_correct(pa, pb, 0.1) == pct_correct(a, b, 0.1)
    assert rmse(a, b) >= 0
    assert 0 <= pct_correct(a, b, 0.03) <= pct_correct(a, b, 0.3) <= 100


def test_score_pools_frames():
    refs = [np.zeros((2, 2)), np.zeros((2, 2))]
    out = score([np.zeros((2, 2)), np.full((2, 2), 0.04)], refs)
    assert out["rmse_m"] == pytest.approx(math.sqrt(0.5 * 0.04**2))
    assert out["pct_3cm"] == 50.0 and out["pct_5cm"] == 100.0


def _toy_setup(small_model):
    scene = synthetic_scene((32, 32), small_model, seed=2)

    def simulate(sbr, ppp):
        return simulate_sequence(scene, MotionSpec(0.05, 0.0, 0.0, M=3, T=2), NoiseSpec(sbr, ppp, 7), small_model)

    def reconstruct(seq):
        return [naive_baseline(g, small_model, upsample=True) for g in seq.frames]

    return SweepSetup(simulate, reconstruct)


def test_toy_sweep(small_model):
    buf = io.StringIO()
    rows = sweep_grid(_toy_setup(small_model), [4, 16, 256], [4, 16, 64], out=buf)
    assert [(r["sbr"], r["ppp"]) for r in rows] == [(s, p) for s in (4, 16, 256) for p in (4, 16, 64)]
    assert all(r["rmse_m"] >= 0 and math.isfinite(r["rmse_m"]) for r in rows)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 10
    assert buf.getvalue() == rows_to_csv(rows)


def test_sweep_deterministic(small_model):
    a = sweep_grid(_toy_setup(small_model), [16], [64])
    b = sweep_grid(_toy_setup(small_model), [16], [64])
    assert a == b and len(a) == 1


def test_sweep_rejects_empty(small_model):
    with pytest.raises(ValueError):
        sweep_grid(_toy_setup(small_model), [], [1])
