"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary, then asserts.
"""

import math
import time

import numpy as np
import pytest
from scipy import ndimage

from conftest import ACCEPTANCE_RESULTS
from spadpnp.errors import PluginExit, PluginFormat, PluginRange
from spadpnp.metrics import SweepSetup, rmse, sweep_grid
from spadpnp.motion import align_and_sum, estimate_flow_tvl1, motion_proportions
from spadpnp.peaks import centroid_depth
from spadpnp.plugins.loopback import loopback_depth
from spadpnp.scenes import synthetic_scene
from spadpnp.simulator import MotionSpec, NoiseSpec, SceneTruth, expected_histogram, simulate_sequence
from spadpnp.solver import SolverConfig, denoise_update, naive_baseline, run_pnp
from spadpnp.superres import BuiltinSuperResolver, ExternalSuperResolver
from spadpnp.types import DepthMap, HistogramVolume, ImagingModel, IntensityFrame, MotionField

import sys

LOOPBACK = [sys.executable, "-m", "spadpnp.plugins.loopback"]


def record(name, ok, detail):
    ACCEPTANCE_RESULTS.append((name, bool(ok), detail))
    assert ok, f"{name}: {detail}"


def _model(f=4):
    return ImagingModel(nbins=100, bin_width_m=0.0552, irf_sigma_m=0.04, upsample_factor=f)


def _moving_sequence(seed, sbr=16.0, ppp=64.0, scene_seed=None):
    model = _model(4)
    scene = synthetic_scene((128, 128), model, seed=seed if scene_seed is None else scene_seed)
    seq = simulate_sequence(scene, MotionSpec(0.1, 0.1, 0.1, M=20, T=6), NoiseSpec(sbr, ppp, seed), model)
    return model, seq


def test_c01_closed_form_update():
    rng = np.random.default_rng(0)
    a = rng.uniform(0, 100, (10, 1, 10))
    p = rng.uniform(0, 100, (10, 1, 10))
    mus = np.concatenate([[0.0], rng.exponential(5.0, 998), [1e6]])
    tic = time.perf_counter()
    worst, inside = 0.0, True
    A, P = HistogramVolume(a, 0.0552), HistogramVolume(p, 0.0552)
    for mu in mus:
        v = denoise_update(A, P, float(mu)).counts
        ref = (a + mu * p) / (mu + 1.0)
        worst = max(worst, float(np.max(np.abs(v - ref) / np.maximum(1.0, np.abs(ref)))))
        inside &= bool(np.all(v >= np.minimum(a, p) - 1e-12) and np.all(v <= np.maximum(a, p) + 1e-12))
    elapsed = time.perf_counter() - tic
    n = a.size * mus.size
    record("1 closed-form update", n == 10**5 and worst <= 1e-12 and inside and elapsed < 1.0,
           f"{n} triples, max err {worst:.1e}, convex {inside}, {elapsed:.2f}s")


def test_c02_alignment_identity_and_mass():
    tic = time.perf_counter()
    rng = np.random.default_rng(1)
    frames = [HistogramVolume(rng.poisson(0.3, (16, 16, 100)).astype(float), 0.0552) for _ in range(10)]
    same = align_and_sum(frames, MotionField.zeros((16, 16)))
    identity = np.array_equal(same.counts, np.sum([h.counts for h in frames], axis=0))

    spikes = []
    for _ in range(10):
        h = np.zeros((40, 40, 100))
        h[rng.integers(12, 28), rng.integers(12, 28), rng.integers(20, 80)] = rng.uniform(1, 10)
        spikes.append(HistogramVolume(h, 0.0552))
    M = len(spikes)
    worst = 0.0
    for dx, dy in [(1, 0), (0, 1), (-1, 1), (1, -1)]:
        # the motion over the interval is (M-1) px, so frames are 1 px apart and every shift is integer
        m = MotionField(np.full((40, 40), dx * (M - 1.0)), np.full((40, 40), dy * (M - 1.0)))
        out = align_and_sum(spikes, m)
        worst = max(worst, abs(out.total() - sum(h.total() for h in spikes)))
    elapsed = time.perf_counter() - tic
    record("2 alignment identity and mass", identity and worst < 1e-9 and elapsed < 5.0,
           f"identity {identity}, mass err {worst:.1e}, {elapsed:.2f}s")


def test_c03_proportion_schedule():
    ok = True
    for M in (2, 3, 100):
        p = motion_proportions(M)
        ok &= len(p) == M and all(p[j - 1] == (M - j) / (M - 1) for j in range(1, M + 1))
    ok &= list(motion_proportions(1)) == [0.0]
    record("3 proportion schedule", ok, "M in {1, 2, 3, 100}")


def test_c04_simulator_statistics():
    tic = time.perf_counter()
    model = _model(1)
    rng = np.random.default_rng(2)
    scene = SceneTruth(DepthMap(rng.uniform(0.5, 5.0, (32, 32))), IntensityFrame(rng.uniform(0.2, 1.0, (32, 32))))
    ppp_emp, sbr_err = [], 0.0
    for seed in range(50):
        seq = simulate_sequence(scene, MotionSpec(0, 0, 0, M=1, T=1), NoiseSpec(16.0, 64.0, seed), model)
        ppp_emp.append(seq.frames[0][0].total() / (32 * 32))
        lam = expected_histogram(scene.depth_hr, seq.alpha * scene.intensity_hr.values,
                                 model.with_background(seq.background_per_bin)).counts
        bg = 32 * 32 * 100 * seq.background_per_bin
        sbr_err = max(sbr_err, abs((lam.sum() - bg) / bg - 16.0) / 16.0)
    ppp_err = abs(np.mean(ppp_emp) - 64.0) / 64.0
    elapsed = time.perf_counter() - tic
    record("4 simulator statistics", ppp_err < 0.02 and sbr_err < 1e-9 and elapsed < 30.0,
           f"ppp {np.mean(ppp_emp):.3f} ({100 * ppp_err:.2f}%), SBR rel err {sbr_err:.1e}, {elapsed:.1f}s")


def test_c05_flow_accuracy():
    tic = time.perf_counter()
    rng = np.random.default_rng(0)
    big = ndimage.gaussian_filter(rng.random((200, 200)), 2.0)
    details, ok = [], True
    for s, limit in ((2, 0.2), (8, 0.5)):
        for axis in (0, 1):
            a = big[20:148, 20:148]
            b = big[20 - s:148 - s, 20:148] if axis == 0 else big[20:148, 20 - s:148 - s]
            m = estimate_flow_tvl1(IntensityFrame(a), IntensityFrame(b))
            tx, ty = (s, 0) if axis == 0 else (0, s)
            epe = float(np.hypot(m.dx - tx, m.dy - ty).mean())
            ok &= epe < limit
            details.append(f"{s}px/ax{axis} {epe:.3f}")
    elapsed = time.perf_counter() - tic
    record("5 flow accuracy", ok and elapsed < 60.0, f"mean EPE {', '.join(details)}; {elapsed:.1f}s")


def test_c06_centroid_estimator():
    model = _model(1)
    rng = np.random.default_rng(3)
    w = int(math.ceil(3 * model.irf_sigma_bins))
    true = rng.uniform(w + 1, model.nbins - w - 1, (10, 100)) * model.bin_width_m
    lam = expected_histogram(DepthMap(true), np.ones(true.shape), model).counts
    est, _ = centroid_depth(lam, model)
    worst = float(np.abs(est - true).max() / model.bin_width_m)
    record("6 centroid estimator", worst < 0.05, f"max err {worst:.4f} bin over {true.size} depths")


@pytest.mark.slow
def test_c07_end_to_end_ordering():
    tic = time.perf_counter()
    pnp, naive = [], []
    for seed in range(5):
        model, seq = _moving_sequence(seed)
        out = run_pnp(seq.frames, seq.intensities, BuiltinSuperResolver(), SolverConfig(max_iters=10), model)
        pnp.append(np.mean([rmse(d, g) for d, g in zip(out.depths, seq.depths)]))
        naive.append(np.mean([rmse(naive_baseline(fr, model, upsample=True), g)
                              for fr, g in zip(seq.frames, seq.depths)]))
    p, n = float(np.mean(pnp)), float(np.mean(naive))
    gain = 1.0 - p / n
    elapsed = time.perf_counter() - tic
    record("7 end-to-end ordering", p < n and gain >= 0.25 and elapsed < 600,
           f"PnP {p:.4f} m vs naive {n:.4f} m ({100 * gain:.1f}% lower), {elapsed:.0f}s")


@pytest.mark.slow
def test_c08_robustness_sweep():
    tic = time.perf_counter()
    model = _model(4)
    scene = synthetic_scene((128, 128), model, seed=0)
    setup = SweepSetup(
        simulate=lambda s, p: simulate_sequence(scene, MotionSpec(0.1, 0.1, 0.1, M=20, T=6),
                                                NoiseSpec(s, p, 0), model),
        reconstruct=lambda seq: run_pnp(seq.frames, seq.intensities, BuiltinSuperResolver(),
                                        SolverConfig(), model).depths,
    )
    sbrs, ppps = [4.0, 16.0, 256.0], [4.0, 16.0, 64.0]
    rows = sweep_grid(setup, sbrs, ppps)
    finite = all(math.isfinite(r[k]) for r in rows for k in ("rmse_m", "pct_3cm", "pct_5cm"))
    grid = np.array([r["pct_5cm"] for r in rows]).reshape(3, 3)
    monotone = bool(np.all(np.diff(grid, axis=1) >= 0))
    elapsed = time.perf_counter() - tic
    table = "; ".join(f"sbr {s:g}: " + "/".join(f"{v:.1f}" for v in row) for s, row in zip(sbrs, grid))
    record("8 robustness sweep", finite and monotone and elapsed < 1800,
           f"pct5 by ppp 4/16/64 -> {table}; {elapsed:.0f}s")


class _FixedSR:
    window = None

    def __init__(self, maps):
        self.maps = maps
        self.calls = 0

    def solve(self, v_seq, r_seq, model, motions=None):
        self.calls += 1
        return [DepthMap(m, t_index=t) for t, m in enumerate(self.maps)]


def test_c09_stopping_rule():
    model = _model(4)
    scene = synthetic_scene((32, 32), model, seed=1)
    seq = simulate_sequence(scene, MotionSpec(0.1, 0.0, 0.0, M=4, T=3), NoiseSpec(16, 64, 1), model)
    sr = _FixedSR([d.depth_m for d in seq.depths])
    res = run_pnp(seq.frames, seq.intensities, sr, SolverConfig(max_iters=10), model)
    d = res.diagnostics
    ok = d["n_iterations"] == 1 and d["stopped_by"] == "rmse" and len(d["iterations"]) == 1 and sr.calls == 2
    record("9 stopping rule", ok, f"stopped after {d['n_iterations']} iteration(s) by {d['stopped_by']}")


def test_c10_plugin_protocol(tmp_path):
    model = _model(4)
    rng = np.random.default_rng(5)
    v_seq, r_seq = [], []
    for t in range(6):
        lam = expected_histogram(DepthMap(rng.uniform(1, 4, (5, 6))), np.full((5, 6), 30.0),
                                 model.with_background(0.05))
        v_seq.append(HistogramVolume(rng.poisson(lam.counts).astype(float), model.bin_width_m, t))
        r_seq.append(IntensityFrame(rng.random((20, 24)), t))

    out = ExternalSuperResolver(LOOPBACK, workdir=tmp_path / "ok").solve(v_seq, r_seq, model)
    exact = all(np.array_equal(o.depth_m, loopback_depth(v.counts.astype(np.float32), model))
                for o, v in zip(out, v_seq))

    errors = {}
    for flag, cls in ((["--fail-exit", "3"], PluginExit), (["--fail-skip", "5"], PluginFormat),
                      (["--fail-range"], PluginRange)):
        try:
            ExternalSuperResolver([*LOOPBACK, *flag], workdir=tmp_path / cls.__name__).solve(v_seq, r_seq, model)
            errors[cls.__name__] = False
        except cls as exc:
            if cls is PluginExit:
                errors[cls.__name__] = exc.returncode == 3 and "induced" in exc.stderr
            elif cls is PluginFormat:
                errors[cls.__name__] = exc.index == 5
            else:
                errors[cls.__name__] = True
    record("10 plugin protocol", exact and all(errors.values()),
           f"bit-exact {exact}; " + ", ".join(f"{k} {v}" for k, v in errors.items()))
