import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import spearmanr

from targetbench.core import MetricConfig, ScaleStatus
from targetbench.geometry import NearZeroDisplacement, camera_centers, recover_scale
from targetbench.metrics import evaluate_scenario
from targetbench.synth import (
    DegradationKind,
    DegradationSpec,
    Shape,
    degrade,
    gen_gt,
    make_scenario,
    sensitivity_sweep,
    sweep_to_csv,
)

SHAPES = [s.value for s in Shape]
ANCHOR_FIRST_STEP = MetricConfig(scale_anchor=1)


def _arc_length(traj):
    return float(np.sum(np.linalg.norm(np.diff(traj.translations, axis=0), axis=1)))


def test_straight_endpoint():
    gt = gen_gt("straight", 10.0, 101, seed=5)
    assert math.dist(gt.translations[0], gt.translations[-1]) == pytest.approx(10.0, abs=1e-12)


@pytest.mark.parametrize("theta", [math.pi / 6, math.pi / 2, math.pi])
def test_arc_chord(theta):
    gt = gen_gt("arc", 6.0, 501, seed=1, turn_angle=theta)
    r = 6.0 / theta
    assert math.dist(gt.translations[0], gt.translations[-1]) == pytest.approx(
        2 * r * math.sin(theta / 2), abs=1e-12)


@pytest.mark.parametrize("shape", SHAPES)
def test_arc_length_exact(shape):
    gt = gen_gt(shape, 7.5, 2001, seed=2)
    assert abs(_arc_length(gt) / 7.5 - 1) < 1e-6


def test_constant_speed():
    gt = gen_gt("s_curve", 5.0, 401, seed=3)
    steps = np.linalg.norm(np.diff(gt.translations, axis=0), axis=1)
    assert np.ptp(steps) / steps.mean() < 1e-5


def test_stop_turn_dwell():
    gt = gen_gt("stop_turn", 4.0, 200, seed=0, dwell_fraction=0.25)
    steps = np.linalg.norm(np.diff(gt.translations, axis=0), axis=1)
    still = steps == 0.0
    # One contiguous zero-velocity run holding the requested share of samples.
    runs = np.flatnonzero(np.diff(np.r_[0, still.astype(int), 0]))
    assert len(runs) == 2
    assert runs[1] - runs[0] + 1 == 50


def test_gt_is_metric_world():
    gt = gen_gt("arc")
    assert gt.scale_status is ScaleStatus.METRIC
    assert np.all(gt.translations[:, 2] == 0)


@pytest.mark.parametrize("bad", [dict(length_m=0.0), dict(n_points=1)])
def test_gen_gt_rejects(bad):
    with pytest.raises(ValueError):
        gen_gt("straight", **bad)


def test_spec_validation():
    with pytest.raises(ValueError):
        DegradationSpec("gaussian_noise", -0.1)
    with pytest.raises(ValueError):
        DegradationSpec("early_stop", 1.5)


def _fde_after(gt, kind, mag, seed=7, cfg=None):
    pred = degrade(gt, DegradationSpec(kind, mag, seed))
    return evaluate_scenario(make_scenario(gt), pred, cfg)


@pytest.mark.parametrize("theta", [0.05, 0.3, 1.0])
def test_heading_bias_fde(theta):
    gt = gen_gt("straight", 10.0, 201, seed=11)
    res = _fde_after(gt, "heading_bias", theta)
    assert abs(res.fde - 2 * 10 * math.sin(theta / 2)) < 1e-6


@pytest.mark.parametrize("shape", SHAPES)
@pytest.mark.parametrize("rho", [0.1, 0.5, 2.0])
def test_scale_error_invisible(shape, rho):
    gt = gen_gt(shape, seed=4)
    assert _fde_after(gt, "scale_error", rho).fde < 1e-6


def test_static_freeze_full_is_degenerate():
    gt = gen_gt("straight", seed=2)
    pred = degrade(gt, DegradationSpec("static_freeze", 1.0, 3))
    with pytest.raises(NearZeroDisplacement):
        recover_scale(camera_centers(pred, "camera_to_world"), gt)
    res = evaluate_scenario(make_scenario(gt), pred)
    assert res.decode["degenerate"]
    assert res.fde == pytest.approx(4.0, abs=1e-9)


@pytest.mark.parametrize("m,expected", [(0.5, 5.0), (0.25, 2.5)])
def test_early_stop_fde(m, expected):
    gt = gen_gt("straight", 10.0, 201, seed=8)
    res = _fde_after(gt, "early_stop", m, cfg=ANCHOR_FIRST_STEP)
    assert abs(res.fde - expected) < 1e-9


def test_overshoot_fde():
    gt = gen_gt("arc", seed=8)
    m = 0.7
    g = gt.translations[:, :2]
    f = gt.rotation_matrices[-1][:2, 0]
    # The drift also lengthens the first step, which the anchor then rescales.
    step = g[1] - g[0]
    lam = np.linalg.norm(step) / np.linalg.norm(step + m * f / (len(g) - 1))
    expected = np.linalg.norm((lam - 1) * (g[-1] - g[0]) + lam * m * f)
    res = _fde_after(gt, "endpoint_overshoot", m, cfg=ANCHOR_FIRST_STEP)
    assert res.fde == pytest.approx(expected, abs=1e-9)


def test_overshoot_on_straight_is_a_pure_scale():
    gt = gen_gt("straight", seed=8)
    assert _fde_after(gt, "endpoint_overshoot", 0.7).fde < 1e-9


@settings(max_examples=50)
@given(st.sampled_from([k.value for k in DegradationKind]), st.sampled_from(SHAPES),
       st.integers(0, 2**32 - 1))
def test_zero_magnitude_is_identity(kind, shape, seed):
    gt = gen_gt(shape, seed=seed)
    res = _fde_after(gt, kind, 0.0, seed=seed)
    assert res.ade < 1e-9
    assert abs(res.wo - MetricConfig().weight_sum) < 1e-9


def test_degrade_is_deterministic():
    gt = gen_gt("s_curve", seed=1)
    a = degrade(gt, DegradationSpec("gaussian_noise", 0.3, 42))
    b = degrade(gt, DegradationSpec("gaussian_noise", 0.3, 42))
    c = degrade(gt, DegradationSpec("gaussian_noise", 0.3, 43))
    assert np.array_equal(a.translations, b.translations)
    assert np.array_equal(a.quaternions, b.quaternions)
    assert not np.array_equal(a.translations, c.translations)
    assert a.scale_status is ScaleStatus.ARBITRARY


def test_gen_gt_is_deterministic():
    assert np.array_equal(gen_gt("arc", seed=9).translations, gen_gt("arc", seed=9).translations)


def test_rng_stream_is_pinned():
    # PCG64 output for a fixed seed is specified; a change here breaks reproducibility.
    from targetbench.synth import make_rng
    assert make_rng(0, 0).random(3).tolist() == [
        0.6369616873214543, 0.2697867137638703, 0.04097352393619469]


# -- sweeps ------------------------------------------------------------------

NOISE = [round(0.1 * i, 1) for i in range(11)]


def test_noise_sweep_monotone():
    rows = sensitivity_sweep("straight", "gaussian_noise", NOISE, repeats=20)
    wo = [r.mean["wo"] for r in rows]
    assert all(a >= b for a, b in zip(wo, wo[1:]))
    assert spearmanr(NOISE, wo).statistic <= -0.9


@pytest.mark.parametrize("shape", SHAPES)
def test_zero_magnitude_sweep_row(shape):
    rows = sensitivity_sweep(shape, "gaussian_noise", [0.0, 0.5], repeats=3)
    assert abs(rows[0].mean["wo"] - MetricConfig().weight_sum) < 1e-9
    assert rows[0].std["ade"] < 1e-9


def test_early_stop_sweep_se():
    rows = sensitivity_sweep("straight", "early_stop", [0.0, 0.25, 0.5], repeats=5,
                             cfg=ANCHOR_FIRST_STEP)
    se = [r.mean["se"] for r in rows]
    assert se[0] > se[1] > se[2]


def test_sweep_requires_two_magnitudes():
    with pytest.raises(ValueError):
        sensitivity_sweep("straight", "gaussian_noise", [0.1], repeats=1)


def test_sweep_csv_and_determinism():
    a = sweep_to_csv(sensitivity_sweep("arc", "heading_bias", [0.0, 0.2], repeats=3, seed=5))
    b = sweep_to_csv(sensitivity_sweep("arc", "heading_bias", [0.0, 0.2], repeats=3, seed=5))
    assert a == b
    lines = a.splitlines()
    assert lines[0] == "magnitude,metric,repeats,mean,stddev"
    assert len(lines) == 1 + 2 * 6
    assert lines[1].startswith("0.000000,ade,3,")
