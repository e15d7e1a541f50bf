"""Synthetic ground truth and corrupted predictions with known geometry.

Randomness comes from numpy's PCG64 bit generator seeded through
``numpy.random.SeedSequence``. Both are fully specified algorithms, so a fixed
seed produces identical streams on every platform.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .core import (
    FrameOfReference,
    MetricConfig,
    ScaleStatus,
    Scenario,
    Split,
    TargetMode,
    Trajectory,
)
from .geometry import HEADING_MIN_DISPLACEMENT, interpolate_progress
from .metrics import evaluate_scenario

METRIC_NAMES = ("ade", "fde", "mr", "se", "ac", "wo")


class Shape(str, enum.Enum):
    STRAIGHT = "straight"
    ARC = "arc"
    S_CURVE = "s_curve"
    STOP_TURN = "stop_turn"


class DegradationKind(str, enum.Enum):
    GAUSSIAN_NOISE = "gaussian_noise"        # meters, per-point noise std
    HEADING_BIAS = "heading_bias"            # radians, path rotated about the start
    SCALE_ERROR = "scale_error"              # ratio, path stretched by 1 + magnitude
    EARLY_STOP = "early_stop"                # progress fraction left untravelled
    ENDPOINT_OVERSHOOT = "endpoint_overshoot"  # meters past the final pose
    STATIC_FREEZE = "static_freeze"          # progress fraction spent frozen at the start


_FRACTION_KINDS = {DegradationKind.EARLY_STOP, DegradationKind.STATIC_FREEZE}


def make_rng(*seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(seed))))


@dataclass(frozen=True)
class DegradationSpec:
    kind: DegradationKind
    magnitude: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", DegradationKind(self.kind))
        if not (math.isfinite(self.magnitude) and self.magnitude >= 0):
            raise ValueError("degradation magnitude must be >= 0")
        if self.kind in _FRACTION_KINDS and self.magnitude > 1:
            raise ValueError(f"{self.kind.value} magnitude is a progress fraction in [0, 1]")


def _headings(xy: np.ndarray) -> np.ndarray:
    """Yaw toward the first later point at least 1 mm away; carried over otherwise."""
    n = len(xy)
    yaw = np.zeros(n)
    prev = None
    for i in range(n):
        d = np.hypot(*(xy[i + 1:] - xy[i]).T) if i < n - 1 else np.zeros(0)
        far = np.nonzero(d >= HEADING_MIN_DISPLACEMENT)[0]
        if len(far):
            v = xy[i + 1 + far[0]] - xy[i]
            yaw[i] = math.atan2(v[1], v[0])
        else:
            yaw[i] = prev if prev is not None else 0.0
        prev = yaw[i]
    return yaw


def _arc(s: np.ndarray, radius: float, sign: float) -> np.ndarray:
    """Points at arc length ``s`` on a circle starting at the origin heading +x."""
    a = s / radius
    return np.column_stack([radius * np.sin(a), sign * radius * (1.0 - np.cos(a))])


def _shape_points(shape: Shape, length: float, n: int, turn_angle: float,
                  dwell_fraction: float) -> np.ndarray:
    u = np.arange(n) / (n - 1)
    if shape is Shape.STRAIGHT:
        return np.column_stack([length * u, np.zeros(n)])
    if shape is Shape.ARC:
        return _arc(length * u, length / turn_angle, 1.0)
    if shape is Shape.S_CURVE:
        half = length / 2.0
        r = half / turn_angle
        s = length * u
        first = _arc(np.minimum(s, half), r, 1.0)
        # Second arc turns the other way, starting where the first one ends.
        start = _arc(np.array([half]), r, 1.0)[0]
        local = _arc(np.maximum(s - half, 0.0), r, -1.0)
        c, sn = math.cos(turn_angle), math.sin(turn_angle)
        second = local @ np.array([[c, sn], [-sn, c]]) + start
        return np.where((s <= half)[:, None], first, second)
    if shape is Shape.STOP_TURN:
        n_dwell = int(round(dwell_fraction * n))
        m = n - n_dwell
        if m < 2:
            raise ValueError("dwell fraction leaves fewer than 2 moving samples")
        s = length * np.arange(m) / (m - 1)
        half = length / 2.0
        corner = np.array([half, 0.0])
        c, sn = math.cos(turn_angle), math.sin(turn_angle)
        leg1 = np.column_stack([s, np.zeros(m)])
        leg2 = corner + np.column_stack([(s - half) * c, (s - half) * sn])
        moving = np.where((s <= half)[:, None], leg1, leg2)
        k = int(np.count_nonzero(s <= half))
        return np.vstack([moving[:k], np.repeat(corner[None], n_dwell, axis=0), moving[k:]])
    raise ValueError(f"unknown shape {shape!r}")


def _poses_from_xy(xy: np.ndarray, z: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    yaw = _headings(xy)
    trans = np.column_stack([xy, np.full(len(xy), z)])
    quats = Rotation.from_euler("z", yaw).as_quat()
    return trans, quats


def gen_gt(shape: Shape | str = Shape.STRAIGHT, length_m: float = 4.0, n_points: int = 201,
           seed: int = 0, frame_rate: float = 25.0, turn_angle: float = math.pi / 2,
           dwell_fraction: float = 0.2) -> Trajectory:
    """Metric ground-truth trajectory of the given shape.

    The path has arc length ``length_m`` and constant speed while moving.
    ``seed`` picks the start position and heading in the world frame. Poses
    face the direction of travel.
    """
    shape = Shape(shape)
    if not length_m > 0:
        raise ValueError("length_m must be positive")
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    local = _shape_points(shape, float(length_m), int(n_points), turn_angle, dwell_fraction)
    rng = make_rng(seed, 0)
    phi = rng.uniform(-math.pi, math.pi)
    offset = rng.uniform(-5.0, 5.0, size=2)
    c, s = math.cos(phi), math.sin(phi)
    xy = local @ np.array([[c, s], [-s, c]]) + offset
    trans, quats = _poses_from_xy(xy)
    idx = np.arange(n_points)
    return Trajectory(t_index=idx, translations=trans, quaternions=quats,
                      timestamps=idx / frame_rate, frame_rate=frame_rate,
                      scale_status=ScaleStatus.METRIC, frame_of_reference=FrameOfReference.WORLD)


def _progress_warp(gt: Trajectory, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pos = interpolate_progress(gt.translations, u)
    nearest = np.rint(u * (len(gt) - 1)).astype(int)
    return pos, np.array(gt.quaternions)[nearest]


def degrade(gt: Trajectory, spec: DegradationSpec) -> Trajectory:
    """Corrupt ``gt`` and re-express it in a random rigid frame at a random scale.

    The output looks like a monocular reconstruction: arbitrary scale,
    reconstruction frame, camera-to-world poses. Orientations are untouched by
    the corruptions, so the initial optical axis always points the way the
    ground truth starts.
    """
    kind, m = spec.kind, float(spec.magnitude)
    n = len(gt)
    P = np.array(gt.translations)
    Q = np.array(gt.quaternions)
    u = np.arange(n) / (n - 1)
    noise_rng = make_rng(spec.seed, 1)
    frame_rng = make_rng(spec.seed, 2)

    if kind is DegradationKind.GAUSSIAN_NOISE:
        draws = noise_rng.standard_normal((n - 1, 2))
        P[1:, :2] += m * draws
    elif kind is DegradationKind.HEADING_BIAS:
        c, s = math.cos(m), math.sin(m)
        rel = P[:, :2] - P[0, :2]
        P[:, :2] = rel @ np.array([[c, s], [-s, c]]) + P[0, :2]
    elif kind is DegradationKind.SCALE_ERROR:
        P = P[0] + (1.0 + m) * (P - P[0])
    elif kind is DegradationKind.EARLY_STOP:
        if m > 0:
            P, Q = _progress_warp(gt, np.minimum(u, 1.0 - m))
    elif kind is DegradationKind.STATIC_FREEZE:
        if m >= 1:
            P, Q = _progress_warp(gt, np.zeros(n))
        elif m > 0:
            P, Q = _progress_warp(gt, np.maximum(u - m, 0.0) / (1.0 - m))
    elif kind is DegradationKind.ENDPOINT_OVERSHOOT:
        fwd = Rotation.from_quat(Q[-1]).as_matrix()[:, 0]
        fwd[2] = 0.0
        fwd /= np.linalg.norm(fwd)
        P = P + m * u[:, None] * fwd[None, :]

    yaw = frame_rng.uniform(-math.pi, math.pi)
    shift = frame_rng.uniform(-10.0, 10.0, size=3)
    scale = math.exp(frame_rng.uniform(math.log(0.1), math.log(10.0)))
    Rz = Rotation.from_euler("z", yaw)
    P = scale * Rz.apply(P) + shift
    Q = (Rz * Rotation.from_quat(Q)).as_quat()
    return Trajectory(t_index=gt.t_index, translations=P, quaternions=Q,
                      timestamps=gt.timestamps, frame_rate=gt.frame_rate,
                      scale_status=ScaleStatus.ARBITRARY,
                      frame_of_reference=FrameOfReference.RECONSTRUCTION)


def make_scenario(gt: Trajectory, scenario_id: str = "synth", category: str = "synthetic",
                  prompt: str = "go to the target", target_mode=TargetMode.EXPLICIT,
                  split=Split.EVAL) -> Scenario:
    return Scenario(id=scenario_id, category=category, prompt=prompt, target_mode=target_mode,
                    split=split, gt=gt, duration_s=gt.duration)


@dataclass(frozen=True)
class SweepRow:
    magnitude: float
    repeats: int
    mean: dict
    std: dict


def sensitivity_sweep(shape, kind, magnitudes: Sequence[float], repeats: int,
                      cfg: MetricConfig | None = None, seed: int = 0, length_m: float = 4.0,
                      n_points: int = 201) -> list[SweepRow]:
    """Mean and spread of every metric per degradation magnitude.

    Repeat ``r`` uses the same ground truth and random draws at every
    magnitude, so only the magnitude varies along a row of the table.
    """
    if len(magnitudes) < 2:
        raise ValueError("need at least 2 magnitudes")
    cfg = cfg or MetricConfig()
    values = {mag: {k: [] for k in METRIC_NAMES} for mag in magnitudes}
    for r in range(repeats):
        gt_seed, deg_seed = (int(v) for v in np.random.SeedSequence([seed, r]).generate_state(2))
        scenario = make_scenario(gen_gt(shape, length_m, n_points, seed=gt_seed))
        for mag in magnitudes:
            pred = degrade(scenario.gt, DegradationSpec(kind, mag, deg_seed))
            res = evaluate_scenario(scenario, pred, cfg)
            for k in METRIC_NAMES:
                values[mag][k].append(getattr(res, k))
    rows = []
    for mag in magnitudes:
        rows.append(SweepRow(
            magnitude=float(mag), repeats=repeats,
            mean={k: float(np.mean(v)) for k, v in values[mag].items()},
            std={k: float(np.std(v)) for k, v in values[mag].items()},
        ))
    return rows


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    buf.write("magnitude,metric,repeats,mean,stddev\n")
    for row in rows:
        for k in METRIC_NAMES:
            buf.write(f"{row.magnitude:.6f},{k},{row.repeats},{row.mean[k]:.6f},{row.std[k]:.6f}\n")
    return buf.getvalue()
