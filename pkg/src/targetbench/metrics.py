"""Path-planning metrics on paired 2D trajectories.

All pairwise metrics take ``(T, 2)`` arrays (or :class:`Trajectory2D`) of equal
length where index ``t`` of the prediction is matched to index ``t`` of the
ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    Coverage,
    MetricConfig,
    Scenario,
    ScenarioResult,
    ScaleStatus,
    TargetBenchError,
    Trajectory,
    Trajectory2D,
)
from . import geometry


class ScenarioError(TargetBenchError):
    def __init__(self, scenario_id: str, cause: Exception):
        self.scenario_id = scenario_id
        self.cause = cause
        super().__init__(f"scenario {scenario_id}: {cause}")


def _xy(traj) -> np.ndarray:
    xy = traj.xy if isinstance(traj, Trajectory2D) else np.asarray(traj, dtype=float)
    if xy.ndim != 2 or xy.shape[1] != 2:
        raise ValueError(f"expected (T, 2) positions, got shape {xy.shape}")
    return xy


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p, g = _xy(pred), _xy(gt)
    if len(p) != len(g):
        raise ValueError(f"length mismatch: prediction {len(p)} vs ground truth {len(g)}")
    if len(p) < 1:
        raise ValueError("empty trajectories")
    return p, g


def pointwise_errors(pred, gt) -> np.ndarray:
    p, g = _pair(pred, gt)
    return np.hypot(p[:, 0] - g[:, 0], p[:, 1] - g[:, 1])


def ade(pred, gt) -> float:
    return float(np.mean(pointwise_errors(pred, gt)))


def fde(pred, gt) -> float:
    p, g = _pair(pred, gt)
    return float(math.hypot(*(p[-1] - g[-1])))


def miss_rate(pred, gt, tau: float = 2.0) -> float:
    """Percentage of timesteps whose error is strictly above ``tau``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    err = pointwise_errors(pred, gt)
    return 100.0 * np.count_nonzero(err > tau) / len(err)


def soft_endpoint(pred, gt, sigma: float = 0.6) -> float:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    d = fde(pred, gt)
    return math.exp(-(d * d) / (2.0 * sigma * sigma))


@dataclass(frozen=True, eq=False)
class CorridorSpec:
    reference_points: np.ndarray
    radii: np.ndarray
    progress: np.ndarray


def corridor_radius(p, sigma_min: float = 0.15, sigma_max: float = 0.5, beta: float = 0.25):
    p = np.asarray(p, dtype=float)
    return sigma_min + (sigma_max - sigma_min) * np.exp(-((p - 0.5) ** 2) / (2.0 * beta * beta))


def build_corridor(gt, cfg: MetricConfig | None = None) -> CorridorSpec:
    """Reference points at uniform index positions along ``gt`` with radii
    peaking at mid-progress."""
    cfg = cfg or MetricConfig()
    g = _xy(gt)
    if len(g) < 2:
        raise ValueError("corridor needs a ground truth of length >= 2")
    m = cfg.corridor_M
    progress = np.arange(m) / (m - 1)
    x = np.arange(m) * (len(g) - 1) / (m - 1)
    refs = geometry._interp_positions(g, x)
    radii = corridor_radius(progress, cfg.sigma_min, cfg.sigma_max, cfg.beta)
    for a in (refs, radii, progress):
        a.setflags(write=False)
    return CorridorSpec(refs, radii, progress)


def covered_mask(pred, corridor: CorridorSpec, semantics=Coverage.EXISTS) -> np.ndarray:
    """Whether each predicted point lies inside the corridor.

    ``exists``: inside any reference disk. ``nearest``: inside the disk of the
    closest reference point (first one on ties).
    """
    p = _xy(pred)
    diff = p[:, None, :] - corridor.reference_points[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    if Coverage(semantics) is Coverage.EXISTS:
        return np.any(dist <= corridor.radii[None, :], axis=1)
    nearest = np.argmin(dist, axis=1)
    rows = np.arange(len(p))
    return dist[rows, nearest] <= corridor.radii[nearest]


def approach_consistency(pred, corridor: CorridorSpec, gamma: float = 5.0,
                         semantics=Coverage.EXISTS) -> float:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    mask = covered_mask(pred, corridor, semantics)
    n_p = len(mask)
    if n_p == 0:
        raise ValueError("prediction is empty")
    n_c = int(np.count_nonzero(mask))
    if n_c == n_p:
        return 1.0
    return math.exp(-gamma * (n_p - n_c) / n_p)


def weighted_overall(ade: float, fde: float, mr: float, se: float, ac: float,
                     cfg: MetricConfig | None = None) -> float:
    """Convex-style combination of the five metrics.

    The maximum attainable value equals the sum of the four weights.
    """
    cfg = cfg or MetricConfig()
    if not (ade >= 0 and fde >= 0):
        raise ValueError(f"ADE/FDE must be non-negative, got {ade}, {fde}")
    if not 0 <= mr <= 100:
        raise ValueError(f"MR must lie in [0, 100], got {mr}")
    if not (0 <= se <= 1 and 0 <= ac <= 1):
        raise ValueError(f"SE and AC must lie in [0, 1], got {se}, {ac}")
    total = math.fsum((
        cfg.w_ade * math.exp(-ade / cfg.tau_ade),
        cfg.w_fde * math.exp(-fde / cfg.tau_fde),
        cfg.w_mr * (1.0 - mr / 100.0),
        cfg.w_seac * se * ac,
    ))
    # Weights may exceed 1 by the validation tolerance.
    return min(total, 1.0)


def score_paths(pred, gt, cfg: MetricConfig | None = None) -> dict[str, float]:
    """All five metrics and WO for already-paired trajectories."""
    cfg = cfg or MetricConfig()
    out = {
        "ade": ade(pred, gt),
        "fde": fde(pred, gt),
        "mr": miss_rate(pred, gt, cfg.tau_miss),
        "se": soft_endpoint(pred, gt, cfg.sigma_se),
        "ac": approach_consistency(pred, build_corridor(gt, cfg), cfg.gamma, cfg.coverage),
    }
    out["wo"] = weighted_overall(cfg=cfg, **out)
    return out


def _stationary_like(gt2d: Trajectory2D) -> Trajectory2D:
    xy = np.repeat(gt2d.xy[:1], len(gt2d), axis=0)
    return Trajectory2D(xy=xy, t_index=gt2d.t_index, frame_rate=gt2d.frame_rate)


def evaluate_scenario(scenario: Scenario, pred: Trajectory | Trajectory2D,
                      cfg: MetricConfig | None = None,
                      horizon_s: float | None = None) -> ScenarioResult:
    """Decode (when given 3D poses), pair and score one prediction.

    A prediction whose anchor displacement is degenerate is scored as a
    stationary path sitting at the ground-truth start.
    """
    cfg = cfg or MetricConfig()
    horizon = scenario.duration_s if horizon_s is None else float(horizon_s)
    gt2d = geometry.gt_to_2d(scenario.gt)
    decode: dict = {"convention": cfg.pose_convention.value, "lambda": None,
                    "anchor_k": None, "degenerate": False}
    try:
        if isinstance(pred, Trajectory):
            try:
                decoded = geometry.decode_prediction(
                    pred, scenario.gt, cfg.pose_convention, cfg.scale_anchor, cfg.eps_scale)
                path = decoded.path
                if decoded.scale is not None:
                    decode["lambda"] = decoded.scale.lambda_
                    decode["anchor_k"] = decoded.scale.anchor_frame_k
            except geometry.NearZeroDisplacement:
                path = _stationary_like(gt2d)
                decode["degenerate"] = True
        else:
            if pred.scale_status is ScaleStatus.ARBITRARY:
                raise geometry.GeometryError("2D prediction must be metric")
            path = pred
        g, p = geometry.truncate_horizon(gt2d, path, horizon, scenario.duration_s, cfg.n_eval)
        m = score_paths(p, g, cfg)
    except (geometry.GeometryError, ValueError) as exc:
        raise ScenarioError(scenario.id, exc) from exc
    return ScenarioResult(scenario_id=scenario.id, horizon_s=horizon, decode=decode, **m)


def stationary_result(scenario: Scenario, cfg: MetricConfig | None = None,
                      horizon_s: float | None = None) -> ScenarioResult:
    """Score a prediction that never leaves the ground-truth start."""
    cfg = cfg or MetricConfig()
    gt2d = geometry.gt_to_2d(scenario.gt)
    return evaluate_scenario(scenario, _stationary_like(gt2d), cfg, horizon_s)
