"""From raw 3D pose sequences to metric ground-plane trajectories.

World vertical is the ground-truth z axis. A pose's forward (optical) axis is
the body x axis of its camera-to-world rotation. Predictions are aligned to the
ground truth by a rotation about z plus a translation only, so the shape of the
predicted plan is never fitted to the answer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    PoseConvention,
    ScaleStatus,
    TargetBenchError,
    Trajectory,
    Trajectory2D,
)

HEADING_MIN_DISPLACEMENT = 1e-3
_AXIS_EPS = 1e-9


class GeometryError(TargetBenchError, ValueError):
    pass


class NearZeroDisplacement(GeometryError):
    """Predicted anchor displacement too small to recover a scale."""


class UndefinedHeading(GeometryError):
    pass


@dataclass(frozen=True)
class ScaleRecovery:
    lambda_: float
    anchor_frame_k: int
    d_pred: float
    d_real: float

    def __post_init__(self):
        if not self.lambda_ > 0:
            raise ValueError("scale factor must be positive")


def camera_centers(traj: Trajectory, convention=PoseConvention.CAMERA_TO_WORLD) -> np.ndarray:
    """Camera centers as an ``(N, 3)`` array.

    For ``world_to_camera`` poses the center is ``-R^T t``.
    """
    convention = PoseConvention(convention)
    if convention is PoseConvention.CAMERA_TO_WORLD:
        return np.array(traj.translations)
    R = traj.rotation_matrices
    return -np.einsum("nji,nj->ni", R, traj.translations)


def camera_to_world_rotations(traj: Trajectory, convention=PoseConvention.CAMERA_TO_WORLD) -> np.ndarray:
    R = traj.rotation_matrices
    if PoseConvention(convention) is PoseConvention.WORLD_TO_CAMERA:
        R = np.transpose(R, (0, 2, 1))
    return R


def forward_axes(traj: Trajectory, convention=PoseConvention.CAMERA_TO_WORLD) -> np.ndarray:
    return camera_to_world_rotations(traj, convention)[:, :, 0]


def interpolate_progress(points: np.ndarray, u: np.ndarray | float) -> np.ndarray:
    """Linear interpolation at normalized index positions ``u`` in [0, 1].

    Evaluated as ``(1 - f) * a + f * b`` so that ``u = 0`` and ``u = 1``
    return the stored endpoints exactly.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    x = np.atleast_1d(np.asarray(u, dtype=float)) * (n - 1)
    return _interp_positions(points, x)


def _interp_positions(values: np.ndarray, x: np.ndarray) -> np.ndarray:
    n = len(values)
    x = np.clip(x, 0.0, n - 1)
    i = np.minimum(np.floor(x).astype(np.int64), n - 2)
    f = x - i
    if values.ndim > 1:
        f = f[:, None]
    return (1.0 - f) * values[i] + f * values[i + 1]


def recover_scale(pred: np.ndarray, gt: Trajectory, k: int | str = "last",
                  eps: float = 1e-6) -> tuple[np.ndarray, ScaleRecovery]:
    """Rescale ``pred`` so its anchor displacement matches the ground truth.

    ``d_pred = |t_k - t_1|`` over predicted points; ``d_real`` is the ground
    truth displacement between the positions at the same normalized progress.
    Every point is multiplied by ``lambda = d_real / d_pred``.
    """
    pred = np.asarray(pred, dtype=float)
    s = len(pred)
    if s < 2:
        raise GeometryError("prediction needs at least 2 points")
    k = s - 1 if k == "last" else int(k)
    if not 1 <= k <= s - 1:
        raise GeometryError(f"anchor frame {k} outside prediction of length {s}")
    d_pred = float(np.linalg.norm(pred[k] - pred[0]))
    if d_pred <= eps:
        raise NearZeroDisplacement(
            f"predicted displacement {d_pred:.3g} between frames 0 and {k} is below {eps:g}"
        )
    g = np.asarray(gt.translations)
    anchor = _interp_positions(g, np.array([k * (len(g) - 1) / (s - 1)]))[0]
    d_real = float(np.linalg.norm(anchor - g[0]))
    if d_real <= 0:
        raise GeometryError("ground-truth displacement at the anchor frame is zero")
    lam = d_real / d_pred
    return pred * lam, ScaleRecovery(lam, k, d_pred, d_real)


def _ground_heading(v: np.ndarray) -> np.ndarray | None:
    h = np.array(v[:2], dtype=float)
    norm = np.hypot(h[0], h[1])
    if norm < _AXIS_EPS:
        return None
    return h / norm


def gt_initial_heading(gt: Trajectory) -> np.ndarray:
    """Unit ground-plane heading at the start of the ground truth.

    Uses the first position at least 1 mm from the start, falling back to the
    first pose's forward axis.
    """
    xy = np.asarray(gt.translations)[:, :2]
    d = np.hypot(*(xy - xy[0]).T)
    moved = np.nonzero(d >= HEADING_MIN_DISPLACEMENT)[0]
    if len(moved):
        return (xy[moved[0]] - xy[0]) / d[moved[0]]
    h = _ground_heading(forward_axes(gt)[0])
    if h is None:
        raise UndefinedHeading("ground truth has no displacement and a vertical forward axis")
    return h


def yaw_rotation(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Rotation about z taking unit 2D heading ``src`` onto ``dst``."""
    c = src[0] * dst[0] + src[1] * dst[1]
    s = src[0] * dst[1] - src[1] * dst[0]
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def align_to_gt_start(pred: np.ndarray, forward: np.ndarray, gt: Trajectory) -> np.ndarray:
    """Rigidly move metric ``pred`` points into the ground-truth world frame.

    ``forward`` is the prediction's initial optical axis. The first predicted
    point lands on the first ground-truth position and the ground-plane
    projection of ``forward`` onto the ground-truth initial heading.
    """
    pred = np.asarray(pred, dtype=float)
    h_pred = _ground_heading(np.asarray(forward, dtype=float))
    if h_pred is None:
        raise UndefinedHeading("predicted initial optical axis is vertical")
    Rz = yaw_rotation(h_pred, gt_initial_heading(gt))
    g0 = np.asarray(gt.translations)[0]
    return (pred - pred[0]) @ Rz.T + g0


def project_ground_plane(points: np.ndarray, t_index=None, frame_rate: float = 25.0,
                         scale_status=ScaleStatus.METRIC) -> Trajectory2D:
    points = np.asarray(points, dtype=float)
    return Trajectory2D(xy=points[:, :2], t_index=t_index, frame_rate=frame_rate,
                        scale_status=scale_status)


def gt_to_2d(gt: Trajectory) -> Trajectory2D:
    return project_ground_plane(gt.translations, gt.t_index, gt.frame_rate, ScaleStatus.METRIC)


def resample(traj: Trajectory2D, n: int, stop: float = 1.0) -> Trajectory2D:
    """Linear resampling to ``n`` points at uniform normalized-index positions.

    With ``stop < 1`` only the prefix up to that progress is sampled.
    """
    if n < 2:
        raise ValueError("resample needs n >= 2")
    if not 0 < stop <= 1:
        raise ValueError("stop must lie in (0, 1]")
    m = len(traj)
    # Integer numerator first: at n == m and stop == 1 the positions are exact.
    if stop == 1.0:
        x = np.arange(n) * (m - 1) / (n - 1)
    else:
        x = np.arange(n) * (stop * (m - 1)) / (n - 1)
    xy = _interp_positions(traj.xy, x)
    t = _interp_positions(traj.t_index, x)
    return Trajectory2D(xy=xy, t_index=t, frame_rate=traj.frame_rate,
                        scale_status=traj.scale_status)


def truncate_horizon(gt: Trajectory2D, pred: Trajectory2D, horizon_s: float, full_s: float,
                     n: int) -> tuple[Trajectory2D, Trajectory2D]:
    """Cut both trajectories at progress ``horizon_s / full_s``, resampled to ``n``."""
    if not 0 < horizon_s:
        raise GeometryError("horizon must be positive")
    if horizon_s > full_s:
        raise GeometryError(f"horizon {horizon_s:g} s exceeds scenario duration {full_s:g} s")
    frac = 1.0 if horizon_s == full_s else horizon_s / full_s
    return resample(gt, n, frac), resample(pred, n, frac)


@dataclass(frozen=True)
class DecodedPrediction:
    path: Trajectory2D
    scale: ScaleRecovery | None
    convention: PoseConvention


def decode_prediction(pred: Trajectory, gt: Trajectory, convention=PoseConvention.CAMERA_TO_WORLD,
                      scale_anchor: int | str = "last", eps_scale: float = 1e-6) -> DecodedPrediction:
    """Camera centers, scale recovery (unless metric), alignment and projection."""
    convention = PoseConvention(convention)
    centers = camera_centers(pred, convention)
    scale = None
    status = ScaleStatus.METRIC
    if pred.scale_status is not ScaleStatus.METRIC:
        centers, scale = recover_scale(centers, gt, scale_anchor, eps_scale)
        status = ScaleStatus.RECOVERED
    world = align_to_gt_start(centers, forward_axes(pred, convention)[0], gt)
    path = project_ground_plane(world, pred.t_index, pred.frame_rate, status)
    return DecodedPrediction(path, scale, convention)
