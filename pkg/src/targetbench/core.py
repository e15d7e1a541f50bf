"""Domain types and configuration shared across the evaluation pipeline.

Trajectories store their samples as read-only numpy arrays so they can be
handed to worker processes and shared between threads without copying
defensively.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

# Quaternions already this close to unit norm are kept bit-for-bit, so that
# serialize/parse round trips are exact.
_QUAT_RENORM_TOL = 1e-12


class TargetBenchError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TargetBenchError, ValueError):
    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ScaleStatus(str, enum.Enum):
    METRIC = "metric"
    ARBITRARY = "arbitrary"
    RECOVERED = "recovered"


class FrameOfReference(str, enum.Enum):
    WORLD = "world"
    RECONSTRUCTION = "reconstruction"


class TargetMode(str, enum.Enum):
    EXPLICIT = "explicit"
    IMPLICIT = "implicit"


class Split(str, enum.Enum):
    TRAIN = "train"
    EVAL = "eval"


class Aggregation(str, enum.Enum):
    PER_SCENARIO_MEAN = "per_scenario_mean"
    AGGREGATE_THEN_SCORE = "aggregate_then_score"


class Coverage(str, enum.Enum):
    EXISTS = "exists"
    NEAREST = "nearest"


class PoseConvention(str, enum.Enum):
    CAMERA_TO_WORLD = "camera_to_world"
    WORLD_TO_CAMERA = "world_to_camera"


def _normalize_quaternion(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(-1, 4)
    if not np.all(np.isfinite(q)):
        raise ValueError("quaternion components must be finite")
    norms = np.linalg.norm(q, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("quaternion has zero norm")
    off = np.abs(norms - 1.0) > _QUAT_RENORM_TOL
    q = q.copy()
    q[off] /= norms[off, None]
    return q


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Pose:
    """A single camera pose.

    ``rotation`` is a unit quaternion in ``(qx, qy, qz, qw)`` order and is
    renormalized on construction.
    """

    t_index: int
    rotation: tuple[float, float, float, float]
    translation: tuple[float, float, float]
    timestamp: float | None = None
    fov: tuple[float, float] | None = None

    def __post_init__(self):
        if int(self.t_index) != self.t_index or self.t_index < 0:
            raise ValueError(f"t_index must be a non-negative integer, got {self.t_index!r}")
        object.__setattr__(self, "t_index", int(self.t_index))
        q = _normalize_quaternion(self.rotation)[0]
        object.__setattr__(self, "rotation", tuple(float(v) for v in q))
        t = tuple(float(v) for v in self.translation)
        if len(t) != 3 or not all(math.isfinite(v) for v in t):
            raise ValueError(f"translation must be 3 finite values, got {self.translation!r}")
        object.__setattr__(self, "translation", t)
        if self.fov is not None:
            fov = tuple(float(v) for v in self.fov)
            if len(fov) != 2:
                raise ValueError("fov must be a (horizontal, vertical) pair")
            object.__setattr__(self, "fov", fov)
        if self.timestamp is not None:
            object.__setattr__(self, "timestamp", float(self.timestamp))

    @property
    def rotation_matrix(self) -> np.ndarray:
        return Rotation.from_quat(self.rotation).as_matrix()


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Ordered 3D pose sequence.

    Parameters
    ----------
    t_index : (N,) integer frame indices, strictly increasing.
    translations : (N, 3) translations.
    quaternions : (N, 4) rotations in ``(qx, qy, qz, qw)`` order.
    timestamps, fov : optional per-frame arrays.
    """

    t_index: np.ndarray
    translations: np.ndarray
    quaternions: np.ndarray
    frame_rate: float = 25.0
    scale_status: ScaleStatus = ScaleStatus.METRIC
    frame_of_reference: FrameOfReference = FrameOfReference.WORLD
    timestamps: np.ndarray | None = None
    fov: np.ndarray | None = None

    def __post_init__(self):
        idx = np.asarray(self.t_index)
        if idx.ndim != 1 or len(idx) < 2:
            raise ValueError("fewer than 2 poses")
        if not np.all(idx == np.round(idx)) or np.any(idx < 0):
            raise ValueError("t_index must hold non-negative integers")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("t_index must be strictly increasing")
        idx = np.array(idx, dtype=np.int64)
        idx.setflags(write=False)
        object.__setattr__(self, "t_index", idx)
        n = len(idx)

        t = _frozen(self.translations)
        if t.shape != (n, 3):
            raise ValueError(f"translations must have shape ({n}, 3), got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("translations must be finite")
        object.__setattr__(self, "translations", t)

        q = np.asarray(self.quaternions, dtype=float)
        if q.shape != (n, 4):
            raise ValueError(f"quaternions must have shape ({n}, 4), got {q.shape}")
        object.__setattr__(self, "quaternions", _frozen(_normalize_quaternion(q)))

        if not (self.frame_rate > 0 and math.isfinite(self.frame_rate)):
            raise ValueError("frame_rate must be positive")
        object.__setattr__(self, "frame_rate", float(self.frame_rate))
        object.__setattr__(self, "scale_status", ScaleStatus(self.scale_status))
        object.__setattr__(self, "frame_of_reference", FrameOfReference(self.frame_of_reference))

        if self.timestamps is not None:
            ts = _frozen(self.timestamps)
            if ts.shape != (n,):
                raise ValueError("timestamps must have one entry per pose")
            object.__setattr__(self, "timestamps", ts)
        if self.fov is not None:
            fov = _frozen(self.fov)
            if fov.shape != (n, 2):
                raise ValueError("fov must have shape (N, 2)")
            object.__setattr__(self, "fov", fov)

    @classmethod
    def from_poses(cls, poses: Iterable[Pose], **kwargs) -> "Trajectory":
        poses = list(poses)
        if len(poses) < 2:
            raise ValueError("fewer than 2 poses")
        timestamps = None
        if all(p.timestamp is not None for p in poses):
            timestamps = [p.timestamp for p in poses]
        fov = None
        if all(p.fov is not None for p in poses):
            fov = [p.fov for p in poses]
        return cls(
            t_index=[p.t_index for p in poses],
            translations=[p.translation for p in poses],
            quaternions=[p.rotation for p in poses],
            timestamps=timestamps,
            fov=fov,
            **kwargs,
        )

    def __len__(self) -> int:
        return len(self.t_index)

    @property
    def poses(self) -> list[Pose]:
        out = []
        for i in range(len(self)):
            out.append(
                Pose(
                    t_index=int(self.t_index[i]),
                    rotation=tuple(self.quaternions[i]),
                    translation=tuple(self.translations[i]),
                    timestamp=None if self.timestamps is None else float(self.timestamps[i]),
                    fov=None if self.fov is None else tuple(self.fov[i]),
                )
            )
        return out

    @property
    def rotation_matrices(self) -> np.ndarray:
        return Rotation.from_quat(self.quaternions).as_matrix()

    @property
    def duration(self) -> float:
        """Time spanned in seconds, from timestamps when present."""
        if self.timestamps is not None:
            return float(self.timestamps[-1] - self.timestamps[0])
        return float(self.t_index[-1] - self.t_index[0]) / self.frame_rate

    def replace(self, **changes) -> "Trajectory":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Trajectory2D:
    """Ground-plane trajectory in meters, used for scoring.

    ``t_index`` holds (possibly fractional) source frame positions.
    """

    xy: np.ndarray
    t_index: np.ndarray | None = None
    frame_rate: float = 25.0
    scale_status: ScaleStatus = ScaleStatus.METRIC
    frame_of_reference: FrameOfReference = FrameOfReference.WORLD

    def __post_init__(self):
        xy = _frozen(self.xy)
        if xy.ndim != 2 or xy.shape[1] != 2:
            raise ValueError(f"xy must have shape (N, 2), got {xy.shape}")
        if len(xy) < 2:
            raise ValueError("fewer than 2 points")
        if not np.all(np.isfinite(xy)):
            raise ValueError("positions must be finite")
        object.__setattr__(self, "xy", xy)
        if self.t_index is None:
            t = np.arange(len(xy), dtype=float)
        else:
            t = np.asarray(self.t_index, dtype=float)
        if t.shape != (len(xy),) or np.any(np.diff(t) <= 0):
            raise ValueError("t_index must be strictly increasing with one entry per point")
        object.__setattr__(self, "t_index", _frozen(t))
        status = ScaleStatus(self.scale_status)
        if status is ScaleStatus.ARBITRARY:
            raise ValueError("2D trajectories must be metric or scale-recovered")
        if FrameOfReference(self.frame_of_reference) is not FrameOfReference.WORLD:
            raise ValueError("2D trajectories must be expressed in the world frame")
        object.__setattr__(self, "scale_status", status)
        object.__setattr__(self, "frame_of_reference", FrameOfReference.WORLD)

    def __len__(self) -> int:
        return len(self.xy)


@dataclass(frozen=True)
class Scenario:
    id: str
    category: str
    prompt: str
    target_mode: TargetMode
    split: Split
    gt: Trajectory
    duration_s: float

    def __post_init__(self):
        object.__setattr__(self, "target_mode", TargetMode(self.target_mode))
        object.__setattr__(self, "split", Split(self.split))
        if self.gt.scale_status is not ScaleStatus.METRIC:
            raise ValueError(f"scenario {self.id}: ground truth must be metric")
        if not self.duration_s > 0:
            raise ValueError(f"scenario {self.id}: duration_s must be positive")


@dataclass(frozen=True)
class MetricConfig:
    """Every tunable constant of the scoring pipeline.

    The last five fields select decoding and scoring variants rather than
    numeric constants.
    """

    tau_miss: float = 2.0
    sigma_se: float = 0.6
    corridor_M: int = 20
    sigma_min: float = 0.15
    sigma_max: float = 0.5
    beta: float = 0.25
    gamma: float = 5.0
    w_ade: float = 0.05
    w_fde: float = 0.10
    w_mr: float = 0.10
    w_seac: float = 0.65
    tau_ade: float = 1.0
    tau_fde: float = 1.0
    n_eval: int = 100
    aggregation: Aggregation = Aggregation.PER_SCENARIO_MEAN
    coverage: Coverage = Coverage.EXISTS
    pose_convention: PoseConvention = PoseConvention.CAMERA_TO_WORLD
    scale_anchor: int | str = "last"
    eps_scale: float = 1e-6

    def __post_init__(self):
        for name, kind in (
            ("aggregation", Aggregation),
            ("coverage", Coverage),
            ("pose_convention", PoseConvention),
        ):
            try:
                object.__setattr__(self, name, kind(getattr(self, name)))
            except ValueError:
                raise ConfigError([f"unknown {name} {getattr(self, name)!r}"]) from None
        violations = config_violations(self)
        if violations:
            raise ConfigError(violations)

    @property
    def weight_sum(self) -> float:
        return math.fsum((self.w_ade, self.w_fde, self.w_mr, self.w_seac))

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.value if isinstance(v, enum.Enum) else v
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MetricConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([f"unknown config field {k!r}" for k in unknown])
        return cls(**data)


def config_violations(cfg: MetricConfig) -> list[str]:
    out = []
    for name in ("tau_miss", "sigma_se", "sigma_min", "sigma_max", "beta", "gamma",
                 "tau_ade", "tau_fde", "eps_scale"):
        v = getattr(cfg, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            out.append(f"{name} > 0 violated")
    if not (isinstance(cfg.corridor_M, int) and cfg.corridor_M >= 2):
        out.append("corridor_M >= 2 violated")
    if not (isinstance(cfg.n_eval, int) and cfg.n_eval >= 2):
        out.append("n_eval >= 2 violated")
    if not cfg.sigma_min < cfg.sigma_max:
        out.append("sigma_min < sigma_max violated")
    weights = (cfg.w_ade, cfg.w_fde, cfg.w_mr, cfg.w_seac)
    if any(not (math.isfinite(w) and w >= 0) for w in weights):
        out.append("weights >= 0 violated")
    else:
        total = math.fsum(weights)
        # Upper bound keeps the overall score inside [0, 1].
        if total > 1.0 + 1e-9:
            out.append(f"weights sum {total:g} > 1")
        elif total <= 0:
            out.append("weights sum > 0 violated")
    anchor = cfg.scale_anchor
    if not (anchor == "last" or (isinstance(anchor, int) and not isinstance(anchor, bool) and anchor >= 1)):
        out.append(f"scale_anchor must be 'last' or a frame index >= 1, got {anchor!r}")
    return out


def validate_config(cfg: MetricConfig | Mapping[str, Any]) -> MetricConfig:
    """Return ``cfg`` as a checked :class:`MetricConfig`.

    Raises :class:`ConfigError` listing every violated constraint.
    """
    if isinstance(cfg, Mapping):
        return MetricConfig.from_dict(cfg)
    violations = config_violations(cfg)
    if violations:
        raise ConfigError(violations)
    return cfg


@dataclass(frozen=True)
class ScenarioResult:
    scenario_id: str
    ade: float
    fde: float
    mr: float
    se: float
    ac: float
    wo: float
    horizon_s: float
    decode: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.ade >= 0 and self.fde >= 0):
            raise ValueError("ade and fde must be non-negative")
        if not 0 <= self.mr <= 100:
            raise ValueError("mr must lie in [0, 100]")
        for name in ("se", "ac", "wo"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def metrics(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in ("ade", "fde", "mr", "se", "ac", "wo")}
