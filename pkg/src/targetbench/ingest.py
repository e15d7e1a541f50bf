"""Readers and writers for pose files and the dataset manifest.

Three pose formats are supported:

pose-line
    Whitespace-separated ``timestamp tx ty tz qx qy qz qw`` per line, with
    ``#`` comments. A ``# scale: metric|arbitrary`` header selects the scale
    status (metric when absent); ``# frame_rate: <hz>`` is optional.
extrinsics table
    CSV with header ``frame_idx,r11,...,r33,t1,t2,t3``: the rotation block in
    row-major order followed by the translation column of ``[R | t]``.
pose encoding table
    CSV with header ``frame_idx,tx,ty,tz,qx,qy,qz,qw,fov_h,fov_v``.

Both tables may carry a trailing ``timestamp`` column. Writers emit floats
with ``repr`` so that parse(write(x)) reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.spatial.transform import Rotation

from .core import (
    FrameOfReference,
    ScaleStatus,
    Scenario,
    Split,
    TargetBenchError,
    TargetMode,
    Trajectory,
)

log = logging.getLogger(__name__)

EXTRINSICS_HEADER = ["frame_idx", "r11", "r12", "r13", "r21", "r22", "r23",
                     "r31", "r32", "r33", "t1", "t2", "t3"]
ENCODING_HEADER = ["frame_idx", "tx", "ty", "tz", "qx", "qy", "qz", "qw", "fov_h", "fov_v"]
POSE_LINE_FIELDS = 8
ORTHONORMAL_TOL = 1e-3
MANIFEST_VERSION = "1.0"


class PoseFormatError(TargetBenchError, ValueError):
    """Malformed pose file. ``line`` and ``column`` are 1-based when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        super().__init__(message)


class ManifestError(TargetBenchError, ValueError):
    pass


def _fmt(v: float) -> str:
    return repr(float(v))


def _parse_float(token: str, line: int, column: int, prefix: str) -> float:
    try:
        v = float(token)
    except ValueError:
        raise PoseFormatError(
            f"{prefix}, column {column}: cannot parse {token!r} as a number", line, column
        ) from None
    if not np.isfinite(v):
        raise PoseFormatError(f"{prefix}, column {column}: non-finite value {token!r}", line, column)
    return v


def _infer_frame_rate(timestamps: np.ndarray, default: float) -> float:
    span = timestamps[-1] - timestamps[0]
    if span > 0:
        return (len(timestamps) - 1) / span
    return default


# -- pose-line -----------------------------------------------------------------

def parse_pose_lines(text: str, frame_rate: float | None = None) -> Trajectory:
    scale = ScaleStatus.METRIC
    header_rate = None
    rows: list[list[float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            key = key.strip().lower()
            if sep and key == "scale":
                value = value.strip().lower()
                if value not in ("metric", "arbitrary"):
                    raise PoseFormatError(f"line {lineno}: unknown scale {value!r}", lineno)
                scale = ScaleStatus(value)
            elif sep and key == "frame_rate":
                header_rate = _parse_float(value.strip(), lineno, 1, f"line {lineno}")
            continue
        tokens = line.split()
        if len(tokens) != POSE_LINE_FIELDS:
            raise PoseFormatError(
                f"line {lineno}: expected {POSE_LINE_FIELDS} fields, got {len(tokens)}", lineno
            )
        rows.append([_parse_float(tok, lineno, col, f"line {lineno}")
                     for col, tok in enumerate(tokens, start=1)])
    if len(rows) < 2:
        raise PoseFormatError(f"fewer than 2 poses (found {len(rows)})")
    data = np.array(rows)
    rate = frame_rate or header_rate or _infer_frame_rate(data[:, 0], 25.0)
    try:
        return Trajectory(
            t_index=np.arange(len(data)),
            translations=data[:, 1:4],
            quaternions=data[:, 4:8],
            timestamps=data[:, 0],
            frame_rate=rate,
            scale_status=scale,
            frame_of_reference=FrameOfReference.WORLD if scale is ScaleStatus.METRIC
            else FrameOfReference.RECONSTRUCTION,
        )
    except ValueError as exc:
        raise PoseFormatError(str(exc)) from exc


def write_pose_lines(traj: Trajectory) -> str:
    status = "metric" if traj.scale_status is ScaleStatus.METRIC else "arbitrary"
    timestamps = traj.timestamps
    if timestamps is None:
        timestamps = (traj.t_index - traj.t_index[0]) / traj.frame_rate
    out = [f"# scale: {status}", f"# frame_rate: {_fmt(traj.frame_rate)}",
           "# timestamp tx ty tz qx qy qz qw"]
    for ts, t, q in zip(timestamps, traj.translations, traj.quaternions):
        out.append(" ".join(_fmt(v) for v in (ts, *t, *q)))
    return "\n".join(out) + "\n"


# -- tables --------------------------------------------------------------------

def _read_table(text: str, expected: list[str]):
    """Parse a table into ``(row, line, frame_idx, values, timestamp)`` tuples."""
    lines = [(i, ln) for i, ln in enumerate(text.splitlines(), start=1)
             if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise PoseFormatError("empty table: missing header row")
    header_line, header = lines[0]
    names = [h.strip() for h in next(csv.reader([header]))]
    has_ts = names == expected + ["timestamp"]
    if names != expected and not has_ts:
        raise PoseFormatError(
            f"line {header_line}: expected header {','.join(expected)}", header_line
        )
    width = len(names)
    out = []
    for row_no, (lineno, raw) in enumerate(lines[1:], start=1):
        fields = next(csv.reader([raw]))
        if len(fields) != width:
            raise PoseFormatError(
                f"row {row_no} (line {lineno}): expected {width} fields, got {len(fields)}", lineno
            )
        prefix = f"row {row_no} (line {lineno})"
        idx_tok = fields[0].strip()
        try:
            frame_idx = int(idx_tok)
        except ValueError:
            raise PoseFormatError(
                f"{prefix}, column 1: frame_idx {idx_tok!r} is not an integer", lineno, 1
            ) from None
        values = [_parse_float(tok.strip(), lineno, col, prefix)
                  for col, tok in enumerate(fields[1:len(expected)], start=2)]
        ts = _parse_float(fields[-1].strip(), lineno, width, prefix) if has_ts else None
        out.append((row_no, lineno, frame_idx, values, ts))
    if len(out) < 2:
        raise PoseFormatError(f"fewer than 2 poses (found {len(out)})")
    prev = None
    for row_no, lineno, frame_idx, _, _ in out:
        if frame_idx < 0 or (prev is not None and frame_idx <= prev):
            raise PoseFormatError(
                f"row {row_no} (line {lineno}): frame_idx {frame_idx} not strictly increasing",
                lineno, 1,
            )
        prev = frame_idx
    return out, has_ts


def _canonical_quat(q: np.ndarray) -> np.ndarray:
    return -q if q[3] < 0 else q


def matrix_to_quaternion(R: np.ndarray) -> np.ndarray:
    return _canonical_quat(Rotation.from_matrix(R).as_quat())


def quaternion_to_matrix(q) -> np.ndarray:
    return Rotation.from_quat(q).as_matrix()


def parse_extrinsics_table(
    text: str,
    frame_rate: float = 25.0,
    scale_status: ScaleStatus = ScaleStatus.ARBITRARY,
) -> Trajectory:
    rows, has_ts = _read_table(text, EXTRINSICS_HEADER)
    idx, trans, quats, stamps = [], [], [], []
    for row_no, lineno, frame_idx, v, ts in rows:
        R = np.array(v[:9]).reshape(3, 3)
        err = np.max(np.abs(R.T @ R - np.eye(3)))
        if err > ORTHONORMAL_TOL:
            raise PoseFormatError(
                f"row {row_no}: rotation not orthonormal (max |R^T R - I| = {err:.3g})", lineno
            )
        if np.linalg.det(R) < 0:
            raise PoseFormatError(f"row {row_no}: reflection, not rotation", lineno)
        idx.append(frame_idx)
        quats.append(matrix_to_quaternion(R))
        trans.append(v[9:12])
        stamps.append(ts)
    return Trajectory(
        t_index=idx, translations=trans, quaternions=quats,
        timestamps=stamps if has_ts else None, frame_rate=frame_rate,
        scale_status=scale_status, frame_of_reference=FrameOfReference.RECONSTRUCTION,
    )


def write_extrinsics_table(traj: Trajectory) -> str:
    header = list(EXTRINSICS_HEADER)
    with_ts = traj.timestamps is not None
    if with_ts:
        header.append("timestamp")
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for i, (R, t) in enumerate(zip(traj.rotation_matrices, traj.translations)):
        vals = [str(int(traj.t_index[i]))]
        vals += [_fmt(R[r, c]) for r in range(3) for c in range(3)]
        vals += [_fmt(x) for x in t]
        if with_ts:
            vals.append(_fmt(traj.timestamps[i]))
        buf.write(",".join(vals) + "\n")
    return buf.getvalue()


def parse_pose_encoding(
    text: str,
    frame_rate: float = 25.0,
    scale_status: ScaleStatus = ScaleStatus.ARBITRARY,
) -> Trajectory:
    rows, has_ts = _read_table(text, ENCODING_HEADER)
    idx = [r[2] for r in rows]
    data = np.array([r[3] for r in rows])
    try:
        return Trajectory(
            t_index=idx, translations=data[:, 0:3], quaternions=data[:, 3:7], fov=data[:, 7:9],
            timestamps=[r[4] for r in rows] if has_ts else None, frame_rate=frame_rate,
            scale_status=scale_status, frame_of_reference=FrameOfReference.RECONSTRUCTION,
        )
    except ValueError as exc:
        raise PoseFormatError(str(exc)) from exc


def write_pose_encoding(traj: Trajectory) -> str:
    header = list(ENCODING_HEADER)
    with_ts = traj.timestamps is not None
    if with_ts:
        header.append("timestamp")
    fov = traj.fov if traj.fov is not None else np.zeros((len(traj), 2))
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for i in range(len(traj)):
        vals = [str(int(traj.t_index[i]))]
        vals += [_fmt(x) for x in (*traj.translations[i], *traj.quaternions[i], *fov[i])]
        if with_ts:
            vals.append(_fmt(traj.timestamps[i]))
        buf.write(",".join(vals) + "\n")
    return buf.getvalue()


# -- format detection ----------------------------------------------------------

FORMATS = ("pose_lines", "extrinsics", "encoding")


def detect_format(text: str) -> str:
    for line in text.splitlines():
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        names = [h.strip() for h in s.split(",")]
        if names[: len(EXTRINSICS_HEADER)] == EXTRINSICS_HEADER:
            return "extrinsics"
        if names[: len(ENCODING_HEADER)] == ENCODING_HEADER:
            return "encoding"
        return "pose_lines"
    return "pose_lines"


def parse_trajectory(text: str, fmt: str | None = None, frame_rate: float | None = None) -> Trajectory:
    fmt = fmt or detect_format(text)
    if fmt == "pose_lines":
        return parse_pose_lines(text, frame_rate=frame_rate)
    if fmt == "extrinsics":
        return parse_extrinsics_table(text, frame_rate=frame_rate or 25.0)
    if fmt == "encoding":
        return parse_pose_encoding(text, frame_rate=frame_rate or 25.0)
    raise ValueError(f"unknown pose format {fmt!r}")


def write_trajectory(traj: Trajectory, fmt: str) -> str:
    writers = {"pose_lines": write_pose_lines, "extrinsics": write_extrinsics_table,
               "encoding": write_pose_encoding}
    return writers[fmt](traj)


def load_trajectory(path, fmt: str | None = None, frame_rate: float | None = None) -> Trajectory:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return parse_trajectory(text, fmt, frame_rate)
    except PoseFormatError as exc:
        raise PoseFormatError(f"{path}: {exc}", exc.line, exc.column) from exc


# -- manifest ------------------------------------------------------------------

_REQUIRED = ("id", "category", "prompt", "target_mode", "split", "gt_file", "frame_rate", "duration_s")


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    category: str
    prompt: str
    target_mode: TargetMode
    split: Split
    gt_file: str
    frame_rate: float
    duration_s: float

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "category": self.category, "prompt": self.prompt,
                "target_mode": self.target_mode.value, "split": self.split.value,
                "gt_file": self.gt_file, "frame_rate": self.frame_rate,
                "duration_s": self.duration_s}


@dataclass(frozen=True)
class Manifest:
    format_version: str
    scenarios: tuple[ManifestEntry, ...]
    root: Path = field(default_factory=Path)

    @property
    def split_counts(self) -> tuple[int, int]:
        """``(train, eval)`` scenario counts."""
        c = Counter(e.split for e in self.scenarios)
        return c[Split.TRAIN], c[Split.EVAL]

    def select(self, split: Split | str | None) -> list[ManifestEntry]:
        if split is None:
            return list(self.scenarios)
        split = Split(split)
        return [e for e in self.scenarios if e.split is split]

    def load_scenario(self, entry: ManifestEntry) -> Scenario:
        gt = load_trajectory(self.root / entry.gt_file, frame_rate=entry.frame_rate)
        return Scenario(id=entry.id, category=entry.category, prompt=entry.prompt,
                        target_mode=entry.target_mode, split=entry.split, gt=gt,
                        duration_s=entry.duration_s)

    def to_json(self) -> str:
        payload = {"format_version": self.format_version,
                   "scenarios": [e.to_dict() for e in self.scenarios]}
        return json.dumps(payload, indent=2) + "\n"


def parse_manifest(data: dict, root: Path | str = ".") -> Manifest:
    if not isinstance(data, dict) or "scenarios" not in data or "format_version" not in data:
        raise ManifestError("manifest must be an object with 'format_version' and 'scenarios'")
    entries = []
    seen: dict[str, int] = {}
    for pos, raw in enumerate(data["scenarios"], start=1):
        if not isinstance(raw, dict):
            raise ManifestError(f"scenario entry {pos}: expected an object")
        missing = [k for k in _REQUIRED if k not in raw]
        if missing:
            raise ManifestError(f"scenario entry {pos}: missing required field(s) {', '.join(missing)}")
        sid = str(raw["id"])
        if sid in seen:
            raise ManifestError(f"duplicate id {sid!r} in entries {seen[sid]} and {pos}")
        seen[sid] = pos
        try:
            mode = TargetMode(raw["target_mode"])
        except ValueError:
            raise ManifestError(f"scenario {sid!r}: unknown target_mode {raw['target_mode']!r}") from None
        try:
            split = Split(raw["split"])
        except ValueError:
            raise ManifestError(f"scenario {sid!r}: unknown split {raw['split']!r}") from None
        if not str(raw["gt_file"]).strip():
            raise ManifestError(f"scenario {sid!r}: empty gt_file")
        try:
            frame_rate = float(raw["frame_rate"])
            duration = float(raw["duration_s"])
        except (TypeError, ValueError):
            raise ManifestError(f"scenario {sid!r}: frame_rate and duration_s must be numbers") from None
        if frame_rate <= 0 or duration <= 0:
            raise ManifestError(f"scenario {sid!r}: frame_rate and duration_s must be positive")
        entries.append(ManifestEntry(sid, str(raw["category"]), str(raw["prompt"]), mode, split,
                                     str(raw["gt_file"]), frame_rate, duration))
    manifest = Manifest(str(data["format_version"]), tuple(entries), Path(root))
    train, ev = manifest.split_counts
    log.info("manifest: %d scenarios (train %d, eval %d)", len(entries), train, ev)
    return manifest


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_manifest(data, root=path.parent)
