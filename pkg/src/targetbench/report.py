"""Aggregation of per-scenario results and the on-disk report formats."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .core import Aggregation, MetricConfig, TargetMode
from .metrics import weighted_overall

COLUMNS = ("fde", "ade", "mr", "se", "ac", "wo")
STATUS_OK = "ok"
STATUS_MISSING = "missing"
STATUS_FAILED = "failed"


def config_json(cfg: MetricConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class ScoredScenario:
    """A per-scenario record as stored in ``<scenario>.json``."""

    scenario_id: str
    model: str
    status: str
    category: str
    target_mode: str
    horizon_s: float | None = None
    metrics: dict | None = None
    decode: dict | None = None
    error: str | None = None

    def to_json(self, cfg: MetricConfig) -> str:
        payload = {
            "scenario_id": self.scenario_id,
            "model": self.model,
            "status": self.status,
            "category": self.category,
            "target_mode": self.target_mode,
            "horizon_s": self.horizon_s,
            "metrics": self.metrics,
            "decode": self.decode,
            "error": self.error,
            "tool_version": __version__,
            "config": cfg.to_dict(),
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ScoredScenario":
        d = json.loads(text)
        return cls(d["scenario_id"], d["model"], d["status"], d["category"], d["target_mode"],
                   d.get("horizon_s"), d.get("metrics"), d.get("decode"), d.get("error"))


@dataclass(frozen=True)
class GroupRow:
    group: str
    n: int
    values: dict


@dataclass(frozen=True)
class AggregateReport:
    model: str
    rows: tuple[GroupRow, ...]
    config: MetricConfig
    missing: tuple[str, ...] = ()
    failed: tuple[str, ...] = ()
    horizon_s: float | None = None
    notes: dict = field(default_factory=dict)

    def row(self, group: str) -> GroupRow:
        for r in self.rows:
            if r.group == group:
                return r
        raise KeyError(group)


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def group_means(records: Sequence[ScoredScenario], cfg: MetricConfig) -> dict:
    keys = ("ade", "fde", "mr", "se", "ac")
    means = {k: _mean([r.metrics[k] for r in records]) for k in keys}
    if cfg.aggregation is Aggregation.AGGREGATE_THEN_SCORE:
        means["wo"] = weighted_overall(cfg=cfg, **means)
    else:
        means["wo"] = _mean([r.metrics["wo"] for r in records])
    return means


def aggregate(model: str, records: Iterable[ScoredScenario], cfg: MetricConfig,
              horizon_s: float | None = None) -> AggregateReport:
    """Group means over scored records; missing and failed ones are only counted."""
    records = sorted(records, key=lambda r: r.scenario_id)
    scored = [r for r in records if r.metrics is not None]
    groups: list[tuple[str, list[ScoredScenario]]] = [("all", scored)]
    for mode in TargetMode:
        groups.append((f"mode:{mode.value}", [r for r in scored if r.target_mode == mode.value]))
    for cat in sorted({r.category for r in scored}):
        groups.append((f"category:{cat}", [r for r in scored if r.category == cat]))
    rows = []
    for name, members in groups:
        if not members and name != "all":
            continue
        values = group_means(members, cfg) if members else {k: math.nan for k in COLUMNS}
        rows.append(GroupRow(name, len(members), values))
    return AggregateReport(
        model=model, rows=tuple(rows), config=cfg,
        missing=tuple(r.scenario_id for r in records if r.status == STATUS_MISSING),
        failed=tuple(r.scenario_id for r in records if r.status == STATUS_FAILED),
        horizon_s=horizon_s,
    )


def _f6(v: float) -> str:
    return f"{v:.6f}"


def _header_lines(cfg: MetricConfig, **extra) -> list[str]:
    lines = [f"# tool: targetbench {__version__}", f"# config: {config_json(cfg)}"]
    lines += [f"# {k}: {v}" for k, v in extra.items()]
    return lines


def aggregate_to_csv(report: AggregateReport) -> str:
    buf = io.StringIO()
    for line in _header_lines(report.config, model=report.model,
                              missing=len(report.missing), failed=len(report.failed)):
        buf.write(line + "\n")
    buf.write("group,n," + ",".join(COLUMNS) + "\n")
    for row in report.rows:
        buf.write(f"{row.group},{row.n}," + ",".join(_f6(row.values[c]) for c in COLUMNS) + "\n")
    return buf.getvalue()


def horizon_to_csv(reports: Sequence[AggregateReport]) -> str:
    cfg = reports[0].config
    buf = io.StringIO()
    for line in _header_lines(cfg, model=reports[0].model):
        buf.write(line + "\n")
    buf.write("horizon_s,group,n," + ",".join(COLUMNS) + "\n")
    for rep in reports:
        for row in rep.rows:
            buf.write(f"{rep.horizon_s:g},{row.group},{row.n},"
                      + ",".join(_f6(row.values[c]) for c in COLUMNS) + "\n")
    return buf.getvalue()


def read_commented_csv(path: Path) -> tuple[dict, list[dict]]:
    """Return ``(header_comments, rows)`` for a CSV written by this package."""
    meta, body = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    return meta, list(csv.DictReader(body))


def load_results_dir(path: Path) -> tuple[MetricConfig, list[ScoredScenario]]:
    path = Path(path)
    records = [ScoredScenario.from_json(p.read_text(encoding="utf-8"))
               for p in sorted(path.glob("*.json")) if p.name != "summary.json"]
    meta, _ = read_commented_csv(path / "aggregate.csv")
    cfg = MetricConfig.from_dict(json.loads(meta["config"]))
    return cfg, records


def config_mismatch(a: MetricConfig, b: MetricConfig) -> str | None:
    da, db = a.to_dict(), b.to_dict()
    for k in sorted(da):
        if da[k] != db[k]:
            return f"config mismatch: {k} {da[k]} vs {db[k]}"
    return None


@dataclass(frozen=True)
class LeaderboardEntry:
    model: str
    n: int
    values: dict


def leaderboard(entries: Sequence[LeaderboardEntry]) -> list[LeaderboardEntry]:
    return sorted(entries, key=lambda e: (-e.values["wo"], e.model))


def leaderboard_markdown(entries: Sequence[LeaderboardEntry]) -> str:
    lines = ["| Rank | Model | N | FDE | ADE | MR | SE | AC | WO |",
             "|---:|---|---:|---:|---:|---:|---:|---:|---:|"]
    for rank, e in enumerate(leaderboard(entries), start=1):
        v = e.values
        lines.append(f"| {rank} | {e.model} | {e.n} | {v['fde']:.3f} | {v['ade']:.3f} | "
                     f"{v['mr']:.2f} | {v['se']:.3f} | {v['ac']:.3f} | {v['wo']:.3f} |")
    return "\n".join(lines) + "\n"


def radar_csv(entries: Sequence[LeaderboardEntry], cfg: MetricConfig) -> str:
    """Five metric axes mapped to [0, 1], higher is better."""
    buf = io.StringIO()
    for line in _header_lines(cfg):
        buf.write(line + "\n")
    buf.write("model,ade,fde,mr,se,ac\n")
    for e in leaderboard(entries):
        v = e.values
        axes = (math.exp(-v["ade"] / cfg.tau_ade), math.exp(-v["fde"] / cfg.tau_fde),
                1.0 - v["mr"] / 100.0, v["se"], v["ac"])
        buf.write(e.model + "," + ",".join(_f6(a) for a in axes) + "\n")
    return buf.getvalue()
