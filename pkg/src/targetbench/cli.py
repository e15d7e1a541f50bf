"""Command-line entry point: ``targetbench {evaluate,horizon,report,synth,sweep}``.

Exit codes: 0 success, 1 some scenarios failed or were missing, 2 configuration
or I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .core import ConfigError, MetricConfig, Split, TargetBenchError, TargetMode
from .ingest import (
    Manifest,
    ManifestEntry,
    ManifestError,
    MANIFEST_VERSION,
    PoseFormatError,
    load_manifest,
    load_trajectory,
    write_pose_lines,
    write_trajectory,
)
from .metrics import ScenarioError, evaluate_scenario, stationary_result
from .report import (
    STATUS_FAILED,
    STATUS_MISSING,
    STATUS_OK,
    AggregateReport,
    LeaderboardEntry,
    ScoredScenario,
    aggregate,
    aggregate_to_csv,
    config_mismatch,
    horizon_to_csv,
    leaderboard,
    leaderboard_markdown,
    load_results_dir,
    radar_csv,
)
from . import synth

log = logging.getLogger("targetbench")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2
PRED_SUFFIXES = {"pose_lines": ".txt", "extrinsics": ".csv", "encoding": ".csv"}


class UsageError(TargetBenchError):
    pass


# -- evaluation ----------------------------------------------------------------

def find_prediction(pred_root: Path, scenario_id: str) -> Path | None:
    matches = sorted(p for p in Path(pred_root).glob(f"{scenario_id}.*") if p.is_file())
    if len(matches) > 1:
        raise PoseFormatError(f"ambiguous predictions for {scenario_id}: "
                              + ", ".join(p.name for p in matches))
    return matches[0] if matches else None


def _zero_scored(scenario, cfg, horizon_s):
    """Worst-case metrics for a failed generation, used with ``--score-failures``."""
    res = stationary_result(scenario, cfg, horizon_s)
    return {"ade": res.ade, "fde": res.fde, "mr": 100.0, "se": 0.0, "ac": 0.0, "wo": 0.0}


def evaluate_entry(manifest: Manifest, entry: ManifestEntry, pred_root: Path, model: str,
                   cfg: MetricConfig, horizon_s: float | None = None,
                   score_failures: bool = False) -> ScoredScenario:
    base = dict(scenario_id=entry.id, model=model, category=entry.category,
                target_mode=entry.target_mode.value)
    try:
        scenario = manifest.load_scenario(entry)
    except (OSError, TargetBenchError, ValueError) as exc:
        return ScoredScenario(status=STATUS_FAILED, error=f"ground truth: {exc}", **base)
    horizon = scenario.duration_s if horizon_s is None else horizon_s
    status, error, metrics, decode = STATUS_OK, None, None, None
    try:
        path = find_prediction(pred_root, entry.id)
        if path is None:
            status, error = STATUS_MISSING, "no prediction file"
        else:
            res = evaluate_scenario(scenario, load_trajectory(path), cfg, horizon)
            metrics, decode = res.metrics, dict(res.decode)
    except (OSError, TargetBenchError, ValueError) as exc:
        status, error = STATUS_FAILED, str(exc)
    if status != STATUS_OK and score_failures:
        try:
            metrics = _zero_scored(scenario, cfg, horizon)
        except ScenarioError as exc:
            error = f"{error}; {exc}"
    return ScoredScenario(status=status, error=error, metrics=metrics, decode=decode,
                          horizon_s=horizon, **base)


def _evaluate_job(args):
    return evaluate_entry(*args)


def run_evaluation(manifest: Manifest, pred_root: Path, model: str, cfg: MetricConfig,
                   split: str | None = None, horizon_s: float | None = None,
                   score_failures: bool = False, workers: int = 1) -> list[ScoredScenario]:
    entries = sorted(manifest.select(split), key=lambda e: e.id)
    jobs = [(manifest, e, Path(pred_root), model, cfg, horizon_s, score_failures) for e in entries]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_evaluate_job, jobs))
    else:
        records = [_evaluate_job(j) for j in jobs]
    return sorted(records, key=lambda r: r.scenario_id)


def write_results(out_dir: Path, records: Sequence[ScoredScenario], report: AggregateReport,
                  cfg: MetricConfig) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for r in records:
        (out_dir / f"{r.scenario_id}.json").write_text(r.to_json(cfg), encoding="utf-8")
    (out_dir / "aggregate.csv").write_text(aggregate_to_csv(report), encoding="utf-8")
    summary = {
        "model": report.model, "tool_version": __version__, "config": cfg.to_dict(),
        "n_scored": report.row("all").n, "missing": list(report.missing),
        "failed": list(report.failed),
        "errors": {r.scenario_id: r.error for r in records if r.error},
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")


def _exit_for(report: AggregateReport) -> int:
    return EXIT_PARTIAL if (report.missing or report.failed) else EXIT_OK


def _log_problems(report: AggregateReport, records: Sequence[ScoredScenario]) -> None:
    for r in records:
        if r.status != STATUS_OK:
            log.warning("%s %s: %s", r.status, r.scenario_id, r.error)
    log.info("%s: scored %d, missing: %d, failed: %d", report.model, report.row("all").n,
             len(report.missing), len(report.failed))


def cmd_evaluate(manifest_path, pred_root, model: str, cfg: MetricConfig,
                 results_root="results", split: str | None = None, horizon_s: float | None = None,
                 score_failures: bool = False, workers: int = 1) -> tuple[AggregateReport, int]:
    manifest = load_manifest(manifest_path)
    records = run_evaluation(manifest, pred_root, model, cfg, split, horizon_s, score_failures,
                             workers)
    report = aggregate(model, records, cfg, horizon_s)
    write_results(Path(results_root) / model, records, report, cfg)
    _log_problems(report, records)
    return report, _exit_for(report)


def cmd_horizon(manifest_path, pred_root, model: str, horizons_s: Sequence[float],
                cfg: MetricConfig, results_root="results", split: str | None = None,
                score_failures: bool = False, workers: int = 1) -> tuple[list[AggregateReport], int]:
    manifest = load_manifest(manifest_path)
    out = Path(results_root) / model
    reports, code = [], EXIT_OK
    for h in horizons_s:
        records = run_evaluation(manifest, pred_root, model, cfg, split, h, score_failures, workers)
        rep = aggregate(model, records, cfg, h)
        write_results(out / f"horizon_{h:g}s", records, rep, cfg)
        _log_problems(rep, records)
        reports.append(rep)
        code = max(code, _exit_for(rep))
    out.mkdir(parents=True, exist_ok=True)
    (out / "horizon.csv").write_text(horizon_to_csv(reports), encoding="utf-8")
    return reports, code


def cmd_report(results_dirs: Sequence, out_dir=None) -> tuple[str, str]:
    if not results_dirs:
        raise UsageError("need at least one results directory")
    entries, cfg0 = [], None
    for d in results_dirs:
        cfg, records = load_results_dir(Path(d))
        if cfg0 is None:
            cfg0 = cfg
        else:
            msg = config_mismatch(cfg0, cfg)
            if msg:
                raise ConfigError([msg])
        model = records[0].model if records else Path(d).name
        row = aggregate(model, records, cfg).row("all")
        entries.append(LeaderboardEntry(model, row.n, row.values))
    md = leaderboard_markdown(entries)
    radar = radar_csv(entries, cfg0)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "leaderboard.md").write_text(md, encoding="utf-8")
        (out_dir / "radar.csv").write_text(radar, encoding="utf-8")
    return md, radar


# -- synthetic benchmark -------------------------------------------------------

SYNTH_CATEGORIES = ("door", "chair", "bottle", "stairs", "plant")


def cmd_synth(out_dir, n_scenarios: int = 20, models: dict | None = None,
              shapes: Sequence[str] = ("straight", "arc", "s_curve", "stop_turn"),
              seed: int = 0, length_m: float = 4.0, n_points: int = 201,
              pred_format: str = "pose_lines", split: str = "eval") -> Manifest:
    """Write ``manifest.json``, ``gt/`` and one ``pred/<model>/`` tree per model.

    ``models`` maps a model name to ``(degradation kind, magnitude)``.
    """
    if models is None:
        models = {"pred": ("gaussian_noise", 0.2)}
    if pred_format not in PRED_SUFFIXES:
        raise UsageError(f"unknown prediction format {pred_format!r}")
    out = Path(out_dir)
    (out / "gt").mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n_scenarios):
        gt_seed, deg_seed = (int(v) for v in np.random.SeedSequence([seed, i]).generate_state(2))
        shape = shapes[i % len(shapes)]
        gt = synth.gen_gt(shape, length_m, n_points, seed=gt_seed)
        sid = f"S{i + 1:03d}"
        (out / "gt" / f"{sid}.txt").write_text(write_pose_lines(gt), encoding="utf-8")
        mode = TargetMode.EXPLICIT if i % 2 == 0 else TargetMode.IMPLICIT
        category = SYNTH_CATEGORIES[i % len(SYNTH_CATEGORIES)]
        entries.append(ManifestEntry(sid, category, f"{shape} path toward the {category}", mode,
                                     Split(split), f"gt/{sid}.txt", gt.frame_rate, gt.duration))
        for name, (kind, magnitude) in models.items():
            pred = synth.degrade(gt, synth.DegradationSpec(kind, magnitude, deg_seed))
            pdir = out / "pred" / name
            pdir.mkdir(parents=True, exist_ok=True)
            (pdir / f"{sid}{PRED_SUFFIXES[pred_format]}").write_text(
                write_trajectory(pred, pred_format), encoding="utf-8")
    manifest = Manifest(MANIFEST_VERSION, tuple(entries), out)
    (out / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    return manifest


# -- argument parsing ----------------------------------------------------------

_FLOAT_FIELDS = ("tau_miss", "sigma_se", "sigma_min", "sigma_max", "beta", "gamma", "w_ade",
                 "w_fde", "w_mr", "w_seac", "tau_ade", "tau_fde", "eps_scale")
_AGGREGATION = {"per-scenario": "per_scenario_mean", "aggregate": "aggregate_then_score"}


def _scale_anchor(text: str):
    return text if text == "last" else int(text)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scoring configuration")
    for name in _FLOAT_FIELDS:
        g.add_argument("--" + name.replace("_", "-"), dest=name, type=float)
    g.add_argument("--corridor-m", dest="corridor_M", type=int)
    g.add_argument("--n-eval", type=int)
    g.add_argument("--aggregation", choices=sorted(_AGGREGATION))
    g.add_argument("--coverage-semantics", dest="coverage", choices=["exists", "nearest"])
    g.add_argument("--pose-convention", choices=["camera_to_world", "world_to_camera"])
    g.add_argument("--scale-anchor", type=_scale_anchor, help="'last' or a frame index")


def config_from_args(args: argparse.Namespace) -> MetricConfig:
    overrides = {}
    for name in (*_FLOAT_FIELDS, "corridor_M", "n_eval", "coverage", "pose_convention",
                 "scale_anchor"):
        v = getattr(args, name, None)
        if v is not None:
            overrides[name] = v
    if getattr(args, "aggregation", None):
        overrides["aggregation"] = _AGGREGATION[args.aggregation]
    return MetricConfig(**overrides)


def _parse_model(text: str) -> tuple[str, tuple[str, float]]:
    try:
        name, rest = text.split("=", 1)
        kind, mag = rest.split(":", 1)
        return name, (kind, float(mag))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NAME=KIND:MAGNITUDE, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="targetbench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("manifest", type=Path)
        p.add_argument("pred_root", type=Path)
        p.add_argument("--model", required=True)
        p.add_argument("--results-root", type=Path, default=Path("results"))
        p.add_argument("--split", choices=["train", "eval"])
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--score-failures", action="store_true",
                       help="score missing/failed scenarios as worst case instead of excluding them")
        _add_config_flags(p)

    p = sub.add_parser("evaluate", help="score one model's predictions")
    run_flags(p)

    p = sub.add_parser("horizon", help="score at several planning horizons")
    run_flags(p)
    p.add_argument("--horizons", type=float, nargs="+", required=True)

    p = sub.add_parser("report", help="leaderboard across results directories")
    p.add_argument("results_dirs", type=Path, nargs="+")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("synth", help="write a synthetic benchmark")
    p.add_argument("out", type=Path)
    p.add_argument("--n-scenarios", type=int, default=20)
    p.add_argument("--shapes", default="straight,arc,s_curve,stop_turn")
    p.add_argument("--kind", default="gaussian_noise", choices=[k.value for k in synth.DegradationKind])
    p.add_argument("--magnitude", type=float, default=0.2)
    p.add_argument("--model", dest="models", type=_parse_model, action="append",
                   help="NAME=KIND:MAGNITUDE, repeatable; overrides --kind/--magnitude")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--length", type=float, default=4.0)
    p.add_argument("--n-points", type=int, default=201)
    p.add_argument("--pred-format", choices=sorted(PRED_SUFFIXES), default="pose_lines")
    p.add_argument("--split", choices=["train", "eval"], default="eval")

    p = sub.add_parser("sweep", help="metric sensitivity to one degradation")
    p.add_argument("--shape", default="straight", choices=[s.value for s in synth.Shape])
    p.add_argument("--kind", default="gaussian_noise", choices=[k.value for k in synth.DegradationKind])
    p.add_argument("--magnitudes", type=float, nargs="+", required=True)
    p.add_argument("--repeats", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--length", type=float, default=4.0)
    p.add_argument("--out", type=Path)
    _add_config_flags(p)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "evaluate":
            report, code = cmd_evaluate(args.manifest, args.pred_root, args.model,
                                        config_from_args(args), args.results_root, args.split,
                                        score_failures=args.score_failures, workers=args.workers)
            sys.stdout.write(aggregate_to_csv(report))
            return code
        if args.command == "horizon":
            reports, code = cmd_horizon(args.manifest, args.pred_root, args.model, args.horizons,
                                        config_from_args(args), args.results_root, args.split,
                                        args.score_failures, args.workers)
            sys.stdout.write(horizon_to_csv(reports))
            return code
        if args.command == "report":
            md, _ = cmd_report(args.results_dirs, args.out)
            sys.stdout.write(md)
            return EXIT_OK
        if args.command == "synth":
            models = dict(args.models) if args.models else {"pred": (args.kind, args.magnitude)}
            manifest = cmd_synth(args.out, args.n_scenarios, models, args.shapes.split(","),
                                 args.seed, args.length, args.n_points, args.pred_format, args.split)
            print(f"wrote {len(manifest.scenarios)} scenarios to {args.out}")
            return EXIT_OK
        if args.command == "sweep":
            rows = synth.sensitivity_sweep(args.shape, args.kind, args.magnitudes, args.repeats,
                                           config_from_args(args), args.seed, args.length)
            text = synth.sweep_to_csv(rows)
            if args.out:
                args.out.write_text(text, encoding="utf-8")
            sys.stdout.write(text)
            return EXIT_OK
    except (ConfigError, ManifestError, UsageError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
