import json
import math
import shutil

import numpy as np
import pytest

from targetbench import cli
from targetbench.core import ConfigError, MetricConfig
from targetbench.ingest import load_manifest
from targetbench.metrics import evaluate_scenario
from targetbench.report import aggregate, aggregate_to_csv, load_results_dir, read_commented_csv
from targetbench.synth import DegradationSpec, degrade, gen_gt, make_scenario

WSUM = MetricConfig().weight_sum


@pytest.fixture
def bench(tmp_path):
    root = tmp_path / "bench"
    cli.cmd_synth(root, n_scenarios=12, models={"noisy": ("gaussian_noise", 0.2)}, seed=3)
    return root


def _gt_copies(root):
    dst = root / "pred" / "oracle"
    shutil.copytree(root / "gt", dst)
    return dst


def _rows(path):
    return {r["group"]: r for r in read_commented_csv(path)[1]}


def test_gt_copies_score_weight_sum_everywhere(bench, tmp_path):
    report, code = cli.cmd_evaluate(bench / "manifest.json", _gt_copies(bench), "oracle",
                                    MetricConfig(), tmp_path / "res")
    assert code == 0
    groups = {r.group for r in report.rows}
    assert {"all", "mode:explicit", "mode:implicit"} <= groups
    for row in report.rows:
        assert abs(row.values["wo"] - WSUM) < 1e-9
        assert row.values["ade"] < 1e-9
    all_n = report.row("all").n
    assert report.row("mode:explicit").n + report.row("mode:implicit").n == all_n
    assert sum(r.n for r in report.rows if r.group.startswith("category:")) == all_n


def test_missing_prediction(bench, tmp_path):
    pred = _gt_copies(bench)
    (pred / "S004.txt").unlink()
    report, code = cli.cmd_evaluate(bench / "manifest.json", pred, "oracle", MetricConfig(),
                                    tmp_path / "res")
    assert code == 1
    assert report.row("all").n == 11
    assert report.missing == ("S004",)
    meta, _ = read_commented_csv(tmp_path / "res" / "oracle" / "aggregate.csv")
    assert meta["missing"] == "1"
    rec = json.loads((tmp_path / "res" / "oracle" / "S004.json").read_text())
    assert rec["status"] == "missing" and rec["metrics"] is None


def test_malformed_prediction(bench, tmp_path):
    pred = _gt_copies(bench)
    (pred / "S002.txt").write_text("0 1 2\n")
    report, code = cli.cmd_evaluate(bench / "manifest.json", pred, "oracle", MetricConfig(),
                                    tmp_path / "res")
    assert code == 1 and report.failed == ("S002",)
    summary = json.loads((tmp_path / "res" / "oracle" / "summary.json").read_text())
    assert "line 1" in summary["errors"]["S002"]


def test_score_failures_flag(bench, tmp_path):
    pred = _gt_copies(bench)
    (pred / "S004.txt").unlink()
    report, code = cli.cmd_evaluate(bench / "manifest.json", pred, "oracle", MetricConfig(),
                                    tmp_path / "res", score_failures=True)
    assert code == 1
    assert report.row("all").n == 12
    assert report.row("all").values["wo"] == pytest.approx(11 * WSUM / 12, abs=1e-9)


def test_eval_split_of_125(tmp_path):
    root = tmp_path / "big"
    cli.cmd_synth(root, n_scenarios=125, models={"m": ("gaussian_noise", 0.1)}, n_points=51)
    report, code = cli.cmd_evaluate(root / "manifest.json", root / "pred" / "m", "m",
                                    MetricConfig(), tmp_path / "res", split="eval", workers=2)
    assert code == 0 and report.row("all").n == 125


def test_per_scenario_json_schema(bench, tmp_path):
    cli.cmd_evaluate(bench / "manifest.json", bench / "pred" / "noisy", "noisy", MetricConfig(),
                     tmp_path / "res")
    rec = json.loads((tmp_path / "res" / "noisy" / "S001.json").read_text())
    assert set(rec["metrics"]) == {"ade", "fde", "mr", "se", "ac", "wo"}
    assert {"lambda", "anchor_k", "convention"} <= set(rec["decode"])
    assert rec["status"] == "ok" and rec["tool_version"] and rec["config"]["sigma_se"] == 0.6


def test_aggregate_recomputed_from_json(bench, tmp_path):
    cli.cmd_evaluate(bench / "manifest.json", bench / "pred" / "noisy", "noisy", MetricConfig(),
                     tmp_path / "res")
    out = tmp_path / "res" / "noisy"
    cfg, records = load_results_dir(out)
    assert aggregate_to_csv(aggregate("noisy", records, cfg)) == (out / "aggregate.csv").read_text()


def test_rerun_is_byte_identical(bench, tmp_path):
    for name in ("a", "b"):
        cli.cmd_evaluate(bench / "manifest.json", bench / "pred" / "noisy", "noisy",
                         MetricConfig(), tmp_path / name)
    for f in sorted((tmp_path / "a" / "noisy").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / "noisy" / f.name).read_bytes()


# -- report ------------------------------------------------------------------

def _two_models(tmp_path, cfg_b=None):
    root = tmp_path / "bench"
    cli.cmd_synth(root, n_scenarios=8, models={"good": ("gaussian_noise", 0.05),
                                               "bad": ("heading_bias", 0.8)})
    for m, cfg in (("bad", cfg_b or MetricConfig()), ("good", MetricConfig())):
        cli.cmd_evaluate(root / "manifest.json", root / "pred" / m, m, cfg, tmp_path / "res")
    return [tmp_path / "res" / "bad", tmp_path / "res" / "good"]


def test_report_orders_by_wo(tmp_path):
    md, radar = cli.cmd_report(_two_models(tmp_path), tmp_path / "out")
    lines = md.splitlines()
    assert "| 1 | good |" in lines[2] and "| 2 | bad |" in lines[3]
    assert (tmp_path / "out" / "leaderboard.md").read_text() == md
    _, rows = read_commented_csv(tmp_path / "out" / "radar.csv")
    assert [r["model"] for r in rows] == ["good", "bad"]
    for r in rows:
        assert all(0.0 <= float(r[k]) <= 1.0 for k in ("ade", "fde", "mr", "se", "ac"))


def test_report_single_model(tmp_path):
    dirs = _two_models(tmp_path)
    md, _ = cli.cmd_report(dirs[:1])
    assert len(md.strip().splitlines()) == 3


def test_report_config_mismatch(tmp_path):
    dirs = _two_models(tmp_path, cfg_b=MetricConfig(sigma_se=0.5))
    with pytest.raises(ConfigError, match="config mismatch: sigma_se 0.6 vs 0.5"):
        cli.cmd_report(dirs[::-1])


# -- horizon -----------------------------------------------------------------

def test_horizon_rows_and_scaling(tmp_path):
    root = tmp_path / "bench"
    cli.cmd_synth(root, n_scenarios=6, models={"hb": ("heading_bias", 0.2)}, shapes=["straight"])
    m = root / "manifest.json"
    reports, code = cli.cmd_horizon(m, root / "pred" / "hb", "hb", [8, 6, 4], MetricConfig(),
                                    tmp_path / "res")
    assert code == 0
    _, rows = read_commented_csv(tmp_path / "res" / "hb" / "horizon.csv")
    assert [r["horizon_s"] for r in rows if r["group"] == "all"] == ["8", "6", "4"]
    fde8, fde4 = reports[0].row("all").values["fde"], reports[2].row("all").values["fde"]
    assert fde4 == pytest.approx(0.5 * fde8, abs=1e-9)
    assert fde8 == pytest.approx(2 * 4.0 * math.sin(0.1), abs=1e-9)

    full, _ = cli.cmd_evaluate(m, root / "pred" / "hb", "hb", MetricConfig(), tmp_path / "full")
    assert [r.values for r in full.rows] == [r.values for r in reports[0].rows]


def test_horizon_beyond_duration_fails(tmp_path):
    root = tmp_path / "bench"
    cli.cmd_synth(root, n_scenarios=2)
    reports, code = cli.cmd_horizon(root / "manifest.json", root / "pred" / "pred", "pred", [9],
                                    MetricConfig(), tmp_path / "res")
    assert code == 1 and len(reports[0].failed) == 2


# -- synth ---------------------------------------------------------------------

def test_synth_tree(tmp_path):
    root = tmp_path / "s"
    cli.cmd_synth(root, n_scenarios=20)
    assert (root / "manifest.json").is_file()
    assert len(list((root / "gt").iterdir())) == 20
    assert len(list((root / "pred" / "pred").iterdir())) == 20
    assert load_manifest(root / "manifest.json").split_counts == (0, 20)


def test_synth_byte_identical(tmp_path):
    for d in ("a", "b"):
        cli.cmd_synth(tmp_path / d, n_scenarios=5, seed=9, pred_format="extrinsics")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


@pytest.mark.parametrize("fmt", ["pose_lines", "extrinsics", "encoding"])
def test_synth_file_round_trip(tmp_path, fmt):
    root = tmp_path / "s"
    cli.cmd_synth(root, n_scenarios=4, models={"p": ("gaussian_noise", 0.2)}, seed=4,
                  pred_format=fmt)
    report, _ = cli.cmd_evaluate(root / "manifest.json", root / "pred" / "p", "p", MetricConfig(),
                                 tmp_path / "res")
    shapes = ("straight", "arc", "s_curve", "stop_turn")
    for i in range(4):
        gt_seed, deg_seed = (int(v) for v in np.random.SeedSequence([4, i]).generate_state(2))
        gt = gen_gt(shapes[i], seed=gt_seed)
        direct = evaluate_scenario(make_scenario(gt), degrade(gt, DegradationSpec(
            "gaussian_noise", 0.2, deg_seed)))
        rec = json.loads((tmp_path / "res" / "p" / f"S{i + 1:03d}.json").read_text())
        assert abs(rec["metrics"]["wo"] - direct.wo) < 1e-12


# -- main ----------------------------------------------------------------------

def test_main_exit_codes(tmp_path, capsys):
    root = tmp_path / "s"
    assert cli.main(["synth", str(root), "--n-scenarios", "4"]) == 0
    args = [str(root / "manifest.json"), str(root / "pred" / "pred"), "--model", "pred",
            "--results-root", str(tmp_path / "res")]
    assert cli.main(["evaluate", *args]) == 0
    assert "group,n,fde,ade,mr,se,ac,wo" in capsys.readouterr().out
    assert cli.main(["evaluate", *args, "--sigma-min", "0.9"]) == 2
    assert cli.main(["evaluate", *args, "--w-seac", "0.95"]) == 2
    (root / "pred" / "pred" / "S001.txt").unlink()
    assert cli.main(["evaluate", *args]) == 1
    assert cli.main(["evaluate", str(tmp_path / "nope.json"), str(root), "--model", "x"]) == 2
    assert cli.main(["report", str(tmp_path / "res" / "pred")]) == 0


def test_main_flags_reach_config(tmp_path):
    root = tmp_path / "s"
    cli.main(["synth", str(root), "--n-scenarios", "2", "--model", "m=early_stop:0.3"])
    cli.main(["evaluate", str(root / "manifest.json"), str(root / "pred" / "m"), "--model", "m",
              "--results-root", str(tmp_path / "res"), "--scale-anchor", "1",
              "--coverage-semantics", "nearest", "--aggregation", "aggregate", "--tau-miss", "1.5"])
    cfg, _ = load_results_dir(tmp_path / "res" / "m")
    assert cfg.scale_anchor == 1 and cfg.coverage.value == "nearest"
    assert cfg.aggregation.value == "aggregate_then_score" and cfg.tau_miss == 1.5


def test_main_sweep(tmp_path, capsys):
    out = tmp_path / "sw.csv"
    assert cli.main(["sweep", "--magnitudes", "0", "0.5", "--repeats", "2", "--out", str(out)]) == 0
    assert out.read_text().startswith("magnitude,metric,repeats,mean,stddev")
