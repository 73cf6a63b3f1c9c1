import numpy as np
import pytest

from totalcorr.cli import main, parse_config_file
from totalcorr.decomposition import PathKind
from totalcorr.errors import ConfigError
from totalcorr.estimators import MiEstimatorKind
from totalcorr.harness import load_metrics, load_trace

SMOKE_CONFIG = """\
# smoke-scale run
tc_targets = 0.5, 1.0
steps_per_target = 25
batch_size = 8
eval_batches = 4
smoothing_bandwidth = 5
seed = 3
"""


@pytest.fixture
def smoke_config(tmp_path):
    path = tmp_path / "config.txt"
    path.write_text(SMOKE_CONFIG)
    return path


class TestConfigParsing:
    def test_empty_file_gives_paper_defaults(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("")
        cfg = parse_config_file(path)
        assert cfg.dim == 4
        assert cfg.tc_targets == (2.0, 4.0, 6.0, 8.0, 10.0)
        assert cfg.steps_per_target == 4000
        assert cfg.batch_size == 64

    def test_full_round_trip_of_fields(self, tmp_path):
        path = tmp_path / "config.txt"
        path.write_text(
            "dim = 3\n"
            "tc_targets = 1, 2\n"
            "estimators = MINE, CLUB\n"
            "paths = LINE\n"
            "lr = 0.001\n"
            "fresh_networks_per_target = true\n"
        )
        cfg = parse_config_file(path)
        assert cfg.dim == 3
        assert cfg.estimators == (MiEstimatorKind.MINE, MiEstimatorKind.CLUB)
        assert cfg.paths == (PathKind.LINE,)
        assert cfg.lr == 0.001
        assert cfg.fresh_networks_per_target is True

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "config.txt"
        path.write_text("banana = 4\n")
        with pytest.raises(ConfigError, match="banana"):
            parse_config_file(path)

    def test_bad_value_rejected(self, tmp_path):
        path = tmp_path / "config.txt"
        path.write_text("steps_per_target = soon\n")
        with pytest.raises(ConfigError, match="steps_per_target"):
            parse_config_file(path)

    def test_invalid_range_rejected(self, tmp_path):
        path = tmp_path / "config.txt"
        path.write_text("batch_size = 1\n")
        with pytest.raises(ConfigError, match="batch_size"):
            parse_config_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config_file(tmp_path / "nope.txt")


class TestRunCommand:
    def test_smoke_run_writes_all_outputs(self, smoke_config, tmp_path):
        out = tmp_path / "out"
        code = main(["run", "--config", str(smoke_config), "--out", str(out)])
        assert code == 0
        traces = sorted(p.name for p in out.glob("trace_*.csv"))
        assert len(traces) == 8  # 4 estimators x 2 paths
        assert "trace_MINE_TREE.csv" in traces
        assert (out / "metrics.csv").is_file()
        rows = load_metrics(out / "metrics.csv")
        assert len(rows) == 16  # 8 combos x 2 targets

    def test_nonexistent_config_exits_1_naming_path(self, tmp_path, capsys):
        code = main(["run", "--config", str(tmp_path / "missing.txt"), "--out", str(tmp_path)])
        assert code == 1
        assert "missing.txt" in capsys.readouterr().err

    def test_seed_override_changes_outputs(self, smoke_config, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert main(["run", "--config", str(smoke_config), "--out", str(out_a)]) == 0
        assert main(["run", "--config", str(smoke_config), "--out", str(out_b), "--seed", "99"]) == 0
        ta = (out_a / "trace_NWJ_LINE.csv").read_text()
        tb = (out_b / "trace_NWJ_LINE.csv").read_text()
        assert ta != tb

    def test_unknown_flag_exits_1(self, smoke_config, tmp_path, capsys):
        code = main(["run", "--config", str(smoke_config), "--out", str(tmp_path), "--frobnicate"])
        assert code == 1
        assert "frobnicate" in capsys.readouterr().err

    def test_byte_identical_reruns(self, smoke_config, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        main(["run", "--config", str(smoke_config), "--out", str(out_a)])
        main(["run", "--config", str(smoke_config), "--out", str(out_b)])
        for name in ["trace_CLUB_LINE.csv", "trace_INFONCE_TREE.csv", "metrics.csv"]:
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_jobs_flag_matches_sequential(self, smoke_config, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        main(["run", "--config", str(smoke_config), "--out", str(out_a)])
        main(["run", "--config", str(smoke_config), "--out", str(out_b), "--jobs", "4"])
        assert (out_a / "metrics.csv").read_bytes() == (out_b / "metrics.csv").read_bytes()
        assert (out_a / "trace_MINE_LINE.csv").read_bytes() == (
            out_b / "trace_MINE_LINE.csv"
        ).read_bytes()


class TestPlotCommand:
    def test_plot_single_trace(self, smoke_config, tmp_path):
        out = tmp_path / "out"
        main(["run", "--config", str(smoke_config), "--out", str(out)])
        svg = tmp_path / "figure.svg"
        code = main(["plot", str(out / "trace_MINE_LINE.csv"), "--out", str(svg)])
        assert code == 0
        content = svg.read_text()
        assert content.startswith("<svg")
        assert "trace_MINE_LINE" in content
        assert content.count("<polyline") >= 3  # raw, smoothed, truth

    def test_plot_two_traces_overlays_legend(self, smoke_config, tmp_path):
        out = tmp_path / "out"
        main(["run", "--config", str(smoke_config), "--out", str(out)])
        svg = tmp_path / "figure.svg"
        code = main(
            [
                "plot",
                str(out / "trace_MINE_LINE.csv"),
                str(out / "trace_CLUB_LINE.csv"),
                "--out",
                str(svg),
            ]
        )
        assert code == 0
        content = svg.read_text()
        assert "trace_MINE_LINE" in content and "trace_CLUB_LINE" in content

    def test_plot_is_byte_deterministic(self, smoke_config, tmp_path):
        out = tmp_path / "out"
        main(["run", "--config", str(smoke_config), "--out", str(out)])
        a = tmp_path / "a.svg"
        b = tmp_path / "b.svg"
        main(["plot", str(out / "trace_NWJ_TREE.csv"), "--out", str(a)])
        main(["plot", str(out / "trace_NWJ_TREE.csv"), "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_malformed_csv_exits_1_with_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text(
            "global_step,target_tc,raw_estimate,smoothed_estimate,term_index,term_estimate\n"
            "1,x,0,0,0,0\n"
        )
        code = main(["plot", str(bad), "--out", str(tmp_path / "o.svg")])
        assert code == 1
        assert "line 2" in capsys.readouterr().err

    def test_empty_trace_renders_axes_only(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text(
            "global_step,target_tc,raw_estimate,smoothed_estimate,term_index,term_estimate\n"
        )
        svg = tmp_path / "empty.svg"
        assert main(["plot", str(empty), "--out", str(svg)]) == 0
        content = svg.read_text()
        assert content.startswith("<svg")
        assert 'points="' not in content.split("true TC")[0].split("polyline")[0]


class TestReportCommand:
    def test_pretty_table(self, smoke_config, tmp_path, capsys):
        out = tmp_path / "out"
        main(["run", "--config", str(smoke_config), "--out", str(out)])
        capsys.readouterr()
        code = main(["report", "--metrics", str(out / "metrics.csv")])
        assert code == 0
        text = capsys.readouterr().out
        assert "estimator" in text and "bias" in text
        assert "MINE" in text and "CLUB" in text

    def test_missing_metrics_exits_1(self, tmp_path, capsys):
        assert main(["report", "--metrics", str(tmp_path / "nope.csv")]) == 1


class TestSelftestCommand:
    def test_quick_selftest_passes(self, capsys):
        code = main(["selftest", "--quick"])
        out = capsys.readouterr().out
        assert code == 0
        assert out.count("PASS") == 5
        assert "FAIL" not in out

    def test_quick_selftest_output_is_deterministic(self, capsys):
        main(["selftest", "--quick"])
        first = capsys.readouterr().out
        main(["selftest", "--quick"])
        second = capsys.readouterr().out
        assert first == second
