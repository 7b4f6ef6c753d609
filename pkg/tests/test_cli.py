"""Command-line behavior: exit codes, file IO, determinism of reports."""
import numpy as np
import pytest

from conftest import rand4
from wavevit.cli import main
from wavevit.io import read_wt4d, write_wt4d


def run(argv):
    return main(argv)


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            run(["check", "--bogus"])
        assert exc.value.code == 2

    def test_unknown_command_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            run(["frobnicate"])
        assert exc.value.code == 2

    def test_zero_reps_bench_is_usage_error(self, tmp_path):
        cfg = tmp_path / "bench.cfg"
        cfg.write_text("reps = 0\n")
        with pytest.raises(SystemExit) as exc:
            run(["bench", "--config", str(cfg)])
        assert exc.value.code == 2

    def test_missing_input_file_is_runtime_error(self, tmp_path, capsys):
        assert run(["dwt", "--in", str(tmp_path / "absent.wt4d"), "--out", str(tmp_path / "o.wt4d")]) == 1
        assert "not found" in capsys.readouterr().err


class TestCheckCommands:
    def test_check_wavelet_suite_passes(self, capsys):
        assert run(["check", "--suite", "wavelet"]) == 0
        out = capsys.readouterr().out
        assert "perfect-reconstruction" in out
        assert "FAIL" not in out

    def test_gradcheck_ops(self, capsys):
        assert run(["gradcheck", "--suite", "ops"]) == 0
        out = capsys.readouterr().out
        assert "seed = 0 (default)" in out
        assert "gradcheck-dwt-conv-idwt" in out


class TestTransforms:
    def test_dwt_idwt_file_roundtrip(self, tmp_path, capsys):
        x = rand4(1, (2, 3, 8, 8))
        src = tmp_path / "x.wt4d"
        packed = tmp_path / "s.wt4d"
        back = tmp_path / "y.wt4d"
        write_wt4d(src, x)
        assert run(["dwt", "--in", str(src), "--out", str(packed)]) == 0
        assert read_wt4d(packed).shape == (2, 12, 4, 4)
        assert run(["idwt", "--in", str(packed), "--out", str(back)]) == 0
        y = read_wt4d(back)
        np.testing.assert_allclose(y, x, rtol=1e-12, atol=1e-14)

    def test_dwt_odd_dims_fails_cleanly(self, tmp_path, capsys):
        src = tmp_path / "odd.wt4d"
        write_wt4d(src, np.zeros((1, 1, 5, 4)))
        assert run(["dwt", "--in", str(src), "--out", str(tmp_path / "o.wt4d")]) == 1
        assert "even" in capsys.readouterr().err

    def test_idwt_needs_divisible_channels(self, tmp_path, capsys):
        src = tmp_path / "c6.wt4d"
        write_wt4d(src, np.zeros((1, 6, 4, 4)))
        assert run(["idwt", "--in", str(src), "--out", str(tmp_path / "o.wt4d")]) == 1
        assert "divisible by 4" in capsys.readouterr().err


class TestAccounting:
    def test_params_reports_pinned_count_and_ratio(self, capsys):
        assert run(["params", "--model", "wave-vit-s"]) == 0
        out = capsys.readouterr().out
        assert "parameters = 19,131,944" in out
        assert "ratio = 0.9663" in out

    def test_flops_reports_conventions_and_factor(self, capsys):
        assert run(["flops", "--model", "wave-vit-s"]) == 0
        out = capsys.readouterr().out
        assert "macs = 5,188,477,056" in out
        assert "gflops (1 mac = 1 flop) = 5.1885" in out
        assert "gflops (1 mac = 2 flops) = 10.3770" in out
        assert "score-mac ratio none:wavelet = 4.0" in out

    def test_params_with_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "model.cfg"
        cfg.write_text("preset = micro\n")
        assert run(["params", "--config", str(cfg)]) == 0
        assert "parameters = 194,218" in capsys.readouterr().out

    def test_bad_config_schema(self, tmp_path, capsys):
        cfg = tmp_path / "model.cfg"
        cfg.write_text("preset = micro\nwhatever = 3\n")
        assert run(["params", "--config", str(cfg)]) == 1
        assert "unknown key" in capsys.readouterr().err


class TestBench:
    def test_bench_small_grid(self, tmp_path, capsys):
        cfg = tmp_path / "bench.cfg"
        cfg.write_text("h = 8\nw = 8\nd = 8\nheads = 2\nwarmup = 1\nreps = 2\n")
        assert run(["bench", "--config", str(cfg), "--raw"]) == 0
        out = capsys.readouterr().out
        assert "analytic score-mac ratio none:wavelet = 4.0" in out
        for mode in ("none", "avgpool", "conv", "wavelet", "wavelet_idwt"):
            assert mode in out
        assert "raw_ms" in out
        assert "dwt2d" in out


class TestTrainEval:
    def test_train_writes_report_and_checkpoint(self, tmp_path, capsys):
        out_dir = tmp_path / "run"
        assert (
            run(
                ["train", "--model", "micro", "--epochs", "1", "--batch", "64",
                 "--seed", "3", "--out", str(out_dir)]
            )
            == 0
        )
        report = (out_dir / "train_report.txt").read_text()
        assert "epoch 1 loss " in report
        assert "summary final_acc " in report
        assert (out_dir / "checkpoint.wvck").exists()
        assert run(["eval", "--model", "micro", "--in", str(out_dir / "checkpoint.wvck"), "--seed", "3"]) == 0
        assert "accuracy = " in capsys.readouterr().out

    def test_train_reports_deterministic_modulo_timing(self, tmp_path):
        reports = []
        for tag in ("a", "b"):
            out_dir = tmp_path / tag
            assert run(["train", "--model", "micro", "--epochs", "1", "--seed", "9", "--out", str(out_dir)]) == 0
            text = (out_dir / "train_report.txt").read_text()
            deterministic = [line for line in text.splitlines() if not line.startswith(("timing", "#"))]
            reports.append(deterministic)
        assert reports[0] == reports[1]

    def test_train_rejects_non_desk_models(self, capsys):
        assert run(["train", "--model", "wave-vit-s", "--epochs", "1"]) == 1
        assert "input_size" in capsys.readouterr().err
