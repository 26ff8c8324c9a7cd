import io
import sys

import orjson
import pytest

from lattice_kreg.core.exceptions import ConfigError, NumericDomainError
from lattice_kreg.main import SUBCOMMANDS, build_parser, run
from lattice_kreg.models.run_config import RunConfig, build_run_config, read_config_file
from lattice_kreg.services.imaging import synth_sinusoid, write_pgm_file


def manifest(out):
    return orjson.loads((out / "manifest").read_bytes())


def last_line(text):
    return text.strip().splitlines()[-1]


class TestRunConfig:
    def test_text_round_trip(self):
        config = build_run_config({"command": "clt-study", "n": "512", "d": "1", "field": "ma", "theta": "1,0.25",
                                   "queries": "0.3,0.7", "paper_faithful": "true"})
        assert config.field == "ma-field"
        assert config.theta == [1.0, 0.25]
        assert RunConfig.from_text(config.to_text()) == config

    def test_text_is_sorted_and_skips_runtime_keys(self):
        text = build_run_config({"command": "eta", "threads": 3, "out": "/tmp/elsewhere"}).to_text()
        keys = [line.split(" = ")[0] for line in text.splitlines()]
        assert keys == sorted(keys)
        assert "threads" not in keys
        assert "out" not in keys
        assert "command = eta" in text.splitlines()

    def test_denoise_defaults_to_exponential_noise(self):
        assert build_run_config({"command": "denoise"}).field == "exp-gaussian-spectral"
        assert build_run_config({"command": "estimate"}).field == "iid-gaussian"

    def test_bandwidth_exponent_too_large(self):
        with pytest.raises(NumericDomainError):
            build_run_config({"command": "estimate", "d": 2, "bandwidth_gamma": 1 / 3})
        build_run_config({"command": "eta", "d": 2, "bandwidth_gamma": 0.5})

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            build_run_config({"command": "eta", "colour": "blue"})

    def test_denoise_needs_two_dimensions(self):
        with pytest.raises(ConfigError, match="d = 2"):
            build_run_config({"command": "denoise", "d": 3})

    def test_config_file_aliases_and_unknown_keys(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("range = 2.5\nreps = 7\n# comment\n", encoding="utf-8")
        assert read_config_file(path) == {"range_a": "2.5", "replicates": "7"}
        path.write_text("bogus = 1\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="bogus"):
            read_config_file(path)


class TestParser:
    def test_every_subcommand_is_registered(self):
        assert set(SUBCOMMANDS) == {"simulate-field", "estimate", "eta", "check-condition", "clt-study",
                                    "bias-study", "denoise"}

    @pytest.mark.parametrize("name", sorted(SUBCOMMANDS))
    def test_help_lists_defaults(self, name, capsys):
        assert run([name, "--help"]) == 0
        text = capsys.readouterr().out
        assert "--seed" in text
        assert "(default:" in text

    def test_unknown_flag_is_a_usage_error(self, capsys):
        assert run(["eta", "--no-such-flag"]) == 2
        assert capsys.readouterr().err.startswith("error: usage:")

    def test_missing_subcommand(self, capsys):
        assert run([]) == 2
        assert "error: usage:" in capsys.readouterr().err

    def test_version(self, capsys):
        assert run(["--version"]) == 0
        assert "lattice_kreg" in capsys.readouterr().out

    def test_parser_prog(self):
        assert build_parser().prog == "lattice_kreg"


class TestCommands:
    def test_bandwidth_violation_exits_two(self, tmp_path, capsys):
        code = run(["estimate", "--d", "2", "--bandwidth-gamma", "0.4", "--out", str(tmp_path)])
        assert code == 2
        err = capsys.readouterr().err
        assert err.startswith("error: numeric:")
        assert "n*h_n^(d+1) -> inf" in err

    def test_missing_input_is_an_io_error(self, tmp_path, capsys):
        code = run(["estimate", "--d", "1", "--n", "16", "--input", str(tmp_path / "missing.bin"),
                    "--out", str(tmp_path / "out")])
        assert code == 1
        assert last_line(capsys.readouterr().err).startswith("error: io:")

    def test_simulate_field_does_not_depend_on_threads(self, tmp_path):
        args = ["simulate-field", "--field", "exp", "--n", "32", "--d", "2", "--cst", "3", "--components", "512",
                "--seed", "42"]
        assert run(args + ["--threads", "1", "--out", str(tmp_path / "a")]) == 0
        assert run(args + ["--threads", "4", "--out", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "field.bin").read_bytes() == (tmp_path / "b" / "field.bin").read_bytes()
        assert (tmp_path / "a" / "manifest").read_bytes() == (tmp_path / "b" / "manifest").read_bytes()
        m = manifest(tmp_path / "a")
        assert m["seed"] == 42
        assert m["artifacts"] == ["field.bin", "field.csv", "field_summary.json"]

    def test_config_file_precedence(self, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text("n = 8\nd = 1\nsd = 2.0\n", encoding="utf-8")
        out = tmp_path / "out"
        assert run(["simulate-field", "--config", str(conf), "--n", "16", "--out", str(out)]) == 0
        lines = manifest(out)["config"].splitlines()
        assert "n = 16" in lines
        assert "d = 1" in lines
        assert "sd = 2.0" in lines

    def test_config_file_with_unknown_key(self, tmp_path, capsys):
        conf = tmp_path / "run.conf"
        conf.write_text("widgets = 3\n", encoding="utf-8")
        assert run(["eta", "--config", str(conf), "--out", str(tmp_path)]) == 2
        assert capsys.readouterr().err.startswith("error: config:")

    def test_check_condition(self, tmp_path):
        out = tmp_path / "out"
        code = run(["check-condition", "--criterion", "mixing-rate", "--alpha", "power:5", "--d", "2",
                    "--delta", "2", "--out", str(out)])
        assert code == 0
        report = orjson.loads((out / "condition.json").read_bytes())
        assert report["verdict"] == "converges"
        assert (out / "condition.csv").read_text().splitlines()[0] == "radius,term,partial_sum"

    def test_check_condition_bad_alpha(self, tmp_path, capsys):
        assert run(["check-condition", "--alpha", "nonsense", "--out", str(tmp_path)]) == 2
        assert last_line(capsys.readouterr().err).startswith("error: config:")

    def test_repeated_runs_log_to_the_current_stderr(self, tmp_path, capsys, monkeypatch):
        args = ["check-condition", "--criterion", "mixing-rate", "--alpha", "power:5", "--d", "1", "--delta", "2",
                "--log-level", "INFO"]
        earlier = io.StringIO()
        monkeypatch.setattr(sys, "stderr", earlier)
        assert run(args + ["--out", str(tmp_path / "a")]) == 0
        monkeypatch.undo()
        earlier.close()
        assert run(args + ["--out", str(tmp_path / "b")]) == 0
        err = capsys.readouterr().err
        assert "Logging error" not in err
        assert "Running check-condition" in err

    def test_eta_and_estimate_on_a_simulated_field(self, tmp_path):
        field_dir = tmp_path / "field"
        assert run(["simulate-field", "--n", "32", "--d", "2", "--seed", "5", "--out", str(field_dir)]) == 0
        eta_dir = tmp_path / "eta"
        assert run(["eta", "--input", str(field_dir / "field.bin"), "--n", "32", "--rho", "2", "--out", str(eta_dir)]) == 0
        eta = orjson.loads((eta_dir / "eta.json").read_bytes())
        assert eta["estimate"]["rho"] == 2
        assert eta["estimate"]["pair_count"] > 0
        est_dir = tmp_path / "estimate"
        assert run(["estimate", "--input", str(field_dir / "field.bin"), "--n", "32", "--d", "2",
                    "--out", str(est_dir)]) == 0
        assert (est_dir / "estimate.csv").exists()
        assert (est_dir / "kernel_a1.json").exists()

    def test_clt_study_small(self, tmp_path):
        out = tmp_path / "clt"
        assert run(["clt-study", "--field", "iid", "--n", "256", "--d", "1", "--queries", "0.3,0.7",
                    "--reps", "50", "--out", str(out)]) == 0
        study = orjson.loads((out / "clt_study.json").read_bytes())
        assert study["replicates"] == 50
        assert len(study["queries"]) == 2

    def test_bias_study_over_bandwidths(self, tmp_path):
        out = tmp_path / "bias"
        assert run(["bias-study", "--d", "1", "--n", "20000", "--h-list", "0.2,0.1,0.05", "--out", str(out)]) == 0
        study = orjson.loads((out / "bias_study.json").read_bytes())
        assert len(study["rows"]) == 3

    def test_denoise_is_reproducible(self, tmp_path):
        args = ["denoise", "--demo", "sinusoid", "--n", "32", "--reps", "4", "--cst", "200", "--range", "1",
                "--components", "256", "--seed", "7"]
        assert run(args + ["--out", str(tmp_path / "a"), "--threads", "1"]) == 0
        assert run(args + ["--out", str(tmp_path / "b"), "--threads", "3"]) == 0
        for name in ("original.pgm", "noisy.pgm", "restored.pgm", "pvalues.pgm", "summary.csv", "manifest"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert (tmp_path / "a" / "restored.pgm").read_bytes().startswith(b"P5\n32 32\n255\n")

    def test_denoise_checks_rho_against_the_image_side(self, tmp_path, capsys):
        image = write_pgm_file(tmp_path / "small.pgm", synth_sinusoid(16))
        code = run(["denoise", "--image", str(image), "--rho", "20", "--reps", "2", "--components", "64",
                    "--out", str(tmp_path / "out")])
        assert code == 2
        assert last_line(capsys.readouterr().err).startswith("error: lag-range:")

    def test_denoise_image_side_overrides_n(self, tmp_path):
        image = write_pgm_file(tmp_path / "large.pgm", synth_sinusoid(32))
        out = tmp_path / "out"
        assert run(["denoise", "--image", str(image), "--n", "8", "--rho", "10", "--reps", "2",
                    "--components", "64", "--out", str(out)]) == 0
        assert (out / "restored.pgm").read_bytes().startswith(b"P5\n32 32\n255\n")
        header, values = (out / "summary.csv").read_text().splitlines()
        assert dict(zip(header.split(","), values.split(",")))["rho"] == "10"
