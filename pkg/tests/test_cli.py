import json

import pytest

from selex.cli import main


def run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestProb:
    def test_symmetric_pair(self, capsys):
        code, out, _ = run(capsys, ["prob", "--means", "0,0", "--sigma", "1"])
        assert code == 0
        assert "0.5" in out

    def test_closed_form_value(self, capsys):
        code, out, _ = run(capsys, ["prob", "--means", "1,0", "--sigma", "1", "--json"])
        assert code == 0
        payload = json.loads(out)
        assert payload["value"] == pytest.approx(0.7602499, abs=1e-6)
        assert payload["method"] == "closed_form_p2"

    def test_four_exchangeable(self, capsys):
        code, out, _ = run(capsys, ["prob", "--means", "0,0,0,0", "--sigma", "1", "--json"])
        assert json.loads(out)["value"] == pytest.approx(1 / 24, abs=1e-7)

    def test_monte_carlo_path(self, capsys):
        code, out, _ = run(
            capsys,
            ["prob", "--means", "1,0", "--sigma", "1", "--mc", "100000", "--seed", "4", "--json"],
        )
        payload = json.loads(out)
        assert payload["method"] == "monte_carlo"
        assert payload["value"] == pytest.approx(0.76, abs=0.01)

    def test_single_mean_rejected(self, capsys):
        code, _, err = run(capsys, ["prob", "--means", "1", "--sigma", "1"])
        assert code == 2
        assert "means" in err

    def test_bad_sigma_rejected(self, capsys):
        code, _, err = run(capsys, ["prob", "--means", "1,0", "--sigma", "-1"])
        assert code == 2


class TestEstimate:
    def test_table_config(self, capsys):
        code, out, _ = run(
            capsys, ["estimate", "--obs", "10,9.5,9,0", "--sigma", "1", "--json"]
        )
        assert code == 0
        est = json.loads(out)["estimates"]
        assert est == pytest.approx([9.5, 9.5, 9.5, 0.0], abs=0.05)

    def test_labels_preserved(self, capsys):
        code, out, _ = run(capsys, ["estimate", "--obs", "0,10", "--sigma", "1", "--json"])
        est = json.loads(out)["estimates"]
        assert est[0] < 0.01 and est[1] > 9.99

    def test_pooling(self, capsys):
        code, out, _ = run(capsys, ["estimate", "--obs", "1,0.5", "--sigma", "1", "--json"])
        est = json.loads(out)["estimates"]
        assert est == pytest.approx([0.75, 0.75], abs=1e-9)

    def test_diagnostics(self, capsys):
        code, out, _ = run(
            capsys,
            ["estimate", "--obs", "3,2,1", "--sigma", "1", "--json", "--diagnostics"],
        )
        payload = json.loads(out)
        assert "kkt_residual" in payload and "iterations" in payload


class TestSimulateMse:
    def test_writes_csv(self, capsys, tmp_path):
        out_path = tmp_path / "mse.csv"
        code, out, _ = run(
            capsys,
            ["simulate-mse", "--mu", "0,0", "--sigma", "1", "--reps", "150",
             "--seed", "7", "--out", str(out_path)],
        )
        assert code == 0
        lines = out_path.read_text().splitlines()
        assert lines[0] == "config_id,mu_true_1,mu_true_2,rank,estimator,mse,se,n_reps"
        assert len(lines) == 5

    def test_zero_reps_names_field(self, capsys, tmp_path):
        code, _, err = run(
            capsys,
            ["simulate-mse", "--mu", "0,0", "--reps", "0", "--out", str(tmp_path / "x.csv")],
        )
        assert code == 2
        assert "n_reps" in err

    def test_config_file_unknown_field(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"mu_true": [0, 0], "n_reps": 150, "bogus": 1}))
        code, _, err = run(
            capsys,
            ["simulate-mse", "--config", str(cfg), "--out", str(tmp_path / "x.csv")],
        )
        assert code == 2
        assert "bogus" in err

    def test_config_file_roundtrip(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps({"mu_true": [0.5, 0.0], "sigma": 1.0, "n_reps": 150, "seed": 7})
        )
        out_path = tmp_path / "mse.json"
        code, _, _ = run(
            capsys, ["simulate-mse", "--config", str(cfg), "--out", str(out_path)]
        )
        assert code == 0
        assert json.loads(out_path.read_text())

    def test_deterministic_across_thread_caps(self, capsys, tmp_path, monkeypatch):
        paths = []
        for threads in ("1", "8"):
            monkeypatch.setenv("SELEX_THREADS", threads)
            p = tmp_path / f"mse_{threads}.csv"
            code, _, _ = run(
                capsys,
                ["simulate-mse", "--mu", "0.5,0", "--reps", "150", "--seed", "3",
                 "--out", str(p)],
            )
            assert code == 0
            paths.append(p)
        assert paths[0].read_bytes() == paths[1].read_bytes()


class TestBootstrapCi:
    def test_writes_output(self, capsys, tmp_path):
        out_path = tmp_path / "ci.csv"
        code, out, _ = run(
            capsys,
            ["bootstrap-ci", "--mu", "1,0", "--n-per-group", "15", "--obs-sd", "1",
             "--n-boot", "999", "--seed", "2", "--out", str(out_path)],
        )
        assert code == 0
        lines = out_path.read_text().splitlines()
        assert lines[0].startswith("rank,ccmle_point,ccmle_lower,ccmle_upper")
        assert len(lines) == 3

    def test_invalid_level(self, capsys, tmp_path):
        code, _, err = run(
            capsys,
            ["bootstrap-ci", "--mu", "1,0", "--level", "2", "--out", str(tmp_path / "x.csv")],
        )
        assert code == 2
        assert "level" in err


class TestHelp:
    @pytest.mark.parametrize("cmd", ["prob", "estimate", "simulate-mse", "bootstrap-ci"])
    def test_subcommand_help(self, capsys, cmd):
        with pytest.raises(SystemExit) as exc:
            main([cmd, "--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        assert "--help" in out or "usage" in out
