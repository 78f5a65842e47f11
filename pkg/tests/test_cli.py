import json
import subprocess
import sys

import pytest

from sdipbit.harness.cli import main
from sdipbit.harness.problem import complete_graph, encode_maxcut, save_problem


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestCommands:
    def test_pmf_csv(self, capsys):
        code, out, _ = run(capsys, "pmf", "--photons", "100", "--bit-depth", "6")
        lines = out.splitlines()
        assert code == 0 and lines[0].startswith("# generated-by") and len(lines) == 2 + 64

    def test_pmf_json(self, capsys):
        code, out, _ = run(capsys, "--format", "json", "pmf", "--photons", "100", "--bit-depth", "6")
        d = json.loads(out)
        assert code == 0 and sum(d["probabilities"]) == pytest.approx(1, abs=1e-12)

    @pytest.mark.parametrize("method", ["splitting_ratio", "comparator", "digital_threshold"])
    def test_curve(self, capsys, method):
        code, out, _ = run(capsys, "--format", "json", "curve", "--method", method, "--photons", "400")
        d = json.loads(out)
        assert code == 0 and d["kind"] == method and len(d["settings"]) == len(d["mean_state"])

    def test_sample_deterministic(self, capsys):
        a = run(capsys, "--seed", "3", "sample", "--count", "50")[1]
        b = run(capsys, "--seed", "3", "sample", "--count", "50")[1]
        assert a == b and a.splitlines()[1] == "index,photons,voltage,code"

    def test_sample_gbit(self, capsys):
        code, out, _ = run(capsys, "--format", "json", "--seed", "1", "sample", "--gbit", "--count", "1000",
                           "--bit-depth", "12")
        assert code == 0 and len(json.loads(out)["values"]) == 1000

    def test_certify_dropout(self, capsys):
        code, out, _ = run(capsys, "--format", "json", "--seed", "0", "certify", "--count", "4000",
                           "--dropout-at", "2000", "--window", "200")
        d = json.loads(out)
        assert code == 0 and all(d["certified"][i] is False for i in range(2000, 4000))
        assert d["rate"][2200] < 0.5 < d["rate"][1999]

    def test_certify_csv_reasons(self, capsys):
        out = run(capsys, "certify", "--count", "20", "--dropout-at", "10", "--window", "5")[1]
        lines = out.splitlines()
        assert lines[1] == "index,n_hat,certified,reason,rolling_rate"
        assert lines[2].split(",")[3] == "ok" and lines[-1].split(",")[3] == "below_floor"

    def test_solve(self, capsys, tmp_path):
        path = tmp_path / "k4.json"
        save_problem(encode_maxcut(complete_graph(4)), path)
        code, out, _ = run(capsys, "--format", "json", "--seed", "2", "solve", str(path), "--sweeps", "300")
        d = json.loads(out)
        assert code == 0 and d["best_energy"] == -2.0 and d["provenance"]["seed"] == 2

    def test_solve_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "solve", str(tmp_path / "nope.json"))
        assert code == 2 and "error" in err

    def test_bench(self, capsys):
        code, out, _ = run(capsys, "--format", "json", "bench", "--duration", "1", "--logical", "16")
        d = json.loads(out)
        assert code == 0 and d["flips_per_second"] > 0 and "certified_fraction" in d
        assert "energy_per_flip" not in d

    def test_figure(self, capsys):
        code, out, _ = run(capsys, "figure", "bias_effect", "--param", "samples=1000")
        assert code == 0 and out.splitlines()[1] == "series,parameter,x,y"


class TestGlobalOptions:
    def test_out(self, capsys, tmp_path):
        path = tmp_path / "pmf.csv"
        code, out, _ = run(capsys, "--out", str(path), "pmf", "--photons", "50", "--bit-depth", "4")
        assert code == 0 and out == "" and len(path.read_text().splitlines()) == 2 + 16

    def test_config_defaults_and_override(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bit_depth": 5, "photons": 64, "format": "json"}))
        d = json.loads(run(capsys, "--config", str(cfg), "pmf")[1])
        assert d["bit_depth"] == 5
        d = json.loads(run(capsys, "--config", str(cfg), "pmf", "--bit-depth", "3")[1])
        assert d["bit_depth"] == 3

    def test_module_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "sdipbit", "--version"], capture_output=True, text=True)
        assert out.returncode == 0 and out.stdout.startswith("sdipbit")

    def test_unknown_command(self, capsys):
        with pytest.raises(SystemExit):
            main(["teleport"])

    def test_global_options_after_subcommand(self, capsys, tmp_path):
        path = tmp_path / "pmf.json"
        code, _, _ = run(capsys, "pmf", "--photons", "50", "--bit-depth", "4", "--format", "json", "--out", str(path))
        assert code == 0 and len(json.loads(path.read_text())["probabilities"]) == 16

    def test_config_does_not_override_flag_before_subcommand(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"format": "json", "bit_depth": 4}))
        out = run(capsys, "--config", str(cfg), "--format", "csv", "pmf", "--photons", "50")[1]
        assert out.startswith("# generated-by")
