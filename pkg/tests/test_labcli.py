import json
import subprocess
import sys
from pathlib import Path

import pytest

from paritylab.labcli import main
from paritylab.records import (
    CSV_HEADER,
    ExperimentRecord,
    read_records_csv,
    write_records_csv,
)


def run_cli(*argv):
    return main(list(argv))


def cli_capture(*argv):
    proc = subprocess.run(
        [sys.executable, "-m", "paritylab.labcli", *argv], capture_output=True, text=True
    )
    return proc


def write_config(path: Path, **overrides) -> Path:
    config = {
        "recipe": "gal_exact_scan",
        "seeds": [1],
        "output_dir": str(path.parent / "out"),
        "params": {"ds": [10, 12]},
    }
    config.update(overrides)
    path.write_text(json.dumps(config, indent=1))
    return path


class TestRecords:
    def test_row_round_trip(self):
        rec = ExperimentRecord("sigma_sweep", "abc123", 7, 640, "test_accuracy", 0.875)
        assert ExperimentRecord.from_row(rec.to_row()) == rec

    def test_nan_round_trip(self):
        rec = ExperimentRecord("sigma_sweep", "abc123", 7, 0, "gal", float("nan"))
        back = ExperimentRecord.from_row(rec.to_row())
        assert back.value != back.value

    def test_csv_round_trip(self, tmp_path):
        recs = [
            ExperimentRecord("one_step_demo", "h1", 1, 0, "final_accuracy", 1.0),
            ExperimentRecord("one_step_demo", "h1", 2, 0, "delta_abs", 0.123046875),
        ]
        path = tmp_path / "records.csv"
        write_records_csv(path, recs)
        assert read_records_csv(path) == recs
        header = path.read_text().splitlines()[0]
        assert header == ",".join(CSV_HEADER)

    def test_unknown_metric_rejected(self):
        with pytest.raises(ValueError):
            ExperimentRecord("x", "h", 1, 0, "bogus_metric", 1.0)


class TestRunCommand:
    def test_run_writes_records_and_manifest(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json")
        assert run_cli("run", str(cfg)) == 0
        out = tmp_path / "out"
        records = read_records_csv(out / "records.csv")
        assert {r.metric for r in records} == {"gal"}
        assert sorted(r.step for r in records) == [10, 12]
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["schema"] == "parity-lab/1"
        assert manifest["config"]["recipe"] == "gal_exact_scan"
        assert manifest["points"][0]["label"].startswith("a=0")
        assert "T" in manifest["start_time"]

    def test_rerun_byte_identical_csv(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json")
        assert run_cli("run", str(cfg)) == 0
        first = (tmp_path / "out" / "records.csv").read_bytes()
        assert run_cli("run", str(cfg)) == 0
        assert (tmp_path / "out" / "records.csv").read_bytes() == first

    def test_workers_match_serial(self, tmp_path):
        cfg1 = write_config(tmp_path / "one.json", seeds=[1, 2],
                            output_dir=str(tmp_path / "serial"))
        cfg2 = write_config(tmp_path / "two.json", seeds=[1, 2],
                            output_dir=str(tmp_path / "pooled"), workers=2)
        assert run_cli("run", str(cfg1)) == 0
        assert run_cli("run", str(cfg2)) == 0
        serial = (tmp_path / "serial" / "records.csv").read_bytes()
        pooled = (tmp_path / "pooled" / "records.csv").read_bytes()
        assert serial == pooled

    def test_parse_error_is_line_anchored(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{\n  "recipe": "gal_exact_scan",\n  "seeds": [1,]\n}\n')
        proc = cli_capture("run", str(bad))
        assert proc.returncode == 2
        assert "bad.json:3" in proc.stderr

    def test_unknown_recipe_rejected(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", recipe="nonsense")
        proc = cli_capture("run", str(cfg))
        assert proc.returncode == 2
        assert "nonsense" in proc.stderr

    def test_bad_param_type_rejected(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", params={"ds": "oops"})
        proc = cli_capture("run", str(cfg))
        assert proc.returncode == 2
        assert "ds" in proc.stderr

    def test_resource_breach_exits_3(self, tmp_path):
        cfg = write_config(
            tmp_path / "cfg.json",
            recipe="one_step_demo",
            params={"d": 24, "n": 10},
        )
        proc = cli_capture("run", str(cfg))
        assert proc.returncode == 3
        assert "resource" in proc.stderr.lower()

    def test_one_step_demo_recipe(self, tmp_path):
        cfg = write_config(
            tmp_path / "cfg.json",
            recipe="one_step_demo",
            params={"d": 10, "n": 10_000},
        )
        assert run_cli("run", str(cfg)) == 0
        records = read_records_csv(tmp_path / "out" / "records.csv")
        by_metric = {r.metric: r.value for r in records}
        assert by_metric["final_accuracy"] == 1.0
        assert by_metric["delta_abs"] == pytest.approx(0.13671875)

    def test_width_sweep_recipe_small(self, tmp_path):
        cfg = write_config(
            tmp_path / "cfg.json",
            recipe="width_sweep",
            seeds=[3],
            params={"ds": [8], "width_factors": [4.0], "steps": 60},
        )
        assert run_cli("run", str(cfg)) == 0
        records = read_records_csv(tmp_path / "out" / "records.csv")
        assert records[0].metric == "final_accuracy"
        assert records[0].step == 256  # 4 d^2
        assert records[0].value == 1.0


class TestReportCommand:
    def fixture_run(self, tmp_path, seeds=(1, 2, 3)):
        recs = []
        for seed in seeds:
            recs.append(
                ExperimentRecord("sigma_sweep", "hash0", seed, 1000, "test_accuracy",
                                 0.5 + 0.1 * seed)
            )
        out = tmp_path / "run"
        out.mkdir()
        write_records_csv(out / "records.csv", recs)
        return out

    def test_mean_and_ci(self, tmp_path):
        out = self.fixture_run(tmp_path)
        proc = cli_capture("report", str(out))
        assert proc.returncode == 0
        assert "mean=0.7" in proc.stdout
        assert "+-0.113" in proc.stdout  # 1.96 * 0.1 / sqrt(3)

    def test_single_seed_marker(self, tmp_path):
        out = self.fixture_run(tmp_path, seeds=(1,))
        proc = cli_capture("report", str(out))
        assert "+-n/a" in proc.stdout

    def test_mixed_recipes_grouped(self, tmp_path):
        recs = [
            ExperimentRecord("sigma_sweep", "h0", 1, 10, "test_accuracy", 0.9),
            ExperimentRecord("gal_exact_scan", "h1", 1, 10, "gal", 1e-4),
        ]
        out = tmp_path / "run"
        out.mkdir()
        write_records_csv(out / "records.csv", recs)
        proc = cli_capture("report", str(out))
        assert proc.stdout.index("== gal_exact_scan ==") < proc.stdout.index("== sigma_sweep ==")

    def test_missing_csv_exit_2(self, tmp_path):
        proc = cli_capture("report", str(tmp_path))
        assert proc.returncode == 2

    def test_corrupt_csv_exit_2(self, tmp_path):
        out = tmp_path / "run"
        out.mkdir()
        (out / "records.csv").write_text("bogus,header\n1,2\n")
        proc = cli_capture("report", str(out))
        assert proc.returncode == 2


class TestNumericCommands:
    def test_delta_line(self):
        proc = cli_capture("delta", "--d", "12", "--a", "0", "--b", "0")
        assert proc.returncode == 0
        assert proc.stdout.strip() == "delta=-0.123046875"

    def test_gal_exact_gaussian(self):
        proc = cli_capture("gal-exact", "--kind", "gaussian", "--d", "10")
        assert proc.returncode == 0
        key, value = proc.stdout.strip().split("=")
        assert key == "gal"
        assert float(value) > 0

    def test_gal_exact_perturbed(self):
        proc = cli_capture(
            "gal-exact", "--kind", "perturbed", "--d", "8", "--mu", "0.3", "--layer", "output"
        )
        assert proc.returncode == 0
        assert proc.stdout.startswith("gal=")

    def test_gal_mc_lines(self):
        proc = cli_capture(
            "gal-mc", "--d", "8", "--loss", "hinge", "--init", "rademacher",
            "--n-theta", "50", "--n-inner", "16", "--seed", "1",
        )
        assert proc.returncode == 0
        lines = proc.stdout.strip().splitlines()
        assert lines[0].startswith("gal=")
        assert lines[1].startswith("se=")
