"""
Tests for the hts-capacity command line
"""

import csv
import io
import math

import pytest

from hts_capacity import cli, load_presets, validation
from hts_capacity.cli import SchemeResult, SweepRow, main, ordering_violations
from hts_capacity.validation import CheckResult, ValidationReport

SMALL_SCENARIO = """
[userlink]
users = {users}
threshold_db = {threshold}

[algorithm]
max_iters = 20

[sweep]
grid = {grid}
samples = 10000
seed = 11
"""


def small_scenario(scenario_file, users=2, threshold='"off"', grid="[35.0, 45.0]"):
    return scenario_file(SMALL_SCENARIO.format(users=users, threshold=threshold, grid=grid))


def run(argv):
    out = io.StringIO()
    code = main(argv, out=out)
    return code, out.getvalue()


def parse_records(text):
    return [dict(item.split("=", 1) for item in line.split()) for line in text.splitlines()]


class TestSubcommands:
    """feeder, userlink and e2e"""

    def test_feeder(self):
        code, text = run(["feeder", "--samples", "10000"])
        assert code == cli.EXIT_OK
        records = parse_records(text)
        assert [r["mode"] for r in records] == ["stbc", "single"]
        stbc, single = (float(r["c1_cf"]) for r in records)
        assert stbc >= single > 0
        assert float(records[0]["c1_mc"]) == pytest.approx(stbc, rel=5e-2)

    def test_single_user_schemes_agree(self, scenario_file):
        path = small_scenario(scenario_file, users=1, grid="[40.0]")
        code, text = run(["userlink", "--config", str(path)])
        assert code == cli.EXIT_OK
        records = {r["scheme"]: r for r in parse_records(text)}
        assert sorted(records) == ["proposed", "slnr", "zf"]
        reference = float(records["slnr"]["c2_cf"])
        for record in records.values():
            assert float(record["c2_cf"]) == pytest.approx(reference, rel=1e-9)
            assert record["users"] == "1"

    def test_e2e_is_minimum(self, scenario_file):
        path = small_scenario(scenario_file, grid="[40.0]")
        code, text = run(["e2e", "--config", str(path), "--scheme", "slnr"])
        assert code == cli.EXIT_OK
        (record,) = parse_records(text)
        assert record["link"] == "e2e"
        expected = min(float(record["c1_cf"]), float(record["c2_cf"]))
        assert float(record["c"]) == pytest.approx(expected)

    def test_preset_option(self):
        code, text = run(["feeder", "--samples", "10000", "--preset", "weak"])
        assert code == cli.EXIT_OK
        _, weak_single = (float(r["c1_cf"]) for r in parse_records(text))
        _, text = run(["feeder", "--samples", "10000", "--preset", "strong"])
        _, strong_single = (float(r["c1_cf"]) for r in parse_records(text))
        assert weak_single != strong_single


class TestSweep:
    """CSV sweeps"""

    def test_columns(self, scenario_file, tmp_path):
        path = small_scenario(scenario_file)
        target = tmp_path / "out.csv"
        code, text = run(["sweep", "--config", str(path), "--output", str(target)])
        assert code == cli.EXIT_OK
        with open(target, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == SweepRow.header(("proposed", "zf", "slnr"))
        assert [r[0] for r in rows[1:]] == ["35", "45"]
        assert "sweep=done points=2" in text

    def test_reruns_are_byte_identical(self, scenario_file, tmp_path):
        path = small_scenario(scenario_file, threshold="-10.0")
        first, second, threaded = (tmp_path / name for name in ("a.csv", "b.csv", "c.csv"))
        run(["sweep", "--config", str(path), "-o", str(first)])
        run(["sweep", "--config", str(path), "-o", str(second)])
        run(["sweep", "--config", str(path), "-o", str(threaded), "--jobs", "2"])
        assert first.read_bytes() == second.read_bytes() == threaded.read_bytes()

    def test_seed_changes_monte_carlo(self, scenario_file, tmp_path):
        path = small_scenario(scenario_file, grid="[40.0]")
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(["sweep", "--config", str(path), "-o", str(a), "--scheme", "zf"])
        run(["sweep", "--config", str(path), "-o", str(b), "--scheme", "zf", "--seed", "12"])
        assert a.read_text() != b.read_text()

    def test_stdout_output(self, scenario_file):
        path = small_scenario(scenario_file, grid="[40.0]")
        code, text = run(["sweep", "--config", str(path), "--scheme", "slnr"])
        assert code == cli.EXIT_OK
        lines = text.splitlines()
        assert lines[0].startswith("value,c1_cf,c1_single_cf,c1_mc,c1_mc_se,c2_slnr_cf")
        assert lines[-1].startswith("sweep=done")

    def test_ordering_flag_matches_csv(self, scenario_file, tmp_path):
        path = small_scenario(scenario_file, users=3, threshold='"off"')
        target = tmp_path / "out.csv"
        code, text = run(["sweep", "--config", str(path), "-o", str(target)])
        assert code == cli.EXIT_OK
        with target.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        holds = all(
            float(r["c2_proposed_cf"]) >= float(r["c2_slnr_cf"]) * (1.0 - 1e-9) for r in rows
        )
        summary = parse_records(text)[-1]
        assert summary["sweep"] == "done"
        assert summary["proposed_ge_slnr"] == str(holds)


class TestErrors:
    """Exit codes"""

    def test_bad_config(self, scenario_file):
        path = scenario_file("[userlink]\ncolour = 3\n")
        code, _ = run(["feeder", "--config", str(path)])
        assert code == cli.EXIT_ERROR

    def test_missing_config(self, tmp_path):
        code, _ = run(["feeder", "--config", str(tmp_path / "absent.toml")])
        assert code == cli.EXIT_ERROR

    def test_too_few_samples(self):
        code, _ = run(["feeder", "--samples", "100"])
        assert code == cli.EXIT_ERROR

    def test_unwritable_output(self, scenario_file, tmp_path):
        path = small_scenario(scenario_file, grid="[40.0]")
        code, _ = run(["sweep", "--config", str(path), "--scheme", "zf", "-o", str(tmp_path)])
        assert code == cli.EXIT_ERROR

    def test_unknown_scheme_is_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["userlink", "--scheme", "mmse"])
        assert info.value.code == 2

    def test_validate_with_invalid_shadowing(self, scenario_file):
        path = scenario_file("[userlink]\nshadowing = { m = 2, b = -0.1, Omega = 0.3 }\n")
        code, text = run(["validate", "--quick", "--config", str(path)])
        assert code == cli.EXIT_ERROR
        assert text == ""

    @pytest.mark.slow
    def test_validate_with_broken_shipped_preset(self, monkeypatch):
        broken = load_presets()
        broken["shadowing"]["heavy"]["b"] = 0.0
        monkeypatch.setattr(validation, "load_presets", lambda: broken)
        code, text = run(["validate", "--quick"])
        assert code == cli.EXIT_VALIDATION
        records = {r["check"]: r for r in parse_records(text)[:-1]}
        assert records["preset.shadowing.heavy"]["status"] == "ERROR"
        assert text.splitlines()[-1].startswith("summary status=FAIL")

    def test_validation_failure(self, monkeypatch):
        report = ValidationReport(
            [
                CheckResult("ok", True, 0.0, 1.0),
                CheckResult("broken", False, 2.0, 1.0),
            ]
        )
        monkeypatch.setattr(cli, "validate_models", lambda *args, **kwargs: report)
        code, text = run(["validate", "--quick"])
        assert code == cli.EXIT_VALIDATION
        assert text.splitlines()[-1] == "summary status=FAIL total=2 failed=1"


class TestRows:
    """Row formatting and ordering checks"""

    def make_row(self, proposed, slnr):
        return SweepRow(
            value=1.0,
            c1_cf=2.0,
            c1_single_cf=1.5,
            c1_mc=2.01,
            c1_mc_se=0.01,
            schemes={"proposed": SchemeResult(c2_cf=proposed), "slnr": SchemeResult(c2_cf=slnr)},
        )

    def test_cells(self):
        row = self.make_row(3.0, math.nan)
        cells = row.cells(("proposed", "slnr"))
        assert len(cells) == len(SweepRow.header(("proposed", "slnr")))
        assert cells[:5] == ["1", "2", "1.5", "2.01", "0.01"]
        assert cells[5] == "3"
        assert cells[10] == "nan"

    def test_ordering_violations(self):
        rows = [self.make_row(3.0, 2.0), self.make_row(1.0, 2.0), self.make_row(math.nan, 2.0)]
        assert ordering_violations(rows, "proposed", "slnr") == [1]
