"""
Unit tests for the experiment harness and the command line
"""

from pathlib import Path

import pytest

from rmtlab.cli import main
from rmtlab.config import load_config
from rmtlab.harness import (
    EXIT_FAILED,
    EXIT_INVALID_CONFIG,
    EXIT_IO,
    EXIT_OK,
    EXIT_UNKNOWN_EXPERIMENT,
    run,
    run_file,
)
from rmtlab.report import git_blob_hash

SEMICIRCLE = """
experiment = "semicircle"
samples = 6
seed = 7
n = 40

[ensemble]
symmetry = "real_symmetric"
entries = { kind = "gaussian" }

[envelopes]
moment_2 = 1.0
moment_4 = 2.0
moment_6 = 5.0
"""

IDENTITIES = """
experiment = "hs-check"
seed = 3
n = 20

[params]
points = [0.0, 0.37, 5.0]
"""

POISSON = """
experiment = "gaps"
samples = 3
seed = 5
n = 400

[params]
diagnostic = "poisson"
"""

SWEEP = """
experiment = "semicircle"
samples = 20
seed = 21
n_sweep = [50, 100]

[ensemble]
symmetry = "real_symmetric"
"""

RIGIDITY = """
experiment = "rigidity"
samples = 4
seed = 9
n_sweep = [20, 40, 80]

[ensemble]
symmetry = "real_symmetric"
"""


def write(tmp_path: Path, name: str, text: str) -> Path:
    path = tmp_path / name
    path.write_text(text)
    return path


def body(path: Path) -> list[str]:
    """Report lines without the wall-time line"""
    return [line for line in path.read_text().splitlines() if not line.startswith("# wall_time")]


class TestRun:
    """Tests for run and run_file"""

    def test_report_metadata(self, tmp_path) -> None:
        path = write(tmp_path, "semicircle.toml", SEMICIRCLE)
        report = run(load_config(path))
        assert report.input_hash == git_blob_hash(SEMICIRCLE.encode())
        assert [r.statistic for r in report.rows][:3] == ["moment_2_error", "moment_4_error", "moment_6_error"]
        assert report.passed

    def test_rerun_is_byte_identical(self, tmp_path) -> None:
        path = write(tmp_path, "semicircle.toml", SEMICIRCLE)
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run_file(path, output=str(first))[0] == EXIT_OK
        assert run_file(path, output=str(second))[0] == EXIT_OK
        assert body(first) == body(second)

    def test_thread_invariance(self, tmp_path) -> None:
        path = write(tmp_path, "semicircle.toml", SEMICIRCLE)
        one, many = tmp_path / "one.csv", tmp_path / "many.csv"
        run_file(path, threads=1, output=str(one))
        run_file(path, threads=4, output=str(many))
        assert body(one) == body(many)

    def test_seed_override_changes_values(self, tmp_path) -> None:
        path = write(tmp_path, "semicircle.toml", SEMICIRCLE)
        _, a = run_file(path)
        _, b = run_file(path, seed=8)
        assert a is not None and b is not None
        assert a.config_hash != b.config_hash
        assert a.rows[0].value != b.rows[0].value

    def test_identities_pass(self, tmp_path) -> None:
        code, report = run_file(write(tmp_path, "hs.toml", IDENTITIES))
        assert code == EXIT_OK
        assert report is not None
        assert {r.statistic for r in report.rows} == {"hs_residual", "ward_identity", "schur_identity"}

    def test_failed_check(self, tmp_path) -> None:
        path = write(tmp_path, "tight.toml", SEMICIRCLE.replace("moment_2 = 1.0", "moment_2 = 0.0"))
        code, report = run_file(path)
        assert code == EXIT_FAILED
        assert report is not None and report.failures[0].statistic == "moment_2_error"

    def test_poisson_flag(self, tmp_path) -> None:
        code, report = run_file(write(tmp_path, "poisson.toml", POISSON))
        assert code == EXIT_OK and report is not None
        assert report.summary["flags"] == ["no level repulsion"]
        flag = next(r for r in report.rows if r.statistic == "no_level_repulsion")
        assert flag.value == 1.0 and flag.status == "na"

    def test_rigidity_slope_row(self, tmp_path) -> None:
        out = tmp_path / "rigidity.csv"
        _, report = run_file(write(tmp_path, "rigidity.toml", RIGIDITY), output=str(out))
        assert report is not None
        row = next(r for r in report.rows if r.statistic == "rigidity_q_slope_ci")
        assert isinstance(row.envelope, tuple) and row.envelope[0] <= row.value <= row.envelope[1]
        assert any(line.startswith("rigidity_q_slope_ci,") and "[" in line for line in out.read_text().splitlines())

    def test_local_law_ratio_growth_row(self, tmp_path) -> None:
        _, report = run_file(write(tmp_path, "sweep.toml", SWEEP))
        assert report is not None
        row = next(r for r in report.rows if r.statistic == "local_law_ratio_growth")
        assert row.envelope == 2.0 and row.status in ("pass", "fail")

    def test_doubling_samples_keeps_medians(self, tmp_path) -> None:
        """Medians at 2x samples stay within 3 IQR standard errors of the 1x run"""
        _, single = run_file(write(tmp_path, "single.toml", SWEEP))
        _, double = run_file(write(tmp_path, "double.toml", SWEEP.replace("samples = 20", "samples = 40")))
        assert single is not None and double is not None
        before = [r for r in single.rows if r.statistic == "local_law_trace_error"]
        after = [r for r in double.rows if r.statistic == "local_law_trace_error"]
        assert [r.n for r in before] == [r.n for r in after] == [50, 100]
        for a, b in zip(before, after):
            assert a.stderr > 0
            assert abs(a.value - b.value) < 3 * a.stderr, f"N = {a.n}"

    def test_schema_is_stable(self, tmp_path) -> None:
        out = tmp_path / "hs.csv"
        run_file(write(tmp_path, "hs.toml", IDENTITIES), output=str(out))
        lines = out.read_text().splitlines()
        assert [line.split(":")[0] for line in lines[:5]] == [
            "# experiment", "# config_hash", "# input_hash", "# version", "# wall_time"
        ]
        assert lines[5] == "statistic,n,E,eta,value,stderr,envelope,status,samples,seed"
        cells = [line.split(",") for line in lines[6:]]
        assert [c[0] for c in cells] == ["hs_residual"] * 3 + ["ward_identity", "schur_identity"]
        assert [c[2] for c in cells[:3]] == ["0", "0.37", "5"]
        assert cells[3][1:4] == ["20", "0.1", "0.05"]
        assert cells[4][1:4] == ["20", "0.3", "0.2"]
        assert all(c[7] == "pass" for c in cells)

    def test_json_output(self, tmp_path) -> None:
        out = tmp_path / "hs.json"
        code, _ = run_file(write(tmp_path, "hs.toml", IDENTITIES), output=str(out), format="json")
        assert code == EXIT_OK
        assert '"passed": true' in out.read_text()


class TestExitCodes:
    """Tests for the distinct error exit codes"""

    def test_unknown_experiment(self, tmp_path) -> None:
        path = write(tmp_path, "bad.toml", 'experiment = "teleport"\n')
        assert run_file(path) == (EXIT_UNKNOWN_EXPERIMENT, None)

    def test_invalid_config(self, tmp_path) -> None:
        path = write(tmp_path, "bad.toml", 'experiment = "rigidity"\nn = 20\n')
        assert run_file(path) == (EXIT_INVALID_CONFIG, None)
        path = write(tmp_path, "bad2.toml", 'experiment = "semicircle"\nsamples = -1\n')
        assert run_file(path) == (EXIT_INVALID_CONFIG, None)

    def test_missing_config(self, tmp_path) -> None:
        assert run_file(tmp_path / "absent.toml") == (EXIT_IO, None)

    def test_unwritable_output(self, tmp_path) -> None:
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        path = write(tmp_path, "hs.toml", IDENTITIES)
        assert run_file(path, output=str(blocker / "report.csv")) == (EXIT_IO, None)


class TestCli:
    """Tests for the rmtlab command"""

    def test_list_experiments(self, capsys) -> None:
        assert main(["list-experiments"]) == EXIT_OK
        names = capsys.readouterr().out.split()
        assert names[0] == "semicircle" and "hs-check" in names and len(names) == 14

    def test_validate(self, tmp_path, capsys) -> None:
        assert main(["validate", str(write(tmp_path, "hs.toml", IDENTITIES))]) == EXIT_OK
        assert "ok (hs-check)" in capsys.readouterr().out
        assert main(["validate", str(write(tmp_path, "bad.toml", 'experiment = "x"\n'))]) == EXIT_UNKNOWN_EXPERIMENT
        assert main(["validate", str(write(tmp_path, "r.toml", 'experiment = "er"\nn = 5\n'))]) == EXIT_INVALID_CONFIG
        assert main(["validate", str(tmp_path / "absent.toml")]) == EXIT_IO

    def test_run(self, tmp_path, capsys) -> None:
        out = tmp_path / "results" / "hs.csv"
        code = main(["run", str(write(tmp_path, "hs.toml", IDENTITIES)), "--seed", "4", "--out", str(out)])
        assert code == EXIT_OK
        assert out.exists()
        assert "hs-check: 5 rows, 0 failed" in capsys.readouterr().out

    def test_threads_from_environment(self, tmp_path, monkeypatch) -> None:
        monkeypatch.setenv("RMTLAB_THREADS", "3")
        path = write(tmp_path, "semicircle.toml", SEMICIRCLE)
        one, env = tmp_path / "one.csv", tmp_path / "env.csv"
        assert main(["run", str(path), "--threads", "1", "--out", str(one)]) == EXIT_OK
        assert main(["run", str(path), "--out", str(env)]) == EXIT_OK
        assert body(one) == body(env)

    def test_bad_format(self, tmp_path) -> None:
        with pytest.raises(SystemExit):
            main(["run", str(write(tmp_path, "hs.toml", IDENTITIES)), "--format", "xml"])
