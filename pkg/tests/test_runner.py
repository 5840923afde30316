"""Tests for scenario loading, the check runner, report writing and the CLI."""
import json
from pathlib import Path

import pandas as pd
import pytest

from app.core.catalog import CATALOG, CatalogEntry, register_entry
from app.main import list_catalog, main
from app.schemas.scenario import Scenario
from app.services.runner import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIG_ERROR,
    EXIT_OK,
    ScenarioRunner,
    load_scenario,
    run_scenario,
)

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


@pytest.fixture
def mini_scenario():
    """Two diagonal generators, three cheap checks."""
    return {
        "name": "mini",
        "functions": {
            "jump": {"kind": "dirac", "v0": [1.0]},
            "root": {"kind": "frac_power", "alpha": 0.5},
        },
        "tuples": {
            "A": {"kind": "explicit", "matrices": [[[-1.0, 0.0], [0.0, -2.0]]]},
            "B": {"kind": "explicit", "matrices": [[[-1.5, 0.0], [0.0, -2.5]]]},
        },
        "operations": [
            {"id": "trace", "op": "trace_formula", "psi": "jump", "a": "A", "b": "B", "tolerance": 1e-10},
            {"id": "bound", "op": "theorem1", "psi": "root", "a": "A", "b": "B", "tolerance": 1e-6},
            {"id": "suite", "op": "bound_suite", "psi": "jump", "theorem": 2, "count": 5, "seed": 0,
             "d": 3, "tolerance": 1e-9},
        ],
    }


def write_scenario(tmp_path: Path, payload: dict, name: str = "scenario.json") -> Path:
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


@pytest.mark.unit
class TestLoading:
    def test_empty_scenario_passes(self, tmp_path):
        report, code = run_scenario(SCENARIOS / "empty.json", tmp_path / "out")
        assert code == EXIT_OK
        assert report.checks == []
        assert (tmp_path / "out" / "report.json").exists()
        assert (tmp_path / "out" / "metadata.json").exists()

    def test_undefined_reference_is_a_config_error(self, tmp_path, mini_scenario):
        mini_scenario["operations"][0]["psi"] = "missing"
        report, code = run_scenario(write_scenario(tmp_path, mini_scenario), tmp_path / "out")
        assert report is None
        assert code == EXIT_CONFIG_ERROR

    def test_malformed_json_is_a_config_error(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert run_scenario(path, tmp_path / "out")[1] == EXIT_CONFIG_ERROR

    def test_missing_file_is_a_config_error(self, tmp_path):
        assert run_scenario(tmp_path / "nowhere.json", tmp_path / "out")[1] == EXIT_CONFIG_ERROR

    def test_tuple_that_cannot_be_built(self, tmp_path, mini_scenario):
        mini_scenario["tuples"]["A"]["matrices"] = [[[-1.0, 0.0, 0.0], [0.0, -2.0, 0.0]]]
        assert run_scenario(write_scenario(tmp_path, mini_scenario), tmp_path / "out")[1] == EXIT_CONFIG_ERROR

    def test_ragged_matrix_is_a_config_error(self, tmp_path, mini_scenario):
        mini_scenario["tuples"]["A"]["matrices"] = [[[-1.0, 0.0], [0.0]]]
        report, code = run_scenario(write_scenario(tmp_path, mini_scenario), tmp_path / "out")
        assert report is None
        assert code == EXIT_CONFIG_ERROR

    def test_singular_planted_basis_is_a_config_error(self, tmp_path, mini_scenario):
        mini_scenario["tuples"]["B"] = {"kind": "planted", "eigenvalues": [[-1.5], [-2.5]],
                                        "basis": [[1.0, 1.0], [1.0, 1.0]]}
        report, code = run_scenario(write_scenario(tmp_path, mini_scenario), tmp_path / "out")
        assert report is None
        assert code == EXIT_CONFIG_ERROR

    def test_duplicate_ids_rejected(self, tmp_path, mini_scenario):
        mini_scenario["operations"][1]["id"] = "trace"
        with pytest.raises(ValueError, match="duplicate check id"):
            load_scenario(write_scenario(tmp_path, mini_scenario))

    def test_unknown_fields_rejected(self, tmp_path, mini_scenario):
        mini_scenario["functions"]["jump"]["weight"] = 2.0
        with pytest.raises(ValueError, match="failed validation"):
            load_scenario(write_scenario(tmp_path, mini_scenario))


@pytest.mark.unit
class TestRunner:
    def test_mini_scenario_passes(self, tmp_path, mini_scenario):
        report, code = run_scenario(write_scenario(tmp_path, mini_scenario), tmp_path / "out")
        assert code == EXIT_OK
        assert [check.id for check in report.checks] == ["trace", "bound", "suite"]
        assert report.checks[2].artifacts == ["suite.csv"]

    def test_failing_check_sets_exit_code(self, tmp_path, mini_scenario):
        mini_scenario["operations"].append(
            {"id": "strict", "op": "validate_tuple", "tuple": "A", "expect_pass": False, "tolerance": 1.0}
        )
        report, code = run_scenario(write_scenario(tmp_path, mini_scenario), tmp_path / "out")
        assert code == EXIT_CHECK_FAILED
        assert not report.passed
        assert [check.passed for check in report.checks] == [True, True, True, False]

    def test_domain_error_becomes_a_failed_record(self, tmp_path, mini_scenario):
        mini_scenario["operations"] = [
            {"id": "moments", "op": "trace_formula", "psi": "root", "a": "A", "b": "B", "tolerance": 1e-6}
        ]
        report, code = run_scenario(write_scenario(tmp_path, mini_scenario), tmp_path / "out")
        assert code == EXIT_CHECK_FAILED
        assert report.checks[0].error.startswith("MomentInfiniteError")

    def test_resolvent_point_left_of_the_axis_fails_the_check(self, tmp_path, mini_scenario):
        mini_scenario["operations"].append(
            {"id": "left", "op": "resolvent_trace", "a": "A", "b": "B", "lam_grid": [[-0.5]], "tolerance": 1e-10}
        )
        report, code = run_scenario(write_scenario(tmp_path, mini_scenario), tmp_path / "out")
        assert code == EXIT_CHECK_FAILED
        assert report.checks[-1].error.startswith("BranchCutError")
        assert [check.passed for check in report.checks[:-1]] == [True, True, True]
        assert (tmp_path / "out" / "report.json").exists()

    def test_report_is_reproducible(self, tmp_path, mini_scenario):
        path = write_scenario(tmp_path, mini_scenario)
        run_scenario(path, tmp_path / "first")
        run_scenario(path, tmp_path / "second")
        first = (tmp_path / "first" / "report.json").read_bytes()
        assert first == (tmp_path / "second" / "report.json").read_bytes()

    def test_parallel_matches_sequential(self, tmp_path, mini_scenario):
        path = write_scenario(tmp_path, mini_scenario)
        run_scenario(path, tmp_path / "serial")
        run_scenario(path, tmp_path / "pooled", parallel=3)
        serial = (tmp_path / "serial" / "report.json").read_bytes()
        assert serial == (tmp_path / "pooled" / "report.json").read_bytes()

    def test_digest_depends_on_referenced_inputs(self, mini_scenario):
        runner = ScenarioRunner(Scenario.model_validate(mini_scenario))
        checks = runner.scenario.operations
        digests = [runner.inputs_digest(check) for check in checks]
        assert all(len(d) == 64 for d in digests)
        assert len(set(digests)) == len(digests)

    def test_csv_report_and_artifacts(self, tmp_path, mini_scenario):
        _, code = run_scenario(write_scenario(tmp_path, mini_scenario), tmp_path / "out", fmt="csv")
        assert code == EXIT_OK
        summary = pd.read_csv(tmp_path / "out" / "report.csv")
        assert summary["id"].tolist() == ["trace", "bound", "suite"]
        suite = pd.read_csv(tmp_path / "out" / "suite.csv")
        assert list(suite.columns) == ["seed", "lhs", "rhs", "margin", "pass"]
        assert len(suite) == 5


@pytest.mark.unit
class TestCli:
    def test_catalog_listing(self):
        text = list_catalog()
        for name in ("dirac", "frac_power", "log_resolvent", "random_pair"):
            assert name in text

    def test_catalog_json(self, capsys):
        assert main(["list-catalog", "--json"]) == 0
        entries = json.loads(capsys.readouterr().out)
        assert {"name", "kind", "description", "parameters"} <= set(entries[0])

    def test_registered_entry_is_listed(self):
        entry = CatalogEntry("exp_decay", "function", "test entry", ("rate",), lambda rate: None)
        register_entry(entry)
        try:
            names = [e["name"] for e in json.loads(list_catalog(as_json=True))]
            assert "exp_decay" in names
        finally:
            del CATALOG["exp_decay"]

    def test_run_command(self, tmp_path):
        code = main(["run", str(SCENARIOS / "empty.json"), "--output-dir", str(tmp_path)])
        assert code == EXIT_OK


@pytest.mark.integration
@pytest.mark.parametrize("name", ["krein_1d.json", "calculus_2d.json", "arity_3.json", "bounds_suite.json"])
def test_bundled_scenarios_pass(name, tmp_path):
    report, code = run_scenario(SCENARIOS / name, tmp_path)
    failed = [(c.id, c.error, c.residual) for c in report.checks if not c.passed]
    assert code == EXIT_OK, failed
