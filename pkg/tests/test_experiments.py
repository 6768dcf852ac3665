import copy
import json

import numpy as np
import pytest

from rlao import __version__
from rlao.abstraction import Abstraction
from rlao.errors import ConfigError, PreconditionError
from rlao.experiments.cli import main
from rlao.experiments.config import (
    KINDS,
    dump_config,
    load_config,
    load_template,
    output_dir,
    parse_config,
    resolve_instance,
    validate_config,
    worker_count,
)
from rlao.experiments.fixtures import counterexample_fixture, fixture_document
from rlao.experiments.report import SuiteReport, binomial_se
from rlao.experiments.suites import check_ergodic, run_suite
from rlao.mdp import GroundMDP, validate_mdp


def small(kind, **over):
    doc = copy.deepcopy(load_template(kind))
    doc.update(over)
    return doc


class TestConfig:
    @pytest.mark.parametrize("kind", KINDS)
    def test_templates_valid_and_round_trip(self, kind):
        doc = load_template(kind)
        assert parse_config(dump_config(doc)) == doc
        assert dump_config(parse_config(dump_config(doc))) == dump_config(doc)

    def test_missing_field(self):
        doc = load_template("concentration")
        del doc["trials"]
        with pytest.raises(ConfigError, match="trials"):
            validate_config(doc)

    def test_unknown_field(self):
        with pytest.raises(ConfigError):
            validate_config({**load_template("martingale"), "bogus": 1})

    def test_wrong_version(self):
        with pytest.raises(ConfigError):
            validate_config({**load_template("martingale"), "schema_version": 2})

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            validate_config({"schema_version": 1, "kind": "nope"})

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_inline_instance(self):
        m, phi = counterexample_fixture()
        got_m, got_phi = resolve_instance({"mdp": m.to_dict(), "abstraction": phi.to_dict()})
        assert np.array_equal(got_m.transition, m.transition)
        assert np.array_equal(got_phi.state_map, phi.state_map)

    def test_env_overrides(self, monkeypatch, tmp_path):
        monkeypatch.setenv("RLAO_OUTPUT_DIR", str(tmp_path))
        assert output_dir({"output": "elsewhere"}) == tmp_path
        monkeypatch.setenv("RLAO_WORKERS", "3")
        assert worker_count() == 3
        monkeypatch.setenv("RLAO_WORKERS", "many")
        with pytest.raises(ConfigError):
            worker_count()


class TestFixture:
    def test_fixture_shape(self):
        m, phi = counterexample_fixture()
        assert validate_mdp(m) == []
        assert phi.state_map.tolist() == [0, 0, 1, 2] and m.start_state == 0
        assert fixture_document()["block_labels"] == ["A", "B", "C"]


class TestSuites:
    def test_counterexample(self):
        rep = run_suite(load_template("counterexample"))
        assert rep.passed
        row = next(r for r in rep.rows if r[0] == 1 and r[1] == 1)
        assert row[4] == pytest.approx(0.36, abs=1e-12) and row[5] == pytest.approx(0.312, abs=1e-12)

    def test_counterexample_detects_wrong_expectation(self):
        doc = load_template("counterexample")
        doc["expected"] = [{"u": 1, "v": 1, "joint": 0.321}]
        assert not run_suite(doc).passed

    def test_concentration_eps_two_never_fails(self):
        rep = run_suite(small("concentration", n_values=[20], eps_values=[2.0], trials=500))
        assert rep.rows[0][4] == 0 and rep.passed

    def test_simulator_cycle(self):
        rep = run_suite(small("simulator_sampling", n_values=[30], trials=2000, sampler="cycle"))
        assert rep.passed

    def test_value_bounds_small(self):
        rep = run_suite(small("value_bounds", count=20))
        assert rep.passed and rep.n_cases > 0

    def test_exact_abstraction_has_zero_loss(self):
        rep = run_suite(small("value_bounds", count=30, max_eta_t=0.0, max_eta_r=0.0))
        theorem = [r for r in rep.rows if r[1] == "policy_loss"]
        assert theorem and all(r[4] <= 1e-9 and r[5] == 0.0 for r in theorem)

    def test_martingale_small(self):
        rep = run_suite(small("martingale", random_instances={"count": 10, "n_states": [3], "n_abstract": 2,
                                                              "n_actions": [1, 2]}, depth=2))
        assert rep.passed

    def test_rmax_single_state(self):
        m = GroundMDP(np.ones((1, 1, 1)), np.full((1, 1), 0.5), 1.0, 0)
        doc = small("rmax_compare", instance={"mdp": m.to_dict(), "abstraction": Abstraction.identity(1).to_dict()},
                    seeds=2, min_pass=0, t_eps=2, m_known=7)
        rep = run_suite(doc)
        assert [(r[1], r[2]) for r in rep.rows] == [(7, 7), (7, 7)]

    def test_rmax_exact_abstraction_matches_baseline(self):
        gen = {"n_abstract": 2, "block_sizes": [2, 2], "n_actions": 2, "target_eta_t": 0.0,
               "target_eta_r": 0.0, "seed": 3}
        doc = small("rmax_compare", instance={"generator": gen}, seeds=3, m_known=60, min_pass=0)
        rep = run_suite(doc)
        for r in rep.rows:
            assert abs(r[3] - r[4]) <= 2 * doc["eps"]

    def test_non_ergodic_rejected(self):
        t = np.zeros((2, 1, 2))
        t[:, 0, 1] = 1.0
        with pytest.raises(PreconditionError):
            check_ergodic(GroundMDP(t, np.zeros((2, 1)), 1.0))

    def test_rerun_is_byte_identical(self, tmp_path):
        doc = small("concentration", n_values=[20, 40], trials=300)
        a, b = run_suite(doc), run_suite(doc)
        assert a.rows_csv() == b.rows_csv()
        assert a.summary_csv(with_timing=False) == b.summary_csv(with_timing=False)
        cases, summary = a.write(tmp_path)
        assert cases.read_text() == a.rows_csv()
        assert "runtime_s" in summary.read_text().splitlines()[0]


class TestReport:
    def test_binomial_se(self):
        assert binomial_se(0.5, 100) == 0.05 and binomial_se(0.0, 10) == 0.0

    def test_failure_fraction(self):
        rep = SuiteReport("x", "k", ["a", "pass"], "rule")
        rep.add(1, passed=True)
        rep.add(2, passed=False)
        assert rep.failure_fraction == 0.5 and not rep.passed
        assert "rule" in rep.summary_csv()


class TestCli:
    def test_version(self, capsys):
        assert main(["version"]) == 0
        assert capsys.readouterr().out.strip() == __version__

    def test_bound_abstract(self, capsys):
        assert main(["bound", "abstract_l1", "--n-abstract", "3", "--n", "800", "--eps", "0.5"]) == 0
        assert capsys.readouterr().out.strip() == "1.111e-10"

    def test_bound_samples_needed(self, capsys):
        args = ["bound", "samples_needed", "--n-abstract", "2", "--kappa", "0.1", "--eps", "0.5"]
        assert main(args) == 0 and capsys.readouterr().out.strip() == "119"
        assert main(args + ["--variant", "iid_simulator"]) == 0 and capsys.readouterr().out.strip() == "24"

    def test_bound_missing_argument(self):
        assert main(["bound", "weissman", "--n-abstract", "2", "--eps", "0.5"]) == 2

    def test_bound_invalid_eps(self):
        assert main(["bound", "weissman", "--n-abstract", "2", "--n", "5", "--eps", "-1"]) == 2

    def test_fixture(self, capsys):
        assert main(["fixture", "counterexample"]) == 0
        out = capsys.readouterr().out
        assert "joint(B,B) = 0.36 vs product = 0.312" in out
        assert "Pr(Y2=B) = 0.52" in out

    def test_malformed_config(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"schema_version": 1, "kind": "concentration"}))
        assert main(["run", str(p)]) == 2

    def test_missing_config(self, tmp_path):
        assert main(["run", str(tmp_path / "absent.json")]) == 2

    def test_unknown_subcommand(self):
        assert main(["frobnicate"]) == 2

    def test_run_pass_and_fail(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("RLAO_OUTPUT_DIR", str(tmp_path / "out"))
        good = tmp_path / "good.json"
        good.write_text(dump_config(load_template("counterexample")))
        assert main(["run", str(good)]) == 0
        assert (tmp_path / "out" / "counterexample.csv").exists()
        bad_doc = load_template("counterexample")
        bad_doc["expected"][0]["product"] = 0.321
        bad = tmp_path / "bad.json"
        bad.write_text(dump_config(bad_doc))
        assert main(["run", str(bad)]) == 1
        assert "FAIL" in capsys.readouterr().out
