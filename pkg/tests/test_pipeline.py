import json
import math

import numpy as np
import pytest

from consensuslab import graph
from consensuslab.dynamics import DisturbanceSpec
from consensuslab.errors import DomainError
from consensuslab.pipeline import (
    ExperimentConfig,
    build_scenario,
    connectivity_report,
    run_experiment,
    run_sweep,
)
from consensuslab.scenarios import example_one, random_uqsc


def make_config(**overrides) -> ExperimentConfig:
    doc = {
        "mode": "simulate",
        "scenario": {"generator": "random-uqsc",
                     "params": {"n": 3, "window": 1.5, "tau_d": 0.5,
                                "horizon": 20.0, "seed": 7}},
    }
    doc.update(overrides)
    return ExperimentConfig.from_dict(doc)


class TestConfigValidation:
    def test_bad_mode_named(self):
        with pytest.raises(DomainError, match="mode"):
            ExperimentConfig.from_dict({"mode": "warp", "scenario": {"inline": {}}})

    def test_scenario_source_required(self):
        with pytest.raises(DomainError, match="scenario"):
            ExperimentConfig.from_dict({"mode": "simulate", "scenario": {"zzz": 1}})

    def test_event_section_required_for_et(self):
        with pytest.raises(DomainError, match="event"):
            ExperimentConfig.from_dict({
                "mode": "event_triggered",
                "scenario": {"generator": "random-uqsc", "params": {}},
            })

    def test_eps_range_checked(self):
        with pytest.raises(DomainError, match="eps"):
            make_config(certificate={"eps": [1.5]})

    def test_unknown_grid_key_named(self):
        with pytest.raises(DomainError, match="gravity"):
            make_config(grid={"gravity": [9.8]})

    def test_scenario_file_missing(self):
        with pytest.raises(DomainError, match="does not exist"):
            build_scenario({"file": "/nonexistent/path.json"})


class TestRunExperiment:
    def test_no_certificate_scenarios_still_check_envelopes(self):
        from consensuslab.scenarios import necessity_counterexample

        doc = necessity_counterexample(4, 2.0).to_document()
        res = run_experiment(ExperimentConfig.from_dict({
            "mode": "simulate", "scenario": {"inline": doc},
        }))
        assert res.ok
        assert set(res.reports) == {"envelope"}
        assert res.certificate is None and res.bidir_certificate is None
        assert res.primary_bound is None
        assert all(row[4] is None for row in res.metrics_rows)

    def test_example_one_with_integrable_noise_full_pipeline(self):
        w = DisturbanceSpec.exp_vanishing([0.2, 0.0], decay=1.0)
        doc = example_one(60.0, disturbance=w).to_document()
        res = run_experiment(ExperimentConfig.from_dict({
            "mode": "simulate", "scenario": {"inline": doc},
        }))
        # the finite-horizon window search certifies some window, so the
        # integral-bound reports run and hold
        assert "girc" in res.reports and "girc-sharpened" in res.reports
        assert res.violation_count() == 0
        assert res.ok

    def test_certify_only_has_no_trajectory(self):
        res = run_experiment(make_config(mode="certify_only"))
        assert res.trajectory is None
        assert res.certificate is not None
        assert "contraction" in res.certificate

    def test_guarantee_failure_flags_run(self):
        sc = random_uqsc(3, 1.5, 0.5, 20.0, seed=1)
        doc = sc.to_document()
        doc["guarantees"] = {"uqsc_window": 0.4}  # too short: single arcs only
        res = run_experiment(ExperimentConfig.from_dict({
            "mode": "simulate", "scenario": {"inline": doc},
        }))
        assert res.guarantees_verified == {"uqsc_window": False}
        assert not res.ok


class TestEventTriggeredLabel:
    def base_doc(self, horizon=6e-4, window=5e-4):
        link = graph.Digraph.from_arcs(2, [(1, 2), (2, 1)], bidirectional=True)
        sig = graph.SwitchingSignal.constant(link, horizon=horizon, tau_d=1.0)
        from consensuslab.dynamics import WeightSpec
        from consensuslab.scenarios import Scenario

        return Scenario(
            name="tiny-link", signal=sig,
            weights=WeightSpec(kind="constant", scale=1.0, a_low=1.0, a_high=1.0),
            disturbance=DisturbanceSpec.zero(2),
            x0=(1.0, 0.0), guarantees={"uqsc_window": window},
        ).to_document()

    def test_theorem_compliant_when_timeout_small(self):
        res = run_experiment(ExperimentConfig.from_dict({
            "mode": "event_triggered",
            "scenario": {"inline": self.base_doc()},
            "event": {"threshold_scale": 0.5, "threshold_rate": 1e-4, "timeout": 1e-5},
        }))
        assert res.et_summary["label"] == "theorem-compliant"
        assert res.et_summary["limits"]["threshold_rate_limit"] > 1e-4
        assert res.ok

    def test_empirical_when_timeout_generous(self):
        res = run_experiment(ExperimentConfig.from_dict({
            "mode": "event_triggered",
            "scenario": {"inline": self.base_doc()},
            "event": {"threshold_scale": 0.5, "threshold_rate": 1e-4, "timeout": 1e-4},
        }))
        assert res.et_summary["label"] == "empirical"
        assert res.et_summary["hat_w_sup"] >= 0.0

    def test_summary_counts_match_reports(self):
        res = run_experiment(make_config())
        total = res.violation_count()
        assert f"total violations: {total}" in res.summary


class TestSweepOverrides:
    def test_sweep_agent_count(self):
        config = ExperimentConfig.from_dict({
            "mode": "simulate",
            "scenario": {"generator": "random-uqsc",
                         "params": {"n": 3, "window": 2.0, "tau_d": 0.5,
                                    "horizon": 20.0, "seed": 5}},
            "grid": {"n": [3, 4]},
        })
        header, rows = run_sweep(config)
        assert header[0] == "n"
        assert [r[0] for r in rows] == [3, 4]
        assert all(r[-1] for r in rows)

    def test_sweep_event_parameters(self):
        config = ExperimentConfig.from_dict({
            "mode": "event_triggered",
            "scenario": {"generator": "random-uqsc",
                         "params": {"n": 3, "window": 1.5, "tau_d": 0.5,
                                    "horizon": 10.0, "seed": 5}},
            "event": {"threshold_scale": 0.3, "threshold_rate": 0.2, "timeout": 1.0},
            "grid": {"threshold_scale": [0.3, 0.6]},
        })
        header, rows = run_sweep(config)
        tau_col = header.index("tau0")
        assert len(rows) == 2
        assert all(r[tau_col] > 0 for r in rows)

    def test_sweep_n_requires_generator(self):
        doc = random_uqsc(3, 1.5, 0.5, 10.0, seed=0).to_document()
        config = ExperimentConfig.from_dict({
            "mode": "simulate", "scenario": {"inline": doc}, "grid": {"n": [3]},
        })
        with pytest.raises(DomainError, match="generator"):
            run_sweep(config)

    def test_empty_grid(self):
        header, rows = run_sweep(make_config(grid={}))
        assert rows == [] and header


class TestConnectivityReport:
    def test_directed_signal(self):
        sc = random_uqsc(3, 1.5, 0.5, 20.0, seed=7)
        rep = connectivity_report(sc.signal, window=1.5)
        assert rep["uqsc_at_window"] is True
        assert rep["all_bidirectional"] is False
        assert "partition_boundaries" not in rep

    def test_bidirectional_signal(self):
        from consensuslab.scenarios import sparse_ijc

        sc = sparse_ijc(3, 1.5, 0.5, 30.0, seed=2)
        rep = connectivity_report(sc.signal)
        assert rep["all_bidirectional"] is True
        assert rep["ijc_consistent"] is True
        assert len(rep["partition_boundaries"]) >= 1
