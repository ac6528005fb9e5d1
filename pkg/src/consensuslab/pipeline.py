"""Config-driven experiment pipeline shared by the HTTP service and the CLI.

A run loads or generates a scenario, simulates it (plain or event-triggered),
derives the applicable certificates, verifies every applicable bound, and
packs artifacts (trajectory, metrics, certificates, verification reports and
a human-readable summary) into one JSON-friendly result.  Everything is a
pure function of the config, including randomness.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import bounds, dynamics, event_triggered, graph, scenarios
from .errors import DomainError, PreconditionError

MODES = ("simulate", "event_triggered", "certify_only")
SWEEPABLE = ("n", "window", "threshold_scale", "threshold_rate", "timeout", "eps", "seed")


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    scenario_source: dict
    step: float | None = None
    eps: tuple[float, ...] = (0.5, 0.1, 0.01)
    window_override: float | None = None
    et: event_triggered.EtConfig | None = None
    seed: int | None = None
    grid: dict[str, list] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ExperimentConfig":
        mode = doc.get("mode", "simulate")
        if mode not in MODES:
            raise DomainError(f"config field 'mode' must be one of {MODES}, got {mode!r}")
        source = doc.get("scenario")
        if not isinstance(source, Mapping) or not (
            {"file", "inline", "generator"} & set(source)
        ):
            raise DomainError(
                "config field 'scenario' must carry 'file', 'inline' or 'generator'"
            )
        et_doc = doc.get("event")
        if mode == "event_triggered" and et_doc is None:
            raise DomainError("config field 'event' is required in event_triggered mode")
        cert_doc = doc.get("certificate", {})
        eps = tuple(float(e) for e in cert_doc.get("eps", (0.5, 0.1, 0.01)))
        for e in eps:
            if not (0 < e < 1):
                raise DomainError(f"config field 'certificate.eps' entries must lie in (0,1), got {e}")
        step = doc.get("integrator", {}).get("step")
        grid = doc.get("grid", {})
        for key in grid:
            if key not in SWEEPABLE:
                raise DomainError(f"config field 'grid.{key}' is not sweepable; allowed: {SWEEPABLE}")
        return cls(
            mode=mode,
            scenario_source=dict(source),
            step=float(step) if step is not None else None,
            eps=eps,
            window_override=(
                float(cert_doc["window"]) if cert_doc.get("window") is not None else None
            ),
            et=event_triggered.EtConfig.from_dict(et_doc) if et_doc else None,
            seed=int(doc["seed"]) if doc.get("seed") is not None else None,
            grid={k: list(v) for k, v in grid.items()},
        )


def build_scenario(source: Mapping, seed: int | None = None) -> scenarios.Scenario:
    """Materialize the scenario a config points at, honoring a seed override."""
    if "file" in source:
        path = Path(source["file"])
        if not path.exists():
            raise DomainError(f"scenario file {path} does not exist")
        return scenarios.Scenario.from_document(json.loads(path.read_text()))
    if "inline" in source:
        return scenarios.Scenario.from_document(source["inline"])
    params = dict(source.get("params", {}))
    name = source["generator"]
    if seed is not None and name in ("random-uqsc", "sparse-ijc"):
        params["seed"] = seed
    return scenarios.generate(name, params)


@dataclass
class ExperimentResult:
    scenario_name: str
    mode: str
    ok: bool
    summary: str
    guarantees_verified: dict[str, bool]
    certificate: dict | None = None
    bidir_certificate: dict | None = None
    reports: dict[str, dict] = field(default_factory=dict)
    convergence: list[dict] = field(default_factory=list)
    trajectory: dynamics.Trajectory | None = None
    metrics_rows: list[list[float]] = field(default_factory=list)
    primary_bound: str | None = None
    et_summary: dict | None = None
    et_trace: event_triggered.EtTrace | None = None

    def violation_count(self) -> int:
        return sum(len(r.get("violations", [])) for r in self.reports.values())

    def to_payload(self) -> dict:
        payload = {
            "scenario_name": self.scenario_name,
            "mode": self.mode,
            "ok": self.ok,
            "summary": self.summary,
            "guarantees_verified": self.guarantees_verified,
            "certificate": self.certificate,
            "bidir_certificate": self.bidir_certificate,
            "reports": self.reports,
            "convergence": self.convergence,
            "primary_bound": self.primary_bound,
            "metrics_rows": self.metrics_rows,
            "et_summary": self.et_summary,
        }
        if self.trajectory is not None:
            payload["trajectory"] = {
                "times": self.trajectory.times.tolist(),
                "states": self.trajectory.states.tolist(),
                "disturbances": self.trajectory.disturbances.tolist(),
            }
        if self.et_trace is not None:
            payload["et_trigger_rows"] = list(self.et_trace.trigger_csv_rows())
            payload["et_delivery_rows"] = list(self.et_trace.delivery_csv_rows())
        return payload


def _derive_certificates(scenario: scenarios.Scenario, window_override: float | None):
    """Certificate inputs from the scenario: diameter of the joint graph over
    the whole horizon (finite-horizon surrogate), declared weight bounds and
    the best-known connectivity window."""
    signal = scenario.signal
    joint = graph.union_over(signal, 0.0, signal.horizon)
    d0 = graph.generalized_diameter(joint) if signal.n <= graph.DEFAULT_NODE_CAP else None
    window = window_override
    if window is None:
        window = scenario.guarantees.get("uqsc_window") or scenario.guarantees.get("usc_window")
    if window is None:
        window = graph.min_uqsc_window(signal)
    cert = None
    if window is not None and d0 and signal.n >= 2:
        cert = bounds.grc_certificate(
            signal.n, d0, float(window), signal.tau_d,
            scenario.weights.a_low, scenario.weights.a_high,
        )
    bidir = None
    if signal.all_bidirectional and d0 and signal.n >= 2:
        partition = graph.jc_partition(signal)
        if partition.window_count() >= 1:
            bidir = bounds.bidir_certificate(
                signal.n, d0, scenario.weights.a_low, scenario.weights.a_high, partition
            )
    return d0, cert, bidir


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    scenario = build_scenario(config.scenario_source, config.seed)
    verified = scenario.verify_guarantees()
    d0, cert, bidir = _derive_certificates(scenario, config.window_override)

    result = ExperimentResult(
        scenario_name=scenario.name,
        mode=config.mode,
        ok=all(verified.values()),
        summary="",
        guarantees_verified=verified,
        certificate=cert.to_dict() if cert else None,
        bidir_certificate=bidir.to_dict() if bidir else None,
    )
    lines = [
        f"scenario: {scenario.name}",
        f"mode: {config.mode}",
        f"agents: {scenario.signal.n}  horizon: {scenario.signal.horizon}  "
        f"dwell: {scenario.signal.tau_d}  joint-diameter: {d0}",
    ]
    for tag, ok in verified.items():
        lines.append(f"guarantee {tag}: {'verified' if ok else 'FAILED'}")

    if config.mode == "certify_only":
        _summarize_certs(lines, cert, bidir, config.eps)
        result.summary = "\n".join(lines)
        return result

    if config.mode == "simulate":
        traj = dynamics.integrate(
            scenario.signal, scenario.weights, scenario.disturbance,
            scenario.t0, scenario.x0, step=config.step,
        )
        result.trajectory = traj
        _verify_all(result, lines, traj, scenario, cert, bidir, config.eps)
        result.summary = "\n".join(lines)
        return result

    # event_triggered
    traj, trace = event_triggered.simulate_et(
        scenario.signal, config.et, scenario.x0, sample_step=config.step
    )
    result.trajectory = traj
    result.et_trace = trace
    _verify_et(result, lines, traj, trace, scenario, cert, config.eps)
    result.summary = "\n".join(lines)
    return result


def _summarize_certs(lines, cert, bidir, eps_list):
    if cert:
        lines.append(
            f"certificate: contraction={cert.contraction:.6e} per block={cert.block_length:.6g}, "
            f"decay-rate={cert.decay_rate:.6e}, sup-gain={cert.sup_gain:.6g}"
        )
        for eps in eps_list:
            lines.append(
                f"convergence-time bound eps={eps}: "
                f"{bounds.convergence_time_bound(cert, eps):.6g}"
            )
    if bidir:
        lines.append(
            f"bidirectional certificate: window-gain={bidir.window_gain:.6e}, "
            f"block-contraction={bidir.block_contraction:.6e}, "
            f"windows-closed={bidir.partition.window_count()}"
        )
    if not cert and not bidir:
        lines.append("no certificate derivable (no connectivity window or empty joint graph)")


def _verify_all(result, lines, traj, scenario, cert, bidir, eps_list):
    w = scenario.disturbance
    reports: dict[str, Any] = {}
    reports["envelope"] = bounds.verify_dini_envelopes(traj, w)
    if cert:
        reports["grc"] = bounds.verify_grc(traj, cert, w)
        reports["girc"] = bounds.verify_girc(traj, cert, w, sharpened=False)
        reports["girc-sharpened"] = bounds.verify_girc(traj, cert, w, sharpened=True)
    if bidir:
        reports["bidir-girc"] = bounds.verify_bidir_girc(traj, bidir, w)
    result.reports = {k: r.to_dict() for k, r in reports.items()}
    result.ok = result.ok and all(r.ok for r in reports.values())

    result.primary_bound = "grc" if cert else ("bidir-girc" if bidir else None)
    m = bounds.metrics(traj)
    bound_col = _bound_column(result.primary_bound, traj, scenario, cert, bidir)
    result.metrics_rows = [
        [float(m.times[k]), float(m.max_state[k]), float(m.min_state[k]),
         float(m.spread[k]), bound_col[k]]
        for k in range(len(m.times))
    ]

    h0 = float(m.spread[0])
    if h0 > 0:
        for eps in eps_list:
            measured = bounds.convergence_time(traj, eps)
            entry = {"eps": eps, "measured": measured}
            if cert:
                b = bounds.convergence_time_bound(cert, eps)
                entry["bound"] = b if math.isfinite(b) else None
            result.convergence.append(entry)
            lines.append(
                f"convergence eps={eps}: measured={measured} bound={entry.get('bound')}"
            )
    for kind, rep in reports.items():
        lines.append(f"check {kind}: {'ok' if rep.ok else f'{len(rep.violations)} violation(s)'}")
    lines.append(f"total violations: {result.violation_count()}")


def _bound_column(primary, traj, scenario, cert, bidir) -> list[float | None]:
    h0 = float(traj.spread()[0])
    elapsed = traj.times - traj.times[0]
    if primary == "grc" and cert:
        w_inf = dynamics.sup_norm(scenario.disturbance, float(traj.times[-1]))
        col = [bounds.grc_bound(cert, h0, float(t), w_inf) for t in elapsed]
        return [v if math.isfinite(v) else None for v in col]
    if primary == "bidir-girc" and bidir:
        return [
            bounds.bidir_girc_bound(bidir, h0, float(t), scenario.disturbance)
            for t in traj.times
        ]
    return [None] * len(traj.times)


def _verify_et(result, lines, traj, trace, scenario, cert, eps_list):
    config = trace.config
    tau0 = event_triggered.min_inter_event(trace)
    gaps_ok = all(
        gap <= config.timeout + 1e-9
        for i in range(1, trace.n_agents + 1)
        for gap in trace.inter_event_times(i)
    )
    drift_ok, worst_drift = _check_drift(traj, trace, config)
    hat_w = event_triggered.reconstruct_hat_w(traj, trace, scenario.signal)
    hat_w_sup = float(np.abs(hat_w).max()) if hat_w.size else 0.0
    residual = event_triggered.rewrite_residual(traj, trace, scenario.signal)

    label = "empirical"
    limits = None
    if cert is not None and cert.weight_low == 1.0 and cert.weight_high == 1.0:
        a0, theta0 = event_triggered.trigger_threshold_limits(cert)
        limits = {"threshold_scale_limit": a0, "threshold_rate_limit": theta0}
        if 0 < config.threshold_rate < theta0:
            try:
                if event_triggered.check_timeout_condition(
                    trace.n_agents, cert.diameter, a0, theta0,
                    config.threshold_rate, config.timeout,
                ):
                    label = "theorem-compliant"
            except PreconditionError:
                pass

    m = bounds.metrics(traj)
    result.metrics_rows = [
        [float(m.times[k]), float(m.max_state[k]), float(m.min_state[k]),
         float(m.spread[k]), None]
        for k in range(len(m.times))
    ]
    h0 = float(m.spread[0])
    if h0 > 0:
        for eps in eps_list:
            measured = bounds.convergence_time(traj, eps)
            result.convergence.append({"eps": eps, "measured": measured})

    checks = {
        "tau0_positive": tau0 > 0,
        "inter_event_within_timeout": gaps_ok,
        "drift_within_threshold": drift_ok,
        "rewrite_identity": residual <= 1e-8,
    }
    result.et_summary = {
        "tau0": tau0,
        "trigger_counts": [len(evs) for evs in trace.triggers],
        "clamped_crossings": trace.clamped_crossings,
        "worst_drift_excess": worst_drift,
        "rewrite_residual": residual,
        "hat_w_sup": hat_w_sup,
        "label": label,
        "limits": limits,
        "checks": checks,
        "final_spread": float(m.spread[-1]),
    }
    result.ok = result.ok and all(checks.values())
    lines.append(f"event-triggered run: {label}; tau0={tau0:.6g}; "
                 f"triggers={sum(len(e) for e in trace.triggers)}")
    for name, ok in checks.items():
        lines.append(f"check {name}: {'ok' if ok else 'FAILED'}")
    lines.append(f"final spread: {m.spread[-1]:.6g}")


def _check_drift(traj, trace, config) -> tuple[bool, float]:
    """Drift from the held value must stay within the threshold (plus the
    crossing tolerance) at every sample between an agent's triggers."""
    worst = -math.inf
    import bisect as _bisect

    starts = [[e.time for e in trace.triggers[i]] for i in range(trace.n_agents)]
    values = [[e.held_value for e in trace.triggers[i]] for i in range(trace.n_agents)]
    for k, t in enumerate(traj.times):
        delta = config.threshold(float(t))
        for i in range(trace.n_agents):
            pos = _bisect.bisect_right(starts[i], t) - 1
            drift = abs(traj.states[k, i] - values[i][max(pos, 0)])
            worst = max(worst, float(drift) - delta)
    return worst <= config.crossing_tol, worst


def run_sweep(config: ExperimentConfig) -> tuple[list[str], list[list]]:
    """Run the grid; one row per point, deterministic ordering.

    Returns (header, rows).  An empty grid yields the header and no rows.
    """
    keys = sorted(config.grid)
    header = [*keys, "convergence_time", "convergence_bound", "tau0", "violations", "ok"]
    rows: list[list] = []
    if not keys:
        return header, rows
    for combo in itertools.product(*(config.grid[k] for k in keys)):
        overrides = dict(zip(keys, combo))
        point = _apply_overrides(config, overrides)
        res = run_experiment(point)
        eps = overrides.get("eps", point.eps[0] if point.eps else None)
        conv = next((c for c in res.convergence if eps is None or c["eps"] == eps), None)
        rows.append([
            *combo,
            conv.get("measured") if conv else None,
            conv.get("bound") if conv else None,
            res.et_summary["tau0"] if res.et_summary else None,
            res.violation_count(),
            res.ok,
        ])
    return header, rows


def _apply_overrides(config: ExperimentConfig, overrides: Mapping) -> ExperimentConfig:
    source = dict(config.scenario_source)
    params = dict(source.get("params", {}))
    for key, alias in (("n", "n"), ("window", "window")):
        if key in overrides:
            if "generator" not in source:
                raise DomainError(f"sweeping '{key}' requires a generator-based scenario")
            params[alias] = overrides[key]
    if params:
        source["params"] = params
    et = config.et
    if et is not None:
        et = event_triggered.EtConfig(
            threshold_scale=overrides.get("threshold_scale", et.threshold_scale),
            threshold_rate=overrides.get("threshold_rate", et.threshold_rate),
            timeout=overrides.get("timeout", et.timeout),
            crossing_tol=et.crossing_tol,
        )
    return ExperimentConfig(
        mode=config.mode,
        scenario_source=source,
        step=config.step,
        eps=(float(overrides["eps"]),) if "eps" in overrides else config.eps,
        window_override=config.window_override,
        et=et,
        seed=int(overrides["seed"]) if "seed" in overrides else config.seed,
        grid={},
    )


def connectivity_report(signal: graph.SwitchingSignal, window: float | None = None) -> dict:
    """Connectivity facts about a signal: joint-graph structure, window
    checks and (for bidirectional signals) the greedy partition."""
    joint = graph.union_over(signal, 0.0, signal.horizon)
    report: dict[str, Any] = {
        "n": signal.n,
        "horizon": signal.horizon,
        "tau_d": signal.tau_d,
        "joint_arcs": sorted(list(a) for a in joint.arcs),
        "joint_centers": sorted(graph.find_centers(joint)),
        "joint_strongly_connected": graph.is_strongly_connected(joint),
        "joint_diameter": (
            graph.generalized_diameter(joint) if signal.n <= graph.DEFAULT_NODE_CAP else None
        ),
        "min_uqsc_window": graph.min_uqsc_window(signal),
        "all_bidirectional": signal.all_bidirectional,
    }
    if window is not None:
        report["uqsc_at_window"] = graph.check_uqsc(signal, window)
        report["usc_at_window"] = graph.check_usc(signal, window)
    if signal.all_bidirectional:
        part = graph.jc_partition(signal)
        report["partition_boundaries"] = list(part.boundaries)
        report["partition_complete"] = part.complete
        report["ijc_consistent"] = part.window_count() >= 1
    return report
