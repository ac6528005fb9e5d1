"""Thin-client command line interface.

Every verb talks to the HTTP service: either a remote one (``--server``)
or an in-process instance spun up on the fly, so batch runs need no
separate server.  The client only reads config files, posts requests and
writes artifact files; all computation happens behind the service API.

Verbs: run, sweep, certify, check-connectivity, serve.
Exit codes: 0 ok, 1 invariant violations, 2 config or transport errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    _write_atomic(path, "\n".join(lines) + "\n")


def _write_json(path: Path, payload) -> None:
    _write_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=600.0)
    from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app())


def _post(client, url: str, payload: dict) -> dict:
    resp = client.post(url, json=payload)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        raise SystemExit(f"error: service returned {resp.status_code}: {detail}")
    return resp.json()


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise SystemExit(f"error: config file {path} does not exist")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise SystemExit(f"error: config file {path} is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise SystemExit(f"error: config file {path} must hold a JSON object")
    # Resolve scenario file references client-side so the service stays
    # filesystem-free.
    scenario = doc.get("scenario")
    if isinstance(scenario, dict) and "file" in scenario:
        ref = Path(scenario["file"])
        if not ref.is_absolute():
            ref = p.parent / ref
        if not ref.exists():
            raise SystemExit(f"error: scenario file {ref} does not exist")
        try:
            doc["scenario"] = {"inline": json.loads(ref.read_text())}
        except json.JSONDecodeError as exc:
            raise SystemExit(f"error: scenario file {ref} is not valid JSON: {exc}")
    return doc


def _apply_overrides(doc: dict, args) -> dict:
    if getattr(args, "mode", None):
        doc["mode"] = args.mode
    if getattr(args, "seed", None) is not None:
        doc["seed"] = args.seed
    if getattr(args, "eps", None):
        doc.setdefault("certificate", {})["eps"] = [float(e) for e in args.eps.split(",")]
    if getattr(args, "step", None) is not None:
        doc.setdefault("integrator", {})["step"] = args.step
    return doc


def _write_run_artifacts(payload: dict, out: Path) -> None:
    _write_json(out / "certificate.json", {
        "certificate": payload.get("certificate"),
        "bidir_certificate": payload.get("bidir_certificate"),
    })
    _write_json(out / "report.json", {
        "ok": payload["ok"],
        "scenario_name": payload["scenario_name"],
        "mode": payload["mode"],
        "guarantees_verified": payload["guarantees_verified"],
        "reports": payload.get("reports", {}),
        "convergence": payload.get("convergence", []),
        "et_summary": payload.get("et_summary"),
    })
    _write_atomic(out / "summary.txt", payload["summary"] + "\n")
    traj = payload.get("trajectory")
    if traj:
        n = len(traj["states"][0]) if traj["states"] else 0
        header = ["t", *(f"x_{i}" for i in range(1, n + 1)), *(f"w_{i}" for i in range(1, n + 1))]
        rows = (
            [t, *xs, *ws]
            for t, xs, ws in zip(traj["times"], traj["states"], traj["disturbances"])
        )
        _write_csv(out / "trajectory.csv", header, rows)
    if payload.get("metrics_rows"):
        _write_csv(out / "metrics.csv", ["t", "hbar", "ell", "H", "bound"], payload["metrics_rows"])
    if payload.get("et_trigger_rows"):
        _write_atomic(out / "event_trace.csv", "\n".join(payload["et_trigger_rows"]) + "\n")
    if payload.get("et_delivery_rows"):
        _write_atomic(out / "deliveries.csv", "\n".join(payload["et_delivery_rows"]) + "\n")


def cmd_run(args) -> int:
    doc = _apply_overrides(_load_config(args.config), args)
    with _client(args.server) as client:
        payload = _post(client, "/run", {"config": doc})
    out = Path(args.out)
    _write_run_artifacts(payload, out)
    print(payload["summary"])
    print(f"artifacts written to {out}")
    return 0 if payload["ok"] else 1


def cmd_certify(args) -> int:
    doc = _apply_overrides(_load_config(args.config), args)
    doc["mode"] = "certify_only"
    with _client(args.server) as client:
        payload = _post(client, "/run", {"config": doc})
    out = Path(args.out)
    _write_json(out / "certificate.json", {
        "certificate": payload.get("certificate"),
        "bidir_certificate": payload.get("bidir_certificate"),
    })
    _write_atomic(out / "summary.txt", payload["summary"] + "\n")
    print(payload["summary"])
    return 0 if payload["ok"] else 1


def cmd_sweep(args) -> int:
    doc = _apply_overrides(_load_config(args.config), args)
    if not doc.get("grid"):
        print("warning: config has an empty grid; output will hold only the header",
              file=sys.stderr)
    with _client(args.server) as client:
        payload = _post(client, "/sweep", {"config": doc})
    out = Path(args.out)
    _write_csv(out / "sweep.csv", payload["header"], payload["rows"])
    print(f"sweep: {len(payload['rows'])} grid point(s) -> {out / 'sweep.csv'}")
    return 0


def cmd_check_connectivity(args) -> int:
    doc = _apply_overrides(_load_config(args.config), args)
    scenario = doc.get("scenario", {})
    with _client(args.server) as client:
        if "generator" in scenario:
            scen_doc = _post(client, "/scenarios/generate", {
                "name": scenario["generator"],
                "params": scenario.get("params", {}),
            })
        elif "inline" in scenario:
            scen_doc = scenario["inline"]
        else:
            raise SystemExit("error: config field 'scenario' must carry 'inline', 'file' or 'generator'")
        signal = scen_doc.get("signal", scen_doc)  # accept a bare signal document too
        payload = _post(client, "/connectivity", {"signal": signal, "window": args.window})
    out = Path(args.out)
    _write_json(out / "connectivity.json", payload)
    print(f"n={payload['n']} joint_centers={payload['joint_centers']} "
          f"joint_diameter={payload['joint_diameter']}")
    print(f"min_uqsc_window={payload['min_uqsc_window']} "
          f"strongly_connected={payload['joint_strongly_connected']}")
    if payload.get("partition_boundaries") is not None:
        print(f"partition windows closed: {len(payload['partition_boundaries'])}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consensuslab",
        description="Noisy-consensus simulation and certificate checking (thin client).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", default="out", help="artifact output directory")
        p.add_argument("--server", default=None,
                       help="base URL of a running service; default runs in-process")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--eps", default=None, help="comma-separated convergence ratios")
        p.add_argument("--mode", default=None, choices=["simulate", "event_triggered", "certify_only"])
        p.add_argument("--step", type=float, default=None, help="integrator step override")

    p_run = sub.add_parser("run", help="simulate a scenario and verify its bounds")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a parameter grid, one CSV row per point")
    common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_cert = sub.add_parser("certify", help="compute certificates without simulating")
    common(p_cert)
    p_cert.set_defaults(func=cmd_certify)

    p_conn = sub.add_parser("check-connectivity", help="joint-connectivity facts of a signal")
    common(p_conn)
    p_conn.add_argument("--window", type=float, default=None, help="window to test")
    p_conn.set_defaults(func=cmd_check_connectivity)

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 2
        raise


if __name__ == "__main__":
    sys.exit(main())
