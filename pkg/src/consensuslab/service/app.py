"""FastAPI service wrapping the core package.

Every endpoint is a pure function of its request body; nothing is stored
server side, so the service scales to concurrent clients trivially.
"""
from __future__ import annotations

import math

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, bounds, graph, pipeline, scenarios
from ..errors import DomainError, NumericalError, PreconditionError
from . import schemas


def create_app() -> FastAPI:
    app = FastAPI(title="consensuslab", version=__version__)

    @app.exception_handler(DomainError)
    @app.exception_handler(PreconditionError)
    async def _bad_request(request: Request, exc: Exception) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(NumericalError)
    async def _numerical(request: Request, exc: Exception) -> JSONResponse:
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.Health)
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/certify", response_model=schemas.CertificateOut)
    def certify(req: schemas.CertifyRequest) -> dict:
        cert = bounds.grc_certificate(
            req.n, req.d0, req.window, req.tau_d, req.a_low, req.a_high
        )
        out = cert.to_dict()
        ct = {str(eps): bounds.convergence_time_bound(cert, eps) for eps in req.eps}
        out["convergence_time_bounds"] = {
            k: (v if math.isfinite(v) else None) for k, v in ct.items()
        }
        return out

    @app.post("/certify/bidir", response_model=schemas.BidirCertificateOut)
    def certify_bidir(req: schemas.BidirCertifyRequest) -> dict:
        signal = graph.SwitchingSignal.from_dict(req.signal)
        d0 = req.d0
        if d0 is None:
            joint = graph.union_over(signal, 0.0, signal.horizon)
            d0 = graph.generalized_diameter(joint)
        # weight bounds default to the dwell-time integral of unit weights
        partition = graph.jc_partition(signal)
        cert = bounds.bidir_certificate(signal.n, d0, signal.tau_d, signal.tau_d, partition)
        return cert.to_dict()

    @app.post("/connectivity", response_model=schemas.ConnectivityOut)
    def connectivity(req: schemas.ConnectivityRequest) -> dict:
        signal = graph.SwitchingSignal.from_dict(req.signal)
        return pipeline.connectivity_report(signal, req.window)

    @app.post("/scenarios/generate")
    def generate(req: schemas.GenerateRequest) -> dict:
        return scenarios.generate(req.name, req.params).to_document()

    @app.post("/run", response_model=schemas.RunResponse)
    def run(req: schemas.RunRequest) -> dict:
        config = pipeline.ExperimentConfig.from_dict(req.config)
        return pipeline.run_experiment(config).to_payload()

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def sweep(req: schemas.RunRequest) -> dict:
        config = pipeline.ExperimentConfig.from_dict(req.config)
        header, rows = pipeline.run_sweep(config)
        return {"header": header, "rows": rows}

    return app
