"""Pydantic request/response models for the HTTP service."""
from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class Health(BaseModel):
    status: str
    version: str


class CertifyRequest(BaseModel):
    n: int = Field(..., ge=2, description="agent count")
    d0: int = Field(..., ge=1, description="generalized diameter of the joint graph")
    window: float = Field(..., gt=0, description="joint-connectivity window length")
    tau_d: float = Field(..., gt=0, description="dwell time")
    a_low: float = Field(1.0, gt=0, description="lower bound on dwell-window weight integrals")
    a_high: float = Field(1.0, gt=0, description="upper bound on dwell-window weight integrals")
    eps: list[float] = Field(default_factory=lambda: [0.5, 0.1, 0.01])


class CertificateOut(BaseModel):
    n_agents: int
    diameter: int
    window: float
    dwell: float
    weight_low: float
    weight_high: float
    extended_window: float
    block_length: float
    dwell_count: int
    transfer_factor: float
    contraction: float
    contraction_log: float
    decay_rate: float
    sup_gain: Optional[float]
    usc_block_length: float
    usc_dwell_count: int
    usc_contraction: float
    usc_contraction_log: float
    usc_decay_rate: float
    convergence_time_bounds: dict[str, Optional[float]] = Field(default_factory=dict)


class BidirCertifyRequest(BaseModel):
    signal: dict
    d0: Optional[int] = Field(None, ge=1)


class BidirCertificateOut(BaseModel):
    n_agents: int
    diameter: int
    weight_low: float
    weight_high: float
    hold_factor: float
    window_gain: float
    block_contraction: float
    integral_gain: float
    partition_boundaries: list[float]
    partition_complete: bool


class ConnectivityRequest(BaseModel):
    signal: dict
    window: Optional[float] = Field(None, gt=0)


class ConnectivityOut(BaseModel):
    n: int
    horizon: float
    tau_d: float
    joint_arcs: list[list[int]]
    joint_centers: list[int]
    joint_strongly_connected: bool
    joint_diameter: Optional[int]
    min_uqsc_window: Optional[float]
    all_bidirectional: bool
    uqsc_at_window: Optional[bool] = None
    usc_at_window: Optional[bool] = None
    partition_boundaries: Optional[list[float]] = None
    partition_complete: Optional[bool] = None
    ijc_consistent: Optional[bool] = None


class GenerateRequest(BaseModel):
    name: str
    params: dict = Field(default_factory=dict)


class RunRequest(BaseModel):
    config: dict


class TrajectoryPayload(BaseModel):
    times: list[float]
    states: list[list[float]]
    disturbances: list[list[float]]


class RunResponse(BaseModel):
    scenario_name: str
    mode: str
    ok: bool
    summary: str
    guarantees_verified: dict[str, bool]
    certificate: Optional[dict] = None
    bidir_certificate: Optional[dict] = None
    reports: dict[str, dict] = Field(default_factory=dict)
    convergence: list[dict] = Field(default_factory=list)
    primary_bound: Optional[str] = None
    metrics_rows: list[list[Optional[float]]] = Field(default_factory=list)
    et_summary: Optional[dict] = None
    trajectory: Optional[TrajectoryPayload] = None
    et_trigger_rows: Optional[list[str]] = None
    et_delivery_rows: Optional[list[str]] = None


class SweepResponse(BaseModel):
    header: list[str]
    rows: list[list[Any]]
