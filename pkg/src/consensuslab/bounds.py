"""Robustness certificates and bound verification for consensus trajectories.

All certificate constants are closed forms in the problem parameters
(agent count, joint-graph diameter, connectivity window, dwell time and the
weight-integral bounds).  Bound checks compare the sampled state spread
against the certified envelope; violations are data, not errors.

Floor/ceil arithmetic in the bound kernels runs on exact rationals of the
float inputs so that sample times landing on block boundaries never flip
to the wrong side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .dynamics import DisturbanceSpec, Trajectory, l1_norm, sup_norm
from .errors import DomainError, PreconditionError
from .graph import JcPartition, count_j


def _floor_ratio(t: float, block: float) -> int:
    if t <= 0:
        return 0
    return math.floor(Fraction(t) / Fraction(block))


def _ceil_ratio(t: float, block: float) -> int:
    if t <= 0:
        return 0
    return math.ceil(Fraction(t) / Fraction(block))


@dataclass(frozen=True)
class ConsensusMetrics:
    """Per-sample max state, min state and spread of a trajectory."""

    times: np.ndarray
    max_state: np.ndarray
    min_state: np.ndarray
    spread: np.ndarray


def metrics(traj: Trajectory) -> ConsensusMetrics:
    if len(traj.times) == 0:
        raise DomainError("empty trajectory")
    hi = traj.states.max(axis=1)
    lo = traj.states.min(axis=1)
    return ConsensusMetrics(times=traj.times, max_state=hi, min_state=lo, spread=hi - lo)


@dataclass(frozen=True)
class GrcCertificate:
    """Constants of the sup-norm robustness bound under joint connectivity.

    ``contraction`` is the guaranteed spread reduction per analysis block of
    length ``block_length``; ``sup_gain`` multiplies the disturbance sup
    norm.  The ``usc_*`` fields are the strongly-connected variant, which
    replaces the block length and forces the diameter to n-1.
    """

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
    sup_gain: float
    usc_block_length: float
    usc_dwell_count: int
    usc_contraction: float
    usc_contraction_log: float
    usc_decay_rate: float

    def pair(self, mode: str = "uqsc") -> tuple[float, float, float]:
        """(contraction, block length, decay rate) for the requested mode."""
        if mode == "uqsc":
            return self.contraction, self.block_length, self.decay_rate
        if mode == "usc":
            return self.usc_contraction, self.usc_block_length, self.usc_decay_rate
        raise DomainError(f"unknown mode {mode!r}")

    def to_dict(self) -> dict:
        def clean(v):
            return v if not isinstance(v, float) or math.isfinite(v) else None

        return {
            "n_agents": self.n_agents,
            "diameter": self.diameter,
            "window": self.window,
            "dwell": self.dwell,
            "weight_low": self.weight_low,
            "weight_high": self.weight_high,
            "extended_window": self.extended_window,
            "block_length": self.block_length,
            "dwell_count": self.dwell_count,
            "transfer_factor": self.transfer_factor,
            "contraction": self.contraction,
            "contraction_log": self.contraction_log,
            "decay_rate": self.decay_rate,
            "sup_gain": clean(self.sup_gain),
            "usc_block_length": self.usc_block_length,
            "usc_dwell_count": self.usc_dwell_count,
            "usc_contraction": self.usc_contraction,
            "usc_contraction_log": self.usc_contraction_log,
            "usc_decay_rate": self.usc_decay_rate,
        }


def grc_certificate(
    n: int, d0: int, window: float, tau_d: float, a_low: float, a_high: float
) -> GrcCertificate:
    """Derive every sup-norm certificate constant from the problem parameters."""
    if n < 2:
        raise DomainError(f"need at least 2 agents, got {n}")
    if d0 < 1:
        raise DomainError(f"diameter must be >= 1, got {d0}")
    if window <= 0 or tau_d <= 0:
        raise DomainError("window and dwell time must be positive")
    if not (0 < a_low <= a_high):
        raise DomainError("weight bounds need 0 < a_low <= a_high")

    extended = window + 2 * tau_d
    block = ((d0 - 1) * n + 1) * extended
    dwell_count = math.ceil(Fraction(((d0 - 1) * n + 1)) * Fraction(extended) / Fraction(tau_d))
    transfer = math.exp(-(n - 2) * a_high) * (1 - math.exp(-a_low))
    # The contraction can sit far below the float range for large n; the
    # log form is always finite and is the authoritative value.
    contraction_log = (
        -dwell_count * a_high * (d0 + 1) * (n - 1)
        - (n - 2) * d0 * a_high
        + d0 * math.log1p(-math.exp(-a_low))
        - math.log(2)
    )
    contraction = math.exp(contraction_log)
    # log1p keeps the rate positive when the contraction underflows 1-x.
    decay = -math.log1p(-contraction) / block
    gain = (2 + (4 * d0 + 1) / contraction) * block if contraction > 0 else math.inf

    usc_block = (n - 1) * extended
    usc_dwell = math.ceil(Fraction(n - 1) * Fraction(extended) / Fraction(tau_d))
    usc_contraction_log = (
        -usc_dwell * a_high * n * (n - 1)
        - (n - 2) * (n - 1) * a_high
        + (n - 1) * math.log1p(-math.exp(-a_low))
        - math.log(2)
    )
    usc_contraction = math.exp(usc_contraction_log)
    usc_decay = -math.log1p(-usc_contraction) / usc_block

    return GrcCertificate(
        n_agents=n,
        diameter=d0,
        window=window,
        dwell=tau_d,
        weight_low=a_low,
        weight_high=a_high,
        extended_window=extended,
        block_length=block,
        dwell_count=dwell_count,
        transfer_factor=transfer,
        contraction=contraction,
        contraction_log=contraction_log,
        decay_rate=decay,
        sup_gain=gain,
        usc_block_length=usc_block,
        usc_dwell_count=usc_dwell,
        usc_contraction=usc_contraction,
        usc_contraction_log=usc_contraction_log,
        usc_decay_rate=usc_decay,
    )


def grc_bound(cert: GrcCertificate, h0: float, t: float, w_inf: float) -> float:
    """Certified spread at elapsed time t: decaying initial spread plus a
    gain on the disturbance sup norm."""
    if t < 0:
        raise DomainError("elapsed time must be nonnegative")
    blocks = _floor_ratio(t, cert.block_length)
    return (1 - cert.contraction) ** blocks * h0 + cert.sup_gain * w_inf


def grc_bound_smooth(cert: GrcCertificate, h0: float, t: float, mode: str = "uqsc") -> float:
    """Exponential-in-time relaxation of the zero-noise block bound."""
    xi, _, decay = cert.pair(mode)
    return h0 * math.exp(-decay * t) / (1 - xi)


def girc_bound(
    cert: GrcCertificate,
    h0: float,
    t: float,
    w: DisturbanceSpec,
    sharpened: bool = False,
    quad_step: float = 1e-2,
) -> float:
    """Certified spread with the integral (L1) disturbance gain.

    The sharpened variant discounts disturbance mass from earlier blocks by
    the contraction accrued since; its kernel exponent is clamped at zero so
    the partial current block carries weight one, matching the derivation
    and keeping the sharpened bound below the plain one.
    """
    if t < 0:
        raise DomainError("elapsed time must be nonnegative")
    blocks = _floor_ratio(t, cert.block_length)
    gain = 4 * cert.diameter + 1
    beta = (1 - cert.contraction) ** blocks * h0
    if t == 0:
        return beta
    # Both forms integrate over the same block pieces so the sharpened
    # bound sits below the plain one termwise, exactly in floats.
    total = 0.0
    for j in range(1, _ceil_ratio(t, cert.block_length) + 1):
        lo = (j - 1) * cert.block_length
        hi = min(j * cert.block_length, t)
        kernel = (1 - cert.contraction) ** max(blocks - j, 0) if sharpened else 1.0
        total += kernel * l1_norm(w, lo, hi, quad_step)
    return beta + gain * total


@dataclass(frozen=True)
class BidirCertificate:
    """Constants of the integral bound for bidirectional switching graphs.

    Progress is counted in completed joint-connectivity windows rather than
    in time; ``block_contraction`` is the guaranteed spread reduction per
    ``diameter`` completed windows.
    """

    n_agents: int
    diameter: int
    weight_low: float
    weight_high: float
    hold_factor: float
    window_gain: float
    block_contraction: float
    integral_gain: float
    partition: JcPartition

    def to_dict(self) -> dict:
        return {
            "n_agents": self.n_agents,
            "diameter": self.diameter,
            "weight_low": self.weight_low,
            "weight_high": self.weight_high,
            "hold_factor": self.hold_factor,
            "window_gain": self.window_gain,
            "block_contraction": self.block_contraction,
            "integral_gain": self.integral_gain,
            "partition_boundaries": list(self.partition.boundaries),
            "partition_complete": self.partition.complete,
        }


def bidir_certificate(
    n: int, d0: int, a_low: float, a_high: float, partition: JcPartition
) -> BidirCertificate:
    if n < 2:
        raise DomainError(f"need at least 2 agents, got {n}")
    if d0 < 1:
        raise DomainError(f"diameter must be >= 1, got {d0}")
    if not (0 < a_low <= a_high):
        raise DomainError("weight bounds need 0 < a_low <= a_high")
    hold = math.exp(-(n - 1) * a_high)
    window_gain = math.exp(-2 * (2 * n - 3) * a_high) * (1 - math.exp(-2 * a_low))
    return BidirCertificate(
        n_agents=n,
        diameter=d0,
        weight_low=a_low,
        weight_high=a_high,
        hold_factor=hold,
        window_gain=window_gain,
        block_contraction=window_gain**d0,
        integral_gain=3 * d0 + 1,
        partition=partition,
    )


def _window_blocks(j: int, d0: int) -> tuple[int, int]:
    """floor(j/d0) and ceil(j/d0) for integer window counts."""
    return j // d0, -(-j // d0)


def bidir_girc_bound(
    cert: BidirCertificate,
    h0: float,
    t: float,
    w: DisturbanceSpec,
    quad_step: float = 1e-2,
) -> float:
    """Certified spread at time t under bidirectional communication.

    Both the decay term and the kernel inside the disturbance integral are
    driven by the number of completed connectivity windows before the
    respective instants.  Kernel exponents are clamped at zero (the current
    partial block carries weight one).
    """
    part = cert.partition
    if t > part.horizon + 1e-12:
        raise DomainError(f"time {t} beyond partition coverage {part.horizon}")
    blocks_t = count_j(part, t) // cert.diameter
    beta = (1 - cert.block_contraction) ** blocks_t * h0
    if t <= 0:
        return beta
    edges = [0.0, *(b for b in part.boundaries if b < t), t]
    total = 0.0
    for k, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        if hi - lo <= 0:
            continue
        _, ceil_blk = _window_blocks(k, cert.diameter)
        kernel = (1 - cert.block_contraction) ** max(blocks_t - ceil_blk, 0)
        total += kernel * l1_norm(w, lo, hi, quad_step)
    return beta + cert.integral_gain * total


def bidir_bound_smooth(cert: BidirCertificate, h0: float, t: float) -> float:
    """Zero-noise form: exponential in the completed-window count."""
    j = count_j(cert.partition, t)
    rate = -math.log1p(-cert.block_contraction) / cert.diameter
    return h0 * math.exp(-rate * j) / (1 - cert.block_contraction)


def convergence_time(traj: Trajectory, eps: float) -> float | None:
    """First sample time at which the spread ratio drops to eps."""
    if not (0 < eps < 1):
        raise DomainError(f"eps must lie in (0,1), got {eps}")
    spread = traj.spread()
    h0 = spread[0]
    if h0 == 0:
        raise PreconditionError("initial spread is zero; convergence time undefined")
    hits = np.nonzero(spread / h0 <= eps)[0]
    return float(traj.times[hits[0]]) if hits.size else None


def convergence_time_bound(cert: GrcCertificate, eps: float, mode: str = "uqsc") -> float:
    """Certified upper bound on the eps-convergence time (zero noise).

    Infinite when the certified decay rate underflows the float range.
    """
    if not (0 < eps < 1):
        raise DomainError(f"eps must lie in (0,1), got {eps}")
    xi, _, decay = cert.pair(mode)
    if decay == 0.0:
        return math.inf
    return (-math.log1p(-xi) + math.log(1 / eps)) / decay


@dataclass(frozen=True)
class Violation:
    time: float
    lhs: float
    rhs: float

    def to_dict(self) -> dict:
        return {"time": self.time, "lhs": self.lhs, "rhs": self.rhs}


@dataclass(frozen=True)
class BoundReport:
    """Outcome of checking one bound against every trajectory sample."""

    kind: str
    n_samples: int
    tolerance: float
    violations: tuple[Violation, ...]
    params: dict

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_samples": self.n_samples,
            "tolerance": self.tolerance,
            "ok": self.ok,
            "violations": [v.to_dict() for v in self.violations],
            "params": self.params,
        }


def default_tolerance(traj: Trajectory) -> float:
    """Additive slack separating genuine violations from discretization."""
    h0 = float(traj.spread()[0])
    return 1e-6 * max(1.0, h0) + 10.0 * traj.step**4


def _sample_l1_cumulative(traj: Trajectory, w: DisturbanceSpec) -> np.ndarray:
    """Cumulative integral of |w| along the sample grid (per-interval Simpson).

    Interval endpoints are nudged inward so one-sided limits of declared
    jumps are integrated on the correct side (jumps align with samples).
    """
    ts = traj.times
    h = ts[1:] - ts[:-1]
    mids = 0.5 * (ts[:-1] + ts[1:])
    f = lambda arr: np.abs(w.values(arr)).max(axis=1)
    fa, fm, fb = f(ts[:-1] + 1e-9 * h), f(mids), f(ts[1:] - 1e-9 * h)
    pieces = h / 6.0 * (fa + 4 * fm + fb)
    return np.concatenate([[0.0], np.cumsum(pieces)])


def _check_bound(
    traj: Trajectory,
    bound_at: Callable[[int, float], float],
    kind: str,
    tol: float,
    params: dict,
) -> BoundReport:
    spread = traj.spread()
    elapsed = traj.times - traj.times[0]
    violations = []
    for k, t in enumerate(elapsed):
        rhs_val = bound_at(k, float(t))
        if spread[k] > rhs_val + tol:
            violations.append(Violation(time=float(traj.times[k]), lhs=float(spread[k]), rhs=rhs_val))
    return BoundReport(
        kind=kind,
        n_samples=len(elapsed),
        tolerance=tol,
        violations=tuple(violations),
        params=params,
    )


def verify_grc(
    traj: Trajectory,
    cert: GrcCertificate,
    w: DisturbanceSpec,
    tol: float | None = None,
) -> BoundReport:
    """Check the sup-norm bound at every sample.

    Meaningful when the driving signal is jointly quasi-strongly connected
    with window at most ``cert.window``; expected outcome is zero violations.
    """
    h0 = float(traj.spread()[0])
    w_inf = sup_norm(w, float(traj.times[-1]))
    tol = default_tolerance(traj) if tol is None else tol
    one_minus = 1 - cert.contraction

    def bound_at(_k: int, t: float) -> float:
        return one_minus ** _floor_ratio(t, cert.block_length) * h0 + cert.sup_gain * w_inf

    return _check_bound(
        traj, bound_at, "grc", tol,
        {"h0": h0, "w_inf": w_inf, "certificate": cert.to_dict()},
    )


def verify_girc(
    traj: Trajectory,
    cert: GrcCertificate,
    w: DisturbanceSpec,
    sharpened: bool = False,
    tol: float | None = None,
) -> BoundReport:
    """Check the integral-gain bound (optionally sharpened) at every sample."""
    h0 = float(traj.spread()[0])
    tol = default_tolerance(traj) if tol is None else tol
    cum = _sample_l1_cumulative(traj, w)
    elapsed = traj.times - traj.times[0]
    gain = 4 * cert.diameter + 1
    one_minus = 1 - cert.contraction

    def cum_at(t: float) -> float:
        return float(np.interp(t, elapsed, cum))

    def bound_at(k: int, t: float) -> float:
        blocks = _floor_ratio(t, cert.block_length)
        beta = one_minus**blocks * h0
        if not sharpened:
            return beta + gain * cum[k]
        total = 0.0
        for j in range(1, _ceil_ratio(t, cert.block_length) + 1):
            lo, hi = (j - 1) * cert.block_length, min(j * cert.block_length, t)
            total += one_minus ** max(blocks - j, 0) * (cum_at(hi) - cum_at(lo))
        return beta + gain * total

    kind = "girc-sharpened" if sharpened else "girc"
    return _check_bound(traj, bound_at, kind, tol, {"h0": h0, "certificate": cert.to_dict()})


def verify_bidir_girc(
    traj: Trajectory,
    cert: BidirCertificate,
    w: DisturbanceSpec,
    tol: float | None = None,
) -> BoundReport:
    """Check the bidirectional integral bound at every sample.

    The partition is anchored at time zero, so the trajectory must start
    there too.
    """
    if abs(traj.times[0]) > 1e-12:
        raise PreconditionError("bidirectional bound check expects a trajectory starting at t=0")
    h0 = float(traj.spread()[0])
    tol = default_tolerance(traj) if tol is None else tol
    cum = _sample_l1_cumulative(traj, w)
    times = traj.times
    part = cert.partition
    one_minus = 1 - cert.block_contraction

    def cum_at(t: float) -> float:
        return float(np.interp(t, times, cum))

    def bound_at(_k: int, t: float) -> float:
        blocks_t = count_j(part, t) // cert.diameter
        beta = one_minus**blocks_t * h0
        if t <= 0:
            return beta
        edges = [0.0, *(b for b in part.boundaries if b < t), t]
        total = 0.0
        for idx, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
            if hi - lo <= 0:
                continue
            _, ceil_blk = _window_blocks(idx, cert.diameter)
            total += one_minus ** max(blocks_t - ceil_blk, 0) * (cum_at(hi) - cum_at(lo))
        return beta + cert.integral_gain * total

    return _check_bound(traj, bound_at, "bidir-girc", tol, {"h0": h0, "certificate": cert.to_dict()})


@dataclass(frozen=True)
class EnvelopePairViolation:
    t_from: float
    t_to: float
    side: str
    lhs: float
    rhs: float

    def to_dict(self) -> dict:
        return {"t_from": self.t_from, "t_to": self.t_to, "side": self.side,
                "lhs": self.lhs, "rhs": self.rhs}


@dataclass(frozen=True)
class EnvelopeReport:
    n_pairs: int
    tolerance: float
    violations: tuple[EnvelopePairViolation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"n_pairs": self.n_pairs, "tolerance": self.tolerance, "ok": self.ok,
                "violations": [v.to_dict() for v in self.violations]}


def verify_dini_envelopes(
    traj: Trajectory,
    w: DisturbanceSpec,
    tol: float = 1e-4,
    max_points: int = 200,
) -> EnvelopeReport:
    """Integrated max/min envelopes on a decimated grid of sample pairs.

    For s < t the max state may rise by at most the integral of |w| over
    [s, t] and the min state may fall by at most the same amount.
    """
    m = metrics(traj)
    cum = _sample_l1_cumulative(traj, w)
    stride = max(1, len(traj.times) // max_points)
    idx = list(range(0, len(traj.times), stride))
    if idx[-1] != len(traj.times) - 1:
        idx.append(len(traj.times) - 1)
    violations = []
    pairs = 0
    for a_pos, a in enumerate(idx):
        for b in idx[a_pos + 1:]:
            pairs += 1
            budget = cum[b] - cum[a]
            if m.max_state[b] > m.max_state[a] + budget + tol:
                violations.append(EnvelopePairViolation(
                    t_from=float(traj.times[a]), t_to=float(traj.times[b]), side="max",
                    lhs=float(m.max_state[b]), rhs=float(m.max_state[a] + budget)))
            if m.min_state[b] < m.min_state[a] - budget - tol:
                violations.append(EnvelopePairViolation(
                    t_from=float(traj.times[a]), t_to=float(traj.times[b]), side="min",
                    lhs=float(m.min_state[b]), rhs=float(m.min_state[a] - budget)))
    return EnvelopeReport(n_pairs=pairs, tolerance=tol, violations=tuple(violations))
