"""Distributed event-triggered coordination over a switching graph.

Each agent broadcasts its state value sampled at its own trigger instants.
An agent re-triggers when its drift from the held value reaches a decaying
threshold, or after a timeout, whichever comes first.  Between triggers the
control input is frozen, so states move along straight lines and both the
integration and the threshold-crossing detection are exact up to the
crossing tolerance.

Within one instant, events settle in a fixed order: trigger reads happen
against pre-trigger held values (ascending agent index), then held values
update, then a coinciding topology switch activates, then fresh broadcasts
are delivered to currently adjacent receivers.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .bounds import GrcCertificate
from .errors import DomainError, NumericalError, PreconditionError
from .graph import Digraph, SwitchingSignal

_EPS = 1e-12


@dataclass(frozen=True)
class EtConfig:
    """Trigger rule parameters.

    The threshold is ``threshold_scale * exp(-threshold_rate * t)`` in
    absolute time; ``timeout`` forces a trigger when the threshold was never
    reached; ``crossing_tol`` is the bisection resolution for locating a
    threshold crossing, and also the floor on accepted inter-event times.
    """

    threshold_scale: float
    threshold_rate: float
    timeout: float
    crossing_tol: float = 1e-9

    def __post_init__(self):
        if self.threshold_scale <= 0:
            raise DomainError("threshold scale must be positive")
        if self.threshold_rate < 0:
            raise DomainError("threshold rate must be nonnegative")
        if self.timeout <= 0:
            raise DomainError("timeout must be positive")
        if self.crossing_tol <= 0:
            raise DomainError("crossing tolerance must be positive")

    def threshold(self, t: float) -> float:
        return self.threshold_scale * math.exp(-self.threshold_rate * t)

    def to_dict(self) -> dict:
        return {
            "threshold_scale": self.threshold_scale,
            "threshold_rate": self.threshold_rate,
            "timeout": self.timeout,
            "crossing_tol": self.crossing_tol,
        }

    @classmethod
    def from_dict(cls, doc) -> "EtConfig":
        return cls(
            threshold_scale=float(doc["threshold_scale"]),
            threshold_rate=float(doc["threshold_rate"]),
            timeout=float(doc["timeout"]),
            crossing_tol=float(doc.get("crossing_tol", 1e-9)),
        )


@dataclass
class StoredMessage:
    source_trigger_time: float
    value: float
    last_contact: float


@dataclass
class AgentTriggerState:
    """Mutable per-agent protocol state used by the simulator."""

    agent: int
    trigger_times: list[float]
    held_value: float
    accumulated_neighbors: set[int]
    current_neighbors: frozenset[int]
    message_store: dict[int, StoredMessage]


def control_input(state: AgentTriggerState) -> float:
    """Control value frozen at the agent's latest trigger.

    Sums, over the neighbors accumulated in the last inter-trigger window,
    the stored broadcast value minus the agent's own held value.  Zero when
    no neighbor ever contributed.
    """
    total = 0.0
    for j in state.current_neighbors:
        total += state.message_store[j].value - state.held_value
    return total


@dataclass(frozen=True)
class TriggerEvent:
    agent: int
    index: int
    time: float
    held_value: float
    cause: str  # "initial" | "threshold" | "timeout"


@dataclass(frozen=True)
class WindowRecord:
    """One inter-trigger window of one agent and the control applied on it."""

    agent: int
    index: int
    start: float
    end: float
    neighbors: frozenset[int]
    control: float
    messages: dict[int, tuple[float, float]]  # j -> (source trigger time, value)


@dataclass(frozen=True)
class Delivery:
    time: float
    source: int
    target: int
    source_trigger_time: float
    value: float


@dataclass(frozen=True)
class EtTrace:
    """Full record of one event-triggered run."""

    n_agents: int
    config: EtConfig
    triggers: tuple[tuple[TriggerEvent, ...], ...]
    windows: tuple[tuple[WindowRecord, ...], ...]
    deliveries: tuple[Delivery, ...]
    clamped_crossings: int
    final_time: float

    def inter_event_times(self, agent: int) -> list[float]:
        ts = [e.time for e in self.triggers[agent - 1]]
        return [b - a for a, b in zip(ts[:-1], ts[1:])]

    def running_min_profile(self) -> list[tuple[float, float]]:
        """Running minimum of inter-event times, keyed by trigger instant."""
        gaps = sorted(
            (self.triggers[i][k].time, self.triggers[i][k].time - self.triggers[i][k - 1].time)
            for i in range(self.n_agents)
            for k in range(1, len(self.triggers[i]))
        )
        profile = []
        best = math.inf
        for t, gap in gaps:
            best = min(best, gap)
            profile.append((t, best))
        return profile

    def trigger_csv_rows(self) -> Iterable[str]:
        yield "agent,k,trigger_time,held_value,cause"
        for events in self.triggers:
            for e in events:
                yield f"{e.agent},{e.index},{format(e.time, '.17g')},{format(e.held_value, '.17g')},{e.cause}"

    def delivery_csv_rows(self) -> Iterable[str]:
        yield "time,from,to,from_trigger_time,value"
        for d in self.deliveries:
            yield (
                f"{format(d.time, '.17g')},{d.source},{d.target},"
                f"{format(d.source_trigger_time, '.17g')},{format(d.value, '.17g')}"
            )


def min_inter_event(trace: EtTrace) -> float:
    """Smallest realized gap between consecutive triggers of any agent."""
    best = math.inf
    for i in range(1, trace.n_agents + 1):
        gaps = trace.inter_event_times(i)
        if gaps:
            best = min(best, min(gaps))
    if not math.isfinite(best):
        raise PreconditionError("no agent triggered more than once")
    return best


def _solve_crossing(
    config: EtConfig, t_k: float, speed: float, clamped: list[int]
) -> tuple[float, str]:
    """Earliest instant in (t_k, t_k + timeout] where |u|(t - t_k) meets the
    threshold, else the timeout.  The drift is linear and the threshold
    decreasing, so the gap function is strictly increasing and bisection on
    the bracket is exact to crossing_tol.  Returns the left bracket end so
    the drift never exceeds the threshold at the reported instant."""
    deadline = t_k + config.timeout
    if speed <= 0.0:
        return deadline, "timeout"

    def gap(t: float) -> float:
        return speed * (t - t_k) - config.threshold(t)

    if gap(deadline) <= 0.0:
        return deadline, "timeout"
    lo, hi = t_k, deadline
    while hi - lo > config.crossing_tol:
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    if lo - t_k < config.crossing_tol:
        clamped.append(1)
        lo = t_k + config.crossing_tol
    return lo, "threshold"


def simulate_et(
    signal: SwitchingSignal,
    config: EtConfig,
    x0: Sequence[float],
    horizon: float | None = None,
    sample_step: float | None = None,
):
    """Run the protocol; returns (Trajectory, EtTrace).

    At start every agent triggers and the initial states are mutually known
    to current neighbors.  States advance exactly (piecewise linear); the
    recorded samples include every trigger and switch instant plus filler
    points at the sampling step.
    """
    from .dynamics import Trajectory  # local import to avoid a cycle

    horizon = signal.horizon if horizon is None else horizon
    if horizon > signal.horizon:
        raise DomainError(f"horizon {horizon} beyond signal horizon {signal.horizon}")
    n = signal.n
    x = np.asarray(x0, dtype=float)
    if x.shape != (n,):
        raise DomainError(f"initial state has shape {x.shape}, expected ({n},)")
    if sample_step is None:
        sample_step = min(signal.tau_d / 20.0, 1e-2, config.timeout / 4.0)

    g = signal.graph_at(0.0)
    states: list[AgentTriggerState] = []
    triggers: list[list[TriggerEvent]] = [[] for _ in range(n)]
    windows: list[list[WindowRecord]] = [[] for _ in range(n)]
    open_windows: list[dict] = []
    deliveries: list[Delivery] = []
    clamped: list[int] = []
    u = np.zeros(n)
    next_check: list[tuple[float, str]] = [(math.inf, "timeout")] * n

    for i in range(1, n + 1):
        nb = frozenset(g.neighbors_of(i))
        store = {j: StoredMessage(0.0, float(x[j - 1]), 0.0) for j in nb}
        st = AgentTriggerState(
            agent=i,
            trigger_times=[0.0],
            held_value=float(x[i - 1]),
            accumulated_neighbors=set(nb),
            current_neighbors=nb,
            message_store=store,
        )
        states.append(st)
        triggers[i - 1].append(TriggerEvent(i, 0, 0.0, st.held_value, "initial"))
        for j in nb:
            deliveries.append(Delivery(0.0, j, i, 0.0, float(x[j - 1])))
        u[i - 1] = control_input(st)
        open_windows.append({
            "start": 0.0,
            "neighbors": nb,
            "control": u[i - 1],
            "messages": {j: (0.0, store[j].value) for j in nb},
        })
        st.accumulated_neighbors = set(nb)
        next_check[i - 1] = _solve_crossing(config, 0.0, abs(u[i - 1]), clamped)

    switch_queue = [t for t in signal.switch_times if 0.0 < t < horizon]
    switch_pos = 0
    sample_times = [0.0]
    sample_states = [x.copy()]
    now = 0.0

    def advance_to(t: float) -> None:
        nonlocal now, x
        if t - now <= _EPS:
            return
        fillers = max(0, math.ceil((t - now) / sample_step) - 1)
        for m in range(1, fillers + 1):
            tm = now + (t - now) * m / (fillers + 1)
            sample_times.append(tm)
            sample_states.append(x + u * (tm - now))
        x = x + u * (t - now)
        if not np.all(np.isfinite(x)):
            raise NumericalError("non-finite state in event-triggered run", t)
        now = t
        sample_times.append(t)
        sample_states.append(x.copy())

    def close_window(i: int, end: float) -> None:
        ow = open_windows[i - 1]
        windows[i - 1].append(WindowRecord(
            agent=i,
            index=len(windows[i - 1]),
            start=ow["start"],
            end=end,
            neighbors=ow["neighbors"],
            control=ow["control"],
            messages=ow["messages"],
        ))

    def record_delivery(i: int, j: int, trig: float, value: float, t: float) -> None:
        st = states[i - 1]
        prev = st.message_store.get(j)
        if prev is None or prev.source_trigger_time != trig or prev.value != value:
            deliveries.append(Delivery(t, j, i, trig, value))
        st.message_store[j] = StoredMessage(trig, value, t)

    while True:
        t_switch = switch_queue[switch_pos] if switch_pos < len(switch_queue) else math.inf
        t_trig = min(nc[0] for nc in next_check)
        t_next = min(t_switch, t_trig)
        if t_next >= horizon - _EPS:
            advance_to(horizon)
            break
        advance_to(t_next)

        trig_agents = [i for i in range(1, n + 1) if next_check[i - 1][0] <= t_next + _EPS]
        is_switch = t_switch <= t_next + _EPS
        g_before = g

        # Reads against the pre-trigger snapshot: refresh each triggering
        # agent's store from neighbors adjacent right up to this instant.
        snap_held = [st.held_value for st in states]
        snap_trig = [st.trigger_times[-1] for st in states]
        for i in trig_agents:
            st = states[i - 1]
            for j in g_before.neighbors_of(i):
                st.message_store[j] = StoredMessage(snap_trig[j - 1], snap_held[j - 1], t_next)

        if is_switch:
            switch_pos += 1
            g = signal.graph_at(t_next)

        for i in trig_agents:
            st = states[i - 1]
            cause = next_check[i - 1][1]
            close_window(i, t_next)
            nhat = frozenset(st.accumulated_neighbors)
            st.current_neighbors = nhat
            st.held_value = float(x[i - 1])
            st.trigger_times.append(t_next)
            k = len(st.trigger_times) - 1
            triggers[i - 1].append(TriggerEvent(i, k, t_next, st.held_value, cause))
            u[i - 1] = control_input(st)
            open_windows[i - 1] = {
                "start": t_next,
                "neighbors": nhat,
                "control": u[i - 1],
                "messages": {j: (st.message_store[j].source_trigger_time,
                                 st.message_store[j].value) for j in nhat},
            }
            st.accumulated_neighbors = set(g.neighbors_of(i))
            next_check[i - 1] = _solve_crossing(config, t_next, abs(u[i - 1]), clamped)

        if is_switch:
            for i in range(1, n + 1):
                nb = g.neighbors_of(i)
                states[i - 1].accumulated_neighbors |= nb
                for j in nb:
                    src = states[j - 1]
                    record_delivery(i, j, src.trigger_times[-1], src.held_value, t_next)
        else:
            # Fresh broadcasts reach currently adjacent receivers at once.
            for j in trig_agents:
                src = states[j - 1]
                for i in range(1, n + 1):
                    if j in g.neighbors_of(i):
                        record_delivery(i, j, src.trigger_times[-1], src.held_value, t_next)

    for i in range(1, n + 1):
        close_window(i, horizon)

    times_arr = np.asarray(sample_times)
    traj = Trajectory(
        times=times_arr,
        states=np.asarray(sample_states),
        disturbances=np.zeros((len(sample_times), n)),
        step=sample_step,
        method="event-exact",
        t0=0.0,
        x0=tuple(float(v) for v in np.asarray(x0, dtype=float)),
    )
    trace = EtTrace(
        n_agents=n,
        config=config,
        triggers=tuple(tuple(evs) for evs in triggers),
        windows=tuple(tuple(ws) for ws in windows),
        deliveries=tuple(deliveries),
        clamped_crossings=len(clamped),
        final_time=horizon,
    )
    return traj, trace


def _window_at(records: Sequence[WindowRecord], t: float) -> WindowRecord:
    starts = [w.start for w in records]
    k = bisect.bisect_right(starts, t) - 1
    return records[max(k, 0)]


def reconstruct_hat_w(traj, trace: EtTrace, signal: SwitchingSignal) -> np.ndarray:
    """Disturbance-equivalent of the protocol's staleness at every sample.

    Rewrites the applied piecewise-constant control as an ideal coupling
    term plus a residual: per accumulated neighbor, the difference of drift
    errors plus the gap between the stored broadcast and the sender's
    current held value.  Shape (samples, agents).
    """
    if trace.n_agents != traj.n_agents or abs(trace.final_time - traj.times[-1]) > 1e-9:
        raise DomainError("trace and trajectory do not belong to the same run")
    if signal.n != trace.n_agents:
        raise DomainError("signal does not match the run")
    n = trace.n_agents
    out = np.zeros((len(traj.times), n))
    held_starts = [[e.time for e in trace.triggers[i]] for i in range(n)]
    held_values = [[e.held_value for e in trace.triggers[i]] for i in range(n)]

    def held_at(agent: int, t: float) -> float:
        k = bisect.bisect_right(held_starts[agent - 1], t) - 1
        return held_values[agent - 1][max(k, 0)]

    for s, t in enumerate(traj.times):
        xs = traj.states[s]
        for i in range(1, n + 1):
            win = _window_at(trace.windows[i - 1], float(t))
            e_i = xs[i - 1] - held_at(i, float(t))
            total = 0.0
            for j in win.neighbors:
                e_j = xs[j - 1] - held_at(j, float(t))
                stored = win.messages[j][1]
                total += (e_i - e_j) + (stored - held_at(j, float(t)))
            out[s, i - 1] = total
    return out


def rewrite_residual(traj, trace: EtTrace, signal: SwitchingSignal) -> float:
    """Largest gap between the applied control and its coupling-plus-residual
    rewrite over all samples and agents (an algebraic identity, so the gap
    should sit at rounding level)."""
    hat_w = reconstruct_hat_w(traj, trace, signal)
    worst = 0.0
    for s, t in enumerate(traj.times):
        xs = traj.states[s]
        for i in range(1, trace.n_agents + 1):
            win = _window_at(trace.windows[i - 1], float(t))
            coupling = sum(xs[j - 1] - xs[i - 1] for j in win.neighbors)
            worst = max(worst, abs(win.control - (coupling + hat_w[s, i - 1])))
    return float(worst)


def trigger_threshold_limits(cert: GrcCertificate) -> tuple[float, float]:
    """Admissible threshold scale floor and rate ceiling from a unit-weight
    certificate: the scale limit is the inverse surviving fraction per
    block, the rate limit is the certified decay rate."""
    if not (cert.weight_low == 1.0 and cert.weight_high == 1.0):
        raise PreconditionError("threshold limits are defined for unit-weight certificates")
    a0 = 1.0 / (1.0 - cert.contraction)
    return a0, cert.decay_rate


def check_timeout_condition(
    n: int, d0: int, a0: float, theta0: float, theta: float, timeout: float
) -> bool:
    """Literal evaluation of the smallness condition on the timeout.

    The left-hand side grows monotonically with the timeout, so a failure
    at one value implies failure at every larger one.
    """
    if not 0 < theta < theta0:
        raise PreconditionError(f"need 0 < theta < theta0, got theta={theta}, theta0={theta0}")
    if timeout <= 0:
        raise DomainError("timeout must be positive")
    lhs = (
        timeout
        * math.exp(2 * theta * timeout)
        * (n - 1)
        * ((n - 1) * (4 * d0 + 1) * a0**2 / (theta0 - theta) + 1)
    )
    return lhs < 0.5
