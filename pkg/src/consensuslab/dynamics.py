"""Noisy consensus dynamics over a switching signal.

The state obeys, between switches,

    dx_i/dt = sum_{j in N_i} a_ij(t) (x_j - x_i) + w_i(t)

with per-arc weight functions a_ij and a disturbance vector w.  Weight
functions factor as a shared time profile times a per-arc scale, which keeps
the right-hand side a cheap matrix product.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError, NumericalError
from .graph import Arc, Digraph, SwitchingSignal

WEIGHT_KINDS = ("constant", "abs-sin", "piecewise-table")
DISTURBANCE_KINDS = (
    "zero",
    "constant-vector",
    "bounded-sinusoid",
    "exp-vanishing",
    "integrable-decay",
    "split-adversarial",
    "table",
)

_QUAD_STEP = 1e-2


@dataclass(frozen=True)
class WeightSpec:
    """Arc weight family a_ij(t) = scale_ij * profile(t).

    kind selects the shared profile: "constant" (profile 1), "abs-sin"
    (|sin t|) or "piecewise-table" (a right-continuous step function given
    by table_times/table_values, holding its last value).  a_low/a_high are
    the *declared* bounds on every window integral of a_ij over one dwell
    time; validate_a2 measures whether the declaration holds.
    """

    kind: str = "constant"
    scale: float = 1.0
    per_arc: Mapping[Arc, float] = field(default_factory=dict)
    a_low: float = 1.0
    a_high: float = 1.0
    table_times: tuple[float, ...] = ()
    table_values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise DomainError(f"unknown weight kind {self.kind!r}")
        if self.scale < 0 or any(v < 0 for v in self.per_arc.values()):
            raise DomainError("weight scales must be nonnegative")
        if not (0 < self.a_low <= self.a_high):
            raise DomainError("declared bounds need 0 < a_low <= a_high")
        if self.kind == "piecewise-table":
            if len(self.table_times) != len(self.table_values) or not self.table_times:
                raise DomainError("piecewise-table needs matching, nonempty tables")
            if list(self.table_times) != sorted(self.table_times):
                raise DomainError("table times must be increasing")
            if any(v < 0 for v in self.table_values):
                raise DomainError("table values must be nonnegative")

    def arc_scale(self, arc: Arc) -> float:
        return float(self.per_arc.get(arc, self.scale))

    def profile(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.ones_like(t)
        if self.kind == "abs-sin":
            return np.abs(np.sin(t))
        idx = np.clip(np.searchsorted(self.table_times, t, side="right") - 1, 0, None)
        return np.asarray(self.table_values, dtype=float)[idx]

    def value(self, arc: Arc, t: float) -> float:
        return self.arc_scale(arc) * float(self.profile(t))

    def jump_times(self, t1: float, t2: float) -> list[float]:
        """Profile discontinuities inside (t1, t2): integration steps align here."""
        if self.kind != "piecewise-table":
            return []
        return [t for t in self.table_times if t1 < t < t2]

    def smooth_breaks(self, t1: float, t2: float) -> list[float]:
        """Kinks/jumps inside (t1, t2) that quadrature intervals must not straddle."""
        if self.kind == "abs-sin":
            k0 = math.ceil(t1 / math.pi)
            return [k * math.pi for k in range(k0, math.floor(t2 / math.pi) + 1)
                    if t1 < k * math.pi < t2]
        return self.jump_times(t1, t2)

    def to_dict(self) -> dict:
        doc = {
            "kind": self.kind,
            "scale": self.scale,
            "per_arc": [[list(arc), v] for arc, v in sorted(self.per_arc.items())],
            "a_low": self.a_low,
            "a_high": self.a_high,
        }
        if self.kind == "piecewise-table":
            doc["table_times"] = list(self.table_times)
            doc["table_values"] = list(self.table_values)
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping) -> "WeightSpec":
        return cls(
            kind=doc.get("kind", "constant"),
            scale=float(doc.get("scale", 1.0)),
            per_arc={(int(j), int(i)): float(v) for (j, i), v in doc.get("per_arc", [])},
            a_low=float(doc.get("a_low", 1.0)),
            a_high=float(doc.get("a_high", 1.0)),
            table_times=tuple(doc.get("table_times", ())),
            table_values=tuple(doc.get("table_values", ())),
        )


@dataclass(frozen=True)
class DisturbanceSpec:
    """Per-agent disturbance w(t), one of a few closed-form families.

    tags declare membership in the regularity classes: "F" (essentially
    bounded), "F1" (sup over tails vanishes), "F2" (absolutely integrable).
    Declarations are checked numerically by check_tags, not trusted.
    """

    kind: str
    n: int
    amplitude: tuple[float, ...] = ()
    rate: float = 0.0
    phase: tuple[float, ...] = ()
    group: tuple[int, ...] = ()
    window: tuple[float, float] | None = None
    table_times: tuple[float, ...] = ()
    table_values: tuple[tuple[float, ...], ...] = ()
    tags: frozenset[str] = frozenset({"F"})

    def __post_init__(self):
        if self.kind not in DISTURBANCE_KINDS:
            raise DomainError(f"unknown disturbance kind {self.kind!r}")
        if self.n < 1:
            raise DomainError("disturbance needs n >= 1 agents")
        if self.kind == "split-adversarial":
            if len(self.amplitude) != 1:
                raise DomainError("split-adversarial carries one amplitude value")
        elif self.amplitude and len(self.amplitude) != self.n:
            raise DomainError("amplitude length must equal n")
        if self.phase and len(self.phase) != self.n:
            raise DomainError("phase length must equal n")
        if self.kind == "integrable-decay" and self.rate <= 1.0:
            raise DomainError("integrable-decay needs a power > 1")
        if self.kind == "split-adversarial" and self.window is None:
            raise DomainError("split-adversarial needs an active window")
        if self.kind == "table":
            if len(self.table_times) != len(self.table_values) or not self.table_times:
                raise DomainError("table needs matching, nonempty rows")
            if any(len(row) != self.n for row in self.table_values):
                raise DomainError("each table row needs n values")

    # --- constructors ---

    @classmethod
    def zero(cls, n: int) -> "DisturbanceSpec":
        return cls(kind="zero", n=n, tags=frozenset({"F", "F1", "F2"}))

    @classmethod
    def constant(cls, values: Sequence[float]) -> "DisturbanceSpec":
        return cls(kind="constant-vector", n=len(values), amplitude=tuple(values))

    @classmethod
    def sinusoid(cls, amplitudes: Sequence[float], frequency: float = 1.0,
                 phases: Sequence[float] | None = None) -> "DisturbanceSpec":
        n = len(amplitudes)
        return cls(
            kind="bounded-sinusoid", n=n, amplitude=tuple(amplitudes), rate=frequency,
            phase=tuple(phases) if phases is not None else (0.0,) * n,
        )

    @classmethod
    def exp_vanishing(cls, amplitudes: Sequence[float], decay: float = 1.0) -> "DisturbanceSpec":
        if decay <= 0:
            raise DomainError("exp-vanishing needs a positive decay rate")
        return cls(kind="exp-vanishing", n=len(amplitudes), amplitude=tuple(amplitudes),
                   rate=decay, tags=frozenset({"F", "F1", "F2"}))

    @classmethod
    def integrable_decay(cls, amplitudes: Sequence[float], power: float = 2.0) -> "DisturbanceSpec":
        return cls(kind="integrable-decay", n=len(amplitudes), amplitude=tuple(amplitudes),
                   rate=power, tags=frozenset({"F", "F1", "F2"}))

    @classmethod
    def split(cls, n: int, group: Sequence[int], value: float,
              t_start: float, t_end: float) -> "DisturbanceSpec":
        """value on the listed agents, 0 elsewhere, active on [t_start, t_end)."""
        return cls(kind="split-adversarial", n=n, amplitude=(value,),
                   group=tuple(sorted(group)), window=(t_start, t_end))

    @classmethod
    def table(cls, times: Sequence[float], rows: Sequence[Sequence[float]]) -> "DisturbanceSpec":
        return cls(kind="table", n=len(rows[0]), table_times=tuple(times),
                   table_values=tuple(tuple(r) for r in rows))

    # --- evaluation ---

    def values(self, ts) -> np.ndarray:
        """Evaluate w at times ts; shape (len(ts), n)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        m = ts.shape[0]
        if self.kind == "zero":
            return np.zeros((m, self.n))
        if self.kind == "constant-vector":
            return np.tile(np.asarray(self.amplitude), (m, 1))
        if self.kind == "bounded-sinusoid":
            amp = np.asarray(self.amplitude)
            ph = np.asarray(self.phase) if self.phase else np.zeros(self.n)
            return amp[None, :] * np.sin(self.rate * ts[:, None] + ph[None, :])
        if self.kind == "exp-vanishing":
            return np.asarray(self.amplitude)[None, :] * np.exp(-self.rate * ts)[:, None]
        if self.kind == "integrable-decay":
            return np.asarray(self.amplitude)[None, :] * (1.0 + ts[:, None]) ** (-self.rate)
        if self.kind == "split-adversarial":
            out = np.zeros((m, self.n))
            lo, hi = self.window
            active = (ts >= lo) & (ts < hi)
            for i in self.group:
                out[active, i - 1] = self.amplitude[0]
            return out
        idx = np.clip(np.searchsorted(self.table_times, ts, side="right") - 1, 0, None)
        return np.asarray(self.table_values, dtype=float)[idx]

    def value(self, t: float) -> np.ndarray:
        return self.values([t])[0]

    def jump_times(self, t1: float, t2: float) -> list[float]:
        if self.kind == "split-adversarial":
            return [t for t in self.window if t1 < t < t2]
        if self.kind == "table":
            return [t for t in self.table_times if t1 < t < t2]
        return []

    def to_dict(self) -> dict:
        doc = {"kind": self.kind, "n": self.n, "tags": sorted(self.tags)}
        if self.amplitude:
            doc["amplitude"] = list(self.amplitude)
        if self.rate:
            doc["rate"] = self.rate
        if self.phase:
            doc["phase"] = list(self.phase)
        if self.group:
            doc["group"] = list(self.group)
        if self.window is not None:
            doc["window"] = list(self.window)
        if self.kind == "table":
            doc["table_times"] = list(self.table_times)
            doc["table_values"] = [list(r) for r in self.table_values]
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DisturbanceSpec":
        return cls(
            kind=doc["kind"],
            n=int(doc["n"]),
            amplitude=tuple(doc.get("amplitude", ())),
            rate=float(doc.get("rate", 0.0)),
            phase=tuple(doc.get("phase", ())),
            group=tuple(int(i) for i in doc.get("group", ())),
            window=tuple(doc["window"]) if doc.get("window") is not None else None,
            table_times=tuple(doc.get("table_times", ())),
            table_values=tuple(tuple(r) for r in doc.get("table_values", ())),
            tags=frozenset(doc.get("tags", ["F"])),
        )


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution: times, states x(t) and the disturbance samples."""

    times: np.ndarray
    states: np.ndarray
    disturbances: np.ndarray
    step: float
    method: str
    t0: float
    x0: tuple[float, ...]

    def __post_init__(self):
        for arr in (self.times, self.states, self.disturbances):
            arr.setflags(write=False)

    @property
    def n_agents(self) -> int:
        return self.states.shape[1]

    def spread(self) -> np.ndarray:
        return self.states.max(axis=1) - self.states.min(axis=1)

    def csv_rows(self) -> Iterable[str]:
        n = self.n_agents
        yield "t," + ",".join(f"x_{i}" for i in range(1, n + 1)) + "," + ",".join(
            f"w_{i}" for i in range(1, n + 1)
        )
        for k in range(len(self.times)):
            vals = [self.times[k], *self.states[k], *self.disturbances[k]]
            yield ",".join(format(v, ".17g") for v in vals)


def _coupling(graph: Digraph, weights: WeightSpec) -> tuple[np.ndarray, np.ndarray]:
    """Scale matrix S (S[i-1, j-1] = scale of arc (j, i)) and its row sums."""
    n = graph.n
    s = np.zeros((n, n))
    for j, i in graph.arcs:
        s[i - 1, j - 1] = weights.arc_scale((j, i))
    return s, s.sum(axis=1)


def inflow_rates(t: float, signal: SwitchingSignal, weights: WeightSpec) -> np.ndarray:
    """Total incoming weight sum per agent at time t (certificate diagnostic)."""
    _, rowsum = _coupling(signal.graph_at(t), weights)
    return rowsum * float(weights.profile(t))


def rhs(
    t: float,
    x: np.ndarray,
    signal: SwitchingSignal,
    weights: WeightSpec,
    w: DisturbanceSpec,
) -> np.ndarray:
    """State derivative of the noisy consensus dynamics at time t."""
    x = np.asarray(x, dtype=float)
    if x.shape != (signal.n,) or w.n != signal.n:
        raise DomainError(
            f"dimension mismatch: state {x.shape}, signal n={signal.n}, disturbance n={w.n}"
        )
    s, rowsum = _coupling(signal.graph_at(t), weights)
    phi = float(weights.profile(t))
    return phi * (s @ x - rowsum * x) + w.value(t)


def default_step(signal: SwitchingSignal) -> float:
    return min(signal.tau_d / 20.0, 1e-2)


def integrate(
    signal: SwitchingSignal,
    weights: WeightSpec,
    w: DisturbanceSpec,
    t0: float,
    x0: Sequence[float],
    step: float | None = None,
    horizon: float | None = None,
) -> Trajectory:
    """Fixed-step classical 4th-order integration, aligned to switches.

    No step straddles a switch instant or a declared jump of the weights or
    disturbance, so the right-hand side is smooth inside every step and the
    method keeps its order.  Every switch instant appears as a sample.
    """
    horizon = signal.horizon if horizon is None else horizon
    if horizon > signal.horizon:
        raise DomainError(f"horizon {horizon} beyond signal horizon {signal.horizon}")
    if not t0 < horizon:
        raise DomainError(f"need t0 < horizon, got [{t0}, {horizon}]")
    step = default_step(signal) if step is None else step
    if step <= 0:
        raise DomainError(f"step must be positive, got {step}")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (signal.n,):
        raise DomainError(f"initial state has shape {x0.shape}, expected ({signal.n},)")
    if w.n != signal.n:
        raise DomainError(f"disturbance n={w.n} does not match signal n={signal.n}")

    breaks = {t for t in signal.switch_times if t0 < t < horizon}
    breaks.update(weights.jump_times(t0, horizon))
    breaks.update(w.jump_times(t0, horizon))
    edges = [t0, *sorted(breaks), horizon]

    times = [t0]
    states = [x0.copy()]
    x = x0.copy()
    for a, b in zip(edges[:-1], edges[1:]):
        s, rowsum = _coupling(signal.graph_at(a), weights)
        # Stage times are nudged into the open segment so that one-sided
        # limits of step-function weights/disturbances are read correctly.
        lo_t, hi_t = a + 1e-9 * (b - a), b - 1e-9 * (b - a)

        def f(t: float, y: np.ndarray) -> np.ndarray:
            tt = min(max(t, lo_t), hi_t)
            phi = float(weights.profile(tt))
            return phi * (s @ y - rowsum * y) + w.value(tt)

        m = max(1, math.ceil((b - a) / step - 1e-9))
        grid = np.linspace(a, b, m + 1)
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(m):
                t, h = grid[k], grid[k + 1] - grid[k]
                k1 = f(t, x)
                k2 = f(t + h / 2, x + h / 2 * k1)
                k3 = f(t + h / 2, x + h / 2 * k2)
                k4 = f(t + h, x + h * k3)
                x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
                if not np.all(np.isfinite(x)):
                    raise NumericalError("non-finite state during integration", float(grid[k + 1]))
                times.append(float(grid[k + 1]))
                states.append(x.copy())

    times_arr = np.asarray(times)
    return Trajectory(
        times=times_arr,
        states=np.asarray(states),
        disturbances=w.values(times_arr),
        step=step,
        method="rk4",
        t0=t0,
        x0=tuple(float(v) for v in x0),
    )


def _simpson(fn, a: float, b: float, step: float) -> float:
    """Composite Simpson on [a, b] with about (b-a)/step subintervals.

    Endpoint evaluations are nudged into the open interval so pieces that
    abut a declared jump integrate the correct one-sided limit.
    """
    if b - a <= 0:
        return 0.0
    m = max(2, 2 * math.ceil((b - a) / (2 * step)))
    xs = np.linspace(a, b, m + 1)
    xs[0] += 1e-9 * (b - a)
    xs[-1] -= 1e-9 * (b - a)
    ys = fn(xs)
    h = (b - a) / m
    return float(h / 3 * (ys[0] + ys[-1] + 4 * ys[1:-1:2].sum() + 2 * ys[2:-1:2].sum()))


def _split_points(breaks: Iterable[float], a: float, b: float) -> list[float]:
    pts = sorted({a, b, *(t for t in breaks if a < t < b)})
    return pts


def sup_norm(w: DisturbanceSpec, horizon: float, step: float = _QUAD_STEP) -> float:
    """Max-norm supremum of |w| over [0, horizon], sampled on a dense grid."""
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    grid = np.linspace(0.0, horizon, max(2, math.ceil(horizon / step)) + 1)
    grid = np.unique(np.concatenate([grid, np.asarray(w.jump_times(0.0, horizon))]))
    return float(np.abs(w.values(grid)).max(axis=1).max()) if grid.size else 0.0


def l1_norm(w: DisturbanceSpec, t1: float, t2: float, step: float = _QUAD_STEP) -> float:
    """Integral of the max-norm |w(t)| over [t1, t2] (composite Simpson)."""
    if t2 < t1:
        raise DomainError(f"invalid interval [{t1},{t2}]")
    total = 0.0
    pts = _split_points(w.jump_times(t1, t2), t1, t2)
    for a, b in zip(pts[:-1], pts[1:]):
        total += _simpson(lambda ts: np.abs(w.values(ts)).max(axis=1), a, b, step)
    return total


def validate_weights_a2(
    weights: WeightSpec,
    tau_d: float,
    horizon: float,
    grid: float,
) -> tuple[float, float, bool]:
    """Measure window integrals of every arc weight over one dwell time.

    Slides a window of length tau_d along [0, horizon - tau_d] at the given
    grid spacing, integrates each distinct arc scale, and reports the
    observed extremes plus whether they sit inside the declared bounds
    (with a small relative tolerance for quadrature error).
    """
    if grid <= 0 or tau_d <= 0:
        raise DomainError("grid and tau_d must be positive")
    if horizon < tau_d:
        raise DomainError("horizon shorter than one dwell time")
    scales = sorted(set(weights.per_arc.values()) | {weights.scale})
    starts = np.arange(0.0, horizon - tau_d + 1e-12, grid)
    lo, hi = math.inf, -math.inf
    for t in starts:
        pts = _split_points(weights.smooth_breaks(t, t + tau_d), float(t), float(t) + tau_d)
        base = sum(_simpson(weights.profile, a, b, min(grid, _QUAD_STEP)) for a, b in zip(pts[:-1], pts[1:]))
        for s in scales:
            v = s * base
            lo, hi = min(lo, v), max(hi, v)
    tol = 1e-8 * max(1.0, abs(weights.a_high))
    ok = lo >= weights.a_low - tol and hi <= weights.a_high + tol
    return lo, hi, ok


def check_tags(w: DisturbanceSpec, horizon: float, step: float = _QUAD_STEP) -> dict[str, bool]:
    """Numerically probe the declared regularity tags on [0, horizon].

    F: finite sup.  F1: the sup over the last tenth of the horizon is
    negligible against the overall sup.  F2: the integral over the last
    tenth is negligible against the total integral.  All checks are
    finite-horizon surrogates.
    """
    sup_all = sup_norm(w, horizon, step)
    out = {"F": math.isfinite(sup_all)}
    tail_start = 0.9 * horizon
    grid = np.linspace(tail_start, horizon, max(2, math.ceil(0.1 * horizon / step)) + 1)
    tail_sup = float(np.abs(w.values(grid)).max()) if grid.size else 0.0
    out["F1"] = tail_sup <= max(1e-9, 1e-3 * sup_all)
    total = l1_norm(w, 0.0, horizon, step)
    tail = l1_norm(w, tail_start, horizon, step)
    out["F2"] = math.isfinite(total) and tail <= max(1e-9, 1e-2 * total)
    return out


def with_tags(w: DisturbanceSpec, *tags: str) -> DisturbanceSpec:
    return replace(w, tags=frozenset(tags))
