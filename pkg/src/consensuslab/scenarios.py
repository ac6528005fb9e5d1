"""Canonical and randomized scenario constructors.

Every generator is a deterministic function of its parameters and seed, and
every declared connectivity guarantee is re-checkable with the graph-module
predicates (generators never lie).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .dynamics import DisturbanceSpec, WeightSpec
from .errors import DomainError
from .graph import (
    Digraph,
    SwitchingSignal,
    check_ijc,
    check_uqsc,
    check_usc,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Scenario:
    """A complete experiment setup: signal, weights, disturbance, start state."""

    name: str
    signal: SwitchingSignal
    weights: WeightSpec
    disturbance: DisturbanceSpec
    x0: tuple[float, ...]
    t0: float = 0.0
    guarantees: Mapping[str, float | bool] = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        if len(self.x0) != self.signal.n:
            raise DomainError(
                f"x0 has {len(self.x0)} entries for {self.signal.n} agents"
            )
        if self.disturbance.n != self.signal.n:
            raise DomainError("disturbance dimension does not match the signal")

    @property
    def horizon(self) -> float:
        return self.signal.horizon

    def with_disturbance(self, w: DisturbanceSpec) -> "Scenario":
        return replace(self, disturbance=w)

    def verify_guarantees(self) -> dict[str, bool]:
        """Re-check every declared guarantee with the graph-module predicates."""
        out: dict[str, bool] = {}
        for tag, param in self.guarantees.items():
            if tag == "uqsc_window":
                out[tag] = check_uqsc(self.signal, float(param))
            elif tag == "usc_window":
                out[tag] = check_usc(self.signal, float(param))
            elif tag == "ijc":
                out[tag] = check_ijc(self.signal)
            else:
                raise DomainError(f"unknown guarantee tag {tag!r}")
        return out

    def to_document(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "signal": self.signal.to_dict(),
            "weights": self.weights.to_dict(),
            "disturbance": self.disturbance.to_dict(),
            "x0": list(self.x0),
            "t0": self.t0,
            "guarantees": dict(self.guarantees),
            "seed": self.seed,
        }

    @classmethod
    def from_document(cls, doc: Mapping) -> "Scenario":
        version = doc.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise DomainError(f"unsupported scenario schema_version {version!r}")
        for key in ("signal", "weights", "disturbance", "x0"):
            if key not in doc:
                raise DomainError(f"scenario document missing field '{key}'")
        return cls(
            name=str(doc.get("name", "scenario")),
            signal=SwitchingSignal.from_dict(doc["signal"]),
            weights=WeightSpec.from_dict(doc["weights"]),
            disturbance=DisturbanceSpec.from_dict(doc["disturbance"]),
            x0=tuple(float(v) for v in doc["x0"]),
            t0=float(doc.get("t0", 0.0)),
            guarantees=dict(doc.get("guarantees", {})),
            seed=doc.get("seed"),
        )


def _spread_normalized(rng: np.random.Generator, n: int) -> tuple[float, ...]:
    """Random start state rescaled to spread exactly 2 (so ratios are stable)."""
    x = rng.uniform(-1.0, 1.0, n)
    lo, hi = x.min(), x.max()
    if hi - lo < 1e-9:
        x = np.linspace(-1.0, 1.0, n)
        lo, hi = -1.0, 1.0
    return tuple(float(v) for v in (x - lo) / (hi - lo) * 2.0 - 1.0)


def example_one(
    horizon: float,
    x0: tuple[float, float] = (1.0, 0.0),
    disturbance: DisturbanceSpec | None = None,
) -> Scenario:
    """Two nodes, one arc (1, 2) alive only on [10^k, 10^k + 1).

    The live intervals thin out so fast that no fixed window keeps the joint
    graph connected, yet the pairwise contraction during each live interval
    still yields the integral-gain bound.
    """
    if horizon < 2:
        raise DomainError("example-one needs a horizon of at least 2")
    arc_graph = Digraph.from_arcs(2, [(1, 2)])
    empty = Digraph.empty(2)
    times = [0.0]
    assignment = [1]  # empty on [0, 1)
    k = 0
    while 10.0**k < horizon:
        start = 10.0**k
        times.append(start)
        assignment.append(0)
        if start + 1.0 < horizon:
            times.append(start + 1.0)
            assignment.append(1)
        k += 1
    signal = SwitchingSignal(
        graphs=(arc_graph, empty),
        switch_times=tuple(times),
        assignment=tuple(assignment),
        horizon=horizon,
        tau_d=1.0,
    )
    return Scenario(
        name="example-one",
        signal=signal,
        weights=WeightSpec(kind="constant", scale=1.0, a_low=1.0, a_high=1.0),
        disturbance=disturbance or DisturbanceSpec.zero(2),
        x0=tuple(x0),
        guarantees={},
    )


def necessity_counterexample(n: int, t_star: float) -> Scenario:
    """Two internally complete groups with no cross arcs, zero start state,
    unit disturbance on the second group.  The spread at the end of the
    active window equals the window length exactly."""
    if n < 2:
        raise DomainError("need at least 2 agents")
    if t_star <= 0:
        raise DomainError("t_star must be positive")
    half = (n + 1) // 2
    group1 = range(1, half + 1)
    group2 = range(half + 1, n + 1)
    arcs = [(a, b) for grp in (group1, group2) for a in grp for b in grp if a != b]
    tau_d = min(1.0, t_star)
    signal = SwitchingSignal.constant(Digraph.from_arcs(n, arcs), horizon=t_star, tau_d=tau_d)
    return Scenario(
        name=f"necessity-n{n}",
        signal=signal,
        weights=WeightSpec(kind="constant", scale=1.0, a_low=tau_d, a_high=tau_d),
        disturbance=DisturbanceSpec.split(n, list(group2), 1.0, 0.0, t_star),
        x0=(0.0,) * n,
        guarantees={},
    )


def _random_arborescence(rng: np.random.Generator, n: int) -> tuple[int, list[tuple[int, int]]]:
    """Random root and spanning out-tree arcs (parent, child)."""
    root = int(rng.integers(1, n + 1))
    others = [v for v in range(1, n + 1) if v != root]
    rng.shuffle(others)
    attached = [root]
    arcs = []
    for child in others:
        parent = attached[int(rng.integers(0, len(attached)))]
        arcs.append((parent, child))
        attached.append(child)
    rng.shuffle(arcs)
    return root, arcs


def random_uqsc(
    n: int, window: float, tau_d: float, horizon: float, seed: int
) -> Scenario:
    """Rotating single-arc schedule whose every length-``window`` union
    contains a fixed spanning out-tree.

    One seeded arborescence is cycled arc by arc with equal slots; because
    the slot pattern is periodic with period n-1 slots, any window of the
    declared length meets every arc, which makes the guarantee exact rather
    than statistical.  Single-arc graphs are deliberately the sparsest
    regime the connectivity machinery admits.
    """
    if n < 2:
        raise DomainError("need at least 2 agents")
    if window < n * tau_d:
        raise DomainError(
            f"window {window} too short to rotate {n - 1} arcs with dwell {tau_d}"
        )
    if horizon <= window:
        raise DomainError("horizon must exceed the window")
    rng = np.random.default_rng(seed)
    _, arcs = _random_arborescence(rng, n)
    slot = window / (n - 1)
    graphs = tuple(Digraph.from_arcs(n, [arc]) for arc in arcs)
    times = []
    assignment = []
    k = 0
    while k * slot < horizon - 1e-12:
        times.append(k * slot)
        assignment.append(k % (n - 1))
        k += 1
    signal = SwitchingSignal(
        graphs=graphs,
        switch_times=tuple(times),
        assignment=tuple(assignment),
        horizon=horizon,
        tau_d=tau_d,
    )
    return Scenario(
        name=f"random-uqsc-n{n}-seed{seed}",
        signal=signal,
        weights=WeightSpec(kind="constant", scale=1.0, a_low=tau_d, a_high=tau_d),
        disturbance=DisturbanceSpec.zero(n),
        x0=_spread_normalized(rng, n),
        guarantees={"uqsc_window": window},
        seed=seed,
    )


def sparse_ijc(
    n: int, gap_growth: float, tau_d: float, horizon: float, seed: int
) -> Scenario:
    """Spanning trees that appear in ever rarer bursts.

    During each burst window of length n*tau_d the edges of a fresh random
    spanning tree are shown one at a time (bidirectionally, each held for
    one dwell time, with one idle slot at the end); between bursts the graph
    is empty and the idle gaps grow geometrically, so the signal is jointly
    connected infinitely often but not uniformly so for any fixed window.
    """
    if n < 2:
        raise DomainError("need at least 2 agents")
    if gap_growth < 1.0:
        raise DomainError("gap_growth must be >= 1")
    if tau_d <= 0:
        raise DomainError("tau_d must be positive")
    rng = np.random.default_rng(seed)
    empty = Digraph.empty(n)
    graphs: list[Digraph] = [empty]
    times: list[float] = []
    assignment: list[int] = []
    burst_len = n * tau_d
    start, gap = 0.0, burst_len
    bursts = 0
    while start + burst_len <= horizon + 1e-12:
        _, tree = _random_arborescence(rng, n)
        for j, (a, b) in enumerate(tree):
            graphs.append(Digraph.from_arcs(n, [(a, b), (b, a)], bidirectional=True))
            times.append(start + j * tau_d)
            assignment.append(len(graphs) - 1)
        times.append(start + (n - 1) * tau_d)  # idle tail slot of the burst
        assignment.append(0)
        bursts += 1
        start = start + burst_len + gap
        gap *= gap_growth
    if not bursts:
        raise DomainError(f"horizon {horizon} too short for one burst of length {burst_len}")
    if times[0] != 0.0:
        times.insert(0, 0.0)
        assignment.insert(0, 0)
    signal = SwitchingSignal(
        graphs=tuple(graphs),
        switch_times=tuple(times),
        assignment=tuple(assignment),
        horizon=horizon,
        tau_d=tau_d,
    )
    return Scenario(
        name=f"sparse-ijc-n{n}-seed{seed}",
        signal=signal,
        weights=WeightSpec(kind="constant", scale=1.0, a_low=tau_d, a_high=tau_d),
        disturbance=DisturbanceSpec.zero(n),
        x0=_spread_normalized(rng, n),
        guarantees={"ijc": True},
        seed=seed,
    )


GENERATORS = {
    "example-one": example_one,
    "necessity": necessity_counterexample,
    "random-uqsc": random_uqsc,
    "sparse-ijc": sparse_ijc,
}


def generate(name: str, params: Mapping) -> Scenario:
    """Dispatch to a named generator with keyword parameters."""
    if name not in GENERATORS:
        raise DomainError(
            f"unknown generator {name!r}; available: {sorted(GENERATORS)}"
        )
    try:
        return GENERATORS[name](**dict(params))
    except TypeError as exc:
        raise DomainError(f"bad parameters for generator {name!r}: {exc}") from None
