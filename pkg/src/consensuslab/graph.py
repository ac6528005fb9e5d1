"""Directed graphs, switching signals and joint-connectivity analysis.

Nodes are labelled 1..n.  An arc ``(j, i)`` points from ``j`` to ``i`` and
makes ``j`` a neighbor of ``i``: information flows along the arc.  Every
node is considered reachable from itself, so distances are defined with
``d(i, i) = 0`` and a single node is strongly connected.
"""
from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

from .errors import DomainError, PreconditionError

Arc = tuple[int, int]

# Exhaustive longest-path search is exponential; refuse silly sizes.
DEFAULT_NODE_CAP = 12

_TIME_EPS = 1e-12


@dataclass(frozen=True)
class Digraph:
    """Immutable directed graph on nodes 1..n.

    ``bidirectional`` asserts that the arc set is symmetric; construction
    fails if the assertion does not hold.  Self-loops are rejected: self
    reachability is handled by the reachability logic, not by storage.
    """

    n: int
    arcs: frozenset[Arc]
    bidirectional: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"node count must be >= 1, got {self.n}")
        if not isinstance(self.arcs, frozenset):
            object.__setattr__(self, "arcs", frozenset(self.arcs))
        for j, i in self.arcs:
            if j == i:
                raise DomainError(f"self-loop ({j},{i}) is not storable")
            if not (1 <= j <= self.n and 1 <= i <= self.n):
                raise DomainError(f"arc ({j},{i}) outside node range 1..{self.n}")
        if self.bidirectional:
            for j, i in self.arcs:
                if (i, j) not in self.arcs:
                    raise DomainError(
                        f"bidirectional flag set but arc ({i},{j}) is missing"
                    )

    @classmethod
    def from_arcs(cls, n: int, arcs: Iterable[Arc], bidirectional: bool | None = None) -> "Digraph":
        """Build a graph, inferring the bidirectional flag when not given."""
        arc_set = frozenset((int(j), int(i)) for j, i in arcs)
        if bidirectional is None:
            bidirectional = all((i, j) in arc_set for j, i in arc_set)
        return cls(n=n, arcs=arc_set, bidirectional=bidirectional)

    @classmethod
    def empty(cls, n: int) -> "Digraph":
        return cls(n=n, arcs=frozenset(), bidirectional=True)

    def successors(self, j: int) -> set[int]:
        """Nodes reachable from ``j`` in one hop (following arc direction)."""
        return {i for (a, i) in self.arcs if a == j}

    def neighbors_of(self, i: int) -> set[int]:
        """In-neighbors of ``i``: the nodes whose state ``i`` can read."""
        return {j for (j, b) in self.arcs if b == i}

    def reachable_from(self, start: int) -> set[int]:
        seen = {start}
        frontier = [start]
        succ: dict[int, list[int]] = {}
        for j, i in self.arcs:
            succ.setdefault(j, []).append(i)
        while frontier:
            v = frontier.pop()
            for w in succ.get(v, ()):
                if w not in seen:
                    seen.add(w)
                    frontier.append(w)
        return seen

    def union(self, other: "Digraph") -> "Digraph":
        if other.n != self.n:
            raise DomainError("cannot union graphs with different node counts")
        return Digraph.from_arcs(self.n, self.arcs | other.arcs, bidirectional=None)


def is_strongly_connected(g: Digraph) -> bool:
    """True iff every ordered pair of nodes is joined by a directed path."""
    if g.n == 1:
        return True
    if len(g.reachable_from(1)) != g.n:
        return False
    reverse = Digraph.from_arcs(g.n, ((i, j) for j, i in g.arcs))
    return len(reverse.reachable_from(1)) == g.n


def find_centers(g: Digraph) -> set[int]:
    """Nodes from which every other node is reachable (the roots).

    Empty iff the graph is not quasi-strongly connected.
    """
    return {v for v in range(1, g.n + 1) if len(g.reachable_from(v)) == g.n}


def is_quasi_strongly_connected(g: Digraph) -> bool:
    return bool(find_centers(g))


def generalized_distance(g: Digraph, i: int, j: int, node_cap: int = DEFAULT_NODE_CAP) -> int | None:
    """Length of a longest simple directed path from ``i`` to ``j``.

    Returns 0 for ``i == j`` and None when ``j`` is unreachable.  Exact
    exhaustive search, exponential in the worst case; refuses graphs with
    more than ``node_cap`` nodes.
    """
    if g.n > node_cap:
        raise DomainError(f"exact longest-path search capped at {node_cap} nodes (n={g.n})")
    if not (1 <= i <= g.n and 1 <= j <= g.n):
        raise DomainError(f"nodes ({i},{j}) outside 1..{g.n}")
    if i == j:
        return 0
    best = _longest_simple_paths_from(g, i)
    return best.get(j)


def _longest_simple_paths_from(g: Digraph, start: int) -> dict[int, int]:
    """Longest simple-path length from ``start`` to every reachable node."""
    succ: dict[int, list[int]] = {}
    for j, i in g.arcs:
        succ.setdefault(j, []).append(i)
    best: dict[int, int] = {}
    on_path = {start}

    def walk(v: int, length: int) -> None:
        for w in succ.get(v, ()):
            if w in on_path:
                continue
            if length + 1 > best.get(w, 0):
                best[w] = length + 1
            on_path.add(w)
            walk(w, length + 1)
            on_path.remove(w)

    walk(start, 0)
    return best


def generalized_diameter(g: Digraph, node_cap: int = DEFAULT_NODE_CAP) -> int:
    """Maximum generalized distance over all reachable ordered pairs.

    0 for an empty arc set (only self-reachability remains).
    """
    if g.n > node_cap:
        raise DomainError(f"exact longest-path search capped at {node_cap} nodes (n={g.n})")
    diam = 0
    for v in range(1, g.n + 1):
        best = _longest_simple_paths_from(g, v)
        if best:
            diam = max(diam, max(best.values()))
    return diam


@dataclass(frozen=True)
class SwitchingSignal:
    """Piecewise-constant assignment of graphs to time.

    ``graphs[assignment[k]]`` is active on ``[switch_times[k], switch_times[k+1])``;
    the final graph stays active until ``horizon``.  Consecutive switch times
    must be at least ``tau_d`` apart (dwell-time condition).
    """

    graphs: tuple[Digraph, ...]
    switch_times: tuple[float, ...]
    assignment: tuple[int, ...]
    horizon: float
    tau_d: float

    def __post_init__(self):
        if not self.graphs:
            raise DomainError("signal needs at least one graph")
        if self.tau_d <= 0:
            raise DomainError(f"dwell time must be positive, got {self.tau_d}")
        ns = {g.n for g in self.graphs}
        if len(ns) != 1:
            raise DomainError(f"all graphs must share one node count, got {sorted(ns)}")
        if len(self.switch_times) != len(self.assignment):
            raise DomainError("switch_times and assignment lengths differ")
        if not self.switch_times or self.switch_times[0] != 0.0:
            raise DomainError("first switch time must be 0")
        for a, b in itertools.pairwise(self.switch_times):
            if b - a < self.tau_d - _TIME_EPS:
                raise DomainError(
                    f"switch times {a} and {b} violate the dwell time {self.tau_d}"
                )
        for idx in self.assignment:
            if not (0 <= idx < len(self.graphs)):
                raise DomainError(f"assignment index {idx} out of range")
        if self.horizon <= self.switch_times[-1]:
            raise DomainError("horizon must exceed the last switch time")

    @property
    def n(self) -> int:
        return self.graphs[0].n

    @property
    def all_bidirectional(self) -> bool:
        return all(g.bidirectional for g in self.graphs)

    @classmethod
    def constant(cls, g: Digraph, horizon: float, tau_d: float = 1.0) -> "SwitchingSignal":
        return cls(graphs=(g,), switch_times=(0.0,), assignment=(0,), horizon=horizon, tau_d=tau_d)

    def index_at(self, t: float) -> int:
        if t < 0 or t > self.horizon:
            raise DomainError(f"time {t} outside [0, {self.horizon}]")
        k = bisect.bisect_right(self.switch_times, t) - 1
        return self.assignment[max(k, 0)]

    def graph_at(self, t: float) -> Digraph:
        return self.graphs[self.index_at(t)]

    def segments(self, t1: float, t2: float) -> Iterator[tuple[float, float, Digraph]]:
        """Maximal constant pieces of the signal intersected with [t1, t2)."""
        if not (0.0 <= t1 < t2 <= self.horizon + _TIME_EPS):
            raise DomainError(f"interval [{t1},{t2}) outside signal domain [0,{self.horizon}]")
        times = list(self.switch_times) + [self.horizon]
        for k in range(len(self.switch_times)):
            a, b = times[k], times[k + 1]
            lo, hi = max(a, t1), min(b, t2)
            if hi - lo > _TIME_EPS:
                yield lo, hi, self.graphs[self.assignment[k]]

    def arc_presence(self, t1: float, t2: float) -> dict[Arc, list[tuple[float, float]]]:
        """Per-arc maximal presence intervals within [t1, t2).

        Contiguous presence across a switch (the arc survives the switch) is
        merged into one interval.
        """
        present: dict[Arc, list[tuple[float, float]]] = {}
        for lo, hi, g in self.segments(t1, t2):
            for arc in g.arcs:
                spans = present.setdefault(arc, [])
                if spans and abs(spans[-1][1] - lo) <= _TIME_EPS:
                    spans[-1] = (spans[-1][0], hi)
                else:
                    spans.append((lo, hi))
        return present

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "tau_d": self.tau_d,
            "horizon": self.horizon,
            "graphs": [sorted([list(a) for a in g.arcs]) for g in self.graphs],
            "schedule": [[t, k] for t, k in zip(self.switch_times, self.assignment)],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SwitchingSignal":
        for key in ("n", "tau_d", "horizon", "graphs", "schedule"):
            if key not in doc:
                raise DomainError(f"signal document missing field '{key}'")
        n = int(doc["n"])
        graphs = tuple(
            Digraph.from_arcs(n, [(int(j), int(i)) for j, i in arcs]) for arcs in doc["graphs"]
        )
        schedule = sorted((float(t), int(k)) for t, k in doc["schedule"])
        return cls(
            graphs=graphs,
            switch_times=tuple(t for t, _ in schedule),
            assignment=tuple(k for _, k in schedule),
            horizon=float(doc["horizon"]),
            tau_d=float(doc["tau_d"]),
        )


def union_over(signal: SwitchingSignal, t1: float, t2: float) -> Digraph:
    """Graph whose arcs are active at some instant of [t1, t2)."""
    arcs: set[Arc] = set()
    for _, _, g in signal.segments(t1, t2):
        arcs |= g.arcs
    return Digraph.from_arcs(signal.n, arcs)


def _window_starts(signal: SwitchingSignal, window: float) -> list[float]:
    """Critical window starts: the joint arc set over [t, t+window) can only
    change when t or t+window crosses a switch instant."""
    last = signal.horizon - window
    cands = {0.0}
    for s in signal.switch_times:
        cands.add(s)
        cands.add(s - window)
    return sorted(t for t in cands if -_TIME_EPS <= t <= last + _TIME_EPS)


def _check_joint(signal: SwitchingSignal, window: float, predicate) -> bool:
    if window <= 0:
        raise DomainError(f"window must be positive, got {window}")
    if window > signal.horizon + _TIME_EPS:
        raise DomainError(f"window {window} exceeds horizon {signal.horizon}")
    for t in _window_starts(signal, window):
        t = min(max(t, 0.0), signal.horizon - window)
        if not predicate(union_over(signal, t, t + window)):
            return False
    return True


def check_uqsc(signal: SwitchingSignal, window: float) -> bool:
    """True iff every length-``window`` joint graph on the horizon has a center."""
    return _check_joint(signal, window, is_quasi_strongly_connected)


def check_usc(signal: SwitchingSignal, window: float) -> bool:
    """True iff every length-``window`` joint graph on the horizon is strongly connected."""
    return _check_joint(signal, window, is_strongly_connected)


def min_uqsc_window(signal: SwitchingSignal) -> float | None:
    """Smallest window on the critical grid for which check_uqsc holds.

    The grid is the dwell time plus all positive gaps between switch
    instants (and the horizon); the check outcome can only change at those
    values.  None when even the full horizon fails.
    """
    instants = set(signal.switch_times) | {signal.horizon}
    cands = {signal.tau_d, signal.horizon}
    for u in instants:
        for v in signal.switch_times:
            if u - v > _TIME_EPS:
                cands.add(u - v)
    for w in sorted(c for c in cands if c <= signal.horizon + _TIME_EPS):
        if check_uqsc(signal, min(w, signal.horizon)):
            return min(w, signal.horizon)
    return None


@dataclass(frozen=True)
class JcPartition:
    """Greedy partition of the time axis into joint-connectivity windows.

    ``boundaries`` holds the closing instants T_1 < T_2 < ... <= horizon of
    consecutive windows (the opening instant T_0 = 0 is implicit).  A window
    closes at the first instant by which the arcs each present contiguously
    for at least ``tau_d`` within the window form a connected spanning
    subgraph.  ``complete`` records whether at least one window closed
    before the horizon.
    """

    boundaries: tuple[float, ...]
    complete: bool
    horizon: float
    tau_d: float

    def window_count(self) -> int:
        return len(self.boundaries)


def _spanning_connected(n: int, arcs: Iterable[Arc]) -> bool:
    """Do the arcs, read as undirected edges, connect all n nodes?"""
    parent = list(range(n + 1))

    def root(v: int) -> int:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    comps = n
    for j, i in arcs:
        rj, ri = root(j), root(i)
        if rj != ri:
            parent[rj] = ri
            comps -= 1
    return comps == 1


def jc_partition(signal: SwitchingSignal) -> JcPartition:
    """Scan the horizon closing joint-connectivity windows greedily."""
    if not signal.all_bidirectional:
        raise PreconditionError("jc_partition requires every graph to be bidirectional")
    n = signal.n
    boundaries: list[float] = []
    start = 0.0
    while signal.horizon - start > _TIME_EPS:
        presence = signal.arc_presence(start, signal.horizon)
        # Earliest instant at which each arc completes tau_d of contiguous presence.
        ready: list[tuple[float, Arc]] = []
        for arc, spans in presence.items():
            times = [lo + signal.tau_d for lo, hi in spans if hi - lo >= signal.tau_d - _TIME_EPS]
            if times:
                ready.append((min(times), arc))
        ready.sort()
        closed_at = None
        qualified: set[Arc] = set()
        for k, (t_ready, arc) in enumerate(ready):
            qualified.add(arc)
            # Batch arcs that become ready at the same instant before testing.
            if k + 1 < len(ready) and ready[k + 1][0] - t_ready <= _TIME_EPS:
                continue
            if _spanning_connected(n, qualified):
                closed_at = t_ready
                break
        if closed_at is None or closed_at > signal.horizon + _TIME_EPS:
            break
        boundaries.append(min(closed_at, signal.horizon))
        start = boundaries[-1]
    return JcPartition(
        boundaries=tuple(boundaries),
        complete=bool(boundaries),
        horizon=signal.horizon,
        tau_d=signal.tau_d,
    )


def check_ijc(signal: SwitchingSignal, min_windows: int = 1) -> bool:
    """Finite-horizon surrogate for infinite joint connectivity.

    True when the greedy partition closed at least ``min_windows`` windows;
    this is "consistent with IJC up to the horizon", the tail property
    itself is not verifiable on a finite trace.
    """
    if min_windows < 1:
        raise DomainError("min_windows must be >= 1")
    if not signal.all_bidirectional:
        raise PreconditionError("check_ijc requires every graph to be bidirectional")
    return jc_partition(signal).window_count() >= min_windows


def count_j(partition: JcPartition, t: float) -> int:
    """Number of partition windows fully closed strictly before time t."""
    if t > partition.horizon + _TIME_EPS:
        raise DomainError(f"time {t} beyond partition horizon {partition.horizon}")
    return bisect.bisect_left(partition.boundaries, t - _TIME_EPS)


def persistent_centers(signal: SwitchingSignal, t1: float, t2: float) -> set[int]:
    """Centers of the joint graph over [t1, t2) restricted to arcs that are
    present contiguously for at least tau_d within the interval."""
    if t2 - t1 < signal.tau_d - _TIME_EPS:
        raise DomainError(
            f"interval [{t1},{t2}) shorter than the dwell time {signal.tau_d}"
        )
    persistent: set[Arc] = set()
    for arc, spans in signal.arc_presence(t1, t2).items():
        if any(hi - lo >= signal.tau_d - _TIME_EPS for lo, hi in spans):
            persistent.add(arc)
    return find_centers(Digraph.from_arcs(signal.n, persistent))
