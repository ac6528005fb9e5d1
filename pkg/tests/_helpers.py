"""Shared test utilities: brute-force oracles and random signal builders.

The oracles deliberately re-derive everything from first principles
(exhaustive path enumeration, dense time scans) so they stay independent of
the library code paths they check.
"""
from __future__ import annotations

import itertools

import numpy as np

from consensuslab.graph import Digraph, SwitchingSignal


def all_simple_paths(arcs: set[tuple[int, int]], start: int, goal: int) -> list[list[int]]:
    """Every simple directed path start -> goal, by exhaustive recursion."""
    succ: dict[int, list[int]] = {}
    for j, i in arcs:
        succ.setdefault(j, []).append(i)
    paths: list[list[int]] = []

    def extend(path: list[int]) -> None:
        if path[-1] == goal and len(path) > 1:
            paths.append(list(path))
            # longer simple paths may still revisit goal? no: simple paths
            # cannot revisit, so stop extending past the goal
            return
        for nxt in succ.get(path[-1], ()):
            if nxt not in path:
                path.append(nxt)
                extend(path)
                path.pop()

    extend([start])
    return paths


def brute_distance(arcs: set[tuple[int, int]], i: int, j: int) -> int | None:
    if i == j:
        return 0
    paths = all_simple_paths(arcs, i, j)
    return max(len(p) - 1 for p in paths) if paths else None


def brute_centers(n: int, arcs: set[tuple[int, int]]) -> set[int]:
    out = set()
    for v in range(1, n + 1):
        if all(v == u or brute_distance(arcs, v, u) is not None for u in range(1, n + 1)):
            out.add(v)
    return out


def brute_diameter(n: int, arcs: set[tuple[int, int]]) -> int:
    best = 0
    for i, j in itertools.permutations(range(1, n + 1), 2):
        d = brute_distance(arcs, i, j)
        if d is not None:
            best = max(best, d)
    return best


def brute_union(signal: SwitchingSignal, t1: float, t2: float) -> set[tuple[int, int]]:
    """Arc union over [t1, t2) from raw segment arithmetic."""
    arcs: set[tuple[int, int]] = set()
    times = list(signal.switch_times) + [signal.horizon]
    for k in range(len(signal.switch_times)):
        a, b = times[k], times[k + 1]
        if min(b, t2) - max(a, t1) > 1e-12:
            arcs |= signal.graphs[signal.assignment[k]].arcs
    return arcs


def qsc_by_closure(n: int, arcs: set[tuple[int, int]]) -> bool:
    """Quasi-strong connectivity via iterated transitive closure."""
    reach = {v: {v} for v in range(1, n + 1)}
    changed = True
    while changed:
        changed = False
        for j, i in arcs:
            new = reach[i] - reach[j]
            if new:
                reach[j] |= new
                changed = True
    return any(len(r) == n for r in reach.values())


def brute_check_uqsc(signal: SwitchingSignal, window: float, samples: int = 400) -> bool:
    """Dense window scan; the sample grid is augmented with every switch
    instant so no constancy interval of the union can be missed."""
    last = signal.horizon - window
    grid = set(np.linspace(0.0, last, samples))
    for s in signal.switch_times:
        for t in (s, s - window):
            if 0.0 <= t <= last:
                grid.add(t)
    for t in sorted(grid):
        arcs = brute_union(signal, t, t + window)
        if not qsc_by_closure(signal.n, arcs):
            return False
    return True


def random_signal(rng: np.random.Generator, n: int, horizon: float = 8.0,
                  tau_d: float = 0.5, n_graphs: int = 4,
                  bidirectional: bool = False) -> SwitchingSignal:
    """Random switching signal honoring the dwell time."""
    graphs = []
    pairs = [(j, i) for j in range(1, n + 1) for i in range(1, n + 1) if j != i]
    for _ in range(n_graphs):
        arcs = set()
        for j, i in pairs:
            if rng.random() < 0.35:
                arcs.add((j, i))
                if bidirectional:
                    arcs.add((i, j))
        graphs.append(Digraph.from_arcs(n, arcs, bidirectional=bidirectional or None))
    times = [0.0]
    while True:
        nxt = times[-1] + tau_d * float(1 + rng.integers(0, 3))
        if nxt >= horizon - tau_d / 2:
            break
        times.append(nxt)
    assignment = [int(rng.integers(0, n_graphs)) for _ in times]
    return SwitchingSignal(
        graphs=tuple(graphs),
        switch_times=tuple(times),
        assignment=tuple(assignment),
        horizon=horizon,
        tau_d=tau_d,
    )
