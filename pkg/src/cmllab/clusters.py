"""Space-time clusters grown backward from positive target sites.

Given the sign record of an orbit and a seed set Lambda of sites positive
at time n, the cluster is built by two rules:

1. every (p, n) with p in Lambda is a cluster point;
2. walking t = n-1 down to 0: if (p, t+1) is already in the cluster and
   both signs at (p, t) and (p+1, t) are positive, both points join.

The boundary keeps the points whose growth stopped: (p, t) with t = 0,
or (p, t-1) missing, or (p+1, t-1) missing.

Each connected part (adjacency: vertical (p,t)-(p,t+1), growth diagonal
(p,t+1)-(p+1,t), horizontal (p,t)-(p+1,t)) is traced clockwise along its
outer boundary from (sup seeds, n) to (inf seeds, n), the long way around
the bottom.  The trace is a wall-following walk on the triangular-lattice
adjacency; its raw moves are decomposed into the three canonical jumps

    diagonal (+1, -1), horizontal (-1, 0), vertical (0, +1)

via NW = horizontal + vertical and S = diagonal + horizontal.  Eastward
moves never occur for sets produced by the growth rules (the right
profile widens by at most one site per time step); the tracer raises if
the walk fails to close.  Jump counts are validated through the
inequality system

    n_h >= n_d + |Lambda| - c,   n_d = n_v,   |boundary| >= n_h + c

rather than any claimed canonical path form.  One-point components get
zero jump counts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .lattice import SignField

Point = tuple[int, int]  # (site p, time t)

# clockwise cycle of triangular-lattice directions, (dp, dt)
_DIRS = {
    "NW": (-1, 1),
    "N": (0, 1),
    "E": (1, 0),
    "SE": (1, -1),
    "S": (0, -1),
    "W": (-1, 0),
}
_CW_ORDER = ["NW", "N", "E", "SE", "S", "W"]
_ADJACENCY = tuple(_DIRS.values())


class NotInEventError(ValueError):
    """A seed site is not positive at the horizon time."""


class BudgetExceededError(RuntimeError):
    """Enumeration produced a cluster above the point cap."""


class TraceClosureError(RuntimeError):
    """Internal: the boundary walk failed to close."""


@dataclass(frozen=True)
class Cluster:
    points: frozenset
    seeds: tuple[int, ...]
    horizon: int

    def time_slice(self, t: int) -> set:
        return {p for (p, tt) in self.points if tt == t}

    def sorted_points(self) -> list:
        return sorted(self.points, key=lambda pt: (-pt[1], pt[0]))

    def to_json(self) -> str:
        return json.dumps(
            {
                "seeds": list(self.seeds),
                "horizon": self.horizon,
                "points": [[p, t] for (p, t) in self.sorted_points()],
            }
        )


@dataclass(frozen=True)
class ClusterBoundary:
    points: frozenset

    def time_slice(self, t: int) -> set:
        return {p for (p, tt) in self.points if tt == t}

    def slice_sizes(self, horizon: int) -> list:
        return [len(self.time_slice(t)) for t in range(horizon + 1)]


@dataclass(frozen=True)
class ComponentGeometry:
    seeds: tuple[int, ...]
    n_d: int
    n_v: int
    n_h: int
    boundary_size: int


@dataclass(frozen=True)
class OuterPath:
    components: tuple[ComponentGeometry, ...]
    n_d: int
    n_v: int
    n_h: int

    @property
    def component_count(self) -> int:
        return len(self.components)


def build_cluster(signs: SignField | np.ndarray, seeds, n: int) -> Cluster:
    """Grow the cluster of `seeds` at horizon n from a sign record.

    Site indices are unwrapped integers; sign lookups are taken modulo the
    record width, so ring-generated records are read as their periodic
    extension to the line (valid while n < L).
    """
    grid = signs.signs if isinstance(signs, SignField) else np.asarray(signs, dtype=bool)
    if n < 0 or n >= grid.shape[0]:
        raise ValueError(f"horizon n = {n} outside the recorded range")
    width = grid.shape[1]
    seeds = tuple(sorted(int(p) for p in seeds))
    if not seeds:
        raise ValueError("seed set must be non-empty")
    for p in seeds:
        if not grid[n, p % width]:
            raise NotInEventError(f"seed site {p} is not positive at time {n}")
    points = {(p, n) for p in seeds}
    frontier = sorted(points)
    for t in range(n - 1, -1, -1):
        grown: set[int] = set()
        for (p, _tt) in frontier:
            if grid[t, p % width] and grid[t, (p + 1) % width]:
                grown.add(p)
                grown.add(p + 1)
        points.update((q, t) for q in grown)
        frontier = [(q, t) for q in sorted(grown)]
    return Cluster(frozenset(points), seeds, n)


def boundary(cluster: Cluster) -> ClusterBoundary:
    pts = cluster.points
    bd = {
        (p, t)
        for (p, t) in pts
        if t == 0 or (p, t - 1) not in pts or (p + 1, t - 1) not in pts
    }
    return ClusterBoundary(frozenset(bd))


def connected_components(cluster: Cluster) -> list:
    remaining = set(cluster.points)
    comps = []
    while remaining:
        root = remaining.pop()
        comp = {root}
        stack = [root]
        while stack:
            p, t = stack.pop()
            for dp, dt in _ADJACENCY:
                nb = (p + dp, t + dt)
                if nb in remaining:
                    remaining.remove(nb)
                    comp.add(nb)
                    stack.append(nb)
        comps.append(comp)
    # stable order: by leftmost seed
    comps.sort(key=lambda c: min(p for (p, t) in c))
    return comps


def _trace_component(comp: set, horizon: int) -> tuple[int, int, int]:
    """Clockwise boundary walk; returns (n_d, n_v, n_h) jump counts."""
    seeds = sorted(p for (p, t) in comp if t == horizon)
    start = (max(seeds), horizon)
    end = (min(seeds), horizon)
    counts = {name: 0 for name in _CW_ORDER}
    current = start
    backtrack = "E"  # as if the loop arrived across the top moving west
    steps = 0
    limit = 6 * len(comp) + 12
    moved = False
    while True:
        idx = _CW_ORDER.index(backtrack)
        nxt = None
        for k in range(1, 7):
            name = _CW_ORDER[(idx + k) % 6]
            dp, dt = _DIRS[name]
            cand = (current[0] + dp, current[1] + dt)
            if cand in comp:
                nxt = (name, cand)
                break
        if nxt is None:
            if moved:
                raise TraceClosureError("walk stranded before reaching the end seed")
            break  # isolated point: zero jumps
        name, cand = nxt
        counts[name] += 1
        moved = True
        dp, dt = _DIRS[name]
        backtrack = _opposite(name)
        current = cand
        steps += 1
        if current == end:
            break
        if steps > limit:
            raise TraceClosureError("walk failed to close within the step budget")
    if counts["E"]:
        raise TraceClosureError("eastward move encountered; trace inconsistent")
    n_d = counts["SE"] + counts["S"]
    n_v = counts["N"] + counts["NW"]
    n_h = counts["W"] + counts["NW"] + counts["S"]
    return n_d, n_v, n_h


def _opposite(name: str) -> str:
    dp, dt = _DIRS[name]
    for other, (op, ot) in _DIRS.items():
        if (op, ot) == (-dp, -dt):
            return other
    raise AssertionError("direction table inconsistent")


def analyze_geometry(cluster: Cluster) -> OuterPath:
    """Component-wise outer-path jump counts with the invariant checks."""
    bd = boundary(cluster)
    comps = connected_components(cluster)
    geoms = []
    for comp in comps:
        comp_seeds = tuple(sorted(p for (p, t) in comp if t == cluster.horizon))
        n_d, n_v, n_h = _trace_component(comp, cluster.horizon)
        bsize = sum(1 for pt in comp if pt in bd.points)
        geom = ComponentGeometry(comp_seeds, n_d, n_v, n_h, bsize)
        if n_d != n_v:
            raise TraceClosureError(f"diagonal/vertical mismatch: {geom}")
        if n_h < n_d + len(comp_seeds) - 1:
            raise TraceClosureError(f"horizontal count too small: {geom}")
        if bsize < n_h + 1:
            raise TraceClosureError(f"boundary smaller than n_h + 1: {geom}")
        geoms.append(geom)
    return OuterPath(
        components=tuple(geoms),
        n_d=sum(g.n_d for g in geoms),
        n_v=sum(g.n_v for g in geoms),
        n_h=sum(g.n_h for g in geoms),
    )


def peierls_weight(bd: ClusterBoundary, alpha0: float, alpha: float) -> float:
    """alpha0^(boundary points at t >= 1) * alpha^(boundary points at t = 0)."""
    if not (0.0 <= alpha0 < 1.0 and 0.0 <= alpha < 1.0):
        raise ValueError("alpha0 and alpha must lie in [0, 1)")
    upper = sum(1 for (p, t) in bd.points if t >= 1)
    base = sum(1 for (p, t) in bd.points if t == 0)
    return alpha0**upper * alpha**base


# -- exhaustive enumeration ---------------------------------------------------


def canonical_seed_sets(lambda_size: int, n: int) -> list:
    """Translation-canonical seed sets: min site 0, gaps 1..n+2.

    Seeds further than n+1 apart can never interact within horizon n, so
    gap n+2 represents every wider configuration.
    """
    if lambda_size < 1:
        raise ValueError("lambda_size must be >= 1")
    if lambda_size == 1:
        return [(0,)]
    sets = []
    max_gap = n + 2
    for gaps in _gap_tuples(lambda_size - 1, max_gap):
        seeds = [0]
        for g in gaps:
            seeds.append(seeds[-1] + g)
        sets.append(tuple(seeds))
    return sets


def _gap_tuples(k: int, max_gap: int):
    if k == 0:
        yield ()
        return
    for g in range(1, max_gap + 1):
        for rest in _gap_tuples(k - 1, max_gap):
            yield (g,) + rest


def enumerate_clusters(
    lambda_size: int | None,
    n: int,
    max_points: int = 24,
    seeds=None,
) -> list:
    """All clusters realizable from some sign field, each exactly once.

    Enumerates growth decisions slice by slice: a subset of the current
    slice grows (contributing both children); a choice is consistent only
    if no non-grower ends up with both children present, since the rules
    would then force its growth.  Deterministic, sorted output.
    """
    if max_points > 24:
        raise ValueError("max_points capped at 24 (enumeration is exponential)")
    if seeds is not None:
        seed_sets = [tuple(sorted(int(p) for p in seeds))]
    else:
        if lambda_size is None:
            raise ValueError("need lambda_size or explicit seeds")
        seed_sets = canonical_seed_sets(lambda_size, n)
    out = []
    for seed_set in seed_sets:
        out.extend(_enumerate_for_seeds(seed_set, n, max_points))
    out.sort(key=lambda c: (c.seeds, sorted(c.points)))
    return out


def _enumerate_for_seeds(seed_set: tuple, n: int, cap: int) -> list:
    results = []
    top = frozenset((p, n) for p in seed_set)
    if len(top) > cap:
        raise BudgetExceededError(f"seed row alone exceeds {cap} points")

    def rec(points: set, upper: list, t: int) -> None:
        if t < 0:
            results.append(Cluster(frozenset(points), seed_set, n))
            return
        upper_sorted = sorted(upper)
        k = len(upper_sorted)
        for mask in range(1 << k):
            growers = [upper_sorted[i] for i in range(k) if mask >> i & 1]
            lower = set()
            for p in growers:
                lower.add(p)
                lower.add(p + 1)
            # a non-grower with both children present is unrealizable
            ok = all(
                (q in growers) or not (q in lower and q + 1 in lower)
                for q in upper_sorted
            )
            if not ok:
                continue
            if len(points) + len(lower) > cap:
                raise BudgetExceededError(
                    f"cluster would exceed {cap} points at horizon {n}"
                )
            pts = points | {(q, t) for q in lower}
            rec(pts, sorted(lower), t - 1)

    rec(set(top), list(seed_set), n - 1)
    return results


def cluster_to_sign_field(cluster: Cluster) -> tuple:
    """A sign field realizing the cluster (positive exactly on its points).

    Returns (field, offset): the cluster's site p maps to column p - offset.
    Two padding columns on each side stay negative.
    """
    sites = [p for (p, t) in cluster.points]
    lo, hi = min(sites) - 2, max(sites) + 2
    grid = np.zeros((cluster.horizon + 1, hi - lo + 1), dtype=bool)
    for (p, t) in cluster.points:
        grid[t, p - lo] = True
    return SignField(grid), lo


def overlay_text(cluster: Cluster, signs: SignField | np.ndarray) -> str:
    """Space-time diagram: '#' cluster point, '+' other positive, '.' negative.

    Rows run from time n (top) down to 0; columns span the cluster extent
    plus one site of margin, read periodically from the sign record.
    """
    grid = signs.signs if isinstance(signs, SignField) else np.asarray(signs, dtype=bool)
    width = grid.shape[1]
    sites = [p for (p, t) in cluster.points]
    lo, hi = min(sites) - 1, max(sites) + 1
    lines = []
    for t in range(cluster.horizon, -1, -1):
        row = []
        for p in range(lo, hi + 1):
            if (p, t) in cluster.points:
                row.append("#")
            elif grid[t, p % width]:
                row.append("+")
            else:
                row.append(".")
        lines.append("".join(row))
    return "\n".join(lines) + "\n"
