"""Unit-disk topologies, range density and f-covering checks.

A topology is a set of node positions in a square region plus a transmission
radius; two nodes are neighbours iff their distance is at most the radius.
A network is *f-covering* when its graph is (f+1)-vertex-connected, which is
decided here with unit-capacity max-flow on the vertex-split digraph.
"""
from __future__ import annotations

import math
import random
from collections import deque
from itertools import combinations
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Set, Union

# absorbs rounding on chords of exactly ``radius`` (e.g. opposite clique seats)
_RANGE_EPS = 1e-9
MAX_CONSECUTIVE_REJECTIONS = 10_000


class GenerationError(RuntimeError):
    pass


class Point(NamedTuple):
    x: float
    y: float


def in_range(a: Point, b: Point, radius: float) -> bool:
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    return math.sqrt(dx * dx + dy * dy) <= radius + _RANGE_EPS


class Topology:
    """Node positions plus the derived symmetric unit-disk adjacency."""

    def __init__(self, sites: Mapping[int, Point], radius: float, region: float):
        self.sites: Dict[int, Point] = {k: Point(*p) for k, p in sites.items()}
        self.radius = float(radius)
        self.region = float(region)
        self.adjacency: Dict[int, Set[int]] = _unit_disk(self.sites, self.radius)

    def __len__(self) -> int:
        return len(self.sites)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Topology):
            return NotImplemented
        return (self.sites, self.radius, self.region) == (other.sites, other.radius, other.region)

    def __repr__(self) -> str:
        return f"Topology(n={len(self)}, radius={self.radius}, region={self.region})"

    @property
    def nodes(self) -> List[int]:
        return sorted(self.sites)

    def neighbors(self, i: int) -> Set[int]:
        return self.adjacency[i]

    def range_set(self, i: int) -> Set[int]:
        if i not in self.sites:
            raise KeyError(f"unknown node {i!r}")
        return self.adjacency[i] | {i}

    def density(self) -> int:
        if not self.sites:
            raise ValueError("density of an empty topology is undefined")
        return min(len(a) for a in self.adjacency.values()) + 1

    def is_f_covering(self, f: int) -> bool:
        return is_k_connected(self.adjacency, f + 1)

    def moved(self, node: int, to: Point) -> "Topology":
        sites = dict(self.sites)
        sites[node] = Point(*to)
        return Topology(sites, self.radius, self.region)

    def without(self, removed: Iterable[int]) -> "Topology":
        gone = set(removed)
        return Topology({k: p for k, p in self.sites.items() if k not in gone},
                        self.radius, self.region)

    # -- plain-text format ---------------------------------------------------

    def dumps(self) -> str:
        lines = [f"{len(self.sites)} {self.radius!r} {self.region!r}"]
        for k in self.nodes:
            p = self.sites[k]
            lines.append(f"{k} {p.x!r} {p.y!r}")
        return "\n".join(lines) + "\n"

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "Topology":
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not rows or len(rows[0]) != 3:
            raise ValueError("topology header must be 'N radius regionSide'")
        n, radius, region = int(rows[0][0]), float(rows[0][1]), float(rows[0][2])
        sites = {}
        for row in rows[1:]:
            if len(row) != 3:
                raise ValueError(f"bad topology line: {' '.join(row)!r}")
            sites[int(row[0])] = Point(float(row[1]), float(row[2]))
        if len(sites) != n:
            raise ValueError(f"header announces {n} nodes, found {len(sites)}")
        return cls(sites, radius, region)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Topology":
        return cls.loads(Path(path).read_text())


def _unit_disk(sites: Mapping[int, Point], radius: float) -> Dict[int, Set[int]]:
    adj: Dict[int, Set[int]] = {k: set() for k in sites}
    items = sorted(sites.items())
    for a, (ka, pa) in enumerate(items):
        for kb, pb in items[a + 1:]:
            if in_range(pa, pb, radius):
                adj[ka].add(kb)
                adj[kb].add(ka)
    return adj


# -- vertex connectivity -------------------------------------------------------

def local_node_connectivity(adj: Mapping[int, Set[int]], s: int, t: int, cutoff: int) -> int:
    """Number of internally vertex-disjoint s-t paths, counted up to ``cutoff``.

    ``s`` and ``t`` must be non-adjacent. Every other vertex v is split into
    (v, 0) -> (v, 1) with capacity 1; each edge u-v becomes (u, 1) -> (v, 0).
    """
    residual: Dict[tuple, Dict[tuple, int]] = {}

    def arc(u, v, cap):
        residual.setdefault(u, {})
        residual.setdefault(v, {})
        residual[u][v] = residual[u].get(v, 0) + cap
        residual[v].setdefault(u, 0)

    source, sink = (s, 1), (t, 0)
    for v, nbrs in adj.items():
        if v not in (s, t):
            arc((v, 0), (v, 1), 1)
        for u in nbrs:
            if v == t or u == s:
                continue
            arc((v, 1), (u, 0), 1)

    flow = 0
    while flow < cutoff:
        parent = {source: None}
        queue = deque([source])
        while queue and sink not in parent:
            u = queue.popleft()
            for v, cap in residual.get(u, {}).items():
                if cap > 0 and v not in parent:
                    parent[v] = u
                    queue.append(v)
        if sink not in parent:
            break
        v = sink
        while parent[v] is not None:
            u = parent[v]
            residual[u][v] -= 1
            residual[v][u] += 1
            v = u
        flow += 1
    return flow


def is_k_connected(adj: Mapping[int, Set[int]], k: int) -> bool:
    """Exact k-vertex-connectivity test (Esfahanian-Hakimi pair selection)."""
    n = len(adj)
    if k <= 0:
        return True
    if n < k + 1:
        return False
    if min(len(a) for a in adj.values()) < k:
        return False
    if all(len(a) == n - 1 for a in adj.values()):
        return True

    def enough(a: int, b: int) -> bool:
        # k common neighbours already give k disjoint two-hop paths
        if len(adj[a] & adj[b]) >= k:
            return True
        return local_node_connectivity(adj, a, b, k) >= k

    v = min(adj, key=lambda u: (len(adj[u]), u))
    for w in sorted(adj):
        if w != v and w not in adj[v] and not enough(v, w):
            return False
    for x, y in combinations(sorted(adj[v]), 2):
        if y not in adj[x] and not enough(x, y):
            return False
    return True


def is_f_covering(top: Topology, f: int) -> bool:
    return top.is_f_covering(f)


def density(top: Topology) -> int:
    return top.density()


def range_set(top: Topology, i: int) -> Set[int]:
    return top.range_set(i)


def _connected_without(adj: Mapping[int, Set[int]], removed: Set[int]) -> bool:
    alive = [v for v in adj if v not in removed]
    if not alive:
        return True
    seen = {alive[0]}
    stack = [alive[0]]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in removed and v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == len(alive)


def brute_force_f_covering(adj: Mapping[int, Set[int]], f: int) -> bool:
    """Oracle: (f+1)-connected iff n >= f+2 and no f-subset disconnects the graph."""
    nodes = sorted(adj)
    if len(nodes) < f + 2:
        return False
    for size in range(f + 1):
        for removed in combinations(nodes, size):
            if not _connected_without(adj, set(removed)):
                return False
    return True


# -- generation ----------------------------------------------------------------

def clique_seed(center: Point, radius: float, size: int, rotation: float = 0.0) -> List[Point]:
    """``size`` points equally spaced on a circle of radius ``radius / 2``."""
    half = radius / 2.0
    return [
        Point(center.x + half * math.cos(rotation + 2 * math.pi * i / size),
              center.y + half * math.sin(rotation + 2 * math.pi * i / size))
        for i in range(size)
    ]


def generate_topology(
    region: float,
    radius: float,
    n: int,
    f: int,
    rng: random.Random,
    min_degree: Optional[int] = None,
    mover_degree: Optional[int] = None,
    min_mover_neighbor_degree: Optional[int] = None,
) -> Topology:
    """Grow an f-covering unit-disk network node by node.

    Parameters
    ----------
    region, radius : float
        Side of the square region and transmission range, in metres.
    n : int
        Number of nodes to place.
    f : int
        Number of tolerated crashes.
    rng : random.Random
        Source of every random draw; same seed, same topology.
    min_degree : int, optional
        Neighbours a candidate point needs in the current graph to be
        accepted. Defaults to ``f + 1``; larger values target a higher range
        density, in which case the seed clique grows to ``min_degree + 1``.
    mover_degree, min_mover_neighbor_degree : int, optional
        When given, the result must contain a node with exactly
        ``mover_degree`` neighbours, all of which have at least
        ``min_mover_neighbor_degree`` neighbours (see :func:`find_mover`).

    Raises
    ------
    GenerationError
        After ``MAX_CONSECUTIVE_REJECTIONS`` rejected draws in a row, or when
        the mover constraint cannot be met.
    """
    if n < f + 2:
        raise GenerationError(f"need at least f+2={f + 2} nodes, got {n}")
    if radius > region:
        raise GenerationError(f"radius {radius} exceeds region side {region}")
    threshold = f + 1 if min_degree is None else max(min_degree, f + 1)
    seed_size = min(n, threshold + 1)

    half = radius / 2.0
    center = Point(rng.uniform(half, region - half), rng.uniform(half, region - half))
    rotation = rng.uniform(0.0, 2 * math.pi / seed_size)
    points = clique_seed(center, radius, seed_size, rotation)

    rejections = 0
    while len(points) < n:
        cand = Point(rng.uniform(0.0, region), rng.uniform(0.0, region))
        count = 0
        for p in points:
            if in_range(cand, p, radius):
                count += 1
                if count >= threshold:
                    break
        if count >= threshold:
            points.append(cand)
            rejections = 0
        else:
            rejections += 1
            if rejections >= MAX_CONSECUTIVE_REJECTIONS:
                raise GenerationError(
                    f"{rejections} consecutive rejections with {len(points)}/{n} nodes placed "
                    f"(min_degree={threshold}, radius={radius}, region={region})"
                )

    top = Topology(dict(enumerate(points)), radius, region)
    if not top.is_f_covering(f) or top.density() <= f + 1:
        raise GenerationError(f"generated graph is not {f}-covering")
    if mover_degree is not None:
        if find_mover(top, mover_degree, min_mover_neighbor_degree or 0) is None:
            raise GenerationError(
                f"no node with {mover_degree} neighbours whose neighbours all have "
                f">= {min_mover_neighbor_degree} neighbours"
            )
    return top


def find_mover(top: Topology, degree: int, min_neighbor_degree: int = 0) -> Optional[int]:
    """Pick the boundary-most node with exactly ``degree`` neighbours.

    "Boundary-most" means farthest from the centroid of all nodes. Every
    neighbour of the chosen node must itself have ``min_neighbor_degree``
    neighbours or more.
    """
    cx = sum(p.x for p in top.sites.values()) / len(top)
    cy = sum(p.y for p in top.sites.values()) / len(top)
    best, best_dist = None, -1.0
    for k in top.nodes:
        nbrs = top.adjacency[k]
        if len(nbrs) != degree:
            continue
        if any(len(top.adjacency[j]) < min_neighbor_degree for j in nbrs):
            continue
        p = top.sites[k]
        dist = math.hypot(p.x - cx, p.y - cy)
        if dist > best_dist:
            best, best_dist = k, dist
    return best
