"""Exploration graph over observed free space.

Vertices are sampled in Free voxels, connected by collision-checked edges,
and scored by ray-cast volumetric gain. A vertex's exploration gain is the
path sum of distance-discounted volumetric gains, further discounted by the
angular deviation of the vertex from a preferred exploration heading; the
top-ranked, spacing-filtered vertices become frontier centers for
prediction.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import fibonacci_directions, key_center, point_to_key, \
    traverse_ray, traverse_segment
from .occupancy import OccupancyMap, VoxelState


class GraphConstructionError(RuntimeError):
    pass


@dataclass
class Vertex:
    id: int
    position: np.ndarray
    gain_counts: tuple[int, int, int] | None = None  # (unknown, free, occupied)


@dataclass
class FrontierGraph:
    vertices: dict[int, Vertex]
    edges: dict[int, list[tuple[int, float]]]  # id -> [(neighbor, length), ...]
    root_id: int

    def edge_list(self) -> list[tuple[int, int, float]]:
        seen = []
        for a, nbrs in sorted(self.edges.items()):
            for b, length in nbrs:
                if a < b:
                    seen.append((a, b, length))
        return seen


@dataclass(frozen=True)
class GraphParams:
    n_samples: int = 150
    connect_radius: float = 1.5
    bounds_lo: tuple[float, float, float] = (-8.0, -8.0, -8.0)
    bounds_hi: tuple[float, float, float] = (8.0, 8.0, 8.0)
    seed: int = 0


@dataclass(frozen=True)
class FovParams:
    n_rays: int = 128
    max_range: float = 5.0


@dataclass(frozen=True)
class GainParams:
    gamma_s: float = 0.5
    gamma_d: float = 0.3
    w_unknown: float = 1.0
    w_free: float = 0.0
    w_occupied: float = 0.0
    exploration_heading: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if self.gamma_s < 0 or self.gamma_d < 0:
            raise ValueError("gamma weights must be nonnegative")
        n = math.sqrt(sum(c * c for c in self.exploration_heading))
        if n == 0:
            raise ValueError("exploration heading must be nonzero")
        object.__setattr__(self, "exploration_heading",
                           tuple(c / n for c in self.exploration_heading))


def _segment_free(map_: OccupancyMap, a, b) -> bool:
    """True when no Occupied voxel lies on the segment a->b."""
    for key in traverse_segment(a, b, map_.resolution):
        if map_.classify(key) is VoxelState.OCCUPIED:
            return False
    return True


def build_graph(map_: OccupancyMap, root_pose, params: GraphParams
                ) -> FrontierGraph:
    """Sample vertices in Free voxels, connect within radius, keep the
    component reachable from the root.

    Raises GraphConstructionError if the root is not in free space.
    """
    root = np.asarray(root_pose, dtype=float)
    if map_.classify(point_to_key(root, map_.resolution)) is not VoxelState.FREE:
        raise GraphConstructionError("root pose is not in observed free space")

    lo = np.asarray(params.bounds_lo, dtype=float)
    hi = np.asarray(params.bounds_hi, dtype=float)
    free_keys = sorted(
        k for k, c in map_.cells.items()
        if c.observed and map_.classify(k) is VoxelState.FREE
        and np.all(key_center(k, map_.resolution) >= lo)
        and np.all(key_center(k, map_.resolution) <= hi))
    rng = np.random.default_rng(params.seed)
    if len(free_keys) > params.n_samples:
        idx = rng.choice(len(free_keys), size=params.n_samples, replace=False)
        sampled = [free_keys[i] for i in sorted(idx)]
    else:
        sampled = free_keys

    vertices = {0: Vertex(0, root)}
    for n, key in enumerate(sampled, start=1):
        vertices[n] = Vertex(n, key_center(key, map_.resolution))

    edges: dict[int, list[tuple[int, float]]] = {vid: [] for vid in vertices}
    ids = sorted(vertices)
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            pa, pb = vertices[a].position, vertices[b].position
            length = float(np.linalg.norm(pb - pa))
            if length == 0.0 or length > params.connect_radius:
                continue
            if _segment_free(map_, pa, pb):
                edges[a].append((b, length))
                edges[b].append((a, length))

    # keep only the root's connected component
    reachable = {0}
    stack = [0]
    while stack:
        v = stack.pop()
        for nbr, _ in edges[v]:
            if nbr not in reachable:
                reachable.add(nbr)
                stack.append(nbr)
    vertices = {vid: v for vid, v in vertices.items() if vid in reachable}
    edges = {vid: [(n, l) for n, l in nbrs if n in reachable]
             for vid, nbrs in edges.items() if vid in reachable}
    return FrontierGraph(vertices=vertices, edges=edges, root_id=0)


def volumetric_gain(map_: OccupancyMap, position, fov: FovParams
                    ) -> tuple[int, int, int]:
    """Ray-cast visibility counts from a point: (unknown, free, occupied).

    Rays follow a fixed near-uniform sphere pattern; each ray walks voxels
    until its first Occupied hit (counted) or max range. A voxel is counted
    once per call no matter how many rays touch it.
    """
    position = np.asarray(position, dtype=float)
    seen_unknown: set = set()
    seen_free: set = set()
    seen_occupied: set = set()
    for direction in fibonacci_directions(fov.n_rays):
        for key, _, _ in traverse_ray(position, direction, fov.max_range,
                                      map_.resolution):
            state = map_.classify(key)
            if state is VoxelState.OCCUPIED:
                seen_occupied.add(key)
                break
            if state is VoxelState.FREE:
                seen_free.add(key)
            else:
                seen_unknown.add(key)
    return len(seen_unknown), len(seen_free), len(seen_occupied)


def compute_gains(map_: OccupancyMap, graph: FrontierGraph,
                  fov: FovParams) -> None:
    """Fill gain_counts for every vertex in place."""
    for vid in sorted(graph.vertices):
        v = graph.vertices[vid]
        v.gain_counts = volumetric_gain(map_, v.position, fov)


def shortest_paths(graph: FrontierGraph
                   ) -> dict[int, tuple[float, list[int]]]:
    """Exact single-source shortest paths from the root by edge length.

    Returns id -> (distance, path of vertex ids from root). Unreachable
    vertices are absent from the result.
    """
    dist = {graph.root_id: 0.0}
    prev: dict[int, int] = {}
    heap = [(0.0, graph.root_id)]
    done: set[int] = set()
    while heap:
        d, v = heapq.heappop(heap)
        if v in done:
            continue
        done.add(v)
        for nbr, length in graph.edges.get(v, ()):
            nd = d + length
            if nd < dist.get(nbr, math.inf):
                dist[nbr] = nd
                prev[nbr] = v
                heapq.heappush(heap, (nd, nbr))
    out: dict[int, tuple[float, list[int]]] = {}
    for vid in dist:
        path = [vid]
        while path[-1] != graph.root_id:
            path.append(prev[path[-1]])
        out[vid] = (dist[vid], path[::-1])
    return out


def _volumetric_weight(counts: tuple[int, int, int], params: GainParams) -> float:
    nu, nf, no = counts
    return params.w_unknown * nu + params.w_free * nf + params.w_occupied * no


def exploration_gain(graph: FrontierGraph,
                     paths: dict[int, tuple[float, list[int]]],
                     params: GainParams) -> list[tuple[int, float]]:
    """Rank reachable vertices by exploration gain, descending.

    gain(v) = exp(-gamma_s * S(v)) * sum over path vertices u of
    VG(u) * exp(-gamma_d * D(root, u)), with S the angle between the
    root->v direction and the exploration heading (0 for the root itself)
    and D the cumulative path distance. Ties break on vertex id.
    """
    root = graph.vertices[graph.root_id].position
    heading = np.asarray(params.exploration_heading, dtype=float)
    scored: list[tuple[int, float]] = []
    for vid in sorted(graph.vertices):
        if vid not in paths:
            continue
        _, path = paths[vid]
        total = 0.0
        for u in path:
            counts = graph.vertices[u].gain_counts
            if counts is None:
                raise ValueError(f"vertex {u} has no volumetric gain counts")
            total += (_volumetric_weight(counts, params)
                      * math.exp(-params.gamma_d * paths[u][0]))
        offset = graph.vertices[vid].position - root
        norm = float(np.linalg.norm(offset))
        if norm == 0.0:
            angle = 0.0
        else:
            cosang = float(np.dot(offset / norm, heading))
            angle = math.acos(min(1.0, max(-1.0, cosang)))
        scored.append((vid, math.exp(-params.gamma_s * angle) * total))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored


def select_frontiers(graph: FrontierGraph, ranked: list[tuple[int, float]],
                     d_m: float, n_max: int,
                     max_frontier_range: float = 7.0) -> list[Vertex]:
    """Greedy spacing-constrained pick of the top-ranked vertices.

    A vertex is accepted iff it lies within max_frontier_range of the root
    and at least d_m from every vertex accepted so far; the sweep stops
    after n_max acceptances.
    """
    if d_m <= 0:
        raise ValueError("d_m must be positive")
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    root = graph.vertices[graph.root_id].position
    chosen: list[Vertex] = []
    for vid, _ in ranked:
        v = graph.vertices[vid]
        if float(np.linalg.norm(v.position - root)) > max_frontier_range:
            continue
        if any(float(np.linalg.norm(v.position - c.position)) < d_m
               for c in chosen):
            continue
        chosen.append(v)
        if len(chosen) >= n_max:
            break
    return chosen


def export_graph(graph: FrontierGraph, path) -> None:
    """Text dump: one V line per vertex, one E line per undirected edge."""
    with open(path, "w") as fh:
        for vid in sorted(graph.vertices):
            v = graph.vertices[vid]
            nu, nf, no = v.gain_counts if v.gain_counts else (0, 0, 0)
            x, y, z = v.position
            fh.write(f"V {vid} {x!r} {y!r} {z!r} {nu} {nf} {no}\n")
        for a, b, length in graph.edge_list():
            fh.write(f"E {a} {b} {length!r}\n")
