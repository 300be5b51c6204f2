"""Topology-preserving 3D thinning and skeleton graph extraction.

Thinning peels border voxels in six face-direction sub-iterations, deleting
only simple points (26-connected foreground, 6-connected background) that are
not curve endpoints. The graph classifies skeleton voxels by 26-neighbour
count, merges touching junction voxels (and endpoint voxels stuck directly on
a junction) into one node, and traces branches between nodes.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage

from .errors import ContractError
from .volume_io import Spacing

_S26 = ndimage.generate_binary_structure(3, 3)

# neighbourhood positions as (dz, dy, dx), index = 9*(dz+1) + 3*(dy+1) + (dx+1)
_OFFSETS = list(itertools.product((-1, 0, 1), repeat=3))
_CENTER = 13
_NBRS = [i for i in range(27) if i != _CENTER]
_N6 = [i for i, o in enumerate(_OFFSETS) if sum(map(abs, o)) == 1]
_N18 = [i for i, o in enumerate(_OFFSETS) if 1 <= sum(map(abs, o)) <= 2]


def _adjacency(order: int) -> dict[int, list[int]]:
    """Adjacency among the 26 neighbourhood positions: 26- (order 3) or 6- (order 1) style."""
    adj = {}
    for i in _NBRS:
        oi = _OFFSETS[i]
        adj[i] = [
            j for j in _NBRS
            if j != i and max(abs(a - b) for a, b in zip(oi, _OFFSETS[j])) == 1
            and sum(abs(a - b) for a, b in zip(oi, _OFFSETS[j])) <= order
        ]
    return adj


_ADJ26 = _adjacency(3)
_ADJ6 = _adjacency(1)

# face directions for the sub-iterations, as (dz, dy, dx)
DIRECTIONS = ((0, -1, 0), (0, 1, 0), (0, 0, 1), (0, 0, -1), (-1, 0, 0), (1, 0, 0))

_STEPS = [o for o in _OFFSETS if o != (0, 0, 0)]


def _components(members: set[int], adj: dict[int, list[int]]) -> list[set[int]]:
    seen: set[int] = set()
    comps = []
    for s in sorted(members):
        if s in seen:
            continue
        comp = {s}
        stack = [s]
        seen.add(s)
        while stack:
            cur = stack.pop()
            for nb in adj[cur]:
                if nb in members and nb not in seen:
                    seen.add(nb)
                    comp.add(nb)
                    stack.append(nb)
        comps.append(comp)
    return comps


@lru_cache(maxsize=None)
def is_simple(key: int) -> bool:
    """Whether the centre of a 3x3x3 neighbourhood is a simple point.

    ``key`` packs the 27 voxels as bits (bit i = position i, centre ignored).
    Removing a simple point changes neither the 26-connectivity of the
    foreground nor the 6-connectivity of the background.
    """
    fg = {i for i in _NBRS if key >> i & 1}
    if not fg or len(fg) == 26:
        return False
    if len(_components(fg, _ADJ26)) != 1:
        return False
    bg = {i for i in _N18 if not key >> i & 1}
    touching = [c for c in _components(bg, _ADJ6) if c & set(_N6)]
    return len(touching) == 1


def _all_keys(img: np.ndarray, pts: np.ndarray) -> np.ndarray:
    keys = np.zeros(len(pts), dtype=np.int64)
    z, y, x = pts.T
    for i, (dz, dy, dx) in enumerate(_OFFSETS):
        keys |= img[z + dz, y + dy, x + dx].astype(np.int64) << i
    return keys


def _n_neighbours(key: int) -> int:
    return bin(key & ~(1 << _CENTER)).count("1")


@dataclass
class Skeleton:
    """Skeleton voxels of one cell as (z, y, x) grid indices in raster order."""

    label: int
    voxels: np.ndarray
    spacing: Spacing
    shape: tuple[int, int, int] | None = None

    def __len__(self) -> int:
        return len(self.voxels)

    def to_mask(self, shape=None) -> np.ndarray:
        shape = shape or self.shape
        m = np.zeros(shape, dtype=bool)
        if len(self.voxels):
            m[tuple(self.voxels.T)] = True
        return m


def _shift(img: np.ndarray, d) -> np.ndarray:
    """``out[p] = img[p + d]``, zero where ``p + d`` leaves the array."""
    out = np.zeros_like(img)
    src = tuple(slice(max(o, 0), n + min(o, 0)) for o, n in zip(d, img.shape))
    dst = tuple(slice(max(-o, 0), n + min(-o, 0)) for o, n in zip(d, img.shape))
    out[dst] = img[src]
    return out


def thin(mask: np.ndarray) -> np.ndarray:
    """Thin a boolean volume (any number of components) to a curve skeleton.

    Each pass runs one sub-iteration per face direction d. Border voxels
    (d-neighbour background) are split into eight parity subfields; no two
    voxels of a subfield are 26-adjacent, so the simple non-endpoint voxels
    of a subfield (endpoint = exactly one 26-neighbour) can be deleted
    together. Subfields are visited in a fixed order, each re-tested on the
    current image. Stops after a pass with no deletion.
    """
    img = np.pad(np.asarray(mask, dtype=np.uint8), 1)
    while True:
        changed = False
        for d in DIRECTIONS:
            border = np.argwhere((img == 1) & (_shift(img, d) == 0))
            if not len(border):
                continue
            parity = (border[:, 0] % 2) * 4 + (border[:, 1] % 2) * 2 + border[:, 2] % 2
            for q in range(8):
                pts = border[parity == q]
                if not len(pts):
                    continue
                keys = _all_keys(img, pts).tolist()
                doomed = [p for p, k in zip(pts, keys) if _n_neighbours(k) != 1 and is_simple(k)]
                if doomed:
                    img[tuple(np.array(doomed).T)] = 0
                    changed = True
        if not changed:
            break
    return img[1:-1, 1:-1, 1:-1].astype(bool)


def skeletonize(mask: np.ndarray, spacing: Spacing = (1.0, 1.0, 1.0), label: int = 1) -> Skeleton:
    """Skeleton of one nonempty, 26-connected cell mask (a full-size boolean volume)."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ContractError("cannot skeletonize an empty mask")
    sl = ndimage.find_objects(mask.astype(np.uint8))[0]
    crop = mask[sl]
    _, n = ndimage.label(crop, structure=_S26)
    if n != 1:
        raise ContractError(f"mask has {n} 26-connected components, expected 1")
    thinned = thin(crop)
    offset = np.array([s.start for s in sl])
    vox = np.argwhere(thinned) + offset
    return Skeleton(label, vox, tuple(spacing), tuple(mask.shape))


# -- graph -----------------------------------------------------------------

@dataclass
class Node:
    voxel: tuple[int, int, int]
    kind: str  # "endpoint", "junction" or "isolated"
    members: tuple[tuple[int, int, int], ...] = ()
    degree: int = 0


@dataclass
class Branch:
    path: list[tuple[int, int, int]]
    length_um: float
    start: int | None
    end: int | None
    # voxels of a dissolved two-ended junction clump that the path runs through but does not visit
    absorbed: tuple[tuple[int, int, int], ...] = ()


@dataclass
class SkeletonGraph:
    label: int
    nodes: list[Node] = field(default_factory=list)
    branches: list[Branch] = field(default_factory=list)
    spacing: Spacing = (1.0, 1.0, 1.0)

    @property
    def n_endpoints(self) -> int:
        return sum(n.kind == "endpoint" for n in self.nodes)

    @property
    def n_junctions(self) -> int:
        return sum(n.kind == "junction" for n in self.nodes)


def polyline_length(path, spacing: Spacing) -> float:
    """Sum of anisotropic Euclidean step lengths along a (z, y, x) voxel path."""
    sx, sy, sz = spacing
    total = 0.0
    for a, b in zip(path, path[1:]):
        total += math.sqrt(((a[0] - b[0]) * sz) ** 2 + ((a[1] - b[1]) * sy) ** 2 + ((a[2] - b[2]) * sx) ** 2)
    return total


def _neighbours(v, vox: set) -> list:
    z, y, x = v
    return [(z + a, y + b, x + c) for a, b, c in _STEPS if (z + a, y + b, x + c) in vox]


def _cluster_path(a, b, members: set) -> list:
    """Shortest 26-path from a to b inside a junction cluster (inclusive)."""
    prev = {a: None}
    queue = [a]
    for cur in queue:
        if cur == b:
            break
        for nb in _neighbours(cur, members):
            if nb not in prev:
                prev[nb] = cur
                queue.append(nb)
    out = [b]
    while prev[out[-1]] is not None:
        out.append(prev[out[-1]])
    return out[::-1]


def build_graph(skeleton: Skeleton, absorb_stubs: bool = True) -> SkeletonGraph:
    """Nodes, branches and micron branch lengths of a skeleton."""
    spacing = skeleton.spacing
    graph = SkeletonGraph(skeleton.label, spacing=spacing)
    vox = {tuple(int(c) for c in v) for v in skeleton.voxels}
    if not vox:
        return graph
    order = sorted(vox)
    nbrs = {v: _neighbours(v, vox) for v in order}

    # junction clusters; an endpoint voxel touching a junction voxel is part of its clump
    junction = {v for v in order if len(nbrs[v]) >= 3}
    if absorb_stubs:
        junction |= {v for v in order if len(nbrs[v]) == 1 and nbrs[v][0] in junction}
    cluster_of: dict = {}
    clusters: list[set] = []
    for v in order:
        if v in junction and v not in cluster_of:
            comp, stack = {v}, [v]
            cluster_of[v] = len(clusters)
            while stack:
                cur = stack.pop()
                for nb in nbrs[cur]:
                    if nb in junction and nb not in cluster_of:
                        cluster_of[nb] = len(clusters)
                        comp.add(nb)
                        stack.append(nb)
            clusters.append(comp)
    changed = True
    while changed:
        changed = False
        for v in order:
            if v in cluster_of or len(nbrs[v]) != 2:
                continue
            owners = {cluster_of.get(nb) for nb in nbrs[v]}
            if len(owners) == 1 and None not in owners:
                c = owners.pop()
                cluster_of[v] = c
                clusters[c].add(v)
                changed = True

    node_of: dict = {}
    nodes: list[Node] = []
    for v in order:
        if v in node_of:
            continue
        if v in cluster_of:
            members = sorted(clusters[cluster_of[v]])
            nid = len(nodes)
            nodes.append(Node(members[0], "junction", tuple(members)))
            for m in members:
                node_of[m] = nid
        elif len(nbrs[v]) <= 1:
            node_of[v] = len(nodes)
            nodes.append(Node(v, "endpoint" if nbrs[v] else "isolated", (v,)))

    raw: list[list] = []
    seen_steps: set = set()
    visited: set = set()
    for v in order:
        if v not in node_of:
            continue
        for u in nbrs[v]:
            if node_of.get(u) == node_of[v] or (v, u) in seen_steps:
                continue
            path, prev, cur = [v, u], v, u
            while cur not in node_of:
                visited.add(cur)
                nxt = [w for w in nbrs[cur] if w != prev]
                prev, cur = cur, nxt[0]
                path.append(cur)
            seen_steps.add((v, u))
            seen_steps.add((path[-1], path[-2]))
            raw.append(path)
    # slab-only cycles have no node to start from
    for v in order:
        if v in node_of or v in visited:
            continue
        path, prev, cur = [v], None, v
        while True:
            visited.add(cur)
            nxt = [w for w in nbrs[cur] if w != prev and (w not in visited or w == v)]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            path.append(cur)
            if cur == v:
                break
        raw.append(path)

    # junction clusters with fewer than three branch ends are not branch points
    def ends(p):
        return node_of.get(p[0]), node_of.get(p[-1])

    absorbed: dict[int, set] = {}  # keyed by id() of live path lists in ``raw``
    while True:
        degree = [0] * len(nodes)
        for p in raw:
            for e in ends(p):
                if e is not None:
                    degree[e] += 1
        weak = [i for i, n in enumerate(nodes) if n.kind == "junction" and degree[i] == 2]
        if not weak:
            break
        nid = weak[0]
        members = set(nodes[nid].members)
        touching = [i for i, p in enumerate(raw) if nid in ends(p)]
        if len(touching) == 1:
            # a loop leaving and re-entering the same cluster
            p = raw[touching[0]]
            p[-1:] = _cluster_path(p[-1], p[0], members)
            absorbed[id(p)] = absorbed.get(id(p), set()) | (members - set(p))
        else:
            p1, p2 = raw[touching[0]], raw[touching[1]]
            extra = absorbed.pop(id(p1), set()) | absorbed.pop(id(p2), set())
            if node_of.get(p1[-1]) != nid:
                p1 = p1[::-1]
            if node_of.get(p2[0]) != nid:
                p2 = p2[::-1]
            bridge = _cluster_path(p1[-1], p2[0], members)
            merged = p1[:-1] + bridge + p2[1:]
            raw = [p for i, p in enumerate(raw) if i not in touching[:2]] + [merged]
            absorbed[id(merged)] = extra | (members - set(merged))
        for m in members:
            node_of.pop(m, None)
        nodes[nid].kind = "dropped"

    for i, n in enumerate(nodes):
        if n.kind == "junction" and degree[i] == 1:
            n.kind = "endpoint"
        elif n.kind == "junction" and degree[i] == 0:
            n.kind = "isolated"

    keep = [i for i, n in enumerate(nodes) if n.kind != "dropped"]
    remap = {old: new for new, old in enumerate(keep)}
    graph.nodes = [nodes[i] for i in keep]
    for i in keep:
        graph.nodes[remap[i]].degree = degree[i]
    for p in sorted(raw):
        s, e = ends(p)
        graph.branches.append(Branch(
            path=p,
            length_um=polyline_length(p, spacing),
            start=remap.get(s),
            end=remap.get(e),
            absorbed=tuple(sorted(absorbed.get(id(p), ()))),
        ))
    return graph


@dataclass
class BranchStats:
    n_endpoints: int
    n_branchpoints: int
    n_branches: int
    branch_len_avg: float | None
    branch_len_max: float | None
    branch_len_min: float | None
    total_length: float


def branch_metrics(graph: SkeletonGraph) -> BranchStats:
    """Endpoint/junction counts and branch length statistics (None with no branches)."""
    lengths = [b.length_um for b in graph.branches]
    if lengths:
        avg, mx, mn = sum(lengths) / len(lengths), max(lengths), min(lengths)
    else:
        avg = mx = mn = None
    return BranchStats(graph.n_endpoints, graph.n_junctions, len(lengths), avg, mx, mn, float(sum(lengths)))
