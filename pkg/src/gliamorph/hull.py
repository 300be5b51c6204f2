"""Incremental 3D convex hull and its volume.

Integer input (voxel indices) is handled in exact int64 arithmetic, so
coplanar and collinear voxel centres never produce spurious facets.
"""
from __future__ import annotations

import numpy as np


class DegenerateHull(ValueError):
    """Points are collinear or coplanar: no 3D hull exists."""


def _initial_tetra(p: np.ndarray, eps: float):
    i0 = int(np.lexsort(p.T[::-1])[0])
    d = ((p - p[i0]) ** 2).sum(axis=1)
    i1 = int(np.argmax(d))
    if d[i1] <= eps:
        raise DegenerateHull("all points coincide")
    c = np.cross(p[i1] - p[i0], p - p[i0])
    c2 = (c * c).sum(axis=1)
    i2 = int(np.argmax(c2))
    if c2[i2] <= eps:
        raise DegenerateHull("points are collinear")
    n = np.cross(p[i1] - p[i0], p[i2] - p[i0])
    vol = (p - p[i0]) @ n
    i3 = int(np.argmax(np.abs(vol)))
    if abs(vol[i3]) <= eps:
        raise DegenerateHull("points are coplanar")
    return i0, i1, i2, i3


def convex_hull(points, seed: int = 0) -> list[tuple[int, int, int]]:
    """Outward-oriented triangular facets (index triples) of the hull of ``points``.

    Raises :class:`DegenerateHull` when the points span fewer than 3 dimensions.
    """
    pts = np.asarray(points)
    exact = np.issubdtype(pts.dtype, np.integer)
    p = pts.astype(np.int64 if exact else np.float64)
    if p.ndim != 2 or p.shape[1] != 3 or len(p) < 4:
        raise DegenerateHull("need at least four 3D points")
    eps = 0
    if not exact:
        # unit-scale copy so one absolute tolerance serves every predicate
        p = p - p.mean(axis=0)
        p /= float(np.abs(p).max()) or 1.0
        eps = 1e-12
    i0, i1, i2, i3 = _initial_tetra(p, eps)

    faces: list[tuple[int, int, int]] = []
    for f in ((i0, i1, i2), (i0, i1, i3), (i0, i2, i3), (i1, i2, i3)):
        other = ({i0, i1, i2, i3} - set(f)).pop()
        a, b, c = p[list(f)]
        if (p[other] - a) @ np.cross(b - a, c - a) > 0:
            f = (f[0], f[2], f[1])
        faces.append(f)

    def plane(f):
        a, b, c = p[f[0]], p[f[1]], p[f[2]]
        n = np.cross(b - a, c - a)
        return n, n @ a

    normals = [plane(f) for f in faces]
    rng = np.random.default_rng(seed)
    rest = [i for i in rng.permutation(len(p)) if i not in (i0, i1, i2, i3)]
    for i in rest:
        q = p[i]
        nrm = np.array([n for n, _ in normals])
        off = np.array([o for _, o in normals])
        visible = nrm @ q - off > eps
        if not visible.any():
            continue
        vis_edges = set()
        for f, v in zip(faces, visible):
            if v:
                vis_edges.update(((f[0], f[1]), (f[1], f[2]), (f[2], f[0])))
        horizon = [e for e in vis_edges if (e[1], e[0]) not in vis_edges]
        faces = [f for f, v in zip(faces, visible) if not v]
        normals = [n for n, v in zip(normals, visible) if not v]
        for a, b in sorted(horizon):
            f = (a, b, int(i))
            faces.append(f)
            normals.append(plane(f))
    return faces


def hull_volume(points, seed: int = 0) -> float:
    """Volume enclosed by the convex hull (signed-tetrahedron sum)."""
    p = np.asarray(points)
    faces = convex_hull(p, seed=seed)
    q = p.astype(np.int64 if np.issubdtype(p.dtype, np.integer) else np.float64)
    o = q[faces[0][0]]
    f = np.array(faces)
    a, b, c = q[f[:, 0]] - o, q[f[:, 1]] - o, q[f[:, 2]] - o
    six_v = np.einsum("ij,ij->i", a, np.cross(b, c)).sum()
    return float(six_v) / 6.0


def row_extremes(idx: np.ndarray) -> np.ndarray:
    """Reduce (n, 3) integer voxel indices to the two extreme voxels of each row.

    Every voxel lies on a segment between its row's extremes, so the hull is
    unchanged.
    """
    idx = np.asarray(idx)
    if len(idx) == 0:
        return idx
    order = np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0]))
    s = idx[order]
    key = s[:, :2]
    start = np.ones(len(s), dtype=bool)
    start[1:] = np.any(key[1:] != key[:-1], axis=1)
    end = np.ones(len(s), dtype=bool)
    end[:-1] = start[1:]
    return np.unique(s[start | end], axis=0)
