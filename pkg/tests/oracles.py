"""Slow, independent reference implementations used only by the tests.

Nothing here imports from gliamorph: each oracle recomputes its quantity
from first principles so a shared bug cannot hide.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


# -- Otsu ------------------------------------------------------------------

def otsu_scan(hist) -> int:
    """Exhaustive between-class variance w0*w1*(mu0-mu1)^2 over every split, in exact fractions.

    Class 0 holds bins < t, class 1 bins >= t; the first maximum wins.
    """
    h = [int(c) for c in hist]
    n = sum(h)
    cum_n = list(itertools.accumulate(h, initial=0))
    cum_s = list(itertools.accumulate((i * c for i, c in enumerate(h)), initial=0))
    best_t, best = None, Fraction(-1)
    for t in range(1, len(h)):
        n0, s0 = cum_n[t], cum_s[t]
        n1, s1 = n - n0, cum_s[-1] - s0
        if n0 == 0 or n1 == 0:
            continue
        mu0, mu1 = Fraction(s0, n0), Fraction(s1, n1)
        var = Fraction(n0, n) * Fraction(n1, n) * (mu0 - mu1) ** 2
        if var > best:
            best_t, best = t, var
    return best_t


# -- connected components --------------------------------------------------

def offsets(connectivity: int):
    out = []
    for d in itertools.product((-1, 0, 1), repeat=3):
        nz = sum(1 for v in d if v)
        if nz == 0:
            continue
        if (connectivity == 6 and nz == 1) or (connectivity == 18 and nz <= 2) or connectivity == 26:
            out.append(d)
    return out


def union_find_labels(mask: np.ndarray, connectivity: int) -> np.ndarray:
    """Components by union-find over explicit neighbour pairs, numbered by first voxel in C order."""
    shape = mask.shape
    parent = {}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    fg = [tuple(p) for p in np.argwhere(mask)]
    for p in fg:
        parent[p] = p
    for p in fg:
        for d in offsets(connectivity):
            q = (p[0] + d[0], p[1] + d[1], p[2] + d[2])
            if all(0 <= q[i] < shape[i] for i in range(3)) and mask[q]:
                ra, rb = find(p), find(q)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    out = np.zeros(shape, dtype=np.int64)
    ids = {}
    for p in fg:  # argwhere is C order, so ids follow first appearance
        r = find(p)
        ids.setdefault(r, len(ids) + 1)
        out[p] = ids[r]
    return out


def n_components(mask: np.ndarray, connectivity: int = 26) -> int:
    return int(union_find_labels(mask, connectivity).max()) if mask.any() else 0


# -- convex hull -----------------------------------------------------------

def _polygon_area(pts3: np.ndarray, normal: np.ndarray) -> float:
    """Area of the convex polygon spanned by coplanar points, via brute-force hull edges."""
    n = normal / np.linalg.norm(normal)
    u = pts3[1] - pts3[0] if len(pts3) > 1 else np.array([1.0, 0, 0])
    u = u - (u @ n) * n
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    p2 = np.c_[pts3 @ u, pts3 @ v]
    scale = max(1.0, float(np.abs(p2).max()))
    c = p2.mean(axis=0)
    area = 0.0
    for i, j in itertools.permutations(range(len(p2)), 2):
        e = p2[j] - p2[i]
        side = e[0] * (p2[:, 1] - p2[i, 1]) - e[1] * (p2[:, 0] - p2[i, 0])
        # directed hull edge: everything on the left, nothing beyond its ends when collinear
        if np.all(side >= -1e-9 * scale * scale):
            col = np.abs(side) <= 1e-9 * scale * scale
            t = ((p2[col] - p2[i]) @ e) / (e @ e)
            if np.all((t >= -1e-12) & (t <= 1 + 1e-12)):
                a, b = p2[i] - c, p2[j] - c
                area += 0.5 * (a[0] * b[1] - a[1] * b[0])
    return area


def hull_volume_bruteforce(points) -> float:
    """Convex-hull volume from every supporting plane through three points.

    Each distinct facet plane contributes a pyramid from the centroid with the
    facet polygon (all coplanar points) as base.
    """
    p = np.unique(np.asarray(points, dtype=np.float64), axis=0)  # repeated points add zero-length edges
    scale = max(1.0, float(np.abs(p).max()))
    tol = 1e-9 * scale ** 3
    centre = p.mean(axis=0)
    seen = set()
    vol = 0.0
    for i, j, k in itertools.combinations(range(len(p)), 3):
        nrm = np.cross(p[j] - p[i], p[k] - p[i])
        if np.linalg.norm(nrm) <= 1e-12 * scale * scale:
            continue
        s = (p - p[i]) @ nrm
        if np.all(s <= tol):
            pass
        elif np.all(s >= -tol):
            nrm, s = -nrm, -s
        else:
            continue
        on = frozenset(np.nonzero(np.abs(s) <= tol)[0].tolist())
        if on in seen:
            continue
        seen.add(on)
        idx = sorted(on)
        area = _polygon_area(p[idx], nrm)
        height = abs((p[i] - centre) @ nrm) / np.linalg.norm(nrm)
        vol += area * height / 3.0
    return vol


# -- matching --------------------------------------------------------------

def max_matching(cands, refs, radius: float):
    """Largest one-to-one matching within ``radius`` by exhaustive search.

    Returns (size, number of distinct matchings achieving it).
    """
    d = [[math.dist(a, b) for b in refs] for a in cands]
    best, count = 0, 0

    def rec(i, used, size):
        nonlocal best, count
        if i == len(cands):
            if size > best:
                best, count = size, 1
            elif size == best:
                count += 1
            return
        rec(i + 1, used, size)
        for j in range(len(refs)):
            if j not in used and d[i][j] <= radius:
                rec(i + 1, used | {j}, size + 1)

    rec(0, frozenset(), 0)
    return best, count


# -- statistics ------------------------------------------------------------

def sample_std(values) -> float:
    """Two-pass sample standard deviation with compensated sums."""
    v = [float(x) for x in values]
    mean = math.fsum(v) / len(v)
    return math.sqrt(math.fsum((x - mean) ** 2 for x in v) / (len(v) - 1))
