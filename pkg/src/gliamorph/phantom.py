"""Synthetic volumes with known ground truth.

Cells are drawn with intensity 1.0 on a 0.0 background; noise, if any, is
added last by :func:`add_noise`. Every generator is a pure function of its
arguments (and seed).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CapacityError, ResolutionError
from .volume_io import Spacing, VoxelGrid

Y_DIRECTIONS = (
    (1.0, 0.0, 0.0),
    (-0.5, math.sqrt(3) / 2, 0.0),
    (-0.5, -math.sqrt(3) / 2, 0.0),
)


@dataclass
class CellTruth:
    """Ground truth for one synthetic cell.

    ``mask`` holds flat (C-order) indices into the phantom grid.
    ``skeleton_length_um`` is the expected total traced skeleton length and
    ``length_tol`` its relative tolerance band. Topology counts are ``None``
    for cells without a defined skeleton (blobs, spheres).
    """

    kind: str
    mask: np.ndarray
    centroid_um: tuple[float, float, float]
    n_endpoints: int | None = None
    n_branchpoints: int | None = None
    skeleton_length_um: float | None = None
    branch_length_um: float | None = None
    length_tol: float | None = None
    center_um: tuple[float, float, float] | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_voxels": int(self.mask.size),
            "mask": [int(i) for i in self.mask],
            "centroid_um": list(self.centroid_um),
            "center_um": None if self.center_um is None else list(self.center_um),
            "n_endpoints": self.n_endpoints,
            "n_branchpoints": self.n_branchpoints,
            "skeleton_length_um": self.skeleton_length_um,
            "branch_length_um": self.branch_length_um,
            "length_tol": self.length_tol,
        }


@dataclass
class PhantomTruth:
    cells: list[CellTruth] = field(default_factory=list)
    noise_sigma: float = 0.0
    seed: int | None = None
    shape: tuple[int, int, int] | None = None
    spacing: Spacing | None = None

    def to_dict(self) -> dict:
        return {
            "shape_zyx": None if self.shape is None else list(self.shape),
            "spacing_um": None if self.spacing is None else list(self.spacing),
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "cells": [c.to_dict() for c in self.cells],
        }

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")
        return path


# -- geometry helpers ------------------------------------------------------

def _centers(shape, spacing):
    """Voxel-center coordinate arrays (x, y, z) in microns, broadcastable over ``shape``."""
    nz, ny, nx = shape
    sx, sy, sz = spacing
    x = ((np.arange(nx) + 0.5) * sx)[None, None, :]
    y = ((np.arange(ny) + 0.5) * sy)[None, :, None]
    z = ((np.arange(nz) + 0.5) * sz)[:, None, None]
    return x, y, z


def _cylinder(shape, spacing, start, end, radius) -> np.ndarray:
    """Solid flat-ended cylinder around the segment start-end."""
    x, y, z = _centers(shape, spacing)
    a = np.asarray(start, float)
    d = np.asarray(end, float) - a
    length2 = float(d @ d)
    px, py, pz = x - a[0], y - a[1], z - a[2]
    t = (px * d[0] + py * d[1] + pz * d[2]) / length2
    qx, qy, qz = px - t * d[0], py - t * d[1], pz - t * d[2]
    r2 = qx * qx + qy * qy + qz * qz
    return (t >= 0) & (t <= 1) & (r2 <= radius * radius)


def _ball(shape, spacing, center, radius) -> np.ndarray:
    x, y, z = _centers(shape, spacing)
    c = center
    return (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2 <= radius * radius


def _mask_centroid(mask: np.ndarray, spacing) -> tuple[float, float, float]:
    zi, yi, xi = np.nonzero(mask)
    sx, sy, sz = spacing
    return (
        float(np.mean((xi + 0.5) * sx)),
        float(np.mean((yi + 0.5) * sy)),
        float(np.mean((zi + 0.5) * sz)),
    )


def _check_resolution(radius, spacing):
    if radius < max(spacing):
        raise ResolutionError(f"radius {radius} um is below the voxel pitch {max(spacing)} um")


def _shape_for(extent_um, spacing) -> tuple[int, int, int]:
    return tuple(int(math.ceil(e / s)) for e, s in zip(extent_um[::-1], spacing[::-1]))


def _truth_cell(kind, mask, spacing, **kw) -> CellTruth:
    return CellTruth(kind=kind, mask=np.flatnonzero(mask), centroid_um=_mask_centroid(mask, spacing), **kw)


# -- single-cell phantoms --------------------------------------------------

def _tube_truth(length, radius):
    return dict(n_endpoints=2, n_branchpoints=0, skeleton_length_um=length - 2 * radius,
                branch_length_um=length - 2 * radius, length_tol=0.10)


def _y_truth(arm_length, radius):
    arm = arm_length - radius
    return dict(n_endpoints=3, n_branchpoints=1, skeleton_length_um=3 * arm,
                branch_length_um=arm, length_tol=0.15)


def _y_mask(shape, spacing, center, arm_length, radius, directions=Y_DIRECTIONS):
    c = np.asarray(center, float)
    mask = _ball(shape, spacing, c, radius)
    for d in directions:
        mask |= _cylinder(shape, spacing, c, c + arm_length * np.asarray(d), radius)
    return mask


def make_tube(length: float, radius: float, spacing: Spacing = (0.5, 0.5, 0.5),
              margin: float | None = None) -> tuple[VoxelGrid, PhantomTruth]:
    """Solid cylinder along x, centred in a grid with a few voxels of padding."""
    _check_resolution(radius, spacing)
    if length <= 2 * radius:
        raise ValueError(f"length {length} must exceed twice the radius {radius}")
    margin = 3 * max(spacing) + radius if margin is None else margin
    extent = (length + 2 * margin, 2 * (radius + margin), 2 * (radius + margin))
    shape = _shape_for(extent, spacing)
    nz, ny, nx = shape
    cy, cz = ny * spacing[1] / 2, nz * spacing[2] / 2
    x0 = (nx * spacing[0] - length) / 2
    mask = _cylinder(shape, spacing, (x0, cy, cz), (x0 + length, cy, cz), radius)
    cell = _truth_cell("tube", mask, spacing, center_um=(x0 + length / 2, cy, cz), **_tube_truth(length, radius))
    grid = VoxelGrid(mask.astype(np.float64), spacing)
    return grid, PhantomTruth([cell], shape=shape, spacing=tuple(spacing))


def make_y_cell(arm_length: float, radius: float, spacing: Spacing = (0.5, 0.5, 0.5),
                margin: float | None = None) -> tuple[VoxelGrid, PhantomTruth]:
    """Three arms at 120 degrees in the xy plane, joined at a rounded junction."""
    _check_resolution(radius, spacing)
    if arm_length <= 2 * radius:
        raise ValueError(f"arm_length {arm_length} must exceed twice the radius {radius}")
    margin = 3 * max(spacing) + radius if margin is None else margin
    half = arm_length + margin
    extent = (2 * half, 2 * half, 2 * (radius + margin))
    shape = _shape_for(extent, spacing)
    nz, ny, nx = shape
    center = (nx * spacing[0] / 2, ny * spacing[1] / 2, nz * spacing[2] / 2)
    mask = _y_mask(shape, spacing, center, arm_length, radius)
    cell = _truth_cell("y", mask, spacing, center_um=center, **_y_truth(arm_length, radius))
    grid = VoxelGrid(mask.astype(np.float64), spacing)
    return grid, PhantomTruth([cell], shape=shape, spacing=tuple(spacing))


def make_sphere(radius: float, spacing: Spacing = (0.5, 0.5, 0.5),
                margin: float | None = None) -> tuple[VoxelGrid, PhantomTruth]:
    """Solid ball, the convex reference shape for volume and ramification checks."""
    _check_resolution(radius, spacing)
    margin = 3 * max(spacing) if margin is None else margin
    extent = (2 * (radius + margin),) * 3
    shape = _shape_for(extent, spacing)
    nz, ny, nx = shape
    center = (nx * spacing[0] / 2, ny * spacing[1] / 2, nz * spacing[2] / 2)
    mask = _ball(shape, spacing, center, radius)
    cell = _truth_cell("sphere", mask, spacing, center_um=center)
    return VoxelGrid(mask.astype(np.float64), spacing), PhantomTruth([cell], shape=shape, spacing=tuple(spacing))


def make_blob_pair(separation: float, sigma: float, spacing: Spacing = (0.5, 0.5, 0.5),
                   merged: bool = False, level: float = 0.5) -> tuple[VoxelGrid, PhantomTruth]:
    """Two isotropic Gaussian intensity blobs displaced along x.

    Intensity is the sum of both blobs rescaled to a peak of 1. ``merged``
    asserts the intended regime: True requires ``separation < 3 sigma``.
    Truth masks split the voxels at or above ``level`` by nearest blob centre;
    ``center_um`` of each cell is the exact generating centre.
    """
    if sigma <= 0 or separation < 0:
        raise ValueError("sigma must be positive and separation nonnegative")
    if merged and separation >= 3 * sigma:
        raise ValueError(f"merged blobs need separation < 3*sigma, got {separation} >= {3 * sigma}")
    margin = 4 * sigma + 2 * max(spacing)
    extent = (separation + 2 * margin, 2 * margin, 2 * margin)
    shape = _shape_for(extent, spacing)
    nz, ny, nx = shape
    mid = np.array([nx * spacing[0] / 2, ny * spacing[1] / 2, nz * spacing[2] / 2])
    centers = [mid - [separation / 2, 0, 0], mid + [separation / 2, 0, 0]]
    x, y, z = _centers(shape, spacing)
    d2 = [(x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2 for c in centers]
    inten = sum(np.exp(-d / (2 * sigma * sigma)) for d in d2)
    inten = inten / inten.max()
    fg = inten >= level
    nearest_first = d2[0] <= d2[1]
    cells = []
    for i, sel in enumerate((nearest_first, ~nearest_first)):
        m = fg & sel
        c = tuple(float(v) for v in centers[i])
        if m.any():
            cells.append(_truth_cell("blob", m, spacing, center_um=c))
        else:
            cells.append(CellTruth("blob", np.zeros(0, np.int64), c, center_um=c))
    return VoxelGrid(inten, spacing), PhantomTruth(cells, shape=shape, spacing=tuple(spacing))


# -- scenes ----------------------------------------------------------------

def _segment_distance(p1, q1, p2, q2) -> float:
    """Closest distance between segments p1-q1 and p2-q2."""
    d1, d2, r = q1 - p1, q2 - p2, p1 - p2
    a, e, f = d1 @ d1, d2 @ d2, d2 @ r
    eps = 1e-12
    if a <= eps and e <= eps:
        return float(np.linalg.norm(r))
    if a <= eps:
        s, t = 0.0, np.clip(f / e, 0.0, 1.0)
    else:
        c = d1 @ r
        if e <= eps:
            s, t = np.clip(-c / a, 0.0, 1.0), 0.0
        else:
            b = d1 @ d2
            denom = a * e - b * b
            s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > eps else 0.0
            t = (b * s + f) / e
            if t < 0:
                t, s = 0.0, np.clip(-c / a, 0.0, 1.0)
            elif t > 1:
                t, s = 1.0, np.clip((b - c) / a, 0.0, 1.0)
    return float(np.linalg.norm((p1 + d1 * s) - (p2 + d2 * t)))


def _rotation(rng) -> np.ndarray:
    """Random axis-aligned orientation: a signed permutation of the coordinate axes."""
    perm = rng.permutation(3)
    signs = rng.choice([-1.0, 1.0], size=3)
    m = np.zeros((3, 3))
    m[np.arange(3), perm] = signs
    return m


def make_scene(k: int, min_gap: float = 5.0, cell_kind: str = "tube", seed: int = 0,
               shape: tuple[int, int, int] = (128, 128, 128), spacing: Spacing = (0.5, 0.5, 0.5),
               length: float = 20.0, radius: float = 1.0, max_tries: int = 2000
               ) -> tuple[VoxelGrid, PhantomTruth]:
    """Place ``k`` cells at random, keeping surface gaps of at least ``min_gap``.

    ``length`` is the tube length, the Y arm length, or (for ``blob``) ignored;
    blob cells are solid balls of ``radius``. Cells are axis-aligned under a
    random signed axis permutation. ``shape`` is (nz, ny, nx).
    """
    if cell_kind not in ("tube", "y", "blob"):
        raise ValueError(f"unknown cell kind {cell_kind!r}")
    if k < 0:
        raise ValueError("k must be nonnegative")
    _check_resolution(radius, spacing)
    rng = np.random.default_rng(seed)
    nz, ny, nx = shape
    box = np.array([nx * spacing[0], ny * spacing[1], nz * spacing[2]])
    pad = radius + 2 * max(spacing)

    if cell_kind == "tube":
        local = [(np.array([-length / 2, 0, 0]), np.array([length / 2, 0, 0]))]
    elif cell_kind == "y":
        local = [(np.zeros(3), length * np.asarray(d)) for d in Y_DIRECTIONS]
    else:
        local = [(np.zeros(3), np.zeros(3))]

    placed: list[list[tuple[np.ndarray, np.ndarray]]] = []
    tries = 0
    while len(placed) < k:
        tries += 1
        if tries > max_tries:
            raise CapacityError(f"placed only {len(placed)} of {k} cells after {max_tries} attempts")
        rot = _rotation(rng)
        segs = [(rot @ a, rot @ b) for a, b in local]
        pts = np.array([p for s in segs for p in s])
        lo = -pts.min(axis=0) + pad
        hi = box - pts.max(axis=0) - pad
        if np.any(hi < lo):
            raise CapacityError(f"a {cell_kind} cell does not fit in a {tuple(box)} um grid")
        origin = lo + rng.random(3) * (hi - lo)
        segs = [(a + origin, b + origin) for a, b in segs]
        ok = all(
            _segment_distance(a1, b1, a2, b2) - 2 * radius >= min_gap
            for other in placed for a1, b1 in segs for a2, b2 in other
        )
        if ok:
            placed.append(segs)

    vol = np.zeros(shape, dtype=np.float64)
    cells = []
    for segs in placed:
        if cell_kind == "tube":
            mask = _cylinder(shape, spacing, segs[0][0], segs[0][1], radius)
            extra = _tube_truth(length, radius)
            center = tuple(float(v) for v in (segs[0][0] + segs[0][1]) / 2)
        elif cell_kind == "y":
            c = segs[0][0]
            mask = _ball(shape, spacing, c, radius)
            for a, b in segs:
                mask |= _cylinder(shape, spacing, a, b, radius)
            extra = _y_truth(length, radius)
            center = tuple(float(v) for v in c)
        else:
            mask = _ball(shape, spacing, segs[0][0], radius)
            extra = {}
            center = tuple(float(v) for v in segs[0][0])
        vol[mask] = 1.0
        cells.append(_truth_cell(cell_kind, mask, spacing, center_um=center, **extra))
    truth = PhantomTruth(cells, seed=seed, shape=tuple(shape), spacing=tuple(spacing))
    return VoxelGrid(vol, spacing), truth


def add_noise(grid: VoxelGrid, sigma: float, seed: int = 0) -> VoxelGrid:
    """Add seeded Gaussian noise and clamp to [0, 1]."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    data = np.asarray(grid.data, dtype=np.float64)
    if sigma == 0:
        return VoxelGrid(data.copy(), grid.spacing)
    rng = np.random.default_rng(seed)
    noisy = data + rng.normal(0.0, sigma, size=data.shape)
    return VoxelGrid(np.clip(noisy, 0.0, 1.0), grid.spacing)
