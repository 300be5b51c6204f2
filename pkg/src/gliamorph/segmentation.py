"""Threshold, label, filter and split: intensity volume to cell instances."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DegenerateHistogramError
from .gmm import select_gmm
from .volume_io import Spacing, VoxelGrid

log = logging.getLogger(__name__)

N_BINS = 256
STRUCTURES = {
    6: ndimage.generate_binary_structure(3, 1),
    18: ndimage.generate_binary_structure(3, 2),
    26: ndimage.generate_binary_structure(3, 3),
}


@dataclass(frozen=True)
class BinaryVolume:
    mask: np.ndarray
    spacing: Spacing

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))


@dataclass(frozen=True)
class LabelVolume:
    labels: np.ndarray
    spacing: Spacing
    notes: tuple[str, ...] = field(default=())

    @property
    def k(self) -> int:
        return int(self.labels.max()) if self.labels.size else 0

    def sizes(self) -> np.ndarray:
        """Voxel count per label 1..K."""
        return np.bincount(self.labels.ravel(), minlength=self.k + 1)[1:]

    def mask(self, label: int) -> np.ndarray:
        return self.labels == label


# -- thresholding ----------------------------------------------------------

def histogram(values: np.ndarray, n_bins: int = N_BINS) -> np.ndarray:
    """Counts of [0, 1] intensities in ``n_bins`` equal bins; 1.0 falls in the top bin."""
    v = np.asarray(values, dtype=np.float64).ravel()
    bins = np.minimum((v * n_bins).astype(np.int64), n_bins - 1)
    return np.bincount(np.maximum(bins, 0), minlength=n_bins)


def otsu_bin(hist) -> int:
    """Split bin ``t`` maximizing between-class variance for classes ``< t`` and ``>= t``.

    Computed in exact integer arithmetic so ties resolve to the lowest bin.
    """
    h = [int(c) for c in hist]
    if sum(1 for c in h if c) < 2:
        raise DegenerateHistogramError("histogram has fewer than two occupied bins")
    total_n = sum(h)
    total_s = sum(i * c for i, c in enumerate(h))
    best_t, best_num, best_den = 0, 0, 1
    n0 = s0 = 0
    for t in range(len(h)):
        if t:
            n0 += h[t - 1]
            s0 += (t - 1) * h[t - 1]
        n1, s1 = total_n - n0, total_s - s0
        if n0 == 0 or n1 == 0:
            continue
        # between-class variance * N^2 = (n0*s1 - n1*s0)^2 / (n0*n1)
        num = (n0 * s1 - n1 * s0) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def otsu_threshold(grid: VoxelGrid, n_bins: int = N_BINS) -> float:
    """Otsu threshold of a normalized grid, as an intensity in (0, 1].

    Voxels at or above the returned value are the upper class.
    """
    return otsu_bin(histogram(grid.data, n_bins)) / n_bins


def binarize(grid: VoxelGrid, threshold: float) -> BinaryVolume:
    if not threshold >= 0.0:
        raise ValueError(f"threshold must be nonnegative, got {threshold}")
    return BinaryVolume(np.asarray(grid.data) >= threshold, grid.spacing)


# -- components ------------------------------------------------------------

def _relabel_raster(labels: np.ndarray, keep: np.ndarray | None = None) -> np.ndarray:
    """Renumber labels 1..K by the raster position of each label's first voxel."""
    flat = labels.ravel()
    ids, first = np.unique(flat, return_index=True)
    sel = ids > 0
    if keep is not None:
        sel &= keep[ids]
    ids, first = ids[sel], first[sel]
    order = ids[np.argsort(first, kind="stable")]
    lut = np.zeros(int(labels.max()) + 1 if labels.size else 1, dtype=np.int32)
    lut[order] = np.arange(1, len(order) + 1, dtype=np.int32)
    return lut[labels]


def label_components(binary: BinaryVolume, connectivity: int = 26) -> LabelVolume:
    """Label maximal connected foreground sets, numbered in raster order (x fastest)."""
    if connectivity not in STRUCTURES:
        raise ValueError(f"connectivity must be 6, 18 or 26, got {connectivity}")
    raw, _ = ndimage.label(binary.mask, structure=STRUCTURES[connectivity])
    return LabelVolume(_relabel_raster(raw), binary.spacing)


def filter_small(labels: LabelVolume, min_voxels: int) -> LabelVolume:
    """Drop components with fewer than ``min_voxels`` voxels and renumber the rest."""
    if min_voxels < 1:
        raise ValueError("min_voxels must be >= 1")
    counts = np.bincount(labels.labels.ravel(), minlength=labels.k + 1)
    keep = counts >= min_voxels
    keep[0] = False
    return LabelVolume(_relabel_raster(labels.labels, keep), labels.spacing, labels.notes)


# -- GMM splitting ---------------------------------------------------------

def voxel_centers_um(idx_zyx: tuple[np.ndarray, ...], spacing: Spacing) -> np.ndarray:
    """(n, 3) array of x, y, z voxel-centre coordinates in microns."""
    z, y, x = idx_zyx
    sx, sy, sz = spacing
    return np.column_stack([(x + 0.5) * sx, (y + 0.5) * sy, (z + 0.5) * sz])


def split_oversized(labels: LabelVolume, grid: VoxelGrid | None = None, max_volume: float = 1000.0,
                    k_max: int = 4, seed: int = 0, weighted: bool = True) -> LabelVolume:
    """Split components larger than ``max_volume`` (um^3) with a BIC-selected GMM.

    Each oversized component's voxel centres are fitted with k = 1..k_max
    mixtures, each voxel weighted by its intensity in ``grid`` (uniformly
    when ``grid`` is None or ``weighted`` is False). Voxels go to their
    maximum-responsibility component and output labels are renumbered by
    raster order of first voxel.
    """
    if max_volume <= 0:
        raise ValueError("max_volume must be positive")
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    lab = labels.labels
    spacing = labels.spacing
    vv = spacing[0] * spacing[1] * spacing[2]
    counts = np.bincount(lab.ravel(), minlength=labels.k + 1)
    notes = list(labels.notes)
    out = lab.astype(np.int64, copy=True)
    next_id = labels.k + 1
    objects = ndimage.find_objects(lab)
    for lbl in range(1, labels.k + 1):
        if counts[lbl] * vv <= max_volume:
            continue
        sl = objects[lbl - 1]
        local = lab[sl] == lbl
        idx = np.nonzero(local)
        offset = [s.start for s in sl]
        pts = voxel_centers_um(tuple(i + o for i, o in zip(idx, offset)), spacing)
        w = None
        if weighted and grid is not None:
            w = np.asarray(grid.data[sl], dtype=np.float64)[idx]
            if not w.sum() > 0:
                w = None
        best, _, fit_notes = select_gmm(pts, k_max=k_max, seed=seed, weights=w)
        notes.extend(f"label {lbl}: {n}" for n in fit_notes)
        if best.k == 1:
            continue
        parts = best.predict(pts)
        view = out[sl]
        for j in range(1, best.k):
            sel = parts == j
            if sel.any():
                view[tuple(i[sel] for i in idx)] = next_id
                next_id += 1
        log.debug("label %d split into %d parts", lbl, best.k)
    return LabelVolume(_relabel_raster(out), spacing, tuple(notes))
