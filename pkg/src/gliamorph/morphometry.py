"""Per-cell feature rows and the D_-format morphology table."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, fields

import numpy as np
from scipy import ndimage

from .errors import EmptyInputError, GliaError
from .hull import DegenerateHull, hull_volume, row_extremes
from .segmentation import LabelVolume
from .skeleton import branch_metrics, build_graph, skeletonize
from .volume_io import Spacing

log = logging.getLogger(__name__)

MORPH_HEADER = (
    "cell_id,centroid_x_um,centroid_y_um,centroid_z_um,cell_volume_um3,territory_volume_um3,"
    "ramification_index,n_endpoints,n_branchpoints,branch_len_avg_um,branch_len_max_um,branch_len_min_um"
)
MORPH_COLUMNS = tuple(MORPH_HEADER.split(","))


@dataclass
class CellMorphology:
    cell_id: int
    centroid_x: float
    centroid_y: float
    centroid_z: float
    cell_volume: float
    territory_volume: float
    ramification_index: float
    n_endpoints: int | None = None
    n_branchpoints: int | None = None
    branch_len_avg: float | None = None
    branch_len_max: float | None = None
    branch_len_min: float | None = None
    error: str | None = None

    @property
    def centroid(self) -> tuple[float, float, float]:
        return self.centroid_x, self.centroid_y, self.centroid_z

    def values(self) -> tuple:
        """Field values in table column order (``error`` excluded)."""
        return tuple(getattr(self, f.name) for f in fields(self) if f.name != "error")


def _indices(mask) -> np.ndarray:
    """(n, 3) integer (z, y, x) indices from a boolean volume or an index array."""
    m = np.asarray(mask)
    if m.dtype == bool:
        return np.argwhere(m)
    return m.reshape(-1, 3).astype(np.int64)


def centroid(mask, spacing: Spacing) -> tuple[float, float, float]:
    """Mean voxel-centre position (x, y, z) in microns; centres sit at (index + 0.5) * spacing."""
    idx = _indices(mask)
    if len(idx) == 0:
        raise EmptyInputError("centroid of an empty mask", module="morphometry")
    sx, sy, sz = spacing
    mz, my, mx = idx.mean(axis=0)
    return float((mx + 0.5) * sx), float((my + 0.5) * sy), float((mz + 0.5) * sz)


def cell_volume(mask, spacing: Spacing) -> float:
    n = len(_indices(mask))
    if n == 0:
        raise EmptyInputError("volume of an empty mask", module="morphometry")
    return n * spacing[0] * spacing[1] * spacing[2]


def territory_volume(mask, spacing: Spacing) -> float:
    """Convex-hull volume of the voxel centres; degenerate (flat or linear) cells fall back to cell volume."""
    idx = _indices(mask)
    if len(idx) == 0:
        raise EmptyInputError("territory of an empty mask", module="morphometry")
    try:
        v = hull_volume(row_extremes(idx))
    except DegenerateHull:
        return cell_volume(idx, spacing)
    return v * spacing[0] * spacing[1] * spacing[2]


def ramification_index(cell_vol: float, territory_vol: float) -> float:
    """Territory volume over cell volume."""
    if not cell_vol > 0:
        raise ValueError("cell volume must be positive")
    return territory_vol / cell_vol


def analyze_cell(mask: np.ndarray, spacing: Spacing, cell_id: int,
                 offset: tuple[int, int, int] = (0, 0, 0)) -> CellMorphology:
    """Features of one cell given as a boolean volume.

    ``offset`` is the (z, y, x) grid position of ``mask[0, 0, 0]`` when the
    mask is a crop.
    """
    idx = np.argwhere(mask) + np.asarray(offset, dtype=np.int64)
    cx, cy, cz = centroid(idx, spacing)
    cv = cell_volume(idx, spacing)
    tv = territory_volume(idx, spacing)
    row = CellMorphology(cell_id, cx, cy, cz, cv, tv, ramification_index(cv, tv))
    try:
        stats = branch_metrics(build_graph(skeletonize(mask, spacing, label=cell_id)))
    except GliaError as exc:
        log.warning("cell %d: %s", cell_id, exc)
        row.error = f"{type(exc).__name__}: {exc}"
        return row
    row.n_endpoints = stats.n_endpoints
    row.n_branchpoints = stats.n_branchpoints
    row.branch_len_avg = stats.branch_len_avg
    row.branch_len_max = stats.branch_len_max
    row.branch_len_min = stats.branch_len_min
    return row


def analyze_cells(labels: LabelVolume, spacing: Spacing | None = None) -> list[CellMorphology]:
    """One feature row per label 1..K, in label order.

    A cell whose skeleton cannot be built keeps its volume and centroid
    features and records the failure in ``error``.
    """
    spacing = tuple(spacing or labels.spacing)
    lab = labels.labels
    rows = []
    for lbl, sl in enumerate(ndimage.find_objects(lab), start=1):
        if sl is None:
            continue
        sub = lab[sl] == lbl
        rows.append(analyze_cell(sub, spacing, lbl, tuple(s.start for s in sl)))
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.6g}"


def morph_table_text(rows: list[CellMorphology], preamble: list[str] | None = None) -> str:
    """CSV text of the morphology table; ``preamble`` lines are written as ``# `` comments."""
    buf = io.StringIO()
    for line in preamble or []:
        buf.write(f"# {line}\n")
    buf.write(MORPH_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([_fmt(v) for v in r.values()])
    return buf.getvalue()


def write_morph_table(rows: list[CellMorphology], path, preamble: list[str] | None = None):
    from .atomic import atomic_write_text

    return atomic_write_text(path, morph_table_text(rows, preamble))
