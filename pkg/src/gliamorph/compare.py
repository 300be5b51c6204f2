"""Parsers for the three method-output tables and centroid comparisons.

File schemas (comma-separated, one header row, ``#`` lines ignored):

* manual traces (``M_``): ``path_id,name,start_x,start_y,start_z,end_x,end_y,
  end_z,path_length,swc_type`` plus optional ``parent_id``, ``child_ids``
  (``;``-separated) and ``fitted_volume``. Coordinates in microns.
* ilastik objects (``i_``): ``object_id,predicted_class,centroid_x,
  centroid_y,bbox_min_x,bbox_max_x,bbox_min_y,bbox_max_y,size_px`` plus
  optional ``user_class`` and any number of ``prob_<class>`` columns. Pixels.
* morphology (``D_``): the table written by
  :func:`gliamorph.morphometry.write_morph_table`. Microns.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInputError, RowError, SchemaError, UnitError
from .morphometry import MORPH_COLUMNS, CellMorphology

MANUAL_REQUIRED = ("path_id", "name", "start_x", "start_y", "start_z", "end_x", "end_y", "end_z",
                   "path_length", "swc_type")
MANUAL_OPTIONAL = ("parent_id", "child_ids", "fitted_volume")
ILASTIK_REQUIRED = ("object_id", "predicted_class", "centroid_x", "centroid_y", "bbox_min_x",
                    "bbox_max_x", "bbox_min_y", "bbox_max_y", "size_px")
ILASTIK_OPTIONAL = ("user_class",)
PROB_PREFIX = "prob_"
AXES = {"x": 0, "y": 1, "z": 2}


@dataclass
class ManualPath:
    path_id: str
    name: str
    start: tuple[float, float, float]
    end: tuple[float, float, float]
    path_length: float | None
    swc_type: int
    parent_id: str | None = None
    child_ids: list[str] = field(default_factory=list)
    fitted_volume: float | None = None


@dataclass
class IlastikObject:
    object_id: str
    predicted_class: str
    centroid_x: float
    centroid_y: float
    bbox_min_x: float
    bbox_max_x: float
    bbox_min_y: float
    bbox_max_y: float
    size_px: float
    user_class: str | None = None
    class_probabilities: dict[str, float] = field(default_factory=dict)


# -- CSV plumbing ----------------------------------------------------------

def _rows(path, required):
    """Yield (line number, row dict) after checking the header."""
    path = Path(path)
    if not path.is_file():
        raise EmptyInputError(f"{path}: no such file", module="compare")
    with path.open(newline="", encoding="utf-8-sig") as fh:
        lines = ((i, ln) for i, ln in enumerate(fh, start=1) if ln.strip() and not ln.lstrip().startswith("#"))
        try:
            header_line, header = next(lines)
        except StopIteration:
            raise SchemaError(f"{path.name}: file has no header row") from None
        cols = next(csv.reader([header]))
        cols = [c.strip() for c in cols]
        for c in required:
            if c not in cols:
                raise SchemaError(f"{path.name}: missing required column {c!r}")
        for lineno, text in lines:
            values = next(csv.reader([text]))
            if len(values) != len(cols):
                raise RowError(f"{path.name}: expected {len(cols)} fields, got {len(values)}", lineno)
            yield lineno, cols, dict(zip(cols, (v.strip() for v in values)))


def _num(row, key, lineno, optional=False):
    raw = row.get(key, "")
    if raw == "":
        if optional:
            return None
        raise RowError(f"empty value in column {key!r}", lineno)
    try:
        v = float(raw)
    except ValueError:
        raise RowError(f"malformed number {raw!r} in column {key!r}", lineno) from None
    if not math.isfinite(v):
        raise RowError(f"non-finite value {raw!r} in column {key!r}", lineno)
    return v


def _int(row, key, lineno, optional=False):
    v = _num(row, key, lineno, optional)
    if v is None:
        return None
    if v != int(v):
        raise RowError(f"expected an integer in column {key!r}, got {row[key]!r}", lineno)
    return int(v)


# -- parsers ---------------------------------------------------------------

def parse_manual(path) -> list[ManualPath]:
    """Manual tracing paths, one record per row."""
    out, lines = [], []
    for lineno, _, row in _rows(path, MANUAL_REQUIRED):
        length = _num(row, "path_length", lineno, optional=True)
        if length is not None and length < 0:
            raise RowError(f"negative path_length {length}", lineno)
        children = [c.strip() for c in row.get("child_ids", "").replace(" ", ";").split(";") if c.strip()]
        out.append(ManualPath(
            path_id=row["path_id"],
            name=row["name"],
            start=tuple(_num(row, f"start_{a}", lineno) for a in "xyz"),
            end=tuple(_num(row, f"end_{a}", lineno) for a in "xyz"),
            path_length=length,
            swc_type=_int(row, "swc_type", lineno),
            parent_id=row.get("parent_id") or None,
            child_ids=children,
            fitted_volume=_num(row, "fitted_volume", lineno, optional=True),
        ))
        lines.append(lineno)
    ids = {p.path_id for p in out}
    for p, lineno in zip(out, lines):
        for ref in ([p.parent_id] if p.parent_id else []) + p.child_ids:
            if ref not in ids:
                raise RowError(f"path {p.path_id} refers to unknown path {ref!r}", lineno)
    return out


def parse_ilastik(path) -> list[IlastikObject]:
    """ilastik object-classification rows."""
    out = []
    for lineno, cols, row in _rows(path, ILASTIK_REQUIRED):
        vals = {k: _num(row, k, lineno) for k in ILASTIK_REQUIRED[2:]}
        if vals["bbox_min_x"] > vals["bbox_max_x"] or vals["bbox_min_y"] > vals["bbox_max_y"]:
            raise RowError("bounding box minimum exceeds maximum", lineno)
        if not (vals["bbox_min_x"] <= vals["centroid_x"] <= vals["bbox_max_x"]
                and vals["bbox_min_y"] <= vals["centroid_y"] <= vals["bbox_max_y"]):
            raise RowError("centroid lies outside the bounding box", lineno)
        if vals["size_px"] < 0:
            raise RowError(f"negative size_px {vals['size_px']}", lineno)
        probs = {}
        for c in cols:
            if c.startswith(PROB_PREFIX) and row[c] != "":
                p = _num(row, c, lineno)
                if not 0.0 <= p <= 1.0:
                    raise RowError(f"probability {p} in {c!r} outside [0, 1]", lineno)
                probs[c[len(PROB_PREFIX):]] = p
        if probs and abs(math.fsum(probs.values()) - 1.0) > 1e-6:
            raise RowError(f"class probabilities sum to {math.fsum(probs.values()):.6g}, not 1", lineno)
        out.append(IlastikObject(
            object_id=row["object_id"],
            predicted_class=row["predicted_class"],
            user_class=row.get("user_class") or None,
            class_probabilities=probs,
            **vals,
        ))
    return out


def parse_morph(path) -> list[CellMorphology]:
    """Morphology table rows (absent statistics parse as None)."""
    out = []
    for lineno, _, row in _rows(path, MORPH_COLUMNS):
        cell = CellMorphology(
            cell_id=_int(row, "cell_id", lineno),
            centroid_x=_num(row, "centroid_x_um", lineno),
            centroid_y=_num(row, "centroid_y_um", lineno),
            centroid_z=_num(row, "centroid_z_um", lineno),
            cell_volume=_num(row, "cell_volume_um3", lineno),
            territory_volume=_num(row, "territory_volume_um3", lineno),
            ramification_index=_num(row, "ramification_index", lineno),
            n_endpoints=_int(row, "n_endpoints", lineno, optional=True),
            n_branchpoints=_int(row, "n_branchpoints", lineno, optional=True),
            branch_len_avg=_num(row, "branch_len_avg_um", lineno, optional=True),
            branch_len_max=_num(row, "branch_len_max_um", lineno, optional=True),
            branch_len_min=_num(row, "branch_len_min_um", lineno, optional=True),
        )
        if cell.cell_volume <= 0:
            raise RowError(f"cell volume must be positive, got {cell.cell_volume}", lineno)
        for name in ("territory_volume", "ramification_index", "n_endpoints", "n_branchpoints",
                     "branch_len_avg", "branch_len_max", "branch_len_min"):
            v = getattr(cell, name)
            if v is not None and v < 0:
                raise RowError(f"{name} must be nonnegative, got {v}", lineno)
        out.append(cell)
    return out


# -- statistics ------------------------------------------------------------

@dataclass
class AxisSpread:
    min: float
    max: float
    range: float
    std: float | None


@dataclass
class SpreadStats:
    n: int
    units: str
    axes: dict[str, AxisSpread]

    def to_dict(self) -> dict:
        return {"n": self.n, "units": self.units,
                "axes": {k: vars(v).copy() for k, v in self.axes.items()}}


def spread_stats(points, axes=("x", "y"), units: str = "um") -> SpreadStats:
    """Per-axis min, max, range and sample (n - 1) standard deviation.

    ``std`` is None for a single point.
    """
    pts = [tuple(p) for p in points]
    if not pts:
        raise EmptyInputError("spread of an empty point set", module="compare")
    n = len(pts)
    out = {}
    for a in axes:
        i = AXES[a] if isinstance(a, str) else int(a)
        vals = np.array([float(p[i]) for p in pts])
        lo, hi = float(vals.min()), float(vals.max())
        std = float(np.std(vals, ddof=1)) if n > 1 else None
        out[a if isinstance(a, str) else "xyz"[i]] = AxisSpread(lo, hi, hi - lo, std)
    return SpreadStats(n, units, out)


def reference_points(paths: list[ManualPath], mode: str = "midpoint") -> list[tuple[float, float, float]]:
    """Reduce each manual path to one point: its start or its midpoint."""
    if mode == "start":
        return [tuple(p.start) for p in paths]
    if mode == "midpoint":
        return [tuple((a + b) / 2 for a, b in zip(p.start, p.end)) for p in paths]
    raise ValueError(f"unknown reference mode {mode!r}")


@dataclass
class MatchResult:
    pairs: list[tuple[int, int, float]]
    n_candidates: int
    n_references: int
    radius: float
    units: str = "um"

    @property
    def n_matched(self) -> int:
        return len(self.pairs)

    @property
    def precision(self) -> float | None:
        return self.n_matched / self.n_candidates if self.n_candidates else None

    @property
    def recall(self) -> float | None:
        return self.n_matched / self.n_references if self.n_references else None

    def to_dict(self) -> dict:
        return {
            "n_candidates": self.n_candidates,
            "n_references": self.n_references,
            "n_matched": self.n_matched,
            "precision": self.precision,
            "recall": self.recall,
            "radius": self.radius,
            "units": self.units,
            "pairs": [{"candidate": c, "reference": r, "distance": d} for c, r, d in self.pairs],
        }


def _as_points(points) -> np.ndarray:
    pts = [tuple(p) for p in points]
    if not pts:
        return np.zeros((0, 0))
    return np.asarray(pts, dtype=np.float64).reshape(len(pts), -1)


def match_centroids(candidates, references, radius: float = 10.0,
                    candidate_units: str = "um", reference_units: str = "um") -> MatchResult:
    """Greedy one-to-one matching of candidate points to reference points.

    Pairs within ``radius`` are taken in order of (distance, candidate index,
    reference index) whenever both ends are still free. Points of different
    dimensionality are compared on their shared leading axes.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    if candidate_units != reference_units:
        raise UnitError(f"cannot match {candidate_units} candidates against {reference_units} references")
    c, r = _as_points(candidates), _as_points(references)
    pairs: list[tuple[int, int, float]] = []
    if len(c) and len(r):
        dim = min(c.shape[1], r.shape[1])
        d = np.sqrt(((c[:, None, :dim] - r[None, :, :dim]) ** 2).sum(axis=2))
        ci, ri = np.nonzero(d <= radius)
        order = np.lexsort((ri, ci, d[ci, ri]))
        used_c, used_r = set(), set()
        for k in order:
            i, j = int(ci[k]), int(ri[k])
            if i in used_c or j in used_r:
                continue
            used_c.add(i)
            used_r.add(j)
            pairs.append((i, j, float(d[i, j])))
    return MatchResult(pairs, len(c), len(r), radius, candidate_units)
