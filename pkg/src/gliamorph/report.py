"""Cross-method comparison report (JSON) and X-Y centroid scatter (SVG)."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import jsonschema

from .compare import (IlastikObject, ManualPath, match_centroids, reference_points,
                      spread_stats)
from .errors import ConfigError
from .morphometry import CellMorphology

SCHEMA_ID = "gliamorph.comparison/1"
DEFAULT_RADIUS_UM = 10.0
COLORS = {"manual": "#1b9e77", "ilastik": "#d95f02", "morph": "#7570b3"}


def load_schema() -> dict:
    return json.loads(resources.files("gliamorph").joinpath("report_schema.json").read_text())


def validate_report(doc: dict) -> None:
    jsonschema.validate(doc, load_schema())


@dataclass
class CompareConfig:
    um_per_px: float | None = None
    radius_um: float = DEFAULT_RADIUS_UM
    reference_mode: str = "midpoint"
    sources: dict[str, str] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)


def _mean(values):
    vals = [v for v in values if v is not None]
    return math.fsum(vals) / len(vals) if vals else None


def _method(source, count, units, size_kind, mean_size, points, axes):
    return {
        "source": source,
        "count": count,
        "units": units,
        "size_kind": size_kind,
        "mean_size": mean_size,
        "spread": spread_stats(points, axes, units).to_dict() if points else None,
    }


def summarize(manual: list[ManualPath] | None = None, ilastik: list[IlastikObject] | None = None,
              morph: list[CellMorphology] | None = None, config: CompareConfig | None = None) -> dict:
    """Counts, mean sizes, centroid spread per method and matches against the manual reference.

    ilastik centroids are pixels; they are only matched when
    ``config.um_per_px`` converts them to microns, and then only on X-Y.
    """
    config = config or CompareConfig()
    if manual is None and ilastik is None and morph is None:
        raise ConfigError("nothing to compare: give at least one of manual, ilastik or morph")
    if config.um_per_px is not None and not config.um_per_px > 0:
        raise ConfigError("um_per_px must be positive")
    if not config.radius_um > 0:
        raise ConfigError("match radius must be positive")
    src = config.sources
    methods: dict = {}
    notes: list[str] = []
    refs = None
    if manual is not None:
        refs = reference_points(manual, config.reference_mode)
        methods["manual"] = _method(src.get("manual", "manual"), len(manual), "um", "fitted_volume_um3",
                                    _mean(p.fitted_volume for p in manual), refs, ("x", "y", "z"))
        if all(p.fitted_volume is None for p in manual):
            notes.append("manual: fitted_volume empty for every path")
    if ilastik is not None:
        methods["ilastik"] = _method(src.get("ilastik", "ilastik"), len(ilastik), "px", "area_px",
                                     _mean(o.size_px for o in ilastik),
                                     [(o.centroid_x, o.centroid_y) for o in ilastik], ("x", "y"))
    if morph is not None:
        methods["morph"] = _method(src.get("morph", "morph"), len(morph), "um", "cell_volume_um3",
                                   _mean(c.cell_volume for c in morph),
                                   [c.centroid for c in morph], ("x", "y", "z"))

    matching = {
        "reference": "manual" if refs is not None else None,
        "reference_mode": config.reference_mode,
        "radius_um": config.radius_um,
        "um_per_px": config.um_per_px,
        "ilastik": None,
        "morph": None,
    }
    if refs is None:
        notes.append("no manual reference: matching skipped")
    else:
        if morph is not None:
            matching["morph"] = match_centroids([c.centroid for c in morph], refs, config.radius_um).to_dict()
        if ilastik is not None:
            if config.um_per_px is None:
                notes.append("ilastik: centroids are in pixels; pass um_per_px to match against the manual reference")
            else:
                s = config.um_per_px
                pts = [(o.centroid_x * s, o.centroid_y * s) for o in ilastik]
                matching["ilastik"] = match_centroids(pts, [r[:2] for r in refs], config.radius_um).to_dict()
    doc = {
        "schema": SCHEMA_ID,
        "provenance": dict(config.provenance),
        "methods": methods,
        "matching": matching,
        "notes": notes,
    }
    validate_report(doc)
    return doc


def report_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def scatter_svg(manual=None, ilastik=None, morph=None, um_per_px: float | None = None,
                reference_mode: str = "midpoint", provenance: dict | None = None,
                width: int = 480, height: int = 480) -> str:
    """X-Y centroid scatter, one series per method.

    Series share one micron axis when ilastik pixels can be converted; an
    unconverted ilastik series is drawn on its own pixel scale and labelled so.
    """
    series = []
    if manual is not None:
        series.append(("manual", "um", [p[:2] for p in reference_points(manual, reference_mode)]))
    if ilastik is not None:
        if um_per_px:
            series.append(("ilastik", "um", [(o.centroid_x * um_per_px, o.centroid_y * um_per_px) for o in ilastik]))
        else:
            series.append(("ilastik", "px", [(o.centroid_x, o.centroid_y) for o in ilastik]))
    if morph is not None:
        series.append(("morph", "um", [c.centroid[:2] for c in morph]))

    pad = 40
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
    ]
    if provenance:
        out.append(f"<!-- provenance: {json.dumps(provenance, sort_keys=True).replace('--', '- -')} -->")
    out.append(f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>')
    out.append(f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
               'fill="none" stroke="black"/>')
    by_unit: dict[str, list] = {}
    for _, unit, pts in series:
        by_unit.setdefault(unit, []).extend(pts)
    bounds = {}
    for unit, pts in by_unit.items():
        if pts:
            xs, ys = [p[0] for p in pts], [p[1] for p in pts]
            bounds[unit] = (min(xs), max(xs), min(ys), max(ys))

    def project(unit, x, y):
        x0, x1, y0, y1 = bounds[unit]
        sx = (width - 2 * pad) / ((x1 - x0) or 1.0)
        sy = (height - 2 * pad) / ((y1 - y0) or 1.0)
        # image convention: y grows downwards
        return pad + (x - x0) * sx, pad + (y - y0) * sy

    for i, (name, unit, pts) in enumerate(series):
        color = COLORS[name]
        out.append(f'<g id="{name}" fill="{color}" stroke="none">')
        for x, y in pts:
            px, py = project(unit, x, y)
            out.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="3"/>')
        out.append("</g>")
        out.append(f'<text x="{pad + 5}" y="{pad - 8 - 14 * (len(series) - 1 - i)}" font-size="12" '
                   f'fill="{color}">{name} ({unit}, n={len(pts)})</text>')
    for unit, (x0, x1, y0, y1) in sorted(bounds.items()):
        out.append(f'<text x="{pad}" y="{height - pad + 16}" font-size="10">{unit}: x {x0:.1f} to {x1:.1f}, '
                   f'y {y0:.1f} to {y1:.1f}</text>' if unit == "um" else
                   f'<text x="{pad}" y="{height - pad + 30}" font-size="10">{unit}: x {x0:.1f} to {x1:.1f}, '
                   f'y {y0:.1f} to {y1:.1f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
