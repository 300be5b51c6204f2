"""Command-line entry point.

Every subcommand reads the same flat ``key = value`` config file (``--config``)
and lets its own flags override individual keys. Outputs are staged in
temporary files and only renamed into place once the whole command has
succeeded.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy
import tifffile

from . import __version__
from .atomic import Staging
from .compare import parse_ilastik, parse_manual, parse_morph
from .errors import CapacityError, ConfigError, GliaError, InputError
from .morphometry import analyze_cells, morph_table_text
from .phantom import add_noise, make_blob_pair, make_scene, make_sphere, make_tube, make_y_cell
from .report import CompareConfig, report_json, scatter_svg, summarize
from .segmentation import (LabelVolume, binarize, filter_small, label_components, otsu_threshold,
                           split_oversized)
from .skeleton import skeletonize
from .volume_io import VoxelGrid, load_stack, normalize, write_stack

log = logging.getLogger("gliamorph")


# -- configuration ---------------------------------------------------------

@dataclass
class PipelineConfig:
    input: str | None = None
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    threshold: str = "auto"
    connectivity: int = 26
    min_voxels: int = 10
    max_volume: float = 1000.0
    k_max: int = 4
    seed: int = 0
    output_dir: str = "out"
    um_per_px: float | None = None
    radius: float = 10.0
    reference_mode: str = "midpoint"
    manual: str | None = None
    ilastik: str | None = None
    morph: str | None = None

    def validate(self) -> "PipelineConfig":
        if len(self.spacing) != 3 or not all(s > 0 for s in self.spacing):
            raise ConfigError(f"spacing must be three positive numbers, got {self.spacing}")
        if self.threshold != "auto":
            try:
                t = float(self.threshold)
            except ValueError:
                raise ConfigError(f"threshold must be 'auto' or a number, got {self.threshold!r}") from None
            if not 0 <= t <= 1:
                raise ConfigError(f"threshold {t} is outside the normalized range [0, 1]")
        if self.connectivity not in (6, 18, 26):
            raise ConfigError(f"connectivity must be 6, 18 or 26, got {self.connectivity}")
        if self.min_voxels < 1:
            raise ConfigError("min_voxels must be at least 1")
        if not self.max_volume > 0:
            raise ConfigError("max_volume must be positive")
        if self.k_max < 2:
            raise ConfigError("k_max must be at least 2")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.um_per_px is not None and not self.um_per_px > 0:
            raise ConfigError("um_per_px must be positive")
        if not self.radius > 0:
            raise ConfigError("radius must be positive")
        if self.reference_mode not in ("start", "midpoint"):
            raise ConfigError("reference_mode must be 'start' or 'midpoint'")
        return self

    def canonical(self) -> str:
        """Stable ``key=value`` text of the config, the basis of the config hash.

        ``output_dir`` is left out: where results land does not change them.
        """
        lines = []
        for f in dataclasses.fields(self):
            if f.name == "output_dir":
                continue
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(float(x)) for x in v)
            lines.append(f"{f.name}={'' if v is None else v}")
        return "\n".join(lines) + "\n"

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}


def _parse_spacing(text) -> tuple[float, float, float]:
    if isinstance(text, (tuple, list)):
        parts = list(text)
    else:
        parts = [p for p in str(text).replace(" ", ",").split(",") if p]
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"spacing {text!r} is not a list of numbers") from None
    if len(vals) == 1:
        vals = vals * 3
    if len(vals) != 3:
        raise ConfigError(f"spacing needs 1 or 3 values, got {len(vals)}")
    return vals


def _coerce(key: str, value):
    if key == "spacing":
        return _parse_spacing(value)
    if value in (None, ""):
        return None
    kind = _FIELDS[key].type
    try:
        if kind == "int":
            return int(value)
        if kind in ("float", "float | None"):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: {value!r} is not a valid {kind.split()[0]}") from None
    return str(value)


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    out = {}
    for n, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path.name} line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"{path.name} line {n}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def build_config(args: argparse.Namespace) -> PipelineConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for key in _FIELDS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = _coerce(key, v)
    values = {k: v for k, v in values.items() if v is not None or _FIELDS[k].default is None}
    return PipelineConfig(**values).validate()


def provenance(cfg: PipelineConfig, command: str) -> dict:
    return {
        "tool": "gliamorph",
        "version": __version__,
        "command": command,
        "config_sha256": cfg.sha256(),
        "seed": cfg.seed,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "tifffile": tifffile.__version__,
    }


def _preamble(prov: dict) -> list[str]:
    return [f"{k}: {prov[k]}" for k in sorted(prov)]


# -- pipeline stages -------------------------------------------------------

def segment_grid(grid: VoxelGrid, cfg: PipelineConfig) -> LabelVolume:
    norm = normalize(grid)
    t = otsu_threshold(norm) if cfg.threshold == "auto" else float(cfg.threshold)
    log.info("threshold %.6g", t)
    labels = label_components(binarize(norm, t), cfg.connectivity)
    labels = filter_small(labels, cfg.min_voxels)
    return split_oversized(labels, norm, max_volume=cfg.max_volume, k_max=cfg.k_max, seed=cfg.seed)


def _require_input(cfg: PipelineConfig) -> str:
    if not cfg.input:
        raise ConfigError("no input given (positional argument or 'input' in the config file)")
    return cfg.input


def _load_labels(path, spacing) -> LabelVolume:
    grid, _ = load_stack(path, spacing)
    return LabelVolume(np.asarray(grid.data, dtype=np.int64), tuple(spacing))


def _write_labels(stage: Staging, labels: LabelVolume, out, prov: dict):
    if labels.k > np.iinfo(np.uint16).max:
        raise CapacityError(f"{labels.k} labels do not fit in a 16-bit label stack")
    tmp = stage.path_for(out)
    write_stack(labels.labels.astype(np.uint16), tmp, labels.spacing, 16,
                description=json.dumps(prov, sort_keys=True))


def skeleton_table_text(labels: LabelVolume, preamble: list[str]) -> str:
    """One row per skeleton voxel: cell, voxel centre in microns, and its kind."""
    from scipy import ndimage

    buf = io.StringIO()
    for line in preamble:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cell_id", "x_um", "y_um", "z_um", "kind"])
    sx, sy, sz = labels.spacing
    kinds = {0: "isolated", 1: "endpoint", 2: "slab"}
    ones = np.ones((3, 3, 3), dtype=np.int64)
    for lbl, sl in enumerate(ndimage.find_objects(labels.labels), start=1):
        if sl is None:
            continue
        try:
            sk = skeletonize(labels.labels[sl] == lbl, labels.spacing, lbl)
        except GliaError as exc:
            log.warning("cell %d: %s", lbl, exc)
            continue
        m = sk.to_mask().astype(np.int64)
        deg = ndimage.convolve(m, ones, mode="constant") - 1
        off = [s.start for s in sl]
        for z, y, x in sk.voxels:
            kind = kinds.get(int(deg[z, y, x]), "junction")
            gz, gy, gx = z + off[0], y + off[1], x + off[2]
            w.writerow([lbl, f"{(gx + 0.5) * sx:.6g}", f"{(gy + 0.5) * sy:.6g}", f"{(gz + 0.5) * sz:.6g}", kind])
    return buf.getvalue()


def _comparison(cfg: PipelineConfig, prov: dict, morph_rows=None, morph_name=None):
    manual = parse_manual(cfg.manual) if cfg.manual else None
    ilastik = parse_ilastik(cfg.ilastik) if cfg.ilastik else None
    if morph_rows is None and cfg.morph:
        morph_rows = parse_morph(cfg.morph)
        morph_name = Path(cfg.morph).name
    sources = {}
    if cfg.manual:
        sources["manual"] = Path(cfg.manual).name
    if cfg.ilastik:
        sources["ilastik"] = Path(cfg.ilastik).name
    if morph_name:
        sources["morph"] = morph_name
    ccfg = CompareConfig(um_per_px=cfg.um_per_px, radius_um=cfg.radius, reference_mode=cfg.reference_mode,
                         sources=sources, provenance=dict(prov, inputs=sources))
    doc = summarize(manual, ilastik, morph_rows, ccfg)
    svg = scatter_svg(manual, ilastik, morph_rows, cfg.um_per_px, cfg.reference_mode, provenance=prov)
    return doc, svg


# -- subcommands -----------------------------------------------------------

def cmd_phantom(args, cfg: PipelineConfig) -> int:
    spacing = cfg.spacing
    try:
        if args.kind == "tube":
            grid, truth = make_tube(args.length, args.cell_radius, spacing)
        elif args.kind == "y":
            grid, truth = make_y_cell(args.length, args.cell_radius, spacing)
        elif args.kind == "sphere":
            grid, truth = make_sphere(args.cell_radius, spacing)
        elif args.kind == "blob-pair":
            grid, truth = make_blob_pair(args.separation, args.sigma, spacing, merged=args.merged)
        else:
            shape = tuple(args.shape)[::-1]
            grid, truth = make_scene(args.k, args.min_gap, args.cell_kind, cfg.seed, shape, spacing,
                                     args.length, args.cell_radius)
    except ValueError as exc:
        if isinstance(exc, GliaError):
            raise
        raise ConfigError(str(exc), module="phantom") from None
    if args.noise:
        grid = add_noise(grid, args.noise, cfg.seed)
        truth.noise_sigma = args.noise
    truth.seed = cfg.seed
    prov = provenance(cfg, "phantom")
    doc = dict(truth.to_dict(), provenance=prov)
    with Staging() as stage:
        write_stack(grid.data, stage.path_for(args.out), spacing, 16, description=json.dumps(prov, sort_keys=True))
        if args.truth:
            stage.write_text(args.truth, json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return 0


def cmd_segment(args, cfg: PipelineConfig) -> int:
    grid, _ = load_stack(_require_input(cfg), cfg.spacing)
    labels = segment_grid(grid, cfg)
    log.info("%d cells", labels.k)
    with Staging() as stage:
        _write_labels(stage, labels, args.out, provenance(cfg, "segment"))
    return 0


def cmd_skeleton(args, cfg: PipelineConfig) -> int:
    labels = _load_labels(_require_input(cfg), cfg.spacing)
    text = skeleton_table_text(labels, _preamble(provenance(cfg, "skeleton")))
    with Staging() as stage:
        stage.write_text(args.out, text)
    return 0


def cmd_morph(args, cfg: PipelineConfig) -> int:
    labels = _load_labels(_require_input(cfg), cfg.spacing)
    rows = analyze_cells(labels)
    with Staging() as stage:
        stage.write_text(args.out, morph_table_text(rows, _preamble(provenance(cfg, "morph"))))
    return 0


def cmd_compare(args, cfg: PipelineConfig) -> int:
    if not (cfg.manual or cfg.ilastik or cfg.morph):
        raise ConfigError("compare needs at least one of --manual, --ilastik, --morph")
    doc, svg = _comparison(cfg, provenance(cfg, "compare"))
    with Staging() as stage:
        stage.write_text(args.out, report_json(doc))
        if args.svg:
            stage.write_text(args.svg, svg)
    return 0


def cmd_run(args, cfg: PipelineConfig) -> int:
    src = Path(_require_input(cfg))
    grid, meta = load_stack(src, cfg.spacing)
    prov = dict(provenance(cfg, "run"), input=src.name)
    labels = segment_grid(grid, cfg)
    rows = analyze_cells(labels)
    out = Path(cfg.output_dir)
    morph_name = f"D_{meta.stack_id}.csv"
    with Staging() as stage:
        stage.write_text(out / morph_name, morph_table_text(rows, _preamble(prov)))
        if args.labels:
            _write_labels(stage, labels, out / f"labels_{meta.stack_id}.tif", prov)
        if cfg.manual or cfg.ilastik:
            doc, svg = _comparison(cfg, prov, rows, morph_name)
            stage.write_text(out / "report.json", report_json(doc))
            stage.write_text(out / "scatter.svg", svg)
    log.info("%d cells written to %s", len(rows), out / morph_name)
    return 0


# -- argument parsing ------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="flat key = value config file")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--spacing", default=argparse.SUPPRESS, help="voxel size in um: 'sx,sy,sz' or a single value")
    return p


def _seg_flags(p: argparse.ArgumentParser):
    p.add_argument("--threshold", default=None, help="'auto' (Otsu) or a value in [0, 1]")
    p.add_argument("--connectivity", type=int, choices=(6, 18, 26), default=None)
    p.add_argument("--min-voxels", dest="min_voxels", type=int, default=None)
    p.add_argument("--max-volume", dest="max_volume", type=float, default=None, help="um^3")
    p.add_argument("--k-max", dest="k_max", type=int, default=None)


def _cmp_flags(p: argparse.ArgumentParser):
    p.add_argument("--manual", default=None, help="M_ manual trace CSV")
    p.add_argument("--ilastik", default=None, help="i_ object CSV")
    p.add_argument("--um-per-px", dest="um_per_px", type=float, default=None)
    p.add_argument("--radius", type=float, default=None, help="match radius in um")
    p.add_argument("--reference-mode", dest="reference_mode", choices=("start", "midpoint"), default=None)


def make_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="gliamorph", description=__doc__.splitlines()[0], parents=[common])
    ap.add_argument("--version", action="version", version=f"gliamorph {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", parents=[common], help="write a synthetic volume and its truth JSON")
    p.add_argument("kind", choices=("tube", "y", "sphere", "blob-pair", "scene"))
    p.add_argument("--out", required=True, help="output TIFF stack")
    p.add_argument("--truth", help="output truth JSON")
    p.add_argument("--length", type=float, default=20.0, help="tube length or Y arm length (um)")
    p.add_argument("--cell-radius", dest="cell_radius", type=float, default=1.0, help="um")
    p.add_argument("--separation", type=float, default=5.6)
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--merged", action="store_true")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--min-gap", dest="min_gap", type=float, default=5.0)
    p.add_argument("--cell-kind", dest="cell_kind", choices=("tube", "y", "blob"), default="tube")
    p.add_argument("--shape", type=int, nargs=3, default=(128, 128, 128), metavar=("NX", "NY", "NZ"))
    p.add_argument("--noise", type=float, default=0.0)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("segment", parents=[common], help="threshold, label and split a stack")
    p.add_argument("input", nargs="?")
    p.add_argument("--out", required=True, help="output 16-bit label TIFF")
    _seg_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("skeleton", parents=[common], help="dump per-cell skeleton voxels as CSV")
    p.add_argument("input", nargs="?", help="label TIFF")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_skeleton)

    p = sub.add_parser("morph", parents=[common], help="per-cell morphology table from a label TIFF")
    p.add_argument("input", nargs="?", help="label TIFF")
    p.add_argument("--out", required=True, help="output D_ CSV")
    p.set_defaults(func=cmd_morph)

    p = sub.add_parser("compare", parents=[common], help="compare manual, ilastik and morphology outputs")
    _cmp_flags(p)
    p.add_argument("--morph", default=None, help="D_ morphology CSV")
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--svg", help="X-Y centroid scatter")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("run", parents=[common], help="full pipeline from stack to D_ table and report")
    p.add_argument("input", nargs="?")
    p.add_argument("--output-dir", dest="output_dir", default=None)
    p.add_argument("--labels", action="store_true", help="also write the label stack")
    _seg_flags(p)
    _cmp_flags(p)
    p.set_defaults(func=cmd_run)
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        return args.func(args, cfg)
    except GliaError as exc:
        print(f"error [{exc.module}] {type(exc).__name__}: {exc}", file=sys.stderr)
        if exc.hint:
            print(f"hint: {exc.hint}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error [io] {exc}", file=sys.stderr)
        print(f"hint: {InputError.hint}", file=sys.stderr)
        return InputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
