"""Z-stack loading and writing.

Arrays are stored z-major, shape ``(nz, ny, nx)``, while spacing is always
given as ``(sx, sy, sz)`` in microns.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tifffile
from PIL import Image

from .errors import DimensionMismatchError, EmptyInputError, FormatError

SLICE_SUFFIXES = (".tif", ".tiff", ".png")

Spacing = tuple[float, float, float]


@dataclass(frozen=True)
class VoxelGrid:
    data: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"expected a nonempty 3D array, got shape {data.shape}")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or min(spacing) <= 0:
            raise ValueError(f"spacing must be three positive numbers, got {self.spacing}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)

    @property
    def nx(self) -> int:
        return self.data.shape[2]

    @property
    def ny(self) -> int:
        return self.data.shape[1]

    @property
    def nz(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.nx, self.ny, self.nz

    @property
    def voxel_volume(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz


@dataclass(frozen=True)
class StackMeta:
    stack_id: str
    slice_count: int
    bit_depth: int
    source_path: str
    slice_names: tuple[str, ...] = field(default=())


def _bit_depth(arr: np.ndarray, name: str) -> int:
    if arr.ndim != 2:
        raise FormatError(f"{name}: expected a single-channel grayscale slice, got shape {arr.shape}")
    if arr.dtype == np.uint8 or arr.dtype == np.bool_:
        return 8
    if arr.dtype == np.uint16:
        return 16
    raise FormatError(f"{name}: unsupported pixel type {arr.dtype} (need 8- or 16-bit)")


def _read_slice(path: Path) -> np.ndarray:
    if path.suffix.lower() == ".png":
        with Image.open(path) as im:
            if im.mode not in ("L", "I;16", "I;16B", "I;16L", "1"):
                raise FormatError(f"{path.name}: unsupported image mode {im.mode}")
            arr = np.array(im)
        if arr.dtype == np.bool_:
            arr = arr.astype(np.uint8)
        elif arr.dtype != np.uint8:
            arr = arr.astype(np.uint16)
        return arr
    arr = tifffile.imread(path)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    return arr


def load_stack(path: str | os.PathLike, spacing: Spacing = (1.0, 1.0, 1.0)) -> tuple[VoxelGrid, StackMeta]:
    """Load a multi-page TIFF or a directory of single-slice images.

    Directory slices are sorted by the byte order of their file names. Raw
    intensities are kept; call :func:`normalize` to rescale to [0, 1].
    """
    path = Path(path)
    if not path.exists():
        raise EmptyInputError(f"{path}: no such file or directory", module="volume_io")

    if path.is_dir():
        files = sorted(
            (p for p in path.iterdir() if p.is_file() and p.suffix.lower() in SLICE_SUFFIXES),
            key=lambda p: os.fsencode(p.name),
        )
        if not files:
            raise EmptyInputError(f"{path}: directory contains no image slices", module="volume_io")
        slices, names = [], []
        depth = None
        for f in files:
            arr = _read_slice(f)
            d = _bit_depth(arr, f.name)
            if slices and arr.shape != slices[0].shape:
                raise DimensionMismatchError(
                    f"slice {f.name} has shape {arr.shape[::-1]} (w, h) but {names[0]} has {slices[0].shape[::-1]}"
                )
            if depth is not None and d != depth:
                raise FormatError(f"slice {f.name} is {d}-bit but earlier slices are {depth}-bit")
            depth = d
            slices.append(arr)
            names.append(f.name)
        data = np.stack(slices).astype(np.uint8 if depth == 8 else np.uint16)
    else:
        with tifffile.TiffFile(path) as tif:
            pages = [p.asarray() for p in tif.pages]
        if not pages:
            raise EmptyInputError(f"{path}: TIFF has no pages", module="volume_io")
        # a single page may itself hold a whole 3D volume
        if len(pages) == 1 and pages[0].ndim == 3:
            pages = list(pages[0])
        depth = None
        for i, arr in enumerate(pages):
            d = _bit_depth(arr, f"{path.name}[page {i}]")
            if arr.shape != pages[0].shape:
                raise DimensionMismatchError(
                    f"{path.name}: page {i} has shape {arr.shape[::-1]} (w, h), page 0 has {pages[0].shape[::-1]}"
                )
            if depth is not None and d != depth:
                raise FormatError(f"{path.name}: page {i} is {d}-bit but page 0 is {depth}-bit")
            depth = d
        data = np.stack(pages).astype(np.uint8 if depth == 8 else np.uint16)
        names = [f"page{i:04d}" for i in range(len(pages))]

    grid = VoxelGrid(data, spacing)
    meta = StackMeta(
        stack_id=path.stem,
        slice_count=grid.nz,
        bit_depth=depth,
        source_path=str(path),
        slice_names=tuple(names),
    )
    return grid, meta


def normalize(grid: VoxelGrid) -> VoxelGrid:
    """Linearly rescale intensities to [0, 1]; constant grids become all zero."""
    data = grid.data.astype(np.float64)
    lo, hi = data.min(), data.max()
    if hi == lo:
        return VoxelGrid(np.zeros_like(data), grid.spacing)
    out = (data - lo) / (hi - lo)
    np.clip(out, 0.0, 1.0, out=out)
    return VoxelGrid(out, grid.spacing)


def to_uint(data: np.ndarray, bit_depth: int = 16) -> np.ndarray:
    """Convert a [0, 1] float volume to unsigned integers, or pass integer data through."""
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    if np.issubdtype(data.dtype, np.floating):
        top = np.iinfo(dtype).max
        return np.rint(np.clip(data, 0.0, 1.0) * top).astype(dtype)
    if data.size and data.max() > np.iinfo(dtype).max:
        raise FormatError(f"values up to {data.max()} do not fit in {bit_depth} bits")
    return data.astype(dtype)


def write_stack(data: np.ndarray, path: str | os.PathLike, spacing: Spacing | None = None,
                bit_depth: int = 16, description: str | None = None) -> Path:
    """Write a volume as a multi-page TIFF (one page per z slice).

    Float data in [0, 1] is scaled to the full integer range; integer data
    (label volumes) is stored as is.
    """
    path = Path(path)
    arr = to_uint(np.asarray(data), bit_depth)
    kwargs = {}
    if spacing is not None:
        kwargs["resolution"] = (1.0 / spacing[0], 1.0 / spacing[1])
    tifffile.imwrite(path, arr, photometric="minisblack", metadata=None,
                     description=description, **kwargs)
    return path


def write_slices(data: np.ndarray, directory: str | os.PathLike, bit_depth: int = 16,
                 suffix: str = ".tif") -> list[Path]:
    """Write one image per z slice as ``slice_0000.tif`` and so on."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arr = to_uint(np.asarray(data), bit_depth)
    out = []
    for z in range(arr.shape[0]):
        p = directory / f"slice_{z:04d}{suffix}"
        if suffix == ".png":
            Image.fromarray(arr[z]).save(p)
        else:
            tifffile.imwrite(p, arr[z])
        out.append(p)
    return out
