from __future__ import annotations

import numpy as np
import pytest
import tifffile
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from gliamorph.errors import DimensionMismatchError, EmptyInputError, FormatError
from gliamorph.volume_io import VoxelGrid, load_stack, normalize, write_slices, write_stack


def test_directory_of_three_slices(tmp_path):
    for i in range(3):
        tifffile.imwrite(tmp_path / f"s{i}.tif", np.full((4, 4), i, np.uint8))
    grid, meta = load_stack(tmp_path, (0.5, 0.5, 1.0))
    assert (grid.nx, grid.ny, grid.nz) == (4, 4, 3)
    assert grid.spacing == (0.5, 0.5, 1.0)
    assert meta.slice_count == grid.nz == 3
    assert meta.bit_depth == 8
    assert [int(grid.data[z, 0, 0]) for z in range(3)] == [0, 1, 2]


def test_single_megapixel_slice(tmp_path):
    tifffile.imwrite(tmp_path / "big.tif", np.zeros((1024, 1024), np.uint16))
    grid, meta = load_stack(tmp_path / "big.tif")
    assert (grid.nx, grid.ny, grid.nz) == (1024, 1024, 1)
    assert meta.bit_depth == 16


def test_mixed_dimensions_names_the_slice(tmp_path):
    tifffile.imwrite(tmp_path / "a.tif", np.zeros((4, 4), np.uint8))
    tifffile.imwrite(tmp_path / "b.tif", np.zeros((4, 5), np.uint8))
    with pytest.raises(DimensionMismatchError, match="b.tif"):
        load_stack(tmp_path)


def test_empty_directory(tmp_path):
    with pytest.raises(EmptyInputError):
        load_stack(tmp_path)


def test_missing_path(tmp_path):
    with pytest.raises(EmptyInputError):
        load_stack(tmp_path / "nope.tif")


def test_unsupported_bit_depth(tmp_path):
    tifffile.imwrite(tmp_path / "f.tif", np.zeros((4, 4), np.float32))
    with pytest.raises(FormatError):
        load_stack(tmp_path)


def test_mixed_bit_depth(tmp_path):
    tifffile.imwrite(tmp_path / "a.tif", np.zeros((4, 4), np.uint8))
    tifffile.imwrite(tmp_path / "b.tif", np.zeros((4, 4), np.uint16))
    with pytest.raises(FormatError):
        load_stack(tmp_path)


def test_slices_sorted_by_byte_order(tmp_path):
    # byte order puts "B" before "a" and "s10" before "s2"
    for name, v in (("s2.tif", 3), ("s10.tif", 2), ("a.tif", 4), ("B.tif", 1)):
        tifffile.imwrite(tmp_path / name, np.full((2, 2), v, np.uint8))
    grid, meta = load_stack(tmp_path)
    assert meta.slice_names == ("B.tif", "a.tif", "s10.tif", "s2.tif")
    assert grid.data[:, 0, 0].tolist() == [1, 4, 2, 3]


def test_png_slices(tmp_path):
    for i in range(2):
        Image.fromarray(np.full((3, 5), 10 * i, np.uint8)).save(tmp_path / f"p{i}.png")
    grid, _ = load_stack(tmp_path)
    assert grid.dims == (5, 3, 2)


def test_normalize_8bit_values():
    g = VoxelGrid(np.array([[[0, 128, 255]]], np.uint8), (1, 1, 1))
    out = normalize(g).data.ravel()
    assert out.tolist() == [0.0, 128 / 255, 1.0]


def test_constant_grid_normalizes_to_zero():
    g = VoxelGrid(np.full((2, 3, 4), 7, np.uint16), (1, 1, 1))
    assert not normalize(g).data.any()


def test_random_16bit_normalizes_to_unit_range():
    data = np.random.default_rng(0).integers(0, 65536, (5, 6, 7)).astype(np.uint16)
    out = normalize(VoxelGrid(data, (1, 1, 1))).data
    assert out.min() == 0.0 and out.max() == 1.0


@settings(max_examples=50, deadline=None)
@given(arrays(np.uint16, st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))))
def test_normalize_idempotent(data):
    g = VoxelGrid(data, (1, 1, 1))
    once = normalize(g)
    assert np.allclose(normalize(once).data, once.data, atol=1e-15)


def test_grid_invariants():
    with pytest.raises(ValueError):
        VoxelGrid(np.zeros((2, 2, 2)), (0.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        VoxelGrid(np.zeros((0, 2, 2)), (1.0, 1.0, 1.0))
    g = VoxelGrid(np.zeros((2, 3, 4)), (0.5, 0.5, 2.0))
    assert g.voxel_volume == 0.5
    assert g.data.size == g.nx * g.ny * g.nz
    with pytest.raises(ValueError):
        g.data[0, 0, 0] = 1


@pytest.mark.parametrize("suffix", [".tif", ".png"])
def test_slice_round_trip(tmp_path, suffix):
    data = np.random.default_rng(1).integers(0, 65536, (4, 5, 6)).astype(np.uint16)
    write_slices(data, tmp_path, suffix=suffix)
    grid, _ = load_stack(tmp_path)
    assert np.array_equal(grid.data, data)


def test_multipage_round_trip_and_determinism(tmp_path):
    data = np.random.default_rng(2).integers(0, 256, (3, 4, 5)).astype(np.uint8)
    write_stack(data, tmp_path / "a.tif", bit_depth=8)
    write_stack(data, tmp_path / "b.tif", bit_depth=8)
    g1, m1 = load_stack(tmp_path / "a.tif")
    assert np.array_equal(g1.data, data) and m1.bit_depth == 8
    assert (tmp_path / "a.tif").read_bytes() == (tmp_path / "b.tif").read_bytes()
    g2, _ = load_stack(tmp_path / "a.tif")
    assert np.array_equal(g1.data, g2.data)


def test_float_volume_scaled_to_full_range(tmp_path):
    write_stack(np.array([[[0.0, 0.5, 1.0]]]), tmp_path / "f.tif")
    grid, _ = load_stack(tmp_path / "f.tif")
    assert grid.data.ravel().tolist() == [0, 32768, 65535]
