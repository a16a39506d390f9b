import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gigazoom.geometry import PixelRect, Resolution
from gigazoom.tiled_image import GigaImage, Patch, TileError, build_tiled, read_pgm, read_region, write_pgm


def test_pgm_round_trip(tmp_path, rng):
    pixels = rng.integers(0, 256, (7, 13), dtype=np.uint8)
    write_pgm(tmp_path / "a.pgm", pixels)
    assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5\n13 7\n255\n")
    np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm"), pixels)


def test_pgm_with_comment_header(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n2 1\n255\n\x05\x06")
    np.testing.assert_array_equal(read_pgm(tmp_path / "c.pgm"), [[5, 6]])


def test_exact_tiling(tmp_path, rng):
    raster = rng.integers(0, 256, (64, 64), dtype=np.uint8)
    img = build_tiled(raster, tmp_path, 32)
    assert img.grid == (2, 2)
    patch = read_region(img, PixelRect(0, 0, 64, 64), Resolution(64, 64))
    np.testing.assert_array_equal(patch.pixels, raster)


def test_remainder_tiles(tmp_path, rng):
    raster = rng.integers(0, 256, (64, 65), dtype=np.uint8)
    img = build_tiled(raster, tmp_path, 32)
    assert img.grid == (2, 3)
    assert read_pgm(tmp_path / "tile_0_2.pgm").shape == (32, 1)
    np.testing.assert_array_equal(read_region(img, PixelRect.full(img.canvas), img.canvas).pixels, raster)


def test_gigapixel_grid_arithmetic(tmp_path):
    # only the manifest matters for the grid; tiles are never written
    (tmp_path / "manifest.json").write_text(
        '{"width": 26908, "height": 15024, "tile_size": 1024, "format": "pgm"}'
    )
    img = GigaImage(tmp_path)
    assert img.grid == (math.ceil(15024 / 1024), math.ceil(26908 / 1024)) == (15, 27)


def test_manifest_fields(tmp_path, rng):
    import json

    build_tiled(rng.integers(0, 256, (20, 40), dtype=np.uint8), tmp_path, 16)
    assert json.loads((tmp_path / "manifest.json").read_text()) == {
        "width": 40, "height": 20, "tile_size": 16, "format": "pgm"
    }


def test_box_average(tmp_path):
    raster = np.zeros((32, 32), dtype=np.uint8)
    raster[:2, :2] = [[10, 30], [50, 70]]
    img = build_tiled(raster, tmp_path, 16)
    patch = read_region(img, PixelRect(0, 0, 2, 2), Resolution(1, 1))
    assert patch.pixels.tolist() == [[40]]


def test_bilinear_of_constant(tmp_path):
    raster = np.full((16, 16), 100, dtype=np.uint8)
    img = build_tiled(raster, tmp_path, 16)
    patch = read_region(img, PixelRect(3, 4, 1, 1), Resolution(2, 2))
    assert patch.pixels.tolist() == [[100, 100], [100, 100]]


def test_upsampling_interpolates_between_samples(tmp_path):
    raster = np.zeros((16, 16), dtype=np.uint8)
    raster[0, :2] = [0, 200]
    img = build_tiled(raster, tmp_path, 16)
    row = read_region(img, PixelRect(0, 0, 2, 1), Resolution(4, 1)).pixels[0]
    # half-pixel centred: samples at -0.25, 0.25, 0.75, 1.25 (clamped)
    assert row.tolist() == [0, 50, 150, 200]


def test_generator_source(tmp_path):
    canvas = Resolution(50, 30)

    def gen(r):
        ys, xs = np.mgrid[r.y : r.y1, r.x : r.x1]
        return ((xs + 3 * ys) % 256).astype(np.uint8)

    img = build_tiled(gen, tmp_path, 16, canvas)
    full = read_region(img, PixelRect.full(canvas), canvas).pixels
    np.testing.assert_array_equal(full, gen(PixelRect.full(canvas)))


def test_generator_dimension_mismatch(tmp_path):
    with pytest.raises(TileError):
        build_tiled(lambda r: np.zeros((1, 1), np.uint8), tmp_path, 16, Resolution(40, 40))


def test_small_tile_size_rejected(tmp_path):
    with pytest.raises(ValueError):
        build_tiled(np.zeros((8, 8), np.uint8), tmp_path, 8)


def test_out_of_bounds_rect(tmp_path, rng):
    img = build_tiled(rng.integers(0, 256, (32, 32), dtype=np.uint8), tmp_path, 16)
    with pytest.raises(ValueError):
        read_region(img, PixelRect(20, 0, 16, 16), Resolution(4, 4))


def test_missing_tile(tmp_path, rng):
    img = build_tiled(rng.integers(0, 256, (32, 32), dtype=np.uint8), tmp_path, 16)
    (tmp_path / "tile_1_1.pgm").unlink()
    with pytest.raises(TileError, match="missing"):
        read_region(img, PixelRect(0, 0, 32, 32), Resolution(8, 8))
    # regions avoiding the missing tile still work
    read_region(img, PixelRect(0, 0, 16, 32), Resolution(8, 8))


def test_wrong_tile_dimensions(tmp_path, rng):
    img = build_tiled(rng.integers(0, 256, (32, 32), dtype=np.uint8), tmp_path, 16)
    write_pgm(tmp_path / "tile_0_0.pgm", np.zeros((15, 16), np.uint8))
    with pytest.raises(TileError, match="expected 16x16"):
        img.load_tile(0, 0)


def test_patch_validation():
    with pytest.raises(ValueError):
        Patch(Resolution(2, 2), np.zeros((3, 2), np.uint8))
    with pytest.raises(ValueError):
        Patch(Resolution(2, 2), np.zeros((2, 2), np.float32))


def test_concurrent_reads_agree(tmp_path, rng):
    raster = rng.integers(0, 256, (96, 96), dtype=np.uint8)
    img = build_tiled(raster, tmp_path, 16)
    rect, out = PixelRect(5, 7, 70, 61), Resolution(20, 17)
    expected = read_region(img, rect, out).pixels
    results = []

    def work():
        results.append(read_region(img, rect, out).pixels)

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(np.array_equal(r, expected) for r in results)


@settings(max_examples=25, deadline=None)
@given(
    w=st.integers(1, 512),
    h=st.integers(1, 512),
    tile=st.sampled_from([16, 32, 100]),
    seed=st.integers(0, 2**32 - 1),
)
def test_round_trip_property(tmp_path_factory, w, h, tile, seed):
    raster = np.random.default_rng(seed).integers(0, 256, (h, w), dtype=np.uint8)
    img = build_tiled(raster, tmp_path_factory.mktemp("rt"), tile)
    np.testing.assert_array_equal(read_region(img, PixelRect.full(img.canvas), img.canvas).pixels, raster)


@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_locality_property(tmp_path_factory, data):
    w, h = data.draw(st.integers(40, 300)), data.draw(st.integers(40, 300))
    tile = data.draw(st.sampled_from([16, 32, 100]))
    raster = np.random.default_rng(0).integers(0, 256, (h, w), dtype=np.uint8)
    img = build_tiled(raster, tmp_path_factory.mktemp("loc"), tile)
    x = data.draw(st.integers(0, w - 1))
    y = data.draw(st.integers(0, h - 1))
    rw = data.draw(st.integers(1, w - x))
    rh = data.draw(st.integers(1, h - y))
    img.tiles_loaded = 0
    read_region(img, PixelRect(x, y, rw, rh), Resolution(max(1, rw // 3), max(1, rh // 3)))
    assert img.tiles_loaded <= math.ceil(rw / tile + 1) * math.ceil(rh / tile + 1)


@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_box_filter_mean_conservation(tmp_path_factory, data):
    w, h = data.draw(st.integers(2, 120)), data.draw(st.integers(2, 120))
    raster = np.random.default_rng(data.draw(st.integers(0, 999))).integers(0, 256, (h, w), dtype=np.uint8)
    img = build_tiled(raster, tmp_path_factory.mktemp("box"), 16)
    out = Resolution(data.draw(st.integers(1, w)), data.draw(st.integers(1, h)))
    patch = read_region(img, PixelRect.full(img.canvas), out)
    assert abs(patch.pixels.mean() - raster.mean()) <= 1.0
