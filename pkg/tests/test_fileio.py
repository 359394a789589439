import numpy as np
import pytest

from sphwin.blocks import DecoderConfig, init_decoder_params
from sphwin.errors import FormatError
from sphwin.fileio import (
    load_decoder_params,
    read_depth,
    read_depth_png,
    read_feature_map,
    read_image,
    read_index_map,
    read_pfm,
    save_decoder_params,
    write_depth_png,
    write_feature_map,
    write_image,
    write_index_map,
    write_pfm,
)
from sphwin.sphere import ErpGrid
from sphwin.tensor import FeatureMap
from sphwin.transform import TemplateConfig, build_index_map_fast


def make_map(include_coords=True):
    cfg = TemplateConfig(grid=ErpGrid(16, 32), rows=4, cols=4)
    return build_index_map_fast(cfg, include_coords=include_coords)


class TestSwtm:
    def test_round_trip_with_coords(self, tmp_path):
        m = make_map()
        path = str(tmp_path / "map.swtm")
        write_index_map(m, path)
        back = read_index_map(path)
        assert back.config == m.config
        np.testing.assert_array_equal(back.indices, m.indices)
        np.testing.assert_array_equal(back.lat, m.lat)
        np.testing.assert_array_equal(back.lon, m.lon)

    def test_round_trip_without_coords(self, tmp_path):
        m = make_map(include_coords=False)
        path = str(tmp_path / "map.swtm")
        write_index_map(m, path)
        back = read_index_map(path)
        assert not back.has_coords
        np.testing.assert_array_equal(back.indices, m.indices)

    def test_coords_can_be_suppressed(self, tmp_path):
        m = make_map()
        path = str(tmp_path / "map.swtm")
        write_index_map(m, path, include_coords=False)
        assert not read_index_map(path).has_coords

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.swtm"
        path.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(FormatError):
            read_index_map(str(path))

    def test_truncated(self, tmp_path):
        m = make_map(include_coords=False)
        path = str(tmp_path / "map.swtm")
        write_index_map(m, path)
        data = open(path, "rb").read()
        open(path, "wb").write(data[:-8])
        with pytest.raises(FormatError):
            read_index_map(path)

    def test_unknown_version(self, tmp_path):
        m = make_map(include_coords=False)
        path = str(tmp_path / "map.swtm")
        write_index_map(m, path)
        data = bytearray(open(path, "rb").read())
        data[4] = 99  # bump the version field
        open(path, "wb").write(bytes(data))
        with pytest.raises(FormatError):
            read_index_map(path)


class TestFmap:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(61)
        f = FeatureMap(rng.normal(size=(8, 16, 3)).astype(np.float32))
        path = str(tmp_path / "f.fmap")
        write_feature_map(f, path)
        back = read_feature_map(path)
        np.testing.assert_array_equal(back.values, f.values)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.fmap"
        path.write_bytes(b"XXXX" + b"\x00" * 20)
        with pytest.raises(FormatError):
            read_feature_map(str(path))


class TestPfm:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(62)
        depth = rng.uniform(0.1, 50.0, (8, 16)).astype(np.float32)
        path = str(tmp_path / "d.pfm")
        write_pfm(depth, path)
        back = read_pfm(path)
        np.testing.assert_array_equal(back.astype(np.float32), depth)

    def test_rejects_color(self, tmp_path):
        path = tmp_path / "c.pfm"
        path.write_bytes(b"PF\n2 2\n-1.0\n" + b"\x00" * 48)
        with pytest.raises(FormatError):
            read_pfm(str(path))


class TestDepthPng:
    def test_round_trip_at_scale(self, tmp_path):
        depth = np.array([[0.001, 1.0], [2.5, 65.535]])
        path = str(tmp_path / "d.png")
        write_depth_png(depth, path, units_per_meter=1000.0)
        back = read_depth_png(path, units_per_meter=1000.0)
        np.testing.assert_allclose(back, depth, atol=5e-4)

    def test_dispatch(self, tmp_path):
        depth = np.array([[1.0, 2.0], [3.0, 4.0]])
        png = str(tmp_path / "d.png")
        pfm = str(tmp_path / "d.pfm")
        fmap = str(tmp_path / "d.fmap")
        write_depth_png(depth, png)
        write_pfm(depth, pfm)
        write_feature_map(FeatureMap(depth[:, :, None].astype(np.float32)), fmap)
        np.testing.assert_allclose(read_depth(png), depth, atol=1e-3)
        np.testing.assert_allclose(read_depth(pfm), depth, atol=1e-6)
        np.testing.assert_allclose(read_depth(fmap), depth, atol=1e-6)
        with pytest.raises(FormatError):
            read_depth(str(tmp_path / "d.jpg"))


class TestImagePng:
    def test_rgb_round_trip(self, tmp_path):
        rng = np.random.default_rng(63)
        img = FeatureMap(rng.integers(0, 256, (8, 16, 3)).astype(np.float32))
        path = str(tmp_path / "img.png")
        write_image(img, path)
        back = read_image(path)
        np.testing.assert_array_equal(back.values, img.values)

    def test_gray_round_trip(self, tmp_path):
        img = FeatureMap(np.arange(32, dtype=np.float32).reshape(4, 8, 1))
        path = str(tmp_path / "g.png")
        write_image(img, path)
        np.testing.assert_array_equal(read_image(path).values, img.values)


class TestParamBundle:
    def test_round_trip(self, tmp_path):
        cfg = DecoderConfig(height=64, width=128, channels=(8, 12, 16, 24), seed=9)
        params = init_decoder_params(cfg)
        directory = str(tmp_path / "bundle")
        save_decoder_params(params, directory)
        back = load_decoder_params(directory)
        assert back.seed == params.seed
        assert len(back.levels) == len(params.levels)
        np.testing.assert_array_equal(back.head, params.head)
        for lp_a, lp_b in zip(params.levels, back.levels):
            if lp_a.fuse is None:
                assert lp_b.fuse is None
            else:
                np.testing.assert_array_equal(lp_a.fuse, lp_b.fuse)
            for bp_a, bp_b in zip(lp_a.blocks, lp_b.blocks):
                assert bp_a.attention.heads == bp_b.attention.heads
                np.testing.assert_array_equal(bp_a.attention.w_key, bp_b.attention.w_key)
                np.testing.assert_array_equal(bp_a.mlp_w1, bp_b.mlp_w1)
                np.testing.assert_array_equal(bp_a.cpe_kernel, bp_b.cpe_kernel)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FormatError):
            load_decoder_params(str(tmp_path))
