"""Optical flow solver, colorization, and .flo serialization tests."""

import numpy as np
import numpy.testing as npt
import pytest

from dfflow.errors import BadMagic, DegenerateFrame, DimensionMismatch, TruncatedFile
from dfflow.media_io import Frame
from dfflow.optical_flow import (
    FlowField,
    HsSettings,
    flow_to_rgb,
    horn_schunck,
    image_gradients,
    read_flo,
    write_flo,
)


def make_blob_pair(seed, dx, dy, size=112, n_blobs=120):
    """Analytically rendered blob texture and its translated copy.

    Rendering both frames from the closed-form Gaussian mixture gives a
    pair whose true displacement is known exactly, with no interpolation
    error to muddy the oracle.
    """
    rng = np.random.default_rng(seed)
    cx = rng.uniform(0, size, n_blobs)
    cy = rng.uniform(0, size, n_blobs)
    sig = rng.uniform(2.5, 5.0, n_blobs)
    amp = rng.uniform(0.5, 1.0, n_blobs)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    def render(ox, oy):
        img = np.zeros((size, size))
        for k in range(n_blobs):
            img += amp[k] * np.exp(
                -(((xx - ox) - cx[k]) ** 2 + ((yy - oy) - cy[k]) ** 2) / (2 * sig[k] ** 2)
            )
        return img / img.max() * 0.95

    return Frame(render(0.0, 0.0)), Frame(render(dx, dy))


def interior_error(flow, dx, dy, margin=16):
    inner = (slice(margin, flow.height - margin), slice(margin, flow.width - margin))
    return np.hypot(flow.u[inner] - dx, flow.v[inner] - dy).mean()


class TestImageGradients:
    def test_constant_pair_all_zero(self):
        f = Frame(np.full((9, 11), 0.4))
        g = image_gradients(f, f)
        npt.assert_array_equal(g.ix, 0.0)
        npt.assert_array_equal(g.iy, 0.0)
        npt.assert_array_equal(g.it, 0.0)

    def test_horizontal_ramp(self):
        w = 16
        ramp = np.tile(np.arange(w) / w, (8, 1))
        f = Frame(ramp)
        g = image_gradients(f, f)
        npt.assert_array_equal(g.it, 0.0)
        npt.assert_allclose(g.ix[:, 1:-1], 1.0 / w, atol=1e-15)
        npt.assert_array_equal(g.iy, 0.0)

    def test_temporal_step(self):
        a = Frame(np.zeros((6, 6)))
        b = Frame(np.ones((6, 6)))
        g = image_gradients(a, b)
        npt.assert_array_equal(g.it, 1.0)
        npt.assert_array_equal(g.ix, 0.0)
        npt.assert_array_equal(g.iy, 0.0)

    def test_size_mismatch_rejected(self):
        with pytest.raises(DimensionMismatch):
            image_gradients(Frame(np.zeros((4, 4))), Frame(np.zeros((4, 5))))

    def test_color_frames_rejected(self):
        rgb = Frame(np.zeros((3, 4, 4)))
        with pytest.raises(DimensionMismatch):
            image_gradients(rgb, rgb)


class TestHornSchunck:
    def test_identical_frames_exact_zero(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            f = Frame(rng.random((24, 31)))
            flow = horn_schunck(f, f, HsSettings(alpha=8.0, max_iters=50, tol=0.0))
            npt.assert_array_equal(flow.u, 0.0)
            npt.assert_array_equal(flow.v, 0.0)

    def test_translated_texture_recovered(self):
        rng = np.random.default_rng(31)
        for seed in range(5):
            d = rng.uniform(-2.0, 2.0, 2)
            while np.hypot(*d) > 2.0:
                d = rng.uniform(-2.0, 2.0, 2)
            prev, nxt = make_blob_pair(400 + seed, d[0], d[1])
            flow = horn_schunck(prev, nxt, HsSettings(alpha=15.0, max_iters=200, tol=0.0))
            assert interior_error(flow, d[0], d[1]) <= 0.25

    def test_single_blob_unit_shift(self):
        size = 112
        yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
        sig = 18.0

        def blob(ox):
            return 0.9 * np.exp(-((xx - ox - 55.5) ** 2 + (yy - 55.5) ** 2) / (2 * sig**2))

        prev, nxt = Frame(blob(0.0)), Frame(blob(1.0))
        # A lone blob leaves most of the frame untextured, so the mean
        # flow converges slowly; give the solver more sweeps.
        flow = horn_schunck(prev, nxt, HsSettings(alpha=15.0, max_iters=2000, tol=0.0))
        m = 16
        inner = (slice(m, size - m), slice(m, size - m))
        mean_u = flow.u[inner].mean()
        mean_v = flow.v[inner].mean()
        assert np.hypot(mean_u - 1.0, mean_v) <= 0.25

    def test_noise_pair_is_finite(self):
        rng = np.random.default_rng(99)
        a = Frame(rng.random((40, 40)))
        b = Frame(rng.random((40, 40)))
        flow = horn_schunck(a, b, HsSettings(alpha=15.0, max_iters=60, tol=1e-4))
        assert np.isfinite(flow.u).all()
        assert np.isfinite(flow.v).all()

    def test_residual_not_worse_than_zero_flow(self):
        prev, nxt = make_blob_pair(812, 1.3, -0.7)
        flow = horn_schunck(prev, nxt, HsSettings(alpha=15.0, max_iters=200, tol=0.0))
        g = image_gradients(prev, nxt)
        after = np.abs(g.ix * flow.u + g.iy * flow.v + g.it).mean()
        before = np.abs(g.it).mean()
        assert after <= before

    def test_determinism(self):
        prev, nxt = make_blob_pair(55, 0.8, 0.4, size=48, n_blobs=30)
        f1 = horn_schunck(prev, nxt)
        f2 = horn_schunck(prev, nxt)
        npt.assert_array_equal(f1.u, f2.u)
        npt.assert_array_equal(f1.v, f2.v)

    def test_tiny_frame_rejected(self):
        a = Frame(np.zeros((1, 3)))
        with pytest.raises(DegenerateFrame):
            horn_schunck(a, a)

    def test_area_four_accepted(self):
        a = Frame(np.zeros((2, 2)))
        flow = horn_schunck(a, a)
        assert flow.u.shape == (2, 2)


class TestFlowToRgb:
    def test_zero_flow_black(self):
        f = FlowField(np.zeros((5, 7)), np.zeros((5, 7)))
        img = flow_to_rgb(f)
        assert img.data.shape == (3, 5, 7)
        npt.assert_array_equal(img.data, 0.0)

    def test_unit_right_is_red(self):
        f = FlowField(np.ones((4, 4)), np.zeros((4, 4)))
        img = flow_to_rgb(f)
        npt.assert_allclose(img.data[0], 1.0, atol=1e-12)
        npt.assert_allclose(img.data[1], 0.0, atol=1e-12)
        npt.assert_allclose(img.data[2], 0.0, atol=1e-12)

    def test_unit_down_hue_90(self):
        # atan2(1, 0) = 90 degrees; hexcone at full value gives (0.5, 1, 0).
        f = FlowField(np.zeros((3, 3)), np.ones((3, 3)))
        img = flow_to_rgb(f)
        npt.assert_allclose(img.data[0], 0.5, atol=1e-12)
        npt.assert_allclose(img.data[1], 1.0, atol=1e-12)
        npt.assert_allclose(img.data[2], 0.0, atol=1e-12)

    def test_unit_left_is_cyan(self):
        f = FlowField(-np.ones((3, 3)), np.zeros((3, 3)))
        img = flow_to_rgb(f)
        npt.assert_allclose(img.data[0], 0.0, atol=1e-12)
        npt.assert_allclose(img.data[1], 1.0, atol=1e-12)
        npt.assert_allclose(img.data[2], 1.0, atol=1e-12)

    def test_fixed_cap_scales_value(self):
        f = FlowField(np.ones((2, 2)), np.zeros((2, 2)))
        img = flow_to_rgb(f, cap=2.0)
        npt.assert_allclose(img.data[0], 0.5, atol=1e-12)

    def test_fixed_cap_clamps(self):
        f = FlowField(np.full((2, 2), 3.0), np.zeros((2, 2)))
        img = flow_to_rgb(f, cap=1.0)
        npt.assert_allclose(img.data[0], 1.0, atol=1e-12)

    def test_positive_scaling_invariance(self):
        rng = np.random.default_rng(17)
        u = rng.normal(size=(20, 20))
        v = rng.normal(size=(20, 20))
        base = flow_to_rgb(FlowField(u, v))
        for lam in (0.25, 3.7, 1000.0):
            scaled = flow_to_rgb(FlowField(lam * u, lam * v))
            npt.assert_allclose(scaled.data, base.data, atol=1e-12)


class TestFloFormat:
    def test_round_trip_exact_f32(self, tmp_path):
        rng = np.random.default_rng(3)
        u = rng.normal(size=(6, 9)).astype(np.float32).astype(np.float64)
        v = rng.normal(size=(6, 9)).astype(np.float32).astype(np.float64)
        path = tmp_path / "field.flo"
        write_flo(FlowField(u, v), path)
        back = read_flo(path)
        npt.assert_array_equal(back.u, u)
        npt.assert_array_equal(back.v, v)

    def test_single_pixel_is_twenty_bytes(self, tmp_path):
        path = tmp_path / "one.flo"
        write_flo(FlowField(np.array([[2.0]]), np.array([[-3.0]])), path)
        assert path.stat().st_size == 20
        back = read_flo(path)
        assert back.u[0, 0] == 2.0
        assert back.v[0, 0] == -3.0

    def test_rewrite_bit_identical(self, tmp_path):
        u = np.arange(6, dtype=np.float64).reshape(2, 3) / 7.0
        v = -u
        p1 = tmp_path / "a.flo"
        p2 = tmp_path / "b.flo"
        write_flo(FlowField(u, v), p1)
        write_flo(read_flo(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.flo"
        import struct

        path.write_bytes(struct.pack("<fii", 0.0, 1, 1) + b"\x00" * 8)
        with pytest.raises(BadMagic):
            read_flo(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "short.flo"
        path.write_bytes(b"PIEH")
        with pytest.raises(TruncatedFile):
            read_flo(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "cut.flo"
        write_flo(FlowField(np.ones((4, 4)), np.ones((4, 4))), path)
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(TruncatedFile):
            read_flo(path)
