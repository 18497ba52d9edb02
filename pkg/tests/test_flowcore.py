"""Value types, .flo I/O, image I/O, colorization, and cropping."""
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowdistill.flowcore import (
    FloCorruptError,
    FloDimensionError,
    FloFormatError,
    FlowField,
    FramePair,
    ImageFrame,
    crop_center,
    crop_to_multiple,
    flow_to_color,
    make_color_wheel,
    read_flo,
    read_image,
    write_flo,
    write_image,
)


# ---------------------------------------------------------------------------
# value types


class TestTypes:
    def test_image_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            ImageFrame(np.full((4, 4, 1), 1.5))
        with pytest.raises(ValueError):
            ImageFrame(np.full((4, 4, 1), -0.1))

    def test_image_rejects_nan(self):
        data = np.zeros((4, 4, 1))
        data[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            ImageFrame(data)

    def test_image_rejects_bad_channel_count(self):
        with pytest.raises(ValueError):
            ImageFrame(np.zeros((4, 4, 2)))

    def test_image_data_is_immutable(self):
        frame = ImageFrame(np.zeros((4, 4, 1)))
        with pytest.raises(ValueError):
            frame.data[0, 0, 0] = 1.0

    def test_flow_rejects_nonfinite(self):
        u = np.zeros((3, 3))
        v = np.zeros((3, 3))
        v[1, 1] = np.inf
        with pytest.raises(ValueError):
            FlowField(u, v)

    def test_flow_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            FlowField(np.zeros((3, 3)), np.zeros((3, 4)))

    def test_pair_rejects_dim_mismatch(self):
        a = ImageFrame(np.zeros((4, 4, 1)))
        b = ImageFrame(np.zeros((4, 5, 1)))
        with pytest.raises(ValueError):
            FramePair(a, b)

    def test_flow_magnitude(self):
        f = FlowField(np.full((2, 2), 3.0), np.full((2, 2), 4.0))
        assert np.all(f.magnitude() == 5.0)


# ---------------------------------------------------------------------------
# .flo format


class TestFloIO:
    def test_hand_written_fixture_parses(self, tmp_path):
        # 2x1 field with vectors (1,0) and (0,-1): header + 4 floats = 28 bytes
        payload = struct.pack("<fii", 202021.25, 2, 1)
        payload += struct.pack("<ffff", 1.0, 0.0, 0.0, -1.0)
        assert len(payload) == 28
        p = tmp_path / "fixture.flo"
        p.write_bytes(payload)
        flow = read_flo(p)
        assert (flow.width, flow.height) == (2, 1)
        assert flow.u.tolist() == [[1.0, 0.0]]
        assert flow.v.tolist() == [[0.0, -1.0]]

    def test_zero_flow_1x1_bytes(self, tmp_path):
        # header (12 bytes) + one (u, v) pair (8 bytes) = 20 bytes
        p = tmp_path / "zero.flo"
        write_flo(FlowField.zeros(1, 1), p)
        raw = p.read_bytes()
        assert raw == struct.pack("<fii", 202021.25, 1, 1) + struct.pack("<ff", 0.0, 0.0)

    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        flow = FlowField(
            rng.normal(size=(7, 5)).astype(np.float32).astype(np.float64),
            rng.normal(size=(7, 5)).astype(np.float32).astype(np.float64),
        )
        p = tmp_path / "a.flo"
        write_flo(flow, p)
        back = read_flo(p)
        assert np.array_equal(back.u, flow.u)
        assert np.array_equal(back.v, flow.v)
        # and the byte stream itself reproduces
        p2 = tmp_path / "b.flo"
        write_flo(back, p2)
        assert p.read_bytes() == p2.read_bytes()

    def test_wrong_magic(self, tmp_path):
        p = tmp_path / "bad.flo"
        p.write_bytes(struct.pack("<fii", 0.0, 1, 1) + b"\0" * 8)
        with pytest.raises(FloFormatError):
            read_flo(p)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "short.flo"
        p.write_bytes(struct.pack("<fii", 202021.25, 2, 2) + b"\0" * 8)
        with pytest.raises(FloCorruptError):
            read_flo(p)

    def test_trailing_garbage(self, tmp_path):
        p = tmp_path / "long.flo"
        p.write_bytes(struct.pack("<fii", 202021.25, 1, 1) + b"\0" * 12)
        with pytest.raises(FloCorruptError):
            read_flo(p)

    def test_nonpositive_dims(self, tmp_path):
        p = tmp_path / "dims.flo"
        p.write_bytes(struct.pack("<fii", 202021.25, 0, 1))
        with pytest.raises(FloDimensionError):
            read_flo(p)

    def test_nan_rejected_before_write(self, tmp_path):
        flow = FlowField.zeros(2, 2)
        # bypass the constructor guard to simulate tampering
        object.__setattr__(flow, "u", np.full((2, 2), np.nan))
        with pytest.raises(ValueError):
            write_flo(flow, tmp_path / "nan.flo")
        assert not (tmp_path / "nan.flo").exists()

    @settings(max_examples=25, deadline=None)
    @given(
        w=st.integers(1, 8),
        h=st.integers(1, 8),
        seed=st.integers(0, 2**31 - 1),
    )
    def test_round_trip_property(self, tmp_path_factory, w, h, seed):
        rng = np.random.default_rng(seed)
        flow = FlowField(
            rng.normal(scale=10, size=(h, w)).astype(np.float32),
            rng.normal(scale=10, size=(h, w)).astype(np.float32),
        )
        p = tmp_path_factory.mktemp("flo") / "x.flo"
        write_flo(flow, p)
        back = read_flo(p)
        assert np.array_equal(back.as_array(), flow.as_array())


# ---------------------------------------------------------------------------
# image I/O


class TestImageIO:
    def test_8bit_endpoints(self, tmp_path):
        import cv2

        p = tmp_path / "x.png"
        cv2.imwrite(str(p), np.array([[0, 255]], dtype=np.uint8))
        frame = read_image(p)
        assert frame.data[0, 0, 0] == 0.0
        assert frame.data[0, 1, 0] == 1.0

    def test_8bit_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        frame = ImageFrame(rng.integers(0, 256, size=(9, 7, 3)) / 255.0)
        p = tmp_path / "rt.png"
        write_image(frame, p)
        back = read_image(p)
        assert np.array_equal(back.data, frame.data)

    def test_16bit_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        frame = ImageFrame(rng.integers(0, 65536, size=(5, 6, 1)) / 65535.0)
        p = tmp_path / "rt16.png"
        write_image(frame, p, bit_depth=16)
        back = read_image(p)
        assert np.array_equal(back.data, frame.data)

    def test_rgb_channel_order_preserved(self, tmp_path):
        # a pure-red pixel must come back red, not blue
        data = np.zeros((1, 1, 3))
        data[0, 0, 0] = 1.0
        p = tmp_path / "red.png"
        write_image(ImageFrame(data), p)
        back = read_image(p)
        assert back.data[0, 0].tolist() == [1.0, 0.0, 0.0]


# ---------------------------------------------------------------------------
# flow colorization


class TestColorize:
    def test_wheel_shape_and_range(self):
        wheel = make_color_wheel()
        assert wheel.shape == (55, 3)
        assert np.all((wheel >= 0) & (wheel <= 1))
        # sector structure: starts at pure red
        assert wheel[0].tolist() == [1.0, 0.0, 0.0]

    def test_zero_flow_is_white(self):
        img = flow_to_color(FlowField.zeros(4, 4))
        assert np.all(img.data == 1.0)

    def test_unit_right_vector_is_red(self):
        u = np.array([[1.0]])
        v = np.array([[0.0]])
        img = flow_to_color(FlowField(u, v), max_magnitude=1.0)
        assert img.data[0, 0].tolist() == [1.0, 0.0, 0.0]

    def test_hue_invariant_under_scaling(self):
        rng = np.random.default_rng(3)
        u = rng.normal(size=(6, 6))
        v = rng.normal(size=(6, 6))
        a = flow_to_color(FlowField(u, v), max_magnitude=10.0)
        b = flow_to_color(FlowField(2 * u, 2 * v), max_magnitude=20.0)
        # same direction and same normalized magnitude -> identical image
        assert np.allclose(a.data, b.data)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), scale=st.floats(0.01, 100.0))
    def test_output_always_valid(self, seed, scale):
        rng = np.random.default_rng(seed)
        flow = FlowField(
            rng.normal(scale=scale, size=(5, 5)),
            rng.normal(scale=scale, size=(5, 5)),
        )
        img = flow_to_color(flow)
        assert img.channels == 3
        assert np.all((img.data >= 0.0) & (img.data <= 1.0))


# ---------------------------------------------------------------------------
# cropping


class TestCrop:
    def test_multiple_of_64_unchanged(self):
        frame = ImageFrame(np.zeros((448, 640, 1)))
        out = crop_to_multiple(frame, 64)
        assert out is frame

    def test_650x450_crops_to_640x448_centered(self):
        data = np.zeros((450, 650, 1))
        data[1, 5, 0] = 1.0  # lands at (0, 0) after a (5, 1) corner offset
        out = crop_to_multiple(ImageFrame(data), 64)
        assert (out.width, out.height) == (640, 448)
        assert out.data[0, 0, 0] == 1.0

    def test_too_small_errors(self):
        with pytest.raises(ValueError):
            crop_to_multiple(ImageFrame(np.zeros((63, 63, 1))), 64)

    def test_idempotent(self):
        frame = ImageFrame(np.zeros((100, 130, 1)))
        once = crop_to_multiple(frame, 32)
        twice = crop_to_multiple(once, 32)
        assert (twice.height, twice.width) == (once.height, once.width)
        assert twice is once

    def test_crop_center_flow(self):
        u = np.arange(16, dtype=np.float64).reshape(4, 4)
        out = crop_center(FlowField(u, u), 2, 2)
        assert out.u.tolist() == [[5.0, 6.0], [9.0, 10.0]]
