import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from semimg import core
from semimg.core import Frame, FlowField, FrameSequence, normalize_to_u8
from semimg.errors import (DecodeError, DimensionMismatch, NoFrames, NonFiniteInput,
                           PairMismatch)


def _write(path, arr):
    Image.fromarray(arr).save(path)


def test_load_frames_orders_by_numeric_suffix(tmp_path):
    for i in range(5):
        _write(tmp_path / f"{i:03d}.png", np.full((4, 6), i * 10, np.uint8))
    seq = core.load_frames(tmp_path)
    assert len(seq) == 5
    assert [f.data[0, 0, 0] * 255 for f in seq] == pytest.approx([0, 10, 20, 30, 40])


def test_load_frames_unpadded_names_sort_numerically(tmp_path):
    for i in (1, 2, 10):
        _write(tmp_path / f"f{i}.png", np.full((2, 2), i, np.uint8))
    seq = core.load_frames(tmp_path)
    assert [round(f.data[0, 0, 0] * 255) for f in seq] == [1, 2, 10]


def test_single_frame(tmp_path):
    _write(tmp_path / "0.png", np.zeros((3, 3, 3), np.uint8))
    seq = core.load_frames(tmp_path)
    assert len(seq) == 1 and seq.shape == (3, 3, 3)


def test_mixed_sizes_rejected(tmp_path):
    _write(tmp_path / "0.png", np.zeros((3, 3), np.uint8))
    _write(tmp_path / "1.png", np.zeros((4, 3), np.uint8))
    with pytest.raises(DimensionMismatch):
        core.load_frames(tmp_path)


def test_empty_directory(tmp_path):
    with pytest.raises(NoFrames):
        core.load_frames(tmp_path)


def test_undecodable_file_named(tmp_path):
    (tmp_path / "000.png").write_bytes(b"not a png")
    with pytest.raises(DecodeError, match="000.png"):
        core.load_frames(tmp_path)


def test_ppm_frames(tmp_path):
    rgb = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
    Image.fromarray(rgb).save(tmp_path / "1.ppm")
    seq = core.load_frames(tmp_path)
    np.testing.assert_array_equal(seq[0].data, rgb / 255.0)


def test_png_round_trip_is_bit_exact(tmp_path, rng):
    raw = rng.integers(0, 256, size=(3, 7, 5, 3), dtype=np.uint8)
    for i, a in enumerate(raw):
        _write(tmp_path / f"{i:05d}.png", a)
    first = core.load_frames(tmp_path)
    out = tmp_path / "again"
    out.mkdir()
    for i, f in enumerate(first):
        core.save_frame(out / f"{i:05d}.png", f)
    second = core.load_frames(out)
    np.testing.assert_array_equal(first.array, second.array)
    np.testing.assert_array_equal(np.round(second.array * 255).astype(np.uint8), raw)


def test_frame_invariants():
    with pytest.raises(NonFiniteInput):
        Frame(np.array([[np.nan]]))
    with pytest.raises(ValueError):
        Frame(np.array([[1.5]]))
    with pytest.raises(DimensionMismatch):
        Frame(np.zeros((2, 2, 4)))
    f = Frame(np.zeros((2, 3)))
    assert (f.height, f.width, f.channels) == (2, 3, 1)
    with pytest.raises(ValueError):
        f.data[0, 0, 0] = 1.0


def test_sequence_rejects_mixed_shapes():
    with pytest.raises(DimensionMismatch):
        FrameSequence([np.zeros((2, 2)), np.zeros((2, 3))])
    with pytest.raises(NoFrames):
        FrameSequence([])


# ---------------------------------------------------------------- flows

@pytest.mark.parametrize("sample, expected", [(0, -20.0), (255, 20.0), (128, 128 * 40 / 255 - 20)])
def test_flow_decode_map(sample, expected):
    assert core.decode_flow_samples(sample) == pytest.approx(expected, abs=1e-12)


def test_flow_decode_128_value():
    # 128 * 40 / 255 - 20 evaluated by hand: 5120/255 - 20 = 0.0784...
    assert core.decode_flow_samples(128) == pytest.approx(0.0784, abs=5e-5)


def test_load_flows(tmp_path, rng):
    u = rng.uniform(-25, 25, size=(6, 5))
    v = rng.uniform(-25, 25, size=(6, 5))
    core.save_flows(tmp_path, [FlowField.clipped(u, v)] * 2)
    flows = core.load_flows(tmp_path)
    assert len(flows) == 2
    for f in flows:
        assert np.abs(f.u).max() <= 20 and np.abs(f.v).max() <= 20
        np.testing.assert_allclose(f.u, np.clip(u, -20, 20), atol=20 / 255 + 1e-12)
        np.testing.assert_allclose(f.v, np.clip(v, -20, 20), atol=20 / 255 + 1e-12)


def test_missing_flow_pair(tmp_path):
    _write(tmp_path / "u_00001.png", np.zeros((2, 2), np.uint8))
    _write(tmp_path / "v_00001.png", np.zeros((2, 2), np.uint8))
    _write(tmp_path / "u_00002.png", np.zeros((2, 2), np.uint8))
    with pytest.raises(PairMismatch):
        core.load_flows(tmp_path)


def test_flow_field_clip_contract():
    with pytest.raises(ValueError):
        FlowField(np.full((2, 2), 21.0), np.zeros((2, 2)))
    f = FlowField.clipped(np.full((2, 2), 99.0), np.full((2, 2), -99.0))
    assert f.u.max() == 20 and f.v.min() == -20


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(-20, 20)))
def test_flow_encode_decode_within_half_step(u):
    back = core.decode_flow_samples(core.encode_flow_component(u))
    assert np.abs(back - u).max() <= 20 / 255 + 1e-9


# ------------------------------------------------------------ normalize

def test_normalize_example():
    enc = normalize_to_u8(np.array([[-3.0, 5.0, 1.0]]))
    # round((x - min) / (max - min) * 255) with half-up: 1 -> 127.5 -> 128
    assert enc.data[..., 0].tolist() == [[0, 255, 128]]


def test_normalize_constant_is_zero():
    assert not normalize_to_u8(np.full((3, 4), 0.7)).data.any()


def test_normalize_two_valued_fixed():
    a = np.array([[0.0, 255.0], [255.0, 0.0]])
    np.testing.assert_array_equal(normalize_to_u8(a).data[..., 0], a.astype(np.uint8))


def test_normalize_rejects_nan():
    with pytest.raises(NonFiniteInput):
        normalize_to_u8(np.array([0.0, np.inf]))


@settings(max_examples=100, deadline=None)
@given(arrays(np.int64, (3, 5), elements=st.integers(-1000, 1000)),
       st.integers(-6, 6), st.integers(-1000, 1000))
def test_normalize_affine_invariance_exact(x, log2a, b):
    # dyadic scale and integer shift keep the arithmetic exact
    x = x.astype(np.float64)
    a = 2.0 ** log2a
    np.testing.assert_array_equal(normalize_to_u8(a * x + b).data, normalize_to_u8(x).data)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (3, 5), elements=st.floats(-1e3, 1e3)),
       st.floats(1e-3, 1e3), st.floats(-1e3, 1e3))
def test_normalize_affine_invariance_general(x, a, b):
    lhs = normalize_to_u8(a * x + b).data.astype(int)
    rhs = normalize_to_u8(x).data.astype(int)
    if np.ptp(x) > 1e-6 * max(1.0, np.abs(x).max()):
        # only an exact .5 tie can flip under rounding noise
        assert np.abs(lhs - rhs).max() <= 1


# --------------------------------------------------------------- dumps

def test_float_dump_round_trip(tmp_path, rng):
    img = rng.standard_normal((5, 4, 3)).astype(np.float32).astype(np.float64)
    path = core.write_dump(tmp_path / "x.semi", img)
    raw = path.read_bytes()
    assert raw[:4] == b"SEMI" and len(raw) == 16 + 4 * img.size
    assert np.frombuffer(raw[4:16], "<u4").tolist() == [5, 4, 3]
    np.testing.assert_array_equal(core.read_dump(path), img)


def test_stack_dump_round_trip(tmp_path, rng):
    st_ = rng.standard_normal((3, 2, 4, 5)).astype(np.float32).astype(np.float64)
    path = core.write_stack_dump(tmp_path / "s.semi", st_)
    assert np.frombuffer(path.read_bytes()[4:20], "<u4").tolist() == [4, 5, 2, 3]
    np.testing.assert_array_equal(core.read_stack_dump(path), st_)


def test_dump_bad_magic(tmp_path):
    p = tmp_path / "bad"
    p.write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(DecodeError):
        core.read_dump(p)
