import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rffguard import iqdata
from rffguard.errors import DegenerateData, FormatError, InvalidArgument, ShapeError
from rffguard.iqdata import DeviceCapture, Role

from frozen import CAPTURE_BYTES_1992x720, FULL_SCALE_SPLIT


def indexed_capture(n, length, device_id=1, role=Role.GENUINE):
    frames = np.arange(n * length * 2, dtype=np.float32).reshape(n, length, 2)
    return DeviceCapture(device_id, role, frames)


def test_merge_hand_trace():
    cap = indexed_capture(7, 3)
    merged = iqdata.merge_frames(cap, 2)
    assert merged.frames.shape == (3, 6, 2)
    # frame 0 is raw frames 0 and 1 back to back; raw frame 6 is dropped
    np.testing.assert_array_equal(merged.frames[0], np.concatenate([cap.frames[0], cap.frames[1]]))
    np.testing.assert_array_equal(merged.frames[2][3:], cap.frames[5])


def test_merge_full_scale_geometry():
    cap = DeviceCapture(1, Role.GENUINE, np.zeros((19920, 72, 2), np.float32))
    merged = iqdata.merge_frames(cap, 10)
    assert merged.frames.shape == (1992, 720, 2)


@pytest.mark.parametrize("group", [0, -1, 8])
def test_merge_rejects(group):
    with pytest.raises(InvalidArgument):
        iqdata.merge_frames(indexed_capture(7, 3), group)


@given(st.integers(1, 30), st.integers(1, 5), st.integers(1, 6))
def test_merge_counts(n, length, group):
    if n < group:
        return
    merged = iqdata.merge_frames(indexed_capture(n, length), group)
    assert merged.n_frames == n // group
    assert merged.frame_len == length * group


def test_capture_rejects_nonfinite():
    frames = np.zeros((2, 3, 2))
    frames[1, 1, 0] = np.nan
    with pytest.raises(InvalidArgument):
        DeviceCapture(1, Role.GENUINE, frames)


def test_as_frame_complex():
    np.testing.assert_array_equal(iqdata.as_frame([1 + 2j, -1j]), [[1, 2], [0, -1]])
    with pytest.raises(ShapeError):
        iqdata.as_frame(np.zeros((3, 3)))


def _fleet_geometry(n_frames, length=1):
    caps = [DeviceCapture(d, Role.GENUINE, np.full((n_frames, length, 2), d, np.float32))
            for d in (1, 2, 5, 6, 7, 8, 9)]
    caps += [DeviceCapture(d, Role.ROGUE, np.full((n_frames, length, 2), d, np.float32)) for d in (3, 4)]
    caps.append(DeviceCapture(10, Role.VALIDATION_ONLY, np.full((n_frames, length, 2), 10, np.float32)))
    return caps


def test_split_full_scale_counts():
    split = iqdata.split_dataset(_fleet_geometry(1992), seed=0)
    assert split.counts == FULL_SCALE_SPLIT
    assert set(split.train.device_ids.tolist()) <= {1, 2, 5, 6, 7, 8, 9}
    assert int(np.sum(split.validation.device_ids == 10)) == 1992
    assert int(np.sum(np.isin(split.test.device_ids, [3, 4]))) == 3984


def test_split_is_a_partition_of_genuine_frames():
    caps = _fleet_geometry(50)
    split = iqdata.split_dataset(caps, seed=3)
    genuine = [(d, i) for part in (split.train, split.validation, split.test)
               for d, i, r in zip(part.device_ids, part.source_index, part.roles) if r == Role.GENUINE]
    assert len(genuine) == len(set(genuine)) == 7 * 50


def test_split_role_validation():
    caps = _fleet_geometry(5)
    with pytest.raises(InvalidArgument):
        iqdata.split_dataset([c for c in caps if c.role != Role.ROGUE])
    with pytest.raises(InvalidArgument):
        iqdata.split_dataset([c for c in caps if c.role != Role.VALIDATION_ONLY])
    with pytest.raises(InvalidArgument):
        iqdata.split_dataset(caps + [DeviceCapture(1, Role.GENUINE, np.zeros((1, 1, 2)))])


def test_split_seed_changes_order_only():
    a = iqdata.split_dataset(_fleet_geometry(20), seed=0)
    b = iqdata.split_dataset(_fleet_geometry(20), seed=1)
    assert a.counts == b.counts
    assert not np.array_equal(a.train.source_index, b.train.source_index)


def test_standardizer_hand_values():
    stats = iqdata.fit_standardizer(np.array([[[1.0, 3.0], [3.0, 5.0]]]))
    assert stats.to_dict() == {"mean_i": 2.0, "mean_q": 4.0, "std_i": 1.0, "std_q": 1.0}
    stats = iqdata.fit_standardizer(np.array([[[1.0, 2.0]], [[3.0, 4.0]]]))
    assert (stats.mean_i, stats.std_i, stats.mean_q, stats.std_q) == (2.0, 1.0, 3.0, 1.0)


def test_standardizer_degenerate():
    with pytest.raises(DegenerateData):
        iqdata.fit_standardizer(np.ones((4, 3, 2)))


def test_standardized_validation_not_centered(std_split):
    split, _ = std_split
    assert abs(split.train.frames.reshape(-1, 2).mean(0)).max() < 1e-5
    assert abs(split.validation.frames.reshape(-1, 2).mean(0)).max() > 1e-4


@given(arrays(np.float64, (5, 4, 2), elements=st.floats(-1e3, 1e3)))
def test_standardizer_round_trip(frames):
    try:
        stats = iqdata.fit_standardizer(frames)
    except DegenerateData:
        return
    if stats.std.min() < 1e-6:
        return
    back = iqdata.invert_standardizer(iqdata.apply_standardizer(frames, stats), stats)
    np.testing.assert_allclose(back, frames, atol=1e-6 * (1 + abs(frames).max()))


def test_model_input_shape():
    frame = np.random.default_rng(0).standard_normal((720, 2))
    tensor = iqdata.to_model_input(frame)
    assert tensor.shape == (720, 2, 1)
    np.testing.assert_array_equal(iqdata.from_model_input(tensor), frame)
    with pytest.raises(ShapeError):
        iqdata.to_model_input(frame[:700])


def test_capture_file_size():
    assert iqdata.capture_file_size(1992, 720) == CAPTURE_BYTES_1992x720


@given(st.integers(0, 6), st.integers(1, 9), st.sampled_from(list(Role)), st.integers(0, 2**16 - 1))
def test_capture_round_trip(tmp_path_factory, n, length, role, device_id):
    path = tmp_path_factory.mktemp("cap") / "x.iqcap"
    rng = np.random.default_rng(n * 31 + length)
    cap = DeviceCapture(device_id, role, rng.standard_normal((n, length, 2)))
    iqdata.save_capture(cap, path)
    assert path.stat().st_size == iqdata.capture_file_size(n, length)
    assert iqdata.load_capture(path) == cap


def test_capture_format_errors(tmp_path):
    path = tmp_path / "x.iqcap"
    iqdata.save_capture(indexed_capture(2, 3), path)
    raw = path.read_bytes()

    (tmp_path / "magic").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError) as exc:
        iqdata.load_capture(tmp_path / "magic")
    assert exc.value.offset == 0

    (tmp_path / "version").write_bytes(raw[:4] + struct.pack("<H", 9) + raw[6:])
    with pytest.raises(FormatError) as exc:
        iqdata.load_capture(tmp_path / "version")
    assert exc.value.offset == 4

    (tmp_path / "role").write_bytes(raw[:8] + bytes([77]) + raw[9:])
    with pytest.raises(FormatError) as exc:
        iqdata.load_capture(tmp_path / "role")
    assert exc.value.offset == 8

    (tmp_path / "short").write_bytes(raw[:-4])
    with pytest.raises(FormatError):
        iqdata.load_capture(tmp_path / "short")
    (tmp_path / "tiny").write_bytes(raw[:10])
    with pytest.raises(FormatError):
        iqdata.load_capture(tmp_path / "tiny")


def test_role_parse():
    assert Role.parse("rogue") is Role.ROGUE
    assert Role.parse(2) is Role.VALIDATION_ONLY
    with pytest.raises(InvalidArgument):
        Role.parse("friendly")
