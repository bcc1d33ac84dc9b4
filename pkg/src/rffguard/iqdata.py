"""Frames, device captures, dataset splits, standardization and the IQCAP file format.

A frame is a ``(length, 2)`` float array of (i, q) pairs. A capture stacks
frames of one device into a ``(n_frames, length, 2)`` float32 array.
"""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateData, FormatError, InvalidArgument, ShapeError

MAGIC = b"IQC1"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHHB7xII8x")
assert HEADER.size == 32


class Role(enum.IntEnum):
    GENUINE = 0
    ROGUE = 1
    VALIDATION_ONLY = 2
    SYNTHETIC = 3

    @classmethod
    def parse(cls, value: "Role | str | int") -> "Role":
        if isinstance(value, Role):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise InvalidArgument(f"unknown role {value!r}") from None
        return cls(value)


def as_frame(samples) -> np.ndarray:
    """Coerce ``samples`` (pairs or complex values) to a validated ``(L, 2)`` frame."""
    arr = np.asarray(samples)
    if np.iscomplexobj(arr):
        arr = np.stack([arr.real, arr.imag], axis=-1)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise ShapeError(f"frame must have shape (L>0, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument("frame contains non-finite samples")
    return arr


@dataclass(eq=False)
class DeviceCapture:
    device_id: int
    role: Role
    frames: np.ndarray

    def __post_init__(self):
        self.role = Role.parse(self.role)
        frames = np.asarray(self.frames, dtype=np.float32)
        if frames.ndim == 2 and frames.shape[0] == 0:
            frames = frames.reshape(0, 0, 2)
        if frames.ndim != 3 or frames.shape[2] != 2:
            raise ShapeError(f"capture frames must be (n, L, 2), got {frames.shape}")
        if frames.shape[0] and frames.shape[1] == 0:
            raise ShapeError("frame length must be positive")
        if not np.all(np.isfinite(frames)):
            raise InvalidArgument(f"device {self.device_id}: non-finite samples")
        if not 0 <= self.device_id < 2**16:
            raise InvalidArgument(f"device_id {self.device_id} outside u16 range")
        self.frames = frames

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_len(self) -> int:
        return self.frames.shape[1]

    def __eq__(self, other):
        if not isinstance(other, DeviceCapture):
            return NotImplemented
        return (
            self.device_id == other.device_id
            and self.role == other.role
            and self.frames.shape == other.frames.shape
            and np.array_equal(self.frames, other.frames)
        )


def merge_frames(capture: DeviceCapture, group_size: int) -> DeviceCapture:
    """Concatenate each run of ``group_size`` consecutive frames; leftovers are dropped."""
    if group_size <= 0:
        raise InvalidArgument("group_size must be positive")
    if capture.n_frames == 0:
        raise InvalidArgument("cannot merge an empty capture")
    if capture.n_frames < group_size:
        raise InvalidArgument(
            f"capture has {capture.n_frames} frames, fewer than group_size={group_size}"
        )
    n_out = capture.n_frames // group_size
    kept = capture.frames[: n_out * group_size]
    merged = kept.reshape(n_out, group_size * capture.frame_len, 2)
    return DeviceCapture(capture.device_id, capture.role, merged)


@dataclass
class SplitPart:
    """Column-oriented records of one split: frame, owning device, role, source index."""

    frames: np.ndarray
    device_ids: np.ndarray
    roles: np.ndarray
    source_index: np.ndarray
    standardized: bool = False

    def __len__(self) -> int:
        return self.frames.shape[0]

    @classmethod
    def empty(cls, frame_len: int) -> "SplitPart":
        return cls(
            np.zeros((0, frame_len, 2), np.float32),
            np.zeros(0, np.int64),
            np.zeros(0, np.int64),
            np.zeros(0, np.int64),
        )

    def select(self, mask) -> "SplitPart":
        return replace(
            self,
            frames=self.frames[mask],
            device_ids=self.device_ids[mask],
            roles=self.roles[mask],
            source_index=self.source_index[mask],
        )

    def concat(self, other: "SplitPart") -> "SplitPart":
        if self.standardized != other.standardized:
            raise InvalidArgument("cannot concatenate standardized and raw records")
        return replace(
            self,
            frames=np.concatenate([self.frames, other.frames]),
            device_ids=np.concatenate([self.device_ids, other.device_ids]),
            roles=np.concatenate([self.roles, other.roles]),
            source_index=np.concatenate([self.source_index, other.source_index]),
        )

    def is_rogue(self) -> np.ndarray:
        """Ground truth for detection: everything that is not an enrolled genuine device."""
        return self.roles != Role.GENUINE


@dataclass
class DatasetSplit:
    train: SplitPart
    validation: SplitPart
    test: SplitPart
    genuine_ids: tuple[int, ...] = field(default=())

    @property
    def counts(self) -> dict[str, int]:
        return {
            "train": len(self.train),
            "validation": len(self.validation),
            "test": len(self.test),
        }


def _part_from(capture: DeviceCapture, idx: np.ndarray) -> SplitPart:
    n = len(idx)
    return SplitPart(
        capture.frames[idx],
        np.full(n, capture.device_id, np.int64),
        np.full(n, int(capture.role), np.int64),
        np.asarray(idx, np.int64),
    )


def _floor_share(ratio: float, n: int) -> int:
    # the epsilon keeps e.g. 0.7 * 10 from flooring to 6 on round-off
    return int(math.floor(ratio * n + 1e-9))


def split_dataset(
    captures: list[DeviceCapture],
    ratios: tuple[float, float] = (0.70, 0.10),
    seed: int = 0,
) -> DatasetSplit:
    """Pool genuine frames, shuffle by ``seed``, and cut floor shares of the pool.

    Train takes ``floor(r_train * N)`` genuine frames, validation takes
    ``floor(r_val * N)`` plus every validation-only frame, and test takes the
    remaining genuine frames plus every rogue frame.
    """
    r_train, r_val = ratios
    if r_train < 0 or r_val < 0 or r_train + r_val > 1:
        raise InvalidArgument(f"invalid split ratios {ratios}")
    ids = [c.device_id for c in captures]
    if len(set(ids)) != len(ids):
        raise InvalidArgument("device ids must be unique within a capture collection")
    by_role = {role: [c for c in captures if c.role == role] for role in Role}
    if not by_role[Role.GENUINE]:
        raise InvalidArgument("split needs at least one genuine device")
    if not by_role[Role.ROGUE]:
        raise InvalidArgument("split needs at least one rogue device")
    if len(by_role[Role.VALIDATION_ONLY]) != 1:
        raise InvalidArgument("split needs exactly one validation_only device")
    lengths = {c.frame_len for c in captures if c.n_frames}
    if len(lengths) > 1:
        raise ShapeError(f"captures disagree on frame length: {sorted(lengths)}")
    frame_len = lengths.pop() if lengths else 0

    genuine = sorted(by_role[Role.GENUINE], key=lambda c: c.device_id)
    pool = SplitPart.empty(frame_len)
    for cap in genuine:
        pool = pool.concat(_part_from(cap, np.arange(cap.n_frames)))
    n = len(pool)
    order = np.random.default_rng(seed).permutation(n)
    pool = pool.select(order)
    n_train = _floor_share(r_train, n)
    n_val = _floor_share(r_val, n)

    train = pool.select(slice(0, n_train))
    validation = pool.select(slice(n_train, n_train + n_val))
    test = pool.select(slice(n_train + n_val, n))
    for cap in by_role[Role.VALIDATION_ONLY]:
        validation = validation.concat(_part_from(cap, np.arange(cap.n_frames)))
    for cap in sorted(by_role[Role.ROGUE], key=lambda c: c.device_id):
        test = test.concat(_part_from(cap, np.arange(cap.n_frames)))
    return DatasetSplit(train, validation, test, tuple(c.device_id for c in genuine))


@dataclass(frozen=True)
class StandardizationStats:
    mean_i: float
    mean_q: float
    std_i: float
    std_q: float

    def __post_init__(self):
        if not (self.std_i > 0 and self.std_q > 0):
            raise DegenerateData("standard deviations must be strictly positive")

    @property
    def mean(self) -> np.ndarray:
        return np.array([self.mean_i, self.mean_q])

    @property
    def std(self) -> np.ndarray:
        return np.array([self.std_i, self.std_q])

    def to_dict(self) -> dict[str, float]:
        return {"mean_i": self.mean_i, "mean_q": self.mean_q, "std_i": self.std_i, "std_q": self.std_q}


def fit_standardizer(train_frames) -> StandardizationStats:
    """Per-channel mean and population std over every sample of every frame."""
    frames = np.asarray(train_frames, dtype=np.float64)
    if frames.size == 0:
        raise DegenerateData("cannot fit a standardizer on no frames")
    flat = frames.reshape(-1, 2)
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    if np.any(std == 0) or not np.all(np.isfinite(std)):
        raise DegenerateData(f"channel with zero variance (std={std.tolist()})")
    return StandardizationStats(float(mean[0]), float(mean[1]), float(std[0]), float(std[1]))


def apply_standardizer(frames, stats: StandardizationStats) -> np.ndarray:
    frames = np.asarray(frames)
    dtype = frames.dtype if np.issubdtype(frames.dtype, np.floating) else np.float64
    out = (frames.astype(np.float64) - stats.mean) / stats.std
    return out.astype(dtype)


def invert_standardizer(frames, stats: StandardizationStats) -> np.ndarray:
    frames = np.asarray(frames)
    return (frames.astype(np.float64) * stats.std + stats.mean).astype(frames.dtype)


def standardize_part(part: SplitPart, stats: StandardizationStats) -> SplitPart:
    if part.standardized:
        return part
    return replace(part, frames=apply_standardizer(part.frames, stats), standardized=True)


def standardize_split(split: DatasetSplit, stats: StandardizationStats) -> DatasetSplit:
    return replace(
        split,
        train=standardize_part(split.train, stats),
        validation=standardize_part(split.validation, stats),
        test=standardize_part(split.test, stats),
    )


def to_model_input(frame, length: int = 720) -> np.ndarray:
    """Stack a frame as ``(length, 2, 1)``: sample index, {I, Q}, unit channel."""
    arr = np.asarray(frame)
    if arr.ndim != 2 or arr.shape != (length, 2):
        raise ShapeError(f"expected frame of shape ({length}, 2), got {arr.shape}")
    return arr[:, :, None]


def from_model_input(tensor) -> np.ndarray:
    arr = np.asarray(tensor)
    if arr.ndim != 3 or arr.shape[1:] != (2, 1):
        raise ShapeError(f"expected tensor of shape (L, 2, 1), got {arr.shape}")
    return arr[:, :, 0]


def capture_file_size(n_frames: int, frame_len: int) -> int:
    return HEADER.size + n_frames * frame_len * 2 * 4


def save_capture(capture: DeviceCapture, path) -> None:
    header = HEADER.pack(
        MAGIC, FORMAT_VERSION, capture.device_id, int(capture.role),
        capture.n_frames, capture.frame_len,
    )
    body = capture.frames.astype("<f4", copy=False).tobytes(order="C")
    Path(path).write_bytes(header + body)


def load_capture(path) -> DeviceCapture:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)", len(raw))
    magic, version, device_id, role, n_frames, frame_len = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}", 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}", 4)
    try:
        role = Role(role)
    except ValueError:
        raise FormatError(f"{path}: unknown role code {role}", 8) from None
    expected = capture_file_size(n_frames, frame_len)
    if len(raw) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes for {n_frames}x{frame_len} frames, found {len(raw)}",
            min(len(raw), expected),
        )
    frames = np.frombuffer(raw, dtype="<f4", offset=HEADER.size)
    frames = frames.reshape(n_frames, frame_len, 2).astype(np.float32)
    return DeviceCapture(device_id, role, frames)
