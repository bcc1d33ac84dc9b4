"""Synthetic transmitter fleet with per-device hardware impairments.

Every device sends the same QPSK preamble; devices differ only in their
impairment profile, so a classifier can only tell them apart by the
hardware fingerprint. Besides the scalar impairments, each device carries a
short complex FIR (analog reconstruction-filter ripple from component
tolerances), which makes fingerprints high-dimensional the way real
transmitters are: an unseen device then looks like none of the enrolled
ones instead of an extrapolation of one of them.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import InvalidArgument
from .iqdata import DeviceCapture, Role

PREAMBLE_SEED = 0x51F5  # fixed: the header must not depend on any run seed


@dataclass(frozen=True)
class ImpairmentProfile:
    gain_imbalance_db: float = 0.0
    phase_imbalance_deg: float = 0.0
    dc_offset_i: float = 0.0
    dc_offset_q: float = 0.0
    cfo_norm: float = 0.0
    phase_noise_std: float = 0.0
    nonlin_coeff: float = 0.0
    snr_db: float = math.inf
    fir_taps: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "fir_taps", tuple((float(a), float(b)) for a, b in self.fir_taps))
        if self.phase_noise_std < 0:
            raise InvalidArgument("phase_noise_std must be >= 0")
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise InvalidArgument("snr_db must be a number or +inf (noise-free)")
        for f in fields(self):
            if f.name not in ("snr_db", "fir_taps") and not math.isfinite(getattr(self, f.name)):
                raise InvalidArgument(f"{f.name} must be finite")


def _default_ranges() -> dict[str, tuple[float, float]]:
    return {
        "gain_imbalance_db": (-0.5, 0.5),
        "phase_imbalance_deg": (-3.0, 3.0),
        "dc_offset_i": (-0.02, 0.02),
        "dc_offset_q": (-0.02, 0.02),
        "cfo_norm": (-0.005, 0.005),
        "phase_noise_std": (0.0, 0.01),
        "nonlin_coeff": (0.0, 0.05),
        "snr_db": (25.0, 25.0),
    }


PROFILE_FIELDS = tuple(f.name for f in fields(ImpairmentProfile) if f.name != "fir_taps")


@dataclass
class SimConfig:
    n_devices: int = 10
    frames_per_device: int = 19920
    raw_frame_len: int = 72
    ranges: dict[str, tuple[float, float]] = field(default_factory=_default_ranges)
    separation_scale: float = 1.0
    master_seed: int = 0
    max_nonlin: float = 0.2
    fir_taps: int = 16
    fir_ripple: float = 0.1

    def __post_init__(self):
        for name in ("n_devices", "frames_per_device", "raw_frame_len"):
            if getattr(self, name) <= 0:
                raise InvalidArgument(f"{name} must be positive")
        if self.separation_scale < 0:
            raise InvalidArgument("separation_scale must be >= 0")
        if self.fir_taps < 1 or self.fir_ripple < 0:
            raise InvalidArgument("fir_taps must be >= 1 and fir_ripple >= 0")
        merged = _default_ranges()
        for key, value in self.ranges.items():
            if key not in merged:
                raise InvalidArgument(f"unknown impairment range {key!r}")
            lo, hi = (float(v) for v in value)
            if lo > hi:
                raise InvalidArgument(f"range for {key} is not ordered: ({lo}, {hi})")
            merged[key] = (lo, hi)
        self.ranges = merged
        lo, hi = merged["nonlin_coeff"]
        if max(abs(lo), abs(hi)) > self.max_nonlin:
            raise InvalidArgument(f"|nonlin_coeff| range exceeds max_nonlin={self.max_nonlin}")
        if merged["phase_noise_std"][0] < 0:
            raise InvalidArgument("phase_noise_std range must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ranges"] = {k: list(v) for k, v in self.ranges.items()}
        return d


def reference_header(length: int = 72) -> np.ndarray:
    """Fixed pseudo-random QPSK preamble, shape ``(length, 2)``, unit symbol power."""
    if length <= 0:
        raise InvalidArgument("header length must be positive")
    bits = np.random.default_rng(PREAMBLE_SEED).integers(0, 2, size=(length, 2))
    return (1.0 - 2.0 * bits) / math.sqrt(2.0)


def sample_profile(config: SimConfig, device_index: int) -> ImpairmentProfile:
    """Draw a device's impairments from its own seeded stream.

    Each field is ``mid + separation_scale * u * half_width`` with ``u`` uniform
    on [-1, 1], clipped to the configured range; ``separation_scale=0`` puts
    every device on the range midpoint. The FIR has a unit leading tap and
    ``fir_taps - 1`` trailing taps drawn complex Gaussian with rms
    ``separation_scale * fir_ripple``.
    """
    if not 0 <= device_index < config.n_devices:
        raise InvalidArgument(f"device_index {device_index} outside [0, {config.n_devices})")
    rng = np.random.default_rng([config.master_seed, device_index, 0])
    values = {}
    for name in PROFILE_FIELDS:
        lo, hi = config.ranges[name]
        u = rng.uniform(-1.0, 1.0)
        if lo == hi:  # degenerate range, including (inf, inf) for noise-free
            values[name] = float(lo)
            continue
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        values[name] = float(np.clip(mid + config.separation_scale * u * half, lo, hi))
    spread = config.separation_scale * config.fir_ripple
    trailing = rng.standard_normal((config.fir_taps - 1, 2)) * spread / math.sqrt(2)
    if spread > 0:
        values["fir_taps"] = ((1.0, 0.0), *map(tuple, trailing))
    return ImpairmentProfile(**values)


def _noise_draws(frame_seed, length: int):
    rng = np.random.default_rng(frame_seed)
    phase_steps = rng.standard_normal(length)
    awgn = rng.standard_normal((length, 2))
    return phase_steps, awgn


def _impair(clean: np.ndarray, p: ImpairmentProfile, phase_steps, awgn) -> np.ndarray:
    # clean: (..., L, 2); phase_steps: (..., L); awgn: (..., L, 2)
    i, q = clean[..., 0], clean[..., 1]
    if p.fir_taps:
        s = i + 1j * q
        y = np.zeros_like(s)
        length = s.shape[-1]
        for k, (re, im) in enumerate(p.fir_taps[:length]):
            y[..., k:] += complex(re, im) * s[..., : length - k]
        i, q = y.real, y.imag
    g = 10.0 ** (p.gain_imbalance_db / 20.0)
    phi = math.radians(p.phase_imbalance_deg)
    s = g * i + 1j * (q * math.cos(phi) + i * math.sin(phi))
    s = s * (1.0 - p.nonlin_coeff * np.abs(s) ** 2)
    n = np.arange(clean.shape[-2])
    if p.cfo_norm:
        s = s * np.exp(1j * p.cfo_norm * n)
    if p.phase_noise_std:
        s = s * np.exp(1j * np.cumsum(p.phase_noise_std * phase_steps, axis=-1))
    s = s + complex(p.dc_offset_i, p.dc_offset_q)
    out = np.stack([s.real, s.imag], axis=-1)
    if math.isfinite(p.snr_db):
        power = np.mean(np.abs(s) ** 2, axis=-1, keepdims=True)[..., None]
        sigma = np.sqrt(power / 10.0 ** (p.snr_db / 10.0) / 2.0)
        out = out + sigma * awgn
    return out


def apply_impairments(clean, profile: ImpairmentProfile, frame_seed) -> np.ndarray:
    """Run one frame through the transmit chain.

    Order: transmit FIR (causal, zero initial state), IQ imbalance, cubic
    compression, CFO rotation, phase-noise random walk, DC offset, AWGN at
    ``snr_db`` relative to the frame's mean power.
    Only the phase noise and AWGN consume ``frame_seed``.
    """
    clean = np.asarray(clean, dtype=np.float64)
    if not np.all(np.isfinite(clean)):
        raise InvalidArgument("clean frame contains non-finite samples")
    phase_steps, awgn = _noise_draws(frame_seed, clean.shape[0])
    return _impair(clean, profile, phase_steps, awgn)


def frame_seed(config: SimConfig, device_index: int, frame_index: int) -> list[int]:
    return [config.master_seed, device_index, 1, frame_index]


def synthesize_device(config: SimConfig, device_index: int, role=Role.GENUINE,
                      device_id: int | None = None) -> DeviceCapture:
    profile = sample_profile(config, device_index)
    header = reference_header(config.raw_frame_len)
    n, length = config.frames_per_device, config.raw_frame_len
    phase_steps = np.empty((n, length))
    awgn = np.empty((n, length, 2))
    for k in range(n):
        phase_steps[k], awgn[k] = _noise_draws(frame_seed(config, device_index, k), length)
    frames = _impair(np.broadcast_to(header, (n, length, 2)), profile, phase_steps, awgn)
    return DeviceCapture(device_index + 1 if device_id is None else device_id, role, frames)


def synthesize_fleet(config: SimConfig) -> list[DeviceCapture]:
    """One capture per device; ids are ``1..n_devices`` and roles default to genuine.

    Callers reassign roles after synthesis.
    """
    return [synthesize_device(config, d) for d in range(config.n_devices)]
