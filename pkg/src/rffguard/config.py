"""Run configuration: a YAML document with one section per pipeline stage.

Section seeds left as ``null`` are derived from the top-level ``seed`` so a
single number pins every random stream of a run.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .fingerprint_cnn import REFERENCE_HYPERPARAMS, CnnHyperparams
from .ganforge import GanConfig
from .openset import DEFAULT_TEMPERATURES
from .radiosim import SimConfig

DEFAULTS: dict = {
    "seed": 0,
    "simulator": {
        "n_devices": 10,
        "frames_per_device": 19920,
        "raw_frame_len": 72,
        "separation_scale": 1.0,
        "fir_taps": 16,
        "fir_ripple": 0.1,
        "ranges": {},
        "seed": None,
    },
    "roles": {"genuine": [1, 2, 5, 6, 7, 8, 9], "rogue": [3, 4], "validation_only": 10},
    "data": {"merge_group": 10, "train_ratio": 0.7, "val_ratio": 0.1, "split_seed": None},
    "cnn": {"source": "train", "preset": "reference", "hyperparams": {}, "seed": None},
    "tune": {"trials": 20, "keep_top": 5, "seed": None},
    "calibration": {"temperatures": list(DEFAULT_TEMPERATURES), "n_candidates": 100},
    "gan": {
        "noise_dim": 100, "lr": 0.001, "beta1": 0.5, "epochs": 300, "batch_size": 64, "seed": None,
        "n_synthetic": 1000, "fd_every": 0, "fd_samples": None,
        "gen_widths": [2048, 4096], "disc_filters": [64, 128], "disc_kernels": [7, 5],
        "disc_dense": 128,
    },
    "evaluation": {"constellation_points": 1000, "svg": True},
    "paths": {"data_dir": "run/data", "checkpoint_dir": "run/checkpoints", "report_dir": "run/reports"},
}

# sections each stage consumes, cumulatively; an artifact records the hash of
# its stage's sections and later stages refuse to use it on mismatch
STAGE_SECTIONS = {
    "gen-data": ("seed", "simulator", "roles"),
    "train": ("seed", "simulator", "roles", "data", "cnn"),
    "tune": ("seed", "simulator", "roles", "data", "cnn", "tune"),
    "calibrate": ("seed", "simulator", "roles", "data", "cnn", "tune", "calibration"),
    "attack": ("seed", "simulator", "roles", "data", "gan"),
}

SEED_OFFSETS = {"simulator": 0, "split": 1, "cnn": 2, "tune": 3, "gan": 4, "evaluation": 5}


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict) and key not in ("ranges", "hyperparams"):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where}{key!r} must be a mapping")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def section_hash(raw: dict, sections) -> str:
    payload = {k: raw[k] for k in sections}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class RunConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def from_dict(cls, d: dict | None, seed: int | None = None, out: str | None = None) -> "RunConfig":
        raw = _merge(DEFAULTS, d or {})
        if seed is not None:
            raw["seed"] = int(seed)
        if out is not None:
            root = Path(out)
            raw["paths"] = {
                "data_dir": str(root / "data"),
                "checkpoint_dir": str(root / "checkpoints"),
                "report_dir": str(root / "reports"),
            }
        cfg = cls(raw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, seed: int | None = None, out: str | None = None) -> "RunConfig":
        try:
            doc = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path} must be a mapping at top level")
        return cls.from_dict(doc, seed, out)

    # -- derived views ------------------------------------------------------

    def seed_for(self, section: str) -> int:
        explicit = {
            "simulator": self.raw["simulator"]["seed"],
            "split": self.raw["data"]["split_seed"],
            "cnn": self.raw["cnn"]["seed"],
            "tune": self.raw["tune"]["seed"],
            "gan": self.raw["gan"]["seed"],
        }.get(section)
        if explicit is not None:
            return int(explicit)
        return int(self.raw["seed"]) * 1000 + SEED_OFFSETS[section]

    def seed_ledger(self) -> dict[str, int]:
        return {name: self.seed_for(name) for name in SEED_OFFSETS}

    @property
    def full_hash(self) -> str:
        return section_hash(self.raw, sorted(k for k in self.raw if k != "paths"))

    def stage_hash(self, stage: str) -> str:
        return section_hash(self.raw, STAGE_SECTIONS[stage])

    def sim_config(self) -> SimConfig:
        s = self.raw["simulator"]
        return SimConfig(
            n_devices=s["n_devices"], frames_per_device=s["frames_per_device"],
            raw_frame_len=s["raw_frame_len"], separation_scale=s["separation_scale"],
            fir_taps=s["fir_taps"], fir_ripple=s["fir_ripple"],
            ranges={k: tuple(v) for k, v in s["ranges"].items()},
            master_seed=self.seed_for("simulator"),
        )

    @property
    def roles(self) -> dict:
        r = self.raw["roles"]
        return {"genuine": list(r["genuine"]), "rogue": list(r["rogue"]),
                "validation_only": int(r["validation_only"])}

    def cnn_hyperparams(self) -> CnnHyperparams:
        c = self.raw["cnn"]
        if c["preset"] == "reference":
            base = REFERENCE_HYPERPARAMS.to_dict()
        elif c["preset"] == "custom":
            base = {}
        else:
            raise ConfigError(f"unknown cnn preset {c['preset']!r}")
        return CnnHyperparams.from_dict({**base, **c["hyperparams"]})

    def gan_config(self) -> GanConfig:
        g = self.raw["gan"]
        return GanConfig(noise_dim=g["noise_dim"], lr=g["lr"], beta1=g["beta1"], epochs=g["epochs"],
                         batch_size=g["batch_size"], seed=self.seed_for("gan"), fd_every=g["fd_every"],
                         gen_widths=tuple(g["gen_widths"]), disc_filters=tuple(g["disc_filters"]),
                         disc_kernels=tuple(g["disc_kernels"]), disc_dense=g["disc_dense"])

    def path(self, key: str) -> Path:
        return Path(self.raw["paths"][key])

    def validate(self) -> None:
        r = self.raw["roles"]
        try:
            genuine, rogue, val = set(r["genuine"]), set(r["rogue"]), {int(r["validation_only"])}
        except (TypeError, ValueError):
            raise ConfigError("roles.validation_only must be a single device id") from None
        if genuine & rogue or genuine & val or rogue & val:
            raise ConfigError("role sets must be disjoint")
        n = self.raw["simulator"]["n_devices"]
        if genuine | rogue | val != set(range(1, n + 1)):
            raise ConfigError(f"roles must cover device ids 1..{n} exactly")
        if len(genuine) < 2:
            raise ConfigError("need at least two genuine devices")
        if not rogue:
            raise ConfigError("need at least one rogue device")
        if self.raw["cnn"]["source"] not in ("train", "tune"):
            raise ConfigError("cnn.source must be 'train' or 'tune'")
        try:
            self.sim_config()
            self.cnn_hyperparams()
            self.gan_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config value: {exc}") from None

    def dump(self) -> str:
        return yaml.safe_dump(self.raw, sort_keys=False)
