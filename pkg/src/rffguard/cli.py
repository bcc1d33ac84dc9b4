"""Command-line pipeline: gen-data, train, tune, calibrate, attack, evaluate, pipeline.

Exit codes: 0 success, 2 config error, 3 missing prerequisite stage, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import fingerprint_cnn as fcnn
from . import ganforge, iqdata, metrics, openset, radiosim
from .config import RunConfig
from .errors import ConfigError, FormatError, InvalidArgument, MissingStage, NumericalError
from .iqdata import DeviceCapture, Role

log = logging.getLogger("rffguard")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERICAL = 0, 2, 3, 4

MANIFEST = "manifest.json"
TEST_MANIFEST = "test_manifest.json"
SYNTHETIC_FILE = "synthetic.iqcap"
CNN_CKPT = "cnn.ckpt"
CALIBRATED_CKPT = "cnn_calibrated.ckpt"
GEN_CKPT, DISC_CKPT = "gan_generator.ckpt", "gan_discriminator.ckpt"


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def read_json(path, stage_hint: str) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingStage(f"{path} not found; run `rffguard {stage_hint}` first")
    return json.loads(path.read_text())


def _prepare_dir(path: Path, force: bool, what: str) -> None:
    if path.exists() and any(path.iterdir()):
        if not force:
            raise ConfigError(f"{what} directory {path} is not empty; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)


def _check_hash(recorded: str, cfg: RunConfig, stage: str, artifact) -> None:
    expected = cfg.stage_hash(stage)
    if recorded != expected:
        raise ConfigError(
            f"{artifact} was produced by a different {stage} configuration "
            f"(hash {recorded} != {expected}); rerun `rffguard {stage} --force`"
        )


# -- shared data plumbing ------------------------------------------------------

def load_fleet(cfg: RunConfig) -> list[DeviceCapture]:
    data_dir = cfg.path("data_dir")
    manifest = read_json(data_dir / MANIFEST, "gen-data")
    _check_hash(manifest["config_hash"], cfg, "gen-data", data_dir / MANIFEST)
    captures = []
    for entry in manifest["files"]:
        path = data_dir / entry["file"]
        if not path.exists():
            raise MissingStage(f"{path} listed in the manifest is missing; rerun `rffguard gen-data`")
        captures.append(iqdata.load_capture(path))
    return captures


def prepare_split(cfg: RunConfig):
    """Merged, split and standardized data plus the training-set stats."""
    d = cfg.raw["data"]
    merged = [iqdata.merge_frames(c, d["merge_group"]) for c in load_fleet(cfg)]
    split = iqdata.split_dataset(merged, (d["train_ratio"], d["val_ratio"]), cfg.seed_for("split"))
    stats = iqdata.fit_standardizer(split.train.frames)
    return iqdata.standardize_split(split, stats), stats


def assemble_test(cfg: RunConfig, split: iqdata.DatasetSplit) -> tuple[iqdata.SplitPart, dict]:
    """The standardized test part, extended with synthetic frames when the attack stage ran."""
    test = split.test
    manifest_path = cfg.path("data_dir") / TEST_MANIFEST
    info = {"genuine": int(np.sum(test.roles == Role.GENUINE)),
            "rogue_real": int(np.sum(test.roles == Role.ROGUE)), "synthetic": 0}
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        _check_hash(manifest["config_hash"], cfg, "attack", manifest_path)
        synth = iqdata.load_capture(cfg.path("data_dir") / manifest["synthetic_file"])
        n = synth.n_frames
        part = iqdata.SplitPart(
            synth.frames, np.full(n, synth.device_id, np.int64),
            np.full(n, int(Role.SYNTHETIC), np.int64), np.arange(n, dtype=np.int64),
            standardized=True,
        )
        test = test.concat(part)
        info["synthetic"] = n
    info["total"] = len(test)
    return test, info


# -- stages ----------------------------------------------------------------------

def cmd_gen_data(cfg: RunConfig, force: bool = False) -> dict:
    data_dir = cfg.path("data_dir")
    _prepare_dir(data_dir, force, "data")
    for stale in (TEST_MANIFEST, SYNTHETIC_FILE):
        (data_dir / stale).unlink(missing_ok=True)
    sim = cfg.sim_config()
    roles = cfg.roles
    role_of = {d: Role.GENUINE for d in roles["genuine"]}
    role_of.update({d: Role.ROGUE for d in roles["rogue"]})
    role_of[roles["validation_only"]] = Role.VALIDATION_ONLY
    files = []
    for index in range(sim.n_devices):
        device_id = index + 1
        capture = radiosim.synthesize_device(sim, index, role_of[device_id], device_id)
        name = f"device_{device_id:02d}.iqcap"
        iqdata.save_capture(capture, data_dir / name)
        files.append({
            "file": name, "device_id": device_id, "role": capture.role.name.lower(),
            "n_frames": capture.n_frames, "frame_len": capture.frame_len,
            "sha256": sha256_file(data_dir / name),
        })
        log.info("wrote %s (%d frames)", name, capture.n_frames)
    manifest = {"config_hash": cfg.stage_hash("gen-data"), "files": files}
    write_json(data_dir / MANIFEST, manifest)
    return manifest


def _write_history(path, rows, columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(row[c])) if isinstance(row[c], float) else row[c] for c in columns])


def _ckpt_meta(cfg: RunConfig, stage: str) -> dict:
    return {"stage_hash": cfg.stage_hash(stage)}


def cmd_train(cfg: RunConfig, force: bool = False) -> dict:
    split, stats = prepare_split(cfg)
    ckpt_dir = cfg.path("checkpoint_dir")
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    if (ckpt_dir / CNN_CKPT).exists() and not force:
        raise ConfigError(f"{ckpt_dir / CNN_CKPT} exists; pass --force to retrain")
    hp = cfg.cnn_hyperparams()
    seed = cfg.seed_for("cnn")
    model = fcnn.build_cnn(hp, len(split.genuine_ids), split.train.frames.shape[1], seed=seed)
    trained = fcnn.train_cnn(model, split, stats, hp.lr, hp.epochs, hp.batch_size, seed, hp)
    trained.meta = _ckpt_meta(cfg, "train")
    digest = fcnn.save_trained(ckpt_dir / CNN_CKPT, trained)
    _write_history(ckpt_dir / "cnn_history.csv", trained.history, ["epoch", "loss", "accuracy"])
    return {"checkpoint": CNN_CKPT, "sha256": digest, "history": trained.history,
            "split_counts": split.counts}


def cmd_tune(cfg: RunConfig, force: bool = False, trials: int | None = None) -> dict:
    split, stats = prepare_split(cfg)
    t = cfg.raw["tune"]
    n_trials = trials if trials is not None else t["trials"]
    tune_dir = cfg.path("checkpoint_dir") / "tune"
    _prepare_dir(tune_dir, force, "tune checkpoint")
    for old in tune_dir.glob("*.ckpt"):
        old.unlink()
    ranked = fcnn.random_search(fcnn.SearchSpace(), n_trials, split, stats,
                                seed=cfg.seed_for("tune"), keep_top=t["keep_top"])
    records = []
    for rank, trial in enumerate(ranked):
        rec = {"rank": rank, **trial.record()}
        if trial.trained is not None:
            name = f"rank{rank}_trial{trial.index:02d}.ckpt"
            trial.trained.meta = _ckpt_meta(cfg, "tune")
            rec["checkpoint"] = name
            rec["sha256"] = fcnn.save_trained(tune_dir / name, trial.trained)
        records.append(rec)
    report = {"config_hash": cfg.stage_hash("tune"), "n_trials": n_trials, "trials": records}
    report_dir = cfg.path("report_dir")
    report_dir.mkdir(parents=True, exist_ok=True)
    write_json(report_dir / "tune_report.json", report)
    return report


def _candidate_models(cfg: RunConfig) -> list[fcnn.TrainedCnn]:
    ckpt_dir = cfg.path("checkpoint_dir")
    if cfg.raw["cnn"]["source"] == "tune":
        report = read_json(cfg.path("report_dir") / "tune_report.json", "tune")
        _check_hash(report["config_hash"], cfg, "tune", "tune_report.json")
        paths = [ckpt_dir / "tune" / r["checkpoint"] for r in report["trials"] if "checkpoint" in r]
        if not paths:
            raise MissingStage("tuning kept no checkpoints; rerun `rffguard tune`")
        return [fcnn.load_trained(p) for p in paths]
    path = ckpt_dir / CNN_CKPT
    if not path.exists():
        raise MissingStage(f"{path} not found; run `rffguard train` first")
    trained = fcnn.load_trained(path)
    _check_hash(trained.meta.get("stage_hash"), cfg, "train", path)
    return [trained]


def cmd_calibrate(cfg: RunConfig, force: bool = False) -> dict:
    split, _ = prepare_split(cfg)
    c = cfg.raw["calibration"]
    models = _candidate_models(cfg)
    chosen, result = openset.select_temperature(models, split.validation, c["temperatures"],
                                                c["n_candidates"])
    chosen.temperature = result.temperature_star
    chosen.threshold = result.theta_star
    chosen.meta = {**chosen.meta, **_ckpt_meta(cfg, "calibrate")}
    digest = fcnn.save_trained(cfg.path("checkpoint_dir") / CALIBRATED_CKPT, chosen)

    report_dir = cfg.path("report_dir")
    report_dir.mkdir(parents=True, exist_ok=True)
    pmax = openset.max_prob(fcnn.tempered_softmax(fcnn.logits(chosen, split.validation),
                                                  result.temperature_star))
    metrics.export_pmax_histogram(pmax, split.validation.is_rogue(), result.theta_star,
                                  report_dir / "pmax_histogram.csv", svg=cfg.raw["evaluation"]["svg"])
    report = {"config_hash": cfg.stage_hash("calibrate"), "checkpoint": CALIBRATED_CKPT,
              "sha256": digest, **result.to_dict()}
    write_json(report_dir / "calibration.json", report)
    return report


def _fd_sample_count(cfg: RunConfig, n_train: int) -> int:
    n = cfg.raw["gan"]["fd_samples"]
    return n_train if n is None else min(int(n), n_train)


def cmd_attack(cfg: RunConfig, force: bool = False) -> dict:
    split, stats = prepare_split(cfg)
    gcfg = cfg.gan_config()
    real = split.train.frames
    n_fd = _fd_sample_count(cfg, len(real))
    real_summary = metrics.summarize_gaussian(real[:n_fd])
    fd_seed = cfg.seed_for("evaluation")

    def fd_monitor(pair):
        fake = ganforge.sample_frames(pair.generator, n_fd, fd_seed)
        return metrics.frechet_distance(real_summary, metrics.summarize_gaussian(fake))

    pair = ganforge.train_gan(real, gcfg, fd_monitor)
    fd_untrained = pair.history[0]["fd"]
    fd_trained = pair.history[-1]["fd"]
    if not (math.isfinite(fd_untrained) and math.isfinite(fd_trained)):
        raise NumericalError("Fréchet distance is not finite")

    n_syn = int(cfg.raw["gan"]["n_synthetic"])
    synthetic = ganforge.generate_samples(pair, n_syn, cfg.seed_for("gan") + 1)
    data_dir, ckpt_dir = cfg.path("data_dir"), cfg.path("checkpoint_dir")
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    if (data_dir / TEST_MANIFEST).exists() and not force:
        raise ConfigError(f"{data_dir / TEST_MANIFEST} exists; pass --force to rerun the attack")
    iqdata.save_capture(synthetic, data_dir / SYNTHETIC_FILE)
    gen_hash, disc_hash = ganforge.save_pair(ckpt_dir / GEN_CKPT, ckpt_dir / DISC_CKPT, pair,
                                             _ckpt_meta(cfg, "attack"))
    write_json(data_dir / TEST_MANIFEST, {
        "config_hash": cfg.stage_hash("attack"),
        "space": "standardized",
        "synthetic_file": SYNTHETIC_FILE,
        "synthetic_sha256": sha256_file(data_dir / SYNTHETIC_FILE),
        "n_synthetic": n_syn,
        "real_test_frames": len(split.test),
    })

    report_dir = cfg.path("report_dir")
    report_dir.mkdir(parents=True, exist_ok=True)
    _write_history(report_dir / "gan_history.csv", pair.history, ["epoch", "d_loss", "g_loss", "fd"])
    fake = iqdata.invert_standardizer(synthetic.frames, stats) if n_syn else synthetic.frames
    gen_frames = synthetic.frames.reshape(-1, 2).astype(np.float64)
    report = {
        "config_hash": cfg.stage_hash("attack"),
        "fd_untrained": fd_untrained,
        "fd_trained": fd_trained,
        "fd_samples": n_fd,
        "fd_rank_deficient": n_fd <= 2 * real.shape[1],
        "generated_channel_mean": gen_frames.mean(axis=0).tolist() if n_syn else None,
        "generated_channel_std": gen_frames.std(axis=0).tolist() if n_syn else None,
        "generator_sha256": gen_hash,
        "discriminator_sha256": disc_hash,
        "n_synthetic": n_syn,
    }
    write_json(report_dir / "attack.json", report)
    if n_syn:
        real_raw = iqdata.invert_standardizer(real, stats)
        metrics.export_constellation(real_raw, fake, report_dir / "constellation.csv",
                                     cfg.raw["evaluation"]["constellation_points"], fd_seed,
                                     svg=cfg.raw["evaluation"]["svg"])
    return report


def cmd_evaluate(cfg: RunConfig, force: bool = False) -> dict:
    path = cfg.path("checkpoint_dir") / CALIBRATED_CKPT
    if not path.exists():
        raise MissingStage(f"{path} not found; run `rffguard calibrate` first")
    trained = fcnn.load_trained(path)
    if not trained.calibrated:
        raise MissingStage(f"{path} carries no calibration; run `rffguard calibrate` first")
    _check_hash(trained.meta.get("stage_hash"), cfg, "calibrate", path)
    split, _ = prepare_split(cfg)
    test, counts = assemble_test(cfg, split)

    z = fcnn.logits(trained, test)
    p = fcnn.tempered_softmax(z, trained.temperature)
    predicted = openset.decide(p, trained.threshold)
    true_labels = fcnn.class_labels(test, trained.class_ids)
    is_rogue = test.is_rogue()
    true_labels[is_rogue] = openset.ROGUE
    binary = metrics.binary_confusion(is_rogue, predicted)
    overall = metrics.overall_confusion(true_labels, predicted,
                                        [f"device {d}" for d in trained.class_ids])
    if not binary.total == overall.total == counts["total"]:
        raise NumericalError("confusion matrix totals do not reconcile with the test manifest")

    accepted = (~is_rogue) & (predicted != openset.ROGUE)
    report_dir = cfg.path("report_dir")
    report_dir.mkdir(parents=True, exist_ok=True)
    binary.write_csv(report_dir / "confusion_binary.csv")
    overall.write_csv(report_dir / "confusion_overall.csv")
    norm = binary.normalized
    synth = test.roles == Role.SYNTHETIC
    attack = {}
    attack_path = report_dir / "attack.json"
    if counts["synthetic"] and attack_path.exists():
        a = json.loads(attack_path.read_text())
        attack = {k: a[k] for k in ("fd_untrained", "fd_trained", "fd_samples", "fd_rank_deficient")}
    return {
        "config_hash": cfg.full_hash,
        "split_counts": split.counts,
        "test_counts": counts,
        "calibration": {"temperature": trained.temperature, "threshold": trained.threshold},
        "binary_confusion": binary.to_dict(),
        "overall_confusion": overall.to_dict(),
        "summary": {
            "rogue_f1": metrics.binary_f1(binary),
            "genuine_acceptance": float(norm[0, 0]),
            "rogue_detection": float(norm[1, 1]),
            "synthetic_detection": float(np.mean(predicted[synth] == openset.ROGUE)) if synth.any() else None,
            "genuine_classification_accuracy": (
                float(np.mean(predicted[accepted] == true_labels[accepted])) if accepted.any() else None
            ),
        },
        "fd": attack,
        "checkpoint_sha256": sha256_file(path),
        "seeds": cfg.seed_ledger(),
    }


STAGES = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "tune": cmd_tune,
    "calibrate": cmd_calibrate,
    "attack": cmd_attack,
    "evaluate": cmd_evaluate,
}


def write_run_report(cfg: RunConfig, body: dict, timing: dict) -> Path:
    path = cfg.path("report_dir") / "run_report.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_json(path, {**body, "timing": timing})
    return path


def run_stage(name: str, cfg: RunConfig, force: bool, **kwargs) -> tuple[dict, float]:
    t0 = time.perf_counter()
    out = STAGES[name](cfg, force, **kwargs)
    return out, time.perf_counter() - t0


def cmd_pipeline(cfg: RunConfig, force: bool = False) -> dict:
    order = ["gen-data", "tune" if cfg.raw["cnn"]["source"] == "tune" else "train",
             "calibrate", "attack", "evaluate"]
    timing = {}
    body = {}
    for name in order:
        log.info("== %s", name)
        body, timing[name] = run_stage(name, cfg, force)
    write_run_report(cfg, body, timing)
    return body


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rffguard", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--force", action="store_true", help="overwrite existing stage outputs")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out", help="root directory for data/, checkpoints/ and reports/")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in [*STAGES, "pipeline"]:
        p = sub.add_parser(name, parents=[common])
        if name == "tune":
            p.add_argument("--trials", type=int, help="number of random-search trials")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = (RunConfig.load(args.config, args.seed, args.out) if args.config
               else RunConfig.from_dict({}, args.seed, args.out))
        if args.command == "pipeline":
            body = cmd_pipeline(cfg, args.force)
        else:
            kwargs = {"trials": args.trials} if args.command == "tune" else {}
            body, elapsed = run_stage(args.command, cfg, args.force, **kwargs)
            if args.command == "evaluate":
                write_run_report(cfg, body, {"evaluate": elapsed})
        print(json.dumps(body.get("summary", {k: v for k, v in body.items()
                                              if not isinstance(v, (list, dict))}),
                         indent=2, default=_jsonable))
    except (ConfigError, InvalidArgument, FormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingStage as exc:
        print(f"missing prerequisite: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
