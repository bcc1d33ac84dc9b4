"""Desk-scale rogue detection across master seeds.

Trains the reference CNN on a 10-device fleet (2000 raw frames each), selects
(T, theta) on the validation split and reports rogue F1 and accepted-genuine
accuracy on the test split for each seed.

    python scripts/desk_detection_sweep.py --seeds 0 1 2 --fir-ripple 0.1
"""
import argparse
import json

import numpy as np

from rffguard import fingerprint_cnn as fcnn, iqdata, metrics, openset, radiosim
from rffguard.iqdata import Role

ROLES = {3: Role.ROGUE, 4: Role.ROGUE, 10: Role.VALIDATION_ONLY}


def run(seed, frames, fir_taps, fir_ripple, separation):
    sim = radiosim.SimConfig(frames_per_device=frames, master_seed=seed, fir_taps=fir_taps,
                             fir_ripple=fir_ripple, separation_scale=separation)
    fleet = radiosim.synthesize_fleet(sim)
    for cap in fleet:
        cap.role = ROLES.get(cap.device_id, Role.GENUINE)
    split = iqdata.split_dataset([iqdata.merge_frames(c, 10) for c in fleet], seed=seed)
    stats = iqdata.fit_standardizer(split.train.frames)
    split = iqdata.standardize_split(split, stats)
    trained = fcnn.train_cnn(fcnn.build_reference_cnn(7, 720, seed=seed), split, stats, seed=seed)
    _, cal = openset.select_temperature([trained], split.validation)
    z = fcnn.logits(trained, split.test)
    pred = openset.decide(fcnn.tempered_softmax(z, cal.temperature_star), cal.theta_star)
    rogue = split.test.is_rogue()
    labels = fcnn.class_labels(split.test, trained.class_ids)
    accepted = ~rogue & (pred != openset.ROGUE)
    pmax = fcnn.tempered_softmax(z, 1.0).max(1)
    return {
        "seed": seed,
        "train_acc": trained.history[-1]["accuracy"],
        "T": cal.temperature_star,
        "theta": cal.theta_star,
        "val_f1": cal.best_f1,
        "test_f1": metrics.binary_f1(metrics.binary_confusion(rogue, pred)),
        "accepted_acc": float(np.mean(pred[accepted] == labels[accepted])) if accepted.any() else None,
        "rogue_median_pmax": {int(d): float(np.median(pmax[split.test.device_ids == d])) for d in (3, 4)},
    }


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--frames", type=int, default=2000)
    p.add_argument("--fir-taps", type=int, default=16)
    p.add_argument("--fir-ripple", type=float, default=0.1)
    p.add_argument("--separation", type=float, default=1.0)
    args = p.parse_args()
    for seed in args.seeds:
        print(json.dumps(run(seed, args.frames, args.fir_taps, args.fir_ripple, args.separation)), flush=True)


if __name__ == "__main__":
    main()
