"""Track Fréchet distance while training the GAN on the desk-scale genuine split.

    python scripts/gan_progress.py --epochs 300 --every 50 --csv gan_fd.csv
"""
import argparse
import csv
import warnings

from rffguard import ganforge, iqdata, metrics, radiosim
from rffguard.iqdata import Role

ROLES = {3: Role.ROGUE, 4: Role.ROGUE, 10: Role.VALIDATION_ONLY}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=2000)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--every", type=int, default=50)
    p.add_argument("--csv", default=None)
    args = p.parse_args()

    fleet = radiosim.synthesize_fleet(radiosim.SimConfig(frames_per_device=args.frames, master_seed=args.seed))
    for cap in fleet:
        cap.role = ROLES.get(cap.device_id, Role.GENUINE)
    split = iqdata.split_dataset([iqdata.merge_frames(c, 10) for c in fleet], seed=args.seed)
    real = iqdata.apply_standardizer(split.train.frames, iqdata.fit_standardizer(split.train.frames))
    real_summary = metrics.summarize_gaussian(real)

    def monitor(pair):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fake = ganforge.sample_frames(pair.generator, len(real), args.seed + 1)
            return metrics.frechet_distance(real_summary, metrics.summarize_gaussian(fake))

    cfg = ganforge.GanConfig(epochs=args.epochs, batch_size=args.batch, seed=args.seed, fd_every=args.every)
    pair = ganforge.train_gan(real, cfg, monitor)
    rows = [h for h in pair.history if h["fd"] == h["fd"]]
    for h in rows:
        print(f"epoch {h['epoch']:5d}  fd {h['fd']:10.2f}")
    print(f"ratio trained/untrained = {rows[-1]['fd'] / rows[0]['fd']:.3f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["epoch", "d_loss", "g_loss", "fd"])
            w.writeheader()
            w.writerows(pair.history)


if __name__ == "__main__":
    main()
