"""Run the full CLI pipeline on configs/desk.yaml and print the evaluation summary.

    python scripts/run_desk_pipeline.py --out run-desk
"""
import argparse
import json
import sys
from pathlib import Path

from rffguard import cli

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="run-desk")
    p.add_argument("--seed", type=int, default=None)
    args = p.parse_args()
    argv = ["pipeline", "--config", str(ROOT / "configs" / "desk.yaml"), "--out", args.out, "--force", "-v"]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    code = cli.main(argv)
    if code == 0:
        report = json.loads((Path(args.out) / "reports" / "run_report.json").read_text())
        print(json.dumps({"fd": report["fd"], "timing": report["timing"]}, indent=2))
    return code


if __name__ == "__main__":
    sys.exit(main())
