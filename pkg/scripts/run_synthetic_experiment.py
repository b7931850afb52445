#!/usr/bin/env python3
"""Full synthetic pipeline: synth -> train -> score -> eval for one preset.

Example:
    python3 scripts/run_synthetic_experiment.py --preset easy --epochs 30 --workdir /tmp/sasv-easy
"""

import argparse
import sys
from pathlib import Path

from sasvfuse.cli import main as cli


def run(*argv):
    argv = [str(a) for a in argv]
    print(f"$ sasvfuse {' '.join(argv)}")
    code = cli(argv)
    if code != 0:
        sys.exit(code)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--preset", default="easy")
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--seed", type=int, default=17)
    parser.add_argument("--workdir", default="runs/synthetic")
    args = parser.parse_args()

    work = Path(args.workdir)
    data, model, scores = work / "data", work / "model", work / "scores"
    run("synth", "--preset", args.preset, "--out", data, "--seed", args.seed)
    run(
        "train",
        "--asv-embeddings", data / "asv.semb",
        "--cm-embeddings", data / "cm.semb",
        "--train-trials", data / "train.trl",
        "--dev-trials", data / "dev.trl",
        "--out", model,
        "--epochs", args.epochs,
        "--seed", args.seed,
    )
    run(
        "score",
        "--checkpoint", model / "model.smdl",
        "--asv-embeddings", data / "asv.semb",
        "--cm-embeddings", data / "cm.semb",
        "--trials", data / "dev.trl",
        "--out", scores,
        "--dump-branch",
    )
    run(
        "eval",
        "--scores", scores / "scores.tsv",
        "--trials", data / "dev.trl",
        "--det", work / "det.tsv",
    )
    print(f"\nartifacts in {work}/ (checkpoint, train_log.tsv, scores, det.tsv)")


if __name__ == "__main__":
    main()
