#!/usr/bin/env python3
"""Generate the synthetic CSV datasets used by the example experiments.

Writes three files into the output directory:
  keyword_text.csv   text classification; the label marks keyword presence
  token_tags.csv     sequence tagging; each token's tag is a fixed function
  quadrant.csv       multi-task data; same_sign is an exact function of quadrant
"""

import argparse
import csv
from pathlib import Path

import numpy as np

FILLER = ["alpha", "brave", "cedar", "delta", "ember", "frost", "grove", "heron"]
TAG_RULE = {"red": "color", "green": "color", "blue": "color",
            "dog": "animal", "cat": "animal", "owl": "animal"}


def write(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {path}")


def keyword_text(rng, n, keyword="quartz"):
    rows = []
    for i in range(n):
        length = int(rng.integers(4, 9))
        words = [FILLER[int(rng.integers(len(FILLER)))] for _ in range(length)]
        if i % 2 == 0:
            words[int(rng.integers(length))] = keyword
        rows.append([" ".join(words), "hit" if i % 2 == 0 else "miss"])
    return rows


def token_tags(rng, n):
    vocab = list(TAG_RULE)
    rows = []
    for _ in range(n):
        length = int(rng.integers(3, 8))
        tokens = [vocab[int(rng.integers(len(vocab)))] for _ in range(length)]
        rows.append([" ".join(tokens), " ".join(TAG_RULE[t] for t in tokens)])
    return rows


def quadrant(rng, n):
    rows = []
    while len(rows) < n:
        x1, x2 = (float(v) for v in rng.uniform(-1, 1, size=2))
        if abs(x1) < 0.1 or abs(x2) < 0.1:
            continue
        rows.append([repr(x1), repr(x2),
                     f"q{int(x1 < 0) * 2 + int(x2 < 0)}",
                     "true" if (x1 > 0) == (x2 > 0) else "false"])
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("-o", "--output-dir", default="data")
    parser.add_argument("-n", "--rows", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    write(out / "keyword_text.csv", ["text", "label"], keyword_text(rng, args.rows))
    write(out / "token_tags.csv", ["tokens", "tags"], token_tags(rng, args.rows))
    write(out / "quadrant.csv", ["x1", "x2", "quadrant", "same_sign"], quadrant(rng, args.rows))


if __name__ == "__main__":
    main()
