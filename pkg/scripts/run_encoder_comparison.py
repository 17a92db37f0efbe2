#!/usr/bin/env python3
"""Train the same text-classification definition once per sequence encoder.

Demonstrates declarative encoder swapping: the three runs differ only in the
encoder name. Prints a small table of test metrics at the end.

Usage:
    python scripts/make_synthetic_data.py -o data
    python scripts/run_encoder_comparison.py -d data/keyword_text.csv
"""

import argparse
from pathlib import Path

from ecdkit import experiment, parse_model_definition

TEMPLATE = """\
input_features:
  - name: text
    type: text
    encoder: {encoder}
output_features:
  - name: label
    type: category
training:
  epochs: {epochs}
  batch_size: 32
  learning_rate: 0.005
"""


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("-d", "--dataset", required=True)
    parser.add_argument("-o", "--output-dir", default="results/encoder_comparison")
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    results = {}
    for encoder in ("embed", "cnn", "rnn"):
        definition = parse_model_definition(TEMPLATE.format(encoder=encoder,
                                                            epochs=args.epochs))
        out = Path(args.output_dir) / encoder
        print(f"== encoder: {encoder} ==")
        _, _, metrics = experiment(definition, args.dataset, out, seed=args.seed,
                                   log=print)
        results[encoder] = metrics["test"]["label"]

    print(f"\n{'encoder':<8} {'test accuracy':>14} {'test loss':>10}")
    for encoder, block in results.items():
        print(f"{encoder:<8} {block['accuracy']:>14.4f} {block['loss']:>10.4f}")


if __name__ == "__main__":
    main()
