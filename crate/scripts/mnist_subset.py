#!/usr/bin/env python3
"""Build IDX fixture files from the 10,000 MNIST digits shipped in the npm
`mnist` package (cazala/mnist, v1.1.0).

The package stores each digit class as a JSON array of pixel intensities
rounded to three decimals; round(v * 255) recovers the original bytes exactly.
The samples are shuffled with a fixed seed and split into a training and a
test part.

    npm pack mnist && tar xzf mnist-1.1.0.tgz
    python3 scripts/mnist_subset.py package/src/digits data/mnist-subset
"""

import json
import random
import struct
import sys
from pathlib import Path

SEED = 20161016
TRAIN = 8000


def load(digits_dir):
    samples = []
    for d in range(10):
        values = json.loads((digits_dir / f"{d}.json").read_text())["data"]
        assert len(values) % 784 == 0
        for i in range(0, len(values), 784):
            pixels = bytes(int(round(v * 255)) for v in values[i:i + 784])
            samples.append((pixels, d))
    return samples


def write(out_dir, stem, samples):
    with open(out_dir / f"{stem}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(samples), 28, 28))
        for pixels, _ in samples:
            f.write(pixels)
    with open(out_dir / f"{stem}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 2049, len(samples)))
        f.write(bytes(label for _, label in samples))


def main():
    digits_dir, out_dir = Path(sys.argv[1]), Path(sys.argv[2])
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = load(digits_dir)
    random.Random(SEED).shuffle(samples)
    write(out_dir, "train", samples[:TRAIN])
    write(out_dir, "t10k", samples[TRAIN:])
    print(f"{TRAIN} training and {len(samples) - TRAIN} test samples in {out_dir}")


if __name__ == "__main__":
    main()
