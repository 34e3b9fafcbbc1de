#!/usr/bin/env python3
"""Rebuild data/mnist-10k from the digits bundled in the npm `mnist` package (v1.1.0).

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/mnist_npm_to_idx.py package/src/digits data/mnist-10k

The package stores pixels as fractions rounded to three decimals, which is
fine enough to recover the original bytes exactly (round(v * 255)).
Samples are interleaved with a fixed permutation so every prefix is
class-balanced.
"""
import gzip
import json
import struct
import sys
from pathlib import Path

import numpy as np

src, dest = Path(sys.argv[1]), Path(sys.argv[2])
images, labels = [], []
for digit in range(10):
    data = json.loads((src / f"{digit}.json").read_text())["data"]
    frac = np.asarray(data, dtype=np.float64).reshape(-1, 784)
    raw = np.rint(frac * 255.0)
    assert np.abs(frac * 255.0 - raw).max() < 0.3
    images.append(raw.astype(np.uint8))
    labels.extend([digit] * len(frac))
x = np.concatenate(images)
y = np.asarray(labels, dtype=np.uint8)
perm = np.random.RandomState(20240101).permutation(len(y))
x, y = x[perm], y[perm]

dest.mkdir(parents=True, exist_ok=True)
with gzip.GzipFile(dest / "train-images-idx3-ubyte.gz", "wb", mtime=0) as f:
    f.write(struct.pack(">IIII", 0x803, len(y), 28, 28) + x.tobytes())
with gzip.GzipFile(dest / "train-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
    f.write(struct.pack(">II", 0x801, len(y)) + y.tobytes())
print(len(y), np.bincount(y))
