#!/usr/bin/env python3
"""Build the bundled MNIST fixture (IDX, gzip) from the `mnist` npm package.

The npm package (MIT, https://github.com/cazala/mnist) ships 10,000 MNIST
digits as per-class JSON arrays of intensities rounded to 3 decimals.
Multiplying by 255 and rounding recovers the original 8-bit pixels exactly.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/make_mnist_fixture.py package/src/digits data/mnist
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def main(src: Path, dst: Path) -> None:
    samples = []
    for label in range(10):
        flat = json.loads((src / f"{label}.json").read_text())["data"]
        assert len(flat) % 784 == 0
        for k in range(len(flat) // 784):
            pix = bytes(round(v * 255) for v in flat[784 * k : 784 * (k + 1)])
            samples.append((pix, label))
    # interleave classes so any prefix is class-balanced
    random.Random(20210915).shuffle(samples)
    n = len(samples)
    dst.mkdir(parents=True, exist_ok=True)
    images = struct.pack(">IIII", 0x00000803, n, 28, 28) + b"".join(p for p, _ in samples)
    labels = struct.pack(">II", 0x00000801, n) + bytes(l for _, l in samples)
    with gzip.GzipFile(dst / "digits-10k-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(images)
    with gzip.GzipFile(dst / "digits-10k-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(labels)
    print(f"wrote {n} digits to {dst}")


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
