#!/usr/bin/env python3
"""Convert the 10,000 MNIST digits bundled with the `mnist` npm package to IDX.

The package stores one JSON file per digit class (src/digits/<d>.json) whose
"data" array concatenates 784 pixel values in [0, 1] per image. This writes

    <out>/digits-images-idx3-ubyte
    <out>/digits-labels-idx1-ubyte

in the standard big-endian IDX layout, pixels quantized as round(255 * v).

Usage:
    npm pack mnist                       # fetches mnist-<version>.tgz
    python3 tools/mnist_json_to_idx.py mnist-1.1.0.tgz data/mnist
"""

import argparse
import json
import pathlib
import struct
import tarfile

ROWS = COLS = 28


def read_digit_arrays(source: pathlib.Path):
    if source.is_dir():
        for digit in range(10):
            path = source / "src" / "digits" / f"{digit}.json"
            yield digit, json.loads(path.read_text())["data"]
        return
    with tarfile.open(source) as tar:
        for digit in range(10):
            member = tar.extractfile(f"package/src/digits/{digit}.json")
            yield digit, json.load(member)["data"]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("source", type=pathlib.Path, help="npm tarball or unpacked package dir")
    parser.add_argument("out", type=pathlib.Path, help="output directory")
    args = parser.parse_args()

    pixels = bytearray()
    labels = bytearray()
    for digit, data in read_digit_arrays(args.source):
        if len(data) % (ROWS * COLS) != 0:
            raise SystemExit(f"digit {digit}: {len(data)} values is not a multiple of 784")
        pixels.extend(min(255, max(0, round(v * 255))) for v in data)
        labels.extend([digit] * (len(data) // (ROWS * COLS)))

    count = len(labels)
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "digits-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, count, ROWS, COLS))
        f.write(pixels)
    with open(args.out / "digits-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, count))
        f.write(labels)
    print(f"wrote {count} images to {args.out}")


if __name__ == "__main__":
    main()
