#!/usr/bin/env python3
"""Fetch a 5,000-image MNIST subset (500 per digit) and write it as IDX files.

The subset ships inside the `mlxtend` wheel, so only a PyPI mirror is needed.
Output: <out>/images-idx3-ubyte and <out>/labels-idx1-ubyte (28x28, uint8).
"""
import argparse
import gzip
import pathlib
import struct
import subprocess
import sys
import tempfile
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def fetch_csv() -> str:
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp, "mlxtend"],
            check=True,
        )
        wheel = next(pathlib.Path(tmp).glob("mlxtend-*.whl"))
        with zipfile.ZipFile(wheel) as z:
            return gzip.decompress(z.read(MEMBER)).decode()


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="data/mnist5k")
    args = parser.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    pixels = bytearray()
    labels = bytearray()
    rows = fetch_csv().splitlines()
    for row in rows:
        fields = row.split(",")
        pixels.extend(int(float(v)) for v in fields[:784])
        labels.append(int(fields[784]))

    n = len(rows)
    (out / "images-idx3-ubyte").write_bytes(struct.pack(">IIII", 0x803, n, 28, 28) + bytes(pixels))
    (out / "labels-idx1-ubyte").write_bytes(struct.pack(">II", 0x801, n) + bytes(labels))
    print(f"wrote {n} samples to {out}")


if __name__ == "__main__":
    main()
