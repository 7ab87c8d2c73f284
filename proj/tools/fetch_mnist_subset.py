#!/usr/bin/env python3
"""Write an IDX3 image file from the 5000-digit MNIST subset bundled with mlxtend.

Usage: fetch_mnist_subset.py [OUT_PATH]

The full MNIST archive is not always reachable; the mlxtend wheel carries a
5000-sample subset of the training images as CSV. This script pulls the wheel
through pip, decodes the CSV and emits the standard big-endian IDX layout
(magic 0x00000803, count, 28, 28, then uint8 pixels).
"""
import gzip
import io
import pathlib
import struct
import subprocess
import sys
import tempfile
import zipfile


def main() -> int:
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "data/mnist-5k-images-idx3-ubyte")
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps",
                        "mlxtend==0.24.0", "-d", tmp, "-q"], check=True)
        wheel = next(pathlib.Path(tmp).glob("mlxtend-*.whl"))
        with zipfile.ZipFile(wheel) as zf:
            raw = zf.read("mlxtend/data/data/mnist_5k.csv.gz")
    rows = []
    for line in io.TextIOWrapper(gzip.GzipFile(fileobj=io.BytesIO(raw))):
        fields = line.strip().split(",")
        if len(fields) != 785:
            continue
        rows.append(bytes(int(float(v)) for v in fields[:784]))
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
        for r in rows:
            fh.write(r)
    print(f"wrote {len(rows)} images to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
