"""Convert digit JSON files from the `mnist` npm package to IDX files.

The package stores each image as 784 floats equal to round(pixel / 255, 3).
Pixels are recovered with round(v * 255), which is exact for every value the
package can contain.

usage: mnist_npm_to_idx.py PACKAGE_DIR OUT_DIR [DIGIT ...]
"""
import json
import struct
import sys
from pathlib import Path


def main() -> None:
    package, out = Path(sys.argv[1]), Path(sys.argv[2])
    digits = [int(d) for d in sys.argv[3:]] or list(range(10))
    images, labels = [], []
    for d in digits:
        data = json.loads((package / "src" / "digits" / f"{d}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for k in range(len(data) // 784):
            px = data[k * 784:(k + 1) * 784]
            images.append(bytes(round(v * 255) for v in px))
            labels.append(d)
    # Interleave classes so that any prefix is close to balanced.
    order = sorted(range(len(labels)), key=lambda i: (i - labels.index(labels[i]), labels[i]))
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(order), 28, 28))
        for i in order:
            f.write(images[i])
    with open(out / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(order)))
        f.write(bytes(labels[i] for i in order))


if __name__ == "__main__":
    main()
