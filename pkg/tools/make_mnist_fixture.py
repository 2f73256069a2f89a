"""Write the bundled 5000-digit MNIST subset as gzipped IDX files.

Needs ``mlxtend`` (only for this one-off export):

    python3 tools/make_mnist_fixture.py tests/data
"""

import sys
from pathlib import Path

import numpy as np
from mlxtend.data import mnist_data

from ldfa.io import write_idx


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    x, y = mnist_data()
    if not np.array_equal(x, np.round(x)) or x.min() < 0 or x.max() > 255:
        raise SystemExit("unexpected pixel values")
    write_idx(out / "mnist5000-images.idx.gz", x.astype(np.uint8).reshape(-1, 28, 28))
    write_idx(out / "mnist5000-labels.idx.gz", y.astype(np.uint8))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data")
