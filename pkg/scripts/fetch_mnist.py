#!/usr/bin/env python3
"""Download the four MNIST IDX files (needs network access).

The library itself only reads local files; this helper fills a directory
that `sparsenet run` configs and the acceptance suite can point at via
SPARSENET_MNIST_DIR.

Usage: python scripts/fetch_mnist.py [target_dir]
"""

import sys
import urllib.request
from pathlib import Path

MIRRORS = [
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
]
FILES = [
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
]


def main() -> int:
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data/mnist")
    target.mkdir(parents=True, exist_ok=True)
    for name in FILES:
        dest = target / name
        if dest.exists():
            print(f"already have {dest}")
            continue
        for mirror in MIRRORS:
            url = mirror + name
            try:
                print(f"fetching {url}")
                urllib.request.urlretrieve(url, dest)
                break
            except OSError as err:
                print(f"  failed: {err}")
        else:
            print(f"could not download {name} from any mirror", file=sys.stderr)
            return 1
    print(f"MNIST files ready under {target}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
