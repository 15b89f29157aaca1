#!/usr/bin/env python3
# Copyright 2026 The VarMix Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Convert the digits bundled in the npm `mnist` package to gzipped IDX files.

The npm package ships 10,000 MNIST digits (grouped by class, pixels quantized
to three decimals). This script rebuilds uint8 images, splits every class
80/20 into train/test with a fixed seed and writes the four standard IDX
files so the regular MNIST loader can read them.

    npm pack mnist            # produces mnist-1.1.0.tgz
    python3 tools/make_mnist_subset.py mnist-1.1.0.tgz data/mnist-subset
"""

import argparse
import gzip
import io
import json
import random
import struct
import tarfile
from pathlib import Path


def read_digits(tgz_path):
    digits = {}
    with tarfile.open(tgz_path, "r:gz") as tar:
        for label in range(10):
            member = tar.getmember(f"package/src/digits/{label}.json")
            data = json.load(io.TextIOWrapper(tar.extractfile(member)))["data"]
            if len(data) % 784 != 0:
                raise ValueError(f"digit file {label} has {len(data)} values")
            images = []
            for start in range(0, len(data), 784):
                px = data[start:start + 784]
                images.append(bytes(min(255, max(0, round(v * 255))) for v in px))
            digits[label] = images
    return digits


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header)
        f.write(payload)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("tarball")
    parser.add_argument("out_dir")
    parser.add_argument("--test-fraction", type=float, default=0.2)
    parser.add_argument("--seed", type=int, default=20200101)
    args = parser.parse_args()

    digits = read_digits(args.tarball)
    rng = random.Random(args.seed)
    train, test = [], []
    for label, images in digits.items():
        order = list(range(len(images)))
        rng.shuffle(order)
        n_test = round(len(images) * args.test_fraction)
        test += [(images[i], label) for i in order[:n_test]]
        train += [(images[i], label) for i in order[n_test:]]
    rng.shuffle(train)
    rng.shuffle(test)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for prefix, split in (("train", train), ("t10k", test)):
        write_idx(out / f"{prefix}-images-idx3-ubyte.gz", 0x00000803,
                  (len(split), 28, 28), b"".join(img for img, _ in split))
        write_idx(out / f"{prefix}-labels-idx1-ubyte.gz", 0x00000801,
                  (len(split),), bytes(lbl for _, lbl in split))
    print(f"wrote {len(train)} train / {len(test)} test examples to {out}")


if __name__ == "__main__":
    main()
