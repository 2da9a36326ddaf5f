# Copyright 2026 The Foveate Authors. All Rights Reserved.
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
"""Writes the committed MNIST subset under fixtures/mnist as IDX files.

Source: the 5000-image MNIST sample shipped with mlxtend
(mlxtend/data/data/mnist_5k.csv.gz, 500 images per class, label in the last
column). Per class the first 400 images go to the train split and the last
100 to the held-out test split; both splits are shuffled with a fixed seed.

    pip download --no-deps mlxtend==0.24.0 -d /tmp/pk
    python3 tools/fixtures/make_mnist_subset.py /tmp/pk/mlxtend-0.24.0-py3-none-any.whl
"""
import gzip
import io
import struct
import sys
import zipfile

import numpy as np


def main(wheel, out_dir="fixtures/mnist"):
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    data = np.loadtxt(io.StringIO(gzip.decompress(raw).decode()), delimiter=",").astype(np.uint8)
    images, labels = data[:, :-1], data[:, -1]
    rng = np.random.default_rng(20190531)
    train, test = [], []
    for k in range(10):
        idx = np.where(labels == k)[0]
        train += list(idx[:400])
        test += list(idx[400:])
    train, test = np.array(train), np.array(test)
    rng.shuffle(train)
    rng.shuffle(test)
    for prefix, ids in (("train", train), ("test", test)):
        with open(f"{out_dir}/{prefix}-images-idx3-ubyte", "wb") as f:
            f.write(struct.pack(">IIII", 0x803, len(ids), 28, 28))
            f.write(images[ids].tobytes())
        with open(f"{out_dir}/{prefix}-labels-idx1-ubyte", "wb") as f:
            f.write(struct.pack(">II", 0x801, len(ids)))
            f.write(labels[ids].tobytes())


if __name__ == "__main__":
    main(*sys.argv[1:])
