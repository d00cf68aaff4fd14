#!/usr/bin/env python3
# Copyright 2026 The loopvec Authors. All Rights Reserved.
# Licensed under the Apache License, Version 2.0.
"""Builds the small MNIST IDX fixture under tests/data/.

Source: the 5000-sample MNIST CSV shipped inside the `mlxtend` wheel
(mlxtend/data/data/mnist_5k.csv.gz). Keeps the first 160 zeros, the first
160 ones and the first 40 images of every other digit, in source order.
"""
import gzip
import struct
import sys

import numpy as np


def main(csv_gz, out_dir):
    data = np.loadtxt(gzip.open(csv_gz), delimiter=",").astype(np.int64)
    images, labels = data[:, :-1].astype(np.uint8), data[:, -1].astype(np.uint8)
    quota = {d: (160 if d in (0, 1) else 40) for d in range(10)}
    keep = []
    for i, y in enumerate(labels):
        if quota[int(y)] > 0:
            quota[int(y)] -= 1
            keep.append(i)
    # Interleave classes so a prefix of the file is already mixed.
    seen = {}
    rank = {}
    for i in keep:
        rank[i] = seen.get(int(labels[i]), 0)
        seen[int(labels[i])] = rank[i] + 1
    keep.sort(key=lambda i: (rank[i], labels[i]))
    imgs, labs = images[keep], labels[keep]
    with open(f"{out_dir}/mnist-mini-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(imgs), 28, 28))
        f.write(imgs.tobytes())
    with open(f"{out_dir}/mnist-mini-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labs)))
        f.write(labs.tobytes())
    print(len(imgs), "images;", np.bincount(labs))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
