#!/usr/bin/env python3
"""Build IDX files for Fashion-MNIST and MNIST from the npm-registry mirrors.

The npm packages `fashion-mnist` and `mnist` ship the images grouped by class
as JSON.  This script downloads the tarballs, regroups the images and writes
standard big-endian IDX files (optionally gzip-compressed) that `qal` reads.

Fashion-MNIST: 7000 images per class; the first 6000 of each class go to the
`train-*` files and the remaining 1000 to the `t10k-*` files, so the file
sizes match the original 60000/10000 split.  Classes are interleaved
round-robin.

MNIST: the npm package carries a ~10k subset with pixel values stored as
floats in [0, 1] (three decimals); they are mapped back to bytes with
round(v * 255).  All images go to `train-*`.

Usage:
    python3 scripts/fetch_datasets.py [--out data] [--classes 1,9] [--no-gzip]
"""

import argparse
import gzip
import io
import json
import os
import struct
import tarfile
import urllib.request

REGISTRY = os.environ.get("NPM_REGISTRY", "https://registry.npmjs.org")
FASHION_URL = f"{REGISTRY}/fashion-mnist/-/fashion-mnist-1.1.0.tgz"
MNIST_URL = f"{REGISTRY}/mnist/-/mnist-1.1.0.tgz"


def fetch(url, cache_dir):
    os.makedirs(cache_dir, exist_ok=True)
    path = os.path.join(cache_dir, os.path.basename(url))
    if not os.path.exists(path):
        print(f"downloading {url}")
        with urllib.request.urlopen(url) as resp, open(path, "wb") as out:
            out.write(resp.read())
    return path


def write_idx(path, images, labels, use_gzip):
    opener = gzip.open if use_gzip else open
    suffix = ".gz" if use_gzip else ""
    rows = cols = 28
    with opener(path + "-images-idx3-ubyte" + suffix, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), rows, cols))
        for img in images:
            f.write(bytes(img))
    with opener(path + "-labels-idx1-ubyte" + suffix, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))
    print(f"wrote {path}-*  ({len(images)} images)")


def interleave(per_class):
    images, labels = [], []
    longest = max(len(v) for v in per_class.values())
    for i in range(longest):
        for c in sorted(per_class):
            if i < len(per_class[c]):
                images.append(per_class[c][i])
                labels.append(c)
    return images, labels


def fashion(out, classes, cache, use_gzip):
    tgz = tarfile.open(fetch(FASHION_URL, cache))
    train, test = {}, {}
    for c in classes:
        data = json.load(tgz.extractfile(f"package/src/clothes/{c}.json"))["data"]
        train[c] = data[:6000]
        test[c] = data[6000:]
    os.makedirs(out, exist_ok=True)
    write_idx(os.path.join(out, "train"), *interleave(train), use_gzip)
    write_idx(os.path.join(out, "t10k"), *interleave(test), use_gzip)


def mnist(out, classes, cache, use_gzip):
    tgz = tarfile.open(fetch(MNIST_URL, cache))
    per_class = {}
    for c in classes:
        flat = json.load(tgz.extractfile(f"package/src/digits/{c}.json"))["data"]
        imgs = [flat[i:i + 784] for i in range(0, len(flat), 784)]
        per_class[c] = [[min(255, max(0, round(v * 255))) for v in img] for img in imgs]
    os.makedirs(out, exist_ok=True)
    write_idx(os.path.join(out, "train"), *interleave(per_class), use_gzip)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data")
    ap.add_argument("--classes", default="0,1,2,3,4,5,6,7,8,9")
    ap.add_argument("--mnist-classes", default="0,1,2,3,4,5,6,7,8,9")
    ap.add_argument("--cache", default=os.path.join(os.path.expanduser("~"), ".cache", "qal"))
    ap.add_argument("--no-gzip", action="store_true")
    args = ap.parse_args()
    classes = [int(c) for c in args.classes.split(",")]
    mclasses = [int(c) for c in args.mnist_classes.split(",")]
    fashion(os.path.join(args.out, "fashion-mnist"), classes, args.cache, not args.no_gzip)
    mnist(os.path.join(args.out, "mnist"), mclasses, args.cache, not args.no_gzip)


if __name__ == "__main__":
    main()
