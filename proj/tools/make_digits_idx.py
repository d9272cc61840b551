#!/usr/bin/env python3
"""Build a small MNIST-layout IDX dataset from scikit-learn's bundled 8x8 digits.

Each 8x8 digit is bilinearly upscaled to 20x20 and centred in a 28x28 frame
with a 4-pixel zero margin, matching the MNIST convention. The first 1297
images form the training split and the remaining 500 the test split.
"""
import argparse
import pathlib
import struct

import numpy as np
from scipy.ndimage import zoom
from sklearn.datasets import load_digits

TRAIN_COUNT = 1297


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", type=pathlib.Path)
    args = ap.parse_args()
    digits = load_digits()
    frames = np.zeros((len(digits.images), 28, 28))
    for i, im in enumerate(digits.images):
        frames[i, 4:24, 4:24] = np.clip(zoom(im / 16.0, 2.5, order=1), 0.0, 1.0)
    pixels = np.round(frames * 255.0).astype(np.uint8)
    labels = digits.target.astype(np.uint8)
    args.out.mkdir(parents=True, exist_ok=True)
    write_images(args.out / "train-images-idx3-ubyte", pixels[:TRAIN_COUNT])
    write_labels(args.out / "train-labels-idx1-ubyte", labels[:TRAIN_COUNT])
    write_images(args.out / "t10k-images-idx3-ubyte", pixels[TRAIN_COUNT:])
    write_labels(args.out / "t10k-labels-idx1-ubyte", labels[TRAIN_COUNT:])


if __name__ == "__main__":
    main()
