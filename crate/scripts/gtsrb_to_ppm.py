#!/usr/bin/env python3
"""Lays out a GTSRB download as two class-per-directory PPM trees.

Usage: gtsrb_to_ppm.py TRAINING_IMAGES TEST_IMAGES TEST_CSV OUT

TRAINING_IMAGES is Final_Training/Images (subdirectories 00000..00042),
TEST_IMAGES is Final_Test/Images and TEST_CSV is GT-final_test.csv.
OUT/train and OUT/test receive identical class directory names.
"""

import csv
import shutil
import sys
from pathlib import Path


def main() -> int:
    if len(sys.argv) != 5:
        print(__doc__.strip(), file=sys.stderr)
        return 2
    train_src, test_src, test_csv, out = map(Path, sys.argv[1:])
    train_out, test_out = out / "train", out / "test"

    classes = sorted(d.name for d in train_src.iterdir() if d.is_dir())
    for name in classes:
        dst = train_out / name
        dst.mkdir(parents=True, exist_ok=True)
        for img in sorted((train_src / name).glob("*.ppm")):
            shutil.copyfile(img, dst / img.name)

    for name in classes:
        (test_out / name).mkdir(parents=True, exist_ok=True)
    with open(test_csv, newline="") as f:
        for row in csv.DictReader(f, delimiter=";"):
            name = f"{int(row['ClassId']):05d}"
            if name not in classes:
                print(f"unknown class {name} for {row['Filename']}", file=sys.stderr)
                return 1
            shutil.copyfile(test_src / row["Filename"], test_out / name / row["Filename"])

    print(f"{len(classes)} classes written under {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
