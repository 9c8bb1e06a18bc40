"""Convert a MATLAB hyperspectral scene (cube + ground truth) to the hssnb
dataset directory layout.

    python python/convert_mat.py Indian_pines_corrected.mat Indian_pines_gt.mat data/ip --name indian-pines
"""

import argparse
import json
import os

import numpy as np
from scipy.io import loadmat


def only_array(path):
    arrays = {k: v for k, v in loadmat(path).items() if not k.startswith("__")}
    if len(arrays) != 1:
        raise SystemExit(f"{path}: expected one array, found {sorted(arrays)}")
    return next(iter(arrays.values()))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("cube")
    ap.add_argument("labels")
    ap.add_argument("out")
    ap.add_argument("--name", default="dataset")
    args = ap.parse_args()

    cube = np.asarray(only_array(args.cube), dtype="<f4")
    labels = np.asarray(only_array(args.labels), dtype="<u2")
    if cube.ndim != 3 or labels.shape != cube.shape[:2]:
        raise SystemExit(f"shape mismatch: cube {cube.shape}, labels {labels.shape}")
    height, width, bands = cube.shape

    os.makedirs(args.out, exist_ok=True)
    header = {
        "width": width,
        "height": height,
        "bands": bands,
        "classes": int(labels.max()),
        "dtype": "f32le",
        "label_dtype": "u16le",
        "name": args.name,
    }
    with open(os.path.join(args.out, "header.json"), "w") as f:
        json.dump(header, f, indent=2)
    np.ascontiguousarray(cube).tofile(os.path.join(args.out, "cube.f32"))
    np.ascontiguousarray(labels).tofile(os.path.join(args.out, "labels.u16"))
    print(f"{args.out}: {width}x{height}x{bands}, {header['classes']} classes")


if __name__ == "__main__":
    main()
