#!/usr/bin/env python3
"""Build the benchmark LIBSVM files and manifest under ``data/``.

Sources are redistributions that ship on PyPI, so no network access beyond
the package index is needed:

* ``keel-ds``: sonar, ionosphere, new-thyroid, banana, pima, ring, twonorm,
  titanic (KEEL repository copies of the UCI / Raetsch benchmark sets).
* ``responsibly``: the raw UCI Adult census file, binarised into the
  123-feature a1a/a3a/a4a encoding.
* MONK-1 is generated from its defining rule.

Usage::

    python scripts/prepare_data.py [--out data] [--wheels DIR]
"""

import argparse
import io
import itertools
import json
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import numpy as np

from ngmkl.data import Dataset, save_libsvm

KEEL_WHEEL = "keel-ds==0.2.5"
ADULT_WHEEL = "responsibly==0.1.2"
SEED = 20240101

# name: (train, test) from the benchmark table; monks1 is halved (see README).
SIZES = {
    "a1a": (802, 803), "a3a": (1592, 1593), "a4a": (2391, 2392),
    "ionosphere": (175, 176), "monks1": (278, 278), "sonar": (104, 104),
    "banana": (400, 4900), "diabetes": (468, 300), "ringnorm": (400, 7000),
    "thyroid": (140, 75), "titanic": (150, 2051), "twonorm": (400, 7000),
}


def fetch_wheels(dest):
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d",
                    str(dest), KEEL_WHEEL, ADULT_WHEEL], check=True)


def open_wheel(folder, prefix):
    matches = sorted(Path(folder).glob(prefix + "*.whl"))
    if not matches:
        raise SystemExit(f"no {prefix} wheel in {folder}")
    return zipfile.ZipFile(matches[0])


def keel_rows(wheel, member):
    text = wheel.read(f"keel_ds/data/{member}").decode()
    rows = [line for line in text.splitlines() if line.strip() and not line.startswith("@")]
    feats = [[float(v) for v in r.split(",")[:-1]] for r in rows]
    labels = [r.split(",")[-1].strip() for r in rows]
    return np.array(feats), labels


def to_dataset(X, labels, positive, name):
    y = np.array([0 if lab == positive else 1 for lab in labels])
    return Dataset(X, y, (1, -1), name)


def build_keel(wheel):
    out = {}
    X, lab = keel_rows(wheel, "balanced/raw/sonar.dat")
    out["sonar"] = to_dataset(X, lab, "M", "sonar")
    X, lab = keel_rows(wheel, "balanced/raw/ionosphere.dat")
    # The KEEL copy drops the constant second attribute of the UCI file.
    X = np.insert(X, 1, 0.0, axis=1)
    out["ionosphere"] = to_dataset(X, lab, "g", "ionosphere")
    X, lab = keel_rows(wheel, "imbalanced/raw/new-thyroid1.dat")
    out["thyroid"] = to_dataset(X, lab, "positive", "thyroid")
    for name, member, pos in (("banana", "banana", "1.0"), ("diabetes", "pima", "tested_positive"),
                              ("ringnorm", "ring", "1"), ("twonorm", "twonorm", "1"),
                              ("titanic", "titanic", "1.0")):
        X, lab = keel_rows(wheel, f"balanced/raw/{member}.dat")
        out[name] = to_dataset(X, lab, pos, name)
    return out


def build_monks1(rng):
    """MONK-1: class 1 iff a1 == a2 or a5 == 1; 124 sampled rows then all 432."""
    grid = np.array(list(itertools.product([1, 2, 3], [1, 2, 3], [1, 2], [1, 2, 3],
                                           [1, 2, 3, 4], [1, 2])), dtype=float)
    train = grid[np.sort(rng.choice(len(grid), 124, replace=False))]
    X = np.vstack([train, grid])
    y = np.where((X[:, 0] == X[:, 1]) | (X[:, 4] == 1), 0, 1)
    return Dataset(X, y, (1, -1), "monks1")


ADULT_COLUMNS = [
    ("age", 5), ("workclass", None), ("fnlwgt", 5), ("education", None),
    ("education-num", 5), ("marital-status", None), ("occupation", None),
    ("relationship", None), ("race", None), ("sex", None), ("capital-gain", 2),
    ("capital-loss", 2), ("hours-per-week", 5), ("native-country", None),
]


def adult_categories(names_text):
    cats = {}
    for line in names_text.splitlines():
        if ":" in line and not line.startswith("|") and not line.rstrip().endswith("continuous."):
            key, values = line.split(":", 1)
            cats[key.strip()] = [v.strip() for v in values.strip().rstrip(".").split(",")]
    return cats


def build_adult(wheel, rng):
    """Binarise Adult into 123 indicator features (quantile bins + one-hot)."""
    raw = wheel.read("responsibly/dataset/adult/adult.data").decode()
    cats = adult_categories(wheel.read("responsibly/dataset/adult/adult.names").decode())
    rows = [[v.strip() for v in line.split(",")] for line in raw.splitlines() if line.strip()]
    n = len(rows)
    blocks = []
    for col, (name, bins) in enumerate(ADULT_COLUMNS):
        if bins is None:
            values = cats[name]
            block = np.zeros((n, len(values)))
            lookup = {v: i for i, v in enumerate(values)}
            for r, row in enumerate(rows):
                if row[col] in lookup:
                    block[r, lookup[row[col]]] = 1.0
        else:
            x = np.array([float(row[col]) for row in rows])
            if bins == 2:
                edges = np.array([0.0])
            else:
                edges = np.quantile(x, np.linspace(0, 1, bins + 1)[1:-1])
            which = np.searchsorted(edges, x, side="right")
            block = np.zeros((n, bins))
            block[np.arange(n), which] = 1.0
        blocks.append(block)
    X = np.hstack(blocks)
    assert X.shape[1] == 123, X.shape
    y = np.array([0 if row[-1].startswith(">50K") else 1 for row in rows])
    perm = rng.permutation(n)
    out = {}
    for name, count in (("a1a", 1605), ("a3a", 3185), ("a4a", 4781)):
        idx = perm[:count]
        out[name] = Dataset(X[idx], y[idx], (1, -1), name)
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data")
    parser.add_argument("--wheels", help="folder holding the keel-ds and responsibly wheels")
    args = parser.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        wheels = Path(args.wheels) if args.wheels else Path(tmp)
        if not args.wheels:
            fetch_wheels(wheels)
        rng = np.random.Generator(np.random.PCG64(SEED))
        datasets = build_keel(open_wheel(wheels, "keel_ds"))
        datasets["monks1"] = build_monks1(rng)
        datasets.update(build_adult(open_wheel(wheels, "responsibly"), rng))

    manifest = []
    for name, (train, test) in SIZES.items():
        ds = datasets[name]
        path = out / f"{name}.libsvm"
        save_libsvm(ds, path)
        entry = {"name": name, "path": path.name, "train_size": train, "test_size": test,
                 "repetitions": 10}
        if name.startswith("a") and name.endswith("a"):
            entry["dimensions"] = 123
        manifest.append(entry)
        print(f"{name:12s} n={ds.n:5d} d={ds.d:4d} -> {path}")
    (out / "manifest.json").write_text(json.dumps({"datasets": manifest}, indent=2) + "\n")


if __name__ == "__main__":
    main()
