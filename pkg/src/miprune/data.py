"""Synthetic classification tasks and CSV round-tripping."""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np

from .nn import Batch

GENERATORS = ("gaussian-blobs", "planted-subspace", "xor-like")

_DEFAULTS = {
    "gaussian-blobs": {"classes": 4, "dims": 32, "noise": 0.1},
    "planted-subspace": {"relevant_dims": 4, "total_dims": 32, "classes": 4, "label_noise": 0.0},
    "xor-like": {"dims": 2},
}
# Positional argument order for the compact spec syntax.
_POSITIONAL = {
    "gaussian-blobs": ("classes", "dims", "noise"),
    "planted-subspace": ("relevant_dims", "total_dims", "classes", "label_noise"),
    "xor-like": ("dims",),
}


def _number(text):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return float(text)


def parse_spec(spec):
    """``"planted-subspace(4, 32)"`` or ``{"name": ..., **params}`` -> ``(name, params)``."""
    if isinstance(spec, dict):
        spec = dict(spec)
        name = spec.pop("name", None) or spec.pop("generator", None)
        params = spec.pop("params", {}) or {}
        params.update(spec)
    else:
        m = re.fullmatch(r"\s*([a-z-]+)\s*(?:\((.*)\))?\s*", str(spec))
        if not m:
            raise ValueError(f"cannot parse data spec {spec!r}")
        name, args = m.group(1), m.group(2)
        params = {}
        if name in _POSITIONAL and args and args.strip():
            for i, part in enumerate(args.split(",")):
                if "=" in part:
                    key, value = part.split("=", 1)
                    params[key.strip()] = _number(value)
                else:
                    params[_POSITIONAL[name][i]] = _number(part)
    if name not in GENERATORS:
        raise ValueError(f"unknown generator {name!r}; available: {', '.join(GENERATORS)}")
    unknown = set(params) - set(_DEFAULTS[name])
    if unknown:
        raise ValueError(f"unknown parameters for {name}: {sorted(unknown)}")
    return name, {**_DEFAULTS[name], **params}


class Task:
    """A seeded generator; ``sample(n, rng)`` draws fresh rows."""

    def __init__(self, name, params, seed):
        self.name = name
        self.params = params
        self.seed = seed
        rng = np.random.default_rng(seed)
        if name == "gaussian-blobs":
            self.n_classes = int(params["classes"])
            self.dims = int(params["dims"])
            self.centers = rng.standard_normal((self.n_classes, self.dims))
        elif name == "planted-subspace":
            self.n_classes = int(params["classes"])
            self.dims = int(params["total_dims"])
            r = int(params["relevant_dims"])
            if not 1 <= r <= self.dims:
                raise ValueError("relevant_dims must lie in [1, total_dims]")
            self.planted = np.sort(rng.choice(self.dims, r, replace=False))
            self.projection = rng.standard_normal((r, self.n_classes))
        else:
            self.dims = int(params["dims"])
            self.n_classes = 2

    def metadata(self) -> dict:
        meta = {"generator": self.name, "params": self.params, "seed": self.seed,
                "classes": self.n_classes, "dims": self.dims}
        if self.name == "planted-subspace":
            meta["planted"] = self.planted.tolist()
        return meta

    def sample(self, n, rng) -> Batch:
        if self.name == "gaussian-blobs":
            y = rng.integers(0, self.n_classes, n)
            x = self.centers[y] + self.params["noise"] * rng.standard_normal((n, self.dims))
        elif self.name == "planted-subspace":
            x = rng.standard_normal((n, self.dims))
            y = np.argmax(x[:, self.planted] @ self.projection, axis=1)
            flip = rng.random(n) < self.params["label_noise"]
            y = np.where(flip, rng.integers(0, self.n_classes, n), y)
        else:
            x = rng.uniform(-1.0, 1.0, (n, self.dims))
            y = (np.sum(x < 0, axis=1) % 2).astype(np.int64)
        return Batch(x, y)


def make_task(spec, seed: int = 0) -> Task:
    name, params = parse_spec(spec)
    return Task(name, params, seed)


def make_splits(spec, seed=0, n_train=2000, n_dev=500, n_test=1000):
    """``(task, {"train": Batch, "dev": Batch, "test": Batch})``."""
    task = make_task(spec, seed)
    rng = np.random.default_rng([seed, 1])
    splits = {
        "train": task.sample(n_train, rng),
        "dev": task.sample(n_dev, rng),
        "test": task.sample(n_test, rng),
    }
    return task, splits


def write_csv(batch: Batch, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow([f"x{i}" for i in range(batch.inputs.shape[1])] + ["label"])
        for row, label in zip(batch.inputs, batch.labels):
            writer.writerow([format(v, ".17g") for v in row] + [int(label)])


def read_csv(path) -> Batch:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        if not header or header[-1] != "label":
            raise ValueError(f"{path}: last column must be 'label'")
        rows = [r for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.array(rows, dtype=object)
    return Batch(arr[:, :-1].astype(np.float64), arr[:, -1].astype(np.int64))


def gen_data(spec, seed: int, out_dir, n_train=2000, n_dev=500, n_test=1000) -> dict:
    """Write ``train.csv``, ``dev.csv``, ``test.csv`` and ``meta.json``; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    task, splits = make_splits(spec, seed, n_train, n_dev, n_test)
    paths = {}
    for name, batch in splits.items():
        paths[name] = out / f"{name}.csv"
        write_csv(batch, paths[name])
    paths["meta"] = out / "meta.json"
    paths["meta"].write_text(json.dumps(task.metadata(), indent=2, sort_keys=True))
    return paths


def load_split(data_dir, name="train") -> Batch:
    return read_csv(Path(data_dir) / f"{name}.csv")
