"""Text formats for environments, datasets and count tables.

Environment files are JSON objects::

    {"kind": "tabular" | "linear", "dims": {...}, "arrays": {name: [floats...]}}

with every array flattened in row-major (C) order. Tabular files carry
``P`` (H, S, A, S), ``r`` (H, S, A), ``d1`` (S); linear files carry ``phi``
(S, A, d), ``nu`` (H, S, d), ``theta`` (H, d), ``d1`` (S).

Datasets are CSV with header ``traj,h,s,a,r,s_next`` (0-based steps).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .count_release import CountTables
from .mdp_core import Dataset, LinearMDP, TabularMDP

DATASET_HEADER = ["traj", "h", "s", "a", "r", "s_next"]


def mdp_to_dict(mdp: TabularMDP | LinearMDP) -> dict:
    if isinstance(mdp, TabularMDP):
        dims = {"H": mdp.H, "S": mdp.S, "A": mdp.A}
        arrays = {"P": mdp.P, "r": mdp.r, "d1": mdp.d1}
        kind = "tabular"
    else:
        dims = {"H": mdp.H, "S": mdp.S, "A": mdp.A, "d": mdp.d}
        arrays = {"phi": mdp.phi, "nu": mdp.nu, "theta": mdp.theta, "d1": mdp.d1}
        kind = "linear"
    return {"kind": kind, "dims": dims, "arrays": {k: np.ravel(v).tolist() for k, v in arrays.items()}}


def mdp_from_dict(obj: dict) -> TabularMDP | LinearMDP:
    dims, arrays = obj["dims"], obj["arrays"]
    H, S, A = dims["H"], dims["S"], dims["A"]

    def arr(name, shape):
        return np.asarray(arrays[name], dtype=float).reshape(shape)

    if obj["kind"] == "tabular":
        return TabularMDP(arr("P", (H, S, A, S)), arr("r", (H, S, A)), arr("d1", (S,)))
    if obj["kind"] == "linear":
        d = dims["d"]
        return LinearMDP(arr("phi", (S, A, d)), arr("nu", (H, S, d)), arr("theta", (H, d)), arr("d1", (S,)))
    raise ValueError(f"unknown environment kind {obj['kind']!r}")


def save_mdp(mdp: TabularMDP | LinearMDP, path) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(mdp)))


def load_mdp(path) -> TabularMDP | LinearMDP:
    return mdp_from_dict(json.loads(Path(path).read_text()))


def save_dataset(data: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DATASET_HEADER)
        for i in range(data.count):
            for h in range(data.horizon):
                writer.writerow(
                    [i, h, data.states[i, h], data.actions[i, h], repr(float(data.rewards[i, h])), data.states[i, h + 1]]
                )


def load_dataset(path, H: int) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != DATASET_HEADER:
            raise ValueError(f"unexpected dataset header {reader.fieldnames}")
        rows = list(reader)
    n = 1 + max((int(row["traj"]) for row in rows), default=-1)
    states = np.zeros((n, H + 1), dtype=np.int64)
    actions = np.zeros((n, H), dtype=np.int64)
    rewards = np.zeros((n, H))
    seen = np.zeros((n, H), dtype=bool)
    for row in rows:
        i, h = int(row["traj"]), int(row["h"])
        states[i, h], actions[i, h], rewards[i, h] = int(row["s"]), int(row["a"]), float(row["r"])
        states[i, h + 1] = int(row["s_next"])
        seen[i, h] = True
    if not seen.all():
        raise ValueError("dataset file is missing transitions")
    return Dataset(states, actions, rewards)


def save_counts(counts: CountTables, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["h", "s", "a", "s_next", "value"])
        for h, s, a, t, value in counts.to_rows():
            writer.writerow([h, s, a, "" if t < 0 else t, repr(value)])
