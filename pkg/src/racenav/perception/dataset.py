"""Labeled observation records and their on-disk format.

Dataset files are numpy ``.npz`` archives (format version 1):

=============== ============ ========= =====================================
key             shape        dtype     meaning
=============== ============ ========= =====================================
format_version  ()           int64     always 1
obs             (N, H, W)    float32   observation grids in [0, 1]
x_g             (N, 2)       float64   expert image coordinates in [-1, 1]
v_g             (N,)         float64   expert normalized speed in [0, 1]
flags           (N,)         uint8     bit 0 goal outside FOV, bit 1 goal
                                       clamped at open trajectory end
state           (N, 14)      float64   time + 13-element state vector
split_seed      ()           int64     seed used for train/held-out splits
=============== ============ ========= =====================================
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DATASET_VERSION = 1


@dataclass
class Dataset:
    obs: np.ndarray
    x_g: np.ndarray
    v_g: np.ndarray
    flags: np.ndarray
    state: np.ndarray
    split_seed: int = 0

    def __post_init__(self):
        self.obs = np.asarray(self.obs, dtype=np.float32)
        self.x_g = np.asarray(self.x_g, dtype=np.float64).reshape(-1, 2)
        self.v_g = np.asarray(self.v_g, dtype=np.float64).reshape(-1)
        self.flags = np.asarray(self.flags, dtype=np.uint8).reshape(-1)
        self.state = np.asarray(self.state, dtype=np.float64).reshape(-1, 14)
        n = len(self.obs)
        if not (len(self.x_g) == len(self.v_g) == len(self.flags) == len(self.state) == n):
            raise ValueError("dataset columns differ in length")
        if n and (np.abs(self.x_g).max() > 1.0 or self.v_g.min() < 0.0 or self.v_g.max() > 1.0):
            raise ValueError("labels outside [-1, 1]^2 x [0, 1]")

    def __len__(self):
        return len(self.obs)

    @classmethod
    def empty(cls, height=24, width=32):
        return cls(np.zeros((0, height, width)), np.zeros((0, 2)), np.zeros(0),
                   np.zeros(0), np.zeros((0, 14)))

    def subset(self, idx):
        return Dataset(self.obs[idx], self.x_g[idx], self.v_g[idx], self.flags[idx],
                       self.state[idx], self.split_seed)

    def split(self, held_out=0.2):
        rng = np.random.default_rng(self.split_seed)
        perm = rng.permutation(len(self))
        k = int(round(len(self) * held_out))
        return self.subset(np.sort(perm[k:])), self.subset(np.sort(perm[:k]))

    def save(self, path):
        with open(path, "wb") as fh:
            np.savez_compressed(fh, format_version=np.array(DATASET_VERSION), obs=self.obs,
                                x_g=self.x_g, v_g=self.v_g, flags=self.flags, state=self.state,
                                split_seed=np.array(self.split_seed))

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            if int(z["format_version"]) != DATASET_VERSION:
                raise ValueError(f"unsupported dataset version {int(z['format_version'])}")
            return cls(z["obs"], z["x_g"], z["v_g"], z["flags"], z["state"], int(z["split_seed"]))


def concat(parts, split_seed=None) -> Dataset:
    parts = [p for p in parts if len(p)]
    if not parts:
        return Dataset.empty()
    seed = parts[0].split_seed if split_seed is None else split_seed
    return Dataset(np.concatenate([p.obs for p in parts]),
                   np.concatenate([p.x_g for p in parts]),
                   np.concatenate([p.v_g for p in parts]),
                   np.concatenate([p.flags for p in parts]),
                   np.concatenate([p.state for p in parts]), seed)


@dataclass
class DatasetBuilder:
    obs: list = field(default_factory=list)
    x_g: list = field(default_factory=list)
    v_g: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    state: list = field(default_factory=list)

    def add(self, obs, label, state_row):
        self.obs.append(np.asarray(obs, dtype=np.float32))
        self.x_g.append(label.x_g)
        self.v_g.append(label.v_g)
        self.flags.append(label.flags)
        self.state.append(state_row)

    def __len__(self):
        return len(self.obs)

    def build(self, split_seed=0, height=24, width=32) -> Dataset:
        if not self.obs:
            return Dataset.empty(height, width)
        return Dataset(np.stack(self.obs), np.array(self.x_g), np.array(self.v_g),
                       np.array(self.flags), np.array(self.state), split_seed)
