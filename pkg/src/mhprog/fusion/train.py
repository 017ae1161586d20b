"""Dataset container, SGD-with-momentum training, prediction and checkpoints."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import Diverged, OneClassOnly
from .model import Batch, FusionConfig, forward, init_params, loss_and_grads

CHECKPOINT_FORMAT = "mhprog-fusion"
CHECKPOINT_VERSION = 1


@dataclass
class FusionDataset:
    images: np.ndarray  # (n, S, S) in [0, 1]
    v_c: np.ndarray     # (n, clinical_dim)
    v_v: np.ndarray     # (n, values_dim)
    y: np.ndarray       # (n,) 1 = Superior
    ids: list = field(default_factory=list)
    values_names: list = field(default_factory=list)
    clinical_names: list = field(default_factory=list)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=float)
        self.v_c = np.asarray(self.v_c, dtype=float).reshape(len(self.images), -1)
        self.v_v = np.asarray(self.v_v, dtype=float).reshape(len(self.images), -1)
        self.y = np.asarray(self.y, dtype=int)
        if not self.ids:
            self.ids = list(range(len(self.y)))

    def __len__(self):
        return len(self.y)

    def subset(self, idx) -> "FusionDataset":
        idx = np.asarray(idx, dtype=int)
        return FusionDataset(self.images[idx], self.v_c[idx], self.v_v[idx], self.y[idx],
                             [self.ids[i] for i in idx], list(self.values_names), list(self.clinical_names))

    def with_values(self, cols) -> "FusionDataset":
        cols = list(cols)
        return FusionDataset(self.images, self.v_c, self.v_v[:, cols], self.y, list(self.ids),
                             [self.values_names[c] for c in cols] if self.values_names else [],
                             list(self.clinical_names))

    def batch(self, idx=None) -> Batch:
        if idx is None:
            idx = np.arange(len(self))
        return Batch(self.images[idx], self.v_c[idx], self.v_v[idx], self.y[idx])


@dataclass
class TrainResult:
    params: dict
    loss_trace: list


def train(data: FusionDataset, cfg: FusionConfig, epochs: int = 100, lr: float = 1e-2,
          batch_size: int = 16, momentum: float = 0.9, params: dict | None = None) -> TrainResult:
    """Mini-batch SGD with momentum; shuffling is seeded from ``cfg.seed``.

    The loss trace holds the mean training loss of each epoch. Identical
    (config, data, hyper-parameters) give bitwise-identical results.
    """
    if len(np.unique(data.y)) < 2:
        raise OneClassOnly("training data needs both classes")
    p = init_params(cfg) if params is None else {k: v.copy() for k, v in params.items()}
    vel = {k: np.zeros_like(v) for k, v in p.items()}
    rng = np.random.default_rng([cfg.seed, 1])
    n = len(data)
    trace = []
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            loss, grads = loss_and_grads(data.batch(idx), p, cfg)
            if not math.isfinite(loss):
                raise Diverged(f"loss became {loss}")
            total += loss * len(idx)
            for k in p:
                vel[k] = momentum * vel[k] + grads[k]
                p[k] = p[k] - lr * vel[k]
        epoch_loss = total / n
        if not math.isfinite(epoch_loss):
            raise Diverged(f"epoch loss became {epoch_loss}")
        trace.append(epoch_loss)
    return TrainResult(p, trace)


def predict_proba(params: dict, cfg: FusionConfig, data: FusionDataset, batch_size: int = 64) -> np.ndarray:
    """P(Superior) for every sample."""
    out = []
    for start in range(0, len(data), batch_size):
        idx = np.arange(start, min(start + batch_size, len(data)))
        out.append(forward(data.batch(idx), params, cfg)[:, 0])
    return np.concatenate(out) if out else np.zeros(0)


def save_checkpoint(path, params: dict, cfg: FusionConfig, extra: dict | None = None) -> None:
    """JSON container: config plus every parameter as a named shape and flat float list."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": cfg.to_dict(),
        "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in sorted(params.items())},
    }
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path) -> tuple[dict, FusionConfig, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a fusion checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    cfg = FusionConfig.from_dict(doc["config"])
    params = {k: np.array(v["data"], dtype=float).reshape(v["shape"]) for k, v in doc["params"].items()}
    expected = init_params(cfg)
    if set(expected) != set(params):
        raise ValueError(f"{path}: parameter names do not match the config")
    for k, v in expected.items():
        if v.shape != params[k].shape:
            raise ValueError(f"{path}: parameter {k} has shape {params[k].shape}, expected {v.shape}")
    return params, cfg, doc.get("extra", {})
