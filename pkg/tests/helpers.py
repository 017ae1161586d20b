"""Small shared fixtures for the fusion and acceptance tests."""

from __future__ import annotations

import numpy as np

from mhprog.fusion import FusionConfig, FusionDataset, init_params, loss_and_grads
from mhprog.fusion.model import Batch, loss_only

from oracles import numeric_grad

SMALL = FusionConfig(image_size=32, patch=16, d_model=16, n_heads=2, n_encoder_blocks=1,
                     clinical_dim=3, values_dim=4, head_hidden=16, seed=0)


def fusion_data(n: int = 32, seed: int = 0, cfg: FusionConfig = SMALL, informative: bool = True) -> FusionDataset:
    """Balanced labels; values column 0 carries the label when ``informative``."""
    rng = np.random.default_rng(seed)
    y = np.r_[np.zeros(n // 2), np.ones(n - n // 2)].astype(int)
    rng.shuffle(y)
    images = rng.random((n, cfg.image_size, cfg.image_size))
    v_c = rng.normal(size=(n, cfg.clinical_dim))
    v_v = rng.normal(size=(n, cfg.values_dim))
    if informative:
        v_v[:, 0] = 2.0 * (2 * y - 1) + 0.3 * rng.normal(size=n)
    return FusionDataset(images, v_c, v_v, y)


def random_batch(cfg: FusionConfig, n: int = 3, seed: int = 1) -> Batch:
    rng = np.random.default_rng(seed)
    return Batch(rng.random((n, cfg.image_size, cfg.image_size)), rng.normal(size=(n, cfg.clinical_dim)),
                 rng.normal(size=(n, cfg.values_dim)), rng.integers(0, 2, size=n))


def gradient_check(cfg: FusionConfig, n_samples: int = 200, seed: int = 0, h: float = 1e-5,
                   floor: float = 1e-6) -> tuple[float, int]:
    """Max relative error of analytic vs central-difference gradients over sampled parameters.

    Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps parameters
    whose true gradient is exactly zero (e.g. attention key biases) from dividing 0 by 0.
    """
    p = init_params(cfg, zero_classifier=False)
    batch = random_batch(cfg)
    _, grads = loss_and_grads(batch, p, cfg)
    rng = np.random.default_rng(seed)
    names = sorted(p)
    sizes = np.array([p[k].size for k in names], dtype=float)
    worst, checked = 0.0, 0
    # every tensor at least once, the rest proportional to size
    picks = list(names) + list(rng.choice(names, size=max(0, n_samples - len(names)), p=sizes / sizes.sum()))
    for name in picks:
        idx = tuple(int(rng.integers(0, s)) for s in p[name].shape)
        num = numeric_grad(lambda: loss_only(batch, p, cfg), p[name], idx, h)
        ana = float(grads[name][idx])
        err = abs(ana - num) / max(abs(ana), abs(num), floor)
        worst = max(worst, err)
        checked += 1
    return worst, checked
