"""Class-weighted logistic regression baseline: one dense layer trained
with weighted BCE, the in-repo comparison point for the resamplers."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import MLP, Tape
from .data import Dataset
from .resampling import class_weights, weight_vector


class LogisticBaseline:
    def __init__(self, mlp: MLP):
        self.mlp = mlp

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return ad._expit(self.mlp.forward_np(np.atleast_2d(x))[:, 0])


def train_logistic(train: Dataset, lr: float = 1e-2, epochs: int = 50,
                   batch_size: int = 256, seed: int = 0,
                   weighted: bool = True) -> LogisticBaseline:
    rng = np.random.default_rng(seed)
    mlp = MLP.init(rng, [train.d, 1])
    if weighted:
        w_all = weight_vector(train.labels, class_weights(train.labels))
    else:
        w_all = np.ones(train.n)
    params = mlp.parameters()
    opt = ad.AdamState(params, lr=lr)
    for _ in range(epochs):
        perm = rng.permutation(train.n)
        for start in range(0, train.n, batch_size):
            idx = perm[start:start + batch_size]
            tape = Tape()
            logits = mlp.forward(tape, tape.const(train.features[idx]))
            bce = ad.bce_with_logits(logits, train.labels[idx].reshape(-1, 1).astype(float))
            loss = ad.vmean(ad.mul(tape.const(w_all[idx].reshape(-1, 1)), bce))
            ad.backward(loss)
            ad.adam_step(opt, params, mlp.gradients())
    return LogisticBaseline(mlp)
