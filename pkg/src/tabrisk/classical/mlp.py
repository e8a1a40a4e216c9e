"""One-hidden-layer ReLU classifier trained with Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import numerics as nx
from ..rng import derive_rng


@dataclass
class MlpModel:
    kind: str = "mlp"
    hidden: int = 64
    lr: float = 0.01
    epochs: int = 200
    batch_size: int = 64
    weight_decay: float = 0.0
    seed: int = 0
    weights: dict = field(default_factory=dict)
    loss_curve: list = field(default_factory=list)

    def __post_init__(self):
        if self.hidden < 1 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("hidden, epochs and batch_size must be positive")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")

    def _forward(self, x):
        w = self.weights
        pre = nx.dense(x, w["w1"].value, w["b1"].value)
        act = nx.relu(pre)
        return pre, act, nx.dense(act, w["w2"].value, w["b2"].value)

    def fit(self, x, y) -> "MlpModel":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        n, p = x.shape
        rng = derive_rng(self.seed, "mlp", "init")
        self.weights = {
            "w1": nx.Param(nx.glorot_uniform(rng, p, self.hidden)),
            "b1": nx.Param(np.zeros(self.hidden)),
            "w2": nx.Param(nx.glorot_uniform(rng, self.hidden, 2)),
            "b2": nx.Param(np.zeros(2)),
        }
        state = nx.AdamState(lr=self.lr, weight_decay=self.weight_decay)
        shuffle = derive_rng(self.seed, "mlp", "shuffle")
        self.loss_curve = []
        w = self.weights
        for _ in range(self.epochs):
            order = shuffle.permutation(n)
            total = 0.0
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                pre, act, logits = self._forward(x[idx])
                loss, dlogits = nx.cross_entropy(logits, y[idx])
                dact, w["w2"].grad, w["b2"].grad = nx.dense_backward(dlogits, act, w["w2"].value)
                dpre = nx.relu_backward(dact, pre)
                _, w["w1"].grad, w["b1"].grad = nx.dense_backward(dpre, x[idx], w["w1"].value)
                nx.adam_step(w, state)
                total += loss * len(idx)
            self.loss_curve.append(total / n)
        return self

    def predict_proba(self, x) -> np.ndarray:
        return nx.softmax_rows(self._forward(np.asarray(x, dtype=np.float64))[2])

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)

    def params(self) -> dict:
        return {
            "hidden": self.hidden,
            "lr": self.lr,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "weight_decay": self.weight_decay,
        }

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params(),
            "seed": self.seed,
            "weights": {k: {"shape": list(v.value.shape), "values": v.value.ravel().tolist()} for k, v in self.weights.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        model = cls(kind=d["kind"], seed=d["seed"], **d["params"])
        model.weights = {
            k: nx.Param(np.asarray(v["values"], dtype=np.float64).reshape(v["shape"])) for k, v in d["weights"].items()
        }
        return model


def fit_mlp(x, y, seed: int = 0, **params) -> MlpModel:
    return MlpModel(seed=seed, **params).fit(x, y)
