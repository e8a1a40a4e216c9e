"""Tabular transformer: column embeddings, self-attention encoder, MLP head.

Categorical codes are looked up in per-column tables whose rows are
``[shared column vector (width l), per-class vector (width d - l)]``; the last
row of every table is reserved for missing values.  The ``m`` column tokens
pass through post-norm encoder blocks (multi-head attention, residual,
layer norm, two-layer feed-forward, residual, layer norm) with no positional
encoding, so the encoder is equivariant to column order.  The flattened
contextual tokens are concatenated with the (row-normalised) continuous
features into a ``d * m + c`` vector, which is both the extracted feature
vector and the input of the MLP head.

Arrays are batched: tokens have shape ``(batch, m, d)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import numerics as nx
from .data import Dataset
from .rng import derive_rng

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 0.001
    weight_decay: float = 0.0001
    dropout: float = 0.2
    batch_size: int = 265
    epochs: int = 500
    blocks: int = 3
    heads: int = 4
    d: int = 8
    mlp_hidden_factors: tuple = (2, 1)
    mlp_blocks: int = 2
    shared_dim: int | None = None
    ff_multiplier: int = 4
    cont_layer_norm: bool = True
    decoupled_weight_decay: bool = True
    use_sample_weights: bool = False
    seed: int = 0

    def __post_init__(self):
        self.mlp_hidden_factors = tuple(self.mlp_hidden_factors)
        if self.shared_dim is None:
            self.shared_dim = self.d // 2
        if self.mlp_blocks != len(self.mlp_hidden_factors):
            raise ValueError("mlp_blocks must equal the number of hidden-unit factors")
        if self.d % self.heads:
            raise ValueError("embedding width d must be divisible by the number of heads")
        if not 0 <= self.shared_dim < self.d:
            raise ValueError("shared_dim must satisfy 0 <= l < d")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        for name in ("batch_size", "epochs", "heads", "d", "ff_multiplier"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.blocks < 0 or self.lr < 0 or self.weight_decay < 0:
            raise ValueError("blocks, lr and weight_decay must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mlp_hidden_factors"] = list(self.mlp_hidden_factors)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


class TabTransformer:
    """Parameters and forward/backward passes of the tabular transformer."""

    def __init__(self, cardinalities, n_cont: int, config: TrainConfig | None = None):
        self.config = config or TrainConfig()
        self.cardinalities = [int(c) for c in cardinalities]
        self.n_cont = int(n_cont)
        cfg = self.config
        self.m = len(self.cardinalities)
        self.d = cfg.d
        self.head_dim = cfg.d // cfg.heads
        self.feature_width = self.d * self.m + self.n_cont
        self.hidden_widths = [int(f * self.feature_width) for f in cfg.mlp_hidden_factors]
        self.params: dict[str, nx.Param] = {}
        self._init_params(derive_rng(cfg.seed, "tabtransformer", "init"))
        assert self.feature_width == self.d * self.m + self.n_cont

    # ------------------------------------------------------------------ init

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = nx.Param(value)

    def _init_params(self, rng: np.random.Generator) -> None:
        d, l, ff = self.d, self.config.shared_dim, self.config.ff_multiplier * self.d
        for i, card in enumerate(self.cardinalities):
            self._add(f"emb{i}.shared", rng.normal(0.0, 0.05, size=l))
            self._add(f"emb{i}.classes", rng.normal(0.0, 0.05, size=(card + 1, d - l)))
        for b in range(self.config.blocks):
            p = f"block{b}."
            for proj in ("q", "k", "v", "o"):
                self._add(p + f"w{proj}", nx.glorot_uniform(rng, d, d))
                self._add(p + f"b{proj}", np.zeros(d))
            self._add(p + "ln1.gain", np.ones(d))
            self._add(p + "ln1.bias", np.zeros(d))
            self._add(p + "ff1.w", nx.glorot_uniform(rng, d, ff))
            self._add(p + "ff1.b", np.zeros(ff))
            self._add(p + "ff2.w", nx.glorot_uniform(rng, ff, d))
            self._add(p + "ff2.b", np.zeros(d))
            self._add(p + "ln2.gain", np.ones(d))
            self._add(p + "ln2.bias", np.zeros(d))
        width = self.feature_width
        for j, h in enumerate(self.hidden_widths):
            self._add(f"head{j}.w", nx.glorot_uniform(rng, width, h))
            self._add(f"head{j}.b", np.zeros(h))
            width = h
        self._add("out.w", nx.glorot_uniform(rng, width, 2))
        self._add("out.b", np.zeros(2))

    def value(self, name: str) -> np.ndarray:
        return self.params[name].value

    @property
    def n_parameters(self) -> int:
        return int(sum(p.value.size for p in self.params.values()))

    # --------------------------------------------------------------- forward

    def _check_codes(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        if codes.ndim == 1:
            codes = codes[None, :]
        if codes.shape[1] != self.m:
            raise ValueError(f"expected {self.m} categorical codes, got {codes.shape[1]}")
        for i, card in enumerate(self.cardinalities):
            if codes.size and (codes[:, i].min() < 0 or codes[:, i].max() > card):
                raise ValueError(f"categorical column {i}: code out of range [0, {card}]")
        return codes

    def embed_columns(self, codes) -> np.ndarray:
        """Column embeddings, shape ``(batch, m, d)``; a 1-D input gives ``(m, d)``."""
        single = np.asarray(codes).ndim == 1
        codes = self._check_codes(codes)
        l = self.config.shared_dim
        out = np.empty((codes.shape[0], self.m, self.d))
        for i in range(self.m):
            out[:, i, :l] = self.value(f"emb{i}.shared")
            out[:, i, l:] = self.value(f"emb{i}.classes")[codes[:, i]]
        return out[0] if single else out

    def _attention(self, h: np.ndarray, p: str):
        bsz, m, d = h.shape
        nh, hd = self.config.heads, self.head_dim

        def split(x):
            return x.reshape(bsz, m, nh, hd).transpose(0, 2, 1, 3)

        q = split(nx.dense(h, self.value(p + "wq"), self.value(p + "bq")))
        k = split(nx.dense(h, self.value(p + "wk"), self.value(p + "bk")))
        v = split(nx.dense(h, self.value(p + "wv"), self.value(p + "bv")))
        scores = q @ k.transpose(0, 1, 3, 2) / math.sqrt(hd)
        attn = nx.softmax_rows(scores)
        ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(bsz, m, d)
        out = nx.dense(ctx, self.value(p + "wo"), self.value(p + "bo"))
        return out, {"h": h, "q": q, "k": k, "v": v, "attn": attn, "ctx": ctx}

    def _attention_backward(self, g: np.ndarray, c: dict, p: str) -> np.ndarray:
        bsz, m, d = g.shape
        nh, hd = self.config.heads, self.head_dim
        P = self.params
        dctx, dwo, dbo = nx.dense_backward(g, c["ctx"], self.value(p + "wo"))
        P[p + "wo"].grad += dwo
        P[p + "bo"].grad += dbo
        dctx = dctx.reshape(bsz, m, nh, hd).transpose(0, 2, 1, 3)
        dattn = dctx @ c["v"].transpose(0, 1, 3, 2)
        dv = c["attn"].transpose(0, 1, 3, 2) @ dctx
        dscores = nx.softmax_rows_backward(c["attn"], dattn) / math.sqrt(hd)
        dq = dscores @ c["k"]
        dk = dscores.transpose(0, 1, 3, 2) @ c["q"]
        dh = np.zeros_like(c["h"])
        for name, grad in (("q", dq), ("k", dk), ("v", dv)):
            grad = grad.transpose(0, 2, 1, 3).reshape(bsz, m, d)
            dx, dw, db = nx.dense_backward(grad, c["h"], self.value(p + "w" + name))
            P[p + "w" + name].grad += dw
            P[p + "b" + name].grad += db
            dh += dx
        return dh

    def _block_forward(self, h: np.ndarray, b: int, rng: np.random.Generator | None):
        p = f"block{b}."
        rate = self.config.dropout if rng is not None else 0.0
        attn_out, attn_cache = self._attention(h, p)
        mask1 = nx.dropout_mask(attn_out.shape, rate, rng) if rate else None
        if mask1 is not None:
            attn_out = attn_out * mask1
        h1, ln1 = nx.layer_norm(h + attn_out, self.value(p + "ln1.gain"), self.value(p + "ln1.bias"))
        pre = nx.dense(h1, self.value(p + "ff1.w"), self.value(p + "ff1.b"))
        act = nx.relu(pre)
        ff_out = nx.dense(act, self.value(p + "ff2.w"), self.value(p + "ff2.b"))
        mask2 = nx.dropout_mask(ff_out.shape, rate, rng) if rate else None
        if mask2 is not None:
            ff_out = ff_out * mask2
        h2, ln2 = nx.layer_norm(h1 + ff_out, self.value(p + "ln2.gain"), self.value(p + "ln2.bias"))
        cache = {"attn": attn_cache, "mask1": mask1, "ln1": ln1, "h1": h1, "pre": pre, "act": act, "mask2": mask2, "ln2": ln2}
        return h2, cache

    def _block_backward(self, g: np.ndarray, c: dict, b: int) -> np.ndarray:
        p = f"block{b}."
        P = self.params
        ds, dg, db = nx.layer_norm_backward(g, c["ln2"])
        P[p + "ln2.gain"].grad += dg
        P[p + "ln2.bias"].grad += db
        dff = ds if c["mask2"] is None else ds * c["mask2"]
        dact, dw, dbias = nx.dense_backward(dff, c["act"], self.value(p + "ff2.w"))
        P[p + "ff2.w"].grad += dw
        P[p + "ff2.b"].grad += dbias
        dpre = nx.relu_backward(dact, c["pre"])
        dh1, dw, dbias = nx.dense_backward(dpre, c["h1"], self.value(p + "ff1.w"))
        P[p + "ff1.w"].grad += dw
        P[p + "ff1.b"].grad += dbias
        dh1 = dh1 + ds
        ds1, dg, db = nx.layer_norm_backward(dh1, c["ln1"])
        P[p + "ln1.gain"].grad += dg
        P[p + "ln1.bias"].grad += db
        dattn = ds1 if c["mask1"] is None else ds1 * c["mask1"]
        return ds1 + self._attention_backward(dattn, c["attn"], p)

    def encode(self, tokens: np.ndarray, train_mode: bool = False, rng: np.random.Generator | None = None,
               return_attention: bool = False):
        """Run the encoder stack over ``(batch, m, d)`` tokens."""
        single = tokens.ndim == 2
        h = tokens[None] if single else tokens
        attn = []
        for b in range(self.config.blocks):
            h, cache = self._block_forward(h, b, rng if train_mode else None)
            attn.append(cache["attn"]["attn"])
        h = h[0] if single else h
        return (h, attn) if return_attention else h

    def _cont(self, x_cont: np.ndarray):
        x = np.asarray(x_cont, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.n_cont:
            raise ValueError(f"expected {self.n_cont} continuous features, got {x.shape[1]}")
        if self.config.cont_layer_norm and self.n_cont > 1:
            return nx.layer_norm(x, 1.0, 0.0)[0]
        return x

    def _forward(self, codes, x_cont, train_mode: bool, rng: np.random.Generator | None):
        codes = self._check_codes(codes)
        tokens = self.embed_columns(codes)
        caches = []
        h = tokens
        for b in range(self.config.blocks):
            h, cache = self._block_forward(h, b, rng if train_mode else None)
            caches.append(cache)
        feats = np.concatenate([h.reshape(h.shape[0], -1), self._cont(x_cont)], axis=1)
        z = feats
        head = []
        for j in range(len(self.hidden_widths)):
            pre = nx.dense(z, self.value(f"head{j}.w"), self.value(f"head{j}.b"))
            act = nx.relu(pre)
            mask = nx.dropout_mask(act.shape, self.config.dropout, rng) if (train_mode and self.config.dropout) else None
            out = act if mask is None else act * mask
            head.append({"x": z, "pre": pre, "mask": mask})
            z = out
        logits = nx.dense(z, self.value("out.w"), self.value("out.b"))
        return logits, {"codes": codes, "blocks": caches, "head": head, "z": z, "feats": feats}

    def extract_features(self, codes, x_cont) -> np.ndarray:
        """Evaluation-mode feature vectors, shape ``(batch, d * m + c)``."""
        single = np.asarray(codes).ndim == 1
        codes = self._check_codes(codes)
        h = self.encode(self.embed_columns(codes))
        feats = np.concatenate([h.reshape(h.shape[0], -1), self._cont(x_cont)], axis=1)
        return feats[0] if single else feats

    def forward_logits(self, codes, x_cont, train_mode: bool = False, rng: np.random.Generator | None = None):
        single = np.asarray(codes).ndim == 1
        logits = self._forward(codes, x_cont, train_mode, rng)[0]
        return logits[0] if single else logits

    def predict_proba(self, codes, x_cont) -> np.ndarray:
        return nx.softmax_rows(self.forward_logits(codes, x_cont))

    # -------------------------------------------------------------- backward

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def loss_and_grad(self, codes, x_cont, labels, sample_weights=None, train_mode: bool = False,
                      rng: np.random.Generator | None = None) -> float:
        """Cross-entropy of a batch; accumulates gradients into every parameter."""
        logits, c = self._forward(codes, x_cont, train_mode, rng)
        loss, dlogits = nx.cross_entropy(logits, labels, sample_weights)
        P = self.params
        dz, dw, db = nx.dense_backward(dlogits, c["z"], self.value("out.w"))
        P["out.w"].grad += dw
        P["out.b"].grad += db
        for j in reversed(range(len(self.hidden_widths))):
            hc = c["head"][j]
            dact = dz if hc["mask"] is None else dz * hc["mask"]
            dpre = nx.relu_backward(dact, hc["pre"])
            dz, dw, db = nx.dense_backward(dpre, hc["x"], self.value(f"head{j}.w"))
            P[f"head{j}.w"].grad += dw
            P[f"head{j}.b"].grad += db
        bsz = dz.shape[0]
        dh = dz[:, : self.m * self.d].reshape(bsz, self.m, self.d)
        for b in reversed(range(self.config.blocks)):
            dh = self._block_backward(dh, c["blocks"][b], b)
        l = self.config.shared_dim
        codes = c["codes"]
        for i in range(self.m):
            P[f"emb{i}.shared"].grad += dh[:, i, :l].sum(axis=0)
            np.add.at(P[f"emb{i}.classes"].grad, codes[:, i], dh[:, i, l:])
        return loss

    # -------------------------------------------------------------- training

    def fit(self, codes, x_cont, labels, sample_weights=None) -> list[float]:
        """Mini-batch Adam on cross-entropy; returns the per-epoch mean loss."""
        cfg = self.config
        codes = self._check_codes(codes)
        x_cont = np.asarray(x_cont, dtype=np.float64).reshape(len(codes), self.n_cont)
        labels = np.asarray(labels, dtype=np.int64)
        n = len(labels)
        if n == 0:
            raise ValueError("cannot train on an empty set")
        weights = None
        if sample_weights is not None and cfg.use_sample_weights:
            weights = np.asarray(sample_weights, dtype=np.float64)
        state = nx.AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay, decoupled=cfg.decoupled_weight_decay)
        shuffle_rng = derive_rng(cfg.seed, "tabtransformer", "shuffle")
        dropout_rng = derive_rng(cfg.seed, "tabtransformer", "dropout")
        self.zero_grad()
        curve = []
        for epoch in range(cfg.epochs):
            order = shuffle_rng.permutation(n)
            total = 0.0
            for batch_no, start in enumerate(range(0, n, cfg.batch_size)):
                idx = order[start : start + cfg.batch_size]
                w = None if weights is None else weights[idx]
                loss = self.loss_and_grad(codes[idx], x_cont[idx], labels[idx], w, True, dropout_rng)
                if not math.isfinite(loss):
                    raise nx.NumericError(f"non-finite loss at epoch {epoch}, batch {batch_no}")
                nx.adam_step(self.params, state)
                total += loss * len(idx)
            curve.append(total / n)
        return curve

    # ---------------------------------------------------------- persistence

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "cardinalities": self.cardinalities,
            "n_cont": self.n_cont,
            "params": {
                k: {"shape": list(p.value.shape), "values": p.value.ravel().tolist()} for k, p in self.params.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TabTransformer":
        model = cls(d["cardinalities"], d["n_cont"], TrainConfig.from_dict(d["config"]))
        for k, spec in d["params"].items():
            model.params[k] = nx.Param(np.asarray(spec["values"], dtype=np.float64).reshape(spec["shape"]))
        return model


# --------------------------------------------------------------------------
# dataset-level helpers
# --------------------------------------------------------------------------


def build_model(ds: Dataset, config: TrainConfig | None = None) -> TabTransformer:
    return TabTransformer(ds.cardinalities, len(ds.numeric_names), config)


def train(model: TabTransformer, ds: Dataset) -> list[float]:
    """Fit ``model`` on a (scaled) dataset; returns the loss curve."""
    return model.fit(ds.categorical_data, ds.numeric_data, ds.labels, ds.weights)


def extract_features(model: TabTransformer, ds: Dataset) -> np.ndarray:
    return model.extract_features(ds.categorical_data, ds.numeric_data)


def feature_names(model: TabTransformer) -> list[str]:
    """Extracted features are named by their index in the vector."""
    return [f"feature_{i}" for i in range(model.feature_width)]


def encoder_forward(model: TabTransformer, tokens: np.ndarray, train_mode: bool = False, rng=None) -> np.ndarray:
    return model.encode(tokens, train_mode, rng)
