"""Demo 2 - contextual features from a tabular transformer.

Each categorical column becomes a token: a learned column-specific prefix
concatenated with a learned embedding of the category.  A stack of post-norm
self-attention blocks (no positional encoding) contextualises the tokens;
their flattened outputs, followed by the layer-normalised numeric columns,
form the feature vector handed to the classical models.

Run:  python demos/02_transformer_features.py
"""

import numpy as np

from tabrisk.data import standard_scale
from tabrisk.fixture import fixture_dataset
from tabrisk.tabtransformer import TabTransformer, TrainConfig, build_model, encoder_forward, extract_features, train

ds = fixture_dataset(600, seed=1)
_, scaled = standard_scale(ds)  # numeric columns to zero mean / unit variance

# --- the model -------------------------------------------------------------------
# d=8 per token, of which the first 4 dimensions are the shared column prefix.
cfg = TrainConfig(epochs=30, batch_size=128, seed=0)
model = build_model(scaled, cfg)
print(f"{len(model.cardinalities)} categorical tokens of width {model.d}, {model.n_cont} numeric columns")
print(f"feature width {model.feature_width} = {model.m} x {model.d} + {model.n_cont}")
print(f"classification head widths {model.hidden_widths}")

# --- training --------------------------------------------------------------------
curve = train(model, scaled)
print("\nloss per epoch (every 5th):", [round(v, 4) for v in curve[::5]])

# --- what the encoder guarantees ---------------------------------------------------
# Without positional encodings, permuting the input tokens permutes the output rows.
rng = np.random.default_rng(0)
h = rng.normal(size=(model.m, model.d))
perm = rng.permutation(model.m)
gap = np.abs(encoder_forward(model, h[perm]) - encoder_forward(model, h)[perm]).max()
print(f"\npermutation equivariance: max deviation {gap:.1e}")

codes = scaled.categorical_data[:1]
_, attn = model.encode(model.embed_columns(codes[0])[None], return_attention=True)
print("attention of block 0, head 0 (rows sum to 1):")
print(np.round(attn[0][0, 0], 3))

# --- the features ----------------------------------------------------------------------
feats = extract_features(model, scaled)
print(f"\nextracted feature matrix {feats.shape}; first row, first 6 values:", np.round(feats[0, :6], 3))

# A tiny model is cheap enough to differentiate numerically: compare with backprop.
tiny = TabTransformer([3, 3], 2, TrainConfig(d=4, heads=2, blocks=1, dropout=0.0))
c, x, y = rng.integers(0, 3, (4, 2)), rng.normal(size=(4, 2)), np.array([0, 1, 0, 1])
tiny.zero_grad()
tiny.loss_and_grad(c, x, y)
p = tiny.params["block0.wq"]
analytic = p.grad[0, 0]
old = p.value[0, 0]
p.value[0, 0] = old + 1e-5
up = tiny.loss_and_grad(c, x, y)
p.value[0, 0] = old - 1e-5
down = tiny.loss_and_grad(c, x, y)
p.value[0, 0] = old
print(f"d loss / d wq[0,0]: backprop {analytic:.8f}, central difference {(up - down) / 2e-5:.8f}")
