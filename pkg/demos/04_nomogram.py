"""Demo 4 - a points-based nomogram with calibration and decision curves.

A logistic regression on a handful of features is re-expressed as points:
each feature contributes between 0 and its maximum points, the widest
feature spans exactly 10 points, and the total maps back to the regression's
probability through one sigmoid.

Run:  python demos/04_nomogram.py
"""

import numpy as np

from tabrisk.data import encode, standard_scale
from tabrisk.fixture import fixture_dataset
from tabrisk.nomogram import (
    calibration_curve,
    decision_curve,
    fit_nomogram,
    linear_probability,
    probability_of_score,
    score,
)

ds = fixture_dataset(1000, seed=4)
_, scaled = standard_scale(ds)
x, names = encode(scaled, "onehot")
pick = ["Age", "MaxHR", "Oldpeak", "Sex=M", "ExerciseAngina=Y", "ST_Slope=Flat"]
cols = [names.index(n) for n in pick]
# A duplicated column shows the collinearity screen at work.
x_top = np.column_stack([x[:, cols], x[:, cols[1]]])
names_top = pick + ["MaxHR_copy"]

train, test = np.arange(700), np.arange(700, 1000)
spec = fit_nomogram(x_top[train], ds.labels[train], names_top)
for e in spec.excluded:
    print(f"excluded {e.name}: {e.reason} ({e.detail})")
print(f"\n{'feature':<18}{'coef':>8}{'points range':>16}")
for f in spec.features:
    print(f"{f.name:<18}{f.coef:>+8.3f}{0.0:>8.1f} - {spec.span(f):.2f}")
print(f"\nprobability = sigmoid({spec.slope:.4f} * total {spec.offset:+.4f});  p = 0.5 at total {spec.zero_total:.2f}")

# --- scoring one patient -------------------------------------------------------------
patient = x_top[test[0]]
res = score(spec, patient)
for f, pts in zip(spec.features, res.points):
    print(f"  {f.name:<18} {pts:6.2f} points")
print(f"  total {res.total:.2f} -> risk {float(probability_of_score(spec, res.total)):.3f} "
      f"(regression says {float(linear_probability(spec, patient)[0]):.3f})")

# --- calibration and decision curves on unseen rows ----------------------------------------
probs = probability_of_score(spec, score(spec, x_top[test]).total)
print("\ncalibration (bin, mean predicted, observed, count)")
for b in calibration_curve(probs, ds.labels[test]):
    if b.count:
        print(f"  [{b.lo:.1f}, {b.hi:.1f})  {b.mean_predicted:.2f}  {b.observed_rate:.2f}  {b.count}")
print("\nnet benefit at a few thresholds (model / treat all / treat none)")
for p in decision_curve(probs, ds.labels[test], thresholds=[0.1, 0.3, 0.5, 0.7, 0.9]):
    print(f"  t={p.threshold:.1f}: {p.model:+.3f} / {p.treat_all:+.3f} / {p.treat_none:+.3f}")
