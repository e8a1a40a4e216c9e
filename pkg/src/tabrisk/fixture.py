"""Synthetic heart-disease-shaped table for tests, demos and smoke runs.

The generator draws the label first and then every feature from a
class-conditional distribution, with proportions loosely modelled on public
summaries of the combined Cleveland/Hungary/Switzerland/Long Beach/Statlog
table.  It is *not* the real data: results on it say nothing about clinical
performance, only that the pipeline runs end to end.
"""

from __future__ import annotations

import csv
import tempfile
from pathlib import Path

import numpy as np

from .data import Dataset, heart_schema, load_csv
from .rng import derive_rng

HEADER = [
    "Age", "Sex", "ChestPainType", "RestingBP", "Cholesterol", "FastingBS",
    "RestingECG", "MaxHR", "ExerciseAngina", "Oldpeak", "ST_Slope", "HeartDisease",
]

# (levels, P(level | no disease), P(level | disease))
_CATEGORICAL = {
    "Sex": (("M", "F"), (0.65, 0.35), (0.90, 0.10)),
    "ChestPainType": (("ASY", "NAP", "ATA", "TA"), (0.25, 0.33, 0.34, 0.08), (0.77, 0.14, 0.05, 0.04)),
    "RestingECG": (("Normal", "ST", "LVH"), (0.65, 0.15, 0.20), (0.56, 0.22, 0.22)),
    "ExerciseAngina": (("N", "Y"), (0.87, 0.13), (0.38, 0.62)),
    "ST_Slope": (("Up", "Flat", "Down"), (0.80, 0.17, 0.03), (0.17, 0.75, 0.08)),
}

# (mean, sd) for no disease / disease
_GAUSSIAN = {
    "Age": ((50.5, 9.5), (56.0, 9.0)),
    "RestingBP": ((130.0, 16.5), (134.0, 19.0)),
    "Cholesterol": ((238.0, 54.0), (240.0, 56.0)),
    "MaxHR": ((148.0, 23.0), (127.0, 23.0)),
}


def fixture_rows(n: int = 1190, seed: int = 0, prevalence: float = 0.53) -> list[list[str]]:
    """``n`` rows of CSV tokens (header not included)."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = derive_rng(seed, "fixture")
    y = (rng.random(n) < prevalence).astype(int)
    cols: dict[str, list[str]] = {}
    for name, (levels, p0, p1) in _CATEGORICAL.items():
        draw0 = rng.choice(len(levels), size=n, p=p0)
        draw1 = rng.choice(len(levels), size=n, p=p1)
        cols[name] = [levels[i] for i in np.where(y == 1, draw1, draw0)]
    for name, ((m0, s0), (m1, s1)) in _GAUSSIAN.items():
        v = np.where(y == 1, rng.normal(m1, s1, n), rng.normal(m0, s0, n))
        cols[name] = [str(int(round(x))) for x in v]
    # unrecorded cholesterol is stored as 0, mostly among positive cases
    chol_missing = rng.random(n) < np.where(y == 1, 0.12, 0.03)
    cols["Cholesterol"] = ["0" if m else c for m, c in zip(chol_missing, cols["Cholesterol"])]
    cols["FastingBS"] = [str(int(v)) for v in rng.random(n) < np.where(y == 1, 0.33, 0.11)]
    oldpeak = np.where(y == 1, np.abs(rng.normal(1.3, 1.1, n)), rng.exponential(0.4, n))
    cols["Oldpeak"] = [f"{round(v, 1):.1f}" for v in oldpeak]
    cols["HeartDisease"] = [str(v) for v in y]
    return [[cols[h][i] for h in HEADER] for i in range(n)]


def write_fixture(path: str | Path, n: int = 1190, seed: int = 0, prevalence: float = 0.53) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(HEADER)
        w.writerows(fixture_rows(n, seed, prevalence))
    return path


def fixture_dataset(n: int = 1190, seed: int = 0, prevalence: float = 0.53) -> Dataset:
    """The fixture parsed exactly as :func:`tabrisk.data.load_csv` would parse the file."""
    with tempfile.TemporaryDirectory() as tmp:
        return load_csv(write_fixture(Path(tmp) / "heart.csv", n, seed, prevalence), heart_schema())
