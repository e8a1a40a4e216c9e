"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL/SKIP line.

The lines are printed as each test finishes (visible with ``pytest -s``) and
collected into an "acceptance criteria" section of the terminal summary.

Criterion 8 needs the real 1190-row heart-disease CSV, which is not shipped;
point ``TABRISK_HEART_CSV`` at it to run that criterion (about 12 minutes per
seed, three seeds).
"""

from __future__ import annotations

import functools
import itertools
import json
import math
import os
import time
from pathlib import Path

import mpmath
import numpy as np
import pytest

from tabrisk.data import SmoteConfig, smote, stratified_split
from tabrisk.eval import FeatureSpec, LeakageGuard, evaluate_folds, f1_from, prepare_folds, roc_auc
from tabrisk.classical import ClassifierSpec
from tabrisk.fixture import write_fixture
from tabrisk.nomogram import fit_nomogram, linear_probability, probability_of_score, score
from tabrisk.pipeline import PipelineConfig, run_pipeline
from tabrisk.stats import chi2_sf, chi_square, midranks, rank_sum, t_two_sided_p
from tabrisk.tabtransformer import TabTransformer, TrainConfig, encoder_forward

from conftest import ACCEPTANCE, central_difference, rel_error
from test_pipeline import small_config

HEART_CSV = os.environ.get("TABRISK_HEART_CSV")


def criterion(number: int, title: str):
    """Record PASS/FAIL/SKIP for the decorated test; the test returns a detail string."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            def emit(status, detail):
                ACCEPTANCE[number] = (status, title, detail)
                print(f"\ncriterion {number:>2} {status:<4} {title}: {detail}", flush=True)

            try:
                detail = fn(*args, **kwargs)
            except pytest.skip.Exception as exc:
                emit("SKIP", str(exc))
                raise
            except AssertionError as exc:
                emit("FAIL", str(exc).splitlines()[0] if str(exc) else "assertion failed")
                raise
            except Exception as exc:
                emit("FAIL", f"{type(exc).__name__}: {exc}")
                raise
            emit("PASS", detail or "")

        return run

    return wrap


# ------------------------------------------------------------------------- 1


@criterion(1, "chi-square reproduction")
def test_criterion_01_chi_square():
    cases = [([[548, 67], [349, 209]], 114.707, 0.05), ([[182, 433], [67, 491]], 54.11, 0.05),
             ([[451, 164], [121, 437]], 312.36, 0.5)]
    t0 = time.perf_counter()
    got = [chi_square(table).statistic for table, _, _ in cases]
    elapsed = time.perf_counter() - t0
    for value, (_, expected, tol) in zip(got, cases):
        assert abs(value - expected) <= tol, f"chi-square {value:.4f} vs {expected} +- {tol}"
    assert elapsed < 0.1
    return ", ".join(f"{v:.3f}" for v in got) + f" in {1e3 * elapsed:.2f} ms"


# ------------------------------------------------------------------------- 2


@criterion(2, "SMOTE count reproduction")
def test_criterion_02_smote_counts():
    rng = np.random.default_rng(0)
    y = np.array([1] * 503 + [0] * 449)
    x = rng.normal(size=(952, 10)) + y[:, None]
    xb, yb = smote(x, y, SmoteConfig(5, seed=0))
    pos, neg = int((yb == 1).sum()), int((yb == 0).sum())
    assert (pos, neg, len(yb)) == (503, 503, 1006), f"got ({pos}, {neg}, {len(yb)})"
    np.testing.assert_array_equal(xb[:952], x)
    return f"(503, 449) -> ({pos}, {neg}), total {len(yb)}"


# ------------------------------------------------------------------------- 3


@criterion(3, "F1 metric identity")
def test_criterion_03_f1():
    f1 = 100 * f1_from(0.9277, 0.9625)
    assert abs(f1 - 94.48) <= 0.02, f"F1 = {f1:.4f}%"
    return f"F1 = {f1:.4f}%"


# ------------------------------------------------------------------------- 4


@criterion(4, "transformer gradient suite")
def test_criterion_04_gradients():
    t0 = time.perf_counter()
    model = TabTransformer([3, 3], 3, TrainConfig(d=4, heads=2, blocks=2, dropout=0.0, seed=11))
    rng = np.random.default_rng(11)
    for p in model.params.values():
        p.value += rng.normal(0, 0.1, size=p.value.shape)
    codes = rng.integers(0, 4, size=(4, 2))
    x = rng.normal(size=(4, 3))
    y = np.array([0, 1, 1, 0])
    model.zero_grad()
    model.loss_and_grad(codes, x, y)
    analytic = {k: p.grad.copy() for k, p in model.params.items()}
    worst, worst_name = 0.0, ""
    for name, p in model.params.items():
        numeric = central_difference(lambda: model.loss_and_grad(codes, x, y), p.value)
        if np.max(np.abs(analytic[name])) < 1e-10 and np.max(np.abs(numeric)) < 1e-10:
            continue
        err = rel_error(analytic[name], numeric)
        if err > worst:
            worst, worst_name = err, name
    elapsed = time.perf_counter() - t0
    groups = {"emb", "wq", "wk", "wv", "wo", "ln1", "ln2", "ff1", "ff2", "head", "out"}
    assert all(any(g in n for n in model.params) for g in groups)
    assert worst < 1e-4, f"{worst_name}: relative error {worst:.2e}"
    assert elapsed < 30.0, f"took {elapsed:.1f} s"
    return f"{len(model.params)} tensors, worst relative error {worst:.2e} ({worst_name}), {elapsed:.1f} s"


# ------------------------------------------------------------------------- 5


@criterion(5, "encoder permutation equivariance")
def test_criterion_05_permutation():
    rng = np.random.default_rng(5)
    worst = 0.0
    for seed in range(5):
        model = TabTransformer([3] * 7, 4, TrainConfig(seed=seed))
        for _ in range(20):
            h = rng.normal(size=(7, model.d))
            perm = rng.permutation(7)
            worst = max(worst, float(np.max(np.abs(encoder_forward(model, h[perm]) - encoder_forward(model, h)[perm]))))
    assert worst < 1e-9, f"max deviation {worst:.2e}"
    return f"100 random inputs, max |f(PH) - P f(H)| = {worst:.2e}"


# ------------------------------------------------------------------------- 6


def _concordance(scores, y):
    pos, neg = scores[y == 1], scores[y == 0]
    return float(np.mean([1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg)]))


@criterion(6, "AUC oracle equivalence")
def test_criterion_06_auc():
    rng = np.random.default_rng(6)
    worst, done = 0.0, 0
    while done < 200:
        n = int(rng.integers(2, 60))
        y = rng.integers(0, 2, n)
        if y.min() == y.max():
            continue
        scores = rng.integers(0, 10, n) / 10 if done % 2 else rng.normal(size=n)
        worst = max(worst, abs(roc_auc(scores, y)[0] - _concordance(scores, y)))
        done += 1
    assert worst <= 1e-12, f"max difference {worst:.2e}"
    return f"200 instances, max |trapezoid - concordance| = {worst:.1e}"


# ------------------------------------------------------------------------- 7


@criterion(7, "statistical-test oracles")
def test_criterion_07_stat_oracles():
    mpmath.mp.dps = 40
    rng = np.random.default_rng(7)
    worst_z = 0.0
    for _ in range(300):
        n1 = int(rng.integers(1, 8))
        n2 = int(rng.integers(1, 9 - n1))
        a, b = rng.integers(0, 5, n1).astype(float), rng.integers(0, 5, n2).astype(float)
        ranks = midranks(np.concatenate([a, b]))
        sums = [ranks[list(c)].sum() for c in itertools.combinations(range(n1 + n2), n1)]
        mean, var = float(np.mean(sums)), float(np.var(sums))
        z = rank_sum(a, b).statistic
        oracle = 0.0 if var <= 1e-12 else (ranks[:n1].sum() - mean) / math.sqrt(var)
        worst_z = max(worst_z, abs(z - oracle))
    worst_p = 0.0
    for df in (1, 2, 3, 5, 10, 30):
        for x in (0.01, 0.5, 1.0, 3.84, 10.0, 50.0):
            oracle = float(mpmath.gammainc(mpmath.mpf(df) / 2, mpmath.mpf(x) / 2, mpmath.inf, regularized=True))
            worst_p = max(worst_p, abs(chi2_sf(x, df) - oracle))
    for df in (1, 2, 5, 10, 100, 1000):
        for t in (-8.0, -2.5, -0.3, 0.0, 1.0, 2.1909, 9.42):
            dens = lambda u: (1 + u * u / df) ** (-(df + 1) / 2)  # noqa: E731
            norm = mpmath.gamma(mpmath.mpf(df + 1) / 2) / (mpmath.sqrt(df * mpmath.pi) * mpmath.gamma(mpmath.mpf(df) / 2))
            oracle = float(2 * norm * mpmath.quad(dens, [abs(t), mpmath.inf]))
            worst_p = max(worst_p, abs(t_two_sided_p(t, df) - oracle))
    assert worst_z < 1e-12, f"rank-sum z deviates by {worst_z:.2e}"
    assert worst_p < 1e-8, f"p-value deviates by {worst_p:.2e}"
    return f"rank-sum max |dz| = {worst_z:.1e} over 300 samples; t/chi2 max |dp| = {worst_p:.1e} over 78 grid points"


# ------------------------------------------------------------------------- 8


@pytest.mark.slow
@criterion(8, "end-to-end reproduction band")
def test_criterion_08_end_to_end(tmp_path):
    if not HEART_CSV:
        pytest.skip("TABRISK_HEART_CSV is not set; the real heart-disease CSV is not distributed")
    lines = []
    for seed in (0, 1, 2):
        cfg = PipelineConfig.from_dict({"data": HEART_CSV, "output_dir": str(tmp_path / f"seed{seed}"), "seed": seed})
        t0 = time.perf_counter()
        run_pipeline(cfg)
        elapsed = time.perf_counter() - t0
        report = json.loads((Path(cfg.output_dir) / "cv_report.json").read_text())
        acc, auc = report["mean"]["accuracy"], report["mean"]["auc"]
        heads = [f["head_accuracy"] for f in report["folds"]]
        lines.append(f"seed {seed}: acc {acc:.4f} auc {auc:.4f} head min {min(heads):.4f} {elapsed / 60:.1f} min")
        assert 0.90 <= acc <= 0.97, lines[-1]
        assert auc >= 0.92, lines[-1]
        assert min(heads) >= 0.85, lines[-1]
        assert elapsed < 15 * 60, lines[-1]
    return "; ".join(lines)


# ------------------------------------------------------------------------- 9


@criterion(9, "leakage guard")
def test_criterion_09_leakage(tmp_path):
    data = write_fixture(tmp_path / "heart.csv", 300, seed=9)
    guard = LeakageGuard()
    run_pipeline(small_config(data, tmp_path / "run"), guard)
    n_events = len(guard.records)
    assert n_events > 0 and guard.clean, f"{len(guard.violations)} violation(s)"
    # the instrument itself: global-fit mode ("paper") fits preprocessing on all rows and must be caught
    probe = LeakageGuard()
    from tabrisk.fixture import fixture_dataset

    ds = fixture_dataset(150, seed=9)
    plan, _ = stratified_split(ds, 3, seed=9)
    folds = prepare_folds(FeatureSpec(transformer=TrainConfig(epochs=1), top_n=5, mode="paper"), ds, plan, probe)
    evaluate_folds(ClassifierSpec("lda"), folds, probe)
    assert not probe.clean
    return f"strict run: {n_events} logged fits, 0 violations (control: global-fit mode flagged {len(probe.violations)})"


# ------------------------------------------------------------------------ 10


@criterion(10, "nomogram exactness")
def test_criterion_10_nomogram():
    rng = np.random.default_rng(10)
    x = rng.normal(size=(500, 5)) * [1, 2, 3, 0.5, 4]
    y = (rng.random(500) < 1 / (1 + np.exp(-(x @ [0.8, -0.4, 0.2, 1.0, -0.1])))).astype(int)
    spec = fit_nomogram(x, y)
    probe = np.column_stack([rng.uniform(f.lo, f.hi, 1000) for f in spec.features])
    err = float(np.max(np.abs(probability_of_score(spec, score(spec, probe).total) - linear_probability(spec, probe))))
    dup = fit_nomogram(np.column_stack([x, x[:, 2]]), y)
    n_collinear = sum(e.reason == "collinear" for e in dup.excluded)
    assert err < 1e-9, f"max deviation {err:.2e}"
    assert n_collinear == 1, f"{n_collinear} collinear exclusions"
    return f"max |p(score) - sigmoid(b0 + b.x)| = {err:.1e} on 1000 points; duplicated column -> 1 exclusion"


# ------------------------------------------------------------------------ 11


@criterion(11, "reproducibility")
def test_criterion_11_reproducibility(tmp_path):
    data = write_fixture(tmp_path / "heart.csv", 300, seed=11)
    outs = []
    for name in ("a", "b"):
        run_pipeline(small_config(data, tmp_path / name))
        outs.append(tmp_path / name)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*")
                   if p.is_file() and p.name not in ("manifest.json", "config.json"))
    differing = [str(rel) for rel in files if (outs[0] / rel).read_bytes() != (outs[1] / rel).read_bytes()]
    assert not differing, f"differing files: {differing}"
    return f"{len(files)} report and model files byte-identical across two runs"
