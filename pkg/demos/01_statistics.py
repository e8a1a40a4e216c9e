"""Demo 1 - screening a clinical table before any modelling.

We build a synthetic heart-disease-shaped table, drop gross outliers with a
z-score filter, and run the per-feature association screen: chi-square for
categorical and binary columns, Student's t for numeric columns that look
normal within each class, and the Wilcoxon rank-sum test otherwise.

Run:  python demos/01_statistics.py
"""

import numpy as np

from tabrisk.fixture import fixture_dataset
from tabrisk.stats import association_table, association_text, chi_square, normality, rank_sum, t_test
from tabrisk.data import zscore_filter

# --- the data --------------------------------------------------------------
# 1190 rows with the eleven clinical columns and a binary HeartDisease label.
ds = fixture_dataset(1190, seed=0)
print(f"{ds.n_rows} rows, {ds.labels.sum()} with heart disease")
print("numeric:", ds.numeric_names)
print("categorical:", ds.categorical_names)

# --- outliers ----------------------------------------------------------------
# A row is removed when any numeric column is more than tau standard
# deviations from the column mean.  Binary-valued and constant columns are
# skipped automatically.
filtered, report = zscore_filter(ds, tau=3.0)
print(f"\nz-score filter (tau=3): {report.n_in} -> {report.n_out} rows")
for rid, cols in list(zip(report.removed_row_ids, report.offending_columns))[:5]:
    print(f"  row {rid}: {', '.join(cols)}")

# --- the three tests on their own --------------------------------------------
# A 2x2 table of sex against outcome: rows are levels, columns are classes.
print("\nchi-square on [[548, 67], [349, 209]]:", round(chi_square([[548, 67], [349, 209]]).statistic, 3))
# Two small samples: the t statistic is mean(b) - mean(a) over the pooled standard error.
print("t([1,2,3,4], [3,4,5,6]) =", round(t_test([1, 2, 3, 4], [3, 4, 5, 6]).statistic, 4))
# The rank-sum z uses mid-ranks and a tie-corrected variance, without continuity correction.
print("rank-sum z([1,2], [3,4]) =", round(rank_sum([1, 2], [3, 4]).statistic, 4))
# Normality decides between t and rank-sum; uniform noise is clearly not normal at n=1000.
rng = np.random.default_rng(0)
print("normality p, gaussian:", round(normality(rng.normal(size=1000)).p_value, 3),
      " uniform:", f"{normality(rng.uniform(size=1000)).p_value:.1e}")

# --- the full screen ------------------------------------------------------------
rows = association_table(filtered)
print()
print(association_text(rows, filtered))
