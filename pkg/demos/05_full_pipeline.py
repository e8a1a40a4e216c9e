"""Demo 5 - the whole pipeline from a CSV file to a directory of reports.

This is what `tabrisk run` does.  The configuration below is deliberately
small so the demo finishes in well under a minute; drop the overrides to
use the full defaults (500 transformer epochs, 100 tuning trials).

Run:  python demos/05_full_pipeline.py [output-dir]
"""

import csv
import io
import json
import sys
import tempfile
from pathlib import Path

from tabrisk.fixture import write_fixture
from tabrisk.pipeline import PipelineConfig, load_bundle, run_pipeline
from tabrisk.data import load_csv

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="tabrisk-demo-"))
data = write_fixture(out / "heart.csv", 600, seed=5)

cfg = PipelineConfig.from_dict({
    "data": str(data),
    "output_dir": str(out / "run"),
    "seed": 7,
    "transformer": {"epochs": 20, "batch_size": 128},
    "classifier_params": {k: {"n_estimators": 40} for k in
                          ("extra_trees", "random_forest", "gradient_boost", "gbt_variant_a", "gbt_variant_b",
                           "gbt_variant_c", "adaboost")},
    "tuning": {"trials": 10, "method": "tpe", "n_startup": 5},
})
manifest = run_pipeline(cfg)
print(f"status {manifest.status}; {len(manifest.artifacts)} artifacts under {cfg.output_dir}")
print("rows per stage:", {k: v for k, v in manifest.row_counts.items() if not isinstance(v, list)})

run = Path(cfg.output_dir)
print("\nleaderboard")
for row in csv.DictReader(io.StringIO((run / "leaderboard.csv").read_text())):
    print(f"  {row['rank']:>2}. {row['model']:<28} {float(row['accuracy']):.4f}")

report = json.loads((run / "cv_report.json").read_text())
print(f"\ntuned ExtraTrees, mean of {len(report['folds'])} folds: "
      f"accuracy {report['mean']['accuracy']:.4f}, AUC {report['mean']['auc']:.4f}")
print("hold-out:", json.loads((run / "holdout_report.json").read_text())["metrics"])

bundle = load_bundle(run / "models" / "bundle.json")
probs = bundle.predict_proba(load_csv(data, bundle.schema))
print(f"\nbundle scores {len(probs)} rows; first five risks {[round(float(p), 3) for p in probs[:5]]}")
