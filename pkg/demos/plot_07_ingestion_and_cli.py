"""
Loading real tables and running the command line
================================================

Schemas describe the target, the sensitive attributes and their
discretization. Four are bundled; the sample fixtures under ``tests/`` have
the same layout as the public datasets.
"""

import tempfile
from pathlib import Path

from mwld import load_csv, load_schema
from mwld.cli import run

fixtures = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
for name in ("candc", "income", "german", "compas5"):
    schema = load_schema(name)
    data = load_csv(fixtures / f"{name}.csv", schema)
    print(f"{name:8s} rows={data.n} features={data.features.shape[1]} T={data.T} (schema predicts {schema.predicted_T})")

# %%
# The same pipeline from the command line: train, then audit.
with tempfile.TemporaryDirectory() as tmp:
    data = str(fixtures / "income.csv")
    run(["train", "--data", data, "--schema", "income", "--objective", "lv", "--lambda", "0.4",
         "--epochs", "5", "--seed", "7", "--out", f"{tmp}/model"])
    run(["audit", "--data", data, "--schema", "income", "--model", f"{tmp}/model/model.weights.json",
         "--ks", "0.1,0.5,1", "--seed", "7", "--out", f"{tmp}/audit"])
    run(["report", "--in", f"{tmp}/audit/report.json"])
