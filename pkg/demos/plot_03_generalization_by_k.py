"""
Which weightings generalize
===========================

Train a logistic regression on a two-group synthetic population and compare
MWLD on the training and test splits. Small ``k`` lets tiny groups dominate,
and those are exactly the groups whose discrepancy does not carry over to
new samples.
"""

import numpy as np

from mwld import TrainConfig, fit, split_train_test, synth_two_group
from mwld.audit import k_sweep, size_profile

gaps = []
for seed in range(5):
    train, test = split_train_test(synth_two_group(5000, seed=seed), 0.3, seed)
    model, _ = fit(train, TrainConfig(seed=seed))
    gaps.append([r["gap"] for r in k_sweep(model, train, test, [0.1, 0.5, 1.0])["rows"]])
for k, g in zip((0.1, 0.5, 1.0), np.mean(gaps, axis=0)):
    print(f"k={k}: mean |train - test| MWLD gap {g:.4f}")

# %%
# Largest discrepancy per group size on the test split, next to the
# MWLD(w^k) / alpha^k envelopes that bound it.
section = size_profile(model, test, sizes=[1, 15, 150, 750, 1499])
for row in section["rows"]:
    env = ", ".join(f"k={k}: {v:.3f}" for k, v in row["envelope"].items())
    print(f"alpha={row['alpha']:.4f}  max discrepancy {row['max_discrepancy']:.4f}  envelope {env}")
