"""
Trading accuracy for equal losses
=================================

Adding lambda times the label-conditioned loss variance (LV) or the coarse
loss variance over sensitive cells (CLV) to the logistic loss shrinks the
penalty quickly while the mean loss grows slowly.
"""

from mwld import CLV_LAMBDA_GRID, LAMBDA_GRID, Objective, TrainConfig, split_train_test, synth_two_group
from mwld.audit import tradeoff_report

train, test = split_train_test(synth_two_group(5000, noise_gap=0.3, seed=0), 0.3, 0)
report = tradeoff_report(train, test, TrainConfig(Objective.LV), LAMBDA_GRID, CLV_LAMBDA_GRID)

for name, penalty in (("lv", "conditional_lv"), ("clv", "conditional_clv")):
    base = report[name][0]
    print(f"\n{name.upper()} sweep")
    for row in report[name]:
        print(f"  lambda={row['lambda']:<4g} loss {row['test_loss']:.4f} ({row['test_loss'] / base['test_loss'] - 1:+.1%})"
              f"  {penalty} {row[penalty]:.4f} (x{row[penalty] / base[penalty]:.2f})"
              f"  group MWLD {row['explicit_group_mwld']:.4f}")
