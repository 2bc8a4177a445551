"""
Loss variance and coarse loss variance
======================================

The standard deviation of the loss sits between MWLD(w^1/2) and a
logarithmic envelope of it. Averaging losses within sensitive-attribute
cells first gives the coarse variant, which ignores differences inside a
cell.
"""

import math

import numpy as np

from mwld import (
    coarse_loss_variance,
    empirical_mwld,
    loss_variance,
    sandwich,
)

# %%
# Eight people; the four wearing hats are misclassified. Hats are spread
# evenly over the color x height cells.
hats = np.array([1, 0, 1, 0, 1, 0, 1, 0], dtype=float)
cells = [("red", "tall"), ("red", "tall"), ("red", "short"), ("red", "short"),
         ("blue", "tall"), ("blue", "tall"), ("blue", "short"), ("blue", "short")]
print("sqrt Var[loss]      =", math.sqrt(loss_variance(hats)))
print("Var[E[loss | cell]] =", coarse_loss_variance(hats, cells))

# %%
# The sandwich on random losses in [0, 1].
rng = np.random.default_rng(1)
for _ in range(3):
    values = rng.random(500) ** rng.uniform(0.3, 3)
    s = sandwich(empirical_mwld(values, 0.5).value, math.sqrt(loss_variance(values)))
    print(f"{s.mwld_half:.4f} <= {s.sqrt_variance:.4f} <= {s.upper_envelope:.4f}  holds={s.holds()}")
