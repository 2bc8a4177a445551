"""
Loss under demographic shift
============================

Reweighting the population so that a group's share grows from ``E[g]`` to
``E[g]^k`` raises the expected loss by at most MWLD(w^k). Random groups
never break the certificate.
"""

import numpy as np

from mwld import empirical_mwld, shifted_population_loss
from mwld.audit import shift_check_losses

rng = np.random.default_rng(4)
losses = rng.gamma(2.0, 0.2, size=2000).clip(0, 1)

# %%
# One group: the 5% of people with the largest losses.
members = losses >= np.quantile(losses, 0.95)
for k in (0.5, 1.0):
    shifted = shifted_population_loss(losses, members, members.mean() ** k)
    print(f"k={k}: shifted loss {shifted:.4f} <= {losses.mean():.4f} + {empirical_mwld(losses, k).value:.4f}")

# %%
# Many random groups.
for k in (0.1, 0.5, 1.0):
    out = shift_check_losses(losses, k, trials=2000, seed=4)
    print(f"k={k}: {out['evaluated']} groups, smallest margin {out['min_margin']:.4f}")
