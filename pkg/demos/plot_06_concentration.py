"""
How fast the estimates concentrate
==================================

Sample from an 8-atom loss distribution whose population MWLD is known
exactly and compare the plug-in estimate with the high-probability radii.
Then check the standard-deviation and coarse-variance radii with Bernoulli
losses over four sensitive cells.
"""

from mwld.audit import convergence_study, deviation_study

atoms = [(0.0, 0.18), (0.1, 0.07), (0.25, 0.15), (0.4, 0.1), (0.55, 0.12), (0.7, 0.08), (0.9, 0.2), (1.0, 0.1)]
for row in convergence_study(atoms, [1000, 10_000], ks=(0.5, 1.0), delta=0.2, trials=50, seed=6):
    print(f"n={row['n']:>6} k={row['k']}: median deviation {row['median_deviation']:.2e}, "
          f"radius {row['radius']:.3f}, violation rate {row['violation_rate']:.2f}")

# %%
out = deviation_study([0.4, 0.3, 0.2, 0.1], [0.1, 0.3, 0.5, 0.8], n=2000, delta=0.02, trials=200, seed=6)
print(f"std radius {out['maurer_radius']:.4f}: violated in {out['maurer_violation_rate']:.1%} of trials")
print(f"coarse radius {out['coarse_radius']:.4f}: violated in {out['coarse_violation_rate']:.1%} of trials")
