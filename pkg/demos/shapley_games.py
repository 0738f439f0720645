"""
Shapley values of a small cooperative game
==========================================

Three players, a hand-written value table, and two ways of splitting
the payout: the exact enumeration and KernelSHAP's weighted least squares.
"""

import numpy as np

from heatlens.explain import exact_shapley, kernel_shap_values

# v(S) for every coalition, keyed by the bitmask of present players
table = np.array([0.0, 1.0, 2.0, 4.0, 0.0, 1.0, 2.0, 5.0])
weights = 1 << np.arange(3)


def value(z):
    z = np.asarray(z)
    return table[z @ weights]


phi = exact_shapley(value, 3)
print("exact Shapley values:", phi)
print("they add up to v(N) - v(empty):", phi.sum(), "=", table[-1] - table[0])

# With all 2^M - 2 proper coalitions, KernelSHAP solves the same problem exactly.
kphi, base, exact = kernel_shap_values(value, 3, 6)
print("KernelSHAP (full enumeration):", kphi, "exact:", exact)

# A bigger game forces sampling. Efficiency still holds by construction. Uniform
# draws from {0,1}^M mostly land on mid-sized coalitions, which the Shapley kernel
# barely weights, so the error shrinks slowly with the budget.
rng = np.random.default_rng(0)
m = 14
w = rng.uniform(0, 1, m)


def smooth(z):
    return np.sqrt(np.asarray(z) @ w)


reference = exact_shapley(smooth, m)
for budget in (200, 2000, 8000):
    sampled, base, exact = kernel_shap_values(smooth, m, budget, seed=1)
    print(f"M={m}, {budget:5d} coalitions: max error {np.max(np.abs(sampled - reference)):.4f}, "
          f"efficiency gap {abs(base + sampled.sum() - smooth(np.ones(m))):.1e}")
