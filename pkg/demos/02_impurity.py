"""Anisotropic impurity profiles: marginals, tails, convergence diagnostic.

Run:  python demos/02_impurity.py
"""

import math

import numpy as np

from lifshitslab.impurity import (AnisotropyProfile, ImpurityPotential,
                                  birman_solomyak_partial_sums, marginal,
                                  marginal_decay_exponent, tail_mass)

# f(x) = f0 / (1 + |x_1|^alpha_1 + |x_2|^alpha_2) with per-block max
# norms; alpha_k = inf means a hard wall at |x_k| = 1.
prof = AnisotropyProfile(dims=(1, 1), alphas=(3.0, 4.0))
p = ImpurityPotential(prof)
print(f"gammas={prof.gammas} gamma={prof.gamma:.4f}")
print(f"f(0)={p(np.zeros(2)):.4f}  f(2, 1)={p(np.array([2.0, 1.0])):.4f}")
print(f"integral over R^2 = {p.integral():.6f}")

# Integrating out block 1 leaves a profile in x_2 with a slower decay
# exponent alpha_2 (1 - gamma_1); fit it numerically.
s = np.array([20.0, 40.0, 80.0, 160.0])
vals = np.array([marginal(p, 1, x) for x in s])
slope = -np.polyfit(np.log(s), np.log(vals), 1)[0]
print(f"\nmarginal decay: fitted {slope:.4f} vs "
      f"theory {marginal_decay_exponent(prof, 1):.4f}")

# Tail mass beyond |x_2| > L decays with exponent alpha_2 (1 - gamma).
L = np.array([10.0, 20.0, 40.0])
tails = np.array([tail_mass(p, 1, x) for x in L])
slope = -np.polyfit(np.log(L), np.log(tails), 1)[0]
print(f"tail mass decay: fitted {slope:.4f} vs "
      f"theory {prof.alphas[1] * (1 - prof.gamma):.4f}")

# Partial sums of sup-over-cell f^power: the shell-increment slope tells
# convergent (< -1) from divergent tails.
for alphas, power in [((4.0,), 2.0), ((0.9,), 1.0)]:
    q = ImpurityPotential(AnisotropyProfile((1,), alphas, strict=False))
    out = birman_solomyak_partial_sums(q, power, [2, 4, 6, 8])
    print(f"alpha={alphas[0]} power={power}: slope={out['increment_slope']:.3f} "
          f"-> {out['diagnostic']}")

# The hard-wall convention.
wall = ImpurityPotential(AnisotropyProfile((1, 1), (math.inf, 2.0)))
print(f"\nhard wall: f(0.5, 1) = {wall(np.array([0.5, 1.0])):.3f}, "
      f"f(1.5, 0) = {wall(np.array([1.5, 0.0])):.3f}")
