"""Density-of-states estimation and the Lifshits exponent fit.

Run:  python demos/05_ids_fit.py        (about half a minute)
"""

import numpy as np

from lifshitslab.ids import (classify_regime, estimate_ids, eta_theory,
                             lifshits_fit, scaling_lengths)
from lifshitslab.impurity import AnisotropyProfile, ImpurityPotential
from lifshitslab.measures import Box, MeasureConfig

prof = AnisotropyProfile((1, 1), (10.0, 10.0))
report = classify_regime(prof)
print(f"profile alpha={prof.alphas}: regime={report.tag}, "
      f"eta_theory={eta_theory(prof):.4f}")
print(f"length scales at E=0.01: {scaling_lengths(prof, 0.01)}")

# Per-volume eigenvalue counts over a geometric energy schedule.
p = ImpurityPotential(prof, f0=1.0)
measure = MeasureConfig("poisson", 0.3)
energies = [0.35 * 1.2 ** i for i in range(17)]
est = estimate_ids(measure, p, Box((0, 0), (12, 12)), energies,
                   n_realizations=60, seed=0, n_per_cell=3, truncation=3.0)
print(f"\n{'E':>8} {'N_hat':>10} {'ci':>24}")
for e, v, ci in zip(est.energies, est.values, est.ci):
    print(f"{e:8.4f} {v:10.5f}   [{ci[0]:.5f}, {ci[1]:.5f}]")

# Fit log|log N| against log E on the usable window; energies with
# N = 0, N >= 1 or a confidence interval touching 0 are censored.
fit = lifshits_fit(est.energies, est.values, est.ci)
print(f"\neta_hat = {fit.eta_hat:.3f} +/- {fit.stderr:.3f} "
      f"(r2={fit.r2:.4f}, n={fit.n_used}, window={fit.window})")
for e, reason in fit.censored:
    print(f"  censored E={e:.4f}: {reason}")

# Synthetic sanity check: an exact planted tail is recovered exactly.
E = 0.02 * 1.25 ** np.arange(16)
exact = lifshits_fit(E, np.exp(-1.0 / E))
print(f"\nsynthetic exp(-1/E): eta_hat = {exact.eta_hat:.6f}")
