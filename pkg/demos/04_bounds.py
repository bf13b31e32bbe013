"""The two-sided bound chain on random realizations.

half_average <= temple <= lambda0(robin) <= lambda0(dirichlet) <= rayleigh_ritz

Run:  python demos/04_bounds.py
"""

from lifshitslab.bounds import (half_average_bound, rayleigh_ritz_upper,
                                temple_bound)
from lifshitslab.discretize import (Grid, dirichlet_assemble,
                                    mezincescu_assemble,
                                    periodic_ground_state)
from lifshitslab.impurity import (AnisotropyProfile, ImpurityPotential,
                                  cutoff_potential, sample_potential)
from lifshitslab.measures import Box, MeasureConfig
from lifshitslab.spectral import smallest_eigs

n_per = 4
box = Box((0, 0), (8, 8))
grid = Grid(box, n_per)
psi = periodic_ground_state(0.0, n_per, dim=2)
p = ImpurityPotential(AnisotropyProfile((1, 1), (10.0, 10.0)), f0=1.0)
measure = MeasureConfig("poisson", 0.3)
mbox = Box((-3, -3), (11, 11))

print(f"{'i':>2} {'half':>9} {'temple':>9} {'robin':>9} "
      f"{'dirichlet':>9} {'rr_upper':>9}  ok")
for i in range(5):
    m = measure.sample(mbox, seed=100 + i)
    V = sample_potential(m, p, box, n_per, truncation=3.0)

    # Temple needs the potential small against the spectral gap; cap the
    # per-cell mass (quantum-regime cutoff) and shrink h until it is.
    h = 0.1
    for _ in range(30):
        Vc = cutoff_potential(m, p, box, n_per, "qm", h=h)
        tb = temple_bound(Vc, psi, grid)
        half = half_average_bound(Vc, psi, grid)
        if tb.valid and half <= tb.value:
            break
        h *= 0.5

    lam_chi = smallest_eigs(mezincescu_assemble(None, V, grid, psi), 1,
                            want_vectors=False).eigenvalues[0]
    lam_d = smallest_eigs(dirichlet_assemble(None, V, grid, psi=psi), 1,
                          want_vectors=False).eigenvalues[0]
    rr = rayleigh_ritz_upper(V, psi, grid)
    ok = half <= tb.value <= lam_chi + 1e-9 and lam_chi <= lam_d <= rr.value + 1e-9
    print(f"{i:>2} {half:9.5f} {tb.value:9.5f} {lam_chi:9.5f} "
          f"{lam_d:9.5f} {rr.value:9.5f}  {ok}")
