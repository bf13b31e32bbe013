"""lifshitslab: a numerical laboratory for random Schrodinger operators
with anisotropically decaying impurity potentials.

Pipeline: sample a random point measure (measures), convolve it with an
impurity profile into a potential (impurity), discretize the operator
with Dirichlet or ground-state Robin boundary conditions (discretize),
count low eigenvalues (spectral), bracket ground-state energies and the
density of states (bounds), and estimate Lifshits-tail exponents (ids).
The cli module orchestrates reproducible experiments.
"""

from .measures import (Box, MeasureConfig, PointMeasure, WeightLaw,
                       cell_mass_array, cell_masses, empirical_intensity,
                       estimate_small_mass_prob, mixing_correlation,
                       regularize, wilson_interval)
from .impurity import (AnisotropyProfile, ImpurityPotential, PotentialField,
                       birman_solomyak_partial_sums, cutoff_potential,
                       marginal, marginal_decay_exponent, sample_potential,
                       shifted_tail_sup, tail_mass, truncation_error_bound)
from .discretize import (DiscreteOperator, Grid, PeriodicGroundState,
                         chi_values, cosine_potential, dirichlet_assemble,
                         mezincescu_assemble, periodic_ground_state,
                         psi_on_box)
from .spectral import (CountResult, EigenResult, count_below, dense_oracle,
                       smallest_eigs)
from .bounds import (GapFit, RayleighRitzBound, TempleBound, gap_scaling,
                     half_average_bound, rayleigh_ritz_upper, temple_bound,
                     verify_sandwich)
from .ids import (IdsEstimate, LifshitsFit, RegimeReport, classify_regime,
                  estimate_ids, eta_theory, ground_state_probability,
                  lifshits_fit, regime_experiment, scaling_lengths)
from .config import (PRESETS, build_measure, build_potential, build_u_per,
                     config_hash, load_config, resolve_config,
                     validate_config)

__version__ = "0.1.0"
