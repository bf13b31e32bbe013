"""Rigorous two-sided eigenvalue bounds and the density-of-states sandwich.

One Temple implementation serves the three regime-specific lower bounds
(the regimes differ only in how the potential is cut off); the upper
bound is the Rayleigh quotient of a smoothed-indicator trial state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .discretize import (Grid, PeriodicGroundState, dirichlet_assemble,
                         mezincescu_assemble, psi_on_box)
from .measures import wilson_interval
from .spectral import count_below, smallest_eigs

__all__ = [
    "TempleBound",
    "RayleighRitzBound",
    "GapFit",
    "temple_bound",
    "half_average_bound",
    "rayleigh_ritz_upper",
    "gap_scaling",
    "verify_sandwich",
]


@dataclass(frozen=True)
class TempleBound:
    value: float
    first_moment: float
    second_moment: float
    gap: float
    valid: bool


@dataclass(frozen=True)
class RayleighRitzBound:
    value: float
    potential_term: float
    gradient_term: float


@dataclass(frozen=True)
class GapFit:
    sizes: np.ndarray
    gaps: np.ndarray
    exponent: float
    c0: float


def _psi_moments(V, psi: PeriodicGroundState, grid: Grid):
    """(<psi_L, V psi_L>, <V psi_L, V psi_L>) as grid quadratures."""
    w = psi_on_box(psi, grid) ** 2
    v = V.values.ravel() if hasattr(V, "values") else np.asarray(V, dtype=float).ravel()
    norm = w.sum()
    m1 = float((v * w).sum() / norm)
    m2 = float((v * v * w).sum() / norm)
    return m1, m2


def temple_bound(V, psi: PeriodicGroundState, grid: Grid,
                 lambda1: float = None, u_per=None) -> TempleBound:
    """Temple lower bound on lambda0(H^chi(V)) with trial state psi|_Lambda.

    lambda1 is the first excited level of the shifted V = 0 operator
    (the spectral gap); computed on the fly when not supplied.
    """
    if lambda1 is None:
        op0 = mezincescu_assemble(u_per, None, grid, psi)
        lambda1 = float(smallest_eigs(op0, 2, want_vectors=False).eigenvalues[1])
    m1, m2 = _psi_moments(V, psi, grid)
    gap = float(lambda1)
    denom = gap - m1
    if denom <= 0:
        return TempleBound(-math.inf, m1, m2, gap, False)
    return TempleBound(m1 - m2 / denom, m1, m2, gap, True)


def half_average_bound(V, psi: PeriodicGroundState, grid: Grid) -> float:
    """Half the psi^2-weighted average of V.

    Sits below the Temple bound whenever sup V is small against the
    spectral gap, giving a cheap closed-form lower bound in that window.
    """
    m1, _ = _psi_moments(V, psi, grid)
    return 0.5 * m1


def _theta_profile(s: np.ndarray, ramp_lo: float = 0.5, ramp_hi: float = 0.9) -> np.ndarray:
    """C^2 bump of the scaled max-norm distance s from the box center:
    1 for s <= ramp_lo, 0 for s >= ramp_hi, quintic smoothstep between."""
    t = np.clip((s - ramp_lo) / (ramp_hi - ramp_lo), 0.0, 1.0)
    return 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


def rayleigh_ritz_upper(V, psi: PeriodicGroundState, grid: Grid,
                        u_per=None) -> RayleighRitzBound:
    """Rayleigh quotient of theta_L * psi on the Dirichlet operator.

    Returns the quotient split into the potential part and the remainder
    (kinetic + background), mirroring the two terms of the upper bound.
    """
    hd = dirichlet_assemble(u_per, V, grid, psi=psi)
    coords = grid.node_coords()[tuple(slice(1, -1) for _ in range(grid.dim))]
    center = 0.5 * (np.asarray(grid.box.lo, dtype=float) + np.asarray(grid.box.hi, dtype=float))
    half = 0.5 * (np.asarray(grid.box.hi, dtype=float) - np.asarray(grid.box.lo, dtype=float))
    s = np.max(np.abs(coords - center) / half, axis=-1)
    theta = _theta_profile(s).ravel()

    psi_full = psi_on_box(psi, grid).reshape(grid.node_shape)
    psi_int = psi_full[tuple(slice(1, -1) for _ in range(grid.dim))].ravel()
    u = theta * psi_int
    nrm2 = float(u @ u)
    if nrm2 <= 0:
        raise ValueError("trial state vanished: box too small for the bump")
    total = float(u @ (hd.matrix @ u)) / nrm2
    v = V.values if hasattr(V, "values") else np.asarray(V, dtype=float)
    if np.isscalar(v) or v.ndim == 0:
        v_int = np.full(u.shape, float(v))
    else:
        v_int = v[tuple(slice(1, -1) for _ in range(grid.dim))].ravel()
    pot = float((v_int * u * u).sum() / nrm2)
    return RayleighRitzBound(total, pot, total - pot)


def gap_scaling(u_per, sizes, n_per_cell: int = 8, dim: int = 1,
                psi: PeriodicGroundState = None) -> GapFit:
    """Spectral gap of H^chi(0) vs box side; fits gap ~ c0 * L^exponent."""
    if psi is None:
        psi = _ground_state_for(u_per, n_per_cell, dim)
    gaps = []
    for L in sizes:
        from .measures import Box
        box = Box.centered([_half(L)] * dim) if L % 2 == 0 else Box((0,) * dim, (int(L),) * dim)
        grid = Grid(box, n_per_cell)
        op = mezincescu_assemble(u_per, None, grid, psi)
        ev = smallest_eigs(op, 2, want_vectors=False).eigenvalues
        gap = float(ev[1] - ev[0])
        if gap <= 0:
            raise RuntimeError(f"non-positive spectral gap at L={L}")
        gaps.append(gap)
    sizes = np.asarray(sizes, dtype=float)
    gaps = np.asarray(gaps)
    slope, intercept = np.polyfit(np.log(sizes), np.log(gaps), 1)
    # c0 with gap >= 2 c0 L^-2 over the tested range
    c0 = float(0.5 * np.min(gaps * sizes ** 2))
    return GapFit(sizes, gaps, float(slope), c0)


def _half(L):
    return int(L) // 2


def _ground_state_for(u_per, n_per_cell: int, dim: int) -> PeriodicGroundState:
    from .discretize import periodic_ground_state
    return periodic_ground_state(u_per if u_per is not None else None,
                                 n_per_cell, dim=dim)


def verify_sandwich(sample_V, psi: PeriodicGroundState, grid: Grid, E: float,
                    n_realizations: int, u_per=None, seed: int = 0,
                    direct=None) -> dict:
    """Check the finite-volume bracketing of the density of states at E.

    sample_V(seed) must return a PotentialField on the grid. Both
    ground-state probabilities use the same realizations (paired mode),
    which makes lower <= upper an identity rather than a statistic.
    Pass a precomputed per-volume IDS value (with CI) as `direct` to also
    check lower <= direct <= upper within confidence intervals.
    """
    vol = grid.box.volume
    op0 = mezincescu_assemble(u_per, None, grid, psi)
    n_free = count_below(op0, E).count
    k_d = 0
    k_chi = 0
    for i in range(n_realizations):
        V = sample_V(seed + i)
        lam_chi = smallest_eigs(mezincescu_assemble(u_per, V, grid, psi), 1,
                                want_vectors=False).eigenvalues[0]
        lam_d = smallest_eigs(dirichlet_assemble(u_per, V, grid, psi=psi), 1,
                              want_vectors=False).eigenvalues[0]
        if lam_d < E:
            k_d += 1
        if lam_chi < E:
            k_chi += 1
        if lam_d < lam_chi - 1e-9:
            raise RuntimeError("bracketing violated: Dirichlet below Mezincescu")
    p_d = k_d / n_realizations
    p_chi = k_chi / n_realizations
    lo_d, hi_d = wilson_interval(k_d, n_realizations)
    lo_c, hi_c = wilson_interval(k_chi, n_realizations)
    report = {
        "E": E,
        "lower": p_d / vol,
        "lower_ci": (lo_d / vol, hi_d / vol),
        "upper": n_free * p_chi / vol,
        "upper_ci": (n_free * lo_c / vol, n_free * hi_c / vol),
        "n_free_states": n_free,
        "n": n_realizations,
    }
    if direct is not None:
        report["direct"] = direct["value"]
        report["direct_ci"] = direct["ci"]
        report["ordered"] = (report["lower_ci"][0] <= direct["ci"][1]
                             and direct["ci"][0] <= report["upper_ci"][1])
    report["identity"] = report["lower"] <= report["upper"] + 1e-15
    return report
