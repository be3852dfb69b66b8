"""Replica-symmetric predictions for compressed sensing."""

__version__ = "0.1.0"

from .bounds import boundary_bound, chi2_expect, gap_bounds, mi_sandwich, mmse_sandwich
from .channel import i_x, mmse_x, mmse_x_inv, mmse_x_prime
from .montecarlo import estimate, mi_difference_profile, sample_instance
from .prior import (
    bernoulli_gaussian_prior,
    bpsk_prior,
    figure1_prior,
    gaussian_prior,
    make_prior,
    parse_prior,
)
from .replica import (
    fixed_points,
    phase_transition,
    potential,
    replica_curve,
    replica_pair,
    se_iterate,
    single_crossing_check,
)
