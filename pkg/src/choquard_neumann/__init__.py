"""Numerical toolkit for critical Choquard problems with indefinite Neumann weights.

Modules
-------
exponents    critical exponents, flat-boundary charts
grid         structured grids, grid functions, stiffness and weights
kernels      angular-mean Riesz kernels for radial functions
riesz        discrete Riesz potential and Choquard double integral
bubbles      Aubin-Talenti bubbles and the constants S, C(N, mu), S_H
quotient     equivalent norm, Sobolev quotient, energy, reflections
eigen        weighted Neumann eigenvalue lambda(alpha)
minimizer    discrete ground states by projected gradient descent
asymptotics  concentrating cut-off bubbles at a flat boundary point
config, cli  experiment configs and the command-line front end
"""
from .asymptotics import (AsymptoticsSweep, PowerLawRateFit, choquard_lower_bound, cutoff_bubble,
                          fit_rate, gradient_term, l2_term, quotient_curve, tail_integrals_DE)
from .bubbles import (BubbleSpec, bubble_eval, bubble_integrals, energy_bound, hls_sharp_constant,
                      quotient_threshold, s_h_constant, sobolev_constant)
from .config import ConfigError, ExperimentConfig, parse_config
from .eigen import NeumannEigensolver, admissibility_check, weighted_neumann_eigenvalue
from .exponents import ChoquardExponents, FlatBoundarySpec, critical_exponents
from .grid import GridDomain, GridFunction, make_domain, parse_domain_spec, read_grid_function
from .minimizer import (MinimizerOptions, QuotientMinimizer, energy_threshold_check,
                        ground_state_rescale, minimize_quotient, pde_residual)
from .quotient import (NormCoefficients, cherrier_min_constant, energy, equivalence_certificate,
                       equivalent_norm_sq, reflect_halfspace, sobolev_quotient)
from .riesz import choquard_double_integral, hls_ratio, riesz_potential

__version__ = "0.1.0"
