"""Eigenvalue-based Bethe ansatz for rational Gaudin models.

Spectra, determinant overlaps and form factors of the spin-boson
(Tavis-Cummings) and spin-only (Richardson) realizations, computed from the
Lambda variables Lambda(eps_i) = sum_j 1/(eps_i - lambda_j) instead of the
rapidities themselves.
"""

from .determinants import eigenstate_record, norm_product, norm_ratio, overlap, partition_function
from .formfactors import ff_bdagger, ff_number, ff_splus, ff_sz, ff_sz_diagonal, ff_sz_offdiagonal, ff_sz_spin_only
from .model import BasisState, EigenstateRecord, LambdaState, ModelParams, RapiditySet, Realization, Rep
from .qbe import SolverConfig, charges_from_lambda, hole_from_particle, lambda_derivatives, solve_sector

__version__ = "0.1.0"
