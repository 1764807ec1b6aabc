"""Eigenvalue-based determinants: domain-wall partition functions, overlaps, norms.

Every determinant is evaluated through an LU factorization as (sign, log|det|)
and combined with its sqrt(n!) V^m prefactor in log space before being turned
into a plain number.
"""

from __future__ import annotations

import itertools
from math import lgamma, log

import numpy as np

from .errors import NormalizationError, OracleTooLargeError, SectorError, UnreachableReferenceError
from .model import (
    BasisState,
    EigenstateRecord,
    LambdaState,
    ModelParams,
    RapiditySet,
    Rep,
    enumerate_basis,
)
from .qbe import charges_from_lambda, hole_from_particle, lambda_derivatives

REFERENCE_TOL = 1e-10
BRUTE_FORCE_LIMIT = 8


def slogdet(A: np.ndarray) -> tuple[complex | float, float]:
    if A.shape[0] == 0:
        return 1.0, 0.0
    return np.linalg.slogdet(A)


def _compose(sign, logdet: float, log_prefactor: float, prefactor_sign: float = 1.0):
    if sign == 0:
        return 0.0 * sign
    value = prefactor_sign * sign * np.exp(logdet + log_prefactor)
    if np.iscomplexobj(value) and abs(value.imag) <= 1e-12 * max(abs(value), 1e-300):
        return float(value.real)
    return value if np.iscomplexobj(value) else float(value)


def _prefactor(params: ModelParams, n_bosons: int, n_spins: int) -> tuple[float, float]:
    """log and sign of sqrt(n_bosons!) * V^n_spins (unity for spin-only models)."""
    if not params.is_spin_boson:
        return 0.0, 1.0
    V = params.V
    return 0.5 * lgamma(n_bosons + 1) + n_spins * log(abs(V)), (1.0 if V > 0 or n_spins % 2 == 0 else -1.0)


def domain_wall_matrix(eps: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """J_aa = sum_{c != a} 1/(eps_a - eps_c) - lam_a, J_ab = 1/(eps_a - eps_b)."""
    d = eps[:, None] - eps[None, :]
    np.fill_diagonal(d, np.inf)
    J = (1.0 / d).astype(np.result_type(lam, float))
    J[np.diag_indices_from(J)] = J.sum(axis=1) - lam
    return J


def minor_determinant(J: np.ndarray, k: int) -> float:
    """Determinant of J without row and column k (0-based); empty minor gives 1."""
    J = np.asarray(J)
    if not 0 <= k < J.shape[0]:
        raise IndexError(f"minor index {k} outside a {J.shape[0]}x{J.shape[0]} matrix")
    keep = [i for i in range(J.shape[0]) if i != k]
    sign, logdet = slogdet(J[np.ix_(keep, keep)])
    return _compose(sign, logdet, 0.0)


# --------------------------------------------------------------------------
# domain-wall partition functions


def _lambda_source(params: ModelParams, source) -> tuple[np.ndarray, int]:
    """(Lambda at every site, number of rapidities) from a rapidity set or a particle state."""
    if isinstance(source, RapiditySet):
        nu = source.values
        lam = np.sum(1.0 / (params.epsilons[:, None] - nu[None, :]), axis=1) if nu.size else np.zeros(params.N)
        if np.max(np.abs(np.imag(lam)), initial=0.0) <= 1e-14 * max(1.0, np.max(np.abs(lam), initial=0.0)):
            lam = np.real(lam)
        return lam, nu.size
    if isinstance(source, LambdaState):
        if source.rep is not Rep.PARTICLE:
            raise ValueError("partition_function takes the particle representation; use hole_projection")
        return source.values, source.M
    raise TypeError("expected a RapiditySet or a particle LambdaState")


def partition_function(params: ModelParams, source, basis: BasisState):
    """<n_b; up_S | nu_1 ... nu_K> for the particle-type product state of ``source``."""
    lam, count = _lambda_source(params, source)
    m = len(basis.flipped)
    expected = basis.excitations if params.is_spin_boson else m
    if count != expected:
        raise SectorError(f"{count} rapidities cannot overlap a basis state with {expected} excitations")
    S = list(basis.flipped)
    J = domain_wall_matrix(params.epsilons[S], lam[S])
    sign, logdet = slogdet(J)
    return _compose(sign, logdet, *_prefactor(params, basis.n_b, m))


def hole_projection(params: ModelParams, hole: LambdaState, basis: BasisState):
    """<n_b; up_S | mu> for a hole-representation state of sector ``hole.M``."""
    if hole.rep is not Rep.HOLE:
        raise ValueError("expected a hole-representation state")
    M = hole.M
    expected = basis.excitations if params.is_spin_boson else len(basis.flipped)
    if expected != M:
        raise SectorError(f"basis state {basis} is not in sector {M}")
    down = [i for i in range(params.N) if i not in basis.flipped]
    J = domain_wall_matrix(params.epsilons[down], hole.values[down])
    sign, logdet = slogdet(J)
    if params.is_spin_boson:
        logp = 0.5 * (lgamma(M + 1) - lgamma(basis.n_b + 1)) + len(down) * log(abs(params.V))
        psign = 1.0 if params.V > 0 or len(down) % 2 == 0 else -1.0
        return _compose(sign, logdet, logp, psign)
    return _compose(sign, logdet, 0.0)


def brute_force_partition(params: ModelParams, rapidities: RapiditySet, basis: BasisState):
    """Direct sum over boson/spin assignments of the rapidities and site bijections."""
    nu = list(rapidities.values)
    m = len(basis.flipped)
    total = basis.excitations if params.is_spin_boson else m
    if len(nu) != total:
        raise SectorError(f"{len(nu)} rapidities cannot overlap a basis state with {total} excitations")
    if total > BRUTE_FORCE_LIMIT:
        raise OracleTooLargeError(f"{total} excitations exceed the brute-force limit {BRUTE_FORCE_LIMIT}")
    eps = params.epsilons
    sites = basis.flipped
    acc = 0j
    for spin_roots in itertools.combinations(range(len(nu)), m):
        for perm in itertools.permutations(sites):
            term = 1.0 + 0j
            for r, s in zip(spin_roots, perm):
                term /= nu[r] - eps[s]
            acc += term
    if params.is_spin_boson:
        acc *= np.sqrt(float(np.prod(np.arange(1, basis.n_b + 1)))) * params.V**m
    return float(acc.real) if abs(acc.imag) <= 1e-12 * max(abs(acc), 1e-300) else complex(acc)


def bethe_vector(params: ModelParams, state: LambdaState, states) -> np.ndarray:
    """Components <b | lambda> of the particle Bethe vector over the given basis states."""
    return np.array([partition_function(params, state, b) for b in states])


# --------------------------------------------------------------------------
# overlaps between representations


def mixed_matrix(params: ModelParams, lam_particle: np.ndarray, lam_hole: np.ndarray) -> np.ndarray:
    return domain_wall_matrix(params.epsilons, np.asarray(lam_particle) + np.asarray(lam_hole))


def overlap(params: ModelParams, hole: LambdaState, particle: LambdaState) -> float:
    """<mu | lambda> for a hole-type bra and a particle-type ket of the same sector."""
    if hole.rep is not Rep.HOLE or particle.rep is not Rep.PARTICLE:
        raise ValueError("overlap takes a hole-type bra and a particle-type ket")
    if hole.M != particle.M:
        raise SectorError(f"sectors differ: bra M={hole.M}, ket M={particle.M}")
    sign, logdet = slogdet(mixed_matrix(params, particle.values, hole.values))
    return _compose(sign, logdet, *_prefactor(params, particle.M, params.N))


def norm_product(params: ModelParams, record: EigenstateRecord | LambdaState) -> float:
    """N_lambda * N_mu, the overlap of the two representations of one eigenstate."""
    if isinstance(record, LambdaState):
        return overlap(params, hole_from_particle(params, record), record)
    return overlap(params, record.lambda_hole, record.lambda_particle)


def default_reference(params: ModelParams, M: int) -> BasisState:
    m = min(M, params.N)
    return BasisState(M - m if params.is_spin_boson else 0, tuple(range(m)))


def norm_ratio(
    params: ModelParams,
    record: EigenstateRecord | LambdaState,
    reference: BasisState | None = None,
) -> tuple[float, BasisState]:
    """N_lambda / N_mu from projections on a product state; returns (ratio, reference)."""
    if isinstance(record, LambdaState):
        particle, hole = record, hole_from_particle(params, record)
    else:
        particle, hole = record.lambda_particle, record.lambda_hole
    M = particle.M
    scale = np.sqrt(abs(overlap(params, hole, particle)))
    if scale == 0.0:
        raise NormalizationError("the two representations are orthogonal; the hole state is degenerate")
    if reference is not None:
        candidates = [reference]
    else:
        first = default_reference(params, M)
        rest = sorted((b for b in enumerate_basis(params, M) if b != first), key=lambda b: b.flipped)
        candidates = [first, *rest]
    for ref in candidates:
        den = hole_projection(params, hole, ref)
        if abs(den) >= REFERENCE_TOL * scale:
            return partition_function(params, particle, ref) / den, ref
    raise UnreachableReferenceError(f"every reference state of sector {M} has a vanishing hole projection")


def eigenstate_record(params: ModelParams, particle: LambdaState) -> EigenstateRecord:
    hole = hole_from_particle(params, particle)
    prod = overlap(params, hole, particle)
    if particle.M == 0 and prod == 0.0:
        # degenerate hole vacuum (resonant single level): N_lambda = 1 still holds
        ratio, ref = np.inf, default_reference(params, 0)
    else:
        ratio, ref = norm_ratio(params, particle)
    return EigenstateRecord(
        lambda_particle=particle,
        lambda_hole=hole,
        charges=charges_from_lambda(params, particle),
        dlambda=lambda_derivatives(params, particle),
        norm_product=prod,
        norm_ratio=ratio,
        reference=ref,
    )
