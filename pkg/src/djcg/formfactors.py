"""Form factors of local operators between Bethe eigenstates.

Unnormalized values are matrix elements <mu_bra| O |lambda_ket> between the
hole representation of the bra and the particle representation of the ket.
Normalized values divide by N_mu(bra) * N_lambda(ket) and correspond to the
eigenbasis in which every N_lambda is positive.

Raising operators (S^+_k, b^dag) come from determinants with one excitation
more in the bra.  S^-_k and b are their transposes in this real eigenbasis.
Number operators (S^z_k, b^dag b) come from derivatives of the overlap with
respect to omega (spin-boson) or V = 1/g (spin-only).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .determinants import _compose, _prefactor, domain_wall_matrix, mixed_matrix, slogdet
from .errors import DegenerateStateError, NormalizationError, RealizationError, SectorError
from .model import EigenstateRecord, ModelParams

SAME_STATE_TOL = 1e-9


def _check_raising(bra: EigenstateRecord, ket: EigenstateRecord):
    if bra.M - ket.M != 1:
        raise SectorError(f"raising operators connect sector M-1 to M, got ket M={ket.M}, bra M={bra.M}")


def _normalize(value, bra: EigenstateRecord, ket: EigenstateRecord):
    den = bra.norm_hole * ket.norm_particle
    if den == 0.0:
        raise NormalizationError("the bra has a degenerate hole representation")
    return value / den


def same_state(bra: EigenstateRecord, ket: EigenstateRecord) -> bool:
    if bra.M != ket.M:
        return False
    scale = max(1.0, float(np.max(np.abs(bra.charges))))
    return bool(np.max(np.abs(bra.charges - ket.charges)) <= SAME_STATE_TOL * scale)


def ff_splus(params: ModelParams, bra: EigenstateRecord, ket: EigenstateRecord, k: int, normalized: bool = False) -> float:
    _check_raising(bra, ket)
    keep = [a for a in range(params.N) if a != k]
    lam = ket.lambda_particle.values[keep] + bra.lambda_hole.values[keep]
    sign, logdet = slogdet(domain_wall_matrix(params.epsilons[keep], lam))
    value = _compose(sign, logdet, *_prefactor(params, bra.M, params.N - 1))
    return _normalize(value, bra, ket) if normalized else value


def ff_bdagger(params: ModelParams, bra: EigenstateRecord, ket: EigenstateRecord, normalized: bool = False) -> float:
    if not params.is_spin_boson:
        raise RealizationError("b^dag form factors need the spin-boson realization")
    _check_raising(bra, ket)
    sign, logdet = slogdet(mixed_matrix(params, ket.lambda_particle.values, bra.lambda_hole.values))
    value = _compose(sign, logdet, *_prefactor(params, bra.M, params.N))
    return _normalize(value, bra, ket) if normalized else value


def ff_sminus(params: ModelParams, bra: EigenstateRecord, ket: EigenstateRecord, k: int) -> float:
    """Normalized <bra| S^-_k |ket>, the transpose of the S^+_k element."""
    return ff_splus(params, ket, bra, k, normalized=True)


def ff_b(params: ModelParams, bra: EigenstateRecord, ket: EigenstateRecord) -> float:
    """Normalized <bra| b |ket>."""
    return ff_bdagger(params, ket, bra, normalized=True)


# --------------------------------------------------------------------------
# number operators


def ff_sz_diagonal(params: ModelParams, state: EigenstateRecord, k: int) -> float:
    """Normalized <S^z_k> of an eigenstate from the derivative of its charge eigenvalue."""
    if params.is_spin_boson:
        return -0.5 + params.V**2 * float(state.dlambda[k])
    return -0.5 + 0.5 * float(state.dlambda[k])


def overlap_omega_derivative(params: ModelParams, bra: EigenstateRecord, ket: EigenstateRecord) -> float:
    """d/dx <mu_bra(x)| lambda_ket(x + dx)> at dx = 0, x = omega (or V = 1/g).

    Since the two eigenstates are orthogonal, only the first-order change of
    the ket's Lambda survives; it enters every diagonal entry of the mixed
    matrix with a minus sign, giving a sum of principal minors.
    """
    if bra.M != ket.M:
        raise SectorError("overlap derivatives need two states of the same sector")
    if same_state(bra, ket):
        raise DegenerateStateError("bra and ket are the same eigenstate; use the diagonal formulas")
    J = mixed_matrix(params, ket.lambda_particle.values, bra.lambda_hole.values)
    logp, psign = _prefactor(params, ket.M, params.N)
    total = 0.0
    for k in range(params.N):
        keep = [a for a in range(params.N) if a != k]
        sign, logdet = slogdet(J[np.ix_(keep, keep)])
        total -= float(ket.dlambda[k]) * _compose(sign, logdet, logp, psign)
    return total


def sz_prefactor(params: ModelParams, bra: EigenstateRecord, ket: EigenstateRecord) -> np.ndarray:
    """Charge differences r^bra_k - r^ket_k written in the Lambda variables."""
    eps = params.epsilons
    if params.is_spin_boson:
        V2 = params.V**2
        return eps - params.omega + V2 * ket.lambda_particle.values - V2 * bra.lambda_hole.values
    return ket.lambda_particle.values - bra.lambda_hole.values - 2.0 / params.g


def ff_sz_offdiagonal(
    params: ModelParams, bra: EigenstateRecord, ket: EigenstateRecord, k: int, normalized: bool = False
) -> float:
    if not params.is_spin_boson:
        return ff_sz_spin_only(params, bra, ket, k, normalized)
    value = float(sz_prefactor(params, bra, ket)[k]) * overlap_omega_derivative(params, bra, ket)
    return _normalize(value, bra, ket) if normalized else value


def ff_sz(params: ModelParams, bra: EigenstateRecord, ket: EigenstateRecord, k: int) -> float:
    """Normalized <bra| S^z_k |ket> through the diagonal or off-diagonal path."""
    if not params.is_spin_boson:
        return ff_sz_spin_only(params, bra, ket, k, normalized=True)
    if same_state(bra, ket):
        return ff_sz_diagonal(params, ket, k)
    return ff_sz_offdiagonal(params, bra, ket, k, normalized=True)


def ff_number(params: ModelParams, bra: EigenstateRecord, ket: EigenstateRecord, normalized: bool = True) -> float:
    """<bra| b^dag b |ket>; the diagonal value is always normalized."""
    if not params.is_spin_boson:
        raise RealizationError("b^dag b form factors need the spin-boson realization")
    if same_state(bra, ket):
        return ket.M - params.V**2 * float(np.sum(ket.dlambda))
    value = -float(np.sum(sz_prefactor(params, bra, ket))) * overlap_omega_derivative(params, bra, ket)
    return _normalize(value, bra, ket) if normalized else value


def ff_sz_spin_only(
    params: ModelParams, bra: EigenstateRecord, ket: EigenstateRecord, k: int, normalized: bool = True
) -> float:
    if params.is_spin_boson:
        raise RealizationError("this path is specific to the spin-only realization")
    if same_state(bra, ket):
        return ff_sz_diagonal(params, ket, k)
    value = 0.5 * float(sz_prefactor(params, bra, ket)[k]) * overlap_omega_derivative(params, bra, ket)
    return _normalize(value, bra, ket) if normalized else value


# --------------------------------------------------------------------------
# tables

OPERATOR_NAMES = ("Splus", "Sminus", "Sz", "Bdag", "B", "NumberB")


def sector_shift(op: str) -> int:
    return {"Splus": 1, "Bdag": 1, "Sminus": -1, "B": -1, "Sz": 0, "NumberB": 0}[op]


def form_factor_table(
    params: ModelParams,
    op: str,
    bras: Sequence[EigenstateRecord],
    kets: Sequence[EigenstateRecord],
    k: int | None = None,
    normalized: bool = True,
) -> np.ndarray:
    """Matrix [m, n] of <bra_m| O |ket_n> for one operator."""
    if op not in OPERATOR_NAMES:
        raise ValueError(f"unknown operator {op!r}")
    if op in ("Bdag", "B", "NumberB") and not params.is_spin_boson:
        raise RealizationError(f"operator {op} needs the spin-boson realization")
    if op in ("Splus", "Sminus", "Sz") and k is None:
        raise ValueError(f"operator {op} needs a site index")
    out = np.empty((len(bras), len(kets)))
    for m, bra in enumerate(bras):
        for n, ket in enumerate(kets):
            if op == "Splus":
                v = ff_splus(params, bra, ket, k, normalized)
            elif op == "Bdag":
                v = ff_bdagger(params, bra, ket, normalized)
            elif op == "Sminus":
                v = ff_sminus(params, bra, ket, k)
            elif op == "B":
                v = ff_b(params, bra, ket)
            elif op == "Sz":
                if normalized or same_state(bra, ket):
                    v = ff_sz(params, bra, ket, k)
                elif params.is_spin_boson:
                    v = ff_sz_offdiagonal(params, bra, ket, k)
                else:
                    v = ff_sz_spin_only(params, bra, ket, k, normalized=False)
            else:
                v = ff_number(params, bra, ket, normalized)
            out[m, n] = v
    return out
