"""Conversions between Lambda variables and explicit rapidities."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import InconsistencyError, PoleError, UnderdeterminedError
from .model import EigenstateRecord, LambdaState, ModelParams, RapiditySet, Rep, is_conjugate_closed

INCONSISTENCY_TOL = 1e-8


def rapidities_from_lambda(params: ModelParams, state: LambdaState) -> RapiditySet:
    """Roots of the monic polynomial P with P'(eps_i) = Lambda_i P(eps_i).

    The coefficients are found in a centred and rescaled variable to keep the
    monomial system well conditioned; the roots come from the companion matrix.
    """
    K = state.n_rapidities(params)
    N = params.N
    if K > N:
        raise UnderdeterminedError(
            f"{K} rapidities cannot be recovered from {N} Lambda values; use the hole representation"
        )
    if K == 0:
        return RapiditySet(np.zeros(0, dtype=complex), state.rep)
    eps = params.epsilons
    c = float(eps.mean())
    h = float(np.max(np.abs(eps - c))) if N > 1 else 1.0
    t = (eps - c) / h
    lt = h * state.values
    k = np.arange(K)
    powers = t[:, None] ** k[None, :]
    dpowers = np.zeros_like(powers)
    dpowers[:, 1:] = k[1:] * t[:, None] ** (k[1:] - 1)
    A = dpowers - lt[:, None] * powers
    rhs = -(K * t ** (K - 1) - lt * t**K)
    coef, *_ = scipy.linalg.lstsq(A, rhs, lapack_driver="gelsy")
    mismatch = np.max(np.abs(A @ coef - rhs))
    size = max(np.max(np.abs(rhs)), np.max(np.abs(A)) * np.max(np.abs(coef), initial=0.0), 1e-300)
    if mismatch > INCONSISTENCY_TOL * size:
        raise InconsistencyError(f"Lambda values are not generated by {K} rapidities (mismatch {mismatch / size:.2e})")
    roots = np.roots(np.concatenate([[1.0], coef[::-1]]))
    z = c + h * roots
    if not is_conjugate_closed(z):
        raise InconsistencyError("recovered rapidities are not closed under conjugation")
    return RapiditySet(z, state.rep)


def _check_poles(params: ModelParams, nu: np.ndarray, tol: float = 1e-10):
    if nu.size and np.min(np.abs(params.epsilons[:, None] - nu[None, :])) <= tol:
        raise PoleError("a rapidity coincides with a level energy")
    d = np.abs(nu[:, None] - nu[None, :])
    np.fill_diagonal(d, np.inf)
    if nu.size > 1 and np.min(d) <= tol:
        raise PoleError("two rapidities coincide")


def rapidity_bethe_residual(params: ModelParams, rapidities: RapiditySet, M: int) -> np.ndarray:
    """Left minus right side of the rapidity Bethe equations, one entry per root."""
    nu = rapidities.values
    _check_poles(params, nu)
    eps = params.epsilons
    diff = nu[:, None] - nu[None, :]
    np.fill_diagonal(diff, np.inf)
    pair = np.sum(1.0 / diff, axis=1)  # sum_{k != j} 1/(nu_j - nu_k)
    to_levels = np.sum(1.0 / (nu[:, None] - eps[None, :]), axis=1)  # sum_k 1/(nu_j - eps_k)
    if params.is_spin_boson:
        V, omega = params.V, params.omega
        if rapidities.rep is Rep.PARTICLE:
            return (omega - nu) / (2 * V**2) + 0.5 * to_levels - pair
        B = (nu - omega) / V + V * to_levels - 2 * V * pair
        num = np.prod(eps[None, :] - nu[:, None], axis=1)
        gaps = nu[None, :] - nu[:, None]  # gaps[j, a] = nu_a - nu_j
        np.fill_diagonal(gaps, 1.0)
        den = np.prod(gaps, axis=1)
        return B + (M + 1) / V * num / den
    sign = 1.0 if rapidities.rep is Rep.PARTICLE else -1.0
    return 0.5 * to_levels + sign / params.g - pair


def generating_eigenvalue(params: ModelParams, record: EigenstateRecord | np.ndarray, u: complex, M: int | None = None) -> complex:
    """Eigenvalue of S^2(u) for a state with the given charge eigenvalues."""
    r = np.asarray(getattr(record, "charges", record), dtype=float)
    if M is None:
        M = record.M
    d = u - params.epsilons
    if np.min(np.abs(d)) <= 1e-10:
        raise PoleError(f"u={u} sits on a level energy")
    if params.is_spin_boson:
        V = params.V
        return complex(
            np.sum(r / d) + M - params.N / 2 + 0.5 + ((params.omega - u) / (2 * V)) ** 2 + 0.75 * np.sum(V**2 / d**2)
        )
    return complex(np.sum(r / d) + 1.0 / params.g**2 + 0.75 * np.sum(1.0 / d**2))
