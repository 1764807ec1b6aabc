"""Exact diagonalization of the conserved charges in fixed-excitation sectors.

Sectors of fixed M = b^dag b + sum_i (S^z_i + 1/2) are finite dimensional for
both realizations, so the charges are represented exactly (no boson cutoff).
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from math import sqrt
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateSpectrumError, OracleTooLargeError, PoleError, SectorError
from .model import BasisState, LambdaState, ModelParams, RapiditySet, Rep, enumerate_basis, sector_dimension
from .qbe import lambda_from_charges

MAX_DIM = 5000
ED_SEED = 0x5EED
MULTIPLET_TOL = 1e-9
OPERATORS = ("Splus", "Sminus", "Sz", "Bdag", "B", "NumberB")
_DELTA_M = {"Splus": 1, "Sminus": -1, "Sz": 0, "Bdag": 1, "B": -1, "NumberB": 0}

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SectorBasis:
    M: int
    states: tuple[BasisState, ...]
    index: dict = field(compare=False, repr=False)

    @classmethod
    def build(cls, params: ModelParams, M: int) -> "SectorBasis":
        if M < 0 or (not params.is_spin_boson and M > params.N):
            return cls(M, (), {})
        dim = sector_dimension(params, M)
        if dim > MAX_DIM:
            raise OracleTooLargeError(f"sector M={M} has dimension {dim} > {MAX_DIM}")
        states = tuple(enumerate_basis(params, M))
        return cls(M, states, {s: i for i, s in enumerate(states)})

    def __len__(self) -> int:
        return len(self.states)


# --------------------------------------------------------------------------
# local operator action on product states


def apply_local(op: str, state: BasisState, k: int | None = None) -> list[tuple[float, BasisState]]:
    n, up = state.n_b, state.flipped
    if op == "Splus":
        return [] if k in up else [(1.0, BasisState(n, up + (k,)))]
    if op == "Sminus":
        return [(1.0, BasisState(n, tuple(i for i in up if i != k)))] if k in up else []
    if op == "Sz":
        return [(0.5 if k in up else -0.5, state)]
    if op == "Bdag":
        return [(sqrt(n + 1), BasisState(n + 1, up))]
    if op == "B":
        return [(sqrt(n), BasisState(n - 1, up))] if n > 0 else []
    if op == "NumberB":
        return [(float(n), state)] if n else []
    raise ValueError(f"unknown operator {op!r}")


def apply_product(ops: Sequence[tuple[str, int | None]], state: BasisState) -> dict:
    """Apply a product of local operators, rightmost first."""
    vec = {state: 1.0}
    for op, k in reversed(ops):
        nxt = defaultdict(float)
        for s, c in vec.items():
            for a, t in apply_local(op, s, k):
                nxt[t] += a * c
        vec = nxt
    return vec


def _charge_terms(params: ModelParams, i: int) -> list[tuple[float, list]]:
    eps, N = params.epsilons, params.N
    terms = []
    if params.is_spin_boson:
        V = params.V
        terms.append((eps[i] - params.omega, [("Sz", i)]))
        terms.append((V, [("Bdag", None), ("Sminus", i)]))
        terms.append((V, [("B", None), ("Splus", i)]))
        pair = 2.0 * V**2
    else:
        terms.append((-2.0 / params.g, [("Sz", i)]))
        pair = 2.0
    for j in range(N):
        if j == i:
            continue
        c = pair / (eps[i] - eps[j])
        terms.append((c, [("Sz", i), ("Sz", j)]))
        terms.append((0.5 * c, [("Splus", i), ("Sminus", j)]))
        terms.append((0.5 * c, [("Sminus", i), ("Splus", j)]))
    return terms


def _matrix(terms, bra: Sequence[BasisState], ket: Sequence[BasisState]) -> np.ndarray:
    index = {s: a for a, s in enumerate(bra)}
    out = np.zeros((len(bra), len(ket)))
    for b, s in enumerate(ket):
        for coef, ops in terms:
            for t, amp in apply_product(ops, s).items():
                a = index.get(t)
                if a is not None:
                    out[a, b] += coef * amp
    return out


def charge_matrix_on(params: ModelParams, k: int, states: Sequence[BasisState]) -> np.ndarray:
    """R_k on an arbitrary list of product states (may span several sectors)."""
    if len(states) > MAX_DIM:
        raise OracleTooLargeError(f"basis of {len(states)} states exceeds {MAX_DIM}")
    return _matrix(_charge_terms(params, k), states, states)


def build_charge_matrix(params: ModelParams, k: int, M: int) -> np.ndarray:
    basis = SectorBasis.build(params, M)
    return charge_matrix_on(params, k, basis.states)


def check_commutation(params: ModelParams, M: int) -> float:
    Rs = [build_charge_matrix(params, k, M) for k in range(params.N)]
    worst = 0.0
    for i in range(len(Rs)):
        for j in range(i + 1, len(Rs)):
            C = Rs[i] @ Rs[j] - Rs[j] @ Rs[i]
            worst = max(worst, float(np.max(np.abs(C), initial=0.0)))
    return worst


def operator_matrix(
    params: ModelParams, op: str, k: int | None, bra: SectorBasis, ket: SectorBasis
) -> np.ndarray:
    if op not in OPERATORS:
        raise ValueError(f"unknown operator {op!r}")
    if op in ("Bdag", "B", "NumberB") and not params.is_spin_boson:
        raise SectorError(f"operator {op} needs a bosonic mode")
    if bra.M - ket.M != _DELTA_M[op]:
        raise SectorError(f"operator {op} maps sector {ket.M} to {ket.M + _DELTA_M[op]}, not {bra.M}")
    return _matrix([(1.0, [(op, k)])], bra.states, ket.states)


# --------------------------------------------------------------------------
# joint diagonalization


@dataclass(frozen=True)
class EDResult:
    """Simultaneous eigenvectors (columns) and charges (rows) of one sector."""

    basis: SectorBasis
    vectors: np.ndarray
    charges: np.ndarray
    residual: float = 0.0
    multiplets: tuple[tuple[int, ...], ...] = ()  # groups of states sharing every charge

    @property
    def M(self) -> int:
        return self.basis.M

    def __len__(self) -> int:
        return self.vectors.shape[1]


def joint_diagonalize(params: ModelParams, M: int, seed: int = ED_SEED, attempts: int = 5) -> EDResult:
    """Diagonalize a random combination of the charges, then read off each charge.

    The combination coefficients come from ``numpy.random.default_rng(seed)``;
    every retry draws a fresh set from the same generator.
    """
    basis = SectorBasis.build(params, M)
    if not len(basis):
        raise SectorError(f"empty sector M={M}")
    Rs = [charge_matrix_on(params, k, basis.states) for k in range(params.N)]
    norms = [max(np.linalg.norm(R, 2), 1e-300) for R in Rs]
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(attempts):
        c = rng.normal(size=params.N)
        c /= np.linalg.norm(c)
        T = sum(ci * R for ci, R in zip(c, Rs))
        _, vecs = np.linalg.eigh(T)
        charges = np.array([[v @ R @ v for R in Rs] for v in vecs.T])
        worst = max(
            float(np.max(np.linalg.norm(R @ vecs - vecs * charges[:, k], axis=0)) / norms[k])
            for k, R in enumerate(Rs)
        )
        if worst <= 1e-9:
            order = sorted(range(len(basis)), key=lambda a: tuple(np.round(charges[a], 9)))
            charges = charges[order]
            multiplets = _multiplets(charges)
            if multiplets:
                log.warning("sector M=%d has degenerate charge multiplets %s", M, multiplets)
            return EDResult(basis, vecs[:, order], charges, worst, multiplets)
    raise DegenerateSpectrumError(f"no simultaneous eigenbasis found in sector M={M} (residual {worst:.2e})")


def _multiplets(charges: np.ndarray) -> tuple[tuple[int, ...], ...]:
    scale = max(1.0, float(np.max(np.abs(charges)))) if charges.size else 1.0
    groups, seen = [], set()
    for a in range(len(charges)):
        if a in seen:
            continue
        same = [b for b in range(a, len(charges)) if np.max(np.abs(charges[b] - charges[a])) <= MULTIPLET_TOL * scale]
        seen.update(same)
        if len(same) > 1:
            groups.append(tuple(same))
    return tuple(groups)


def lambda_from_ed(params: ModelParams, charges: Sequence[float], M: int) -> LambdaState:
    return lambda_from_charges(params, charges, M)


def ed_operator_table(params: ModelParams, op: str, k: int | None, bra: EDResult, ket: EDResult) -> np.ndarray:
    """Matrix of <bra_m| O |ket_n> over all eigenvector pairs."""
    O = operator_matrix(params, op, k, bra.basis, ket.basis)
    return bra.vectors.T @ O @ ket.vectors


def ed_matrix_element(
    params: ModelParams,
    op: str,
    bra: EDResult,
    m: int,
    ket: EDResult,
    n: int,
    k: int | None = None,
) -> float:
    O = operator_matrix(params, op, k, bra.basis, ket.basis)
    return float(bra.vectors[:, m] @ O @ ket.vectors[:, n])


def align_signs(result: EDResult, references: Iterable[np.ndarray]) -> EDResult:
    """Flip eigenvectors so each has a nonnegative overlap with its reference vector.

    Members of a degenerate multiplet are any rotation within it, so they are
    left alone (and reported).
    """
    vecs = result.vectors.copy()
    skip = {a for group in result.multiplets for a in group}
    if skip:
        log.warning("sign alignment skipped for degenerate states %s", sorted(skip))
    for a, ref in enumerate(references):
        if a not in skip and float(vecs[:, a] @ np.asarray(ref).real) < 0:
            vecs[:, a] *= -1
    return EDResult(result.basis, vecs, result.charges, result.residual, result.multiplets)


# --------------------------------------------------------------------------
# explicit Bethe vectors


def _gaudin_matrix(params: ModelParams, u: complex, sign: int, bra: SectorBasis, ket: SectorBasis) -> np.ndarray:
    """S^+(u) (sign=+1) or S^-(u) (sign=-1) between two sectors."""
    d = u - params.epsilons
    if np.min(np.abs(d)) < 1e-12:
        raise PoleError(f"spectral parameter {u} sits on a level energy")
    spin_op, bos_op = ("Splus", "Bdag") if sign > 0 else ("Sminus", "B")
    w = params.V if params.is_spin_boson else 1.0
    out = np.zeros((len(bra), len(ket)), dtype=complex)
    for j in range(params.N):
        out += (w / d[j]) * operator_matrix(params, spin_op, j, bra, ket)
    if params.is_spin_boson:
        out += operator_matrix(params, bos_op, None, bra, ket)
    return out


def ed_state_from_rapidities(params: ModelParams, rapidities: RapiditySet, M: int) -> np.ndarray:
    """Unnormalized Bethe vector in the basis of sector M."""
    nu = list(rapidities.values)
    if rapidities.rep is Rep.PARTICLE:
        if len(nu) != M:
            raise SectorError(f"{len(nu)} particle rapidities cannot build a state of sector {M}")
        start, step, sign = 0, 1, +1
        vec = np.ones(1, dtype=complex)
    else:
        count = params.N if params.is_spin_boson else params.N - M
        if len(nu) != count:
            raise SectorError(f"hole representation of sector {M} needs {count} rapidities, got {len(nu)}")
        start, step, sign = M + len(nu), -1, -1
        top = SectorBasis.build(params, start)
        vec = np.zeros(len(top), dtype=complex)
        vec[top.index[BasisState(M if params.is_spin_boson else 0, tuple(range(params.N)))]] = 1.0
    current = SectorBasis.build(params, start)
    for u in nu:
        nxt = SectorBasis.build(params, current.M + step)
        vec = _gaudin_matrix(params, u, sign, nxt, current) @ vec
        current = nxt
    scale = max(1.0, float(np.max(np.abs(vec), initial=0.0)))
    if np.max(np.abs(vec.imag), initial=0.0) > 1e-9 * scale:
        return vec
    return vec.real


def generating_matrix(params: ModelParams, u: complex, M: int) -> np.ndarray:
    """S^2(u) = (S^+S^- + S^-S^+)/2 + S^z(u)^2 assembled in sector M."""
    here = SectorBasis.build(params, M)
    below = SectorBasis.build(params, M - 1)
    above = SectorBasis.build(params, M + 1)
    d = u - params.epsilons
    if params.is_spin_boson:
        V = params.V
        Sz = np.eye(len(here), dtype=complex) * (params.omega - u) / (2 * V)
        for j in range(params.N):
            Sz -= (V / d[j]) * operator_matrix(params, "Sz", j, here, here)
    else:
        Sz = np.eye(len(here), dtype=complex) / params.g
        for j in range(params.N):
            Sz -= operator_matrix(params, "Sz", j, here, here) / d[j]
    out = Sz @ Sz
    if len(below):
        out += 0.5 * _gaudin_matrix(params, u, +1, here, below) @ _gaudin_matrix(params, u, -1, below, here)
    if len(above):
        out += 0.5 * _gaudin_matrix(params, u, -1, here, above) @ _gaudin_matrix(params, u, +1, above, here)
    return out
