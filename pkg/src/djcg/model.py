"""Model parameters, excitation sectors and the Lambda-variable state types.

Two realizations of the rational Gaudin algebra are supported:

* ``SPIN_BOSON``: N spins-1/2 coupled to one bosonic mode (level energies
  ``epsilons``, boson frequency ``omega`` and coupling ``V``);
* ``SPIN_ONLY``: N spins-1/2 with the central coupling ``g``.

Level energies are always stored sorted ascending and every site index in the
package refers to that order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from enum import Enum
from math import comb
from typing import Iterator, Sequence

import numpy as np

from .errors import DomainError, InvalidModelError, PoleError, SectorError

DEGENERACY_THRESHOLD = 1e-8
REALITY_TOL = 1e-12
POLE_TOL = 1e-12


class Realization(str, Enum):
    SPIN_BOSON = "spin_boson"
    SPIN_ONLY = "spin_only"


class Rep(str, Enum):
    PARTICLE = "particle"
    HOLE = "hole"


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelParams:
    realization: Realization
    epsilons: np.ndarray
    omega: float | None = None
    V: float | None = None
    g: float | None = None
    degeneracy_tol: float = DEGENERACY_THRESHOLD

    def __post_init__(self):
        real = Realization(self.realization)
        object.__setattr__(self, "realization", real)
        eps = np.sort(np.asarray(self.epsilons, dtype=float).ravel())
        if eps.size < 1:
            raise InvalidModelError("at least one level energy is required")
        if not np.all(np.isfinite(eps)):
            raise InvalidModelError("level energies must be finite")
        scale = max(float(np.max(np.abs(eps))), 1e-300)
        gaps = np.diff(eps)
        if gaps.size and np.min(gaps) <= self.degeneracy_tol * scale:
            k = int(np.argmin(gaps))
            raise InvalidModelError(
                f"degenerate levels: epsilon[{k}]={eps[k]!r} and epsilon[{k + 1}]={eps[k + 1]!r}"
            )
        object.__setattr__(self, "epsilons", _frozen(eps))
        if real is Realization.SPIN_BOSON:
            if self.omega is None or self.V is None:
                raise InvalidModelError("spin-boson models need omega and V")
            if self.g is not None:
                raise InvalidModelError("g is not a spin-boson parameter")
            if not self.V or not np.isfinite(self.V):
                raise InvalidModelError("coupling V must be finite and nonzero")
            object.__setattr__(self, "omega", float(self.omega))
            object.__setattr__(self, "V", float(self.V))
        else:
            if self.g is None:
                raise InvalidModelError("spin-only models need g")
            if self.omega is not None or self.V is not None:
                raise InvalidModelError("omega and V are not spin-only parameters")
            if not self.g or not np.isfinite(self.g):
                raise InvalidModelError("coupling g must be finite and nonzero")
            object.__setattr__(self, "g", float(self.g))

    @classmethod
    def spin_boson(cls, epsilons, omega, V, **kw) -> "ModelParams":
        return cls(Realization.SPIN_BOSON, epsilons, omega=omega, V=V, **kw)

    @classmethod
    def spin_only(cls, epsilons, g, **kw) -> "ModelParams":
        return cls(Realization.SPIN_ONLY, epsilons, g=g, **kw)

    @property
    def N(self) -> int:
        return int(self.epsilons.size)

    @property
    def is_spin_boson(self) -> bool:
        return self.realization is Realization.SPIN_BOSON

    @property
    def coupling(self) -> float:
        return self.V if self.is_spin_boson else self.g

    def with_coupling(self, value: float) -> "ModelParams":
        if self.is_spin_boson:
            return replace(self, V=float(value))
        return replace(self, g=float(value))

    def with_omega(self, value: float) -> "ModelParams":
        return replace(self, omega=float(value))

    def coupling_scale(self) -> float:
        """Factor s that keeps s * Lambda finite as the coupling vanishes."""
        return self.V**2 if self.is_spin_boson else self.g

    def inverse_differences(self) -> np.ndarray:
        """Matrix 1/(eps_i - eps_j) with a zero diagonal."""
        d = self.epsilons[:, None] - self.epsilons[None, :]
        np.fill_diagonal(d, np.inf)
        return 1.0 / d

    def to_dict(self) -> dict:
        out = {"realization": self.realization.value, "epsilons": self.epsilons.tolist()}
        if self.is_spin_boson:
            out.update(omega=self.omega, V=self.V)
        else:
            out["g"] = self.g
        return out


def check_sector(params: ModelParams, M: int) -> int:
    if int(M) != M or M < 0:
        raise SectorError(f"excitation number must be a nonnegative integer, got {M!r}")
    M = int(M)
    if not params.is_spin_boson and M > params.N:
        raise SectorError(f"spin-only sector M={M} exceeds N={params.N}")
    return M


def sector_dimension(params: ModelParams, M: int) -> int:
    M = check_sector(params, M)
    if params.is_spin_boson:
        return sum(comb(params.N, m) for m in range(min(M, params.N) + 1))
    return comb(params.N, M)


@dataclass(frozen=True, order=True)
class BasisState:
    """Product state |n_b; up on ``flipped``>, normalized Fock state for the boson."""

    n_b: int
    flipped: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "flipped", tuple(sorted(int(i) for i in self.flipped)))
        if self.n_b < 0 or len(set(self.flipped)) != len(self.flipped):
            raise DomainError(f"invalid basis state {self!r}")

    @property
    def excitations(self) -> int:
        return self.n_b + len(self.flipped)


def enumerate_basis(params: ModelParams, M: int) -> list[BasisState]:
    """Basis of sector M ordered by (n_b descending, flipped set ascending)."""
    M = check_sector(params, M)
    N = params.N
    if not params.is_spin_boson:
        return [BasisState(0, c) for c in itertools.combinations(range(N), M)]
    out = []
    for n_b in range(M, max(0, M - N) - 1, -1):
        out.extend(BasisState(n_b, c) for c in itertools.combinations(range(N), M - n_b))
    return out


@dataclass(frozen=True)
class LambdaState:
    """Values Lambda(eps_i) of one eigenstate in one representation.

    ``M`` is always the total excitation number of the sector, for both
    representations; ``n_rapidities`` gives the number of Bethe roots.
    """

    values: np.ndarray
    M: int
    rep: Rep = Rep.PARTICLE
    residual: float = float("nan")

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(np.asarray(self.values, dtype=float).ravel()))
        object.__setattr__(self, "rep", Rep(self.rep))
        object.__setattr__(self, "M", int(self.M))

    @property
    def N(self) -> int:
        return int(self.values.size)

    def n_rapidities(self, params: ModelParams) -> int:
        if self.rep is Rep.PARTICLE:
            return self.M
        return params.N if params.is_spin_boson else params.N - self.M


@dataclass(frozen=True)
class RapiditySet:
    values: np.ndarray
    rep: Rep = Rep.PARTICLE

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(np.asarray(self.values, dtype=complex).ravel(), complex))
        object.__setattr__(self, "rep", Rep(self.rep))

    def __len__(self) -> int:
        return int(self.values.size)

    def __iter__(self) -> Iterator[complex]:
        return iter(self.values)


def is_conjugate_closed(values: Sequence[complex], tol: float = 1e-9) -> bool:
    z = list(np.asarray(values, dtype=complex))
    if not z:
        return True
    scale = max(1.0, max(abs(c) for c in z))
    pool = [c.conjugate() for c in z]
    for c in z:
        k = min(range(len(pool)), key=lambda i: abs(pool[i] - c))
        if abs(pool[k] - c) > tol * scale:
            return False
        pool.pop(k)
    return True


def lambda_from_rapidities(rapidities: RapiditySet, params: ModelParams, M: int | None = None) -> LambdaState:
    """Lambda(eps_i) = sum_j 1/(eps_i - nu_j), returned as a real state."""
    nu = rapidities.values
    eps = params.epsilons
    d = eps[:, None] - nu[None, :]
    if d.size and np.min(np.abs(d)) < POLE_TOL:
        raise PoleError("a rapidity coincides with a level energy")
    lam = np.sum(1.0 / d, axis=1) if nu.size else np.zeros(params.N, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(lam))))
    if np.max(np.abs(lam.imag), initial=0.0) >= REALITY_TOL * scale:
        raise DomainError("rapidities are not closed under complex conjugation")
    if M is None:
        if rapidities.rep is Rep.PARTICLE:
            M = nu.size
        elif params.is_spin_boson:
            raise DomainError("the sector of a hole rapidity set must be given explicitly")
        else:
            M = params.N - nu.size
    return LambdaState(lam.real, M, rapidities.rep)


@dataclass(frozen=True)
class EigenstateRecord:
    """Both representations of one eigenstate and the data derived from them."""

    lambda_particle: LambdaState
    lambda_hole: LambdaState
    charges: np.ndarray
    dlambda: np.ndarray
    norm_product: float
    norm_ratio: float
    reference: BasisState | None = None
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def M(self) -> int:
        return self.lambda_particle.M

    @property
    def norm_particle(self) -> float:
        """N_lambda, fixed positive by convention."""
        if self.M == 0:
            return 1.0  # the particle vacuum is the bare product state
        return float(np.sqrt(self.norm_product * self.norm_ratio))

    @property
    def norm_hole(self) -> float:
        return float(self.norm_product / self.norm_particle)
