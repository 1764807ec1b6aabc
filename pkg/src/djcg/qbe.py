"""Quadratic Bethe equations in the Lambda variables.

All four equation sets (spin-boson / spin-only, particle / hole) share the form

    F_j = -L_j^2 + sum_{i != j} (L_j - L_i) / (eps_j - eps_i) + a_j L_j + b

and only the linear coefficients ``a_j`` and the constant ``b`` differ.

Sectors are solved by continuation in the coupling starting from the
weak-coupling product states.  Along the path the unknowns are rescaled to
X = s * Lambda (s = V^2 or g) so that the components which diverge as the
coupling vanishes stay finite.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BranchCollisionError,
    ContinuationError,
    ConvergenceError,
    DegenerateStateError,
    SeedDegeneracyError,
    SingularJacobianError,
)
from .model import (
    BasisState,
    LambdaState,
    ModelParams,
    Rep,
    check_sector,
    enumerate_basis,
    sector_dimension,
)

log = logging.getLogger(__name__)

DISTINCT_TOL = 1e-6
MAX_HALVINGS = 10
SINGULAR_COND = 1e14


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = 1e-13
    max_newton_iters: int = 50
    homotopy_start_coupling: float | None = None  # default: 1e-2 * mean level spacing
    homotopy_steps: int = 64
    step_backoff_factor: float = 0.5
    min_step_fraction: float = 1e-4

    def __post_init__(self):
        if self.newton_tol <= 0 or self.min_step_fraction <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_newton_iters < 1 or self.homotopy_steps < 1:
            raise ValueError("iteration and step counts must be positive")
        if not 0 < self.step_backoff_factor < 1:
            raise ValueError("step_backoff_factor must lie in (0, 1)")
        if self.homotopy_start_coupling is not None and self.homotopy_start_coupling <= 0:
            raise ValueError("homotopy_start_coupling must be positive")


# --------------------------------------------------------------------------
# equation coefficients


def equation_coefficients(params: ModelParams, M: int, rep: Rep) -> tuple[np.ndarray, float]:
    """Linear coefficients a_j and constant b of the selected equation set."""
    eps, N = params.epsilons, params.N
    if params.is_spin_boson:
        V2 = params.V**2
        if rep is Rep.PARTICLE:
            return -(eps - params.omega) / V2, M / V2
        return (eps - params.omega) / V2, (M - N + 1) / V2
    sign = 1.0 if rep is Rep.PARTICLE else -1.0
    return np.full(N, sign * 2.0 / params.g), 0.0


def _scaled_coefficients(params: ModelParams, M: int, rep: Rep) -> tuple[float, np.ndarray, float]:
    """(s, s*a_j, s^2*b) evaluated without dividing by the coupling."""
    eps, N = params.epsilons, params.N
    if params.is_spin_boson:
        s = params.V**2
        if rep is Rep.PARTICLE:
            return s, -(eps - params.omega), M * s
        return s, eps - params.omega, (M - N + 1) * s
    sign = 1.0 if rep is Rep.PARTICLE else -1.0
    return params.g, np.full(N, 2.0 * sign), 0.0


def _residual_terms(inv, L, a, b):
    rows = inv.sum(axis=1)
    F = -L**2 + L * rows - inv @ L + a * L + b
    scale = L**2 + np.abs(inv) @ np.abs(L) + np.abs(L) * np.abs(rows) + np.abs(a * L) + abs(b)
    return F, np.maximum(scale, 1.0)


def qbe_residual(params: ModelParams, state: LambdaState) -> np.ndarray:
    a, b = equation_coefficients(params, state.M, state.rep)
    F, _ = _residual_terms(params.inverse_differences(), state.values, a, b)
    return F


def residual_norm(params: ModelParams, state: LambdaState) -> float:
    """Infinity norm of F_j, each divided by the magnitude of its largest terms.

    Raw residuals of states with Lambda ~ 1/V^2 cannot reach 1e-13 in double
    precision, so convergence is always judged on this relative measure.
    """
    a, b = equation_coefficients(params, state.M, state.rep)
    F, scale = _residual_terms(params.inverse_differences(), state.values, a, b)
    return float(np.max(np.abs(F) / scale, initial=0.0))


def qbe_jacobian(params: ModelParams, state: LambdaState) -> np.ndarray:
    """J[i, j] = dF_j / dLambda_i (so that the off-diagonal is 1/(eps_i - eps_j))."""
    a, _ = equation_coefficients(params, state.M, state.rep)
    inv = params.inverse_differences()
    J = inv.copy()
    J[np.diag_indices_from(J)] = -2.0 * state.values + inv.sum(axis=1) + a
    return J


def with_residual(params: ModelParams, state: LambdaState) -> LambdaState:
    return LambdaState(state.values, state.M, state.rep, residual_norm(params, state))


# --------------------------------------------------------------------------
# Newton iteration in the Lambda variables


def _condition(J: np.ndarray) -> float:
    if not np.all(np.isfinite(J)):
        return np.inf
    return float(np.linalg.cond(J))


def _extended_residual(params: ModelParams, M: int, rep: Rep, L: np.ndarray) -> np.ndarray:
    """F evaluated in extended precision, coefficients included."""
    ext = np.longdouble
    eps = params.epsilons.astype(ext)
    d = eps[:, None] - eps[None, :]
    np.fill_diagonal(d, np.inf)
    inv = 1 / d
    Lx = L.astype(ext)
    if params.is_spin_boson:
        V2 = ext(params.V) ** 2
        sign = -1 if rep is Rep.PARTICLE else 1
        a = sign * (eps - ext(params.omega)) / V2
        b = (ext(M) if rep is Rep.PARTICLE else ext(M - params.N + 1)) / V2
    else:
        a = np.full(params.N, (2 if rep is Rep.PARTICLE else -2) / ext(params.g))
        b = ext(0)
    return -(Lx**2) + Lx * inv.sum(axis=1) - inv @ Lx + a * Lx + b


def _polish(params, M, rep, L, rows, inv, a, steps: int = 3):
    """Iterative refinement: Newton steps with an extended-precision residual,
    kept only while that residual keeps dropping."""
    F = _extended_residual(params, M, rep, L)
    size = float(np.max(np.abs(F)))
    for _ in range(steps):
        if size == 0.0:
            break
        Jt = inv.T.copy()
        Jt[np.diag_indices_from(Jt)] = -2.0 * L + rows + a
        try:
            trial = L + np.linalg.solve(Jt, -F.astype(float))
        except np.linalg.LinAlgError:
            break
        Ft = _extended_residual(params, M, rep, trial)
        st = float(np.max(np.abs(Ft)))
        if st >= size:
            break
        L, F, size = trial, Ft, st
    return L


def newton_solve(
    params: ModelParams,
    M: int,
    rep: Rep,
    initial: LambdaState | np.ndarray,
    cfg: SolverConfig = SolverConfig(),
) -> LambdaState:
    """Damped Newton iteration on the quadratic equations.

    The step is halved (at most ten times) while the raw residual norm grows.
    A singular Jacobian at the very first iterate triggers one small
    deterministic perturbation of the starting point; anywhere else it is an
    error.
    """
    rep = Rep(rep)
    M = check_sector(params, M)
    L = np.array(getattr(initial, "values", initial), dtype=float)
    if L.size != params.N:
        raise ValueError(f"initial guess has length {L.size}, expected {params.N}")
    a, b = equation_coefficients(params, M, rep)
    inv = params.inverse_differences()
    rows = inv.sum(axis=1)
    perturbed = False
    res = np.inf
    for it in range(cfg.max_newton_iters + 1):
        F, scale = _residual_terms(inv, L, a, b)
        res = float(np.max(np.abs(F) / scale))
        if res <= cfg.newton_tol:
            L = _polish(params, M, rep, L, rows, inv, a)
            F, scale = _residual_terms(inv, L, a, b)
            return LambdaState(L, M, rep, float(np.max(np.abs(F) / scale)))
        if it == cfg.max_newton_iters:
            break
        Jt = inv.T.copy()
        Jt[np.diag_indices_from(Jt)] = -2.0 * L + rows + a
        if _condition(Jt) > SINGULAR_COND:
            if it == 0 and not perturbed:
                perturbed = True
                L = L + 1e-3 * np.maximum(1.0, np.abs(L))
                continue
            raise SingularJacobianError(f"singular Jacobian at Newton iteration {it}", res)
        step = np.linalg.solve(Jt, -F)
        fnorm = float(np.max(np.abs(F)))
        t = 1.0
        for _ in range(MAX_HALVINGS):
            trial = L + t * step
            Ft, _ = _residual_terms(inv, trial, a, b)
            if np.max(np.abs(Ft)) <= fnorm:
                break
            t *= 0.5
        L = L + t * step
    raise ConvergenceError(f"Newton did not converge in {cfg.max_newton_iters} iterations (residual {res:.3e})", res)


# --------------------------------------------------------------------------
# representations and charges


def hole_from_particle(params: ModelParams, state: LambdaState) -> LambdaState:
    if state.rep is not Rep.PARTICLE:
        raise ValueError("expected a particle-representation state")
    if params.is_spin_boson:
        shift = (params.omega - params.epsilons) / params.V**2
    else:
        shift = 2.0 / params.g
    out = LambdaState(state.values - shift, state.M, Rep.HOLE)
    return with_residual(params, out)


def particle_from_hole(params: ModelParams, state: LambdaState) -> LambdaState:
    if state.rep is not Rep.HOLE:
        raise ValueError("expected a hole-representation state")
    if params.is_spin_boson:
        shift = (params.omega - params.epsilons) / params.V**2
    else:
        shift = 2.0 / params.g
    return with_residual(params, LambdaState(state.values + shift, state.M, Rep.PARTICLE))


def charges_from_lambda(params: ModelParams, state: LambdaState) -> np.ndarray:
    eps = params.epsilons
    rows = params.inverse_differences().sum(axis=1)
    L = state.values
    if params.is_spin_boson:
        V2 = params.V**2
        if state.rep is Rep.PARTICLE:
            return 0.5 * V2 * rows - 0.5 * (eps - params.omega) - V2 * L
        return 0.5 * V2 * rows - 0.5 * (params.omega - eps) - V2 * L
    sign = 1.0 if state.rep is Rep.PARTICLE else -1.0
    return -L + 0.5 * rows + sign / params.g


def lambda_from_charges(params: ModelParams, charges: Sequence[float], M: int) -> LambdaState:
    """Particle-representation Lambda reproducing the given charge eigenvalues."""
    r = np.asarray(charges, dtype=float)
    eps = params.epsilons
    rows = params.inverse_differences().sum(axis=1)
    if params.is_spin_boson:
        V2 = params.V**2
        L = (0.5 * V2 * rows - 0.5 * (eps - params.omega) - r) / V2
    else:
        L = -r + 0.5 * rows + 1.0 / params.g
    return with_residual(params, LambdaState(L, M, Rep.PARTICLE))


def lambda_derivatives(params: ModelParams, state: LambdaState) -> np.ndarray:
    """dLambda/domega (spin-boson) or dLambda/dV with V = 1/g (spin-only)."""
    if state.rep is not Rep.PARTICLE:
        raise ValueError("derivatives are defined for the particle representation")
    if state.M == 0:
        return np.zeros(params.N)  # the vacuum has Lambda = 0 for every parameter value
    Jt = qbe_jacobian(params, state).T
    if params.is_spin_boson:
        rhs = -state.values / params.V**2
    else:
        rhs = -2.0 * state.values
    if _condition(Jt) > SINGULAR_COND:
        raise DegenerateStateError("singular linear system for the Lambda derivatives")
    return np.linalg.solve(Jt, rhs)


# --------------------------------------------------------------------------
# weak-coupling seeds


def mean_level_spacing(params: ModelParams) -> float:
    eps = params.epsilons
    if params.N > 1:
        return float((eps[-1] - eps[0]) / (params.N - 1))
    if params.is_spin_boson and abs(params.omega - eps[0]) > 0:
        return abs(params.omega - eps[0])
    return max(1.0, abs(float(eps[0])))


def default_start_coupling(params: ModelParams, cfg: SolverConfig) -> float:
    if cfg.homotopy_start_coupling is not None:
        return cfg.homotopy_start_coupling
    return 1e-2 * mean_level_spacing(params)


def _check_seed_degeneracy(params: ModelParams):
    if not params.is_spin_boson:
        return
    eps = params.epsilons
    scale = max(float(np.max(np.abs(eps))), abs(params.omega), 1e-300)
    k = int(np.argmin(np.abs(eps - params.omega)))
    if abs(eps[k] - params.omega) <= params.degeneracy_tol * scale:
        raise SeedDegeneracyError(f"omega={params.omega!r} is resonant with epsilon[{k}]={eps[k]!r}")


def seed_lambda(params: ModelParams, label: BasisState, coupling: float) -> np.ndarray:
    eps, N = params.epsilons, params.N
    inv = params.inverse_differences()
    S = list(label.flipped)
    mask = np.zeros(N, dtype=bool)
    mask[S] = True
    L = inv[:, S].sum(axis=1) if S else np.zeros(N)
    if params.is_spin_boson:
        L = L + label.n_b / (eps - params.omega)
        L[mask] += (params.omega - eps[mask]) / coupling**2
    else:
        L[mask] += 2.0 / coupling
    return L


def enumerate_weak_coupling_seeds(
    params: ModelParams, M: int, coupling: float | None = None
) -> list[tuple[BasisState, LambdaState]]:
    """One seed per unperturbed product state, evaluated at a small coupling."""
    M = check_sector(params, M)
    _check_seed_degeneracy(params)
    if coupling is None:
        coupling = default_start_coupling(params, SolverConfig())
        if not params.is_spin_boson:
            coupling = np.copysign(coupling, params.g)
    return [
        (label, LambdaState(seed_lambda(params, label, coupling), M, Rep.PARTICLE))
        for label in enumerate_basis(params, M)
    ]


# --------------------------------------------------------------------------
# continuation in rescaled variables X = s * Lambda


def _scaled_system(params: ModelParams, M: int, X: np.ndarray):
    s, sa, s2b = _scaled_coefficients(params, M, Rep.PARTICLE)
    inv = params.inverse_differences()
    rows = inv.sum(axis=1)
    G = -X**2 + s * (X * rows - inv @ X) + sa * X + s2b
    scale = np.maximum(1.0, X**2 + s * (np.abs(inv) @ np.abs(X) + np.abs(X * rows)) + np.abs(sa * X) + abs(s2b))
    Jt = -s * inv
    Jt[np.diag_indices_from(Jt)] = -2.0 * X + s * rows + sa
    return G, scale, Jt


def _newton_scaled(params, M, X0, tol, max_iter=10):
    """Plain Newton with a contraction test; returns (X, converged)."""
    X = X0.copy()
    prev = np.inf
    for it in range(max_iter):
        G, scale, Jt = _scaled_system(params, M, X)
        if np.max(np.abs(G) / scale) <= tol:
            return X, True
        try:
            dX = np.linalg.solve(Jt, -G)
        except np.linalg.LinAlgError:
            return X, False
        size = float(np.max(np.abs(dX)))
        if not np.isfinite(size):
            return X, False
        floor = 1e-13 * max(1.0, float(np.max(np.abs(X))))
        if it > 0 and size > 0.5 * prev and size > floor:
            return X, False
        if it == 0 and size > 0.25 * max(1.0, float(np.max(np.abs(X)))):
            return X, False
        prev = size
        X = X + dX
    G, scale, _ = _scaled_system(params, M, X)
    return X, bool(np.max(np.abs(G) / scale) <= tol)


def track_branch(
    path: Callable[[float], ModelParams],
    M: int,
    X0: np.ndarray,
    ts: Sequence[float],
    cfg: SolverConfig,
    track_tol: float = 1e-12,
) -> list[np.ndarray]:
    """Follow one solution in X along ``path(t)`` and return it at every t in ``ts``."""
    X = np.array(X0, dtype=float)
    out = [X.copy()]
    velocity = None
    for t0, t1 in zip(ts[:-1], ts[1:]):
        full = t1 - t0
        t = t0
        h = full
        while t < t1 - 1e-15 * max(1.0, abs(t1)):
            h = min(h, t1 - t)
            pred = X + velocity * h if velocity is not None else X
            Xn, ok = _newton_scaled(path(t + h), M, pred, track_tol)
            if not ok and velocity is not None:
                Xn, ok = _newton_scaled(path(t + h), M, X, track_tol)
            if ok:
                velocity = (Xn - X) / h
                X = Xn
                t += h
                h = min(2.0 * h, full)
                continue
            h *= cfg.step_backoff_factor
            if h < cfg.min_step_fraction * full:
                raise ContinuationError(f"continuation stalled at t={t:.6g}")
        out.append(X.copy())
    return out


def _collisions(Ls: np.ndarray) -> tuple[int, int] | None:
    n = Ls.shape[0]
    for i in range(n):
        d = np.max(np.abs(Ls[i + 1 :] - Ls[i]), axis=1) if i + 1 < n else np.array([])
        if d.size and np.min(d) <= DISTINCT_TOL:
            return i, i + 1 + int(np.argmin(d))
    return None


def track_states(
    path: Callable[[float], ModelParams],
    M: int,
    X0s: Sequence[np.ndarray],
    ts: Sequence[float],
    cfg: SolverConfig,
) -> np.ndarray:
    """Track several branches; array of shape (len(ts), n_states, N). Raises on collision."""
    paths = np.array([track_branch(path, M, X0, ts, cfg) for X0 in X0s])
    paths = np.swapaxes(paths, 0, 1)
    for k, t in enumerate(ts):
        p = path(t)
        hit = _collisions(paths[k] / p.coupling_scale())
        if hit is not None:
            raise BranchCollisionError(
                f"branches {hit[0]} and {hit[1]} collide at coupling {p.coupling:.6g}", p.coupling
            )
    return paths


def charge_sort_key(params: ModelParams, state: LambdaState):
    return tuple(np.round(charges_from_lambda(params, state), 9))


def _detour_omega(params: ModelParams) -> float:
    eps = params.epsilons
    gap = mean_level_spacing(params) if params.N > 1 else max(1.0, abs(params.V))
    cands = params.omega + 0.5 * gap * np.array([1, -1, 0.5, -0.5, 1.5, -1.5, 0.25, -0.25])
    dist = [np.min(np.abs(eps - c)) for c in cands]
    return float(cands[int(np.argmax(dist))])


def solve_sector(
    params: ModelParams,
    M: int,
    rep: Rep = Rep.PARTICLE,
    cfg: SolverConfig = SolverConfig(),
) -> list[LambdaState]:
    """All eigenstates of sector M, sorted by their charge vectors."""
    M = check_sector(params, M)
    rep = Rep(rep)
    k1 = params.coupling
    k0 = np.copysign(default_start_coupling(params, cfg), k1)
    if abs(k1) <= abs(k0):
        k0 = k1
    try:
        _check_seed_degeneracy(params)
        if params.is_spin_boson and np.min(np.abs(params.epsilons - params.omega)) < 10 * abs(k0):
            raise SeedDegeneracyError("omega is too close to a level for weak-coupling seeds")
    except SeedDegeneracyError:
        # (near-)resonant boson: solve off resonance, then move omega back at fixed coupling
        omega = params.omega
        shifted = params.with_omega(_detour_omega(params))
        off = solve_sector(shifted, M, Rep.PARTICLE, cfg)
        s = params.coupling_scale()

        def path(t):
            return params.with_omega((1 - t) * shifted.omega + t * omega)

        states = _continue(path, M, [st.values * s for st in off], cfg, params)
        return _finish(params, states, rep, cfg)

    ratio = k1 / k0

    def path(t):
        return params.with_coupling(k0 * ratio**t)

    p0 = path(0.0)
    s0 = p0.coupling_scale()
    X0s = []
    for label, seed in enumerate_weak_coupling_seeds(params, M, k0):
        X, ok = _newton_scaled(p0, M, seed.values * s0, 1e-12, max_iter=30)
        if not ok:
            raise ContinuationError(f"seed {label} did not converge at coupling {k0:.3g}")
        X0s.append(X)
    states = _continue(path, M, X0s, cfg, params)
    return _finish(params, states, rep, cfg)


def _continue(path, M, X0s, cfg, params):
    steps = cfg.homotopy_steps
    last = None
    for attempt in range(3):
        ts = np.linspace(0.0, 1.0, steps + 1)
        try:
            paths = track_states(path, M, X0s, ts, cfg)
            break
        except BranchCollisionError as exc:
            last = exc
            log.info("branch collision (%s); refining grid to %d steps", exc, 4 * steps)
            steps *= 4
    else:
        raise last
    s = params.coupling_scale()
    return [LambdaState(X / s, M, Rep.PARTICLE) for X in paths[-1]]


def _finish(params, states, rep, cfg):
    polished = [newton_solve(params, st.M, Rep.PARTICLE, st, cfg) for st in states]
    polished.sort(key=lambda st: charge_sort_key(params, st))
    hit = _collisions(np.array([st.values for st in polished])) if polished else None
    if hit is not None:
        raise BranchCollisionError("distinct branches converged to the same solution", params.coupling)
    if len(polished) != sector_dimension(params, polished[0].M if polished else 0):
        raise ContinuationError("solution count does not match the sector dimension")
    if rep is Rep.PARTICLE:
        return polished
    return [newton_solve(params, st.M, Rep.HOLE, hole_from_particle(params, st), cfg) for st in polished]
