"""Acceptance checks, shared by the ``verify`` subcommand and the test suite.

Each check builds its own seeded models, compares the Bethe-ansatz machinery
with an independent oracle (exact diagonalization, brute-force sums, finite
differences) and reports the worst error next to its tolerance.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from math import sqrt
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .determinants import (
    bethe_vector,
    brute_force_partition,
    eigenstate_record,
    overlap,
    partition_function,
)
from .ed import (
    MAX_DIM,
    align_signs,
    build_charge_matrix,
    ed_operator_table,
    ed_state_from_rapidities,
    joint_diagonalize,
    lambda_from_ed,
)
from .errors import OracleTooLargeError
from .formfactors import form_factor_table, ff_number, ff_sz_diagonal, overlap_omega_derivative
from .model import BasisState, LambdaState, ModelParams, RapiditySet, Rep, enumerate_basis, sector_dimension
from .qbe import (
    SolverConfig,
    charges_from_lambda,
    hole_from_particle,
    lambda_derivatives,
    newton_solve,
    qbe_residual,
    solve_sector,
)
from .repmap import rapidities_from_lambda, rapidity_bethe_residual
from .sweep import scan

DEFAULT_SEED = 20240607

DEFAULT_TOLERANCES = {
    "commuting_charges": 1e-12,
    "spectrum_completeness": 1e-8,
    "qbe_encoding": 1e-8,
    "hole_qbe": 1e-10,
    "hole_bethe": 1e-7,
    "partition_function": 1e-10,
    "recursion": 1e-10,
    "norm_product": 1e-10,
    "form_factors": 1e-8,
    "lambda_derivatives": 1e-6,
    "overlap_derivative": 1e-5,
    "sum_rules": 1e-10,
    "scan_residual": 1e-12,
}

TIME_LIMITS = {
    "commuting_charges": 1.0,
    "spectrum_completeness": 30.0,
    "form_factors": 60.0,
    "continuation": 30.0,
}


@dataclass
class CheckResult:
    name: str
    error: float
    tolerance: float
    passed: bool
    runtime: float
    detail: str = ""
    extra: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: error={self.error:.3e} tol={self.tolerance:.1e} time={self.runtime:.2f}s {self.detail}".rstrip()


def random_model(N: int, seed: int = DEFAULT_SEED, realization: str = "spin_boson", omega=1.3, V=0.7, g=0.8) -> ModelParams:
    """Levels drawn uniformly in [0, 4] from a seeded generator."""
    rng = np.random.default_rng(seed + N)
    eps = np.sort(rng.uniform(0.0, 4.0, N))
    if realization == "spin_boson":
        return ModelParams.spin_boson(eps, omega=omega, V=V)
    return ModelParams.spin_only(eps, g=g)


def resonant_jc() -> ModelParams:
    return ModelParams.spin_boson([1.0], omega=1.0, V=0.5)


def guard(params: ModelParams, sectors, max_dim: int = MAX_DIM):
    for M in sectors:
        dim = sector_dimension(params, M)
        if dim > max_dim:
            raise OracleTooLargeError(f"sector M={M} of an N={params.N} model has dimension {dim} > guard {max_dim}")


def _timed(name: str, tol: float, fn: Callable[[], tuple[float, str]], limit: float | None = None) -> CheckResult:
    t0 = time.perf_counter()
    err, detail = fn()
    dt = time.perf_counter() - t0
    ok = bool(err <= tol)
    if limit is not None:
        detail = f"{detail} (limit {limit:.0f}s)".strip()
        ok = ok and dt < limit
    return CheckResult(name, float(err), tol, ok, dt, detail)


def _records(params: ModelParams, M: int, cfg: SolverConfig):
    return [eigenstate_record(params, st) for st in solve_sector(params, M, Rep.PARTICLE, cfg)]


# --------------------------------------------------------------------------
# 1. commuting charges


def check_commuting_charges(tol=None, seed=DEFAULT_SEED, max_dim=MAX_DIM) -> CheckResult:
    tol = DEFAULT_TOLERANCES["commuting_charges"] if tol is None else tol
    params = random_model(4, seed)
    guard(params, [3], max_dim)

    def run():
        Rs = [build_charge_matrix(params, k, 3) for k in range(params.N)]
        scale = max(np.linalg.norm(R, 2) for R in Rs)
        worst = max(
            np.linalg.norm(Rs[i] @ Rs[j] - Rs[j] @ Rs[i], 2) for i in range(len(Rs)) for j in range(i + 1, len(Rs))
        )
        return worst / scale, f"N=4 M=3 dim={Rs[0].shape[0]}"

    return _timed("1 commuting charges", tol, run, TIME_LIMITS["commuting_charges"])


# --------------------------------------------------------------------------
# 2. spectrum completeness


def _spectrum_models(seed):
    models = [random_model(N, seed) for N in (2, 3, 4)]
    models += [random_model(N, seed, "spin_only") for N in (2, 3, 4)]
    return models


def check_spectrum_completeness(tol=None, seed=DEFAULT_SEED, cfg=SolverConfig(), max_dim=MAX_DIM, models=None) -> CheckResult:
    tol = DEFAULT_TOLERANCES["spectrum_completeness"] if tol is None else tol
    models = _spectrum_models(seed) if models is None else models

    def run():
        worst, count = 0.0, 0
        for params in models:
            sectors = range(0, 5) if params.is_spin_boson else range(0, min(4, params.N) + 1)
            guard(params, sectors, max_dim)
            for M in sectors:
                states = solve_sector(params, M, Rep.PARTICLE, cfg)
                if len(states) != sector_dimension(params, M):
                    return np.inf, f"N={params.N} M={M}: {len(states)} states, expected {sector_dimension(params, M)}"
                ours = np.array([charges_from_lambda(params, st) for st in states])
                ed = joint_diagonalize(params, M).charges
                cost = np.max(np.abs(ours[:, None, :] - ed[None, :, :]), axis=2)
                rows, cols = linear_sum_assignment(cost)
                worst = max(worst, float(cost[rows, cols].max()))
                count += len(states)
        return worst, f"{count} states"

    return _timed("2 spectrum completeness", tol, run, TIME_LIMITS["spectrum_completeness"])


# --------------------------------------------------------------------------
# 3. quadratic-equation encoding


def check_qbe_encoding(tol=None, seed=DEFAULT_SEED, max_dim=MAX_DIM, models=None) -> CheckResult:
    tol = DEFAULT_TOLERANCES["qbe_encoding"] if tol is None else tol
    models = [random_model(3, seed), random_model(4, seed, "spin_only")] if models is None else models

    def run():
        worst = 0.0
        for params in models:
            sectors = range(0, 5) if params.is_spin_boson else range(0, params.N + 1)
            guard(params, sectors, max_dim)
            for M in sectors:
                for r in joint_diagonalize(params, M).charges:
                    st = lambda_from_ed(params, r, M)
                    worst = max(worst, float(np.max(np.abs(qbe_residual(params, st)))))
        return worst, "both realizations"

    return _timed("3 quadratic-equation encoding", tol, run)


# --------------------------------------------------------------------------
# 4. representation duality


def check_representation_duality(tol_qbe=None, tol_bethe=None, seed=DEFAULT_SEED, cfg=SolverConfig(), models=None) -> list[CheckResult]:
    tol_qbe = DEFAULT_TOLERANCES["hole_qbe"] if tol_qbe is None else tol_qbe
    tol_bethe = DEFAULT_TOLERANCES["hole_bethe"] if tol_bethe is None else tol_bethe
    models = [random_model(3, seed), random_model(4, seed), random_model(4, seed, "spin_only")] if models is None else models
    data = {"qbe": 0.0, "bethe": 0.0, "bethe_low": 0.0}

    def collect():
        for params in models:
            sectors = range(0, 5) if params.is_spin_boson else range(0, params.N + 1)
            for M in sectors:
                for st in solve_sector(params, M, Rep.PARTICLE, cfg):
                    hole = hole_from_particle(params, st)
                    data["qbe"] = max(data["qbe"], float(np.max(np.abs(qbe_residual(params, hole)))))
                    if hole.n_rapidities(params) == 0:
                        continue
                    res = float(np.max(np.abs(rapidity_bethe_residual(params, rapidities_from_lambda(params, hole), M))))
                    data["bethe"] = max(data["bethe"], res)
                    if M < params.N - 1:
                        data["bethe_low"] = max(data["bethe_low"], res)

    t0 = time.perf_counter()
    collect()
    dt = time.perf_counter() - t0
    low = f"M<N-1 sectors: {data['bethe_low']:.1e}"
    return [
        CheckResult("4a hole quadratic equations", data["qbe"], tol_qbe, data["qbe"] <= tol_qbe, dt),
        CheckResult("4b hole rapidity Bethe equations", data["bethe"], tol_bethe, data["bethe"] <= tol_bethe, dt, low),
    ]


# --------------------------------------------------------------------------
# 5. partition-function theorem and recursion


def _random_rapidities(rng, count, eps):
    """Real rapidities kept away from the levels."""
    lo, hi = eps.min() - 2.0, eps.max() + 2.0
    out = []
    while len(out) < count:
        x = rng.uniform(lo, hi)
        if np.min(np.abs(eps - x)) > 0.05 and all(abs(x - y) > 0.05 for y in out):
            out.append(x)
    return np.array(out)


def check_partition_theorem(tol=None, seed=DEFAULT_SEED) -> CheckResult:
    tol = DEFAULT_TOLERANCES["partition_function"] if tol is None else tol
    rng = np.random.default_rng(seed)

    def run():
        worst, count = 0.0, 0
        for N in (2, 3):
            for realization in ("spin_boson", "spin_only"):
                params = random_model(N, seed, realization)
                top = 6 if params.is_spin_boson else N
                for total in range(0, top + 1):
                    nu = RapiditySet(_random_rapidities(rng, total, params.epsilons))
                    for b in enumerate_basis(params, total):
                        a = partition_function(params, nu, b)
                        c = brute_force_partition(params, nu, b)
                        worst = max(worst, abs(a - c) / max(abs(c), 1e-300))
                        count += 1
        return worst, f"{count} basis states"

    return _timed("5a partition function vs brute force", tol, run)


def check_recursion(tol=None, seed=DEFAULT_SEED, instances: int = 100) -> CheckResult:
    """<M;S|nu + new> = sqrt(M) <M-1;S|nu> + sum_j V/(new - eps_j) <M;S - j|nu>."""
    tol = DEFAULT_TOLERANCES["recursion"] if tol is None else tol
    rng = np.random.default_rng(seed + 1)

    def run():
        worst = 0.0
        for _ in range(instances):
            N = int(rng.integers(1, 5))
            params = ModelParams.spin_boson(np.sort(rng.uniform(0, 4, N)) + 1e-3 * np.arange(N), omega=1.0, V=rng.uniform(0.2, 1.5))
            total = int(rng.integers(1, 6))
            nu = _random_rapidities(rng, total, params.epsilons)
            basis = enumerate_basis(params, total)
            b = basis[int(rng.integers(len(basis)))]
            lhs = partition_function(params, RapiditySet(nu), b)
            old, new = RapiditySet(nu[:-1]), nu[-1]
            rhs = sqrt(b.n_b) * partition_function(params, old, BasisState(b.n_b - 1, b.flipped)) if b.n_b else 0.0
            for j in b.flipped:
                rest = tuple(i for i in b.flipped if i != j)
                rhs += params.V / (new - params.epsilons[j]) * partition_function(params, old, BasisState(b.n_b, rest))
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
        return worst, f"{instances} instances"

    return _timed("5b partition-function recursion", tol, run)


# --------------------------------------------------------------------------
# 6. norms


def check_norms(tol=None, seed=DEFAULT_SEED, cfg=SolverConfig(), models=None) -> list[CheckResult]:
    tol = DEFAULT_TOLERANCES["norm_product"] if tol is None else tol
    models = [random_model(3, seed), random_model(4, seed, "spin_only")] if models is None else models
    t0 = time.perf_counter()
    worst, positive, count = 0.0, True, 0
    for params in models:
        for M in range(0, params.N + 1):
            for rec in _records(params, M, cfg):
                positive &= rec.norm_product * rec.norm_ratio > 0 and rec.norm_product / rec.norm_ratio > 0
                lam = ed_state_from_rapidities(params, rapidities_from_lambda(params, rec.lambda_particle), M)
                mu = ed_state_from_rapidities(params, rapidities_from_lambda(params, rec.lambda_hole), M)
                direct = complex(np.dot(mu, lam))
                worst = max(worst, abs(direct - rec.norm_product) / abs(rec.norm_product))
                count += 1
    dt = time.perf_counter() - t0
    jc = resonant_jc()
    values = sorted(eigenstate_record(jc, st).norm_product for st in solve_sector(jc, 1, Rep.PARTICLE, cfg))
    jc_err = max(abs(values[0] + 2.0), abs(values[1] - 2.0))
    return [
        CheckResult("6a norm product vs explicit inner product", worst, tol, worst <= tol, dt, f"{count} states"),
        CheckResult("6b resonant N=1 norm products (-2, +2)", jc_err, tol, jc_err <= tol, 0.0, f"values={values}"),
        CheckResult(
            "6c positive squared norms", 0.0 if positive else 1.0, 0.0, bool(positive), dt, "N_lambda^2 > 0 and N_mu^2 > 0"
        ),
    ]


# --------------------------------------------------------------------------
# 7. form factors


def _aligned_ed(params, M, records):
    ed = joint_diagonalize(params, M)
    refs = [bethe_vector(params, r.lambda_particle, ed.basis.states) / r.norm_particle for r in records]
    return align_signs(ed, refs)


def form_factor_errors(params: ModelParams, sectors, cfg=SolverConfig()) -> dict:
    """Worst deviation from ED per operator, over all state pairs of the given sectors."""
    cache = {}

    def get(M):
        if M not in cache:
            recs = _records(params, M, cfg)
            cache[M] = (recs, _aligned_ed(params, M, recs))
        return cache[M]

    errs = {}
    ops = [("Splus", k) for k in range(params.N)] + [("Sz", k) for k in range(params.N)]
    if params.is_spin_boson:
        ops += [("Bdag", None), ("NumberB", None)]
    for M in sectors:
        for op, k in ops:
            raising = op in ("Splus", "Bdag")
            if raising and M == 0:
                continue
            bra, bed = get(M)
            ket, ked = get(M - 1) if raising else (bra, bed)
            ours = form_factor_table(params, op, bra, ket, k)
            ref = ed_operator_table(params, op, k, bed, ked)
            errs[op] = max(errs.get(op, 0.0), float(np.max(np.abs(ours - ref))))
    return errs


def check_form_factors(tol=None, seed=DEFAULT_SEED, cfg=SolverConfig(), cases=None) -> CheckResult:
    tol = DEFAULT_TOLERANCES["form_factors"] if tol is None else tol
    if cases is None:
        cases = [(random_model(3, seed), [1, 2, 3]), (random_model(4, seed, "spin_only"), [2])]

    def run():
        worst, parts = 0.0, []
        for params, sectors in cases:
            errs = form_factor_errors(params, sectors, cfg)
            worst = max(worst, *errs.values())
            parts.append(", ".join(f"{op}={e:.1e}" for op, e in errs.items()))
        return worst, "; ".join(parts)

    return _timed("7 form factors vs ED", tol, run, TIME_LIMITS["form_factors"])


# --------------------------------------------------------------------------
# 8. derivatives


def _shifted(params: ModelParams, delta: float) -> ModelParams:
    if params.is_spin_boson:
        return params.with_omega(params.omega + delta)
    return params.with_coupling(1.0 / (1.0 / params.g + delta))


def _follow(params: ModelParams, state: LambdaState, delta: float, cfg: SolverConfig) -> LambdaState:
    p = _shifted(params, delta)
    guess = LambdaState(state.values + delta * lambda_derivatives(params, state), state.M, Rep.PARTICLE)
    return newton_solve(p, state.M, Rep.PARTICLE, guess, cfg)


def fd_overlap_derivative(params, bra, ket, delta=1e-5, cfg=SolverConfig()) -> float:
    """Central difference of <mu_bra(x)|lambda_ket(x +- delta)> / delta; test oracle only."""
    up = overlap(params, bra.lambda_hole, _follow(params, ket.lambda_particle, delta, cfg))
    down = overlap(params, bra.lambda_hole, _follow(params, ket.lambda_particle, -delta, cfg))
    return (up - down) / (2 * delta)


def check_derivatives(tol_lambda=None, tol_overlap=None, seed=DEFAULT_SEED, cfg=SolverConfig(), delta=1e-5, models=None) -> list[CheckResult]:
    tol_lambda = DEFAULT_TOLERANCES["lambda_derivatives"] if tol_lambda is None else tol_lambda
    tol_overlap = DEFAULT_TOLERANCES["overlap_derivative"] if tol_overlap is None else tol_overlap
    models = [random_model(3, seed), random_model(3, seed, "spin_only")] if models is None else models
    t0 = time.perf_counter()
    worst_l, worst_o = 0.0, 0.0
    for params in models:
        for M in (1, 2):
            recs = _records(params, M, cfg)
            for rec in recs:
                st = rec.lambda_particle
                fd = (_follow(params, st, delta, cfg).values - _follow(params, st, -delta, cfg).values) / (2 * delta)
                scale = max(1.0, float(np.max(np.abs(fd))))
                worst_l = max(worst_l, float(np.max(np.abs(fd - rec.dlambda))) / scale)
            for bra in recs:
                for ket in recs:
                    if bra is ket:
                        continue
                    a = overlap_omega_derivative(params, bra, ket)
                    b = fd_overlap_derivative(params, bra, ket, delta, cfg)
                    worst_o = max(worst_o, abs(a - b) / max(abs(a), 1e-300))
    dt = time.perf_counter() - t0
    return [
        CheckResult("8a Lambda derivatives vs finite differences", worst_l, tol_lambda, worst_l <= tol_lambda, dt),
        CheckResult("8b overlap derivative vs finite differences", worst_o, tol_overlap, worst_o <= tol_overlap, dt),
    ]


# --------------------------------------------------------------------------
# 9. sum rules


def check_sum_rules(tol=None, seed=DEFAULT_SEED, cfg=SolverConfig(), models=None) -> CheckResult:
    tol = DEFAULT_TOLERANCES["sum_rules"] if tol is None else tol
    models = [random_model(3, seed), random_model(4, seed, "spin_only")] if models is None else models

    def run():
        worst, count = 0.0, 0
        for params in models:
            sectors = range(0, 5) if params.is_spin_boson else range(0, params.N + 1)
            for M in sectors:
                for rec in _records(params, M, cfg):
                    total = sum(ff_sz_diagonal(params, rec, k) for k in range(params.N))
                    if params.is_spin_boson:
                        total += ff_number(params, rec, rec)
                    worst = max(worst, abs(total - (M - params.N / 2)))
                    count += 1
        return worst, f"{count} states"

    return _timed("9 sum rules", tol, run)


# --------------------------------------------------------------------------
# 10. continuation robustness


def check_continuation(tol=None, seed=DEFAULT_SEED, cfg=SolverConfig()) -> CheckResult:
    tol = DEFAULT_TOLERANCES["scan_residual"] if tol is None else tol
    params = random_model(3, seed)

    def run():
        points = scan(params, 2, "V", np.linspace(0.05, 2.0, 40), cfg)
        collisions = sum(len(p.collisions) for p in points)
        worst = max(float(p.residuals.max()) for p in points)
        if collisions:
            return np.inf, f"{collisions} branch collisions"
        return worst, "40 points, 0 collisions"

    return _timed("10 continuation robustness", tol, run, TIME_LIMITS["continuation"])


# --------------------------------------------------------------------------


def run_all(tolerances: dict | None = None, seed: int = DEFAULT_SEED, cfg: SolverConfig = SolverConfig(), max_dim: int = MAX_DIM) -> list[CheckResult]:
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    unknown = set(tol) - set(DEFAULT_TOLERANCES)
    if unknown:
        raise ValueError(f"unknown tolerance keys: {sorted(unknown)}")
    results = [
        check_commuting_charges(tol["commuting_charges"], seed, max_dim),
        check_spectrum_completeness(tol["spectrum_completeness"], seed, cfg, max_dim),
        check_qbe_encoding(tol["qbe_encoding"], seed, max_dim),
        *check_representation_duality(tol["hole_qbe"], tol["hole_bethe"], seed, cfg),
        check_partition_theorem(tol["partition_function"], seed),
        check_recursion(tol["recursion"], seed),
        *check_norms(tol["norm_product"], seed, cfg),
        check_form_factors(tol["form_factors"], seed, cfg),
        *check_derivatives(tol["lambda_derivatives"], tol["overlap_derivative"], seed, cfg),
        check_sum_rules(tol["sum_rules"], seed, cfg),
        check_continuation(tol["scan_residual"], seed, cfg),
    ]
    return results
