import itertools
from math import factorial, sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from djcg.determinants import (
    brute_force_partition,
    default_reference,
    eigenstate_record,
    hole_projection,
    minor_determinant,
    mixed_matrix,
    norm_product,
    norm_ratio,
    overlap,
    partition_function,
)
from djcg.ed import SectorBasis, ed_state_from_rapidities
from djcg.errors import OracleTooLargeError, SectorError
from djcg.model import BasisState, LambdaState, ModelParams, RapiditySet, Rep, enumerate_basis, lambda_from_rapidities
from djcg.qbe import hole_from_particle
from djcg.repmap import rapidities_from_lambda

JC = ModelParams.spin_boson([1.0], omega=1.0, V=0.5)


# ---------------------------------------------------------------- partition functions


def test_one_by_one():
    p = ModelParams.spin_boson([1.0], omega=0.0, V=0.5)
    assert partition_function(p, RapiditySet(np.array([3.0])), BasisState(0, (0,))) == pytest.approx(0.25)
    assert brute_force_partition(p, RapiditySet(np.array([3.0])), BasisState(0, (0,))) == pytest.approx(0.25)


@pytest.mark.parametrize("M", [0, 1, 3, 5])
def test_pure_boson_projection(M):
    p = ModelParams.spin_boson([0.0, 1.0], omega=0.0, V=0.7)
    nu = RapiditySet(np.linspace(-2.3, 3.1, M))
    b = BasisState(M, ())
    assert partition_function(p, nu, b) == pytest.approx(sqrt(factorial(M)))
    assert brute_force_partition(p, nu, b) == pytest.approx(sqrt(factorial(M)))


def test_conjugate_pair_two_spins():
    p = ModelParams.spin_boson([0.0, 1.0], omega=0.0, V=0.7)
    nu = RapiditySet(np.array([0.4 + 0.8j, 0.4 - 0.8j]))
    a = partition_function(p, nu, BasisState(0, (0, 1)))
    b = brute_force_partition(p, nu, BasisState(0, (0, 1)))
    assert isinstance(a, float)
    assert abs(a - b) <= 1e-12 * abs(b)


def test_brute_force_symmetry():
    p = ModelParams.spin_boson([0.0, 1.0], omega=0.0, V=0.7)
    nu = np.array([-1.3, 0.45, 2.2, 3.7])
    b = BasisState(2, (0, 1))
    a1 = brute_force_partition(p, RapiditySet(nu), b)
    a2 = brute_force_partition(p, RapiditySet(nu[::-1]), b)
    assert abs(a1 - a2) <= 1e-15 * abs(a1)
    assert abs(partition_function(p, RapiditySet(nu), b) - a1) <= 1e-12 * abs(a1)


def test_guards_and_mismatch():
    p = ModelParams.spin_boson([0.0, 1.0], omega=0.0, V=0.7)
    with pytest.raises(OracleTooLargeError):
        brute_force_partition(p, RapiditySet(np.arange(9) + 0.5), BasisState(9, ()))
    with pytest.raises(SectorError):
        partition_function(p, RapiditySet(np.array([0.5])), BasisState(1, (0,)))
    with pytest.raises(SectorError):
        brute_force_partition(p, RapiditySet(np.array([0.5])), BasisState(1, (0,)))


def _rapidities(draw_values, eps):
    vals = np.array(draw_values)
    if np.min(np.abs(vals[:, None] - eps[None, :]), initial=1.0) < 0.05:
        return None
    if vals.size > 1 and np.min(np.abs(np.diff(np.sort(vals)))) < 0.05:
        return None
    return vals


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 3),
    st.lists(st.floats(-3, 5), min_size=0, max_size=6),
    st.sampled_from(["spin_boson", "spin_only"]),
    st.data(),
)
def test_partition_function_theorem(N, values, realization, data):
    eps = np.array([0.0, 1.1, 2.3][:N])
    p = ModelParams.spin_boson(eps, omega=0.5, V=0.8) if realization == "spin_boson" else ModelParams.spin_only(eps, g=0.8)
    if not p.is_spin_boson:
        values = values[:N]
    nu = _rapidities(values, eps) if values else np.zeros(0)
    if nu is None:
        return
    basis = enumerate_basis(p, len(nu))
    b = data.draw(st.sampled_from(basis))
    a = partition_function(p, RapiditySet(nu), b)
    c = brute_force_partition(p, RapiditySet(nu), b)
    assert abs(a - c) <= 1e-10 * max(abs(c), 1e-300)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.floats(0.2, 1.5), st.data())
def test_recursion_identity(N, total, V, data):
    eps = np.array([0.0, 0.8, 1.9, 3.2][:N])
    p = ModelParams.spin_boson(eps, omega=1.0, V=V)
    vals = data.draw(st.lists(st.floats(-3, 5), min_size=total, max_size=total))
    nu = _rapidities(vals, eps)
    if nu is None:
        return
    b = data.draw(st.sampled_from(enumerate_basis(p, total)))
    lhs = partition_function(p, RapiditySet(nu), b)
    old, new = RapiditySet(nu[:-1]), nu[-1]
    rhs = sqrt(b.n_b) * partition_function(p, old, BasisState(b.n_b - 1, b.flipped)) if b.n_b else 0.0
    for j in b.flipped:
        rest = tuple(i for i in b.flipped if i != j)
        rhs += V / (new - eps[j]) * partition_function(p, old, BasisState(b.n_b, rest))
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs), 1e-300)


def test_lambda_input_equals_rapidity_input(solved):
    p = solved.params("sb3")
    for s in solved.states("sb3", 2):
        nu = rapidities_from_lambda(p, s)
        for b in enumerate_basis(p, 2):
            assert partition_function(p, s, b) == pytest.approx(partition_function(p, nu, b), rel=1e-9, abs=1e-12)


def test_partition_function_rejects_hole_state():
    with pytest.raises(ValueError):
        partition_function(JC, LambdaState(np.array([2.0]), 1, Rep.HOLE), BasisState(0, (0,)))


# ---------------------------------------------------------------- minors


def test_minor_examples():
    assert minor_determinant(np.array([[7.0]]), 0) == 1.0
    assert minor_determinant(np.diag([2.0, 3.0, 4.0]), 1) == pytest.approx(8.0)
    with pytest.raises(IndexError):
        minor_determinant(np.eye(2), 2)


def _cofactor_det(A):
    n = A.shape[0]
    if n == 0:
        return 1.0
    if n == 1:
        return A[0, 0]
    return sum((-1) ** j * A[0, j] * _cofactor_det(np.delete(np.delete(A, 0, 0), j, 1)) for j in range(n))


@settings(max_examples=20)
@given(st.integers(0, 2**31 - 1), st.integers(0, 4))
def test_minor_matches_cofactor_expansion(seed, k):
    A = np.random.default_rng(seed).normal(size=(5, 5))
    minor = np.delete(np.delete(A, k, 0), k, 1)
    expect = _cofactor_det(minor)
    assert abs(minor_determinant(A, k) - expect) <= 1e-12 * max(1.0, abs(expect))


# ---------------------------------------------------------------- norms


def test_jc_norms():
    from djcg.qbe import solve_sector

    states = solve_sector(JC, 1)
    values = {round(s.values[0], 12): s for s in states}
    low, high = values[2.0], values[-2.0]
    assert norm_product(JC, low) == pytest.approx(-2.0, abs=1e-14)
    assert norm_product(JC, high) == pytest.approx(2.0, abs=1e-14)
    ratio, ref = norm_ratio(JC, low)
    assert ref == BasisState(0, (0,))
    assert ratio == pytest.approx(-1.0)
    assert partition_function(JC, low, ref) == pytest.approx(-1.0)
    assert hole_projection(JC, hole_from_particle(JC, low), ref) == pytest.approx(1.0)
    rec = eigenstate_record(JC, low)
    assert rec.norm_particle**2 == pytest.approx(2.0)
    assert rec.norm_hole**2 == pytest.approx(2.0)


def test_vacuum_norm_vs_ed():
    p = ModelParams.spin_boson([0.2, 1.0, 2.1], omega=1.4, V=0.6)
    vac = LambdaState(np.zeros(3), 0, Rep.PARTICLE)
    hole = hole_from_particle(p, vac)
    mu = ed_state_from_rapidities(p, rapidities_from_lambda(p, hole), 0)
    lam = ed_state_from_rapidities(p, RapiditySet(np.zeros(0, dtype=complex)), 0)
    assert norm_product(p, vac) == pytest.approx(float(np.dot(mu, lam)), rel=1e-10)


def test_resonant_vacuum_is_degenerate():
    vac = LambdaState(np.zeros(1), 0, Rep.PARTICLE)
    assert norm_product(JC, vac) == 0.0
    rec = eigenstate_record(JC, vac)
    assert rec.norm_particle == 1.0 and rec.norm_hole == 0.0


def test_default_reference():
    p = ModelParams.spin_boson([0.0, 1.0, 2.0], omega=0.5, V=1.0)
    assert default_reference(p, 2) == BasisState(0, (0, 1))
    assert default_reference(p, 5) == BasisState(2, (0, 1, 2))
    q = ModelParams.spin_only([0.0, 1.0, 2.0], g=1.0)
    assert default_reference(q, 1) == BasisState(0, (0,))


@pytest.mark.parametrize("key", ["sb3", "so4", "sb3_neg", "so4_neg"])
def test_norms_vs_ed_vectors(solved, key):
    p = solved.params(key)
    for M in range(0, p.N + 1):
        basis = SectorBasis.build(p, M)
        for rec in solved.records(key, M):
            lam = ed_state_from_rapidities(p, rapidities_from_lambda(p, rec.lambda_particle), M)
            mu = ed_state_from_rapidities(p, rapidities_from_lambda(p, rec.lambda_hole), M)
            assert rec.norm_product == pytest.approx(float(np.dot(mu, lam)), rel=1e-10)
            assert rec.norm_particle**2 == pytest.approx(float(np.dot(lam, lam)), rel=1e-10)
            assert rec.norm_hole**2 == pytest.approx(float(np.dot(mu, mu)), rel=1e-10)
            # projections on every basis state are the components of the explicit vectors
            for a, b in enumerate(basis.states):
                assert partition_function(p, rec.lambda_particle, b) == pytest.approx(lam[a], rel=1e-9, abs=1e-12 * np.max(np.abs(lam)))
                assert hole_projection(p, rec.lambda_hole, b) == pytest.approx(mu[a], rel=1e-9, abs=1e-12 * np.max(np.abs(mu)))


@pytest.mark.parametrize("key", ["sb3", "sb4", "so4"])
def test_sign_consistency_across_references(solved, key):
    p = solved.params(key)
    for M in (1, 2):
        for rec in solved.records(key, M):
            assert rec.norm_product * rec.norm_ratio > 0
            for ref in enumerate_basis(p, M):
                den = hole_projection(p, rec.lambda_hole, ref)
                if abs(den) < 1e-8 * np.sqrt(abs(rec.norm_product)):
                    continue
                r, _ = norm_ratio(p, rec, ref)
                assert r == pytest.approx(rec.norm_ratio, rel=1e-8)


@pytest.mark.parametrize("key", ["sb3", "so4"])
def test_distinct_eigenstates_are_orthogonal(solved, key):
    p = solved.params(key)
    recs = solved.records(key, 2)
    for m, n in itertools.permutations(range(len(recs)), 2):
        scale = abs(recs[m].norm_hole * recs[n].norm_particle)
        assert abs(overlap(p, recs[m].lambda_hole, recs[n].lambda_particle)) <= 1e-9 * scale


def test_mixed_matrix_is_jacobian_form(solved):
    """For one state the mixed matrix equals the negated transposed Jacobian (spin-boson particle)."""
    from djcg.qbe import qbe_jacobian

    p = solved.params("sb3")
    for rec in solved.records("sb3", 2):
        J = mixed_matrix(p, rec.lambda_particle.values, rec.lambda_hole.values)
        assert np.allclose(J, qbe_jacobian(p, rec.lambda_particle), rtol=1e-12, atol=1e-12)


def test_overlap_errors(solved):
    recs1 = solved.records("sb3", 1)
    recs2 = solved.records("sb3", 2)
    p = solved.params("sb3")
    with pytest.raises(SectorError):
        overlap(p, recs2[0].lambda_hole, recs1[0].lambda_particle)
    with pytest.raises(ValueError):
        overlap(p, recs1[0].lambda_particle, recs1[0].lambda_particle)
