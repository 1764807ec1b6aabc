import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from djcg.determinants import eigenstate_record
from djcg.errors import DegenerateStateError, RealizationError, SectorError
from djcg.formfactors import (
    ff_b,
    ff_bdagger,
    ff_number,
    ff_sminus,
    ff_splus,
    ff_sz,
    ff_sz_diagonal,
    form_factor_table,
    overlap_omega_derivative,
    same_state,
    sector_shift,
    sz_prefactor,
)
from djcg.model import ModelParams, Rep
from djcg.qbe import solve_sector
from djcg.verify import fd_overlap_derivative, form_factor_errors


def _records(params, M):
    return [eigenstate_record(params, s) for s in solve_sector(params, M, Rep.PARTICLE)]


# --------------------------------------------------------------------------
# resonant Jaynes-Cummings


def test_jc_raising(solved):
    p = solved.params("jc")
    vac, ones = solved.records("jc", 0), solved.records("jc", 1)
    sp = form_factor_table(p, "Splus", ones, vac, k=0, normalized=False)[:, 0]
    bd = form_factor_table(p, "Bdag", ones, vac, normalized=False)[:, 0]
    assert sp == pytest.approx([1.0, 1.0], abs=1e-12)
    assert bd == pytest.approx([-1.0, 1.0], abs=1e-12)


def test_jc_number_operators(solved):
    p = solved.params("jc")
    for rec in solved.records("jc", 1):
        assert ff_sz_diagonal(p, rec, 0) == pytest.approx(0.0, abs=1e-12)
        assert ff_number(p, rec, rec) == pytest.approx(0.5, abs=1e-12)
    vac = solved.records("jc", 0)[0]
    assert ff_sz_diagonal(p, vac, 0) == -0.5
    assert ff_number(p, vac, vac) == 0.0


# --------------------------------------------------------------------------
# exact diagonalization


@pytest.mark.parametrize(
    "key, sectors",
    [("sb3", [1, 2, 3]), ("so4", [2]), ("sb2", [1]), ("so2", [1]), ("sb3_neg", [1, 2]), ("so4_neg", [1, 2])],
)
def test_tables_match_ed(solved, key, sectors):
    errs = form_factor_errors(solved.params(key), sectors)
    assert max(errs.values()) <= 1e-10, errs


def test_lowering_operators_are_transposes(solved):
    p = solved.params("sb3")
    lo, hi = solved.records("sb3", 1), solved.records("sb3", 2)
    for m, a in enumerate(lo):
        for n, b in enumerate(hi):
            assert ff_sminus(p, a, b, 1) == ff_splus(p, b, a, 1, normalized=True)
            assert ff_b(p, a, b) == ff_bdagger(p, b, a, normalized=True)
    T = form_factor_table(p, "Sminus", lo, hi, k=2)
    assert np.array_equal(T, form_factor_table(p, "Splus", hi, lo, k=2).T)


@pytest.mark.parametrize("key, op, k", [("sb3", "Sz", 0), ("sb3", "NumberB", None), ("so4", "Sz", 2)])
def test_number_operators_are_hermitian(solved, key, op, k):
    recs = solved.records(key, 2)
    T = form_factor_table(solved.params(key), op, recs, recs, k)
    assert np.allclose(T, T.T, atol=1e-10)


@pytest.mark.parametrize("key, M", [("sb3", 0), ("sb3", 2), ("sb4", 3), ("so4", 2), ("so3", 3), ("sb3_neg", 2)])
def test_sum_rule(solved, key, M):
    p = solved.params(key)
    for rec in solved.records(key, M):
        total = sum(ff_sz_diagonal(p, rec, k) for k in range(p.N))
        if p.is_spin_boson:
            total += ff_number(p, rec, rec)
        assert total == pytest.approx(M - p.N / 2, abs=1e-12 * max(1, M))


@pytest.mark.parametrize("key", ["sb3", "so3"])
def test_prefactor_is_charge_difference(solved, key):
    p = solved.params(key)
    recs = solved.records(key, 2)
    for bra in recs:
        for ket in recs:
            assert np.allclose(sz_prefactor(p, bra, ket), bra.charges - ket.charges, atol=1e-10)


@pytest.mark.parametrize("key", ["sb3", "so3"])
def test_overlap_derivative_finite_differences(solved, key):
    p = solved.params(key)
    recs = solved.records(key, 1)
    a = overlap_omega_derivative(p, recs[0], recs[2])
    assert fd_overlap_derivative(p, recs[0], recs[2]) == pytest.approx(a, rel=1e-6)


def test_same_state_guard(solved):
    p = solved.params("sb3")
    rec = solved.records("sb3", 2)[1]
    assert same_state(rec, rec)
    with pytest.raises(DegenerateStateError):
        overlap_omega_derivative(p, rec, rec)
    assert ff_sz(p, rec, rec, 0) == ff_sz_diagonal(p, rec, 0)


def test_sector_and_realization_errors(solved):
    p, q = solved.params("sb3"), solved.params("so3")
    a, b = solved.records("sb3", 1), solved.records("sb3", 2)
    with pytest.raises(SectorError):
        ff_splus(p, a[0], a[1], 0)
    with pytest.raises(SectorError):
        ff_bdagger(p, b[0], b[0])
    with pytest.raises(SectorError):
        overlap_omega_derivative(p, a[0], b[0])
    qa, qb = solved.records("so3", 1), solved.records("so3", 2)
    with pytest.raises(RealizationError):
        ff_bdagger(q, qb[0], qa[0])
    with pytest.raises(RealizationError):
        form_factor_table(q, "NumberB", qa, qa)
    with pytest.raises(ValueError):
        form_factor_table(p, "Sx", a, a, 0)
    with pytest.raises(ValueError):
        form_factor_table(p, "Sz", a, a)


def test_sector_shifts():
    assert [sector_shift(op) for op in ("Splus", "Bdag", "Sminus", "B", "Sz", "NumberB")] == [1, 1, -1, -1, 0, 0]


def test_spin_only_weak_coupling_diagonal():
    """At small g every spin sits near +-1/2, as in the uncoupled seed."""
    p = ModelParams.spin_only([0.3, 1.1, 2.0], g=1e-3)
    for M in (1, 2):
        for rec in _records(p, M):
            sz = np.array([ff_sz_diagonal(p, rec, k) for k in range(3)])
            assert np.allclose(np.abs(sz), 0.5, atol=1e-3)
            assert np.sum(sz > 0) == M


@settings(max_examples=15, deadline=None)
@given(
    eps=st.lists(st.floats(-2, 2), min_size=2, max_size=3, unique=True).filter(
        lambda e: min(abs(a - b) for i, a in enumerate(e) for b in e[i + 1 :]) > 0.2
    ),
    omega=st.floats(-1, 3),
    V=st.floats(0.2, 1.5),
)
def test_splus_completeness(eps, omega, V):
    """Sum over bras of |<bra|S^+_k|ket>|^2 equals <ket|S^-_k S^+_k|ket> = 1/2 - <S^z_k>."""
    p = ModelParams.spin_boson(sorted(eps), omega=omega, V=V)
    lo, hi = _records(p, 1), _records(p, 2)
    for ket in lo:
        for k in range(p.N):
            col = np.array([ff_splus(p, bra, ket, k, normalized=True) for bra in hi])
            assert np.sum(col**2) == pytest.approx(0.5 - ff_sz_diagonal(p, ket, k), abs=1e-8)
