import csv
import io
import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srnmeasure.chain import translate
from srnmeasure.coeff import (boundary_matrices, c_fun, dense_det, f_fun, gamma_table,
                              hessenberg_gamma, hessenberg_matrix, hessenberg_series, is_wcdd,
                              jump_set, lemma_violations, sign_structure_violations)
from srnmeasure.netparse import build_transition_system, parse_network
from srnmeasure.numeric import NumericBackend, to_float
from srnmeasure.solve import residual_report

from strategies import translated_networks

EXACT = NumericBackend("exact")
B64 = NumericBackend("binary64")
MP = NumericBackend("mp")


def _tr(text, s=None):
    return translate(build_transition_system(parse_network(text)), s)


EQUATIONS = "0 <-> S @ 3, 5\n2S <-> 4S @ 7, 11"
REGRESSION = ["first", "cycle", "equations", "kummer", "nullrec", "explosive", "nonunique", "signed"]


@pytest.mark.parametrize("text, k, expected", [
    ("0 <-> S @ 1, 1", 0, {-1}),
    ("0 <-> S @ 1, 1", 1, {1}),
    ("0 -> S @ 1\n2S -> 0 @ 1", 0, {-2}),
    ("0 <-> S @ 1, 1\n2S <-> 4S @ 1, 1", 3, {2}),
    ("0 <-> S @ 1, 1\n2S <-> 4S @ 1, 1", 1, {-1, -2}),
])
def test_jump_sets(text, k, expected):
    assert jump_set(_tr(text), k) == frozenset(expected)


def test_birth_death_c_and_f():
    tr = _tr("0 <-> S @ 2, 3")
    for ell in range(1, 10):
        assert c_fun(tr, 0, ell, EXACT) == -3 * ell
        assert c_fun(tr, 1, ell, EXACT) == 2
        assert f_fun(tr, 1, ell, EXACT) == Fraction(2, 3 * ell)
        assert f_fun(tr, 0, ell, EXACT) == -1


def test_c0_vanishes_up_to_U(net):
    for name in REGRESSION:
        tr = translate(net(name))
        assert c_fun(tr, 0, tr.U, EXACT if tr.base.exact_capable else B64) == 0


def test_equations_low_flux_identities():
    tr = _tr(EQUATIONS)
    k1, k2 = 3, 5
    # l = 2: -k2 pi(1) + k1 pi(0);  l = 3: -2 k2 pi(2) + k1 pi(1)
    assert [c_fun(tr, k, 2 - k, EXACT) for k in range(3)] == [0, -k2, k1]
    assert [c_fun(tr, k, 3 - k, EXACT) for k in range(4)] == [0, -2 * k2, k1, 0]


def test_f_top_index_positive(net):
    tr = translate(net("equations"))
    ms, ip = tr.base.m_star, tr.base.i_omega[tr.base.omega_plus]
    for ell in range(tr.U + 1, 40):
        if ell - ms >= ip:
            assert f_fun(tr, ms, ell, EXACT) > 0


def test_equations_boundary_values():
    tr = _tr(EQUATIONS)
    k1, k2 = Fraction(3), Fraction(5)
    t = gamma_table(tr, 12, EXACT)
    assert (t.L, t.U) == (2, 3)
    assert t.value(2, 0) == 2 * k2 ** 2 / k1 ** 2
    assert t.value(3, 0) == 0
    assert t.value(2, 1) == 2 * k2 / k1
    assert t.value(3, 1) == 0
    unit = gamma_table(_tr("0 <-> S @ 1, 1\n2S <-> 4S @ 1, 1"), 5, EXACT)
    assert unit.value(2, 0) == 2 and unit.value(2, 1) == 2


def test_boundary_empty_when_L_zero(net):
    b = boundary_matrices(translate(net("first")))
    assert b.H == [] and b.wcdd


def test_identity_block_and_gamma_U_below_L(net):
    for name in REGRESSION:
        tr = translate(net(name))
        t = gamma_table(tr, 30)
        for ell in range(t.L, t.U + 1):
            assert [to_float(v) for v in t.row(ell)] == [1.0 if ell == j else 0.0
                                                         for j in range(t.L, t.U + 1)]
        for ell in range(t.L):
            assert t.value(t.U, ell) == 0
        for ell in range(t.n_max + 1):
            assert any(v != 0 for v in t.row(ell))


def test_first_example_growth(net):
    t = gamma_table(translate(net("first")), 70, B64)
    logs = [math.log(abs(to_float(t.value(j, 70)))) for j in (0, 1)]
    assert all(45 < v < 60 for v in logs)


def test_binary64_overflow_falls_back_to_high_precision(net):
    t = gamma_table(translate(net("first")), 1200, B64)
    assert t.flagged and t.backend.mode == "mp"
    assert t.requested == B64
    assert math.isfinite(float(abs(t.value(0, 1200)) ** 0.0))


def test_hessenberg_first_step_and_dense_det():
    t = gamma_table(_tr("0 <-> S @ 1, 1\n2S <-> 4S @ 1, 1"), 20, EXACT)
    for j in (2, 3):
        assert hessenberg_gamma(t, j, 1) == t.value(j, t.U + 1)
        for ell in range(1, 8):
            assert dense_det(hessenberg_matrix(t, j, ell), EXACT) == t.value(j, t.U + ell)


def test_hessenberg_equations_unit_rates():
    t = gamma_table(_tr("0 <-> S @ 1, 1\n2S <-> 4S @ 1, 1"), 12, EXACT)
    for ell in range(4, 11):
        for j in (2, 3):
            assert hessenberg_gamma(t, j, ell - t.U) == t.value(j, ell)


def test_downward_skipfree_determinant():
    tr = _tr("0 -> 2S @ 2\nS -> 0 @ 3\n2S -> S @ 5")
    t = gamma_table(tr, 15, EXACT)
    assert t.L == t.U == 0
    # direct recursion of the master equation from pi(0) = 1
    lam = tr.base.exact_rate
    pi = [Fraction(1)]
    for x in range(1, 16):
        # flux across the cut between x-1 and x: pi(x) lam_-1(x) = sum of up-flux
        up = pi[x - 1] * (lam(2, x - 1)) + (pi[x - 2] * lam(2, x - 2) if x >= 2 else 0)
        pi.append(up / lam(-1, x))
    assert hessenberg_series(t, 0, 15) == pi[1:]


@pytest.mark.parametrize("name", REGRESSION)
def test_determinant_matches_recursion_binary64(net, name):
    t = gamma_table(translate(net(name)), 30 + 5, B64)
    if t.backend.mode != "binary64":
        pytest.skip("table needed high precision")
    for j in range(t.L, t.U + 1):
        dets = hessenberg_series(t, j, 30)
        for ell in range(1, 31):
            ref = to_float(t.value(j, t.U + ell))
            assert abs(to_float(dets[ell - 1]) - ref) / max(1.0, abs(ref)) <= 1e-10


@pytest.mark.parametrize("name", REGRESSION)
def test_lemma_and_sign_structure_on_examples(net, name):
    tr = translate(net(name))
    t = gamma_table(tr, 100, MP)
    assert lemma_violations(t) == []
    assert sign_structure_violations(t) == []


def test_csv_and_json_export(net):
    t = gamma_table(translate(net("cycle")), 10)
    rows = list(csv.reader(io.StringIO(t.to_csv())))
    assert rows[0] == ["l", "gamma_0", "gamma_1", "gamma_2", "cond"]
    assert len(rows) == 12
    doc = json.loads(t.dumps())
    assert doc["L"] == 0 and doc["U"] == 2 and len(doc["gamma"]) == 11


@given(translated_networks())
@settings(max_examples=30)
def test_boundary_block_is_wcdd_after_scaling(tr):
    b = boundary_matrices(tr, EXACT)
    assert b.wcdd
    if tr.L:
        assert is_wcdd(b.scaled)


@given(translated_networks(), st.integers(0, 2**32 - 1))
@settings(max_examples=30)
def test_flux_identity_and_master_equation(tr, seed):
    t = gamma_table(tr, 60, MP)
    v = np.random.default_rng(seed).random(t.d)
    nu = [sum(MP.num(float(v[j])) * r[j] for j in range(t.d)) for r in t.gamma]
    rep = residual_report(tr, nu)
    assert rep.flux_max <= 1e-40
    assert rep.master_max <= 1e-40


def test_to_float_saturates_huge_fractions():
    assert to_float(Fraction(10 ** 400, 3)) == math.inf
    assert to_float(Fraction(-(10 ** 400), 7)) == -math.inf
    assert to_float(Fraction(1, 10 ** 400)) == 0.0
