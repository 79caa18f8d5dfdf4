import math

import pytest

from srnmeasure.chain import translate
from srnmeasure.coeff import gamma_table
from srnmeasure.errors import ScopeError
from srnmeasure.netparse import build_transition_system, parse_network
from srnmeasure.numeric import NumericBackend, to_float
from srnmeasure.report import log_growth_fit
from srnmeasure.solve import linear_scheme, residual_report
from srnmeasure.upskip import (AdmissibilityError, generator_from_phi, h_fun, h_series_terms,
                               measure_from_phi, phi_from_generator, psi_convergents, ratio_bounds,
                               uniqueness_test)

MP = NumericBackend("mp")
MASS_ACTION = "0 -> S @ 1\n2S -> 0 @ 1"


def _ts(text):
    return build_transition_system(parse_network(text))


def test_h_mass_action():
    # h(x) = lambda_-2(x-1) lambda_-2(x) / (lambda_1(x-1) lambda_-2(x)) = (x-1)(x-2)
    ts = _ts(MASS_ACTION)
    for x in range(3, 12):
        assert to_float(h_fun(ts, x)) == pytest.approx((x - 1) * (x - 2), rel=1e-30)
    assert to_float(h_fun(ts, 3)) == 2


def test_h_domain():
    with pytest.raises(ValueError):
        h_fun(_ts(MASS_ACTION), 2)


def test_h_needs_upskip_structure():
    with pytest.raises(ScopeError):
        h_fun(_ts("0 -> 2S @ 1\n2S -> 0 @ 1\nS -> 0 @ 1"), 5)
    with pytest.raises(ScopeError):
        h_fun(_ts("0 <-> S @ 1, 1"), 5)


def test_nonunique_q_is_one(net):
    _, qs = h_series_terms(net("nonunique"), 200)
    assert all(abs(to_float(q) - 1) < 1e-60 for q in qs)


def test_psi_interval_nonunique(net):
    conv = psi_convergents(net("nonunique"), 3, 700)
    assert abs(to_float(conv.psi_even) - 1.5351) < 1e-3
    assert abs(to_float(conv.psi_odd) - 2.6791) < 1e-3
    assert conv.backward_check < 1e-12


def test_psi_depth_zero_bracket(net):
    # psi(x,0) = h(x) and psi(x,1) = h(x)(1 + 1/h(x+1))
    conv = psi_convergents(net("nonunique"), 3, 0)
    h3, h4 = to_float(h_fun(net("nonunique"), 3)), to_float(h_fun(net("nonunique"), 4))
    assert to_float(conv.psi_even) == pytest.approx(h3)
    assert to_float(conv.psi_odd) == pytest.approx(h3 * (1 + 1 / h4))


@pytest.mark.parametrize("name", ["nonunique", "signed"])
def test_convergents_are_monotone_and_bracket(net, name):
    conv = psi_convergents(net(name), depth=120)
    ev, od = conv.even_sequence, conv.odd_sequence
    rel = 1e-70  # rounding level of the 256-bit arithmetic
    assert all(b - a >= -rel * a for a, b in zip(ev, ev[1:]))
    assert all(a - b >= -rel * a for a, b in zip(od, od[1:]))
    assert max(ev) - min(od) <= rel * min(od)


def test_signed_network_interval_collapses(net):
    conv = psi_convergents(net("signed"), depth=700)
    assert conv.width < 1e-12
    assert to_float(conv.psi_even) == pytest.approx(5.6369, abs=1e-4)


def test_uniqueness_mass_action():
    rep = uniqueness_test(_ts(MASS_ACTION))
    assert rep.verdict == "unique" and rep.method == "polynomial-rule"


def test_uniqueness_nonunique_short(net):
    rep = uniqueness_test(net("nonunique"), n_terms=4000)
    assert rep.verdict == "non-unique"
    assert rep.tail_exponent == pytest.approx(2.0, abs=0.05)
    # partial sum plus certified tail brackets pi^2/3 - 1
    target = math.pi ** 2 / 3 - 1
    assert rep.H_estimate <= target <= rep.H_estimate + rep.tail_bound * 1.01


def test_uniqueness_signed_network(net):
    rep = uniqueness_test(net("signed"))
    assert rep.verdict == "unique"
    assert any("terms grow past" in n for n in rep.notes)


def test_uniqueness_scope(net):
    with pytest.raises(ScopeError):
        uniqueness_test(net("cycle"))


def test_nonunique_even_state_fit(net):
    series = measure_from_phi(net("nonunique"), 2.67, 1, 60)
    states = list(range(4, 51, 2))
    (c0, c1, c2), err = log_growth_fit(series.values, states)
    # reported fit in the half-index form log pi(2x) = 3.504 + 2.009 x log x - 3.429 x
    assert abs(c0 - 3.504) <= 0.15
    assert abs(c1 - 2.009) <= 0.01
    assert abs(c2 + 3.429) <= 0.03
    assert err < 0.1


def test_admissibility_error_above_interval(net):
    with pytest.raises(AdmissibilityError):
        measure_from_phi(net("nonunique"), 2.8, 1, 300)
    with pytest.raises(AdmissibilityError):
        measure_from_phi(net("nonunique"), 1.4, 1, 300)


@pytest.mark.parametrize("phi", [1.54, 2.0, 2.67])
def test_phi_measures_are_positive_stationary(net, phi):
    ts = net("nonunique")
    series = measure_from_phi(ts, phi, 1, 60)
    assert all(v > 0 for v in series.values)
    rep = residual_report(translate(ts), series.values)
    assert rep.master_max <= 1e-8
    assert rep.flux_max <= 1e-8


def test_cone_property(net):
    ts = net("nonunique")
    a = measure_from_phi(ts, 1.6, 1, 60).values
    b = measure_from_phi(ts, 2.6, 1, 60).values
    ratios = [to_float(x / y) for x, y in zip(a, b)]
    assert max(ratios) - min(ratios) > 1e-3  # linearly independent
    mix = [0.3 * x + 0.7 * y for x, y in zip(a, b)]
    assert all(v > 0 for v in mix)
    assert residual_report(translate(ts), mix).master_max <= 1e-8


def test_phi_round_trip(net):
    ts = net("nonunique")
    g = generator_from_phi(ts, 2.0)
    table = gamma_table(translate(ts), 10, MP)
    assert phi_from_generator(table, g.v) == pytest.approx(2.0, rel=1e-12)


def test_ratio_bounds_nonunique(net):
    table = gamma_table(translate(net("nonunique")), 101, MP)
    rb = ratio_bounds(table, 100)
    assert rb.r1 <= rb.r2
    lo, hi = rb.phi_interval
    assert abs(lo - 1.5240) <= 1e-2 and abs(hi - 2.7161) <= 1e-2
    # matches the linear scheme at the two parities
    phis = sorted(phi_from_generator(table, linear_scheme(table, n).v) for n in (100, 101))
    assert phis[0] == pytest.approx(lo, abs=1e-6)
    assert abs(phis[1] - hi) < 1e-2


def test_ratio_bounds_mass_action_shrink():
    tr = translate(_ts("0 -> S @ 3\nS -> 2S @ 1\n2S -> 0 @ 2"))
    widths = []
    for n in (20, 40, 80):
        rb = ratio_bounds(gamma_table(tr, n, MP), n)
        widths.append(rb.r2 - rb.r1)
    assert all(w >= 0 for w in widths)
    assert widths[0] >= widths[1] >= widths[2]
    assert widths[2] < 1e-8


def test_ratio_bounds_scope():
    table = gamma_table(translate(_ts("0 <-> S @ 1, 1")), 10)
    with pytest.raises(ScopeError):
        ratio_bounds(table)
