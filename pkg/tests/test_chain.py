import pytest
from hypothesis import given

from srnmeasure.chain import classify, translate
from srnmeasure.errors import ScopeError
from srnmeasure.netparse import build_transition_system, parse_network

from strategies import reactions


def _ts(text):
    return build_transition_system(parse_network(text))


def test_trapping_and_qic():
    cls = classify(_ts("S -> 0 @ 1\n2S <-> 3S @ 1, 1"))
    assert cls.neutral == ()
    assert cls.trapping == (0, 0)
    assert cls.escaping == (1, 1)
    assert cls.pics == () and cls.qics == (2,)


def test_neutral_state_and_pic():
    cls = classify(_ts("S -> 2S @ 1\n2S <-> 3S @ 1, 1"))
    assert cls.neutral == (0, 0)
    assert cls.trapping == ()
    assert cls.escaping == (1, 1)
    assert cls.pics == (2,)
    assert cls.kind(0) == "neutral" and cls.kind(7) == "pic"


def test_two_parity_classes():
    ts = _ts("0 <-> 2S @ 1, 1\n5S -> S @ 1")
    cls = classify(ts)
    assert cls.omega_star == 2 and cls.pics == (0, 1)
    t0, t1 = translate(ts, 0), translate(ts, 1)
    assert (t0.L, t0.U) == (1, 2)
    assert (t1.L, t1.U) == (0, 1)
    assert t1.original_state(3) == 7


def test_equations_example_range():
    tr = translate(_ts("0 <-> S @ 1, 1\n2S <-> 4S @ 1, 1"))
    assert (tr.s, tr.L, tr.U) == (0, 2, 3)


def test_birth_death_range():
    tr = translate(_ts("0 <-> S @ 1, 1"))
    assert tr.L == tr.U == 0


def test_first_example_translated():
    tr = translate(_ts("S -> 2S @ 40\n2S <-> 3S @ 22, 1\n3S -> S @ 1"))
    assert (tr.s, tr.L, tr.U) == (1, 0, 1)
    # translated rates are the original ones shifted by s
    assert tr.base.exact_rate(1, 0) == 40 and tr.base.exact_rate(-2, 2) == 6


def test_translate_rejects_non_pic():
    ts = _ts("0 <-> 2S @ 1, 1\n5S -> S @ 1")
    with pytest.raises(ScopeError):
        translate(ts, 2)
    with pytest.raises(ScopeError):
        translate(_ts("S -> 0 @ 1\n2S <-> 3S @ 1, 1"))


@given(reactions())
def test_pics_nonempty_iff_threshold_inequality(rs):
    cls = classify(build_transition_system(rs))
    assert (cls.i_plus < cls.o_minus + cls.omega_star) == bool(cls.pics)


@given(reactions())
def test_every_state_is_classified(rs):
    cls = classify(build_transition_system(rs))
    kinds = {cls.kind(x) for x in range(40)}
    assert kinds <= {"neutral", "trapping", "escaping", "pic", "qic"}
