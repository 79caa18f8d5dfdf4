"""Hypothesis strategies for random one-species mass-action networks."""
from fractions import Fraction

from hypothesis import assume
from hypothesis import strategies as st

from srnmeasure.chain import translate
from srnmeasure.errors import SrnError
from srnmeasure.netparse import RateSpec, Reaction, build_transition_system

kappas = st.builds(Fraction, st.integers(1, 20), st.integers(1, 4))


@st.composite
def reactions(draw, max_jump=4, upskip=False):
    """2-5 reactions with |jump| <= max_jump and at most 5 distinct jumps.

    With ``upskip`` every positive jump is +1 (so the largest jump is 1).
    """
    k = draw(st.integers(2, 5))
    out = []
    for _ in range(k):
        y = draw(st.integers(0, 4))
        ups = [1] if upskip else list(range(1, max_jump + 1))
        downs = [-j for j in range(1, min(max_jump, y) + 1)]
        w = draw(st.sampled_from(ups + downs))
        out.append(Reaction(y, y + w, RateSpec.mass_action(draw(kappas))))
    jumps = {r.jump for r in out}
    assume(any(w > 0 for w in jumps) and any(w < 0 for w in jumps) and len(jumps) <= 5)
    return out


@st.composite
def translated_networks(draw, upskip=None):
    """A translated system on its first positive irreducible class."""
    flag = draw(st.booleans()) if upskip is None else upskip
    rs = draw(reactions(upskip=flag))
    try:
        return translate(build_transition_system(rs))
    except SrnError:
        assume(False)


@st.composite
def birth_death_rates(draw):
    """Positive rational birth and death rate tables on 0..60."""
    births = draw(st.lists(kappas, min_size=61, max_size=61))
    deaths = draw(st.lists(kappas, min_size=61, max_size=61))
    return births, deaths
