import math

import pytest

from superpose.constants import ParameterRejected, check_lemma4, derive

from oracles import lemma4_quantity, standard_constants


@pytest.mark.parametrize("n,m,ok", [(2, 7, True), (3, 11, True), (2, 6, False), (3, 10, False),
                                    (4, 14, True)])
def test_gate(n, m, ok):
    assert (m > (2 + math.sqrt(2)) * n) is ok
    if ok:
        derive(n, m)
    else:
        with pytest.raises(ParameterRejected, match=r"\(2\+sqrt 2\)"):
            derive(n, m)


def test_rejects_dimension_one():
    with pytest.raises(ParameterRejected):
        derive(1, 7)


def test_values_for_2_7(p27):
    ref = standard_constants(2, 7, "0.4")
    assert p27.eps0 == 0.2 and p27.eps1 == 0.4
    assert p27.eps1 * (1 + p27.m * p27.eps0) == pytest.approx(0.96, abs=1e-15)
    for key in ("eps_max", "eps", "alpha_max", "alpha", "C"):
        assert getattr(p27, key) == pytest.approx(float(ref[key]), rel=1e-13), key
    assert [p27.D(t) for t in range(4)] == pytest.approx([float(d) for d in ref["D"]], rel=1e-15)
    assert p27.D(1) == 27.5


def test_lemma4_quantity():
    assert lemma4_quantity(2, 7) == pytest.approx(0.96)
    assert check_lemma4(2, 7) and check_lemma4(3, 11)
    assert not check_lemma4(2, 6)


@pytest.mark.parametrize("lam", [(0.5, 0.5), (0.3, 0.6), (-0.1, 1.1), (1.0,)])
def test_bad_lambda(lam):
    with pytest.raises(ParameterRejected):
        derive(2, 7, lam)


def test_eps_interval(p27):
    assert p27.eps0 < p27.eps < p27.eps_max
    assert p27.eps1 * (1 + p27.m * p27.eps) < 1
    assert 0 < p27.alpha < p27.alpha_max
    # alpha_max solves eps1^(1 - 2 alpha) (1 + m eps) = 1
    a = p27.alpha_max
    assert p27.eps1 ** (1 - 2 * a) * p27.growth == pytest.approx(1.0, rel=1e-12)


def test_round_trip(p27):
    again = type(p27).from_dict(p27.to_dict(3))
    assert again.to_dict(3) == p27.to_dict(3)
