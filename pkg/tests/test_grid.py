import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superpose.constants import ParameterRejected
from superpose.grid import (boxed_count, box_count, build_family, build_families, coverage_count,
                            estimate_box_count, locate_box)
from superpose.verify import boxed_families, coverage_at, gap_center


def test_family_intervals_and_gaps():
    fam = build_family(1, 0.1, 1.0, 3)
    # intervals [(1 + 3j) 0.1, (3 + 3j) 0.1]
    assert np.allclose(fam.rights - fam.lefts, np.minimum(0.2, fam.rights - fam.lefts))
    inner = (fam.lefts > -1) & (fam.rights < 1)
    assert np.allclose((fam.rights - fam.lefts)[inner], 0.2)
    gaps = fam.lefts[1:] - fam.rights[:-1]
    assert np.allclose(gaps, 0.1)
    assert fam.lefts[0] == -1.0 and fam.rights[-1] <= 1.0


def test_truncation_and_csv():
    fam = build_family(2, 0.01, 1.0, 7)
    assert fam.lefts.min() >= -1.0 and fam.rights.max() <= 1.0
    text = fam.to_csv().splitlines()
    assert text[0] == "i,left,right" and len(text) == fam.count + 1


def test_rejects_bad_steps():
    with pytest.raises(ParameterRejected):
        build_family(1, 0.2, 1.0, 7, n=2)       # 1/(mn) = 1/14
    with pytest.raises(ParameterRejected):
        build_family(0, 0.01, 1.0, 7)
    with pytest.raises(ParameterRejected):
        build_family(1, -0.01, 1.0, 7)


@settings(max_examples=200, deadline=None)
@given(st.floats(-0.99, 0.99))
def test_coverage_at_least_m_minus_1(x):
    fams = build_families(0.01, 1.0, 7)
    c = coverage_count(x, fams)
    assert c >= 6
    assert c == coverage_at(x, 7, 0.01)


def test_endpoint_is_covered_by_all():
    fams = build_families(0.1, 2.0, 3)
    assert coverage_count(0.1, fams) == 3


def test_boxed_count_matches_oracle(rng):
    fams = build_families(0.01, 1.0, 7, 2)
    x = rng.uniform(-1, 1, size=(5000, 2))
    fast = boxed_count(x, fams)
    assert np.array_equal(fast, boxed_families(x, 7, 0.01))
    assert fast.min() >= 5


def test_adversarial_point_is_boxed_exactly_m_minus_n():
    delta, m = 0.01, 7
    x = np.array([[gap_center(1, m, delta), gap_center(4, m, delta, j=-1)]])
    fams = build_families(delta, 1.0, m, 2)
    assert boxed_count(x, fams)[0] == m - 2


def test_locate_box():
    fams = build_families(0.01, 1.0, 7, 2)
    x = (0.0123, -0.4)
    for fam in fams:
        b = locate_box(x, fam)
        if b is None:
            continue
        for p, i in enumerate(b.i):
            assert fam.lefts[i] <= x[p] <= fam.rights[i]


def test_box_count_estimate_is_upper_bound():
    exact = box_count(0.001, 1.0, 7, 2)
    est = estimate_box_count(0.001, 1.0, 7, 2)
    assert exact <= est < 1.05 * exact
