import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sgbp.tables import FactorTable, delinearize, linearize, table_pointwise


@given(st.integers(2, 4), st.integers(0, 6), st.data())
def test_linearize_roundtrip(d, k, data):
    index = data.draw(st.integers(0, d**k - 1))
    assignment = delinearize(index, d, k)
    assert linearize(assignment, d) == index


@pytest.mark.parametrize("d,k", [(2, 3), (3, 2), (4, 3)])
def test_linearize_is_lexicographic(d, k):
    seen = [linearize(a, d) for a in itertools.product(range(d), repeat=k)]
    assert seen == list(range(d**k))


def test_linearize_rejects_bad_state():
    with pytest.raises(ValueError):
        linearize((0, 2), 2)
    with pytest.raises(ValueError):
        delinearize(8, 2, 3)


def test_flat_layout_first_variable_slowest():
    t = FactorTable.from_flat((0, 1), [1, 2, 3, 4], 2)
    assert t({0: 0, 1: 1}) == 2
    assert t({0: 1, 1: 0}) == 3


def test_table_validation():
    with pytest.raises(ValueError):
        FactorTable((1, 0), np.ones((2, 2)))
    with pytest.raises(ValueError):
        FactorTable((0,), np.ones((2, 2)))
    with pytest.raises(ValueError):
        FactorTable.from_flat((0, 1), [1, 2, 3], 2)


def test_divide_same_scope():
    a = FactorTable((0,), np.array([2.0, 4.0]))
    b = FactorTable((0,), np.array([2.0, 2.0]))
    assert np.array_equal(table_pointwise("divide", a, b).values, [1.0, 2.0])


def test_multiply_disjoint_scopes_is_outer_product():
    a = FactorTable((0,), np.array([1.0, 2.0]))
    b = FactorTable((1,), np.array([3.0, 5.0]))
    out = table_pointwise("multiply", a, b)
    assert out.scope == (0, 1)
    assert np.array_equal(out.values, np.outer([1, 2], [3, 5]))


def test_zero_over_zero_is_zero_and_nonzero_over_zero_raises():
    a = FactorTable((0,), np.array([0.0, 1.0]))
    b = FactorTable((0,), np.array([0.0, 1.0]))
    assert np.array_equal(table_pointwise("divide", a, b).values, [0.0, 1.0])
    with pytest.raises(ZeroDivisionError):
        table_pointwise("divide", FactorTable((0,), np.array([1.0, 1.0])), b)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_quotient_of_four_binary_variables_matches_pointwise(seed):
    rng = np.random.default_rng(seed)
    p = FactorTable((0, 1, 2, 3), rng.uniform(0.1, 1, (2,) * 4))
    r = FactorTable((1, 3), rng.uniform(0.1, 1, (2, 2)))
    q = table_pointwise("divide", p, r)
    for x in itertools.product(range(2), repeat=4):
        assert q.values[x] == pytest.approx(p.values[x] / r.values[x[1], x[3]], rel=1e-15)


def test_marginalize_and_normalize():
    t = FactorTable((0, 2), np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert np.array_equal(t.marginalize([2]).values, [4.0, 6.0])
    assert t.normalized().values.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        t.marginalize([1])
