import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omdcache.core import (Catalog, FractionalState, IntegralState, InvalidInputError, RequestBatch,
                           Trace, UnsupportedTraceError, cost_gradient, service_cost, top_k,
                           update_cost)

from oracles import service_cost_loop, update_cost_loop


def test_service_cost_examples():
    cat = Catalog.uniform(3)
    x = FractionalState([0.4, 0.8, 0.8], 2)
    assert service_cost(RequestBatch.single(0, 5), x, cat) == pytest.approx(3.0)
    full = FractionalState([1.0, 1.0, 0.0], 2)
    assert service_cost(RequestBatch.from_counts({0: 2, 1: 1}), full, cat) == 0.0
    cat2 = Catalog(3, np.array([2.0, 1.0, 1.0]), np.ones(3))
    x2 = FractionalState([0.5, 0.25, 0.25], 1)
    b = RequestBatch.from_counts([1, 2, 0])
    assert service_cost(b, x2, cat2) == pytest.approx(2.5)
    assert service_cost_loop([1, 2, 0], x2.fractions, [2, 1, 1]) == pytest.approx(2.5)


def test_update_cost_examples():
    cat = Catalog.uniform(2)
    a = FractionalState([1.0, 0.0], 1)
    b = FractionalState([0.0, 1.0], 1)
    assert update_cost(RequestBatch.single(0), a, a, cat) == 0.0
    assert update_cost(RequestBatch.single(0), a, b, cat) == 1.0
    # raising only requested coordinates is free
    assert update_cost(RequestBatch.single(1), a, b, cat) == 0.0


def test_integral_states_lift():
    cat = Catalog.uniform(4)
    z = IntegralState((2, 0))
    assert z.cached == (0, 2)
    b = RequestBatch.from_counts({0: 1, 1: 3})
    assert service_cost(b, z, cat) == 3.0
    assert update_cost(b, IntegralState((0, 1)), z, cat) == 1.0


def test_dimension_errors():
    cat = Catalog.uniform(3)
    with pytest.raises(InvalidInputError):
        service_cost(RequestBatch.single(0), np.array([0.5, 0.5]), cat)
    with pytest.raises(InvalidInputError):
        update_cost(RequestBatch.single(0), np.zeros(3), np.zeros(2), cat)
    with pytest.raises(InvalidInputError):
        service_cost(RequestBatch.single(5), np.zeros(3), cat)


def test_type_invariants():
    with pytest.raises(InvalidInputError):
        Catalog(2, np.array([1.0, -1.0]), np.ones(2))
    with pytest.raises(InvalidInputError):
        FractionalState([0.5, 0.6], 1)
    with pytest.raises(InvalidInputError):
        FractionalState([1.2, -0.2], 1)
    FractionalState([1.0 + 5e-10, 0.0], 1)  # within slack
    with pytest.raises(InvalidInputError):
        RequestBatch(np.array([0, 1]), np.array([2, 1]), 3, 1)  # count above h
    with pytest.raises(InvalidInputError):
        RequestBatch(np.array([0, 1]), np.array([2, 1]), 4, 2)  # wrong R
    with pytest.raises(InvalidInputError):
        RequestBatch(np.array([1, 0]), np.array([1, 1]), 2, 1)
    with pytest.raises(InvalidInputError):
        IntegralState((1, 1))
    with pytest.raises(InvalidInputError):
        Trace(3, 1, 1, 1, [])


def test_trace_popularity_lookup():
    b = [RequestBatch.single(0)] * 4
    tr = Trace(2, 1, 1, 4, b, [(0, np.array([0.7, 0.3])), (2, np.array([0.3, 0.7]))])
    assert tr.popularity_at(1)[0] == 0.7
    assert tr.popularity_at(2)[0] == 0.3
    with pytest.raises(UnsupportedTraceError):
        Trace(2, 1, 1, 4, b).popularity_at(0)


def test_top_k_ties_lowest_index():
    assert list(top_k([2, 2, 1], 1)) == [0]
    assert list(top_k([1, 3, 3, 0], 2)) == [1, 2]


@st.composite
def instance(draw):
    n = draw(st.integers(2, 12))
    k = draw(st.integers(1, n - 1))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    x = rng.random(n)
    x = x / x.sum() * k
    x = np.minimum(x, 1.0)
    # fix overflow by simple projection-free rebalance
    while abs(x.sum() - k) > 1e-12:
        free = x < 1.0
        x[free] += (k - x.sum()) / free.sum()
        x = np.clip(x, 0, 1)
    w = rng.random(n) * 3
    counts = rng.multinomial(draw(st.integers(1, 20)), np.ones(n) / n)
    return n, k, x, w, counts


@settings(max_examples=200, deadline=None)
@given(instance(), st.floats(0, 1))
def test_service_cost_properties(inst, alpha):
    n, k, x, w, counts = inst
    cat = Catalog(n, w, w)
    b = RequestBatch.from_counts(counts)
    f = service_cost(b, x, cat)
    assert 0 <= f <= w.max() * b.batch_size + 1e-12
    assert f == pytest.approx(service_cost_loop(counts, x, w), rel=1e-12, abs=1e-12)
    y = np.roll(x, 1)
    lhs = service_cost(b, alpha * x + (1 - alpha) * y, cat)
    rhs = alpha * f + (1 - alpha) * service_cost(b, y, cat)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
    assert update_cost(b, x, x, cat) == 0.0
    assert update_cost(b, x, y, cat) == pytest.approx(update_cost_loop(counts, x, y, w), abs=1e-12)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    cat = Catalog(6, rng.random(6) + 0.5, np.ones(6))
    b = RequestBatch.from_counts([3, 0, 1, 0, 2, 0])
    x = np.full(6, 0.5)
    g = cost_gradient(b, cat)
    eps = 1e-6
    for i in range(6):
        e = np.zeros(6)
        e[i] = eps
        fd = (service_cost(b, x + e, cat) - service_cost(b, x - e, cat)) / (2 * eps)
        assert fd == pytest.approx(g[i], rel=1e-6, abs=1e-9)
