import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssdp.queueing import (
    LocationScaleSpec,
    variance_of,
    wt_individual,
    wt_individual_decomposed,
    wt_total,
    wt_total_array,
)

pos = st.floats(0.01, 100.0)


def test_variance_examples():
    assert variance_of(LocationScaleSpec((0.0, 1.0)), 2.0) == pytest.approx(0.25)
    theta = 0.7
    spec = LocationScaleSpec((theta / math.sqrt(3),))
    for mu in (0.1, 1.0, 50.0):
        assert variance_of(spec, mu) == pytest.approx(theta**2 / 3)
    assert variance_of(LocationScaleSpec((1.0, 1.0, 1.0)), 1.0) == pytest.approx(3.0)


def test_variance_rejects_nonpositive_rate():
    with pytest.raises(ValueError):
        variance_of(LocationScaleSpec((1.0,)), 0.0)


@pytest.mark.parametrize("deltas", [(), (-1.0,), (float("nan"),)])
def test_spec_validation(deltas):
    with pytest.raises(ValueError):
        LocationScaleSpec(deltas)


def test_wt_total_examples():
    assert wt_total(0.0, 3.0, 1.0) == 0.0
    assert wt_total(1.0, 2.0, 0.25) == pytest.approx(1.0)
    assert wt_total(1.0, 2.0, 0.0) == pytest.approx(0.75)
    assert wt_total(2.0, 2.0, 0.1) == math.inf
    with pytest.raises(ValueError):
        wt_total(-1.0, 2.0, 0.0)


def test_wt_individual_examples():
    assert wt_individual(1.0, 2.0, 0.25) == pytest.approx(1.0)
    assert wt_individual(0.0, 2.0, 0.0) == pytest.approx(0.5)
    assert wt_individual_decomposed(1.0, 2.0, 0.0, 1.0) == pytest.approx(1.0)


@settings(max_examples=300, deadline=None)
@given(lam=pos, extra=pos, v=st.floats(0.0, 10.0))
def test_total_is_lambda_times_individual(lam, extra, v):
    mu = lam + extra
    assert wt_total(lam, mu, v) == pytest.approx(lam * wt_individual(lam, mu, v), rel=1e-12)


@settings(max_examples=300, deadline=None)
@given(lam=pos, extra=pos, a=st.floats(0.0, 5.0), b=st.floats(0.0, 5.0))
def test_decomposition_identity(lam, extra, a, b):
    mu = lam + extra
    direct = wt_individual(lam, mu, a + b / mu**2)
    assert wt_individual_decomposed(lam, mu, a, b) == pytest.approx(direct, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(lam=pos, extra=pos, v=st.floats(0.0, 5.0), dv=st.floats(0.0, 5.0), dl=st.floats(0.0, 1.0))
def test_monotonicity(lam, extra, v, dv, dl):
    mu = lam + extra
    base = wt_total(lam, mu, v)
    assert wt_total(lam, mu, v + dv) >= base
    assert wt_total(lam, mu + dv + 1e-3, v) < base
    lam2 = lam + dl * extra * 0.99
    assert wt_total(lam2, mu, v) >= base


@settings(max_examples=200, deadline=None)
@given(deltas=st.lists(st.floats(0.0, 3.0), min_size=1, max_size=4), mu=pos, step=pos)
def test_variance_nonincreasing_and_floor(deltas, mu, step):
    spec = LocationScaleSpec(tuple(deltas))
    assert variance_of(spec, mu + step) <= variance_of(spec, mu) * (1 + 1e-12)
    assert variance_of(spec, mu) >= spec.deltas[0] ** 2


def test_array_matches_scalar():
    rng = np.random.default_rng(0)
    lam = rng.uniform(0, 5, 200)
    lam[:10] = 0.0
    mu = rng.uniform(0.1, 8, 200)
    v = rng.uniform(0, 2, 200)
    arr = wt_total_array(lam, mu, v)
    ref = [wt_total(*t) for t in zip(lam, mu, v)]
    np.testing.assert_allclose(arr, ref, rtol=1e-14)
