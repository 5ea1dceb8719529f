import math

import pytest

from grid_cases import BINARY_CASES, CONTINUOUS_INDIVIDUAL, CONTINUOUS_TOTAL, grid_mismatches
from ssdp.convexify import ConvexifyMode, NotRepresentable, convexify_individual_wt, convexify_total_wt
from ssdp.queueing import LocationScaleSpec, wt_total


def _feasible(blk, lam, mu, w=None):
    vals = {blk.mu: mu}
    if blk.mode is ConvexifyMode.CONTINUOUS:
        vals[blk.lam] = lam
    else:
        for k, v in zip(blk.w, w):
            vals[k] = v
    return blk.feasible(vals)


def test_total_binary_mm1_boundary():
    blk = convexify_total_wt([1.0], "binary-selection", (0.0, 1.0), 1.0)
    assert _feasible(blk, 1.0, 2.0, [1.0])
    assert not _feasible(blk, 1.0, 1.9, [1.0])


def test_total_continuous_mm1_needs_rate_two():
    blk = convexify_total_wt([], "continuous", (0.0, 1.0), 1.0)
    for mu in (1.2, 1.9, 2.0 - 1e-6, 2.0 + 1e-6, 3.0, 8.0):
        assert _feasible(blk, 1.0, mu) == (mu >= 2.0)
        assert _feasible(blk, 1.0, mu) == (wt_total(1.0, mu, mu**-2) <= 1.0)


def test_idle_block_always_feasible():
    for variance in BINARY_CASES:
        blk = convexify_total_wt([1.0, 2.0], "binary-selection", variance, 0.0)
        assert _feasible(blk, 0.0, 0.5, [0.0, 0.0])
    blk = convexify_total_wt([], "continuous", (0.0, 1.0), 0.0)
    assert _feasible(blk, 0.0, 0.3)


def test_individual_examples():
    blk = convexify_individual_wt([1.0], "binary-selection", (0.0, 1.0), 1.0)
    assert _feasible(blk, 1.0, 2.0, [1.0])
    assert not _feasible(blk, 1.0, 1.5, [1.0])
    blk = convexify_individual_wt([1.0], "continuous", (0.0, 0.5), 1.0 / 1.5)
    assert _feasible(blk, 0.0, 1.5 + 1e-9)
    assert not _feasible(blk, 0.0, 1.4)


def test_multi_selection_sums_rates():
    blk = convexify_total_wt([1.0, 2.0, 4.0], "binary-selection", LocationScaleSpec((0.2, 0.9)), 5.0)
    lam = 3.0
    for mu in (3.5, 4.0, 6.0, 9.0):
        v = 0.04 + 0.81 / mu**2
        assert _feasible(blk, lam, mu, [1.0, 1.0, 0.0]) == (wt_total(lam, mu, v) <= 5.0)


@pytest.mark.parametrize(
    "call",
    [
        lambda: convexify_total_wt([], "continuous", (0.5, 1.0), 1.0),
        lambda: convexify_total_wt([], "continuous", (0.0, 1.0), "z"),
        lambda: convexify_individual_wt([], "continuous", (0.0, 1.5), 1.0),
        lambda: convexify_individual_wt([], "continuous", (0.2, 0.5), 1.0),
        lambda: convexify_individual_wt([], "continuous", LocationScaleSpec((0.1, 0.2, 0.3)), 1.0),
    ],
)
def test_not_representable(call):
    with pytest.raises(NotRepresentable):
        call()


def test_binary_mode_needs_positive_rates():
    with pytest.raises(ValueError):
        convexify_total_wt([0.0], "binary-selection", (0.0, 1.0), 1.0)


@pytest.mark.parametrize("variance", BINARY_CASES, ids=str)
def test_grid_total_binary(variance):
    bad, n = grid_mismatches("total", "binary-selection", variance, 2.0, n=20)
    assert bad == 0 and n > 300


@pytest.mark.parametrize("variance", BINARY_CASES, ids=str)
def test_grid_individual_binary(variance):
    bad, n = grid_mismatches("individual", "binary-selection", variance, 1.0, n=20)
    assert bad == 0 and n > 300


@pytest.mark.parametrize("variance", CONTINUOUS_TOTAL, ids=str)
def test_grid_total_continuous(variance):
    bad, _ = grid_mismatches("total", "continuous", variance, 2.0, n=20)
    assert bad == 0


@pytest.mark.parametrize("variance", CONTINUOUS_INDIVIDUAL, ids=str)
def test_grid_individual_continuous(variance):
    bad, _ = grid_mismatches("individual", "continuous", variance, 1.0, n=20)
    assert bad == 0
