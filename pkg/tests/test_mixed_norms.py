import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sharplab.constructions import FunctionFamily
from sharplab.grid_core import Grid, GridFunction, ParameterError, ResolutionError, lp_norm
from sharplab.mixed_norms import (
    linear_fit,
    loglog_slope,
    mixed_norm,
    pp_discrete_sum,
    pp_local_extremum_norm,
    pp_scaled_ratio,
    required_block_range,
    tl_norm,
)

arrays = st.integers(0, 10 ** 6).map(lambda s: np.random.default_rng(s).standard_normal((3, 32)))


def test_mixed_norm_single_member_is_lp_norm():
    a = np.random.default_rng(0).standard_normal(64)
    for p in (0.5, 1, 2, 3.5):
        assert mixed_norm([a], p, 1.7) == pytest.approx(lp_norm(a, p), rel=1e-13)


@given(arrays, st.floats(0.5, 4.0))
def test_mixed_norm_p_equals_q_interchanges(a, p):
    lhs = mixed_norm(list(a), p, p)
    rhs = sum(lp_norm(m, p) ** p for m in a) ** (1 / p)
    assert lhs == pytest.approx(rhs, rel=1e-12)


@given(arrays, st.floats(0.5, 3.0), st.floats(0.5, 3.0))
def test_mixed_norm_decreases_in_q(a, q1, q2):
    lo, hi = sorted((q1, q2))
    assert mixed_norm(list(a), 2.0, lo) >= mixed_norm(list(a), 2.0, hi) * (1 - 1e-12)
    assert mixed_norm(list(a), 2.0, hi) >= mixed_norm(list(a), 2.0, math.inf) * (1 - 1e-12)


@given(arrays, st.floats(-1e3, 1e3).filter(lambda c: abs(c) > 1e-6))
def test_mixed_norm_homogeneous(a, c):
    assert mixed_norm(list(c * a), 1.5, 0.8) == pytest.approx(abs(c) * mixed_norm(list(a), 1.5, 0.8),
                                                              rel=1e-12)


def test_mixed_norm_handles_tiny_weights():
    a = np.random.default_rng(1).standard_normal((4, 16))
    ref = mixed_norm(list(a), 2, 0.5)
    assert mixed_norm(list(1e-200 * a), 2, 0.5) == pytest.approx(1e-200 * ref, rel=1e-12)


def test_mixed_norm_accepts_family_and_warns_on_empty():
    g = Grid(1, 5)
    members = [GridFunction(g, np.full(g.n, v)) for v in (1.0, 2.0)]
    fam = FunctionFamily(members, [1.0, 1.0])
    assert mixed_norm(fam, 2, 1) == pytest.approx(3.0)
    with pytest.warns(RuntimeWarning):
        assert mixed_norm([], 2, 1) == 0.0
    with pytest.raises(ParameterError):
        mixed_norm(fam, 0, 1)


@pytest.mark.parametrize("k,kappa", [(3, 3), (4, 7), (6, 24), (6, 32)])
@pytest.mark.parametrize("p,q,sigma", [(2, 1, 0.5), (1, 2, 1.5), (3, 0.7, 0.0)])
def test_tl_norm_of_plateau_frequency(k, kappa, p, q, sigma):
    # a pure frequency on the plateau of block k sees that block only
    g = Grid(1, 9)
    f = GridFunction(g, np.exp(2j * np.pi * kappa * g.axis()))
    # FFT roundoff in the other blocks is amplified by |.|^q for q < 1
    assert tl_norm(f, p, q, sigma) == pytest.approx(2.0 ** (k * sigma), rel=1e-9)


def test_tl_norm_block_range_errors():
    g = Grid(1, 9)
    f = GridFunction(g, np.exp(2j * np.pi * 24 * g.axis()))
    assert required_block_range(f) == (0, 6)
    with pytest.raises(ResolutionError, match="need blocks 0..6"):
        tl_norm(f, 2, 1, 0.5, block_range=(0, 5))
    low = GridFunction(g, np.ones(g.n))
    with pytest.raises(ResolutionError):
        tl_norm(low, 2, 1, 0.5, block_range=(2, 6))


def test_tl_norm_plancherel_at_p_q_2():
    # sum of squared blocks lies between 1/2 and 1 on the spectrum
    g = Grid(1, 10)
    rng = np.random.default_rng(5)
    spec = np.where(g.frequency_norm() <= 100, rng.standard_normal(g.n), 0.0)
    f = GridFunction.from_spectrum(g, spec, real=True)
    ratio = tl_norm(f, 2, 2, 0) / lp_norm(f, 2)
    assert 1 / math.sqrt(2) - 1e-12 <= ratio <= 1 + 1e-12


def test_pp_sums_of_constant():
    g = Grid(1, 10)
    one = GridFunction(g, np.ones(g.n), band_limit=(0, False))
    for sampler in ("corner", "center", "max", "min"):
        assert pp_discrete_sum(one, 4, 3, 2.0, sampler) == pytest.approx(2.0 ** 3.5)
    assert pp_scaled_ratio(one, 4, 3, 1.0) == pytest.approx(2.0 ** 3)


def test_pp_sampler_ordering_and_shift():
    g = Grid(1, 12)
    rng = np.random.default_rng(3)
    spec = np.where(g.frequency_norm() <= 32, rng.standard_normal(g.n), 0.0)
    f = GridFunction.from_spectrum(g, spec, real=True, band_limit=(32, False))
    lo = pp_discrete_sum(f, 5, 3, 1.0, "min")
    hi = pp_discrete_sum(f, 5, 3, 1.0, "max")
    for sampler in ("corner", "center"):
        assert lo <= pp_discrete_sum(f, 5, 3, 1.0, sampler) <= hi
    # a shift by a whole mesh cell permutes the cubes
    assert pp_discrete_sum(f, 5, 3, 1.0, "corner", z=2.0 ** -8) == pytest.approx(
        pp_discrete_sum(f, 5, 3, 1.0, "corner"), rel=1e-12)
    with pytest.raises(ResolutionError):
        pp_discrete_sum(f, 10, 3, 1.0)
    with pytest.warns(RuntimeWarning):
        pp_discrete_sum(GridFunction(g, f.samples), 5, 3, 1.0)


def test_pp_local_extremum_brackets_norm():
    g = Grid(1, 12)
    rng = np.random.default_rng(4)
    spec = np.where(g.frequency_norm() <= 64, rng.standard_normal(g.n), 0.0)
    f = GridFunction.from_spectrum(g, spec, real=True, band_limit=(64, False))
    up = pp_local_extremum_norm(f, 6, 0.1, 2.0, "sup")
    down = pp_local_extremum_norm(f, 6, 0.1, 2.0, "inf")
    assert down <= lp_norm(f, 2) <= up


def test_slope_fits():
    fit = loglog_slope([1, 2, 4, 8], [3, 12, 48, 192])
    assert fit.slope == pytest.approx(2.0) and fit.r_squared == pytest.approx(1.0)
    assert loglog_slope([2, 4, 8], [1, 2, 4], base=2).intercept == pytest.approx(-1.0)
    lin = linear_fit([0, 1, 2, 3], [1, 3, 5, 7])
    assert (lin.slope, lin.intercept) == pytest.approx((2.0, 1.0))
    assert linear_fit([1, 2, 3], [2, 4, 6], through_origin=True).intercept == 0.0
    noisy = linear_fit([0, 1, 2, 3], [0, 1, 0, 1])
    assert 0.0 <= noisy.r_squared < 1.0
    with pytest.raises(ParameterError):
        loglog_slope([1, 2], [1, 2])
    with pytest.raises(ParameterError):
        loglog_slope([1, 2, 3], [1, 0, 2])
