import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from sharplab.constructions import (
    BernoulliField,
    ConstructionError,
    Mollifier,
    bernoulli_moment_closed_form,
    bernoulli_moment_enumerated,
    bernoulli_uniforms,
    bump_profile,
    cube_field_spectrum,
    deterministic_family,
    deterministic_support,
    load_family,
    moment_mc,
    oscillatory_family,
    oscillatory_profiles,
    plateau_profile,
    sample_h,
    save_family,
    smooth_step,
    smoothed_random_family,
    sobolev_family,
)
from sharplab.grid_core import Grid, ParameterError, ResolutionError, lp_norm


def test_profiles():
    t = np.linspace(-1, 2, 3001)
    b = bump_profile(t)
    assert np.all(b[(t <= 0.5) | (t >= 1)] == 0) and np.all(b >= 0)
    assert abs(bump_profile(0.75) - math.exp(-1)) < 1e-15
    s = smooth_step(t)
    assert np.all(np.diff(s) >= 0) and s[0] == 0 and s[-1] == 1
    p = plateau_profile(t, 1.0, 1.5, 0.5, 1.8)
    assert np.all(p[(t >= 1.0) & (t <= 1.5)] == 1.0)
    assert np.all(p[(t <= 0.5) | (t >= 1.8)] == 0.0)


# ---- moments ---------------------------------------------------------------

@pytest.mark.parametrize("L", [1, 3, 7, 12])
@pytest.mark.parametrize("a", [0.1, 0.5, 0.9])
@pytest.mark.parametrize("r", [0.5, 1.0, 2.0, 3.0])
def test_moment_closed_form_matches_enumeration(L, a, r):
    e = bernoulli_moment_enumerated(L, a, r)
    assert abs(bernoulli_moment_closed_form(L, a, r) - e) <= 1e-12 * e


@given(st.integers(1, 60), st.floats(0.01, 0.99))
def test_first_moment_identity(L, a):
    assert bernoulli_moment_closed_form(L, a, 1) == pytest.approx(L * a, rel=1e-14)


def test_second_moment_closed_form():
    # E n^2 = L a (1 - a) + (L a)^2
    L, a = 40, 0.3
    assert bernoulli_moment_closed_form(L, a, 2) == pytest.approx(L * a * (1 - a) + (L * a) ** 2,
                                                                  rel=1e-14)


def test_moment_mc_agrees_with_closed_form():
    est, err = moment_mc(16, 1 / 16, 1.5, trials=40000, seed=3)
    exact = bernoulli_moment_closed_form(16, 1 / 16, 1.5)
    assert abs(est - exact) < 4 * err


def test_degenerate_probabilities():
    assert bernoulli_moment_closed_form(5, 0.0, 2) == 0.0
    assert bernoulli_moment_closed_form(5, 1.0, 2) == 25.0
    assert BernoulliField(3, 1.0, 0).bits().all()
    assert not BernoulliField(3, 0.0, 0).bits().any()


# ---- Bernoulli fields ---------------------------------------------------------

def test_uniform_stream_windows_are_consistent():
    full = bernoulli_uniforms(7, 2, 5, 0, 100)
    np.testing.assert_array_equal(bernoulli_uniforms(7, 2, 5, 37, 20), full[37:57])
    assert not np.array_equal(full, bernoulli_uniforms(7, 3, 5, 0, 100))
    assert not np.array_equal(full, bernoulli_uniforms(8, 2, 5, 0, 100))


def test_field_density():
    bits = BernoulliField(16, 0.2, seed=1).bits()
    assert abs(bits.mean() - 0.2) < 4 * math.sqrt(0.2 * 0.8 / bits.size)


def test_cube_field_spectrum_matches_continuum_integral():
    field = BernoulliField(3, 0.5, seed=4)
    bits = field.bits().astype(float)
    g = Grid(1, 6)
    spec = cube_field_spectrum(bits, 3, g)
    for kappa in (0, 1, 3, -5, 13):
        def re(x):
            return bits[min(int(x * 8), 7)] * math.cos(2 * math.pi * kappa * x)

        def im(x):
            return -bits[min(int(x * 8), 7)] * math.sin(2 * math.pi * kappa * x)
        pts = [j / 8 for j in range(1, 8)]
        val = (integrate.quad(re, 0, 1, points=pts, limit=200)[0]
               + 1j * integrate.quad(im, 0, 1, points=pts, limit=200)[0])
        assert abs(spec[kappa % g.n] - val) < 1e-10


def test_sample_h_matches_bits():
    field = BernoulliField(4, 0.5, seed=2)
    h = sample_h(field, Grid(1, 6))
    np.testing.assert_array_equal(h.samples[::4], field.bits())
    assert lp_norm(h, 1) == field.bits().mean()


# ---- mollifier -----------------------------------------------------------------

@pytest.mark.parametrize("M,d,condition", [(5, 1, "ball"), (6, 1, "ball"), (2, 1, "cube"),
                                           (6, 2, "ball"), (3, 2, "cube")])
def test_mollifier_lower_bound(M, d, condition):
    moll = Mollifier(M, d, condition)
    radii = np.linspace(0, moll.radius, 777)
    assert moll.unit_values(radii).min() >= 1 - 1e-9


@pytest.mark.parametrize("M", [3, 4])
def test_small_ball_mollifier_infeasible(M):
    with pytest.raises(ConstructionError):
        Mollifier(M, 1, "ball")


def test_mollifier_values_match_inverse_transform():
    moll = Mollifier(5, 1, "ball")
    x = 0.013
    val = integrate.quad(lambda t: 2 * moll.unit_spectrum(t) * math.cos(2 * math.pi * t * x),
                         0.5, 1.0, epsabs=1e-13)[0]
    assert abs(moll.unit_values(x)[0] - val) < 1e-9


def test_realized_mollifier_in_annulus():
    g = Grid(1, 10)
    eta = Mollifier(5, 1).realize(g, 64)
    assert eta.check_band_limit()
    # torus value is the periodization of r^d eta(r x); at r = 64 the wrap-around is tiny
    assert eta.samples[0] == pytest.approx(64 * Mollifier(5, 1).unit_values(0.0)[0], rel=1e-4)


# ---- families -------------------------------------------------------------------

def test_random_family_structure():
    g = Grid(1, 12)
    fam = smoothed_random_family(2, [10, 10, 10, 10], 5, seed=3, grid=g)
    assert len(fam) == 4 and fam.scales == [32.0] * 4
    assert all(m.check_band_limit() for m in fam.members)
    again = smoothed_random_family(2, [10] * 4, 5, seed=3, grid=g)
    np.testing.assert_array_equal(fam.stack(), again.stack())
    # member k depends only on (seed, k), not on how many members are built
    short = smoothed_random_family(2, [10] * 2, 5, seed=3, grid=g)
    np.testing.assert_array_equal(short.stack(), fam.stack()[:2])


def test_random_family_lower_bound_on_occupied_cubes():
    # where a cube is occupied the mollified field stays near its bump
    g = Grid(1, 14)
    fam = smoothed_random_family(1, [12], 5, seed=0, grid=g, a=1.0)
    # a = 1 fills every cube, so g = eta_r * 1 = 0 (annulus spectrum, no mean)
    assert np.abs(fam.members[0].samples).max() < 1e-10


def test_deterministic_support_and_spectrum():
    g = Grid(1, 12)
    for k in (3, 4, 5):
        h = deterministic_support(3, 2, k, g)
        assert lp_norm(h, 1) == 2.0 ** (-(3 + 2))
    fam = deterministic_family(3, 2, [3, 4, 5], g)
    assert fam.scales == [8.0, 16.0, 32.0]
    assert all(m.check_band_limit() for m in fam.members)
    with pytest.raises(ParameterError):
        deterministic_family(3, 2, [2], g)


def test_deterministic_members_are_self_similar():
    g = Grid(1, 12)
    fam = deterministic_family(3, 2, [3, 4], g)
    f3, f4 = fam.members[0].samples, fam.members[1].samples
    # f_4(x) = f_3(2x mod 1)
    idx = (2 * np.arange(g.n)) % g.n
    np.testing.assert_allclose(f4, f3[idx], atol=1e-9 * np.abs(f3).max())


def test_sobolev_family_weights_and_resolution():
    g = Grid(1, 16)
    fam = sobolev_family(2, 2, 0.75, 5, seed=1, grid=g, k_cap=3, level_offset=5)
    assert len(fam) == 3
    assert fam.params["levels"] == [7, 9, 11]
    base = smoothed_random_family(2, [7, 9, 11], 5, 1, g)
    for m, b, n in zip(fam.members, base.members, [7, 9, 11]):
        np.testing.assert_allclose(m.samples, 2.0 ** (-n * 0.75) * b.samples)
    with pytest.raises(ResolutionError):
        sobolev_family(2, 4, 0.75, 5, seed=1, grid=Grid(1, 10))


def test_oscillatory_family():
    g = Grid(1, 12)
    fam = oscillatory_family(5, 0.5, 2.0, seed=0, grid=g)
    assert len(fam) == 5
    assert all(m.check_band_limit() for m in fam.members)
    eta_hat, eta_tilde_hat = oscillatory_profiles()
    rho = np.linspace(0, 3, 3001)
    support = eta_hat(rho) > 0
    assert np.all(eta_tilde_hat(rho[support]) == 1.0)
    with pytest.raises(ResolutionError):
        oscillatory_family(11, 0.5, 2.0, 0, g)


@pytest.mark.parametrize("payload", [False, True])
def test_family_container_round_trip(tmp_path, payload):
    g = Grid(1, 11)
    fam = smoothed_random_family(2, [9] * 4, 5, seed=8, grid=g)
    path = tmp_path / "fam.bin"
    save_family(fam, path, include_samples=payload)
    back = load_family(path)
    assert back.kind == fam.kind and back.seed == 8 and back.scales == fam.scales
    np.testing.assert_array_equal(back.stack(), fam.stack())
