import numpy as np
import pytest

from topocurrent import quadratic as qd
from topocurrent.filters import (PROFILES, FilterError, FilterSpec, SpectralData, kernel,
                                 smooth_step, spectral_IDelta, time_domain_IDelta, verify_filter)
from topocurrent.lattice import build_lattice

from conftest import random_hermitian


@pytest.fixture(scope="module")
def chain4():
    lat = build_lattice("chain", 4)
    h = np.diag([-1.5, -0.5, 0.6, 1.4]).astype(complex)
    for x in range(3):
        h[x, x + 1] = h[x + 1, x] = -0.4
    return qd.QuadraticModel(lat, h, 2)


def test_two_level_hand_example():
    sd = SpectralData(np.array([0.0, 2.0]), np.eye(2), gap=2.0)
    a = np.array([[0, 1], [1, 0]], complex)
    out = spectral_IDelta(a, sd, FilterSpec(1.0))
    np.testing.assert_allclose(out, [[0, 0.5j], [-0.5j, 0]])
    # the filter inverts i[H, .] on off-diagonal elements
    H = np.diag([0.0, 2.0])
    np.testing.assert_allclose(spectral_IDelta(1j * (H @ a - a @ H), sd, FilterSpec(1.0)), a)


def test_commuting_operator_maps_to_zero(chain4):
    a = chain4.h @ chain4.h
    assert np.abs(chain4.idelta(a, chain4.default_filter())).max() < 1e-12


@pytest.mark.parametrize("profile", PROFILES)
def test_ground_expectation_vanishes_and_selfadjoint(chain4, rng, profile):
    a = random_hermitian(rng, 4)
    ia = chain4.idelta(a, chain4.default_filter(profile))
    assert abs(qd.ground_expectation(ia, chain4.projector)) < 1e-12
    np.testing.assert_allclose(ia, ia.conj().T, atol=1e-12)


def test_threshold_above_gap_is_rejected(chain4):
    with pytest.raises(FilterError, match="filter invalid"):
        chain4.idelta(np.eye(4), FilterSpec(2 * chain4.gap))


@pytest.mark.parametrize("kwargs", [dict(delta=0.0), dict(delta=np.inf),
                                    dict(delta=1.0, interpolation="quintic"),
                                    dict(delta=1.0, window=0.0)])
def test_invalid_specs(kwargs):
    with pytest.raises(FilterError):
        FilterSpec(**kwargs)


def test_profiles_match_outside_gap():
    om = np.linspace(0.5, 20, 101)
    for prof in PROFILES:
        g = FilterSpec(0.5, prof).profile(np.concatenate([om, -om]))
        np.testing.assert_array_equal(g, 1 / np.concatenate([om, -om]))


def test_smooth_step_limits():
    np.testing.assert_array_equal(smooth_step([-1.0, 0.0, 1.0, 2.0]), [0, 0, 1, 1])
    assert np.isclose(smooth_step(0.5), 0.5)


def test_kernel_is_odd_and_starts_at_minus_half():
    spec = FilterSpec(0.5, "smooth")
    t = np.array([1e-6, 0.3, 4.0, 50.0])
    np.testing.assert_allclose(kernel(spec, -t), -kernel(spec, t))
    assert np.isclose(kernel(spec, np.array([1e-9]))[0], -0.5, atol=1e-6)


def test_time_domain_matches_spectral(chain4, rng):
    spec = FilterSpec(0.5 * chain4.gap, "smooth")
    a = random_hermitian(rng, 4)
    exact = chain4.idelta(a, spec)
    span = float(chain4.evals[-1] - chain4.evals[0])
    ev = lambda op, t: qd.evolve(op, t, chain4)  # noqa: E731
    coarse = time_domain_IDelta(a, ev, FilterSpec(spec.delta, "smooth", dt=0.025), span)
    fine = time_domain_IDelta(a, ev, FilterSpec(spec.delta, "smooth", dt=0.0125), span)
    scale = np.linalg.norm(exact, 2)
    assert np.linalg.norm(coarse - exact, 2) / scale < 1e-4
    assert np.linalg.norm(fine - coarse, 2) / scale < 1e-6


def test_time_domain_rejects_coarse_step(chain4):
    spec = FilterSpec(0.5 * chain4.gap, "smooth", dt=2.0)
    with pytest.raises(FilterError, match="too coarse"):
        time_domain_IDelta(np.eye(4), lambda op, t: op, spec, spectral_span=3.0)


@pytest.mark.parametrize("profile", PROFILES)
def test_verify_filter_defining_properties(profile):
    rep = verify_filter(FilterSpec(0.5, profile, t_max=40.0), n_samples=401)
    assert rep["out_of_gap_residual"] == 0.0
    assert rep["oddness_residual"] <= 1e-12
    assert rep["real_part_residual"] == 0.0


def test_verify_filter_distinguishes_profiles():
    # frozen from an independent run: only the smooth profile has a kernel
    # tail below 1e-6 at the default window; the zero profile jumps by 1/delta
    smooth = verify_filter(FilterSpec(0.5, "smooth"), n_samples=401)
    zero = verify_filter(FilterSpec(0.5, "zero"), n_samples=401)
    linear = verify_filter(FilterSpec(0.5, "linear-odd"), n_samples=401)
    assert smooth["kernel_tail_fraction"] < 1e-6
    assert smooth["threshold_jump"] < 1e-9
    assert zero["threshold_jump"] == pytest.approx(2.0)
    assert linear["threshold_jump"] < 1e-9
    assert linear["kernel_tail_fraction"] > 1e-4
