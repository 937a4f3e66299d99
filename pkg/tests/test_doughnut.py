import numpy as np
import pytest
from hypothesis import given, strategies as st

from cemiso.doughnut import (DoughnutRegion, alternating_phases, closed_form_inner_n2,
                             closed_form_inner_n3, contains, inner_radius, inner_radius_batch,
                             inner_radius_bruteforce, maximizing_phases, outer_radius,
                             polygon_inner_radius, received_point, region, wrap_phase)
from conftest import rayleigh

SQ2, SQ3 = np.sqrt(2.0), np.sqrt(3.0)

gains = st.lists(st.tuples(st.floats(0.0, 10.0), st.floats(-np.pi, np.pi)), min_size=1,
                 max_size=9).map(lambda v: np.array([a * np.exp(1j * p) for a, p in v]))


def test_outer_radius_examples():
    assert outer_radius([1, 1]) == pytest.approx(SQ2, abs=1e-15)
    assert outer_radius([3, 4j]) == pytest.approx(7 / SQ2, abs=1e-15)
    assert 7 / SQ2 == pytest.approx(4.9497, abs=1e-4)


@given(gains.filter(lambda g: np.abs(g).sum() > 0))
def test_maximizing_phases_reach_outer_radius(g):
    z = received_point(g, maximizing_phases(g))
    assert abs(z) == pytest.approx(outer_radius(g), rel=1e-12, abs=1e-12)


def test_wrap_phase_half_open():
    x = wrap_phase(np.array([np.pi, -np.pi, 3 * np.pi, -1e-300, 2 * np.pi - 1e-17]))
    assert np.all(x >= -np.pi) and np.all(x < np.pi)
    assert x[0] == pytest.approx(-np.pi)


@pytest.mark.parametrize("h, expected", [([3, 1], SQ2), ([1, 2, 5], 2 / SQ3),
                                         ([1, 1, 1], 0.0), ([1, 2, 2], 0.0)])
def test_inner_radius_examples(h, expected):
    res = inner_radius(h)
    assert res.value == pytest.approx(expected, abs=1e-12)
    assert abs(received_point(h, res.phases)) == pytest.approx(res.value, abs=1e-12)
    assert res.converged


@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_dlos_inner_radius_zero_with_witness(n, rng):
    h = np.exp(1j * rng.uniform(-np.pi, np.pi, n))
    theta = 2 * np.pi * np.arange(n) / n - np.angle(h)
    assert abs(received_point(h, theta)) < 1e-14
    assert inner_radius(h).value < 1e-12


def test_closed_forms():
    assert closed_form_inner_n2([1, 1]) == 0.0
    assert closed_form_inner_n2([3, 1]) == pytest.approx(SQ2)
    assert closed_form_inner_n3([1, 2, 2]) == 0.0
    assert closed_form_inner_n3([1, 2, 5]) == pytest.approx(2 / SQ3)
    assert closed_form_inner_n3([5, 1, 2]) == pytest.approx(2 / SQ3)
    with pytest.raises(ValueError):
        closed_form_inner_n2([1, 2, 3])
    with pytest.raises(ValueError):
        closed_form_inner_n3([1, 2])


def test_descent_matches_closed_forms(rng):
    for n, cf in ((2, closed_form_inner_n2), (3, closed_form_inner_n3)):
        for _ in range(200):
            h = rayleigh(rng, n)
            assert inner_radius(h).value == pytest.approx(cf(h), abs=1e-6)


@given(gains)
def test_inner_radius_matches_polygon_rule(g):
    ref = polygon_inner_radius(g)
    scale = max(np.abs(g).sum(), 1.0)
    assert inner_radius(g).value == pytest.approx(ref, abs=1e-9 * scale)


@given(gains)
def test_inner_radius_bound_and_ordering(g):
    res = inner_radius(g)
    n = g.size
    assert 0.0 <= res.value <= outer_radius(g) + 1e-12
    assert res.value <= np.abs(g).max() / np.sqrt(n) + 1e-9
    assert abs(received_point(g, alternating_phases(g))) <= np.abs(g).max() / np.sqrt(n) + 1e-12


def test_batch_matches_scalar(rng):
    for n in (2, 3, 4, 7):
        g = rayleigh(rng, n, size=300)
        batch = inner_radius_batch(g)
        scalar = np.array([inner_radius(row).value for row in g])
        poly = np.array([polygon_inner_radius(row) for row in g])
        np.testing.assert_allclose(batch, poly, atol=1e-12)
        np.testing.assert_allclose(scalar, poly, atol=1e-12)


def test_bruteforce_examples():
    assert inner_radius_bruteforce([3, 1], 720) == pytest.approx(SQ2, abs=5e-3)
    assert inner_radius_bruteforce([1, 1, 1], 360) == pytest.approx(0.0, abs=1e-2)
    with pytest.raises(ValueError):
        inner_radius_bruteforce(np.ones(7))


def test_bruteforce_never_beats_descent(rng):
    for n in (4, 5):
        for _ in range(5):
            h = rayleigh(rng, n)
            grid = 72 if n == 4 else 36
            bf = inner_radius_bruteforce(h, grid)
            err = np.abs(h).sum() * np.pi / (grid * np.sqrt(n))
            m = inner_radius(h).value
            assert bf >= m - 1e-9
            assert m <= bf + err


def test_contains_examples():
    assert contains(DoughnutRegion(SQ2, 0.0, 2), 1.0)
    assert not contains(DoughnutRegion(7 / SQ2, SQ2, 2), 0.1)
    reg = region([3, 4j])
    assert contains(reg, reg.outer * np.exp(0.3j))
    assert contains(reg, reg.inner)
    with pytest.raises(ValueError):
        DoughnutRegion(1.0, 2.0, 2)


def test_rotation_symmetry(rng):
    h = rayleigh(rng, 6)
    res = inner_radius(h)
    z = received_point(h, res.phases)
    for phi in rng.uniform(-np.pi, np.pi, 100):
        zr = received_point(h, res.phases + phi)
        assert abs(zr - z * np.exp(1j * phi)) <= 1e-12


def test_zero_gain_antenna_rescales_radii(rng):
    h = rayleigh(rng, 4)
    h0 = np.append(h, 0.0)
    f = np.sqrt(4 / 5)
    assert outer_radius(h0) == pytest.approx(outer_radius(h) * f, rel=1e-12)
    assert inner_radius(h0).value == pytest.approx(inner_radius(h).value * f, abs=1e-12)
