"""Poincare section billiard: crossings, codings, conjugacy to the baker."""

import numpy as np
import pytest
from scipy.optimize import brentq

from bstransfer.billiard import (
    SectionPoint,
    billiard_apply,
    billiard_inverse,
    conjugacy_rho,
    crossing_points,
    in_section,
    orbit_rows,
    sample_section,
    seed_sigma_points,
    verify_cohomology,
    verify_conjugacy,
)
from bstransfer.boundary_dynamics import (
    BowenSeriesMap,
    bs_coding,
    build_baker,
    build_coarse_partition,
    refine_to_markov,
    sample_sigma,
)
from bstransfer.errors import (
    ConjugacySearchError,
    DomainError,
    TangencyWarning,
)
from bstransfer.fuchsian import build_regular_4g_gon, side_geodesic_circle
from bstransfer.hypgeo import (
    TWO_PI,
    circle_distance,
    hyperbolic_distance,
    mobius_apply,
    mobius_deviation,
    mobius_inverse,
)

COT8 = 1.0 / np.tan(np.pi / 8.0)
APOTHEM = np.arccosh(COT8)
CIRCUMRADIUS = np.arccosh(COT8 * COT8)
PHI_1 = np.pi / 8.0

# frozen regression value: longest conjugating word over the pinned sample
MAX_RHO_LENGTH = 6


@pytest.fixture(scope="module")
def octagon():
    return build_regular_4g_gon(2)


@pytest.fixture(scope="module")
def system(octagon):
    left = BowenSeriesMap(refine_to_markov(
        build_coarse_partition(octagon, "left"), octagon), octagon)
    right = BowenSeriesMap(refine_to_markov(
        build_coarse_partition(octagon, "right"), octagon), octagon)
    return build_baker(left, right, samples=2000)


def test_diameter_through_opposite_midpoints(octagon):
    pt = SectionPoint(PHI_1, PHI_1 + np.pi)
    crossing = crossing_points(octagon, pt)
    midpoint = np.tanh(APOTHEM / 2.0) * np.exp(1j * PHI_1)
    assert abs(crossing.exit - midpoint) < 1e-12
    assert abs(crossing.entry + midpoint) < 1e-12
    assert crossing.exit_side == 1 and crossing.entry_side == -1


def test_random_crossings_lie_on_boundary(octagon):
    rng = np.random.default_rng(3)
    for pt in sample_section(octagon, 300, rng):
        crossing = crossing_points(octagon, pt)
        for z, side in ((crossing.exit, crossing.exit_side),
                        (crossing.entry, crossing.entry_side)):
            assert abs(z) < 1.0
            pos = octagon.side_position(side)
            c, rho = side_geodesic_circle(octagon, pos)
            assert abs(abs(z - c) - rho) < 1e-10
            # the crossing also lies on the section geodesic itself
            cg, rg = _geodesic_circle(pt)
            if np.isfinite(rg):
                assert abs(abs(z - cg) - rg) < 1e-10
        assert hyperbolic_distance(crossing.entry, crossing.exit) \
            <= 2.0 * CIRCUMRADIUS + 1e-9


def _geodesic_circle(pt):
    from bstransfer.hypgeo import geodesic_circle

    return geodesic_circle(pt.backward, pt.forward)


def test_corner_pass_touches_vertex(octagon):
    vertex_radius = 2.0 ** -0.25

    def nearest_point_radius(theta):
        c = 1.0 / np.cos(theta)
        return c - np.tan(theta)

    theta = brentq(lambda t: nearest_point_radius(t) - vertex_radius,
                   0.05, 1.5, xtol=1e-15)
    pt = SectionPoint(theta, -theta)
    crossing = crossing_points(octagon, pt)
    assert abs(crossing.entry - crossing.exit) < 1e-12
    assert abs(crossing.exit - vertex_radius) < 1e-7
    assert not crossing.tangency
    # reversed orientation sees the origin on the right: not a section point
    with pytest.raises(DomainError):
        crossing_points(octagon, SectionPoint(-theta, theta))
    assert not in_section(octagon, SectionPoint(-theta, theta))


def test_side_geodesic_flagged_tangent(octagon):
    # distinct geodesics never touch inside the disk, so the tangent family
    # consists of geodesics running along a side; the side geodesic itself
    # is the exact member
    center, _ = side_geodesic_circle(octagon, 1)
    half = np.arccos(1.0 / abs(center))
    a, b = np.angle(center) - half, np.angle(center) + half
    with pytest.warns(TangencyWarning):
        crossing = crossing_points(octagon, SectionPoint(b, a))
    assert crossing.tangency
    assert crossing.exit_side != 1 and crossing.entry_side != 1
    # the contact degenerates to the two vertices of the side
    vertex_radius = 2.0 ** -0.25
    assert abs(abs(crossing.exit) - vertex_radius) < 1e-9
    assert abs(abs(crossing.entry) - vertex_radius) < 1e-9


def test_missing_geodesic_rejected(octagon):
    with pytest.raises(DomainError):
        crossing_points(octagon, SectionPoint(0.02, 0.01))
    assert not in_section(octagon, SectionPoint(0.02, 0.01))


def test_round_trip(octagon):
    rng = np.random.default_rng(11)
    worst = 0.0
    for pt in sample_section(octagon, 10000, rng):
        image = billiard_apply(octagon, pt)
        back = billiard_inverse(octagon, image)
        worst = max(worst,
                    circle_distance(pt.forward, back.forward),
                    circle_distance(pt.backward, back.backward))
    assert worst < 1e-12


def test_reentry_through_paired_side(octagon):
    rng = np.random.default_rng(13)
    for pt in sample_section(octagon, 500, rng):
        crossing = crossing_points(octagon, pt)
        g = octagon.generator(crossing.exit_side)
        image = billiard_apply(octagon, pt)
        image_crossing = crossing_points(octagon, image)
        assert image_crossing.entry_side == -crossing.exit_side
        assert abs(image_crossing.entry - mobius_apply(g, crossing.exit)) < 1e-10


def test_entry_coding_inverts_exit_coding(octagon):
    rng = np.random.default_rng(17)
    for pt in sample_section(octagon, 200, rng):
        crossing = crossing_points(octagon, pt)
        image = billiard_apply(octagon, pt)
        image_crossing = crossing_points(octagon, image)
        forward = octagon.generator(crossing.exit_side)
        backward = octagon.generator(image_crossing.entry_side)
        assert mobius_deviation(backward, mobius_inverse(forward)) < 1e-12


def test_long_orbit_stays_in_section(octagon):
    rng = np.random.default_rng(19)
    pt = sample_section(octagon, 1, rng)[0]
    for _ in range(100000):
        pt = billiard_apply(octagon, pt)
    assert in_section(octagon, pt)


def test_rho_is_identity_on_domain_points(octagon, system):
    rng = np.random.default_rng(23)
    for xi, eta in sample_sigma(system, 50, rng):
        rho = conjugacy_rho(system, SectionPoint(xi, eta))
        assert rho.word == ()


def test_conjugacy_on_thousand_points(system):
    report = verify_conjugacy(system, 1000, np.random.default_rng(5))
    assert report.max_deviation < 1e-10
    assert report.max_word_length == MAX_RHO_LENGTH


def test_cohomology_identities(system):
    report = verify_cohomology(system, 1000, np.random.default_rng(6))
    assert report.left_deviation < 1e-10
    assert report.right_deviation < 1e-10


def test_exit_coding_differs_from_left_coding_somewhere(octagon, system):
    # gamma_B depends on both coordinates, so even on the baker domain it
    # cannot everywhere equal the one-variable left coding
    rng = np.random.default_rng(29)
    found = False
    for pt in sample_section(octagon, 3000, rng):
        if not system.in_sigma(pt.forward, pt.backward):
            continue
        crossing = crossing_points(octagon, pt)
        if crossing.exit_side != bs_coding(system.left, pt.forward):
            found = True
            break
    assert found


def test_search_bound_raises(octagon, system):
    rng = np.random.default_rng(31)
    for pt in sample_section(octagon, 2000, rng):
        if not system.in_sigma(pt.forward, pt.backward):
            with pytest.raises(ConjugacySearchError):
                conjugacy_rho(system, pt, max_word=0)
            return
    raise AssertionError("no section point outside the baker domain found")


def test_geometric_seeds_reproduce_incidence(octagon, system):
    rng = np.random.default_rng(37)
    seeds = seed_sigma_points(system.left, system.right, 40, rng)
    rebuilt = build_baker(system.left, system.right, samples=500, seeds=seeds)
    assert np.array_equal(rebuilt.J, system.J)


def test_orbit_rows_schema(octagon, system):
    rng = np.random.default_rng(41)
    pt = sample_section(octagon, 1, rng)[0]
    rows = orbit_rows(system, pt, 25)
    assert len(rows) == 25
    for step, x, y, side, rho_len in rows:
        assert 0.0 <= x < TWO_PI and 0.0 <= y < TWO_PI
        assert side in (1, 2, 3, 4, -1, -2, -3, -4)
        assert 0 <= rho_len <= MAX_RHO_LENGTH
    assert [r[0] for r in rows] == list(range(25))
