"""Tests for boundary distributions, Poisson synthesis, and the
finite-radius boundary transform.

Single Poisson-kernel powers serve as exact oracles for synthesis, the
Laplace eigen-equation, and the transform of a one-atom distribution.
The eigen-distribution checks run at the first accepted critical-line
parameter, where the arc-aligned pairing identities floor at the
eigenvalue's distance from 1 rather than at machine precision, because
the parameter itself carries ten digits.
"""

import cmath
import math

import numpy as np
import pytest
from numpy.random import default_rng

from bstransfer.boundary_dynamics import (
    BowenSeriesMap,
    build_coarse_partition,
    refine_to_markov,
)
from bstransfer.errors import (
    ConfigurationError,
    DegenerateRoundTripError,
    InvariantViolation,
)
from bstransfer.fuchsian import build_regular_4g_gon
from bstransfer.helgason import (
    BoundaryDistribution,
    boundary_distribution,
    cumulative,
    distribution_from_eigen,
    dtilde_rows,
    eigenfunction_field,
    midgap_angle,
    otal_transform,
    round_trip,
    roundtrip_rows,
    stieltjes_pair,
    synthesize_f,
    synthesize_radial_derivative,
    total_mass,
    verify_automorphy,
    verify_equivariance,
    verify_laplace_eigen,
)
from bstransfer.hypgeo import TWO_PI, MobiusMap, poisson_kernel
from bstransfer.transfer import eigenpair_at, transfer_operator

# Critical line parameter accepted by the determinant scan.
T1_STAR = 1.8944358681

S_HALF = 0.5 + 1.0j


def ones(theta):
    return np.ones_like(np.asarray(theta, dtype=float), dtype=complex)


@pytest.fixture(scope="module")
def octagon():
    return build_regular_4g_gon(2)


@pytest.fixture(scope="module")
def tmap(octagon):
    partition = refine_to_markov(build_coarse_partition(octagon, "left"), octagon)
    return BowenSeriesMap(partition, octagon)


@pytest.fixture(scope="module")
def eigen_bd(tmap):
    op = transfer_operator(tmap, 0.5)
    pair = eigenpair_at(op, T1_STAR, 16)
    return distribution_from_eigen(tmap, pair.left_vector, 0.5 + 1j * T1_STAR)


@pytest.fixture(scope="module")
def synth():
    return boundary_distribution([1.0, 2.5, 4.0], [0.5, 0.25j, -0.125], S_HALF)


@pytest.fixture(scope="module")
def single():
    return boundary_distribution([1.0], [1.0 + 0.0j], 0.5 + 0.0j)


def test_single_node_synthesis_is_poisson_power(single):
    ef = eigenfunction_field(single)
    assert synthesize_f(ef, 0.0j) == pytest.approx(1.0)
    for z in (0.3 + 0.1j, -0.45j, 0.7 - 0.2j):
        expected = cmath.exp(0.5 * cmath.log(poisson_kernel(z, 1.0)))
        assert synthesize_f(ef, z) == pytest.approx(expected, rel=1e-14)


def test_synthesis_at_origin_is_total_mass(synth):
    ef = eigenfunction_field(synth)
    assert synthesize_f(ef, 0.0j) == pytest.approx(total_mass(synth), rel=1e-14)


def test_radial_derivative_matches_finite_difference(synth):
    ef = eigenfunction_field(synth)
    z = 0.3 * cmath.exp(0.7j)
    r = 2.0 * math.atanh(0.3)
    h = 1e-5
    up = synthesize_f(ef, math.tanh((r + h) / 2.0) * cmath.exp(0.7j))
    down = synthesize_f(ef, math.tanh((r - h) / 2.0) * cmath.exp(0.7j))
    fd = (up - down) / (2.0 * h)
    value = synthesize_radial_derivative(ef, z)
    assert abs(value - fd) <= 1e-6 * abs(fd)


def test_laplace_eigen_single_node_and_step_halving(single):
    ef = eigenfunction_field(single)
    rng = default_rng(2)
    zs = 0.9 * np.sqrt(rng.random(50)) * np.exp(2j * np.pi * rng.random(50))
    coarse = verify_laplace_eigen(ef, zs, h=1e-3)
    fine = verify_laplace_eigen(ef, zs, h=5e-4)
    assert coarse.worst < 1e-3
    assert 3.0 < coarse.worst / fine.worst < 5.0


def test_laplace_eigen_s_one():
    bd = boundary_distribution([2.0], [1.0 + 0.0j], 1.0 + 0.0j)
    ef = eigenfunction_field(bd)
    rng = default_rng(3)
    zs = 0.8 * np.sqrt(rng.random(30)) * np.exp(2j * np.pi * rng.random(30))
    report = verify_laplace_eigen(ef, zs)
    assert report.worst < 1e-3
    assert report.samples == 30


def test_laplace_eigen_raises_on_tight_tolerance(single):
    ef = eigenfunction_field(single)
    with pytest.raises(InvariantViolation):
        verify_laplace_eigen(ef, [0.2 + 0.1j], tol=1e-16)


def test_cumulative_anchor_and_period(synth):
    assert cumulative(synth, 0.0) == 0.0
    f0 = total_mass(synth)
    for theta in (0.0, 0.9, 2.5, 5.1):
        jump = cumulative(synth, theta + TWO_PI) - cumulative(synth, theta)
        assert jump == pytest.approx(f0, abs=1e-15)
    values = cumulative(synth, np.array([0.5, 3.0]))
    assert values.shape == (2,)
    assert values[0] == 0.0
    assert values[1] == pytest.approx(0.5 + 0.25j)


def test_coinciding_angles_cluster_to_one_jump():
    bd = boundary_distribution(
        [1.0, 1.0 + 3e-10, 1.0 - 2e-10, 4.0],
        [2.0, 5.0, 1.0, 3.0],
        S_HALF,
        sides=[-1, 1, 0, 0],
    )
    assert len(set(bd.nodes[:3])) == 1
    # input order survives inside the cluster
    assert list(bd.weights[:3].real) == [2.0, 5.0, 1.0]
    assert cumulative(bd, bd.nodes[0]) == pytest.approx(3.0)
    assert cumulative(bd, bd.nodes[0] + 1e-6) == pytest.approx(8.0)
    assert cumulative(bd, bd.nodes[0] - 1e-6) == 0.0


def test_dtilde_rows_schema(synth):
    rows = dtilde_rows(synth, points=256)
    assert len(rows) == 257
    assert rows[0] == (0.0, 0.0, 0.0)
    f0 = total_mass(synth)
    assert rows[-1][1] == pytest.approx(f0.real)
    assert rows[-1][2] == pytest.approx(f0.imag)


def test_stieltjes_full_circle_is_total_mass(synth):
    value = stieltjes_pair(synth, ones, 0.0, TWO_PI)
    assert value == pytest.approx(total_mass(synth), abs=1e-15)


def test_stieltjes_gap_arc_vanishes(synth):
    assert stieltjes_pair(synth, ones, 4.5, 6.0) == 0.0


def test_stieltjes_agrees_with_node_sum(synth):
    def psi(theta):
        return np.sin(np.asarray(theta) - 0.8) + 0.0j

    value = stieltjes_pair(synth, psi, 0.8, 3.0)
    direct = sum(
        psi(node) * weight
        for node, weight in zip(synth.nodes, synth.weights)
        if 0.8 < node <= 3.0
    )
    assert value == pytest.approx(direct, rel=1e-12)


def test_stieltjes_integration_by_parts(synth):
    def psi(theta):
        return np.exp(0.3j * np.asarray(theta)) + 2.0

    value = stieltjes_pair(synth, psi, 0.0, TWO_PI)
    points = np.concatenate([[0.0], synth.nodes, [TWO_PI]])
    mids = 0.5 * (points[:-1] + points[1:])
    parts = psi(TWO_PI) * cumulative(synth, TWO_PI) - psi(0.0) * cumulative(synth, 0.0)
    for left, right, mid in zip(points[:-1], points[1:], mids):
        parts -= cumulative(synth, mid) * (psi(right) - psi(left))
    assert abs(value - parts) < 1e-8


def test_stieltjes_side_rule_at_interval_ends():
    bd = boundary_distribution(
        [1.0, 1.0, 4.0], [2.0, 5.0, 3.0], S_HALF, sides=[-1, 1, 0]
    )
    # the closing atom counts at beta, the opening atom does not
    assert stieltjes_pair(bd, ones, 0.5, 1.0) == pytest.approx(2.0)
    # an interval starting at the jump picks up the opening atom only
    assert stieltjes_pair(bd, ones, 1.0, 2.0) == pytest.approx(5.0)
    assert stieltjes_pair(bd, ones, 0.5, 2.0) == pytest.approx(7.0)


def test_equivariance_identity_map_is_exact(eigen_bd, tmap):
    part = tmap.partition
    arc = (part.cuts[5], part.cuts[5] + part.lengths()[5])
    report = verify_equivariance(eigen_bd, MobiusMap(1.0 + 0.0j, 0.0j), arc, ones)
    assert report.deviation < 1e-12


def test_equivariance_on_markov_arcs(eigen_bd, tmap):
    part = tmap.partition
    lengths = part.lengths()
    for k in (0, 5, 20, 37):
        arc = (part.cuts[k], part.cuts[k] + lengths[k])
        report = verify_equivariance(eigen_bd, tmap.gens[k], arc, ones)
        # floored by the eigenvalue's distance from 1 at the ten-digit t*
        assert report.deviation < 1e-8


def test_equivariance_full_circle(eigen_bd, tmap):
    report = verify_equivariance(eigen_bd, tmap.gens[5], (0.0, TWO_PI), ones)
    assert report.deviation < 1e-3
    assert report.lhs == pytest.approx(report.rhs, rel=1e-3)


def test_equivariance_negative_control(eigen_bd, tmap):
    rng = default_rng(5)
    noise = rng.standard_normal(len(eigen_bd.nodes))
    wild = boundary_distribution(
        eigen_bd.nodes,
        noise + 1j * rng.standard_normal(len(eigen_bd.nodes)),
        eigen_bd.s,
        sides=eigen_bd.sides,
    )
    part = tmap.partition
    arc = (part.cuts[5], part.cuts[5] + part.lengths()[5])
    report = verify_equivariance(wild, tmap.gens[5], arc, ones)
    assert report.deviation > 1e-2


def test_equivariance_metric_scale_invariant(eigen_bd, tmap):
    scaled = boundary_distribution(
        eigen_bd.nodes, eigen_bd.weights * (2.0 + 1.0j), eigen_bd.s,
        sides=eigen_bd.sides,
    )
    part = tmap.partition
    arc = (part.cuts[5], part.cuts[5] + part.lengths()[5])
    a = verify_equivariance(eigen_bd, tmap.gens[5], arc, ones)
    b = verify_equivariance(scaled, tmap.gens[5], arc, ones)
    assert abs(a.deviation - b.deviation) < 1e-12


def test_automorphy_identity_map_and_metric(eigen_bd, octagon):
    ef = eigenfunction_field(eigen_bd)
    rng = default_rng(11)
    zs = 0.45 * np.sqrt(rng.random(20)) * np.exp(2j * np.pi * rng.random(20))
    exact = verify_automorphy(ef, [MobiusMap(1.0 + 0.0j, 0.0j)], zs)
    assert exact.metric == 0.0
    report = verify_automorphy(ef, octagon.generators(), zs)
    assert 0.0 < report.metric < 0.2


def test_otal_empty_integral_and_domain(synth):
    ef = eigenfunction_field(synth)
    assert otal_transform(ef, 10.0, 0.0) == 0.0
    with pytest.raises(ConfigurationError):
        otal_transform(ef, 5.0, 1.0)
    with pytest.raises(ConfigurationError):
        otal_transform(ef, 17.0, 1.0)
    with pytest.raises(ConfigurationError):
        otal_transform(ef, 10.0, -0.5)
    with pytest.raises(ConfigurationError):
        otal_transform(ef, 10.0, 7.0)


def test_otal_radius_trend_full_circle(synth):
    ef = eigenfunction_field(synth)
    v10 = otal_transform(ef, 10.0, TWO_PI)
    v12 = otal_transform(ef, 12.0, TWO_PI)
    v14 = otal_transform(ef, 14.0, TWO_PI)
    assert abs(v10 - v12) / abs(v12) < 5e-2
    assert abs(v12 - v14) / abs(v14) <= abs(v10 - v12) / abs(v12)
    # full-circle value over f(0) is the fitted normalization constant
    c = v14 / total_mass(synth)
    assert abs(v12 / total_mass(synth) - c) < 1e-6 * abs(c)


def test_otal_single_node_increment(single):
    bd = boundary_distribution([1.0], [1.0 + 0.0j], S_HALF)
    ef = eigenfunction_field(bd)
    full = otal_transform(ef, 12.0, TWO_PI)
    inside = otal_transform(ef, 12.0, 1.3) - otal_transform(ef, 12.0, 0.7)
    outside = otal_transform(ef, 12.0, 0.7)
    assert abs(inside / full - 1.0) < 1e-6
    assert abs(outside / full) < 1e-6


def test_round_trip_single_node_matches_node_arc():
    bd = boundary_distribution([1.0], [1.0 + 0.0j], S_HALF)
    ef = eigenfunction_field(bd)
    arcs = [(0.7, 1.3), (1.3, 3.0), (3.0, 0.7 + TWO_PI)]
    report = round_trip(ef, arcs, [12.0])
    assert report.shape_errors[0] < 1e-6
    assert abs(report.masses[0] - 1.0) < 1e-15
    assert abs(report.masses[1]) < 1e-15


def test_round_trip_error_non_increasing_in_r(eigen_bd, tmap):
    ef = eigenfunction_field(eigen_bd)
    part = tmap.partition
    ends = [midgap_angle(eigen_bd, part.cuts[k]) for k in range(0, 48, 6)]
    arcs = [
        (a, a + (b - a) % TWO_PI) for a, b in zip(ends, ends[1:] + [ends[0]])
    ]
    report = round_trip(ef, arcs, [12.0, 14.0])
    assert report.shape_errors[0] < 0.1
    assert report.shape_errors[1] <= report.shape_errors[0]


def test_round_trip_degenerate_masses(synth):
    bd = boundary_distribution(synth.nodes, np.zeros(3, dtype=complex), S_HALF)
    ef = eigenfunction_field(bd)
    with pytest.raises(DegenerateRoundTripError):
        round_trip(ef, [(0.5, 2.0)], [10.0])


def test_roundtrip_rows_schema():
    bd = boundary_distribution([1.0], [1.0 + 0.0j], S_HALF)
    ef = eigenfunction_field(bd)
    arcs = [(0.7, 1.3), (1.3, 3.0), (3.0, 0.7 + TWO_PI)]
    rows = roundtrip_rows(round_trip(ef, arcs, [12.0]))
    assert len(rows) == 3
    for i, row in enumerate(rows):
        assert row[0] == i
        assert all(isinstance(x, float) for x in row[1:])


def test_midgap_angle_clears_every_mass(eigen_bd, tmap):
    part = tmap.partition
    for k in (0, 7, 23):
        shifted = midgap_angle(eigen_bd, part.cuts[k])
        gaps = np.abs(eigen_bd.nodes - shifted % TWO_PI)
        assert gaps.min() > 1e-5


def test_holder_quotient_stable_under_refinement(eigen_bd):
    f0 = total_mass(eigen_bd)
    quotients = []
    for level in (6, 7, 8, 9):
        n = 2 ** level
        grid = np.arange(n + 1) * (TWO_PI / n)
        values = cumulative(eigen_bd, grid) / f0
        steps = np.abs(np.diff(values)) / math.sqrt(TWO_PI / n)
        quotients.append(steps.max())
    assert all(q < 1.0 for q in quotients)
    for a, b in zip(quotients, quotients[1:]):
        assert b / a < 1.5
