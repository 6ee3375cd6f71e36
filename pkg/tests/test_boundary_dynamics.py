"""Boundary partitions, Markov refinement, Bowen-Series maps, baker system."""

import numpy as np
import pytest

from bstransfer.boundary_dynamics import (
    BakerSystem,
    BowenSeriesMap,
    MarkovPartition,
    baker_apply,
    baker_inverse,
    bs_apply,
    bs_coding,
    build_baker,
    build_coarse_partition,
    cylinder,
    incidence_rows,
    partition_rows,
    refine_to_markov,
    sample_sigma,
    verify_baker_structure,
    verify_expansivity,
    verify_preimage_bijection,
)
from bstransfer.errors import (
    BakerConstructionError,
    DegeneratePartitionError,
    DomainError,
    InvariantViolation,
    NoFiniteMarkovOrbitError,
)
from bstransfer.fuchsian import build_regular_4g_gon, side_geodesic_endpoints
from bstransfer.hypgeo import (
    TWO_PI,
    boundary_derivative,
    circle_distance,
    mobius_apply_angle,
    mobius_deviation,
    mobius_inverse,
    normalize_angle,
)

# frozen regression values from the first verified octagon construction
MARKOV_ARC_COUNT = 48
INCIDENCE_TOTAL = 1800
ROW_BLOCK = (38, 39, 40, 39, 35, 34)
COLUMN_BLOCK = (35, 39, 40, 39, 38, 34)


@pytest.fixture(scope="module")
def octagon():
    return build_regular_4g_gon(2)


@pytest.fixture(scope="module")
def coarse_left(octagon):
    return build_coarse_partition(octagon, "left")


@pytest.fixture(scope="module")
def coarse_right(octagon):
    return build_coarse_partition(octagon, "right")


@pytest.fixture(scope="module")
def maps(octagon, coarse_left, coarse_right):
    TL = BowenSeriesMap(refine_to_markov(coarse_left, octagon), octagon)
    TR = BowenSeriesMap(refine_to_markov(coarse_right, octagon), octagon)
    return TL, TR


@pytest.fixture(scope="module")
def system(maps):
    TL, TR = maps
    return build_baker(TL, TR, samples=2000)


def arc_lengths(partition):
    cuts = np.asarray(partition.cuts)
    return normalize_angle(np.roll(cuts, -1) - cuts) % TWO_PI


def test_coarse_arc_count_and_equal_lengths(coarse_left, coarse_right):
    for part in (coarse_left, coarse_right):
        assert part.n == 8
        lengths = arc_lengths(part)
        assert abs(lengths.sum() - TWO_PI) < 1e-10
        # dihedral symmetry makes all eight arcs congruent
        assert np.max(np.abs(lengths - TWO_PI / 8.0)) < 1e-10


def test_coarse_left_arcs_start_at_side_endpoints(octagon, coarse_left):
    for lab in octagon.position_labels:
        s_left, _ = side_geodesic_endpoints(octagon, lab)
        hits = [i for i, c in enumerate(coarse_left.cuts)
                if circle_distance(c, s_left) < 1e-10]
        assert len(hits) == 1
        # the arc beginning at s_k is the one coded by generator k
        assert coarse_left.label(hits[0]) == lab


def test_coarse_right_is_reflection_of_left(coarse_left, coarse_right):
    mirrored = np.sort(normalize_angle(-np.asarray(coarse_left.cuts)))
    assert np.max(np.abs(mirrored - np.sort(coarse_right.cuts))) < 1e-10


def test_coarse_arcs_lie_in_unstable_domain(octagon, coarse_left, coarse_right):
    for part in (coarse_left, coarse_right):
        for i in range(part.n):
            arc = part.arc(i)
            g = octagon.generator(part.label(i))
            thetas = arc.start + np.linspace(0.0, 1.0, 101) * normalize_angle(
                arc.end - arc.start
            )
            assert np.min(boundary_derivative(g, thetas)) >= 1.0 - 1e-10


def test_coincident_cut_points_rejected():
    cuts = [0.0, 1e-13, 1.0, 2.0]
    with pytest.raises(DegeneratePartitionError):
        MarkovPartition(cuts, [1, 2, 3, 4], "left")


def test_refinement_arc_count_pinned(maps):
    TL, TR = maps
    assert TL.partition.n == MARKOV_ARC_COUNT
    assert TR.partition.n == MARKOV_ARC_COUNT


def test_refinement_idempotent(octagon, maps):
    TL, _ = maps
    again = refine_to_markov(TL.partition, octagon)
    assert again.n == TL.partition.n
    assert np.max(np.abs(np.asarray(again.cuts) - np.asarray(TL.partition.cuts))) < 1e-12
    assert again.labels == TL.partition.labels


def test_perturbed_partition_has_no_finite_orbit(octagon, coarse_left):
    rng = np.random.default_rng(2)
    cuts = np.sort((np.asarray(coarse_left.cuts)
                    + rng.uniform(-1e-3, 1e-3, coarse_left.n)) % TWO_PI)
    perturbed = MarkovPartition(cuts, coarse_left.labels, "left")
    with pytest.raises(NoFiniteMarkovOrbitError):
        refine_to_markov(perturbed, octagon)


def test_markov_alignment(maps):
    # image endpoints of every arc coincide with partition cut points
    for T in maps:
        assert T.markov_error < 1e-10


def test_image_is_contiguous_run(maps):
    for T in maps:
        n = T.partition.n
        for i in range(n):
            first, count = T.image_run(i)
            assert 1 <= count < n
            arc = T.partition.arc(i)
            mids = arc.start + np.linspace(0.05, 0.95, 9) * normalize_angle(
                arc.end - arc.start
            )
            run = {(first + m) % n for m in range(count)}
            for theta in mids:
                assert T.partition.locate(bs_apply(T, theta)) in run


def test_coding_respects_closure_side(maps):
    TL, TR = maps
    for i, c in enumerate(TL.partition.cuts):
        # left arcs are closed on the left: the cut codes the arc it starts
        assert bs_coding(TL, c) == TL.partition.label(i)
    for i, c in enumerate(TR.partition.cuts):
        # right arcs are closed on the right: the cut codes the arc it ends
        j = (i - 1) % TR.partition.n
        assert bs_coding(TR, c) == TR.partition.label(j)


def test_derivative_on_unstable_samples(octagon, maps):
    rng = np.random.default_rng(9)
    for T in maps:
        thetas = rng.uniform(0.0, TWO_PI, 1000)
        for theta in thetas:
            d = T.derivative(theta)
            assert d >= 1.0 - 1e-10
            g = octagon.generator(bs_coding(T, theta))
            assert abs(d - boundary_derivative(g, theta)) < 1e-12


def test_two_step_expansivity(maps):
    for T in maps:
        assert verify_expansivity(T, 10000) > 1.0


def test_incidence_totals_pinned(system):
    J = np.asarray(system.J)
    assert int(J.sum()) == INCIDENCE_TOTAL
    rows = J.sum(axis=1).reshape(8, 6)
    cols = J.sum(axis=0).reshape(8, 6)
    assert np.all(rows == rows[0]) and tuple(rows[0]) == ROW_BLOCK
    assert np.all(cols == cols[0]) and tuple(cols[0]) == COLUMN_BLOCK


def test_incidence_dihedral_symmetry(system):
    TL, TR = system.left, system.right
    J = system.J
    for k in range(TL.partition.n):
        ak = TL.partition.arc(k)
        xi = ak.start + 0.5 * normalize_angle(ak.end - ak.start)
        for l in range(TR.partition.n):
            al = TR.partition.arc(l)
            eta = al.start + 0.5 * normalize_angle(al.end - al.start)
            rot = J[TL.partition.locate(normalize_angle(xi + TWO_PI / 8.0)),
                    TR.partition.locate(normalize_angle(eta + TWO_PI / 8.0))]
            ref = J[TL.partition.locate(normalize_angle(-eta)),
                    TR.partition.locate(normalize_angle(-xi))]
            assert rot == J[k, l]
            assert ref == J[k, l]


def test_q_arc_closures_disjoint(system):
    nL = system.left.partition.n
    for k in range(nL):
        own = system.left.partition.arc(k)
        q = system.Q_R[k]
        gap_a = normalize_angle(q.start - own.end)
        gap_b = normalize_angle(own.start - q.end)
        assert gap_a > 1e-9 and gap_b > 1e-9
    for l in range(system.right.partition.n):
        own = system.right.partition.arc(l)
        q = system.Q_L[l]
        gap_a = normalize_angle(q.start - own.end)
        gap_b = normalize_angle(own.start - q.end)
        assert gap_a > 1e-9 and gap_b > 1e-9


def test_row_of_ones_rejected(system):
    J = np.asarray(system.J).copy()
    J[5, :] = 1
    with pytest.raises(BakerConstructionError):
        verify_baker_structure(system.left, system.right, J)


def test_round_trip_on_sigma_samples(system):
    rng = np.random.default_rng(17)
    pts = sample_sigma(system, 10000, rng)
    worst = 0.0
    for xi, eta in pts:
        xi2, eta2 = baker_apply(system, xi, eta)
        xi3, eta3 = baker_inverse(system, xi2, eta2)
        worst = max(worst, circle_distance(xi, xi3), circle_distance(eta, eta3))
    assert worst < 1e-12


def test_codings_are_reciprocal(system):
    rng = np.random.default_rng(23)
    for xi, eta in sample_sigma(system, 1000, rng):
        g = system.left.coding_map(xi)
        _, eta2 = baker_apply(system, xi, eta)
        h = system.right.coding_map(eta2)
        assert mobius_deviation(h, mobius_inverse(g)) < 1e-12


def test_sigma_invariance(system):
    rng = np.random.default_rng(29)
    for xi, eta in sample_sigma(system, 10000, rng):
        assert system.in_sigma(*baker_apply(system, xi, eta))
        assert system.in_sigma(*baker_inverse(system, xi, eta))


def test_outside_sigma_raises(system):
    rng = np.random.default_rng(31)
    while True:
        xi, eta = rng.uniform(0.0, TWO_PI, 2)
        if not system.in_sigma(xi, eta):
            break
    with pytest.raises(DomainError):
        baker_apply(system, xi, eta)
    with pytest.raises(DomainError):
        baker_inverse(system, xi, eta)


def test_preimage_bijection_on_random_pairs(system):
    rng = np.random.default_rng(37)
    n_arcs = system.left.partition.n
    for _ in range(1000):
        xi_image, eta = rng.uniform(0.0, TWO_PI, 2)
        report = verify_preimage_bijection(system, xi_image, eta)
        assert report.cardinality <= n_arcs


def test_preimage_bijection_detects_corruption(system, maps):
    TL, TR = maps
    rng = np.random.default_rng(41)
    xi, eta = sample_sigma(system, 1, rng)[0]
    xi_image, _ = baker_apply(system, xi, eta)
    J = np.asarray(system.J).copy()
    J[TL.partition.locate(xi), TR.partition.locate(eta)] = 0
    corrupted = BakerSystem(TL, TR, J, system.Q_R, system.Q_L)
    with pytest.raises(InvariantViolation):
        verify_preimage_bijection(corrupted, xi_image, eta)


def test_cylinder_trivial(system):
    rng = np.random.default_rng(43)
    xi = rng.uniform(0.0, TWO_PI)
    k = system.left.partition.locate(xi)
    arc, q, word = cylinder(system, 0, xi)
    own = system.left.partition.arc(k)
    assert circle_distance(arc.start, own.start) < 1e-14
    assert circle_distance(arc.end, own.end) < 1e-14
    assert circle_distance(q.start, system.Q_R[k].start) < 1e-14
    assert word.word == ()


def test_cylinder_word_realizes_iterates(system):
    rng = np.random.default_rng(47)
    for _ in range(50):
        xi = rng.uniform(0.0, TWO_PI)
        n = int(rng.integers(1, 7))
        arc, _, word = cylinder(system, n, xi)
        assert len(word.word) == n
        thetas = arc.start + np.linspace(0.1, 0.9, 5) * normalize_angle(
            arc.end - arc.start
        )
        for theta in thetas:
            iterate = theta
            for _ in range(n):
                iterate = bs_apply(system.left, iterate)
            assert circle_distance(iterate, mobius_apply_angle(word, theta)) < 1e-9


def preimages_n(T, xi, n):
    points = [xi]
    for _ in range(n):
        points = [p for q in points for (p, _) in T.preimages(q)]
    return points


def test_cylinder_q_arcs_tile_base_q_arc(system):
    # the pushed Q-arcs over all n-step preimages of a point partition the
    # Q-arc of that point
    rng = np.random.default_rng(53)
    xi_image = rng.uniform(0.0, TWO_PI)
    base = system.Q_R[system.left.partition.locate(xi_image)]
    segments = []
    for xi in preimages_n(system.left, xi_image, 3):
        _, q, _ = cylinder(system, 3, xi)
        # offsets live in [0, base.length]; unwrap jitter just below zero
        offset = normalize_angle(q.start - base.start)
        if offset > TWO_PI - 1e-6:
            offset -= TWO_PI
        segments.append((offset, q.length))
    segments.sort()
    cursor = 0.0
    for offset, length in segments:
        assert abs(offset - cursor) < 1e-9
        cursor = offset + length
    assert abs(cursor - base.length) < 1e-9


def test_cylinder_lengths_shrink(system):
    rng = np.random.default_rng(59)
    xis = rng.uniform(0.0, TWO_PI, 200)
    longest = {}
    for n in (5, 10):
        longest[n] = max(cylinder(system, n, xi)[0].length for xi in xis)
    assert longest[10] < longest[5]


def test_export_rows(system):
    TL = system.left
    rows = partition_rows(TL)
    assert len(rows) == TL.partition.n
    index, start, end, label, run_first, run_last = rows[0]
    assert index == 0 and 0.0 <= start < TWO_PI and 0.0 <= end < TWO_PI
    assert label in (1, 2, 3, 4, -1, -2, -3, -4)
    assert 0 <= run_first < TL.partition.n and 0 <= run_last < TL.partition.n
    inc = incidence_rows(system)
    assert len(inc) == TL.partition.n * system.right.partition.n
    assert sum(v for _, _, v in inc) == INCIDENCE_TOTAL
