"""Boundary maps of Bowen-Series type and the associated baker system.

The circle is cut by the side geodesic endpoints into the coarse arcs
A_k^L = [s_k^L, s_{l(k)}^L) and A_k^R = (s_{j(k)}^R, s_k^R]; the boundary
maps apply the generator a_k on the arc labeled k.  Refining the cut set
until it is forward invariant yields Markov partitions, and the pair
(T_L, T_R) couples into a baker transformation on a finite union of
rectangles I_k^L x I_l^R selected by an incidence matrix J.

Angles live in [0, 2pi).  Left objects are left-closed, right objects
right-closed; endpoint membership is resolved by snapping to cut points
at tolerance 1e-12.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BakerConstructionError,
    BranchConsistencyError,
    DegeneratePartitionError,
    DomainError,
    InvariantViolation,
    NoFiniteMarkovOrbitError,
)
from .hypgeo import (
    TWO_PI,
    boundary_derivative,
    circle_distance,
    mobius_apply_angle,
    mobius_compose,
    mobius_deviation,
    mobius_inverse,
    normalize_angle,
)

SNAP_TOL = 1e-12
MATCH_TOL = 1e-9
MARKOV_TOL = 1e-10


@dataclass(frozen=True)
class HalfOpenArc:
    """Circular arc with one closed endpoint.

    Left-closed arcs are [start, end), right-closed arcs are (start, end];
    both are traversed counterclockwise from start to end.
    """

    start: float
    end: float
    closure_side: str = "left"

    @property
    def length(self):
        return normalize_angle(self.end - self.start) or TWO_PI

    def contains(self, theta, snap=SNAP_TOL):
        rel = normalize_angle(theta - self.start)
        ln = self.length
        at_start = min(rel, TWO_PI - rel) <= snap
        at_end = abs(rel - ln) <= snap
        if self.closure_side == "left":
            if at_start:
                return True
            if at_end:
                return False
        else:
            if at_start:
                return False
            if at_end:
                return True
        return 0.0 < rel < ln


class MarkovPartition:
    """Ordered circle partition into half-open arcs with generator labels.

    ``cuts`` are the sorted arc boundaries in [0, 2pi); arc i runs from
    cuts[i] to cuts[i+1] (cyclically), is labeled by the signed generator
    index labels[i], and is left-closed for side "left", right-closed for
    side "right".
    """

    def __init__(self, cuts, labels, side, coarse=None):
        cuts = np.asarray(cuts, dtype=float)
        order = np.argsort(cuts)
        self.cuts = cuts[order]
        self.labels = tuple(int(x) for x in np.asarray(labels)[order])
        if side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {side!r}")
        self.side = side
        self.coarse = coarse
        gaps = np.diff(np.concatenate([self.cuts, [self.cuts[0] + TWO_PI]]))
        if np.any(gaps <= SNAP_TOL):
            raise DegeneratePartitionError(
                f"coincident cut points (min gap {gaps.min():.3e})"
            )

    @property
    def n(self):
        return len(self.cuts)

    def arc(self, i):
        i %= self.n
        return HalfOpenArc(self.cuts[i], self.cuts[(i + 1) % self.n],
                           "left" if self.side == "left" else "right")

    def lengths(self):
        return np.diff(np.concatenate([self.cuts, [self.cuts[0] + TWO_PI]]))

    def locate(self, theta):
        """Arc index containing ``theta`` under the closure convention."""
        return int(self.locate_many(np.asarray([theta]))[0])

    def locate_many(self, thetas):
        t = normalize_angle(np.asarray(thetas, dtype=float))
        n = self.n
        idx = (np.searchsorted(self.cuts, t, side="right") - 1) % n
        # snap angles sitting on a cut: the cut belongs to the arc starting
        # there on the left side, to the arc ending there on the right side
        near = np.searchsorted(self.cuts, t) % n
        for cand in (near, (near - 1) % n):
            d = np.abs(t - self.cuts[cand])
            d = np.minimum(d, TWO_PI - d)
            hit = d <= SNAP_TOL
            if np.any(hit):
                idx[hit] = cand[hit] if self.side == "left" else (cand[hit] - 1) % n
        return idx

    def label(self, i):
        return self.labels[i % self.n]

    def label_right_of(self, theta):
        """Label of the arc whose interior starts at or follows theta."""
        n = self.n
        i = int((np.searchsorted(self.cuts, normalize_angle(theta), side="right") - 1) % n)
        d = circle_distance(theta, self.cuts[(i + 1) % n])
        if d <= SNAP_TOL:
            i = (i + 1) % n
        return self.labels[i]

    def label_left_of(self, theta):
        """Label of the arc whose interior ends at or precedes theta."""
        n = self.n
        i = int((np.searchsorted(self.cuts, normalize_angle(theta), side="right") - 1) % n)
        if circle_distance(theta, self.cuts[i]) <= SNAP_TOL:
            i = (i - 1) % n
        return self.labels[i]


def build_coarse_partition(group, side):
    """Coarse partition by side geodesic endpoints, with generator labels.

    Left arcs start at s_k^L and carry label k; right arcs end at s_k^R and
    carry label k.  Each labeled arc is checked to lie in the unstable
    domain of its generator, |a_k'| >= 1 - 1e-10.
    """
    from .fuchsian import side_geodesic_endpoints

    starts = []
    for j in range(1, group.n_sides + 1):
        k = group.side_label(j)
        sl, sr = side_geodesic_endpoints(group, j, signed=False)
        starts.append((sl if side == "left" else sr, k))
    angles = np.array([a for a, _ in starts])
    labels_at = [k for _, k in starts]
    order = np.argsort(angles)
    cuts = angles[order]
    if np.any(np.diff(cuts) <= SNAP_TOL) or (cuts[0] + TWO_PI - cuts[-1]) <= SNAP_TOL:
        raise DegeneratePartitionError("side endpoint angles coincide")
    if side == "left":
        labels = [labels_at[i] for i in order]
    else:
        # arc i ends at cuts[i+1]; it carries the label of that endpoint
        labels = [labels_at[order[(i + 1) % len(order)]] for i in range(len(order))]
    part = MarkovPartition(cuts, labels, side)
    # unstable-domain check on a few interior samples per arc
    for i in range(part.n):
        arc = part.arc(i)
        g = group.generator(part.label(i))
        for t in (0.01, 0.5, 0.99):
            theta = normalize_angle(arc.start + t * arc.length)
            if boundary_derivative(g, theta) < 1.0 - 1e-10:
                raise InvariantViolation(
                    f"arc {i} leaves the unstable domain of its generator"
                )
    return part


def refine_to_markov(partition, group, max_iter=50, match_tol=MATCH_TOL,
                     max_cuts=20000):
    """Grow the cut set C by C <- C u T(C) until stable.

    At a cut point the map is two-valued (the arcs on either side carry
    different generators), so T(C) contributes both one-sided images; both
    must be cuts for the image of every arc to be a union of arcs.  Labels
    of refined arcs are inherited from the coarse arc containing them.
    """
    coarse = partition.coarse or partition
    cuts = np.array(partition.cuts)
    for _ in range(max_iter):
        plus = np.array([coarse.label_right_of(c) for c in cuts])
        minus = np.array([coarse.label_left_of(c) for c in cuts])
        images = []
        for lab in np.unique(np.concatenate([plus, minus])):
            g = group.generator(int(lab))
            sel = cuts[plus == lab]
            if len(sel):
                images.append(mobius_apply_angle(g, sel))
            sel = cuts[minus == lab]
            if len(sel):
                images.append(mobius_apply_angle(g, sel))
        cand = np.sort(np.concatenate([cuts] + [np.atleast_1d(im) for im in images]))
        merged = [cand[0]]
        for c in cand[1:]:
            if c - merged[-1] > match_tol:
                merged.append(c)
        if merged[-1] + TWO_PI - merged[0] <= match_tol:
            merged.pop()
        new_cuts = np.array(merged)
        if len(new_cuts) > max_cuts:
            raise NoFiniteMarkovOrbitError(
                f"cut set exceeded {max_cuts} points without stabilizing"
            )
        if len(new_cuts) == len(cuts) and np.all(np.abs(new_cuts - cuts) <= match_tol):
            if partition.side == "left":
                labels = [coarse.label_right_of(c) for c in cuts]
            else:
                labels = [coarse.label_left_of(cuts[(i + 1) % len(cuts)])
                          for i in range(len(cuts))]
            return MarkovPartition(cuts, labels, partition.side, coarse=coarse)
        cuts = new_cuts
    raise NoFiniteMarkovOrbitError(
        f"refinement did not stabilize in {max_iter} iterations "
        f"({len(cuts)} cuts so far)"
    )


class BowenSeriesMap:
    """Piecewise Mobius boundary map T(xi) = a_k(xi) on arc k.

    Construction verifies the Markov property: the image of every arc has
    endpoints on cut points (within 1e-10) and is a contiguous run of
    arcs.  ``image_first``/``image_count`` record that run.
    """

    def __init__(self, partition, group, markov_tol=MARKOV_TOL):
        self.partition = partition
        self.group = group
        self.gens = [group.generator(k) for k in partition.labels]
        n = partition.n
        self.image_first = np.zeros(n, dtype=int)
        self.image_count = np.zeros(n, dtype=int)
        cuts = partition.cuts
        worst = 0.0
        for i in range(n):
            g = self.gens[i]
            a = mobius_apply_angle(g, cuts[i])
            b = mobius_apply_angle(g, cuts[(i + 1) % n])
            ia = int(np.argmin(np.abs(np.minimum(
                np.abs(cuts - a), TWO_PI - np.abs(cuts - a)))))
            ib = int(np.argmin(np.abs(np.minimum(
                np.abs(cuts - b), TWO_PI - np.abs(cuts - b)))))
            worst = max(worst, circle_distance(cuts[ia], a),
                        circle_distance(cuts[ib], b))
            self.image_first[i] = ia
            self.image_count[i] = (ib - ia) % n or n
        if worst > markov_tol:
            raise InvariantViolation(
                f"partition is not Markov: image endpoints miss cuts by {worst:.3e}"
            )
        self.markov_error = worst

    @property
    def n(self):
        return self.partition.n

    def coding_index(self, xi):
        return self.partition.locate(xi)

    def coding(self, xi):
        """Signed generator label applied at xi."""
        return self.partition.label(self.partition.locate(xi))

    def coding_map(self, xi):
        return self.gens[self.partition.locate(xi)]

    def apply(self, xi):
        return mobius_apply_angle(self.coding_map(xi), xi)

    def derivative(self, xi):
        return boundary_derivative(self.coding_map(xi), xi)

    def image_run(self, i):
        return int(self.image_first[i]), int(self.image_count[i])

    def preimages(self, xi):
        """All (pre, arc index) with T(pre) = xi, exact on arc membership."""
        out = []
        for i in range(self.n):
            pre = mobius_apply_angle(mobius_inverse(self.gens[i]), xi)
            if self.partition.locate(pre) == i:
                out.append((pre, i))
        return out


def bs_apply(T, xi):
    return T.apply(xi)


def bs_coding(T, xi):
    return T.coding(xi)


def verify_expansivity(T, grid=10000):
    """Minimum of |(T^2)'| over a uniform grid; must exceed 1."""
    thetas = np.arange(grid) * TWO_PI / grid
    worst = np.inf
    for theta in thetas:
        d1 = T.derivative(theta)
        d2 = T.derivative(T.apply(theta))
        worst = min(worst, d1 * d2)
    return worst


def _run_between(partition, a, b, inset=1e-11):
    """Indices of the arcs covering the arc from angle a to angle b (ccw)."""
    total = normalize_angle(b - a)
    if total <= 2 * inset:
        return []
    i0 = partition.locate(normalize_angle(a + inset))
    i1 = partition.locate(normalize_angle(b - inset))
    n = partition.n
    count = (i1 - i0) % n + 1
    return [(i0 + m) % n for m in range(count)]


@dataclass
class BakerSystem:
    """Coupled boundary maps with incidence structure.

    J[k, l] = 1 marks the rectangle I_k^L x I_l^R as part of the invariant
    union Sigma-hat; Q_R[k] is the single arc of admissible eta for
    xi in I_k^L, and Q_L[l] the arc of admissible xi for eta in I_l^R.
    """

    left: BowenSeriesMap
    right: BowenSeriesMap
    J: np.ndarray
    Q_R: list
    Q_L: list

    def rectangle(self, xi, eta):
        return self.left.partition.locate(xi), self.right.partition.locate(eta)

    def in_sigma(self, xi, eta):
        k, l = self.rectangle(xi, eta)
        return bool(self.J[k, l])


def sigma_member(left, right, xi, eta, depth=12):
    """Intrinsic membership test for the invariant set, J-free.

    Follows the forward orbit mapping both coordinates by the left coding
    and requires the right coding of the second coordinate to stay
    reciprocal (gamma_R = gamma_L^{-1}); then the mirror backward test.
    Used to seed the incidence matrix without circularity.
    """
    x, y = xi, eta
    for _ in range(depth):
        k = left.partition.locate(x)
        lab = left.partition.label(k)
        g = left.gens[k]
        x, y = mobius_apply_angle(g, x), mobius_apply_angle(g, y)
        l = right.partition.locate(y)
        if right.partition.label(l) != -lab:
            return False
    x, y = xi, eta
    for _ in range(depth):
        l = right.partition.locate(y)
        lab = right.partition.label(l)
        g = right.gens[l]
        x, y = mobius_apply_angle(g, x), mobius_apply_angle(g, y)
        k = left.partition.locate(x)
        if left.partition.label(k) != -lab:
            return False
    return True


def _forward_pairs(left, right, k, l):
    """Sub-rectangles of the image of rectangle (k, l) under the coupling."""
    g = left.gens[k]
    first, count = left.image_run(k)
    ks = [(first + m) % left.n for m in range(count)]
    arc = right.partition.arc(l)
    a, b = mobius_apply_angle(g, arc.start), mobius_apply_angle(g, arc.end)
    ls = _run_between(right.partition, a, b)
    return [(k2, l2) for k2 in ks for l2 in ls]


def _backward_pairs(left, right, k, l):
    """Sub-rectangles of the preimage of rectangle (k, l)."""
    g = right.gens[l]
    first, count = right.image_run(l)
    ls = [(first + m) % right.n for m in range(count)]
    arc = left.partition.arc(k)
    a, b = mobius_apply_angle(g, arc.start), mobius_apply_angle(g, arc.end)
    ks = _run_between(left.partition, a, b)
    return [(k2, l2) for k2 in ks for l2 in ls]


def _reciprocity_mask(left, right):
    """Rectangles whose one-step couplings keep the codings reciprocal.

    Applying gamma_k forward, the eta-image of rectangle (k, l) must lie in
    right arcs labeled -label(k), or the backward map would not undo the
    step; mirror condition for the backward coupling.  Necessary for
    membership in any bijective rectangle family.
    """
    nL, nR = left.n, right.n
    V = np.ones((nL, nR), dtype=np.int8)
    for k in range(nL):
        g = left.gens[k]
        lab = left.partition.label(k)
        arcs = [right.partition.arc(l) for l in range(nR)]
        for l in range(nR):
            a = mobius_apply_angle(g, arcs[l].start)
            b = mobius_apply_angle(g, arcs[l].end)
            for l2 in _run_between(right.partition, a, b):
                if right.partition.label(l2) != -lab:
                    V[k, l] = 0
                    break
    for l in range(nR):
        g = right.gens[l]
        lab = right.partition.label(l)
        arcs = [left.partition.arc(k) for k in range(nL)]
        for k in range(nL):
            if not V[k, l]:
                continue
            a = mobius_apply_angle(g, arcs[k].start)
            b = mobius_apply_angle(g, arcs[k].end)
            for k2 in _run_between(left.partition, a, b):
                if left.partition.label(k2) != -lab:
                    V[k, l] = 0
                    break
    return V


def _prune_invariant(left, right, J, fwd, bwd):
    J = J.copy()
    changed = True
    while changed:
        changed = False
        for k in range(left.n):
            for l in range(right.n):
                if not J[k, l]:
                    continue
                if any(not J[p] for p in fwd[k][l]) or any(not J[p] for p in bwd[k][l]):
                    J[k, l] = 0
                    changed = True
    return J


def _close_under_dynamics(left, right, marks, fwd, bwd):
    marks = marks.copy()
    stack = list(zip(*np.nonzero(marks)))
    while stack:
        k, l = stack.pop()
        for p in fwd[k][l] + bwd[k][l]:
            if not marks[p]:
                marks[p] = 1
                stack.append(p)
    return marks


def build_baker(left, right, samples=10000, seeds=None, rng=None):
    """Assemble the baker system, constructing J two independent ways.

    Geometric route: membership seeds (supplied, or generated by the
    intrinsic coding test) are closed under the forward and backward
    rectangle dynamics.  Structural route: start from J0(k,l) = 1 iff the
    closures of I_k^L and I_l^R are disjoint, and prune to the maximal
    invariant rectangle family.  The two must agree exactly; the resulting
    structure is verified (Q-arcs single and separated, sampled
    bijectivity and reciprocity) before return.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    nL, nR = left.n, right.n
    fwd = [[_forward_pairs(left, right, k, l) for l in range(nR)] for k in range(nL)]
    bwd = [[_backward_pairs(left, right, k, l) for l in range(nR)] for k in range(nL)]
    V = _reciprocity_mask(left, right)

    J0 = np.zeros((nL, nR), dtype=np.int8)
    cutsL, cutsR = left.partition.cuts, right.partition.cuts
    for k in range(nL):
        a0, a1 = cutsL[k], cutsL[(k + 1) % nL]
        for l in range(nR):
            b0, b1 = cutsR[l], cutsR[(l + 1) % nR]
            # closed arcs [a0,a1] and [b0,b1] are disjoint iff each one's
            # start lies strictly outside the other
            if (normalize_angle(b0 - a0) > normalize_angle(a1 - a0) + MATCH_TOL
                    and normalize_angle(a0 - b0) > normalize_angle(b1 - b0) + MATCH_TOL):
                J0[k, l] = 1
    J_structural = _prune_invariant(left, right, J0 & V, fwd, bwd)

    marks = np.zeros((nL, nR), dtype=np.int8)
    if seeds is None:
        seeds = []
        attempts = 0
        while len(seeds) < 40 and attempts < 200 * 40:
            attempts += 1
            xi, eta = rng.uniform(0.0, TWO_PI, size=2)
            if sigma_member(left, right, xi, eta):
                seeds.append((xi, eta))
    for xi, eta in seeds:
        marks[left.partition.locate(xi), right.partition.locate(eta)] = 1
    if not marks.any():
        raise BakerConstructionError("no membership seeds found")
    J_geometric = _close_under_dynamics(left, right, marks, fwd, bwd)
    J_geometric = _prune_invariant(left, right, J_geometric & V, fwd, bwd)

    if not np.array_equal(J_geometric, J_structural):
        diff = int(np.abs(J_geometric.astype(int) - J_structural.astype(int)).sum())
        raise BakerConstructionError(
            f"incidence constructions disagree on {diff} rectangles"
        )
    J = J_structural
    Q_R, Q_L = verify_baker_structure(left, right, J)
    system = BakerSystem(left, right, J, Q_R, Q_L)
    _verify_baker_samples(system, max(100, samples // 10), rng)
    return system


def verify_baker_structure(left, right, J):
    """Q-arc assembly and separation checks; raises on structural failure."""
    nL, nR = left.n, right.n
    if not J.any() or J.shape != (nL, nR):
        raise BakerConstructionError("incidence matrix empty or mis-shaped")
    cutsL, cutsR = left.partition.cuts, right.partition.cuts
    Q_R = []
    for k in range(nL):
        run = _single_circular_run(np.nonzero(J[k])[0], nR)
        if run is None:
            raise BakerConstructionError(f"row {k} of J is not a single run")
        first, count = run
        arc = HalfOpenArc(cutsR[first], cutsR[(first + count) % nR], "right")
        own = HalfOpenArc(cutsL[k], cutsL[(k + 1) % nL], "left")
        if _closed_arcs_overlap(arc, own):
            raise BakerConstructionError(
                f"closure of Q_{k}^R meets closure of I_{k}^L"
            )
        Q_R.append(arc)
    Q_L = []
    for l in range(nR):
        run = _single_circular_run(np.nonzero(J[:, l])[0], nL)
        if run is None:
            raise BakerConstructionError(f"column {l} of J is not a single run")
        first, count = run
        arc = HalfOpenArc(cutsL[first], cutsL[(first + count) % nL], "left")
        own = HalfOpenArc(cutsR[l], cutsR[(l + 1) % nR], "right")
        if _closed_arcs_overlap(arc, own):
            raise BakerConstructionError(
                f"closure of Q_{l}^L meets closure of I_{l}^R"
            )
        Q_L.append(arc)
    return Q_R, Q_L


def _single_circular_run(indices, n):
    """(first, count) if indices form one contiguous circular run, else None."""
    if len(indices) == 0 or len(indices) == n:
        return None
    present = np.zeros(n, dtype=bool)
    present[indices] = True
    starts = [i for i in range(n) if present[i] and not present[(i - 1) % n]]
    if len(starts) != 1:
        return None
    return starts[0], int(present.sum())


def _closed_arcs_overlap(a, b, margin=SNAP_TOL):
    # disjoint closed arcs tile the circle as arc a, gap, arc b, gap; an
    # overlap makes the four contributions wrap past one full turn
    ga = normalize_angle(b.start - a.end)
    gb = normalize_angle(a.start - b.end)
    total = a.length + b.length + ga + gb
    return not (ga > margin and gb > margin and total < 3.0 * np.pi)


def _verify_baker_samples(system, count, rng):
    pts = sample_sigma(system, count, rng)
    for xi, eta in pts:
        xi2, eta2 = baker_apply(system, xi, eta)
        if not system.in_sigma(xi2, eta2):
            raise BakerConstructionError("forward image escapes the rectangle union")
        xi3, eta3 = baker_inverse(system, xi2, eta2)
        if circle_distance(xi3, xi) > 1e-12 or circle_distance(eta3, eta) > 1e-12:
            raise BakerConstructionError("inverse does not undo the coupling")
        g = system.left.coding_map(xi)
        d = system.right.coding_map(eta2)
        if mobius_deviation(mobius_compose(d, g), _identity()) > 1e-12:
            raise BakerConstructionError("codings are not reciprocal")


def _identity():
    from .hypgeo import IDENTITY

    return IDENTITY


def sample_sigma(system, count, rng):
    """Uniform samples of the rectangle union, by rejection."""
    out = []
    while len(out) < count:
        xi, eta = rng.uniform(0.0, TWO_PI, size=2)
        if system.in_sigma(xi, eta):
            out.append((xi, eta))
    return out


def baker_apply(system, xi, eta):
    """(xi, eta) -> (gamma_L[xi] xi, gamma_L[xi] eta); domain-checked."""
    if not system.in_sigma(xi, eta):
        raise DomainError("point is outside the rectangle union")
    g = system.left.coding_map(xi)
    return mobius_apply_angle(g, xi), mobius_apply_angle(g, eta)


def baker_inverse(system, xi, eta):
    """(xi', eta') -> (gamma_R[eta'] xi', gamma_R[eta'] eta'); domain-checked."""
    if not system.in_sigma(xi, eta):
        raise DomainError("point is outside the rectangle union")
    g = system.right.coding_map(eta)
    return mobius_apply_angle(g, xi), mobius_apply_angle(g, eta)


@dataclass(frozen=True)
class PreimageReport:
    cardinality: int
    xi_preimages: tuple
    eta_images: tuple
    worst_match: float


def verify_preimage_bijection(system, xi_image, eta, tol=1e-10):
    """Match xi-preimages against eta'-images through the coupling.

    The sets {xi : T_L xi = xi', (xi, eta) admissible} and {eta' : T_R eta'
    = eta, (xi', eta') admissible} must have equal size and be matched
    elementwise by eta' = gamma_L[xi](eta).
    """
    J = system.J
    l_eta = system.right.partition.locate(eta)
    k_img = system.left.partition.locate(xi_image)
    xi_pre = [(xi, k) for xi, k in system.left.preimages(xi_image) if J[k, l_eta]]
    eta_img = [(e, l) for e, l in system.right.preimages(eta) if J[k_img, l]]
    if len(xi_pre) != len(eta_img):
        raise InvariantViolation(
            f"preimage sets differ in size: {len(xi_pre)} vs {len(eta_img)}"
        )
    targets = [e for e, _ in eta_img]
    used = [False] * len(targets)
    worst = 0.0
    for xi, k in xi_pre:
        e = mobius_apply_angle(system.left.gens[k], eta)
        hit = None
        for idx, t in enumerate(targets):
            if not used[idx] and circle_distance(e, t) <= tol:
                hit = idx
                break
        if hit is None:
            raise InvariantViolation("coupled image misses the preimage set")
        used[hit] = True
        worst = max(worst, circle_distance(e, targets[hit]))
    return PreimageReport(len(xi_pre), tuple(x for x, _ in xi_pre),
                          tuple(targets), worst)


def cylinder(system, n, xi):
    """Cylinder arc, pushed Q-arc, and word of the n-step left orbit.

    Returns (I, Q, w) where I is the arc around xi on which T_L^n acts as
    the single Mobius word w = gamma_L[T^{n-1} xi] ... gamma_L[xi], and
    Q = w(Q^R(xi)) is the corresponding image of the base Q-arc.
    """
    left = system.left
    base = system.Q_R[left.partition.locate(xi)]
    if n == 0:
        i = left.partition.locate(xi)
        return left.partition.arc(i), base, _identity()
    points = [xi]
    for _ in range(n - 1):
        points.append(left.apply(points[-1]))
    idxs = [left.partition.locate(p) for p in points]
    word = _identity()
    for i in idxs:
        word = mobius_compose(left.gens[i], word)
    # pull the arc constraint backward from the deepest step
    arc = left.partition.arc(idxs[-1])
    lo, hi = arc.start, arc.end
    for p, i in zip(reversed(points[:-1]), reversed(idxs[:-1])):
        ginv = mobius_inverse(left.gens[i])
        lo, hi = mobius_apply_angle(ginv, lo), mobius_apply_angle(ginv, hi)
        own = left.partition.arc(i)
        lo, hi = _intersect_around(p, (own.start, own.end), (lo, hi))
    Q = HalfOpenArc(mobius_apply_angle(word, base.start),
                    mobius_apply_angle(word, base.end), "right")
    return HalfOpenArc(lo, hi, "left"), Q, word


def _intersect_around(point, arc_a, arc_b):
    """Intersection of two arcs, both containing ``point``."""
    sa = -normalize_angle(point - arc_a[0])
    sb = -normalize_angle(point - arc_b[0])
    ea = normalize_angle(arc_a[1] - point)
    eb = normalize_angle(arc_b[1] - point)
    return (normalize_angle(point + max(sa, sb)),
            normalize_angle(point + min(ea, eb)))


def partition_rows(T):
    """Rows for partition.csv: index, angles, label, image run."""
    rows = []
    for i in range(T.n):
        arc = T.partition.arc(i)
        first, count = T.image_run(i)
        rows.append((i, arc.start, arc.end, T.partition.label(i),
                     first, (first + count - 1) % T.n))
    return rows


def incidence_rows(system):
    """Rows for incidence.csv: left index, right index, J value."""
    rows = []
    nL, nR = system.J.shape
    for k in range(nL):
        for l in range(nR):
            rows.append((k, l, int(system.J[k, l])))
    return rows
