"""Geodesic billiard on the fundamental polygon's Poincare section.

An oriented geodesic that crosses the polygon is a section point (x, y):
the forward endpoint x and backward endpoint y on the circle.  The
billiard map applies the pairing generator of the side through which the
geodesic leaves, re-entering the polygon through the paired side.  The
conjugacy rho carries section points onto the baker domain, where the
left coding becomes cohomologous to the geometric exit coding.
"""

from __future__ import annotations

import cmath
import math
import warnings
import weakref
from dataclasses import dataclass

import numpy as np

from .boundary_dynamics import baker_apply, sigma_member
from .errors import (
    ConjugacySearchError,
    DomainError,
    InvariantViolation,
    TangencyWarning,
)
from .hypgeo import (
    IDENTITY,
    TWO_PI,
    circle_distance,
    mobius_apply_angle,
    mobius_compose,
    mobius_deviation,
    normalize_angle,
)

TANGENCY_TOL = 1e-10


@dataclass(frozen=True)
class SectionPoint:
    """Oriented geodesic from angle ``backward`` toward angle ``forward``."""

    forward: float
    backward: float


@dataclass(frozen=True)
class BilliardCrossing:
    """Where a section geodesic meets the polygon boundary.

    ``entry`` and ``exit`` are disk points ordered along the orientation;
    the side indices are signed generator labels.  A corner pass has
    entry == exit.
    """

    entry: complex
    exit: complex
    entry_side: int
    exit_side: int
    tangency: bool = False


@dataclass(frozen=True)
class _Side:
    center: complex
    radius: float
    arc_mid: float
    arc_half: float
    label: int
    v0: complex
    v1: complex


_GEOMETRY_CACHE = {}


def _geometry(group):
    key = id(group)
    hit = _GEOMETRY_CACHE.get(key)
    if hit is not None and hit[0]() is group:
        return hit[1]
    from .fuchsian import side_geodesic_circle

    sides = []
    n = group.polygon.n_sides
    for pos in range(1, n + 1):
        v0, v1 = group.polygon.side_vertices(pos)
        v0, v1 = complex(v0), complex(v1)
        c, rho = side_geodesic_circle(group, pos)
        c = complex(c)
        a0 = cmath.phase(v0 - c)
        sweep = math.remainder(cmath.phase(v1 - c) - a0, TWO_PI)
        sides.append(_Side(c, float(rho), a0 + 0.5 * sweep, 0.5 * abs(sweep),
                           group.side_label(pos), v0, v1))
    geometry = tuple(sides)
    _GEOMETRY_CACHE[key] = (weakref.ref(group), geometry)
    return geometry


def _polish_hit(u, v, side, z):
    """Newton-refine an intersection point against well conditioned forms.

    The geodesic circle through boundary points u, v can have a huge
    radius when the chord is nearly a diameter, and the standard
    circle-circle intersection then loses absolute accuracy.  The
    equivalent condition (1 + Re(u conj(v)))(1 + |z|^2) = 2 Re(conj(z)(u + v))
    keeps every term of order one, so two Newton steps against it and the
    side circle recover full precision.
    """
    kappa = 1.0 + (u * v.conjugate()).real
    w = u + v
    zx, zy = z.real, z.imag
    for _ in range(2):
        gx = 2.0 * kappa * zx - 2.0 * w.real
        gy = 2.0 * kappa * zy - 2.0 * w.imag
        sx = 2.0 * (zx - side.center.real)
        sy = 2.0 * (zy - side.center.imag)
        det = gx * sy - gy * sx
        if abs(det) < 1e-12:
            break
        g = kappa * (1.0 + zx * zx + zy * zy) - 2.0 * (zx * w.real + zy * w.imag)
        s = (zx - side.center.real) ** 2 + (zy - side.center.imag) ** 2 \
            - side.radius ** 2
        zx -= (g * sy - gy * s) / det
        zy -= (gx * s - g * sx) / det
    return complex(zx, zy)


def _chord_side_hits(geometry, x, y):
    """Disk points where the geodesic (y -> x) meets polygon sides.

    Returns a list of (point, position) pairs, unordered.  Points within
    the tangency tolerance of a side's full circle count as single hits.
    """
    u = cmath.exp(1j * y)
    v = cmath.exp(1j * x)
    diameter = abs(u + v) < 1e-9
    if not diameter:
        cg = (u + v) / (1.0 + (u * v.conjugate()).real)
        rg = math.sqrt(abs(cg) ** 2 - 1.0)
    hits = []
    for pos, side in enumerate(geometry, start=1):
        if diameter:
            # line t*v, t real: quadratic in t against the side circle
            b = (v.conjugate() * side.center).real
            disc = b * b - (abs(side.center) ** 2 - side.radius**2)
            if disc < 0.0:
                continue
            root = math.sqrt(disc)
            candidates = [(b + root) * v, (b - root) * v]
        else:
            d = abs(side.center - cg)
            if d < 1e-15:
                continue
            a = (d * d + rg * rg - side.radius**2) / (2.0 * d)
            h2 = rg * rg - a * a
            if h2 < 0.0:
                if h2 < -TANGENCY_TOL * rg:
                    continue
                h2 = 0.0
            e = (side.center - cg) / d
            base = cg + a * e
            off = 1j * e * math.sqrt(h2)
            if h2 > TANGENCY_TOL * rg:
                candidates = [_polish_hit(u, v, side, base + off),
                              _polish_hit(u, v, side, base - off)]
            else:
                candidates = [base + off, base - off]
        for z in candidates:
            if abs(z) >= 1.0 - 1e-12:
                continue
            ang = math.remainder(cmath.phase(z - side.center) - side.arc_mid,
                                 TWO_PI)
            if abs(ang) <= side.arc_half + TANGENCY_TOL / side.radius:
                hits.append((z, pos))
    return hits


def _origin_on_left(u, v, z, center, sweep_sign):
    tangent = 1j * (z - center) * sweep_sign
    return (tangent.conjugate() * (-z)).imag > 0.0


def crossing_points(group, pt):
    """Entry and exit data for a section geodesic.

    The two boundary crossings are ordered along the orientation; a
    geodesic through a corner yields entry == exit at the corner and is
    admitted only when the origin lies to its left.  Near-tangency picks
    the lowest side index deterministically and warns.
    """
    geometry = _geometry(group)
    x = float(pt.forward) % TWO_PI
    y = float(pt.backward) % TWO_PI
    if circle_distance(x, y) < 1e-12:
        raise DomainError("degenerate geodesic: equal endpoints")
    hits = _chord_side_hits(geometry, x, y)
    if not hits:
        raise DomainError("geodesic misses the fundamental polygon")
    tangency = False
    uu = cmath.exp(1j * y)
    vv = cmath.exp(1j * x)
    if abs(uu + vv) >= 1e-9:
        # distinct geodesics never touch inside the disk, so tangency to a
        # side means running along its complete geodesic; those circles
        # nearly coincide and produce no transversal hit of their own
        cg0 = (uu + vv) / (1.0 + (uu * vv.conjugate()).real)
        for side in geometry:
            if abs(cg0 - side.center) <= TANGENCY_TOL * max(1.0, abs(cg0)):
                tangency = True
                warnings.warn("geodesic runs along the side at position "
                              f"{side.label}", TangencyWarning, stacklevel=2)
                break
    # cluster hits that coincide within tolerance (corners, tangencies)
    clusters = []
    for z, pos in sorted(hits, key=lambda h: h[1]):
        for cluster in clusters:
            if abs(z - cluster[0][0]) <= 10.0 * TANGENCY_TOL:
                cluster.append((z, pos))
                break
        else:
            clusters.append([(z, pos)])
    u = cmath.exp(1j * y)
    v = cmath.exp(1j * x)

    def along(cluster):
        z = cluster[0][0]
        return abs(z - u) / abs(z - v)

    clusters.sort(key=along)
    entry_cluster, exit_cluster = clusters[0], clusters[-1]
    entry, entry_pos = entry_cluster[0][0], entry_cluster[0][1]
    exit_, exit_pos = exit_cluster[0][0], exit_cluster[0][1]
    if not tangency and len(clusters) > 2:
        # the boundary of a convex polygon meets a geodesic at most twice
        # transversally, so strictly interior contacts are grazes
        tangency = True
        warnings.warn("geodesic grazes a polygon side between its crossings",
                      TangencyWarning, stacklevel=2)
    if len(clusters) == 1:
        # single touch point: a corner pass, or a tangency to one side
        z = entry
        near_vertex = min(abs(z - s.v0) for s in geometry) <= 1e-8
        if not near_vertex and not tangency:
            tangency = True
            warnings.warn("geodesic grazes the polygon at a single point",
                          TangencyWarning, stacklevel=2)
        if abs(u + v) < 1e-9:
            raise DomainError("corner touch by a diameter is outside the section")
        cg = (u + v) / (1.0 + (u * v.conjugate()).real)
        sweep = math.remainder(cmath.phase(v - cg) - cmath.phase(u - cg),
                               TWO_PI)
        if not _origin_on_left(u, v, z, cg, math.copysign(1.0, sweep)):
            raise DomainError("corner geodesic sees the origin on the right")
    elif len(entry_cluster) > 1 or len(exit_cluster) > 1:
        # transversal pass through a corner on one end
        pass
    return BilliardCrossing(entry, exit_, geometry[entry_pos - 1].label,
                            geometry[exit_pos - 1].label, tangency)


def in_section(group, pt):
    """Whether the oriented geodesic belongs to the billiard section."""
    try:
        crossing_points(group, pt)
        return True
    except DomainError:
        return False


def billiard_apply(group, pt):
    """One billiard step: apply the generator of the exit side."""
    crossing = crossing_points(group, pt)
    g = group.generator(crossing.exit_side)
    return SectionPoint(mobius_apply_angle(g, pt.forward),
                        mobius_apply_angle(g, pt.backward))


def billiard_inverse(group, pt):
    """Inverse billiard step: apply the generator of the entry side."""
    crossing = crossing_points(group, pt)
    g = group.generator(crossing.entry_side)
    return SectionPoint(mobius_apply_angle(g, pt.forward),
                        mobius_apply_angle(g, pt.backward))


def sample_section(group, count, rng, min_gap=1e-4):
    """Random section points whose crossing segment is uninterestingly generic.

    Rejects geodesics missing the polygon, near-tangent ones, and corner
    passes, so statistical suites never sit on measure-zero cases.
    """
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TangencyWarning)
        while len(out) < count:
            x, y = rng.uniform(0.0, TWO_PI, size=2)
            pt = SectionPoint(x, y)
            try:
                crossing = crossing_points(group, pt)
            except DomainError:
                continue
            if crossing.tangency:
                continue
            if abs(crossing.entry - crossing.exit) < min_gap:
                continue
            out.append(pt)
    return out


def _word_search(group, x, y, accept, max_word):
    """Shortest group word rho with (rho x, rho y) accepted, breadth-first.

    Generators are tried in side position order, so ties resolve
    lexicographically and the search is deterministic.
    """
    if accept(x, y):
        return IDENTITY
    labels = list(group.position_labels)
    queue = [(group.generator(lab), lab) for lab in labels]
    for _ in range(1, max_word):
        next_queue = []
        for g, last in queue:
            if accept(mobius_apply_angle(g, x), mobius_apply_angle(g, y)):
                return g
            for lab in labels:
                if lab == -last:
                    continue
                next_queue.append((mobius_compose(group.generator(lab), g), lab))
        queue = next_queue
    for g, _ in queue:
        if accept(mobius_apply_angle(g, x), mobius_apply_angle(g, y)):
            return g
    raise ConjugacySearchError(
        f"no conjugating word of length <= {max_word} found"
    )


def conjugacy_rho(system, pt, max_word=8):
    """Word rho carrying a section point onto the conjugate baker point.

    A geodesic orbit meets the baker domain in a full baker orbit, so
    membership alone picks a representative only up to baker steps and a
    pointwise shortest-word choice need not commute with the dynamics.
    Instead, follow the billiard forward to its first visit of the domain
    and pull the visit back with inverse baker steps; points already in
    the domain get the identity.  The choice conjugates by construction
    away from the domain and on it because consecutive visits share their
    exit coding with the left coding.
    """
    group = system.left.group
    if system.in_sigma(pt.forward, pt.backward):
        return IDENTITY
    rho = IDENTITY
    current = pt
    for depth in range(1, max_word + 1):
        crossing = crossing_points(group, current)
        step = group.generator(crossing.exit_side)
        current = SectionPoint(mobius_apply_angle(step, current.forward),
                               mobius_apply_angle(step, current.backward))
        rho = mobius_compose(step, rho)
        if system.in_sigma(current.forward, current.backward):
            sx, sy = current.forward, current.backward
            for _ in range(depth):
                back = system.right.coding_map(sy)
                rho = mobius_compose(back, rho)
                sx = mobius_apply_angle(back, sx)
                sy = mobius_apply_angle(back, sy)
            return rho
    raise ConjugacySearchError(
        f"billiard orbit did not reach the baker domain in {max_word} steps"
    )


def seed_sigma_points(left, right, count, rng, max_word=8, depth=12):
    """Geometric membership seeds: section geodesics moved onto the domain.

    Uses the intrinsic two-sided coding test for membership, so it does
    not presuppose an incidence matrix; build_baker takes the result as
    its geometric seeding.
    """
    group = left.group
    seeds = []
    for pt in sample_section(group, count, rng):
        rho = _word_search(
            group, pt.forward, pt.backward,
            lambda a, b: sigma_member(left, right, a, b, depth=depth),
            max_word,
        )
        seeds.append((mobius_apply_angle(rho, pt.forward),
                      mobius_apply_angle(rho, pt.backward)))
    return seeds


@dataclass(frozen=True)
class ConjugacyReport:
    samples: int
    max_word_length: int
    max_deviation: float


def verify_conjugacy(system, samples, rng, max_word=8, tol=1e-10):
    """Check the conjugacy equation on random section points.

    The baker image of pi(pt) must match pi(B(pt)) on both coordinates.
    """
    group = system.left.group
    worst = 0.0
    longest = 0
    for pt in sample_section(group, samples, rng):
        rho = conjugacy_rho(system, pt, max_word)
        longest = max(longest, len(rho.word))
        xi, eta = (mobius_apply_angle(rho, pt.forward),
                   mobius_apply_angle(rho, pt.backward))
        image = billiard_apply(group, pt)
        rho2 = conjugacy_rho(system, image, max_word)
        xi2, eta2 = (mobius_apply_angle(rho2, image.forward),
                     mobius_apply_angle(rho2, image.backward))
        bx, be = baker_apply(system, xi, eta)
        worst = max(worst, circle_distance(bx, xi2), circle_distance(be, eta2))
    if worst > tol:
        raise InvariantViolation(
            f"conjugacy deviation {worst:.3e} exceeds {tol:.1e}"
        )
    return ConjugacyReport(samples, longest, worst)


@dataclass(frozen=True)
class CohomologyReport:
    samples: int
    left_deviation: float
    right_deviation: float


def verify_cohomology(system, samples, rng=None, max_word=8, tol=1e-10):
    """Both cohomology identities linking the codings through rho.

    Forward: gamma_L[pi(pt)] rho[pt] = rho[B(pt)] gamma_B[pt].  Backward:
    gamma_R[pi(pt)] rho[pt] = rho[B^-1(pt)] gammabar_B[pt].
    """
    if rng is None:
        rng = np.random.default_rng(0)
    group = system.left.group
    dev_left = 0.0
    dev_right = 0.0
    for pt in sample_section(group, samples, rng):
        crossing = crossing_points(group, pt)
        rho = conjugacy_rho(system, pt)
        xi = mobius_apply_angle(rho, pt.forward)
        eta = mobius_apply_angle(rho, pt.backward)

        image = billiard_apply(group, pt)
        rho_fwd = conjugacy_rho(system, image)
        gamma_b = group.generator(crossing.exit_side)
        lhs = mobius_compose(system.left.coding_map(xi), rho)
        rhs = mobius_compose(rho_fwd, gamma_b)
        dev_left = max(dev_left, mobius_deviation(lhs, rhs))

        back = billiard_inverse(group, pt)
        rho_bwd = conjugacy_rho(system, back)
        gammabar_b = group.generator(crossing.entry_side)
        lhs = mobius_compose(system.right.coding_map(eta), rho)
        rhs = mobius_compose(rho_bwd, gammabar_b)
        dev_right = max(dev_right, mobius_deviation(lhs, rhs))
    report = CohomologyReport(samples, dev_left, dev_right)
    if max(dev_left, dev_right) > tol:
        raise InvariantViolation(
            f"cohomology deviation {max(dev_left, dev_right):.3e} "
            f"exceeds {tol:.1e}",
            report=report,
        )
    return report


def orbit_rows(system, pt, steps, max_word=8):
    """Rows for billiard_orbit.csv: step, x, y, exit side, rho word length."""
    group = system.left.group
    rows = []
    current = pt
    for step in range(steps):
        crossing = crossing_points(group, current)
        rho = conjugacy_rho(system, current, max_word)
        rows.append((step, normalize_angle(current.forward),
                     normalize_angle(current.backward),
                     crossing.exit_side, len(rho.word)))
        current = billiard_apply(group, current)
    return rows
