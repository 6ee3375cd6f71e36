"""Fundamental polygons and side pairings for co-compact Fuchsian groups.

The built-in instance is the genus-2 regular octagon with opposite sides
identified by hyperbolic translations through the center.  Side positions
are numbered 1..2r counterclockwise, side j spanning vertex j-1 to vertex
j; signed labels identify position j <= r with +j and position j+r with
-j, so that the pairing satisfies a_{-k} = a_k^{-1}.

User supplied generator lists are accepted through
``dirichlet_polygon_from_generators``, which computes the Dirichlet
polygon by half-plane clipping in the Klein model; such groups are then
verified (pairing, relator, even-corner coverage), never adjusted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, EvenCornerError, InvariantViolation
from .hypgeo import (
    IDENTITY,
    GeodesicChord,
    MobiusMap,
    busemann,
    chord_point_nearest_origin,
    circle_distance,
    distance_to_geodesic,
    hyperbolic_distance,
    mobius_apply,
    mobius_apply_angle,
    mobius_compose,
    mobius_deviation,
    mobius_inverse,
    normalize_angle,
    translation,
)

TOL_GROUP = 1e-10
TOL_GEOMETRY = 1e-8


@dataclass(frozen=True)
class FundamentalPolygon:
    """Convex geodesic polygon with vertices in counterclockwise order."""

    vertices: tuple
    center: complex = 0.0j

    @property
    def n_sides(self):
        return len(self.vertices)

    def side_vertices(self, position):
        """Start and end vertex of side ``position`` (1-based)."""
        n = self.n_sides
        return self.vertices[(position - 1) % n], self.vertices[position % n]


@dataclass(frozen=True)
class SidePairing:
    """Signed label k in {+-1..+-r} to the pairing generator a_k."""

    maps: dict

    def __getitem__(self, k):
        return self.maps[k]

    @property
    def rank(self):
        return len(self.maps) // 2


@dataclass(frozen=True)
class FuchsianGroup:
    polygon: FundamentalPolygon
    pairing: SidePairing
    genus: int
    # signed generator label of each side, indexed by position - 1
    position_labels: tuple
    # orbit points a_k^{-1}(O) indexed by position - 1; the polygon is the
    # intersection of the corresponding Dirichlet half-planes
    orbit_points: tuple

    @property
    def n_sides(self):
        return self.polygon.n_sides

    @property
    def rank(self):
        return self.pairing.rank

    def side_label(self, position):
        """Signed generator label of a 1-based side position."""
        return self.position_labels[(position - 1) % self.n_sides]

    def side_position(self, label):
        return self.position_labels.index(label) + 1

    def generator(self, label):
        return self.pairing[label]

    def generators(self):
        """All 2r pairing maps in side position order."""
        return [self.pairing[k] for k in self.position_labels]


def build_regular_4g_gon(genus):
    """Regular 4g-gon group with opposite-side identification.

    Only genus 2 is built in.  The circumradius comes from the hyperbolic
    right triangle with acute angles pi/8 (half center angle) and pi/8
    (half interior angle): cosh(circumradius) = cot(pi/8)^2 and
    cosh(apothem) = cot(pi/8).
    """
    if genus != 2:
        raise ConfigurationError(f"unsupported genus {genus}: only genus 2 is built in")
    r = 4
    n = 2 * r
    cot = 1.0 / np.tan(np.pi / 8.0)
    circumradius = np.arccosh(cot * cot)
    apothem = np.arccosh(cot)
    vr = np.tanh(circumradius / 2.0)
    vertices = tuple(vr * np.exp(1j * np.pi * m / 4.0) for m in range(n))

    maps = {}
    for k in range(1, r + 1):
        phi = np.pi * (2 * k - 1) / 8.0
        fwd = translation(2.0 * apothem, phi + np.pi)
        maps[k] = MobiusMap(fwd.a, fwd.b, (k,))
        inv = mobius_inverse(fwd)
        maps[-k] = MobiusMap(inv.a, inv.b, (-k,))

    labels = tuple(range(1, r + 1)) + tuple(range(-1, -r - 1, -1))
    orbit = tuple(mobius_apply(mobius_inverse(maps[k]), 0.0j) for k in labels)
    return FuchsianGroup(FundamentalPolygon(vertices), SidePairing(maps), genus,
                         labels, orbit)


def side_geodesic_circle(group, position):
    """Euclidean center and radius of the complete geodesic through a side."""
    p, q = group.polygon.side_vertices(position)
    # orthogonal circle through two interior points: |c|^2 = 1 + rho^2 and
    # equal power at p and q give two linear conditions on c
    a11, a12 = 2.0 * p.real, 2.0 * p.imag
    a21, a22 = 2.0 * (q.real - p.real), 2.0 * (q.imag - p.imag)
    b1 = abs(p) ** 2 + 1.0
    b2 = abs(q) ** 2 - abs(p) ** 2
    det = a11 * a22 - a12 * a21
    cx = (b1 * a22 - a12 * b2) / det
    cy = (a11 * b2 - b1 * a21) / det
    c = complex(cx, cy)
    return c, np.sqrt(abs(c) ** 2 - 1.0)


def side_geodesic_endpoints(group, label_or_position, signed=True):
    """Boundary endpoints (s^L, s^R) of the side geodesic.

    Ordered so that travelling along the geodesic from s^L to s^R keeps the
    origin on the left.  ``signed`` selects whether the first argument is a
    signed label or a 1-based position.
    """
    position = group.side_position(label_or_position) if signed else label_or_position
    c, _ = side_geodesic_circle(group, position)
    half = np.arccos(1.0 / abs(c))
    mid = np.angle(c)
    return normalize_angle(mid - half), normalize_angle(mid + half)


@dataclass
class PairingReport:
    max_vertex_error: float
    max_inverse_error: float
    max_endpoint_error: float

    def worst(self):
        return max(self.max_vertex_error, self.max_inverse_error,
                   self.max_endpoint_error)


def verify_pairing(group, tol=TOL_GROUP):
    """Check each a_k maps side k onto side -k reversed, and a_k a_{-k} = I.

    The pairing reverses each side: the start vertex of side k goes to the
    end vertex of side -k, and the boundary endpoint s^L_k goes to s^R_{-k}.
    Raises InvariantViolation beyond ``tol``.
    """
    e_vert = 0.0
    e_inv = 0.0
    e_bnd = 0.0
    for k in group.position_labels:
        a = group.generator(k)
        p, q = group.polygon.side_vertices(group.side_position(k))
        p2, q2 = group.polygon.side_vertices(group.side_position(-k))
        e_vert = max(e_vert, abs(mobius_apply(a, p) - q2), abs(mobius_apply(a, q) - p2))
        comp = mobius_compose(a, group.generator(-k))
        e_inv = max(e_inv, mobius_deviation(comp, IDENTITY))
        sl, sr = side_geodesic_endpoints(group, k)
        sl2, sr2 = side_geodesic_endpoints(group, -k)
        e_bnd = max(
            e_bnd,
            circle_distance(mobius_apply_angle(a, sl), sr2),
            circle_distance(mobius_apply_angle(a, sr), sl2),
        )
    report = PairingReport(e_vert, e_inv, e_bnd)
    if report.worst() > tol:
        raise InvariantViolation(
            f"side pairing violates its defining identities: {report}", report
        )
    return report


def vertex_interior_angle(group, m):
    """Interior angle of the polygon at vertex index m."""
    n = group.n_sides
    v = group.polygon.vertices[m % n]
    j_in = (m - 1) % n + 1  # side ending at v
    j_out = m % n + 1  # side starting at v
    dirs = []
    for j, other in ((j_in, group.polygon.side_vertices(j_in)[0]),
                     (j_out, group.polygon.side_vertices(j_out)[1])):
        c, rho = side_geodesic_circle(group, j)
        t = 1j * (v - c) / rho
        # orient the tangent toward the other endpoint of the side
        if (t * np.conj(other - v)).real < 0:
            t = -t
        dirs.append(t)
    cosang = (dirs[0] * np.conj(dirs[1])).real
    return float(np.arccos(np.clip(cosang, -1.0, 1.0)))


def _corner_walk(group, start_vertex):
    """Follow the corner cycle through ``start_vertex``.

    Each step crosses the side starting at the current vertex: apply its
    pairing, land on the image vertex, continue with the other side
    incident there.  Returns the applied word (first letter first), the
    composed product, and the set of vertex indices visited.
    """
    n = group.n_sides
    verts = np.array(group.polygon.vertices)
    state = (start_vertex, start_vertex + 1)
    word = []
    product = IDENTITY
    visited = set()
    for _ in range(4 * n * n):
        m, j = state
        visited.add(m)
        label = group.side_label(j)
        a = group.generator(label)
        image = mobius_apply(a, verts[m])
        m2 = int(np.argmin(np.abs(verts - image)))
        if abs(verts[m2] - image) > 1e-8:
            raise InvariantViolation(
                f"pairing image of vertex {m} is not a vertex "
                f"(error {abs(verts[m2] - image):.2e})"
            )
        j_img = group.side_position(-label)
        incident = ((m2 - 1) % n + 1, m2 % n + 1)
        j_next = incident[0] if incident[1] == j_img else incident[1]
        word.append(label)
        product = mobius_compose(a, product)
        state = (m2, j_next)
        if state == (start_vertex, start_vertex + 1):
            return tuple(word), product, visited
    raise InvariantViolation("corner walk failed to close")


def vertex_cycle_relator(group):
    """Word and product of the corner cycle at vertex 0.

    For an even-corner polygon the product is the defining relator of the
    surface group and equals the identity up to sign.  Returns the word
    (first applied letter first), the product, and the corner count.
    """
    word, product, _ = _corner_walk(group, 0)
    return word, product, len(word)


def verify_relator(group, tol=TOL_GROUP):
    word, product, corners = vertex_cycle_relator(group)
    err = mobius_deviation(product, IDENTITY)
    if err > tol:
        raise InvariantViolation(
            f"vertex cycle relator deviates from identity by {err:.3e}"
        )
    return word, err, corners


def vertex_cycles(group):
    """Partition of vertex indices into identification cycles."""
    n = group.n_sides
    remaining = set(range(n))
    cycles = []
    while remaining:
        start = min(remaining)
        _, _, visited = _corner_walk(group, start)
        cycles.append(sorted(visited))
        remaining -= visited
    return cycles


@dataclass
class EvenCornerReport:
    per_side_misalignment: list
    per_side_coverage: list
    required_coverage: float

    def worst_misalignment(self):
        return max(self.per_side_misalignment) if self.per_side_misalignment else 0.0

    def worst_coverage(self):
        return min(self.per_side_coverage) if self.per_side_coverage else np.inf


def _canonical_key(m, grid=1e-7):
    a, b = m.a, m.b
    if (a.real, a.imag, b.real, b.imag) < (-a.real, -a.imag, -b.real, -b.imag):
        a, b = -a, -b
    return (round(a.real / grid), round(a.imag / grid),
            round(b.real / grid), round(b.imag / grid))


def translates_near_geodesic(group, chord, arc_bound, max_len=12, max_nodes=20000):
    """Breadth-first group elements whose polygon can touch a geodesic stretch.

    Keeps words gamma with the orbit point gamma(O) within circumradius
    (plus slack) of the complete geodesic and within ``arc_bound`` of the
    chord's closest point to the origin, measured along the geodesic with
    the Busemann coordinate.
    """
    radius = max(hyperbolic_distance(v, 0.0j) for v in group.polygon.vertices)
    z0 = chord_point_nearest_origin(chord)
    gens = group.generators()
    keep = [IDENTITY]
    frontier = [IDENTITY]
    seen = {_canonical_key(IDENTITY)}
    for _ in range(max_len):
        new_frontier = []
        for g in frontier:
            for a in gens:
                # right multiplication: g(a(D)) is adjacent to the tile g(D),
                # so pruning explores the connected patch along the geodesic
                cand = mobius_compose(g, a)
                key = _canonical_key(cand)
                if key in seen:
                    continue
                seen.add(key)
                if len(seen) > max_nodes:
                    raise InvariantViolation("translate search exceeded node budget")
                p = mobius_apply(cand, 0.0j)
                if distance_to_geodesic(p, chord.backward, chord.forward) > radius + 0.2:
                    continue
                if abs(busemann(chord.forward, z0, p)) > arc_bound + radius + 0.2:
                    continue
                keep.append(cand)
                new_frontier.append(cand)
        if not new_frontier:
            break
        frontier = new_frontier
    return keep


def verify_even_corner(group, depth, tol=TOL_GEOMETRY):
    """Check side geodesic extensions are unions of translate sides.

    For every side the complete geodesic must continue, beyond both side
    endpoints and for ``depth`` further side lengths, through sides of
    group translates of the polygon, all collinear within ``tol``.  This
    fails for a polygon with an odd corner cycle, where the extension
    crosses translates transversally instead.
    """
    n = group.n_sides
    if depth == 0:
        return EvenCornerReport([0.0] * n, [np.inf] * n, 0.0)
    side_lengths = [
        hyperbolic_distance(*group.polygon.side_vertices(j)) for j in range(1, n + 1)
    ]
    need = depth * min(side_lengths)
    endpoint_cache = [side_geodesic_endpoints(group, j, signed=False)
                      for j in range(1, n + 1)]
    mis = []
    cov = []
    for j in range(1, n + 1):
        sl, sr = endpoint_cache[j - 1]
        chord = GeodesicChord(sl, sr)
        z0 = chord_point_nearest_origin(chord)
        p, q = group.polygon.side_vertices(j)
        own = sorted((busemann(chord.forward, z0, p), busemann(chord.forward, z0, q)))
        arc_bound = own[1] + need + 0.5
        worst = 0.0
        intervals = []
        for g in translates_near_geodesic(group, chord, arc_bound):
            for m in range(1, n + 1):
                u = mobius_apply_angle(g, endpoint_cache[m - 1][0])
                v = mobius_apply_angle(g, endpoint_cache[m - 1][1])
                err = max(
                    min(circle_distance(u, sl), circle_distance(u, sr)),
                    min(circle_distance(v, sl), circle_distance(v, sr)),
                )
                if err > tol:
                    continue
                worst = max(worst, err)
                a, b = group.polygon.side_vertices(m)
                ta = busemann(chord.forward, z0, mobius_apply(g, a))
                tb = busemann(chord.forward, z0, mobius_apply(g, b))
                intervals.append(tuple(sorted((ta, tb))))
        # grow the contiguous covered stretch around the side itself
        lo, hi = own
        changed = True
        while changed:
            changed = False
            for a, b in intervals:
                if a <= hi + tol and b >= lo - tol and (b > hi or a < lo):
                    lo, hi = min(lo, a), max(hi, b)
                    changed = True
        mis.append(worst)
        cov.append(min(own[0] - lo, hi - own[1]))
    report = EvenCornerReport(mis, cov, need)
    if report.worst_coverage() < need - 1e-6 or report.worst_misalignment() > tol:
        raise EvenCornerError(
            f"geodesic extensions not covered to depth {depth}: worst coverage "
            f"{report.worst_coverage():.6f} of {need:.6f} required, worst "
            f"misalignment {report.worst_misalignment():.2e}",
            report,
        )
    return report


def dirichlet_inside(group, z, margin=0.0):
    """Dirichlet membership: closer to O than to every defining orbit point."""
    d0 = hyperbolic_distance(z, 0.0j)
    for p in group.orbit_points:
        if d0 >= hyperbolic_distance(z, p) - margin:
            return False
    return True


def sample_interior(group, count, rng):
    """Rejection-sample points of the open polygon, uniform in the disk."""
    radius = max(abs(v) for v in group.polygon.vertices)
    out = []
    while len(out) < count:
        z = complex(*rng.uniform(-radius, radius, size=2))
        if abs(z) < radius and dirichlet_inside(group, z, margin=1e-12):
            out.append(z)
    return np.array(out)


def verify_hyperbolic_generators(group, tol=TOL_GROUP):
    """All pairing generators must be hyperbolic: |trace| > 2."""
    worst = np.inf
    for g in group.generators():
        worst = min(worst, 2.0 * abs(g.a.real) - 2.0)
    if worst <= tol:
        raise InvariantViolation(f"non-hyperbolic generator, |trace|-2 = {worst:.3e}")
    return worst


def verify_dirichlet_samples(group, count, rng):
    """d(z, O) < d(z, a(O)) for interior samples and all defining translates."""
    pts = sample_interior(group, count, rng)
    worst = -np.inf
    for z in pts:
        d0 = hyperbolic_distance(z, 0.0j)
        for p in group.orbit_points:
            worst = max(worst, d0 - hyperbolic_distance(z, p))
    if worst >= 0.0:
        raise InvariantViolation(f"Dirichlet inequality fails by {worst:.3e}")
    return worst


def verify_tiling_neighborhood(group, count, rng, push=1e-5, margin=1e-9):
    """Points just outside each side lie in exactly one adjacent translate.

    The candidate translates are the polygon's side neighbors a_k^{-1}(D);
    membership of z in a_k^{-1}(D) is tested as a_k(z) in D, and the only
    hit must be across the sampled side.
    """
    n = group.n_sides
    for _ in range(count):
        j = int(rng.integers(1, n + 1))
        c, rho = side_geodesic_circle(group, j)
        p, q = group.polygon.side_vertices(j)
        a1, a2 = np.angle(p - c), np.angle(q - c)
        if a2 - a1 > np.pi:
            a2 -= 2 * np.pi
        if a1 - a2 > np.pi:
            a2 += 2 * np.pi
        tau = rng.uniform(0.1, 0.9)
        z = c + rho * np.exp(1j * (a1 + tau * (a2 - a1)))
        z_out = z + push * (c - z) / abs(c - z)
        if dirichlet_inside(group, z_out, margin=margin):
            raise InvariantViolation(f"pushed point at side {j} still inside")
        hits = [
            pos for pos in range(1, n + 1)
            if dirichlet_inside(group,
                                mobius_apply(group.generator(group.side_label(pos)),
                                             z_out),
                                margin=margin)
        ]
        if hits != [j]:
            raise InvariantViolation(
                f"outside point at side {j} lies in translates at positions {hits}"
            )
    return True


def klein_from_poincare(z):
    return 2.0 * z / (1.0 + abs(z) ** 2)


def poincare_from_klein(x):
    r = abs(x)
    if r < 1e-15:
        return 0.0j
    return x / (1.0 + np.sqrt(max(0.0, 1.0 - r * r)))


def _clip_halfplane(points, normal, offset):
    """Sutherland-Hodgman clip of a convex polygon to x . normal <= offset."""
    out = []
    m = len(points)
    for i in range(m):
        cur, nxt = points[i], points[(i + 1) % m]
        dcur = (cur * np.conj(normal)).real - offset
        dnxt = (nxt * np.conj(normal)).real - offset
        if dcur <= 0.0:
            out.append(cur)
        if (dcur <= 0.0) != (dnxt <= 0.0):
            out.append(cur + (dcur / (dcur - dnxt)) * (nxt - cur))
    return out


def dirichlet_polygon_from_generators(maps, depth=2):
    """Dirichlet polygon of a user supplied group, by Klein-model clipping.

    ``maps`` lists generators (inverses are added automatically).  Orbit
    points of reduced words up to length ``depth`` define perpendicular
    bisector half-planes, which are straight chords in the Klein model; the
    polygon is their intersection.  Side pairings are read off from the
    surviving bisectors: the side on the bisector of [O, w(O)] is paired by
    w^{-1}.  The result is meant to be verified afterwards, not trusted.
    """
    gens = []
    for m in maps:
        gens.append(m)
        gens.append(mobius_inverse(m))
    words = {_canonical_key(IDENTITY): IDENTITY}
    frontier = [IDENTITY]
    for _ in range(depth):
        nxt = []
        for w in frontier:
            for g in gens:
                cand = mobius_compose(g, w)
                key = _canonical_key(cand)
                if key not in words:
                    words[key] = cand
                    nxt.append(cand)
        frontier = nxt
    planes = []
    for w in words.values():
        p = mobius_apply(w, 0.0j)
        if abs(p) < 1e-12:
            continue
        d = hyperbolic_distance(0.0j, p)
        planes.append((p / abs(p), np.tanh(d / 2.0), w))
    poly = [complex(-2, -2), complex(2, -2), complex(2, 2), complex(-2, 2)]
    for normal, offset, _ in planes:
        poly = _clip_halfplane(poly, normal, offset)
        if len(poly) < 3:
            raise ConfigurationError("Dirichlet clipping emptied the polygon")
    if max(abs(x) for x in poly) >= 1.0 - 1e-9:
        raise ConfigurationError(
            "Dirichlet polygon reaches the boundary circle: group is not "
            "co-compact at this search depth"
        )
    # associate every edge with the bisector it lies on
    edge_words = []
    m = len(poly)
    for i in range(m):
        mid = 0.5 * (poly[i] + poly[(i + 1) % m])
        best, best_err = None, np.inf
        for normal, offset, w in planes:
            err = abs((mid * np.conj(normal)).real - offset)
            if err < best_err:
                best, best_err = w, err
        if best_err > 1e-9:
            raise ConfigurationError("polygon edge lies on no bisector")
        edge_words.append(best)
    # drop zero-length edge artifacts and repeated consecutive bisectors
    keep = [i for i in range(m)
            if abs(poly[i] - poly[(i + 1) % m]) > 1e-12
            and _canonical_key(edge_words[i]) != _canonical_key(edge_words[i - 1])]
    poly = [poly[i] for i in keep]
    edge_words = [edge_words[i] for i in keep]
    m = len(poly)
    if m % 2 != 0:
        raise ConfigurationError(f"odd side count {m} in Dirichlet polygon")

    # vertices already run counterclockwise (the seed square does); start at
    # the vertex closest to angle 0 to fix a convention
    start = int(np.argmin(np.abs(np.angle(np.array(poly)))))
    poly = poly[start:] + poly[:start]
    edge_words = edge_words[start:] + edge_words[:start]

    # pair sides: position i + 1 carries map edge_words[i]^{-1}; its partner
    # is the position carrying the inverse map
    side_maps = [mobius_inverse(w) for w in edge_words]
    labels = [0] * m
    next_label = 1
    for i in range(m):
        if labels[i] != 0:
            continue
        partner = None
        for i2 in range(m):
            if i2 != i and mobius_deviation(side_maps[i2],
                                            mobius_inverse(side_maps[i])) < 1e-9:
                partner = i2
                break
        if partner is None:
            raise ConfigurationError(f"side at position {i + 1} has no partner")
        labels[i] = next_label
        labels[partner] = -next_label
        next_label += 1
    pairing = SidePairing({
        labels[i]: MobiusMap(side_maps[i].a, side_maps[i].b, (labels[i],))
        for i in range(m)
    })
    vertices = tuple(poincare_from_klein(x) for x in poly)
    orbit = tuple(mobius_apply(w, 0.0j) for w in edge_words)
    group = FuchsianGroup(FundamentalPolygon(vertices), pairing, 0,
                          tuple(labels), orbit)
    # genus from the quotient cell structure: 2 - 2g = V - E + F with
    # E = m/2, F = 1 and V the number of vertex identification cycles
    n_cycles = len(vertex_cycles(group))
    euler = n_cycles - m // 2 + 1
    genus = (2 - euler) // 2 if euler % 2 == 0 else 0
    return FuchsianGroup(group.polygon, pairing, genus, tuple(labels), orbit)


def domain_rows(group):
    """Rows for domain.csv: position, start vertex polar data, side endpoints."""
    rows = []
    for j in range(1, group.n_sides + 1):
        v = group.polygon.vertices[j - 1]
        sl, sr = side_geodesic_endpoints(group, j, signed=False)
        rows.append((j, normalize_angle(np.angle(v)), abs(v), sl, sr))
    return rows
