"""Exact-formula hyperbolic geometry on the Poincare disk.

Conventions used across the package:

* disk points are complex numbers z with |z| < 1, the base point is the
  origin O = 0;
* boundary points are angles in [0, 2pi), identified with unit complex
  numbers xi = exp(i theta);
* isometries are Mobius maps z -> (a z + b) / (conj(b) z + conj(a)) with
  |a|^2 - |b|^2 = 1, stored up to a global sign.

All functions accept numpy arrays of angles or points wherever a scalar
is documented; broadcasting follows numpy rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidMapError

TWO_PI = 2.0 * np.pi

TOL_IDENTITY = 1e-12


def normalize_angle(theta):
    """Reduce an angle (or array of angles) to [0, 2pi)."""
    return np.mod(theta, TWO_PI)


def circle_distance(a, b):
    """Shortest angular distance between angles a and b."""
    d = np.abs(normalize_angle(a) - normalize_angle(b))
    return np.minimum(d, TWO_PI - d)


@dataclass(frozen=True)
class MobiusMap:
    """Disk isometry z -> (a z + b) / (conj(b) z + conj(a)).

    The pair (a, b) satisfies |a|^2 - |b|^2 = 1 and is identified with its
    negation.  ``word`` records the map as a product of signed generator
    indices, leftmost letter applied last.
    """

    a: complex
    b: complex
    word: tuple = field(default=())

    def __post_init__(self):
        det = abs(self.a) ** 2 - abs(self.b) ** 2
        scale = abs(self.a) ** 2 + abs(self.b) ** 2
        # tolerance relative to the coefficient size: the determinant of a
        # long composition carries rounding of order eps * |a|^2
        if not np.isfinite(det) or abs(det - 1.0) > 1e-12 * max(scale, 1.0):
            raise InvalidMapError(
                f"coefficients violate |a|^2-|b|^2=1 by {det - 1.0:.3e}"
            )

    def __call__(self, z):
        return mobius_apply(self, z)


IDENTITY = MobiusMap(1.0 + 0.0j, 0.0j)


def mobius_apply(m, z):
    """Apply a Mobius map to disk points (complex, |z| <= 1)."""
    z = np.asarray(z, dtype=complex)
    w = (m.a * z + m.b) / (np.conj(m.b) * z + np.conj(m.a))
    if w.ndim == 0:
        return complex(w)
    return w


def mobius_apply_angle(m, theta):
    """Apply a Mobius map to boundary angles, returning angles in [0, 2pi)."""
    z = np.exp(1j * np.asarray(theta, dtype=float))
    w = (m.a * z + m.b) / (np.conj(m.b) * z + np.conj(m.a))
    out = normalize_angle(np.angle(w))
    if out.ndim == 0:
        return float(out)
    return out


def mobius_compose(m1, m2):
    """Composition m1 after m2 (apply m2 first)."""
    a = m1.a * m2.a + m1.b * np.conj(m2.b)
    b = m1.a * m2.b + m1.b * np.conj(m2.a)
    # rescale away rounding drift so long words stay on |a|^2 - |b|^2 = 1
    s = np.sqrt(abs(a) ** 2 - abs(b) ** 2)
    return MobiusMap(a / s, b / s, m1.word + m2.word)


def mobius_inverse(m):
    word = tuple(-k for k in reversed(m.word))
    return MobiusMap(np.conj(m.a), -m.b, word)


def mobius_equal(m1, m2, tol=TOL_IDENTITY):
    """Equality up to the global sign ambiguity."""
    d_plus = max(abs(m1.a - m2.a), abs(m1.b - m2.b))
    d_minus = max(abs(m1.a + m2.a), abs(m1.b + m2.b))
    return min(d_plus, d_minus) <= tol


def mobius_deviation(m1, m2):
    """Coefficient distance between two maps, minimized over the sign."""
    d_plus = max(abs(m1.a - m2.a), abs(m1.b - m2.b))
    d_minus = max(abs(m1.a + m2.a), abs(m1.b + m2.b))
    return min(d_plus, d_minus)


def translation(distance, direction):
    """Hyperbolic translation through O by ``distance`` along ``direction``.

    Moves the origin to tanh(distance/2) * exp(i direction); the axis is the
    diameter with that direction.
    """
    return MobiusMap(
        np.cosh(distance / 2.0) + 0.0j,
        np.exp(1j * direction) * np.sinh(distance / 2.0),
    )


def rotation(angle):
    """Rotation about the origin by ``angle``."""
    return MobiusMap(np.exp(0.5j * angle), 0.0j)


def boundary_derivative(m, theta):
    """|gamma'(xi)| for xi = exp(i theta), the angle derivative of the map.

    Equals 1 / |conj(b) xi + conj(a)|^2, which is also d(arg m(xi))/d theta.
    """
    z = np.exp(1j * np.asarray(theta, dtype=float))
    d = 1.0 / np.abs(np.conj(m.b) * z + np.conj(m.a)) ** 2
    if d.ndim == 0:
        return float(d)
    return d


def hyperbolic_distance(z, w):
    """Distance in the Poincare metric between disk points z and w."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    q = np.abs(z - w) / np.abs(1.0 - np.conj(z) * w)
    d = 2.0 * np.arctanh(q)
    if d.ndim == 0:
        return float(d)
    return d


def poisson_kernel(z, theta):
    """Poisson kernel P(z, xi) = (1 - |z|^2) / |z - xi|^2, xi = e^{i theta}."""
    z = np.asarray(z, dtype=complex)
    xi = np.exp(1j * np.asarray(theta, dtype=float))
    p = (1.0 - np.abs(z) ** 2) / np.abs(z - xi) ** 2
    if p.ndim == 0:
        return float(p)
    return p


def busemann(theta, w, z):
    """Busemann cocycle b_xi(w, z) for xi = e^{i theta}.

    Computed in closed form as ln(P(z, xi) / P(w, xi)); the limiting
    definition lim_{t -> xi} d(w, t) - d(z, t) is recovered exactly.
    """
    val = np.log(poisson_kernel(z, theta)) - np.log(poisson_kernel(w, theta))
    if np.ndim(val) == 0:
        return float(val)
    return val


def gromov_sq(theta1, theta2):
    """Squared Gromov boundary distance, (1/4) |xi - eta|^2."""
    xi = np.exp(1j * np.asarray(theta1, dtype=float))
    eta = np.exp(1j * np.asarray(theta2, dtype=float))
    g = 0.25 * np.abs(xi - eta) ** 2
    if g.ndim == 0:
        return float(g)
    return g


@dataclass(frozen=True)
class GeodesicChord:
    """Oriented complete geodesic from ``backward`` to ``forward`` (angles)."""

    backward: float
    forward: float

    def __post_init__(self):
        if circle_distance(self.backward, self.forward) < 1e-15:
            raise InvalidMapError("degenerate chord: equal endpoints")


DIAMETER_THRESHOLD = 1e-9


def geodesic_circle(theta1, theta2):
    """Euclidean center and radius of the geodesic through two boundary angles.

    Returns (center, radius); radius is inf for a diameter (antipodal
    endpoints within DIAMETER_THRESHOLD on |xi + eta|).
    """
    u = np.exp(1j * theta1)
    v = np.exp(1j * theta2)
    if abs(u + v) < DIAMETER_THRESHOLD:
        return 0.0j, np.inf
    # center on the bisector ray t(u+v); orthogonality to the unit circle
    # forces Re(c conj(u)) = 1
    c = (u + v) / (1.0 + (u * np.conj(v)).real)
    rho = np.sqrt(abs(c) ** 2 - 1.0)
    return c, rho


def chord_point_nearest_origin(chord):
    """The point of the complete geodesic closest to the origin."""
    c, rho = geodesic_circle(chord.backward, chord.forward)
    if not np.isfinite(rho):
        return 0.0j
    return c * (1.0 - rho / abs(c))


def distance_to_geodesic(z, theta1, theta2):
    """Unsigned hyperbolic distance from a disk point to a complete geodesic."""
    z = np.asarray(z, dtype=complex)
    c, rho = geodesic_circle(theta1, theta2)
    if np.isfinite(rho):
        # power of the point with respect to the orthogonal circle
        s = np.abs(np.abs(z - c) ** 2 - rho**2) / (rho * (1.0 - np.abs(z) ** 2))
    else:
        u = np.exp(1j * theta1)
        s = 2.0 * np.abs(np.imag(z * np.conj(u))) / (1.0 - np.abs(z) ** 2)
    val = np.arcsinh(s)
    if val.ndim == 0:
        return float(val)
    return val
