"""Involution kernel coupling the two boundary maps.

The coupled system carries a kernel k(xi, eta) = exp W(xi, eta) supported
on the rectangle union, where W(xi, eta) = b_xi(O, z) + b_eta(O, z) is the
sum of Busemann cocycles read at any point z of the geodesic with ideal
endpoints xi and eta.  With the observer at the origin of the disk the sum
is independent of the choice of z and evaluates in closed form to
ln(4 / |xi - eta|^2).

Two facts make the kernel useful.  First, the involution identity

    A_L(xi) - A_R(eta') = W(xi', eta') - W(xi, eta)

holds along the natural extension (xi', eta') of (xi, eta), where A_L and
A_R are the negative log derivatives of the two one-sided maps; the weight
lost on the expanding side is exactly the weight gained by the kernel.
Second, the termwise preimage bijection turns that identity into an
operator duality: the transfer operator of the right map acting on the
eta slot of k^s agrees pointwise with the transfer operator of the left
map acting on the xi slot.  Together they let a dual eigenvector of the
right operator be pushed through the kernel into a genuine eigenfunction
of the left one, which is the mechanism checked by
``transfer_dual_to_eigenfunction``.
"""

import math
import cmath
from dataclasses import dataclass

import numpy as np

from .boundary_dynamics import baker_apply, sample_sigma
from .errors import (
    BakerConstructionError,
    DegenerateTransferError,
    InvariantViolation,
)
from .hypgeo import (
    TWO_PI,
    GeodesicChord,
    busemann,
    chord_point_nearest_origin,
    gromov_sq,
)
from .transfer import apply_transfer, chebyshev_lobatto_nodes, transfer_operator


@dataclass(frozen=True)
class InvolutionKernel:
    """Kernel data for a baker system, normalized at the origin.

    ``gap`` is the smallest Euclidean distance between the closures of a
    left arc and a right arc paired by the incidence matrix; positivity
    of the gap bounds the kernel by 4 / gap^2 on the rectangle union.
    """

    baker: object
    gap: float


def _arc_pair_gap(a0, la, b0, lb):
    """Euclidean distance between two closed arcs of the unit circle."""
    if (b0 - a0) % TWO_PI < la or (a0 - b0) % TWO_PI < lb:
        return 0.0
    ends_a = (a0, a0 + la)
    ends_b = (b0, b0 + lb)
    best = 4.0
    for u in ends_a:
        for v in ends_b:
            d = (u - v) % TWO_PI
            d = min(d, TWO_PI - d)
            best = min(best, 2.0 * math.sin(0.5 * d))
    return best


def involution_kernel(baker):
    """Attach the kernel to a baker system, verifying the arc gap."""
    left = baker.left.partition
    right = baker.right.partition
    ll = left.lengths()
    rl = right.lengths()
    gap = 4.0
    for k in range(left.n):
        for l in range(right.n):
            if not baker.J[k, l]:
                continue
            gap = min(gap, _arc_pair_gap(left.cuts[k], ll[k],
                                         right.cuts[l], rl[l]))
    if gap <= 0.0:
        raise BakerConstructionError(
            "paired arcs intersect; the kernel is unbounded on the "
            "rectangle union"
        )
    return InvolutionKernel(baker, gap)


def kernel(ker, xi, eta):
    """J(xi, eta) * 4 / |xi - eta|^2, zero off the rectangle union."""
    if not ker.baker.in_sigma(xi, eta):
        return 0.0
    return 1.0 / gromov_sq(xi, eta)


def kernel_pow_s(ker, xi, eta, s):
    """k(xi, eta)^s through the principal real logarithm."""
    if not ker.baker.in_sigma(xi, eta):
        return 0.0j
    return cmath.exp(-s * math.log(gromov_sq(xi, eta)))


def W_value(ker, xi, eta):
    """Busemann sum W(xi, eta) = b_xi(O, z) + b_eta(O, z).

    Reads the cocycles at the point of the geodesic nearest the origin;
    any other point of the same geodesic gives the same value.  Defined
    for every pair of distinct boundary angles, not only on the
    rectangle union.
    """
    z = chord_point_nearest_origin(GeodesicChord(xi, eta))
    return busemann(xi, 0.0, z) + busemann(eta, 0.0, z)


@dataclass(frozen=True)
class InvolutionReport:
    samples: int
    worst: float


def verify_involution_identity(ker, samples, rng=None, tol=1e-10):
    """Check A_L(xi) - A_R(eta') = W(xi', eta') - W(xi, eta) on samples."""
    if rng is None:
        rng = np.random.default_rng(0)
    system = ker.baker
    worst = 0.0
    for xi, eta in sample_sigma(system, samples, rng):
        xi_p, eta_p = baker_apply(system, xi, eta)
        a_left = -math.log(system.left.derivative(xi))
        a_right = -math.log(system.right.derivative(eta_p))
        resid = abs(a_left - a_right
                    - W_value(ker, xi_p, eta_p) + W_value(ker, xi, eta))
        worst = max(worst, resid)
    report = InvolutionReport(samples, worst)
    if worst > tol:
        raise InvariantViolation(
            f"involution identity residual {worst:.3e} exceeds {tol:.1e}",
            report=report,
        )
    return report


@dataclass(frozen=True)
class DualityReport:
    samples: int
    worst: float


def verify_duality(ker, s, pairs=1000, rng=None, tol=1e-10):
    """Compare the two one-slot transfer actions of k^s pointwise.

    For random (xi', eta) the sum over T_R preimages of eta weighted into
    the eta slot must equal the sum over T_L preimages of xi' weighted
    into the xi slot; the preimage bijection matches the terms one by
    one, so the residual is pure rounding.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    op_left = transfer_operator(ker.baker.left, s)
    op_right = transfer_operator(ker.baker.right, s)
    n_left = ker.baker.left.partition.n
    n_right = ker.baker.right.partition.n
    worst = 0.0
    for _ in range(pairs):
        xi_p, eta = rng.uniform(0.0, TWO_PI, size=2)
        in_eta = [(lambda y, x=xi_p: kernel_pow_s(ker, x, y, s))] * n_right
        in_xi = [(lambda x, y=eta: kernel_pow_s(ker, x, y, s))] * n_left
        lhs = apply_transfer(op_right, in_eta, eta)
        rhs = apply_transfer(op_left, in_xi, xi_p)
        worst = max(worst, abs(lhs - rhs))
    report = DualityReport(pairs, worst)
    if worst > tol:
        raise InvariantViolation(
            f"kernel duality residual {worst:.3e} exceeds {tol:.1e}",
            report=report,
        )
    return report


@dataclass(frozen=True)
class KernelTransferReport:
    """Eigenfunction candidate from a dual eigenvector.

    ``psi`` holds the synthesized values on ``grid`` and ``residuals``
    the pointwise eigen equation errors normalized by the sup norm, so
    ``residual`` equals their maximum.
    """

    s: complex
    grid: np.ndarray
    psi: np.ndarray
    residuals: np.ndarray
    residual: float


def transfer_dual_to_eigenfunction(ker, nu, s, grid):
    """Push a dual eigenvector of the right operator through the kernel.

    ``nu`` is a left eigenvector of the right map's collocation matrix,
    shaped (arcs, nodes per arc); it acts as the point mass sum over its
    own nodes, so psi(xi) = sum_j k^s(xi, eta_j) nu_j.  The report
    carries the eigen equation residual of psi under the left operator,
    measured pointwise on ``grid``.
    """
    nu = np.asarray(nu, dtype=complex)
    count = nu.shape[1]
    part = ker.baker.right.partition
    lengths = part.lengths()
    nodes = np.concatenate(
        [chebyshev_lobatto_nodes(part.cuts[l], lengths[l], count)
         for l in range(part.n)]
    )
    points = np.exp(1j * nodes)
    arc_of_node = np.repeat(np.arange(part.n), count)
    flat = nu.ravel()
    incidence = ker.baker.J != 0
    left_part = ker.baker.left.partition

    def psi(xi):
        k = left_part.locate(xi)
        mask = incidence[k, arc_of_node]
        if not mask.any():
            return 0.0j
        d2 = 0.25 * np.abs(np.exp(1j * xi) - points[mask]) ** 2
        return complex((np.exp(-s * np.log(d2)) * flat[mask]).sum())

    grid = np.asarray(grid, dtype=float)
    values = np.array([psi(x) for x in grid], dtype=complex)
    sup = float(np.abs(values).max()) if values.size else 0.0
    if sup <= 1e-10 * float(np.abs(flat).max()):
        raise DegenerateTransferError(
            "kernel transfer produced a numerically vanishing function"
        )
    op = transfer_operator(ker.baker.left, s)
    funcs = [psi] * left_part.n
    errs = np.array(
        [abs(apply_transfer(op, funcs, x) - v) for x, v in zip(grid, values)]
    )
    residuals = errs / sup
    return KernelTransferReport(s, grid, values, residuals,
                                float(residuals.max()))


def psi_rows(report):
    """Rows (xi, Re psi, Im psi, residual) for the eigenfunction table."""
    return [
        (float(x), float(v.real), float(v.imag), float(r))
        for x, v, r in zip(report.grid, report.psi, report.residuals)
    ]
