"""Gaussian-weight cubature on R^N against the heat kernel.

All norms in this project are taken against G(x,t) = t^{-N/2} exp(-|x|^2/4t).
The radial direction uses generalized Gauss-Laguerre rules in the variable
s = r^2/4, exploiting

    int_0^inf r^{N-1} e^{-r^2/4} f(r) dr
        = 2^{N-1} int_0^inf s^{N/2-1} e^{-s} f(2 sqrt(s)) ds,

so a rule with exponent a_GL = N/2 - 1 - beta/2 is *exact* for integrands
r^{-beta} * (polynomial in r^2/4), which is what basis-pair inner products
look like.  The angular factor is a Gauss-Legendre x trapezoid product on
S^2 and a Gauss-Jacobi chain x trapezoid on S^{N-1} for N > 3.  Time enters
only through the node scaling x = sqrt(t) * 2 sqrt(s) * theta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln, roots_jacobi, roots_legendre

from .errors import QuadratureError, SingularNodeError

# Doubling-stability gate: a reported integral is trusted only once
# |I(n_r) - I(2 n_r)| < DOUBLING_RTOL * |I(2 n_r)|.
DOUBLING_RTOL = 1e-10
DEFAULT_NR = 64
NR_CAP = 1024


def sphere_area(N: int) -> float:
    """Surface measure of S^{N-1}: 2 pi^{N/2} / Gamma(N/2)."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


@dataclass(frozen=True)
class RadialRule:
    """Generalized Gauss-Laguerre rule in the substituted variable s = r^2/4.

    Sum(weights * g(nodes)) approximates int_0^inf s^gl_parameter e^-s g(s) ds,
    exactly for polynomial g of degree <= 2*count - 1.  ``prefactor`` carries
    the 2^{N-1} Jacobian factor when the rule is bound to a dimension.
    """

    gl_parameter: float
    nodes: np.ndarray
    weights: np.ndarray
    prefactor: float = 1.0

    @property
    def count(self) -> int:
        return len(self.nodes)

    @property
    def nodes_r(self) -> np.ndarray:
        """Nodes mapped back to the radial variable r = 2 sqrt(s)."""
        return 2.0 * np.sqrt(self.nodes)

    def to_jsonable(self) -> dict:
        return {
            "gl_parameter": self.gl_parameter,
            "nodes": self.nodes.tolist(),
            "weights": self.weights.tolist(),
            "prefactor": self.prefactor,
        }


@lru_cache(maxsize=512)
def _laguerre_cached(a_gl: float, n_r: int):
    # Golub-Welsch: symmetric Jacobi matrix of the generalized Laguerre
    # recurrence has diagonal 2i + a + 1 and off-diagonal sqrt(i(i+a)).
    diag = 2.0 * np.arange(n_r) + a_gl + 1.0
    i = np.arange(1, n_r)
    off = np.sqrt(i * (i + a_gl))
    try:
        vals, vecs = eigh_tridiagonal(diag, off, lapack_driver="stev")
    except Exception as exc:  # pragma: no cover - LAPACK failure path
        raise QuadratureError(f"tridiagonal eigensolve failed: {exc}") from exc
    mu0 = math.exp(gammaln(a_gl + 1.0))
    weights = mu0 * vecs[0, :] ** 2
    order = np.argsort(vals)
    nodes = vals[order]
    weights = weights[order]
    # far-tail weights below the double floor contribute nothing; drop them
    keep = weights > 0.0
    nodes, weights = nodes[keep], weights[keep]
    if len(nodes) == 0:
        raise QuadratureError("all Gauss-Laguerre weights underflowed")
    if np.any(np.diff(nodes) <= 0.0):
        raise QuadratureError("Gauss-Laguerre nodes not strictly increasing")
    if abs(weights.sum() - mu0) > 1e-12 * mu0:
        raise QuadratureError(
            f"Gauss-Laguerre weight sum off: {weights.sum()} vs Gamma={mu0}"
        )
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def laguerre_rule(a_gl: float, n_r: int, prefactor: float = 1.0) -> RadialRule:
    """Generalized Gauss-Laguerre rule for weight s^a_gl e^{-s} on (0, inf).

    Parameters
    ----------
    a_gl : float
        Weight exponent, must be > -1.
    n_r : int
        Number of nodes; the rule is exact for polynomial degree 2*n_r - 1.
    """
    if a_gl <= -1.0:
        raise QuadratureError(f"Gauss-Laguerre exponent must be > -1, got {a_gl}")
    if n_r < 1:
        raise QuadratureError("need at least one radial node")
    nodes, weights = _laguerre_cached(float(a_gl), int(n_r))
    return RadialRule(float(a_gl), nodes, weights, prefactor)


def radial_integral(a_gl: float, g, n_r: int) -> float:
    """int_0^inf s^a_gl e^-s g(s) ds by an n_r-point matched rule."""
    rule = laguerre_rule(a_gl, n_r)
    return float(rule.weights @ np.asarray(g(rule.nodes), dtype=float))


def _angular_nodes(N: int, n_polar: int, n_az: int):
    """Node directions and weights on S^{N-1}; weights sum to its area.

    N=3 uses Gauss-Legendre in cos(polar) x trapezoid in azimuth; higher N
    chains Gauss-Jacobi rules with weight (1-c^2)^((N-2-j)/2) per angle.
    """
    if N == 2:
        phi = 2.0 * math.pi * np.arange(n_az) / n_az
        dirs = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        w = np.full(n_az, 2.0 * math.pi / n_az)
        return dirs, w
    expo = (N - 3) / 2.0
    if expo == 0.0:
        c, wc = roots_legendre(n_polar)
    else:
        c, wc = roots_jacobi(n_polar, expo, expo)
    sub_dirs, sub_w = _angular_nodes(N - 1, n_polar, n_az)
    s = np.sqrt(1.0 - c**2)
    dirs = np.empty((n_polar * len(sub_w), N))
    w = np.empty(n_polar * len(sub_w))
    for i in range(n_polar):
        block = slice(i * len(sub_w), (i + 1) * len(sub_w))
        dirs[block, 0] = c[i]
        dirs[block, 1:] = s[i] * sub_dirs
        w[block] = wc[i] * sub_w
    return dirs, w


@dataclass(frozen=True)
class ProductRule:
    """Radial x angular cubature for integrals against G(x, t).

    ``points`` are the t = 1 node coordinates x = 2 sqrt(s) theta; at time t
    the nodes are sqrt(t) * points (the t_scale convention).  ``weights``
    already include the 2^{N-1} radial Jacobian, so

        int f(x) G(x,t) dx  ~=  sum(weights * f(sqrt(t) * points)).
    """

    N: int
    radial: RadialRule
    angular_dirs: np.ndarray
    angular_weights: np.ndarray
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def node_count(self) -> int:
        return len(self.weights)

    @property
    def radii(self) -> np.ndarray:
        """|x| of each node at t = 1."""
        return np.repeat(self.radial.nodes_r, len(self.angular_weights))

    def points_at(self, t: float) -> np.ndarray:
        return math.sqrt(t) * self.points

    def integrate_values(self, values: np.ndarray) -> float:
        """Weighted sum of precomputed node values."""
        return float(self.weights @ values)

    def to_jsonable(self) -> dict:
        return {
            "N": self.N,
            "n_r": self.radial.count,
            "gl_parameter": self.radial.gl_parameter,
            "angular_count": len(self.angular_weights),
        }


def _check_unit_mass(rule: ProductRule) -> None:
    total = rule.weights.sum()
    exact = (2.0 * math.sqrt(math.pi)) ** rule.N
    if abs(total - exact) > 1e-12 * exact:
        raise QuadratureError(
            f"product rule mass check failed: {total} vs (2 sqrt(pi))^N = {exact}"
        )


@lru_cache(maxsize=64)
def product_rule(
    N: int,
    n_r: int = DEFAULT_NR,
    n_polar: int | None = None,
    n_az: int | None = None,
    a_gl: float | None = None,
) -> ProductRule:
    """Build the full cubature on R^N for the heat-kernel weight.

    The default radial exponent a_gl = N/2 - 1 matches the plain surface
    Jacobian; matched-exponent rules for singular basis pairs are built
    separately via :func:`laguerre_rule`.
    """
    if N < 2:
        raise QuadratureError("dimension must be >= 2")
    if n_polar is None:
        n_polar = 16
    if n_az is None:
        n_az = 32
    if a_gl is None:
        a_gl = N / 2.0 - 1.0
    radial = laguerre_rule(a_gl, n_r, prefactor=2.0 ** (N - 1))
    n_eff = radial.count  # underflowed tail nodes may have been dropped
    dirs, aw = _angular_nodes(N, n_polar, n_az)
    n_ang = len(aw)
    points = np.repeat(radial.nodes_r, n_ang)[:, None] * np.tile(dirs, (n_eff, 1))
    # The plain-exponent rule absorbs s^{N/2-1}; a shifted-exponent rule
    # needs the residual power made explicit at the nodes.
    power = N / 2.0 - 1.0 - a_gl
    s_pow = np.repeat(radial.nodes ** power, n_ang) if power != 0.0 else 1.0
    weights = radial.prefactor * np.repeat(radial.weights, n_ang) * np.tile(aw, n_eff) * s_pow
    points.setflags(write=False)
    weights = np.ascontiguousarray(weights)
    weights.setflags(write=False)
    rule = ProductRule(N, radial, dirs, aw, points, weights)
    if a_gl == N / 2.0 - 1.0:
        _check_unit_mass(rule)
    return rule


@dataclass(frozen=True)
class ZonalRule:
    """Radial x single-polar-angle rule for axisymmetric integrands.

    Integrates f(r, c) against G(., t=1) where c is the cosine of the angle
    to a fixed axis: the remaining S^{N-2} measure is lumped analytically.
    Used by the randomized inequality sweeps in N = 4, 5 where each test
    function is zonal about its own axis.
    """

    N: int
    r: np.ndarray
    c: np.ndarray
    weights: np.ndarray  # shape (n_r, n_polar)

    def integrate(self, fvals: np.ndarray) -> float:
        """fvals has shape (n_r, n_polar) = f evaluated on the grid."""
        return float(np.sum(self.weights * fvals))


@lru_cache(maxsize=32)
def zonal_rule(
    N: int, n_r: int = DEFAULT_NR, n_polar: int = 32, a_gl: float | None = None
) -> ZonalRule:
    if N < 3:
        raise QuadratureError("zonal reduction needs N >= 3")
    if a_gl is None:
        a_gl = N / 2.0 - 1.0
    radial = laguerre_rule(a_gl, n_r, prefactor=2.0 ** (N - 1))
    expo = (N - 3) / 2.0
    if expo == 0.0:
        c, wc = roots_legendre(n_polar)
    else:
        c, wc = roots_jacobi(n_polar, expo, expo)
    power = N / 2.0 - 1.0 - a_gl
    rad_w = radial.weights * radial.nodes**power if power != 0.0 else radial.weights
    w = radial.prefactor * sphere_area(N - 1) * np.outer(rad_w, wc)
    r = radial.nodes_r
    r.setflags(write=False)
    w.setflags(write=False)
    return ZonalRule(N, r, np.asarray(c), w)


def integrate_G(f, t: float, rule: ProductRule) -> float:
    """Quadrature estimate of int f(x) G(x,t) dx.

    ``f`` maps an (M, N) array of points to M values.  Raises
    SingularNodeError if any node value is non-finite (nodes avoid the
    origin by construction, so this flags a genuinely bad integrand).
    """
    if t <= 0.0:
        raise QuadratureError("t must be positive")
    vals = np.asarray(f(rule.points_at(t)), dtype=float)
    if not np.all(np.isfinite(vals)):
        bad = int(np.argmax(~np.isfinite(vals)))
        raise SingularNodeError(
            f"integrand non-finite at node {bad}, x = {rule.points_at(t)[bad]}",
            node=rule.points_at(t)[bad],
        )
    return rule.integrate_values(vals)


def integrate_G_stable(
    f,
    t: float,
    N: int,
    n_r: int = DEFAULT_NR,
    cap: int = NR_CAP,
    rtol: float = DOUBLING_RTOL,
    n_polar: int | None = None,
    n_az: int | None = None,
) -> float:
    """integrate_G with radial-node doubling until stable.

    Doubles n_r until successive estimates agree to ``rtol`` relative,
    raising QuadratureError at the cap.
    """
    prev = integrate_G(f, t, product_rule(N, n_r, n_polar, n_az))
    while n_r < cap:
        n_r *= 2
        cur = integrate_G(f, t, product_rule(N, n_r, n_polar, n_az))
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    raise QuadratureError(
        f"integral did not stabilize by n_r = {cap}; last two estimates "
        f"{prev} (the doubling criterion requires {rtol} relative agreement)"
    )


def norm_Lt(u, t: float, rule: ProductRule) -> float:
    """Heat-kernel weighted L2 norm sqrt(int u^2 G(.,t) dx)."""
    return math.sqrt(max(integrate_G(lambda x: np.asarray(u(x)) ** 2, t, rule), 0.0))


def norm_Ht(u, grad_u, t: float, rule: ProductRule) -> float:
    """Weighted H1 norm sqrt(int (t |grad u|^2 + u^2) G(.,t) dx)."""

    def integrand(x):
        g = np.asarray(grad_u(x), dtype=float)
        return t * np.sum(g * g, axis=-1) + np.asarray(u(x), dtype=float) ** 2

    return math.sqrt(max(integrate_G(integrand, t, rule), 0.0))
