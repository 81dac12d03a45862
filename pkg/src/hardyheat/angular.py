"""Angular eigenproblem on the sphere: -Lap_S psi - a(theta) psi = mu psi.

The first eigenvalue mu_1 gates everything downstream: the quadratic form
of -Lap - a(x/|x|)/|x|^2 is positive definite iff mu_1 > -(N-2)^2/4.

Constant potentials are handled analytically in any dimension N >= 3
(shifted Laplace-Beltrami spectrum l(l+N-2) - lambda with the standard
harmonic multiplicities).  Anisotropic potentials are restricted to N = 3
and discretized by a real spherical-harmonic Galerkin matrix

    M = diag(l(l+1)) - A,      A_pq = int_{S^2} a Y_p Y_q dS,

assembled with a Gauss-Legendre (polar) x trapezoid (azimuth) quadrature
that is exact for harmonic-table potentials up to degree 2L.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln, lpmv

from .errors import ConfigurationError, QuadratureError, TruncationError
from .quadrature import sphere_area, _angular_nodes

DEGENERACY_GAP = 1e-9  # eigenvalues closer than this form one cluster
DEFAULT_L = 16


# -- real spherical harmonics on S^2 (polar axis = first coordinate) --------

def _norm_lm(l: int, m: int) -> float:
    return math.sqrt(
        (2 * l + 1) / (4.0 * math.pi) * math.exp(gammaln(l - m + 1) - gammaln(l + m + 1))
    )


def sph_index(l: int, m: int) -> int:
    """Flat index of the real harmonic (l, m) in the degree-ordered basis."""
    return l * l + (m + l)


def sph_degree_of(p: int) -> int:
    return int(math.isqrt(p))


def basis_size(L: int) -> int:
    return (L + 1) ** 2


def _polar_azimuth(dirs: np.ndarray):
    ct = np.clip(dirs[..., 0], -1.0, 1.0)
    phi = np.arctan2(dirs[..., 2], dirs[..., 1])
    return ct, phi


def real_sph_block(L: int, dirs: np.ndarray) -> np.ndarray:
    """Values of all real harmonics of degree <= L at unit vectors.

    Returns an array of shape (basis_size(L), M).
    """
    dirs = np.atleast_2d(dirs)
    ct, phi = _polar_azimuth(dirs)
    out = np.empty((basis_size(L), len(dirs)))
    for l in range(L + 1):
        for m in range(0, l + 1):
            plm = lpmv(m, l, ct)
            if m == 0:
                out[sph_index(l, 0)] = _norm_lm(l, 0) * plm
            else:
                base = math.sqrt(2.0) * _norm_lm(l, m) * plm
                out[sph_index(l, m)] = base * np.cos(m * phi)
                out[sph_index(l, -m)] = base * np.sin(m * phi)
    return out


def real_sph_grad_block(L: int, dirs: np.ndarray) -> np.ndarray:
    """Surface gradients of the real harmonics, shape (basis, M, 3).

    Uses grad_S Y = (dY/dtheta) e_theta + (dY/dphi / sin theta) e_phi;
    callers must keep evaluation points away from the poles.
    """
    dirs = np.atleast_2d(dirs)
    ct, phi = _polar_azimuth(dirs)
    st = np.sqrt(np.clip(1.0 - ct * ct, 1e-300, None))
    cphi, sphi = np.cos(phi), np.sin(phi)
    e_theta = np.stack([-st, ct * cphi, ct * sphi], axis=-1)
    e_phi = np.stack([np.zeros_like(phi), -sphi, cphi], axis=-1)
    out = np.zeros((basis_size(L), len(dirs), 3))
    for l in range(L + 1):
        for m in range(0, l + 1):
            plm = lpmv(m, l, ct)
            plm_prev = lpmv(m, l - 1, ct) if l >= 1 else np.zeros_like(ct)
            # d/dtheta P_l^m(cos theta) = (l c P_l^m - (l+m) P_{l-1}^m)/sin
            dtheta = (l * ct * plm - (l + m) * plm_prev) / st
            if m == 0:
                n0 = _norm_lm(l, 0)
                out[sph_index(l, 0)] = n0 * dtheta[:, None] * e_theta
            else:
                nm = math.sqrt(2.0) * _norm_lm(l, m)
                cm, sm = np.cos(m * phi), np.sin(m * phi)
                out[sph_index(l, m)] = nm * (
                    (dtheta * cm)[:, None] * e_theta - (m * plm / st * sm)[:, None] * e_phi
                )
                out[sph_index(l, -m)] = nm * (
                    (dtheta * sm)[:, None] * e_theta + (m * plm / st * cm)[:, None] * e_phi
                )
    return out


def harmonic_multiplicity(l: int, N: int) -> int:
    """Dimension of the degree-l spherical harmonics on S^{N-1}."""
    if l == 0:
        return 1
    if l == 1:
        return N
    return math.comb(N - 1 + l, l) - math.comb(N - 3 + l, l - 2)


# -- potentials --------------------------------------------------------------

@dataclass(frozen=True)
class AngularPotential:
    """Bounded potential a(theta) on the sphere.

    kind 'constant' is valid for any N >= 3; 'zonal' (function of the
    cosine of the polar angle) and 'harmonic_table' (real-harmonic
    coefficients) require N = 3.
    """

    kind: str
    value: float = 0.0
    zonal_fn: Callable | None = None
    table: tuple = ()
    sup_norm_bound: float = 0.0

    @staticmethod
    def constant(lam: float) -> "AngularPotential":
        return AngularPotential("constant", value=float(lam), sup_norm_bound=abs(lam))

    @staticmethod
    def zonal(fn: Callable) -> "AngularPotential":
        # sup norm estimated on a dense polar grid
        c = np.cos(np.linspace(0.0, math.pi, 4001))
        bound = float(np.max(np.abs(fn(c))))
        return AngularPotential("zonal", zonal_fn=fn, sup_norm_bound=bound)

    @staticmethod
    def harmonic_table(table: dict) -> "AngularPotential":
        items = tuple(sorted((int(l), int(m), float(c)) for (l, m), c in table.items()))
        pot = AngularPotential("harmonic_table", table=items)
        grid, _ = _angular_nodes(3, 60, 121)
        bound = float(np.max(np.abs(pot.evaluate(grid))))
        object.__setattr__(pot, "sup_norm_bound", bound)
        return pot

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def compatible_N(self, N: int) -> bool:
        return self.kind == "constant" or N == 3

    def evaluate(self, dirs: np.ndarray) -> np.ndarray:
        dirs = np.atleast_2d(dirs)
        if self.kind == "constant":
            return np.full(len(dirs), self.value)
        if self.kind == "zonal":
            return np.asarray(self.zonal_fn(dirs[..., 0]), dtype=float)
        if self.kind == "harmonic_table":
            if not self.table:
                return np.zeros(len(dirs))
            L = max(l for l, _, _ in self.table)
            Y = real_sph_block(L, dirs)
            out = np.zeros(len(dirs))
            for l, m, c in self.table:
                out += c * Y[sph_index(l, m)]
            return out
        raise ConfigurationError(f"unknown potential kind {self.kind!r}")

    def describe(self) -> str:
        if self.kind == "constant":
            return f"constant({self.value!r})"
        if self.kind == "harmonic_table":
            return "harmonic_table(" + ";".join(f"{l},{m},{c!r}" for l, m, c in self.table) + ")"
        return "zonal(<callable>)"


# -- spectrum ----------------------------------------------------------------

@dataclass(frozen=True)
class AngularSpectrum:
    """First K eigenpairs of -Lap_S - a, eigenvalues ascending.

    For Galerkin solves, ``eigenvectors`` holds coefficient columns in the
    real-harmonic basis of degree <= L; for analytic constant-potential
    spectra in N != 3 only the constant mode is evaluable and
    ``eigenvectors`` is None.  ``degrees`` records the (dominant) harmonic
    degree of each eigenfunction.
    """

    N: int
    potential: AngularPotential
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    degrees: np.ndarray
    truncation_degree: int
    residual_bound: float

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    def to_jsonable(self) -> dict:
        return {
            "N": self.N,
            "L": self.truncation_degree,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "residual_bound": float(self.residual_bound),
        }


def assemble_angular(a: AngularPotential, L: int, N: int = 3) -> np.ndarray:
    """Galerkin matrix diag(l(l+N-2)) - A in the real-harmonic basis.

    Anisotropic kinds require N = 3; the quadrature (Gauss-Legendre polar x
    trapezoid azimuth) is exact for harmonic-table potentials up to degree
    2L.  The result is symmetrized after a 1e-13 asymmetry check.
    """
    if L < 2:
        raise ConfigurationError("truncation degree L must be >= 2")
    if not a.compatible_N(N):
        raise ConfigurationError(f"potential kind {a.kind!r} requires N=3, got N={N}")
    if N != 3:
        raise ConfigurationError("Galerkin assembly is implemented for N=3 only")
    dim = basis_size(L)
    lap = np.repeat(np.arange(L + 1) * (np.arange(L + 1) + N - 2),
                    [2 * l + 1 for l in range(L + 1)]).astype(float)
    if a.is_constant:
        return np.diag(lap - a.value)
    table_L = max((l for l, _, _ in a.table), default=0) if a.kind == "harmonic_table" else 0
    n_polar = 2 * L + max(8, table_L)
    n_az = 4 * L + 2 * table_L + 18
    dirs, w = _angular_nodes(3, n_polar, n_az)
    Y = real_sph_block(L, dirs)
    avals = a.evaluate(dirs)
    A = (Y * (w * avals)) @ Y.T
    asym = np.max(np.abs(A - A.T))
    if asym > 1e-13 * max(1.0, np.max(np.abs(A))):
        raise QuadratureError(f"assembled coupling matrix asymmetric by {asym}")
    A = 0.5 * (A + A.T)
    M = np.diag(lap) - A
    assert M.shape == (dim, dim)
    return M


def _cluster_tiebreak(vals: np.ndarray, vecs: np.ndarray):
    """Reorder numerically degenerate clusters by dominant-harmonic index."""
    order = np.arange(len(vals))
    i = 0
    while i < len(vals):
        j = i + 1
        while j < len(vals) and vals[j] - vals[j - 1] < DEGENERACY_GAP:
            j += 1
        if j - i > 1:
            dominant = [int(np.argmax(np.abs(vecs[:, k]))) for k in range(i, j)]
            order[i:j] = order[i:j][np.argsort(dominant, kind="stable")]
        i = j
    return vals[order], vecs[:, order]


def _solve_constant(a: AngularPotential, K: int, N: int, L: int | None) -> AngularSpectrum:
    levels = []
    l = 0
    while sum(harmonic_multiplicity(j, N) for j in range(l)) < K:
        levels.append(l)
        l += 1
    mu, deg = [], []
    for l in levels:
        mu.extend([l * (l + N - 2) - a.value] * harmonic_multiplicity(l, N))
        deg.extend([l] * harmonic_multiplicity(l, N))
    mu = np.asarray(mu[:K], dtype=float)
    deg = np.asarray(deg[:K], dtype=int)
    L_used = levels[-1] if L is None else max(L, levels[-1])
    vecs = None
    if N == 3:
        vecs = np.zeros((basis_size(L_used), K))
        for k in range(K):
            vecs[k, k] = 1.0  # degree-ordered harmonics are the eigenfunctions
    return AngularSpectrum(N, a, mu, vecs, deg, L_used, 0.0)


def _solve_galerkin(a: AngularPotential, K: int, L: int) -> AngularSpectrum:
    if K > L * L:
        raise ConfigurationError(
            f"K={K} exceeds the certified budget L^2={L * L} "
            "(one full degree is reserved as truncation buffer)"
        )
    M = assemble_angular(a, L)
    vals, vecs = np.linalg.eigh(M)
    vals, vecs = vals[:K], vecs[:, :K]
    vals, vecs = _cluster_tiebreak(vals, vecs)
    residual = float(np.max(np.linalg.norm(M @ vecs - vecs * vals, axis=0)))
    if len(vals) > 1 and vals[1] - vals[0] <= 10.0 * residual:
        raise TruncationError(
            f"mu_1 simplicity not certified: gap {vals[1] - vals[0]} vs "
            f"10 x residual {10 * residual}; increase L"
        )
    degrees = np.asarray([sph_degree_of(int(np.argmax(np.abs(v)))) for v in vecs.T])
    return AngularSpectrum(3, a, vals, vecs, degrees, L, residual)


def solve_angular(
    a: AngularPotential,
    L: int | None = None,
    K: int = 16,
    N: int = 3,
) -> AngularSpectrum:
    """First K eigenpairs, ascending, eigenvalues repeated by multiplicity.

    With L=None the truncation starts at DEFAULT_L and doubles until the
    top reported eigenvalue moves by less than 1e-9.
    """
    if not a.compatible_N(N):
        raise ConfigurationError(f"potential kind {a.kind!r} requires N=3, got N={N}")
    if a.is_constant:
        return _solve_constant(a, K, N, L)
    if L is not None:
        return _solve_galerkin(a, K, L)
    L = DEFAULT_L
    while L * L < K:
        L *= 2
    spec = _solve_galerkin(a, K, L)
    while L < 128:
        refined = _solve_galerkin(a, K, 2 * L)
        if abs(refined.eigenvalues[-1] - spec.eigenvalues[-1]) < 1e-9:
            return refined
        spec, L = refined, 2 * L
    raise TruncationError("angular truncation did not converge by L=128")


def check_positivity(spec: AngularSpectrum):
    """Gate mu_1 > -(N-2)^2/4; returns (ok, margin)."""
    margin = float(spec.eigenvalues[0] + (spec.N - 2) ** 2 / 4.0)
    return margin > 0.0, margin


def eval_psi_block(spec: AngularSpectrum, dirs: np.ndarray) -> np.ndarray:
    """All eigenfunctions at unit vectors; shape (K, M)."""
    dirs = np.atleast_2d(dirs)
    if spec.eigenvectors is None:
        # constant-potential N != 3: only the constant mode is evaluable
        out = np.zeros((spec.count, len(dirs)))
        out[0] = 1.0 / math.sqrt(sphere_area(spec.N))
        if spec.count > 1:
            out[1:] = np.nan
        return out
    Y = real_sph_block(spec.truncation_degree, dirs)
    return spec.eigenvectors.T @ Y


def eval_psi(spec: AngularSpectrum, k: int, dirs: np.ndarray) -> np.ndarray:
    """Eigenfunction psi_k (1-based index k) at unit vectors."""
    if not 1 <= k <= spec.count:
        raise ConfigurationError(f"eigenfunction index {k} outside 1..{spec.count}")
    if spec.eigenvectors is None and k > 1:
        raise ConfigurationError(
            "anisotropic eigenfunction evaluation requires N = 3; "
            "only the constant mode is evaluable for constant potentials in N > 3"
        )
    return eval_psi_block(spec, dirs)[k - 1]


def eval_grad_psi_block(spec: AngularSpectrum, dirs: np.ndarray) -> np.ndarray:
    """Surface gradients of all eigenfunctions; shape (K, M, 3).  N=3 only."""
    if spec.eigenvectors is None:
        if spec.count == 1:
            return np.zeros((1, len(np.atleast_2d(dirs)), spec.N))
        raise ConfigurationError("angular gradients require the N=3 Galerkin basis")
    grads = real_sph_grad_block(spec.truncation_degree, dirs)
    return np.einsum("pk,pmd->kmd", spec.eigenvectors, grads)
