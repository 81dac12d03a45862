"""Spectral Galerkin integrator in self-similar variables.

With v(x, t) = u(sqrt(t) x, t) and tau = log t, the flow becomes

    dc_k/dtau = gamma_k c_k - e^tau F_k(tau, c),
    F_k = < f(e^{tau/2} . , e^tau, v), V_tilde_k >_L,

which is diagonal plus a small forcing; integration runs backward from
tau = 0 toward the singularity.  The unperturbed flow is advanced by its
exact diagonal propagator e^{gamma_k dtau}; perturbed kinds use classical
RK4 with a mandatory step-halving verification.  Every step's forcing
coefficients are stored: they are exactly the xi_{m,k} data the asymptotic
coefficient formulas integrate later.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import AccuracyError, ConfigurationError
from .ou_basis import Collocation, OUBasis, build_collocation

TAU_FLOOR = math.log(1e-6)
DTAU_MAX = 0.01
HALVING_TOL = 1e-8
PROJECTION_RESIDUAL_TOL = 1e-3
TRUNCATION_FLAG = 1e-6


@dataclass(frozen=True)
class PerturbationSpec:
    """Forcing term f(x, t, s) of the evolution.

    kinds: 'none'; 'linear' with f = h(x,t) s and the admissibility bound
    |h| <= C_h (1 + |x|^{-2+eps_h}); 'semilinear' with f = eps |s|^{p-1} s,
    1 < p < 2N/(N-2).
    """

    kind: str
    h: Callable | None = None
    C_h: float = 0.0
    eps_h: float = 1.0
    h_is_constant: bool = False
    eps: float = 0.0
    p: float = 2.0
    admissibility_checked: bool = False
    label: str = "none"

    @staticmethod
    def none() -> "PerturbationSpec":
        return PerturbationSpec("none", admissibility_checked=True)

    @staticmethod
    def linear(h: Callable, C_h: float, eps_h: float, label: str = "linear(<callable>)"):
        if not 0.0 < eps_h < 2.0:
            raise ConfigurationError(f"eps_h must lie in (0, 2), got {eps_h}")
        return PerturbationSpec("linear", h=h, C_h=C_h, eps_h=eps_h, label=label)

    @staticmethod
    def linear_constant(eps: float, eps_h: float = 1.0) -> "PerturbationSpec":
        spec = PerturbationSpec(
            "linear",
            h=lambda x, t: np.full(len(x), eps),
            C_h=abs(eps),
            eps_h=eps_h,
            h_is_constant=True,
            eps=eps,
            admissibility_checked=True,
            label=f"linear_constant({eps!r})",
        )
        return spec

    @staticmethod
    def linear_bounded(eps: float, eps_h: float = 1.0) -> "PerturbationSpec":
        # h(x, t) = eps / (1 + |x|^2): smooth, bounded, admissible
        return PerturbationSpec(
            "linear",
            h=lambda x, t: eps / (1.0 + np.sum(x * x, axis=-1)),
            C_h=abs(eps),
            eps_h=eps_h,
            eps=eps,
            admissibility_checked=True,
            label=f"linear_bounded({eps!r})",
        )

    @staticmethod
    def semilinear(eps: float, p: float, N: int) -> "PerturbationSpec":
        if not 1.0 < p < 2.0 * N / (N - 2) - 1.0:
            raise ConfigurationError(
                f"semilinear exponent p={p} outside (1, 2N/(N-2) - 1) for N={N}"
            )
        return PerturbationSpec(
            "semilinear", eps=eps, p=p, admissibility_checked=True,
            label=f"semilinear({eps!r},{p!r})",
        )

    def verified(self) -> "PerturbationSpec":
        """Copy with the admissibility flag set (after check_h_admissible)."""
        import dataclasses

        return dataclasses.replace(self, admissibility_checked=True)

    def delta_tilde(self, N: int) -> float:
        """Exponent in the small-s forcing bound |xi| <= C s^{-2+dt+2gamma}."""
        if self.kind == "none":
            return 2.0
        if self.kind == "linear":
            return self.eps_h / 2.0
        return (N + 2 - self.p * (N - 2)) / (self.p + 1)

    def delta_theory(self, N: int, r: float = math.inf) -> float:
        """Frequency convergence rate |N(t) - gamma| <= C t^delta."""
        if self.kind == "none":
            return math.inf
        if self.kind == "linear":
            return min(self.eps_h / 2.0, 1.0 - 1.0 / r) if r != math.inf else self.eps_h / 2.0
        return (N + 2 - self.p * (N - 2)) / (2.0 * (self.p + 1))


def forcing_coefficients(
    tau: float, c: np.ndarray, pert: PerturbationSpec, col: Collocation
) -> np.ndarray:
    """F_k(tau, c) = < f(e^{tau/2} . , e^tau, v), V_tilde_k >_L."""
    if pert.kind == "none":
        return np.zeros_like(c)
    t = math.exp(tau)
    v = col.reconstruct(c)
    if pert.kind == "linear":
        hvals = np.asarray(pert.h(math.sqrt(t) * col.points, t), dtype=float)
        return col.project(hvals * v)
    # semilinear: eps |v|^{p-1} v, projected nodewise
    return pert.eps * col.project(np.abs(v) ** (pert.p - 1.0) * v)


def forcing_coefficients_scaled(
    x_scale: float, t_arg: float, c: np.ndarray,
    pert: PerturbationSpec, col: Collocation,
) -> np.ndarray:
    """Forcing projection with explicit argument scaling x_scale, t_arg.

    Used by the scaling-identity check, where the rescaled equation
    evaluates f at (lambda sqrt(t) x, lambda^2 t) instead of
    (sqrt(t) x, t); the nodal algebra is otherwise identical.
    """
    if pert.kind == "none":
        return np.zeros_like(c)
    v = col.reconstruct(c)
    if pert.kind == "linear":
        hvals = np.asarray(pert.h(x_scale * col.points, t_arg), dtype=float)
        return col.project(hvals * v)
    return pert.eps * col.project(np.abs(v) ** (pert.p - 1.0) * v)


def rhs(
    tau: float,
    c: np.ndarray,
    pert: PerturbationSpec,
    basis: OUBasis,
    col: Collocation,
) -> np.ndarray:
    """Right-hand side Gamma c - e^tau F of the spectral system."""
    if tau > 1e-12:
        raise ConfigurationError("the flow is only integrated for tau <= 0")
    if pert.kind == "linear" and not pert.admissibility_checked:
        raise ConfigurationError("linear perturbation has not passed check_h_admissible")
    out = basis.gammas * c
    if pert.kind != "none":
        out = out - math.exp(tau) * forcing_coefficients(tau, c, pert, col)
    return out


@dataclass
class Trajectory:
    """Backward-in-tau solution record.

    ``coeffs[i]`` is c(tau[i]); tau descends from 0 to tau_min.  ``forcing``
    stores F(tau_i, c_i) rowwise, i.e. the xi-coefficients of the
    perturbation at each stored time.
    """

    basis: OUBasis
    collocation: Collocation
    tau: np.ndarray
    coeffs: np.ndarray
    forcing: np.ndarray
    perturbation: PerturbationSpec
    dtau: float
    metadata: dict = field(default_factory=dict)
    diag_factors: np.ndarray | None = None  # exp(gamma_k tau_i) when kind=none

    @property
    def t(self) -> np.ndarray:
        return np.exp(self.tau)

    @property
    def size(self) -> int:
        return len(self.tau)

    def coefficient_derivatives(self, i: int) -> np.ndarray:
        """c'(t) at row i, from the exact rhs: dc/dt = (dc/dtau)/t."""
        t = math.exp(self.tau[i])
        dctau = self.basis.gammas * self.coeffs[i] - t * self.forcing[i]
        return dctau / t

    def pairing(self, i: int) -> float:
        """<f, v>_L at row i (zero for the unperturbed flow)."""
        return float(self.forcing[i] @ self.coeffs[i])

    def truncation_ratio(self) -> float:
        """|c_last-mode| / ||c|| at tau_min; > 1e-6 flags an unresolved run."""
        tail = abs(self.coeffs[-1, -1])
        total = float(np.linalg.norm(self.coeffs[-1]))
        return tail / total if total > 0 else 0.0

    def row_at_t(self, t: float) -> int:
        """Nearest stored row to time t; t must lie inside the grid span."""
        tau = math.log(t)
        if tau > self.tau[0] + 1e-12 or tau < self.tau[-1] - 1e-12:
            raise ConfigurationError(f"t={t} outside the stored range")
        return int(np.argmin(np.abs(self.tau - tau)))


def build_initial(
    basis: OUBasis,
    spec,
    col: Collocation | None = None,
) -> np.ndarray:
    """Initial coefficient vector at tau = 0.

    ``spec`` is either a list of (mode index, coefficient) pairs or a
    callable sampled on the cubature; in the sampled case the projection
    residual ||v - sum c_k V_tilde_k||_L must stay below 1e-3 ||v||_L.
    """
    if callable(spec):
        if col is None:
            col = build_collocation(basis)
        vals = np.asarray(spec(col.points), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ConfigurationError("initial datum is non-finite at a cubature node")
        c = col.project(vals)
        norm2 = float(col.weights @ (vals * vals))
        resid2 = max(norm2 - float(c @ c), 0.0)
        if norm2 > 0 and math.sqrt(resid2) > PROJECTION_RESIDUAL_TOL * math.sqrt(norm2):
            raise AccuracyError(
                f"initial datum under-resolved: projection residual "
                f"{math.sqrt(resid2):.3e} vs norm {math.sqrt(norm2):.3e}",
                suggestion="enlarge gamma_max / basis size",
            )
        return c
    c = np.zeros(basis.size)
    for k, coeff in spec:
        c[k] = coeff
    return c


def _march_rk4(taus, c0, f):
    c = np.empty((len(taus), len(c0)))
    c[0] = c0
    for i in range(len(taus) - 1):
        h = taus[i + 1] - taus[i]  # negative
        t0 = taus[i]
        k1 = f(t0, c[i])
        k2 = f(t0 + 0.5 * h, c[i] + 0.5 * h * k1)
        k3 = f(t0 + 0.5 * h, c[i] + 0.5 * h * k2)
        k4 = f(t0 + h, c[i] + h * k3)
        c[i + 1] = c[i] + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return c


def integrate_backward(
    basis: OUBasis,
    c0: np.ndarray,
    tau_min: float,
    dtau: float,
    pert: PerturbationSpec,
    col: Collocation | None = None,
    verify_halving: bool = True,
) -> Trajectory:
    """March c from tau = 0 down to tau_min.

    The unperturbed flow uses the exact diagonal propagator; perturbed
    kinds use fixed-step RK4 and must pass the dtau/2 agreement check
    (sup over stored coefficients <= 1e-8), else AccuracyError suggests a
    smaller step.
    """
    if dtau <= 0.0 or dtau > DTAU_MAX:
        raise ConfigurationError(f"dtau must lie in (0, {DTAU_MAX}], got {dtau}")
    if tau_min >= 0.0 or tau_min < TAU_FLOOR - 1e-12:
        raise ConfigurationError(
            f"tau_min must lie in [log(1e-6), 0) = [{TAU_FLOOR}, 0), got {tau_min}"
        )
    c0 = np.asarray(c0, dtype=float)
    if len(c0) != basis.size:
        raise ConfigurationError("initial coefficient vector does not match the basis")
    if col is None:
        col = build_collocation(basis)

    n = max(1, math.ceil(-tau_min / dtau - 1e-12))
    taus = np.linspace(0.0, tau_min, n + 1)
    step = -tau_min / n

    if pert.kind == "none":
        factors = np.exp(np.outer(taus, basis.gammas))
        coeffs = c0[None, :] * factors
        forcing = np.zeros_like(coeffs)
        traj = Trajectory(basis, col, taus, coeffs, forcing, pert, step,
                          metadata=_metadata(basis, pert, step, tau_min))
        traj.diag_factors = factors  # lets beta undo the flow bit-for-bit
        return traj

    f = lambda tau, c: rhs(tau, c, pert, basis, col)
    coeffs = _march_rk4(taus, c0, f)
    if not np.all(np.isfinite(coeffs)):
        raise AccuracyError(
            "trajectory left the finite range (perturbation too strong for "
            "backward continuation)",
            suggestion=f"dtau <= {step / 4.0}",
        )
    if verify_halving:
        taus2 = np.linspace(0.0, tau_min, 2 * n + 1)
        coeffs2 = _march_rk4(taus2, c0, f)
        err = float(np.max(np.abs(coeffs - coeffs2[::2])))
        if not math.isfinite(err) or err > HALVING_TOL:
            raise AccuracyError(
                f"step-halving disagreement {err:.3e} exceeds {HALVING_TOL}",
                suggestion=f"dtau <= {step / 4.0}",
            )
        coeffs = coeffs2[::2]  # keep the finer march on the coarse grid
    forcing = np.empty_like(coeffs)
    for i, tau in enumerate(taus):
        forcing[i] = forcing_coefficients(tau, coeffs[i], pert, col)
    traj = Trajectory(basis, col, taus, coeffs, forcing, pert, step,
                      metadata=_metadata(basis, pert, step, tau_min))
    ratio = traj.truncation_ratio()
    if ratio > TRUNCATION_FLAG:
        traj.metadata["truncation_flag"] = ratio
    return traj


def _metadata(basis, pert, step, tau_min):
    meta = {
        "basis_hash": basis.content_hash(),
        "dtau": step,
        "tau_min": tau_min,
        "perturbation": pert.label,
    }
    if pert.kind == "semilinear":
        # Gaussian nodes cannot test the unweighted L^{p+1} hypotheses; the
        # run verifies conclusions only.
        meta["hypotheses_verified"] = False
    return meta


def closed_form_reference(basis: OUBasis, family, t: float) -> np.ndarray:
    """Exact coefficient vectors for the analytic solution families.

    families: ('pure', k); ('mixture', [(k, coeff), ...]);
    ('exp_linear', k, eps) for the exact solution e^{-eps t} t^gamma of the
    constant-h linear problem.
    """
    kind = family[0]
    c = np.zeros(basis.size)
    if kind == "pure":
        k = family[1]
        c[k] = t ** basis.gammas[k]
    elif kind == "mixture":
        for k, coeff in family[1]:
            c[k] = coeff * t ** basis.gammas[k]
    elif kind == "exp_linear":
        k, eps = family[1], family[2]
        c[k] = math.exp(-eps * t) * t ** basis.gammas[k]
    else:
        raise ConfigurationError(f"unknown closed-form family {kind!r}")
    return c


def check_h_admissible(
    h: Callable,
    C_h: float,
    eps_h: float,
    col: Collocation,
    t_grid=None,
) -> tuple[bool, list]:
    """Sample |h(x, t)| <= C_h (1 + |x|^{-2+eps_h}) at all cubature nodes.

    Returns (ok, failures) with failures listing (t, node index, |h|, bound).
    """
    if not 0.0 < eps_h < 2.0:
        raise ConfigurationError(f"eps_h must lie in (0, 2), got {eps_h}")
    if t_grid is None:
        t_grid = np.exp(np.linspace(math.log(1e-6), 0.0, 25))
    failures = []
    base_r = np.linalg.norm(col.points, axis=1)
    for t in np.asarray(t_grid, dtype=float):
        pts = math.sqrt(t) * col.points
        r = math.sqrt(t) * base_r
        bound = C_h * (1.0 + r ** (-2.0 + eps_h))
        vals = np.abs(np.asarray(h(pts, t), dtype=float))
        bad = vals > bound * (1.0 + 1e-12)
        for idx in np.nonzero(bad)[0][:5]:
            failures.append((float(t), int(idx), float(vals[idx]), float(bound[idx])))
    return len(failures) == 0, failures
