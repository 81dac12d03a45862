"""Randomized numerical verification of the weighted functional inequalities.

Four verifiers, each returning the gap (right side minus left side, or the
Sobolev quotient), run over reproducible randomized families:

  hardy_parabolic :  int u^2/|x|^2 G <= 1/((N-2)t) int u^2 G
                                        + 4/(N-2)^2 int |grad u|^2 G
  hardy_anisotropic: int (|grad u|^2 - a/|x|^2 u^2) G + (N-2)/(4t) int u^2 G
                       >= (mu_1 + (N-2)^2/4) int u^2/|x|^2 G
  x2_bound        :  (1/16) int |x|^2 u^2 G(.,1) <= int |grad u|^2 G
                                                    + (N/4) int u^2 G
  sobolev_ratio   :  (int |u|^s G^{s/2})^{2/s} / (t^{-(N/s)(s-2)/2} ||u||_Ht^2)

N = 3 sweeps use the full product cubature; N = 4, 5 use Gaussian bumps,
each zonal about its own axis, so the integrals reduce to a radial x
single-polar-angle rule.  Bump centers are drawn with density ~ 1/r in
radius to stress the Hardy singularity.

The module also estimates the coercivity infimum of the shifted quadratic
form, in both quotient normalizations (the equivalence-of-norms one and
the plain H_t-denominator one used by the frequency lower bound).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh as generalized_eigh

from . import angular as ang
from .errors import ConfigurationError, InvariantViolationError
from .ou_basis import OUBasis, eval_grad_V, eval_V, hardy_matrix, potential_coupling_matrix
from .quadrature import ProductRule, ZonalRule, product_rule, zonal_rule

GAP_SLACK = 1e-10  # violations are gap < -GAP_SLACK * scale


# -- test functions ----------------------------------------------------------

@dataclass(frozen=True)
class GaussianBump:
    """u(x) = exp(-|x - b e|^2 / (2 w^2)); zonal about its own axis e."""

    b: float
    w: float
    axis: np.ndarray

    def value(self, x):
        d = x - self.b * self.axis
        return np.exp(-np.sum(d * d, axis=-1) / (2.0 * self.w**2))

    def grad(self, x):
        d = x - self.b * self.axis
        return -(d / self.w**2) * self.value(x)[..., None]

    # zonal forms: R = radius grid, C = cos(angle to axis)
    def _rho2(self, R, C):
        return R * R + self.b * self.b - 2.0 * R * self.b * C

    def value_rc(self, R, C):
        return np.exp(-self._rho2(R, C) / (2.0 * self.w**2))

    def gradsq_rc(self, R, C):
        u = self.value_rc(R, C)
        return self._rho2(R, C) / self.w**4 * u * u

    def rescaled(self, tau: float) -> "GaussianBump":
        # u(x / sqrt(tau)) is again a bump
        return GaussianBump(self.b * math.sqrt(tau), self.w * math.sqrt(tau), self.axis)


_MONOMIALS3 = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1),
               (2, 0, 0), (0, 2, 0), (0, 0, 2), (1, 1, 0), (1, 0, 1), (0, 1, 1)]


@dataclass(frozen=True)
class PolyGaussian:
    """u(x) = q(x) exp(-kappa |x|^2) with q a random quadratic; N = 3."""

    coeffs: tuple
    kappa: float

    def _q(self, x):
        out = np.zeros(len(x))
        for c, (a, b, d) in zip(self.coeffs, _MONOMIALS3):
            out += c * x[:, 0] ** a * x[:, 1] ** b * x[:, 2] ** d
        return out

    def value(self, x):
        return self._q(x) * np.exp(-self.kappa * np.sum(x * x, axis=-1))

    def grad(self, x):
        e = np.exp(-self.kappa * np.sum(x * x, axis=-1))
        gq = np.zeros_like(x)
        for c, pw in zip(self.coeffs, _MONOMIALS3):
            for d in range(3):
                if pw[d] == 0:
                    continue
                dpw = list(pw)
                dpw[d] -= 1
                gq[:, d] += c * pw[d] * x[:, 0] ** dpw[0] * x[:, 1] ** dpw[1] * x[:, 2] ** dpw[2]
        return (gq - 2.0 * self.kappa * x * self._q(x)[:, None]) * e[:, None]


class RescaledFunction:
    """Generic wrapper u(x / sqrt(tau)) for the t-scaling invariance checks."""

    def __init__(self, member, tau):
        self.member = member
        self.tau = tau

    def value(self, x):
        return self.member.value(x / math.sqrt(self.tau))

    def grad(self, x):
        return self.member.grad(x / math.sqrt(self.tau)) / math.sqrt(self.tau)


class BasisModeFunction:
    """A normalized eigenbasis mode as a point-function test member."""

    def __init__(self, basis: OUBasis, k: int):
        self.mode = basis.modes[k]
        self.spectrum = basis.spectrum

    def value(self, x):
        return eval_V(self.mode, x, self.spectrum)

    def grad(self, x):
        return eval_grad_V(self.mode, x, self.spectrum)


@dataclass(frozen=True)
class TestFamily:
    """Reproducible generator description for a randomized sweep."""

    kind: str          # 'bumps' | 'polygauss' | 'modes'
    N: int
    count: int
    seed: int

    def members(self, basis: OUBasis | None = None):
        rng = np.random.default_rng(self.seed)
        if self.kind == "bumps":
            for _ in range(self.count):
                # density ~ 1/r in radius: log-uniform draw
                b = math.exp(rng.uniform(math.log(1e-3), math.log(2.0)))
                w = math.exp(rng.uniform(math.log(0.5), math.log(1.5)))
                axis = rng.normal(size=self.N)
                axis /= np.linalg.norm(axis)
                yield GaussianBump(b, w, axis)
        elif self.kind == "polygauss":
            if self.N != 3:
                raise ConfigurationError("polynomial-x-Gaussian family is N=3 only")
            for _ in range(self.count):
                yield PolyGaussian(tuple(rng.normal(size=len(_MONOMIALS3))),
                                   rng.uniform(1.0 / 12.0, 1.0 / 6.0))
        elif self.kind == "modes":
            if basis is None:
                raise ConfigurationError("mode family needs a basis")
            for i in range(self.count):
                yield BasisModeFunction(basis, i % basis.size)
        else:
            raise ConfigurationError(f"unknown family kind {self.kind!r}")


# -- nodal integral bundles --------------------------------------------------

@dataclass
class MemberIntegrals:
    """All Gaussian-weighted integrals one verifier pass needs."""

    u2: float
    grad2: float
    u2_over_r2: float
    r2u2: float
    a_u2_over_r2: float = 0.0


@dataclass(frozen=True)
class RulePair:
    """Plain cubature plus an inverse-square-matched twin.

    The 1/|x|^2 integrands carry an s^{-1} factor relative to the surface
    Jacobian; a rule with exponent a_GL = N/2 - 2 restores exactness there,
    while everything regular uses the plain N/2 - 1 rule.
    """

    plain: ProductRule | ZonalRule
    hardy: ProductRule | ZonalRule


def full_rules(N: int, n_r: int = 48, n_polar: int = 14, n_az: int = 28) -> RulePair:
    return RulePair(
        product_rule(N, n_r, n_polar, n_az),
        product_rule(N, n_r, n_polar, n_az, a_gl=N / 2.0 - 2.0),
    )


def zonal_rules(N: int, n_r: int = 48, n_polar: int = 28) -> RulePair:
    return RulePair(
        zonal_rule(N, n_r, n_polar),
        zonal_rule(N, n_r, n_polar, a_gl=N / 2.0 - 2.0),
    )


def _integrals_full(member, t: float, rules: RulePair,
                    potential: ang.AngularPotential | None = None) -> MemberIntegrals:
    plain, hardy = rules.plain, rules.hardy
    pts = math.sqrt(t) * plain.points
    w = plain.weights
    u = np.asarray(member.value(pts), dtype=float)
    g = np.asarray(member.grad(pts), dtype=float)
    r2 = t * plain.radii**2
    u2 = u * u
    # singular integrals on the matched-exponent twin
    pts_h = math.sqrt(t) * hardy.points
    uh = np.asarray(member.value(pts_h), dtype=float)
    r2_h = t * hardy.radii**2
    vals = MemberIntegrals(
        u2=float(w @ u2),
        grad2=float(w @ np.sum(g * g, axis=-1)),
        u2_over_r2=float(hardy.weights @ (uh * uh / r2_h)),
        r2u2=float(w @ (r2 * u2)),
    )
    if potential is not None:
        avals = np.tile(potential.evaluate(hardy.angular_dirs), hardy.radial.count)
        vals.a_u2_over_r2 = float(hardy.weights @ (avals * uh * uh / r2_h))
    return vals


def _integrals_zonal(member: GaussianBump, t: float, rules: RulePair,
                     lam: float | None = None) -> MemberIntegrals:
    plain, hardy = rules.plain, rules.hardy
    R = math.sqrt(t) * plain.r[:, None]
    C = plain.c[None, :]
    u2 = member.value_rc(R, C) ** 2
    g2 = member.gradsq_rc(R, C)
    Rh = math.sqrt(t) * hardy.r[:, None]
    u2h = member.value_rc(Rh, hardy.c[None, :]) ** 2
    vals = MemberIntegrals(
        u2=plain.integrate(u2),
        grad2=plain.integrate(g2),
        u2_over_r2=hardy.integrate(u2h / (Rh * Rh)),
        r2u2=plain.integrate(R * R * u2),
    )
    if lam is not None:
        vals.a_u2_over_r2 = lam * vals.u2_over_r2
    return vals


# -- verifiers ---------------------------------------------------------------

def hardy_parabolic_gap(I: MemberIntegrals, t: float, N: int) -> tuple[float, float]:
    """(gap, scale): RHS - LHS of the parabolic Hardy inequality."""
    lhs = I.u2_over_r2
    rhs = I.u2 / ((N - 2) * t) + 4.0 / (N - 2) ** 2 * I.grad2
    return rhs - lhs, abs(rhs)


def hardy_anisotropic_gap(I: MemberIntegrals, t: float, N: int, mu1: float):
    lhs = (mu1 + (N - 2) ** 2 / 4.0) * I.u2_over_r2
    rhs = I.grad2 - I.a_u2_over_r2 + (N - 2) / (4.0 * t) * I.u2
    return rhs - lhs, abs(rhs) + abs(lhs)


def x2_bound_gap(I: MemberIntegrals, N: int):
    """Weight bound at t = 1: caller must build I at t = 1."""
    lhs = I.r2u2 / 16.0
    rhs = I.grad2 + N / 4.0 * I.u2
    return rhs - lhs, abs(rhs)


def hardy_parabolic(member, t: float, N: int, rules: RulePair | None = None) -> float:
    rules = rules or full_rules(N)
    I = _integrals_full(member, t, rules)
    gap, scale = hardy_parabolic_gap(I, t, N)
    _gate(gap, scale, "parabolic Hardy")
    return gap


def hardy_anisotropic(member, spec: ang.AngularSpectrum, t: float,
                      rules: RulePair | None = None) -> float:
    ok, margin = ang.check_positivity(spec)
    if not ok:
        raise ConfigurationError(f"positivity fails (margin {margin})")
    rules = rules or full_rules(spec.N)
    I = _integrals_full(member, t, rules, potential=spec.potential)
    gap, scale = hardy_anisotropic_gap(I, t, spec.N, float(spec.eigenvalues[0]))
    _gate(gap, scale, "anisotropic Hardy")
    return gap


def x2_bound(member, N: int, rules: RulePair | None = None) -> float:
    rules = rules or full_rules(N)
    I = _integrals_full(member, 1.0, rules)
    gap, scale = x2_bound_gap(I, N)
    _gate(gap, scale, "|x| weight bound")
    return gap


def _gate(gap: float, scale: float, name: str) -> None:
    if gap < -GAP_SLACK * scale:
        raise InvariantViolationError(
            f"{name} violated: gap {gap} vs slack {-GAP_SLACK * scale} "
            "(signals a quadrature bug)"
        )


def sobolev_ratio(member, s: float, t: float, N: int,
                  rule: ProductRule | ZonalRule | None = None,
                  verify_scaling: bool = True) -> float:
    """Weighted Sobolev quotient; also checks its exact t-scaling invariance."""
    if not 2.0 <= s <= 2.0 * N / (N - 2):
        raise ConfigurationError(f"s={s} outside [2, 2N/(N-2)]")
    if rule is None:
        rule = product_rule(N, 48, 14, 28)

    if isinstance(rule, ZonalRule):
        def ratio(mem, tt):
            R = math.sqrt(tt) * rule.r[:, None]
            C = rule.c[None, :]
            u = np.abs(mem.value_rc(R, C))
            g2 = mem.gradsq_rc(R, C)
            Gpow = (tt ** (-N / 2.0) * np.exp(-rule.r[:, None] ** 2 / 4.0)) ** (s / 2.0 - 1.0)
            num = rule.integrate(u**s * Gpow) ** (2.0 / s)
            ht = tt * rule.integrate(g2) + rule.integrate(u * u)
            return num / (tt ** (-(N / s) * (s - 2.0) / 2.0) * ht)

        rescale = lambda mem, tau: mem.rescaled(tau)
    else:
        def ratio(mem, tt):
            pts = math.sqrt(tt) * rule.points
            w = rule.weights
            u = np.abs(np.asarray(mem.value(pts), dtype=float))
            g = np.asarray(mem.grad(pts), dtype=float)
            # G^{s/2 - 1} at the scaled nodes; the base radius is t-invariant
            Gpow = (tt ** (-N / 2.0) * np.exp(-rule.radii**2 / 4.0)) ** (s / 2.0 - 1.0)
            num = (float(w @ (u**s * Gpow))) ** (2.0 / s)
            ht = tt * float(w @ np.sum(g * g, axis=-1)) + float(w @ (u * u))
            return num / (tt ** (-(N / s) * (s - 2.0) / 2.0) * ht)

        rescale = RescaledFunction

    val = ratio(member, t)
    if verify_scaling:
        tau = 2.7
        val2 = ratio(rescale(member, tau), t * tau)
        if abs(val2 - val) > 1e-10 * max(abs(val), 1e-300):
            raise InvariantViolationError(
                f"Sobolev quotient not t-scaling invariant: {val} vs {val2}"
            )
    return val


# -- family sweeps ------------------------------------------------------------

def sweep(
    inequality: str,
    family: TestFamily,
    t: float = 0.7,
    spec: ang.AngularSpectrum | None = None,
    basis: OUBasis | None = None,
    s_exponent: float = 2.5,
    n_r: int = 48,
) -> dict:
    """Run one inequality over a family; returns the report dictionary.

    Raises InvariantViolationError on any gap below the relative slack.
    N = 3 families use the full cubature; higher N uses the zonal
    reduction (bump members only).
    """
    N = family.N
    use_zonal = N != 3
    if use_zonal and family.kind != "bumps":
        raise ConfigurationError("zonal sweeps support bump families only")
    rules = zonal_rules(N, n_r, 28) if use_zonal else full_rules(N, n_r, 14, 28)
    lam = None
    mu1 = None
    if inequality == "hardy_anisotropic":
        if spec is None:
            raise ConfigurationError("anisotropic sweep needs an angular spectrum")
        ok, margin = ang.check_positivity(spec)
        if not ok:
            raise ConfigurationError(f"positivity fails (margin {margin})")
        mu1 = float(spec.eigenvalues[0])
        lam = spec.potential.value if spec.potential.is_constant else None
        if use_zonal and lam is None:
            raise ConfigurationError("anisotropic zonal sweeps need a constant potential")

    min_head = math.inf
    argmin = None
    ratios = []
    for i, member in enumerate(family.members(basis)):
        if inequality == "sobolev":
            ratios.append(sobolev_ratio(member, s_exponent, t, N, rules.plain,
                                        verify_scaling=(i % 50 == 0)))
            continue
        t_eff = 1.0 if inequality == "x2_bound" else t
        if use_zonal:
            I = _integrals_zonal(member, t_eff, rules,
                                 lam=lam if inequality == "hardy_anisotropic" else None)
        else:
            pot = spec.potential if inequality == "hardy_anisotropic" else None
            I = _integrals_full(member, t_eff, rules, potential=pot)
        if inequality == "hardy_parabolic":
            gap, scale = hardy_parabolic_gap(I, t_eff, N)
        elif inequality == "hardy_anisotropic":
            gap, scale = hardy_anisotropic_gap(I, t_eff, N, mu1)
        elif inequality == "x2_bound":
            gap, scale = x2_bound_gap(I, N)
        else:
            raise ConfigurationError(f"unknown inequality {inequality!r}")
        _gate(gap, scale, inequality)
        head = gap / scale if scale > 0 else math.inf
        if head < min_head:
            min_head, argmin = head, f"member #{i} ({member!r})"
    report = {
        "inequality": inequality,
        "family": family.kind,
        "N": N,
        "count": family.count,
        "seed": family.seed,
        "t": t,
    }
    if inequality == "sobolev":
        report["sup_ratio"] = float(np.max(ratios))
        report["mean_ratio"] = float(np.mean(ratios))
    else:
        report["min_relative_gap"] = min_head
        report["argmin"] = argmin
    return report


# -- coercivity quotients ------------------------------------------------------

def _coercivity(basis: OUBasis, K: int | None, shift: float) -> float:
    """Smallest generalized eigenvalue of
    (Gamma + (N-2)/4) v = q (E + shift) v over the first K modes."""
    K = basis.size if K is None else min(K, basis.size)
    gam = basis.gammas[:K]
    quarter = (basis.N - 2) / 4.0
    A = np.diag(gam + quarter)
    E = np.diag(gam) + potential_coupling_matrix(basis)[:K, :K]
    M = E + shift * np.eye(K)
    vals = generalized_eigh(A, M, eigvals_only=True)
    out = float(vals[0])
    ok, margin = ang.check_positivity(basis.spectrum)
    if ok and out <= 0.0:
        raise InvariantViolationError(
            f"coercivity estimate {out} non-positive under verified positivity: "
            "basis/quadrature inconsistency"
        )
    return out


def coercivity_infimum(basis: OUBasis, K: int | None = None) -> float:
    """Rayleigh-quotient infimum with the (N-2)/4-shifted denominator.

    Equals 1 for a = 0 (the quotient is identically 1); degenerates to 0
    as the potential approaches the Hardy constant.
    """
    return _coercivity(basis, K, (basis.N - 2) / 4.0)


def coercivity_bound_constant(basis: OUBasis, K: int | None = None) -> float:
    """Quotient with the plain H-norm denominator (E + ||.||^2).

    This is the constant entering the frequency lower bound
    N(t) >= C1 - (N-2)/4, tight for the unperturbed ground state.
    """
    return _coercivity(basis, K, 1.0)


def hardy_mode_consistency(basis: OUBasis) -> float:
    """Max over modes of the anisotropic-Hardy consistency defect.

    Every mode must satisfy
    int V~^2/|x|^2 G <= (mu_1 + (N-2)^2/4)^{-1} (B(V~,V~) + (N-2)/4);
    returns the worst (most positive) LHS - RHS, expected <= 0.
    """
    R = hardy_matrix(basis)
    mu1 = float(basis.spectrum.eigenvalues[0])
    coef = 1.0 / (mu1 + (basis.N - 2) ** 2 / 4.0)
    worst = -math.inf
    for k in range(basis.size):
        bound = coef * (basis.gammas[k] + (basis.N - 2) / 4.0)
        worst = max(worst, R[k, k] - bound)
    return worst
