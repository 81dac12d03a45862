"""Frequency function N(t) = t D(t) / H(t) and its t -> 0 limit.

Spectral identities make the trace cheap: with v(., t) = sum c_k V_tilde_k,

    H(t)  = sum c_k^2,
    t D(t) = sum gamma_k c_k^2 - t <f, v>_L,
    nu_1  = (2t/H^2) [ ||v_t||^2 H - <v_t, v>^2 ]  >= 0   (Schwarz),

and the scaling law N_lambda(t) = N(lambda^2 t) holds exactly.  The limit
gamma is estimated by fitting N(t) ~ gamma + C t^delta over the smallest
stored decade and snapped (never silently) to the nearest eigenvalue.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import ConfigurationError, InvariantViolationError
from .evolve import Trajectory

H_FLOOR = 1e-300
NU1_SLACK = -1e-10
FIT_RESIDUAL_FLAG = 1e-3
SNAP_TOL = 1e-6
MONOTONE_SLACK = 1e-10


def compute_HDN(traj: Trajectory, i: int):
    """(H, D, N) at stored row i."""
    c = traj.coeffs[i]
    t = math.exp(traj.tau[i])
    H = float(c @ c)
    if H <= H_FLOOR:
        raise InvariantViolationError(f"H underflow at row {i} (t={t})")
    tD = float(traj.basis.gammas @ (c * c)) - t * traj.pairing(i)
    return H, tD / t, tD / H


def nu1(traj: Trajectory, i: int) -> float:
    """Schwarz gap 2t [ ||v_t||^2 H - <v_t, v>^2 ] / H^2 at row i.

    Computed from the exact rhs (no differencing) in the projection form
    ||v_t - (<v_t, v>/H) v||^2, which keeps the Gram determinant
    non-negative instead of cancelling two large products.
    """
    c = traj.coeffs[i]
    cp = traj.coefficient_derivatives(i)
    t = math.exp(traj.tau[i])
    H = float(c @ c)
    perp = cp - (float(cp @ c) / H) * c
    val = 2.0 * t * float(perp @ perp) / H
    if val < NU1_SLACK:  # unreachable for the projection form; kept as the gate
        raise InvariantViolationError(
            f"nu_1 = {val} < {NU1_SLACK} at row {i}: Schwarz gap violated"
        )
    return val


@dataclass
class FrequencyTrace:
    """Rows (t, H, D, N, nu1) in ascending t, plus the fitted limit.

    ``gamma_raw`` is the fit value; ``gamma_hat`` equals the nearest
    eigenvalue when within SNAP_TOL (``snapped`` True), else the raw value
    with ``warnings`` noting the mismatch.
    """

    t: np.ndarray
    H: np.ndarray
    D: np.ndarray
    N: np.ndarray
    nu1: np.ndarray
    gamma_raw: float
    gamma_hat: float
    snapped: bool
    delta_hat: float
    fit_C: float
    fit_window: tuple
    fit_residual: float
    gamma_uncertainty: float
    delta_theory: float
    warnings: list = field(default_factory=list)

    def to_jsonable(self) -> dict:
        return {
            "gamma_hat": self.gamma_hat,
            "gamma_raw": self.gamma_raw,
            "snapped": self.snapped,
            "delta_hat": self.delta_hat,
            "fit_C": self.fit_C,
            "fit_window": list(self.fit_window),
            "fit_residual": self.fit_residual,
            "gamma_uncertainty": self.gamma_uncertainty,
            "delta_theory": None if math.isinf(self.delta_theory) else self.delta_theory,
            "warnings": list(self.warnings),
        }


def _fit_limit(t: np.ndarray, Nval: np.ndarray):
    """Fit N(t) ~ gamma + C t^delta; returns (gamma, C, delta, residual)."""
    if np.max(Nval) - np.min(Nval) < 1e-13:
        return float(Nval[0]), 0.0, float("nan"), 0.0
    g0 = float(Nval[0])
    c0 = (Nval[-1] - g0) / t[-1] if t[-1] > 0 else 0.0

    def model(p):
        g, C, d = p
        return g + C * t**d - Nval

    sol = least_squares(
        model, x0=[g0, c0, 1.0],
        bounds=([-np.inf, -np.inf, 0.05], [np.inf, np.inf, 4.0]),
        xtol=1e-15, ftol=1e-15, gtol=1e-15,
    )
    resid = float(np.sqrt(np.mean(sol.fun**2)))
    return float(sol.x[0]), float(sol.x[1]), float(sol.x[2]), resid


def frequency_trace(
    traj: Trajectory,
    fit_window_decades: float = 1.0,
    r_exponent: float = math.inf,
) -> FrequencyTrace:
    """Full (t, H, D, N, nu1) trace with the fitted t -> 0 limit.

    The fit window is the smallest stored ``fit_window_decades`` decades of
    t; a fit residual above 1e-3 is flagged and gamma_hat falls back to
    N at the smallest t.
    """
    warnings = []
    rows = list(range(traj.size - 1, -1, -1))  # ascending t
    # underflow guard: truncate the trace below the smallest usable row
    usable = [i for i in rows if float(traj.coeffs[i] @ traj.coeffs[i]) > H_FLOOR]
    if len(usable) < len(rows):
        warnings.append(
            f"trace truncated: H underflowed on {len(rows) - len(usable)} rows"
        )
        rows = usable
    t = np.array([math.exp(traj.tau[i]) for i in rows])
    H = np.empty_like(t)
    D = np.empty_like(t)
    Nv = np.empty_like(t)
    n1 = np.empty_like(t)
    for out_idx, i in enumerate(rows):
        Hi, Di, Ni = compute_HDN(traj, i)
        H[out_idx], D[out_idx], Nv[out_idx] = Hi, Di, Ni
        n1[out_idx] = nu1(traj, i)
    if np.any(H <= 0.0):
        raise InvariantViolationError("H must stay strictly positive")

    window = t <= t[0] * 10.0**fit_window_decades
    gamma_raw, fit_C, delta_hat, fit_resid = _fit_limit(t[window], Nv[window])
    # window-halving estimate of the fit's own bias in gamma
    half = t <= t[0] * 10.0 ** (fit_window_decades / 2.0)
    if np.count_nonzero(half) >= 8:
        gamma_half, _, _, _ = _fit_limit(t[half], Nv[half])
        gamma_unc = abs(gamma_raw - gamma_half)
    else:
        gamma_unc = float("inf")
    if fit_resid > FIT_RESIDUAL_FLAG:
        warnings.append(
            f"limit fit residual {fit_resid:.3e} > {FIT_RESIDUAL_FLAG}; "
            "gamma_hat falls back to N at the smallest t"
        )
        gamma_raw = float(Nv[0])

    gammas = np.unique(np.round(traj.basis.gammas, 12))
    nearest = float(gammas[np.argmin(np.abs(gammas - gamma_raw))])
    snapped = abs(nearest - gamma_raw) <= SNAP_TOL
    if snapped:
        gamma_hat = nearest
    else:
        gamma_hat = gamma_raw
        warnings.append(
            f"gamma_raw = {gamma_raw} is {abs(nearest - gamma_raw):.3e} from the "
            "nearest eigenvalue; reported unsnapped"
        )
    return FrequencyTrace(
        t, H, D, Nv, n1, gamma_raw, gamma_hat, snapped, delta_hat, fit_C,
        (float(t[window][0]), float(t[window][-1])), fit_resid, gamma_unc,
        traj.perturbation.delta_theory(traj.basis.N, r_exponent), warnings,
    )


def check_Hprime(trace: FrequencyTrace) -> float:
    """Max relative residual of the central difference of H against 2D.

    Three-point stencil on the nonuniform t grid; O(dtau^2).
    """
    if len(trace.t) < 3:
        raise ConfigurationError("need at least 3 rows for the H' check")
    t, H, D = trace.t, trace.H, trace.D
    Hp = (H[2:] - H[:-2]) / (t[2:] - t[:-2])
    resid = np.abs(Hp - 2.0 * D[1:-1]) / (np.abs(2.0 * D[1:-1]) + 1e-30)
    return float(np.max(resid))


def check_scaling(traj: Trajectory, lam: float, max_rows: int = 128) -> float:
    """Max |N_lambda(t) - N(lambda^2 t)| over stored rows with lambda^2 t <= t_max.

    The left side is assembled through the rescaled-equation plumbing
    (coefficients at lambda^2 t, forcing lambda^2 f(lambda x, lambda^2 t, .))
    rather than read from the trace.  At most ``max_rows`` rows, spread
    uniformly over the admissible range, are checked.
    """
    if not 0.0 < lam < 1.0:
        raise ConfigurationError("lambda must lie in (0, 1)")
    from .evolve import forcing_coefficients_scaled

    t_max = math.exp(traj.tau[0])
    admissible = [i for i in range(traj.size)
                  if math.exp(traj.tau[i]) <= lam * lam * t_max * (1.0 + 1e-12)]
    stride = max(1, len(admissible) // max_rows)
    worst = 0.0
    for i in admissible[::stride]:
        s = math.exp(traj.tau[i])
        c = traj.coeffs[i]
        H = float(c @ c)
        t_resc = s / lam**2
        F = forcing_coefficients_scaled(
            lam * math.sqrt(t_resc), lam**2 * t_resc, c,
            traj.perturbation, traj.collocation,
        )
        tD_l = float(traj.basis.gammas @ (c * c)) - t_resc * lam**2 * float(F @ c)
        N_l = tD_l / H
        _, _, N_direct = compute_HDN(traj, i)
        worst = max(worst, abs(N_l - N_direct))
    return worst


def check_H_powerlaw(trace: FrequencyTrace, gamma_hat: float):
    """(K1_hat, liminf_positive): H <= K1 t^{2 gamma} and strict positivity.

    K1_hat is the max of H / t^{2 gamma_hat}; the liminf check asks the
    smallest-decade minimum of the same ratio to exceed 1e-8 K1_hat.
    """
    ratio = trace.H / trace.t ** (2.0 * gamma_hat)
    K1_hat = float(np.max(ratio))
    window = trace.t <= trace.t[0] * 10.0
    liminf_positive = bool(np.min(ratio[window]) > 1e-8 * K1_hat)
    return K1_hat, liminf_positive


def empirical_forcing_allowance(traj: Trajectory) -> float:
    """max_t |t <f, v>| / H: the forcing's share of the frequency bound."""
    worst = 0.0
    for i in range(traj.size):
        c = traj.coeffs[i]
        H = float(c @ c)
        t = math.exp(traj.tau[i])
        worst = max(worst, abs(t * traj.pairing(i)) / H)
    return worst


def run_diagnostics(
    traj: Trajectory,
    trace: FrequencyTrace,
    coercivity_constant: float | None = None,
) -> dict:
    """Cross-checks asserted on every trace; raises on violations.

    - nu1 >= -1e-10 rowwise (already enforced during trace assembly);
    - unperturbed monotonicity of N;
    - N(t) >= C1_eff - (N-2)/4 with C1_eff = C1 - empirical forcing share;
    - t^{-2 C1_eff + (N-2)/2} H(t) nondecreasing;
    - gamma_hat within snap distance of the spectrum for converged runs.
    """
    report = {"nu1_min": float(np.min(trace.nu1))}
    N_dim = traj.basis.N
    unperturbed = traj.perturbation.kind == "none"
    if unperturbed:
        steps = np.diff(trace.N)
        if np.any(steps < -MONOTONE_SLACK):
            raise InvariantViolationError(
                f"unperturbed frequency decreased by {-steps.min():.3e}"
            )
        report["N_monotone"] = True
    if coercivity_constant is not None:
        allowance = 0.0 if unperturbed else empirical_forcing_allowance(traj)
        c1_eff = coercivity_constant - allowance
        bound = c1_eff - (N_dim - 2) / 4.0
        if np.any(trace.N < bound - 1e-10):
            raise InvariantViolationError(
                f"N(t) dropped below the coercivity bound {bound}"
            )
        mono = trace.t ** (-2.0 * c1_eff + (N_dim - 2) / 2.0) * trace.H
        if np.any(np.diff(mono) < -MONOTONE_SLACK * np.abs(mono[:-1])):
            raise InvariantViolationError(
                "t^{-2 C1 + (N-2)/2} H(t) failed to be nondecreasing"
            )
        report["coercivity_bound"] = bound
        report["forcing_allowance"] = allowance
    converged = (
        trace.fit_residual <= FIT_RESIDUAL_FLAG
        and trace.gamma_uncertainty <= SNAP_TOL / 2.0
    )
    if converged and not trace.snapped:
        raise InvariantViolationError(
            f"converged run with gamma_raw = {trace.gamma_raw} not within "
            f"{SNAP_TOL} of the spectrum"
        )
    report["gamma_hat"] = trace.gamma_hat
    K1_hat, liminf_pos = check_H_powerlaw(trace, trace.gamma_hat)
    if not liminf_pos:
        raise InvariantViolationError("liminf t^{-2 gamma} H(t) not strictly positive")
    report["K1_hat"] = K1_hat
    return report
