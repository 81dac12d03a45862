import math

import numpy as np
import pytest

from hardyheat import almgren as al
from hardyheat import evolve as ev
from hardyheat import inequalities as ineq
from hardyheat.errors import InvariantViolationError


def _mode(basis, gamma):
    return next(i for i, m in enumerate(basis.modes) if abs(m.gamma - gamma) < 1e-12)


@pytest.fixture(scope="module")
def traj_pure(basis0, col0, tau_small):
    k = _mode(basis0, 0.5)
    c0 = ev.build_initial(basis0, [(k, 1.0)])
    return ev.integrate_backward(basis0, c0, tau_small, 0.005,
                                 ev.PerturbationSpec.none(), col0), k


@pytest.fixture(scope="module")
def traj_mix(basis0, col0):
    c0 = ev.build_initial(basis0, [(_mode(basis0, 0.0), 1.0),
                                   (_mode(basis0, 0.5), 1.0)])
    return ev.integrate_backward(basis0, c0, math.log(1e-4), 0.005,
                                 ev.PerturbationSpec.none(), col0)


@pytest.fixture(scope="module")
def traj_exp(basis0, col0, tau_small):
    k = _mode(basis0, 0.0)
    pert = ev.PerturbationSpec.linear_constant(0.1)
    c0 = ev.closed_form_reference(basis0, ("exp_linear", k, 0.1), 1.0)
    return ev.integrate_backward(basis0, c0, tau_small, 0.005, pert, col0)


def test_compute_HDN_pure_mode(traj_pure):
    traj, k = traj_pure
    # H = t^{2 gamma}, N = gamma for all t (change-of-variables oracle)
    for i in (0, traj.size // 3, traj.size - 1):
        H, D, Nv = al.compute_HDN(traj, i)
        t = math.exp(traj.tau[i])
        np.testing.assert_allclose(H, t**1.0, rtol=1e-13)
        np.testing.assert_allclose(Nv, 0.5, atol=1e-13)


def test_compute_HDN_mixture(traj_mix):
    # orthogonality algebra: N(t) = 0.5 t / (1 + t); N(1) = 0.25
    i1 = traj_mix.row_at_t(1.0)
    _, _, Nv = al.compute_HDN(traj_mix, i1)
    np.testing.assert_allclose(Nv, 0.25, rtol=1e-13)
    tr = al.frequency_trace(traj_mix)
    np.testing.assert_allclose(tr.N, 0.5 * tr.t / (1.0 + tr.t), atol=1e-8)


def test_compute_HDN_exp_linear(traj_exp):
    # H = e^{-2 eps t} t^{2 gamma}, N = gamma - eps t
    tr = al.frequency_trace(traj_exp)
    np.testing.assert_allclose(tr.N, -0.1 * tr.t, atol=1e-10)
    i = traj_exp.row_at_t(0.5)
    t = math.exp(traj_exp.tau[i])
    _, _, Nv = al.compute_HDN(traj_exp, i)
    np.testing.assert_allclose(Nv, -0.1 * t, atol=1e-12)
    np.testing.assert_allclose(-0.1 * 0.5, -0.05)


def test_frequency_trace_fits(traj_pure, traj_mix, traj_exp, basis0, col0, tau_small):
    tr_p = al.frequency_trace(traj_pure[0])
    assert tr_p.gamma_hat == 0.5 and abs(tr_p.fit_C) < 1e-10
    tr_m = al.frequency_trace(traj_mix)
    assert abs(tr_m.gamma_raw) < 1e-6 and tr_m.gamma_hat == 0.0
    assert abs(tr_m.delta_hat - 1.0) < 0.05  # next-gap exponent 2(g2 - g1) = 1
    # exp_linear at gamma = 0.5: gamma_hat = 0.5, delta ~ 1
    k = _mode(basis0, 0.5)
    pert = ev.PerturbationSpec.linear_constant(0.1)
    c0 = ev.closed_form_reference(basis0, ("exp_linear", k, 0.1), 1.0)
    traj = ev.integrate_backward(basis0, c0, math.log(1e-4), 0.005, pert, col0)
    tr = al.frequency_trace(traj)
    assert tr.gamma_hat == 0.5 and abs(tr.gamma_raw - 0.5) < 1e-6
    assert abs(tr.delta_hat - 1.0) < 0.05


def test_check_Hprime_pure_and_exp(traj_pure, basis0, col0):
    # gamma = 1/2 makes the nonuniform central stencil exact
    tr = al.frequency_trace(traj_pure[0])
    assert al.check_Hprime(tr) < 1e-8
    # exp_linear needs a fine step for the 1e-8 target
    k = _mode(basis0, 0.0)
    pert = ev.PerturbationSpec.linear_constant(0.1)
    c0 = ev.closed_form_reference(basis0, ("exp_linear", k, 0.1), 1.0)
    traj = ev.integrate_backward(basis0, c0, math.log(0.5), 0.00025, pert, col0,
                                 verify_halving=False)
    assert al.check_Hprime(al.frequency_trace(traj)) < 1e-8


def test_check_Hprime_second_order(basis0, col0):
    # residual divides by ~4 under dtau halving
    k = _mode(basis0, 0.0)
    pert = ev.PerturbationSpec.linear_constant(0.2)
    c0 = ev.closed_form_reference(basis0, ("exp_linear", k, 0.2), 1.0)
    resid = {}
    for dtau in (0.008, 0.004):
        traj = ev.integrate_backward(basis0, c0, math.log(0.25), dtau, pert, col0,
                                     verify_halving=False)
        resid[dtau] = al.check_Hprime(al.frequency_trace(traj))
    order = math.log2(resid[0.008] / resid[0.004])
    assert abs(order - 2.0) < 0.1


def test_scaling_identity(traj_mix, traj_pure, traj_exp):
    # mixture: N_lambda(1) = N(0.25) = 0.1
    assert al.check_scaling(traj_mix, 0.5) < 1e-12
    i = traj_mix.row_at_t(0.25)
    t = math.exp(traj_mix.tau[i])
    _, _, Nv = al.compute_HDN(traj_mix, i)
    np.testing.assert_allclose(Nv, 0.5 * t / (1.0 + t), rtol=1e-12)
    np.testing.assert_allclose(0.5 * 0.25 / 1.25, 0.1)  # the frozen value
    assert al.check_scaling(traj_pure[0], 0.3) < 1e-14
    # exp_linear: N(0.09) = gamma - 0.09 eps
    assert al.check_scaling(traj_exp, 0.3) < 1e-12
    i = traj_exp.row_at_t(0.09)
    t = math.exp(traj_exp.tau[i])
    np.testing.assert_allclose(al.compute_HDN(traj_exp, i)[2], -0.1 * t, atol=1e-12)


def test_nu1_values(traj_pure, traj_exp, traj_mix):
    traj, _ = traj_pure
    assert abs(al.nu1(traj, traj.size // 2)) < 1e-10      # Schwarz equality
    assert abs(al.nu1(traj_exp, traj_exp.size // 2)) < 1e-10  # v_t parallel to v
    i1 = traj_mix.row_at_t(1.0)
    np.testing.assert_allclose(al.nu1(traj_mix, i1), 0.125, rtol=1e-12)


def test_nu1_spectral_formula(traj_mix):
    # spectral algebra oracle: 2t [ (sum g^2 c^2)(sum c^2) - (sum g c^2)^2 ] / H^2
    i = traj_mix.row_at_t(0.5)
    c = traj_mix.coeffs[i]
    g = traj_mix.basis.gammas
    t = math.exp(traj_mix.tau[i])
    H = c @ c
    expect = 2.0 * (g**2 * c**2).sum() * H - 2.0 * ((g * c**2).sum()) ** 2
    expect /= t * H * H  # c' = gamma c / t, so one t cancels
    np.testing.assert_allclose(al.nu1(traj_mix, i), expect, rtol=1e-11)


def test_check_H_powerlaw(traj_pure, traj_mix, traj_exp):
    tr = al.frequency_trace(traj_pure[0])
    K1, pos = al.check_H_powerlaw(tr, 0.5)
    np.testing.assert_allclose(K1, 1.0, rtol=1e-12)
    assert pos
    tr_m = al.frequency_trace(traj_mix)
    K1m, posm = al.check_H_powerlaw(tr_m, 0.0)
    np.testing.assert_allclose(K1m, 2.0, rtol=1e-10)  # bounded above by sum c^2
    assert posm
    tr_e = al.frequency_trace(traj_exp)
    K1e, pose = al.check_H_powerlaw(tr_e, 0.0)
    ratio = tr_e.H / tr_e.t**0.0
    assert pose and np.all(ratio <= 1.0 + 1e-12) and np.all(ratio >= math.exp(-0.2) - 1e-12)


def test_run_diagnostics_unperturbed(traj_mix, basis0):
    c1 = ineq.coercivity_bound_constant(basis0)
    report = al.run_diagnostics(traj_mix, al.frequency_trace(traj_mix),
                                coercivity_constant=c1)
    assert report["N_monotone"] and report["gamma_hat"] == 0.0
    np.testing.assert_allclose(report["coercivity_bound"], 0.0, atol=1e-12)


def test_run_diagnostics_perturbed(traj_exp, basis0):
    c1 = ineq.coercivity_bound_constant(basis0)
    report = al.run_diagnostics(traj_exp, al.frequency_trace(traj_exp),
                                coercivity_constant=c1)
    # forcing allowance ~ max |t <hv, v>| / H = eps * t_max = 0.1
    np.testing.assert_allclose(report["forcing_allowance"], 0.1, rtol=1e-10)


def test_monotonicity_violation_detection(traj_exp):
    # the perturbed trace is decreasing; asking for the unperturbed
    # invariant must fail loudly
    tr = al.frequency_trace(traj_exp)
    fake = ev.PerturbationSpec.none()
    real = traj_exp.perturbation
    traj_exp.perturbation = fake
    try:
        with pytest.raises(InvariantViolationError):
            al.run_diagnostics(traj_exp, tr)
    finally:
        traj_exp.perturbation = real


def test_trace_csv_shape(traj_mix):
    tr = al.frequency_trace(traj_mix)
    assert len(tr.t) == traj_mix.size
    assert np.all(np.diff(tr.t) > 0)
    assert np.all(tr.H > 0)
    d = tr.to_jsonable()
    assert "gamma_hat" in d and "delta_hat" in d and "fit_residual" in d
