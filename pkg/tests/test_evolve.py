import math

import numpy as np
import pytest

from hardyheat import evolve as ev
from hardyheat import ou_basis as ou
from hardyheat.errors import AccuracyError, ConfigurationError


def test_build_initial_mode_list(basis0):
    c = ev.build_initial(basis0, [(3, 1.0)])
    assert c[3] == 1.0 and np.count_nonzero(c) == 1
    c2 = ev.build_initial(basis0, [(0, 1.0), (2, 2.0)])
    assert c2[0] == 1.0 and c2[2] == 2.0


def test_build_initial_projection_vs_doubled_oracle(basis0, col0):
    # per-coefficient agreement with a doubled-resolution cubature oracle
    v = lambda x: np.exp(-np.sum(x * x, axis=1) / 8.0)
    c = col0.project(v(col0.points))
    col2 = ou.build_collocation(basis0, n_r=96)
    c_oracle = col2.project(v(col2.points))
    np.testing.assert_allclose(c, c_oracle, atol=1e-11)
    # a gentler Gaussian clears the residual gate on a gamma <= 4 basis
    import hardyheat.angular as ang

    spec = ang.solve_angular(ang.AngularPotential.constant(0.0), K=100, N=3)
    basis = ou.enumerate_modes(spec, 4.0)
    col = ou.build_collocation(basis, n_r=48, n_polar=20, n_az=34)
    v2 = lambda x: np.exp(-np.sum(x * x, axis=1) / 20.0)
    c2 = ev.build_initial(basis, v2, col)
    col2b = ou.build_collocation(basis, n_r=96, n_polar=20, n_az=34)
    np.testing.assert_allclose(c2, col2b.project(v2(col2b.points)), atol=1e-11)


def test_build_initial_under_resolved_error(basis0, col0):
    # the gamma <= 2 basis leaves this datum a ~5% residual: must refuse
    v = lambda x: np.exp(-np.sum(x * x, axis=1) / 8.0)
    with pytest.raises(AccuracyError):
        ev.build_initial(basis0, v, col0)


def test_build_initial_orthonormal_combination(basis0, col0):
    vals = col0.Phi[1] + 2.0 * col0.Phi[4]
    c3 = col0.project(vals)
    expect = np.zeros(basis0.size)
    expect[1], expect[4] = 1.0, 2.0
    np.testing.assert_allclose(c3, expect, atol=1e-10)


def test_rhs_unperturbed_diagonal(basis0, col0):
    rng = np.random.default_rng(0)
    c = rng.normal(size=basis0.size)
    out = ev.rhs(-0.3, c, ev.PerturbationSpec.none(), basis0, col0)
    np.testing.assert_allclose(out, basis0.gammas * c, rtol=1e-14)


def test_rhs_constant_h_identity_coupling(basis0, col0):
    # <eps v, V_k> = eps c_k by orthonormality
    eps, tau = 0.1, -0.7
    rng = np.random.default_rng(1)
    c = rng.normal(size=basis0.size)
    out = ev.rhs(tau, c, ev.PerturbationSpec.linear_constant(eps), basis0, col0)
    expect = basis0.gammas * c - math.exp(tau) * eps * c
    np.testing.assert_allclose(out, expect, atol=1e-12)


def test_rhs_semilinear_parity(basis0, col0):
    # constant-v nonlinearity projects only onto even (l even) modes
    pert = ev.PerturbationSpec.semilinear(0.5, 2.0, 3)
    c = np.zeros(basis0.size)
    c[0] = 1.0
    F = ev.forcing_coefficients(0.0, c, pert, col0)
    odd = [k for k, m in enumerate(basis0.modes) if m.degree % 2 == 1]
    assert np.max(np.abs(F[odd])) < 1e-13
    assert abs(F[0]) > 1e-3


def test_pure_mode_power_law(basis0, col0, tau_small):
    k = basis0.mode_index(1, 0)  # use gamma = 0.5 mode below
    k05 = next(i for i, m in enumerate(basis0.modes) if abs(m.gamma - 0.5) < 1e-12)
    c0 = ev.build_initial(basis0, [(k05, 1.0)])
    traj = ev.integrate_backward(basis0, c0, tau_small, 0.005,
                                 ev.PerturbationSpec.none(), col0)
    i = traj.row_at_t(0.25)
    t = math.exp(traj.tau[i])
    np.testing.assert_allclose(traj.coeffs[i, k05], t**0.5, rtol=1e-14)
    # off-diagonal leakage is exactly zero
    others = np.delete(np.arange(basis0.size), k05)
    assert np.max(np.abs(traj.coeffs[:, others])) == 0.0


def test_exp_linear_closed_form(basis0, col0, tau_small):
    # c(t) = e^{-0.1 t}, c(0.5) ~ 0.951229 (= e^{-0.05})
    k0 = basis0.mode_index(1, 0)
    pert = ev.PerturbationSpec.linear_constant(0.1)
    c0 = ev.closed_form_reference(basis0, ("exp_linear", k0, 0.1), 1.0)
    traj = ev.integrate_backward(basis0, c0, tau_small, 0.005, pert, col0)
    i = traj.row_at_t(0.5)
    t = math.exp(traj.tau[i])
    np.testing.assert_allclose(traj.coeffs[i, k0], math.exp(-0.1 * t), atol=1e-10)
    np.testing.assert_allclose(math.exp(-0.05), 0.951229424500714, rtol=1e-14)
    # sup error against the family over the whole trace
    sup = max(
        np.max(np.abs(traj.coeffs[i] - ev.closed_form_reference(
            basis0, ("exp_linear", k0, 0.1), math.exp(traj.tau[i]))))
        for i in range(traj.size)
    )
    assert sup < 1e-8


def test_mixture_diagonal_flow(basis0, col0, tau_small):
    k0 = basis0.mode_index(1, 0)
    k05 = next(i for i, m in enumerate(basis0.modes) if abs(m.gamma - 0.5) < 1e-12)
    c0 = ev.build_initial(basis0, [(k0, 1.0), (k05, 1.0)])
    traj = ev.integrate_backward(basis0, c0, tau_small, 0.005,
                                 ev.PerturbationSpec.none(), col0)
    for i in (0, traj.size // 2, traj.size - 1):
        t = math.exp(traj.tau[i])
        np.testing.assert_allclose(traj.coeffs[i, k0], 1.0, rtol=1e-14)
        np.testing.assert_allclose(traj.coeffs[i, k05], math.sqrt(t), rtol=1e-13)


def test_closed_form_reference_values(basis0):
    k0 = basis0.mode_index(1, 0)
    k1 = basis0.mode_index(1, 1)  # gamma = 1
    assert ev.closed_form_reference(basis0, ("pure", k0), 1.0)[k0] == 1.0
    c = ev.closed_form_reference(basis0, ("mixture", [(k0, 2.0), (k1, 3.0)]), 0.1)
    np.testing.assert_allclose([c[k0], c[k1]], [2.0, 0.3], rtol=1e-14)
    k05 = next(i for i, m in enumerate(basis0.modes) if abs(m.gamma - 0.5) < 1e-12)
    val = ev.closed_form_reference(basis0, ("exp_linear", k05, 0.2), 0.25)[k05]
    np.testing.assert_allclose(val, math.exp(-0.05) * 0.5, rtol=1e-14)
    np.testing.assert_allclose(val, 0.475614712250357, rtol=1e-14)


def test_exp_linear_against_independent_rk4():
    # independent scalar RK4 at dtau ~ 1e-4 confirms the family
    gamma, eps = 0.5, 0.2
    f = lambda tau, c: (gamma - eps * math.exp(tau)) * c
    c = math.exp(-eps)  # value at t = 1
    tau_end = math.log(0.25)
    n = round(-tau_end / 1e-4)
    h = tau_end / n
    tau = 0.0
    for _ in range(n):
        k1 = f(tau, c)
        k2 = f(tau + h / 2, c + h / 2 * k1)
        k3 = f(tau + h / 2, c + h / 2 * k2)
        k4 = f(tau + h, c + h * k3)
        c += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        tau += h
    np.testing.assert_allclose(c, math.exp(-eps * 0.25) * 0.25**gamma, atol=1e-12)


def test_linearity_of_linear_flow(basis0, col0):
    pert = ev.PerturbationSpec.linear_bounded(0.1)
    k0, k1 = 0, 2
    tau_min = math.log(0.05)
    run = lambda c0: ev.integrate_backward(basis0, c0, tau_min, 0.01, pert, col0,
                                           verify_halving=False).coeffs
    e0, e1 = np.zeros(basis0.size), np.zeros(basis0.size)
    e0[k0], e1[k1] = 1.0, 1.0
    combo = run(2.0 * e0 + 3.0 * e1)
    np.testing.assert_allclose(combo, 2.0 * run(e0) + 3.0 * run(e1), atol=1e-11)


def test_backward_stability_nonincreasing(basis0, col0, tau_small):
    rng = np.random.default_rng(2)
    c0 = rng.normal(size=basis0.size)
    traj = ev.integrate_backward(basis0, c0, tau_small, 0.005,
                                 ev.PerturbationSpec.none(), col0)
    mags = np.abs(traj.coeffs)  # tau descending: |c_k| must not increase
    assert np.all(np.diff(mags, axis=0) <= 1e-15)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_step_halving_gate(basis0, col0):
    # a violently stiff semilinear forcing cannot pass the 1e-8 agreement
    pert = ev.PerturbationSpec.semilinear(40.0, 3.0, 3)
    c0 = np.zeros(basis0.size)
    c0[0] = 2.0
    with pytest.raises(AccuracyError):
        ev.integrate_backward(basis0, c0, math.log(0.05), 0.01, pert, col0)


def test_parameter_validation(basis0, col0):
    c0 = np.zeros(basis0.size)
    c0[0] = 1.0
    with pytest.raises(ConfigurationError):
        ev.integrate_backward(basis0, c0, math.log(0.5), 0.02,
                              ev.PerturbationSpec.none(), col0)
    with pytest.raises(ConfigurationError):
        ev.integrate_backward(basis0, c0, math.log(1e-7), 0.01,
                              ev.PerturbationSpec.none(), col0)
    with pytest.raises(ConfigurationError):
        ev.rhs(0.5, c0, ev.PerturbationSpec.none(), basis0, col0)
    with pytest.raises(ConfigurationError):
        ev.PerturbationSpec.linear(lambda x, t: x[:, 0], 1.0, 2.5)
    with pytest.raises(ConfigurationError):
        ev.PerturbationSpec.semilinear(0.1, 6.0, 3)


def test_check_h_admissible(basis0, col0):
    ok, fails = ev.check_h_admissible(lambda x, t: np.full(len(x), 0.3), 0.3, 1.0, col0)
    assert ok and not fails
    h_inv = lambda x, t: 1.0 / np.linalg.norm(x, axis=1)
    ok, _ = ev.check_h_admissible(h_inv, 1.0, 1.0, col0)
    assert ok  # exact form of the bound
    h_inv2 = lambda x, t: 1.0 / np.sum(x * x, axis=1)
    ok, fails = ev.check_h_admissible(h_inv2, 1.0, 1.5, col0)
    assert not ok and fails  # |x|^{-2} beats the bound at small nodes


def test_truncation_flag(basis0, col0):
    # strong coupling pushing mass into the last mode flags the run
    pert = ev.PerturbationSpec.linear(
        lambda x, t: 0.4 * x[:, 0] ** 2 / (1.0 + np.sum(x * x, axis=1)),
        0.4, 1.0, label="test",
    )
    ok, _ = ev.check_h_admissible(pert.h, pert.C_h, pert.eps_h, col0)
    assert ok
    pert = pert.verified()
    c0 = np.zeros(basis0.size)
    c0[0] = 1.0
    traj = ev.integrate_backward(basis0, c0, math.log(1e-3), 0.005, pert, col0)
    assert "truncation_flag" in traj.metadata or traj.truncation_ratio() <= 1e-6


def test_metadata(basis0, col0, tau_small):
    c0 = np.zeros(basis0.size)
    c0[0] = 1.0
    pert = ev.PerturbationSpec.semilinear(0.05, 2.0, 3)
    traj = ev.integrate_backward(basis0, c0, tau_small, 0.01, pert, col0)
    assert traj.metadata["hypotheses_verified"] is False
    assert traj.metadata["basis_hash"] == basis0.content_hash()


def test_semilinear_end_to_end(spec0):
    # case-II pipeline: snap, beta route agreement, exact scaling identity
    from hardyheat import almgren as al
    from hardyheat import asymptotics as asym
    from hardyheat import ou_basis as ou

    basis0 = ou.enumerate_modes(spec0, 1.0)
    col0 = ou.build_collocation(basis0, n_r=48)
    pert = ev.PerturbationSpec.semilinear(0.05, 2.0, 3)
    assert pert.delta_tilde(3) == 1.0 and pert.delta_theory(3) == 0.5
    c0 = ev.build_initial(basis0, [(0, 1.0)])
    traj = ev.integrate_backward(basis0, c0, math.log(1e-5), 0.01, pert, col0)
    tr = al.frequency_trace(traj)
    assert tr.snapped and tr.gamma_hat == 0.0
    _, J0 = ou.multiplicity(0.0, basis0.spectrum)
    spread, table = asym.lambda_independence(traj, [0.1, 0.2, 0.3], J0, 0.0)
    assert spread < 1e-8
    direct = asym.beta_direct(traj, None, J0, 0.0)
    assert abs(table.beta[(0, 1)] - direct[(0, 1)][2]) < 1e-6
    assert al.check_scaling(traj, 0.5) < 1e-12
