import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from nmqubit.core import partial_trace_over_tq, state_of, unvec, vec
from nmqubit.dynamics import (
    IntegrationError,
    IntegratorSettings,
    MasterEquationKind,
    exact_propagate,
    initial_state,
    liouvillian,
    propagate,
    propagate_many,
    rhs,
    sample_times,
    stationary_state,
    tq_gibbs,
)
from nmqubit.model import ModelParams, ModelWarning, build_hs, gibbs_state

KINDS = [MasterEquationKind.LOCAL, MasterEquationKind.NONLOCAL]


@pytest.fixture
def params():
    return ModelParams(omega1=1.1, omega2=1.0, J=0.08, kappa_bar=0.02, beta=2.0)


@pytest.mark.parametrize("kind", KINDS)
def test_superoperator_matches_matrix_rhs(params, kind, rng):
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = g @ g.conj().T
    rho /= np.trace(rho)
    assert np.allclose(unvec(liouvillian(params, kind) @ vec(rho)), rhs(params, kind, 0.0, rho), atol=1e-14)


@pytest.mark.parametrize("kind", KINDS)
def test_propagation_matches_exponential(params, kind):
    rho0 = initial_state(state_of([0.6, -0.3, 0.5]), params)
    traj = propagate(params, kind, rho0, 40.0, IntegratorSettings(sample_dt=0.5))
    for t, rho in zip(traj.times[::16], traj.states[::16]):
        assert np.abs(rho - exact_propagate(params, kind, rho0, t)).max() < 1e-8
    assert traj.diagnostics["within_tolerance"]


def test_driven_propagation_matches_direct_rhs_integration(params):
    p = params.replace(lambda0=0.03, omega_d=0.9)
    rho0 = initial_state(state_of([0, 0, -1]), p)
    traj = propagate(p, "local", rho0, 20.0, IntegratorSettings(sample_dt=0.25))
    # independent route: integrate the matrix form of the equation
    sol = solve_ivp(
        lambda t, y: rhs(p, "local", t, y.reshape(4, 4)).reshape(-1),
        (0, 20.0), rho0.reshape(-1), method="RK45", t_eval=traj.times, rtol=1e-11, atol=1e-13,
    )
    ref = sol.y.T.reshape(-1, 4, 4)
    assert np.abs(ref - traj.states).max() < 1e-8


def test_nonlocal_steady_state_is_gibbs(params):
    ss = stationary_state(params, "nonlocal")
    assert np.allclose(ss, gibbs_state(build_hs(params), params.beta), atol=1e-10)


def test_local_steady_state_thermalizes_the_tq_at_zero_coupling(params):
    p = params.replace(J=0.0)
    rho0 = initial_state(state_of([0.2, 0.1, 0.3]), p)
    final = exact_propagate(p, "local", rho0, 3000.0)
    tq = np.einsum("ajak->jk", final.reshape(2, 2, 2, 2))
    assert np.allclose(tq, tq_gibbs(p), atol=1e-10)
    # the CQ is untouched except for free precession
    assert np.allclose(np.diag(partial_trace_over_tq(final)), np.diag(state_of([0.2, 0.1, 0.3])))


def test_tq_gibbs_population():
    p = ModelParams(omega1=1.0, omega2=1.0, J=0.0, kappa_bar=0.01, beta=0.7)
    assert tq_gibbs(p)[0, 0].real == pytest.approx(1 / (1 + math.exp(0.7)), rel=1e-14)
    assert tq_gibbs(p.replace(beta=math.inf))[0, 0] == 0


def test_unitary_limit_conserves_energy():
    p = ModelParams(omega1=1.0, omega2=1.2, J=0.3, kappa_bar=0.0, beta=1.0)
    rho0 = initial_state(state_of([1, 0, 0]), p)
    traj = propagate(p, "local", rho0, 30.0, IntegratorSettings(sample_dt=0.1))
    h = build_hs(p)
    e = np.einsum("tij,ji->t", traj.states, h).real
    assert np.ptp(e) < 1e-9
    pur = np.einsum("tij,tji->t", traj.states, traj.states).real
    assert np.ptp(pur) < 1e-9


def test_propagate_many_matches_single(params):
    rhos = [initial_state(state_of(r), params) for r in ([1, 0, 0], [0, 0, -1])]
    many = propagate_many(params, "nonlocal", rhos, 5.0, IntegratorSettings(sample_dt=0.5))
    for rho, traj in zip(rhos, many):
        single = propagate(params, "nonlocal", rho, 5.0, IntegratorSettings(sample_dt=0.5))
        assert np.abs(single.states - traj.states).max() < 1e-10


def test_sample_grid_is_uniform():
    t = sample_times(1.0, 0.3)
    assert np.allclose(np.diff(t), 0.3) and t[-1] <= 1.0
    assert len(sample_times(1.0, 0.1)) == 11


def test_input_validation(params):
    rho0 = initial_state(state_of([0, 0, 1]), params)
    with pytest.raises(ValueError):
        propagate(params, "local", rho0, -1.0)
    with pytest.raises(ValueError):
        propagate(params, "local", rho0, 1.0, times=[0.5, 1.0])
    with pytest.raises(ValueError):
        initial_state(np.eye(2), params)
    with pytest.raises(ValueError):
        IntegratorSettings(rel_tol=0)
    with pytest.raises(ValueError):
        IntegratorSettings().resolved(params.replace(kappa_bar=0.0))
    with pytest.raises(ValueError):
        exact_propagate(params.replace(lambda0=0.1), "local", rho0, 1.0)
    with pytest.raises(ValueError):
        MasterEquationKind.parse("markov")
    assert MasterEquationKind.parse("Non-Local") is MasterEquationKind.NONLOCAL


def test_failed_integration_is_reported(params, monkeypatch):
    import nmqubit.dynamics as dyn

    class Failed:
        status, message, nfev = -1, "step size too small", 0
        t = np.array([0.5])

    monkeypatch.setattr(dyn, "solve_ivp", lambda *a, **k: Failed())
    rho0 = initial_state(state_of([0, 0, 1]), params)
    with pytest.raises(IntegrationError, match="step size"):
        propagate(params, "local", rho0, 1.0)


def test_nonlocal_warns_outside_secular_regime():
    p = ModelParams.from_ratios(j_over_kappa=0.5, omega2_beta=1.0)
    rho0 = initial_state(state_of([0, 0, 1]), p)
    with pytest.warns(ModelWarning, match="secular"):
        propagate(p, "nonlocal", rho0, 0.1)
