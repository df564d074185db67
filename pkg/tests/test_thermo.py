import math

import numpy as np
import pytest

from nmqubit.core import state_of
from nmqubit.dynamics import IntegratorSettings, initial_state
from nmqubit.model import ModelParams, eigensystem
from nmqubit.thermo import (
    DriveKind,
    WorkSeries,
    average_work,
    drive_frequency,
    energy_change,
    linear_growth_residual,
    oscillation_suppression_index,
    power_expectation,
)


def test_drive_frequencies():
    p = ModelParams(omega1=1.0, omega2=1.0, J=0.0, kappa_bar=0.01, beta=1.0)
    assert drive_frequency(p, "bare") == drive_frequency(p, "dressed") == 1.0
    p = p.replace(J=0.1)
    assert drive_frequency(p, DriveKind.DRESSED) == pytest.approx(math.sqrt(1.01) - 0.1, rel=1e-15)
    assert drive_frequency(p, "dressed") == pytest.approx(0.904988, abs=1e-6)
    assert drive_frequency(p, "dressed") == pytest.approx(eigensystem(p).eps1, rel=1e-14)
    for j in (1e-6, 0.3, 50.0):
        assert drive_frequency(p.replace(J=j), "dressed") < p.omega2
    with pytest.raises(ValueError):
        DriveKind.parse("sideband")


def test_power_expectation_zeros():
    p = ModelParams(omega1=1.0, omega2=1.0, J=0.2, kappa_bar=0.01, beta=1.0, lambda0=0.05)
    rho_x = initial_state(state_of([1, 0, 0]), p)
    assert power_expectation(p.replace(lambda0=0.0), rho_x, 0.3) == 0
    assert power_expectation(p, rho_x, math.pi / 2) == pytest.approx(0, abs=1e-17)
    diag = initial_state(state_of([0, 0, 0.4]), p)
    assert power_expectation(p, diag, 0.0) == 0
    assert power_expectation(p, rho_x, 0.0) == pytest.approx(0.05)


def test_undriven_work_vanishes():
    p = ModelParams.from_ratios(j_over_kappa=2, omega2_beta=0.2)
    ws = average_work(p, t_end=1.0)
    assert np.all(ws.work == 0) and ws.work[0] == 0


def test_first_law_without_bath():
    # with kappa_bar = 0 the work done equals the change of total energy
    p = ModelParams(omega1=1.0, omega2=1.0, J=0.05, kappa_bar=0.0, beta=1.0, lambda0=0.02)
    rho0 = initial_state(state_of([0, 0, -1]), p)
    ws = average_work(p, rho0=rho0, t_end=60.0, settings=IntegratorSettings(sample_dt=0.05), keep_trajectory=True)
    de = energy_change(ws.trajectory.params, ws.trajectory)
    assert ws.work[0] == 0
    assert np.abs(ws.work - de).max() < 1e-8 * max(1.0, np.abs(de).max())


def test_work_quadrature_refinement():
    p = ModelParams.from_ratios(j_over_kappa=2, omega2_beta=0.2, lambda0=1.0)
    w1 = average_work(p, t_end=3.0, samples_per_period=128).work[-1]
    w2 = average_work(p, t_end=3.0, samples_per_period=256).work[-1]
    assert abs(w1 - w2) <= 1e-6 * abs(w2) + 1e-12


def test_work_is_running_integral_of_power():
    p = ModelParams.from_ratios(j_over_kappa=2, omega2_beta=0.2, lambda0=1.0)
    ws = average_work(p, t_end=2.0)
    dt = np.diff(ws.times)
    trap = np.concatenate([[0], np.cumsum(0.5 * dt * (ws.power[1:] + ws.power[:-1]))])
    assert np.abs(trap - ws.work).max() < 1e-4 * np.abs(ws.work).max()


def synthetic(work_fn, period=1.0, periods=10, n=64):
    t = np.linspace(0, periods * period, periods * n + 1)
    return WorkSeries(t, np.zeros_like(t), work_fn(t), DriveKind.BARE, 2 * np.pi / period)


def test_suppression_index_of_pure_sinusoid():
    ws = synthetic(lambda t: np.sin(2 * np.pi * t) + 0.3 * t)
    assert oscillation_suppression_index(ws) == pytest.approx(1.0, rel=1e-9)


def test_suppression_index_of_damped_oscillation():
    decay = 0.2
    ws = synthetic(lambda t: np.exp(-decay * t) * np.sin(2 * np.pi * t))
    # last window starts 9 periods after the first
    assert oscillation_suppression_index(ws) == pytest.approx(math.exp(-decay * 9), rel=0.05)


def test_suppression_index_needs_five_periods():
    with pytest.raises(ValueError, match="five periods"):
        oscillation_suppression_index(synthetic(np.sin, periods=3))


def test_linear_growth_residual():
    ws = synthetic(lambda t: 2 * t + 1)
    assert linear_growth_residual(ws) < 1e-12
    ws = synthetic(lambda t: np.sin(2 * np.pi * t))
    assert linear_growth_residual(ws) > 0.2
