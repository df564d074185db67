"""Acceptance criteria, one or more checks per criterion.

Each check carries ``@pytest.mark.criterion(n)``; the terminal summary prints
one PASS/FAIL line per criterion. Tolerances are the stated ones and are not
relaxed where the model falls short.
"""

import functools
import json
import math
import time
import warnings

import numpy as np
import pytest

from nmqubit.cli.main import main
from nmqubit.cli.tasks import rate_error_map
from nmqubit.core import bloch_of, expm_propagate, state_of, trace_distance
from nmqubit.dynamics import IntegratorSettings, initial_state, liouvillian, propagate, propagate_many
from nmqubit.model import ModelParams
from nmqubit.nonmarkov import find_threshold, fit_power_law, nm_of, tomography
from nmqubit.thermo import average_work, linear_growth_residual, oscillation_suppression_index

KINDS = ("local", "nonlocal")
TOL = 1e-7


def figure_params(j, omega2_beta, delta=0.0, **kw):
    return ModelParams.from_ratios(j_over_kappa=j, omega2_beta=omega2_beta, delta_over_kappa=delta, **kw)


def random_bloch(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v) * rng.uniform() ** (1 / 3)


def random_params(rng):
    kappa_bar = 1.0
    omega2 = kappa_bar / rng.uniform(0.01, 0.05)
    return ModelParams(
        omega1=omega2 * rng.uniform(0.8, 1.2),
        omega2=omega2,
        J=omega2 * rng.uniform(0.0, 0.1),
        kappa_bar=kappa_bar,
        beta=rng.uniform(0.1, 10.0) / omega2,
    )


@functools.lru_cache(maxsize=None)
def threshold(omega2_beta, delta=0.0, lower=0.01):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return find_threshold(
            figure_params(1.0, omega2_beta), omega2_beta, detuning=delta, resolution=0.01, bracket=(lower, 100.0)
        )


@pytest.mark.criterion(1)
def test_c1_cptp_property_suite():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(200):
            p = random_params(rng)
            rho0 = initial_state(state_of(random_bloch(rng)), p)
            for kind in KINDS:
                traj = propagate(p, kind, rho0, 2.0 / p.kappa_bar)
                worst = max(worst, *traj.diagnostics["violations"].values())
    elapsed = time.perf_counter() - start
    print(f"C1 worst violation {worst:.3g}, {elapsed:.1f} s")
    assert worst <= TOL
    assert elapsed <= 120


@pytest.mark.criterion(2)
def test_c2_oracle_equivalence():
    rng = np.random.default_rng(2)
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(50):
            p = random_params(rng)
            rho0 = initial_state(state_of(random_bloch(rng)), p)
            times = np.array([0.0, 0.1, 1.0, 10.0]) / p.kappa_bar
            for kind in KINDS:
                traj = propagate(p, kind, rho0, times[-1], times=times)
                lv = liouvillian(p, kind)
                for t, rho in zip(times[1:], traj.states[1:]):
                    worst = max(worst, np.abs(rho - expm_propagate(lv, rho0, t)).max())
    print(f"C2 worst entrywise deviation {worst:.3g}")
    assert worst <= TOL


@pytest.mark.criterion(3)
@pytest.mark.parametrize("kind", KINDS)
def test_c3_affinity_of_reduced_map(kind):
    rng = np.random.default_rng(3)
    p = figure_params(20.0, 0.35)
    times = np.sort(rng.uniform(0, 15, 10))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        maps = tomography(p, kind, t_grid=times)
        worst = 0.0
        grid = np.concatenate([[0.0], times])
        for _ in range(20):
            r0 = random_bloch(rng)
            traj = propagate(p, kind, initial_state(state_of(r0), p), times[-1], times=grid)
            worst = max(worst, np.abs(bloch_of(traj.reduced()[1:]) - maps.predict(r0)).max())
    print(f"C3 {kind}: worst deviation {worst:.3g}")
    assert worst <= TOL


@pytest.mark.criterion(4)
@pytest.mark.parametrize("j, rising", [(1.0, False), (20.0, True)])
def test_c4_volume_curves(j, rising):
    start = time.perf_counter()
    n, vs = nm_of(figure_params(j, 0.35))
    elapsed = time.perf_counter() - start
    assert vs.has_rise is rising
    if not rising:
        assert np.all(np.diff(vs.vol) <= 1e-6)
    assert elapsed <= 60


@pytest.mark.criterion(4)
def test_c4_detuning_lowers_onset():
    res, det = threshold(0.35), threshold(0.35, 11.0)
    print(f"C4 onset at omega2*beta=0.35: resonant {res.j_over_kappa_th:.3f}, detuned {det.j_over_kappa_th:.3f}")
    assert det.j_over_kappa_th < res.j_over_kappa_th


@pytest.mark.criterion(5)
def test_c5_resonant_threshold_decreases_at_low_temperature():
    th = [threshold(x).j_over_kappa_th for x in (1.0, 2.0, 3.0)]
    print(f"C5 resonant thresholds at omega2*beta = 1, 2, 3: {th}")
    assert th[0] > th[1] > th[2]


@pytest.mark.criterion(5)
def test_c5_resonant_threshold_exceeds_one():
    th = [threshold(x).j_over_kappa_th for x in (1.0, 2.0, 3.0)]
    assert all(t > 1 for t in th), f"resonant thresholds {th} do not exceed 1"


@pytest.mark.criterion(5)
def test_c5_detuned_threshold_small_at_low_temperature():
    # the detuned onset at this temperature lies below the default bracket's 0.01
    th = threshold(3.0, 11.0, lower=1e-3).j_over_kappa_th
    print(f"C5 detuned threshold at omega2*beta=3: {th:.4f}")
    assert th < 0.5


@pytest.mark.criterion(5)
def test_c5_reversal_at_high_temperature():
    res, det = threshold(0.2), threshold(0.2, 11.0)
    print(f"C5 omega2*beta=0.2: resonant {res.j_over_kappa_th:.3f}, detuned {det.j_over_kappa_th:.3f}")
    assert det.j_over_kappa_th > res.j_over_kappa_th


@pytest.mark.criterion(6)
def test_c6_synthetic_round_trip():
    x = np.array([0.2, 0.3, 0.5, 1.0, 2.0, 3.0])
    fit = fit_power_law(np.column_stack([x, 1 + 2.0 / x**1.5]))
    assert abs(fit.A_fit - 2.0) <= 1e-10 and abs(fit.B_fit - 1.5) <= 1e-10


@pytest.mark.criterion(6)
def test_c6_fit_of_resonant_thresholds():
    temps = (0.2, 0.3, 0.5, 1.0, 2.0, 3.0)
    points = [(x, threshold(x).j_over_kappa_th) for x in temps]
    print(f"C6 resonant thresholds: {points}")
    fit = fit_power_law(points)
    assert fit.A_fit > 0 and fit.B_fit > 0 and fit.residual <= 0.1


def work_run(j, drive):
    p = figure_params(j, 0.2, lambda0=1.0)  # lambda0 = 0.01 omega2
    return average_work(p, drive_kind=drive)


@pytest.mark.criterion(7)
def test_c7_dressed_drive_oscillations_suppressed():
    weak, strong = work_run(2.0, "dressed"), work_run(20.0, "dressed")
    s_weak, s_strong = oscillation_suppression_index(weak), oscillation_suppression_index(strong)
    print(f"C7 suppression index J=2: {s_weak:.3f}, J=20: {s_strong:.3f}")
    assert s_strong < s_weak
    assert linear_growth_residual(weak) <= 0.05


@pytest.mark.criterion(7)
def test_c7_bare_drive_work_stalls():
    w1, w30 = work_run(1.0, "bare").work[-1], work_run(30.0, "bare").work[-1]
    print(f"C7 bare drive final work J=1: {w1:.4g}, J=30: {w30:.4g}")
    assert w30 < w1


@pytest.mark.criterion(8)
def test_c8_rate_error_map():
    p = ModelParams(omega1=100.0, omega2=100.0, J=0.0, kappa_bar=1.0, beta=0.01)
    j_values = np.linspace(0.0, 0.2 * p.omega1, 21)
    rows_by_beta = {}
    for r in rate_error_map(p, j_values, [0.1, 0.2, 0.5, 1.0, 2.0, 5.0]):
        rows_by_beta.setdefault(r["beta_omega1"], []).append(r)
        assert r["detailed_balance_residual"] <= 1e-12
    for rows in rows_by_beta.values():
        assert rows[0]["err_eps1"] <= 1e-12 and rows[0]["err_eps2"] <= 1e-12
        for key in ("err_eps1", "err_eps2"):
            errs = [r[key] for r in rows]
            assert np.all(np.diff(errs) > 0), key


@pytest.mark.criterion(9)
@pytest.mark.parametrize("j_over_omega2", [0.005, 0.01, 0.02])
def test_c9_local_and_nonlocal_agree(j_over_omega2):
    p = figure_params(j_over_omega2 * 1000, 0.35, omega2_over_kappa=1000)
    rhos = [initial_state(state_of(r), p) for r in ([1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, -1])]
    t_end = 10.0 / p.kappa_bar
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        loc = propagate_many(p, "local", rhos, t_end)
        glo = propagate_many(p, "nonlocal", rhos, t_end)
    worst = max(trace_distance(a.reduced(), b.reduced()).max() for a, b in zip(loc, glo))
    print(f"C9 J/omega2={j_over_omega2}: max reduced trace distance {worst:.3g}")
    assert worst <= 5e-3


@pytest.mark.criterion(10)
def test_c10_sweep_determinism(tmp_path):
    cfg = {
        "task": "nm_measure", "omega1": 100.0, "omega2": 100.0, "J": 1.0, "kappa_bar": 1.0,
        "beta": 0.0035, "t_end": 6.0, "sweep": {"param": "J", "values": [20.0, 1.0, 5.0, 2.5]},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    outputs = []
    for run, workers in enumerate((1, 2, 1, 3)):
        out = tmp_path / f"run{run}"
        assert main(["sweep", "--config", str(path), "--out", str(out), "--workers", str(workers)]) == 0
        outputs.append((out / "nm_measure.csv").read_bytes())
    assert all(o == outputs[0] for o in outputs)
    series = dict(cfg, task="compare_me", t_end=0.5)
    path.write_text(json.dumps(series))
    files = []
    for run, workers in enumerate((1, 2)):
        out = tmp_path / f"series{run}"
        assert main(["sweep", "--config", str(path), "--out", str(out), "--workers", str(workers)]) == 0
        files.append(sorted((p.name, p.read_bytes()) for p in out.glob("*.csv")))
    assert files[0] == files[1]
