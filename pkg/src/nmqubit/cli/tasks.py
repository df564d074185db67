"""Task execution, sweeps and serialization of results."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import subprocess
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import constants

from .. import __version__
from ..core import state_of, trace_distance, bloch_of
from ..dynamics import IntegrationError, initial_state, propagate_many, sample_times
from ..model import ModelParams, eigensystem, ohmic_rates
from ..nonmarkov import HORIZON_KAPPA, find_threshold, fit_power_law, nm_measure, tomography, volume_series
from ..thermo import DriveKind, average_work
from .config import ConfigError, ExperimentConfig, Task, parse_config

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

SERIES_TASKS = (Task.VOLUME, Task.WORK, Task.COMPARE_ME)


@dataclass
class PointResult:
    """Output of one sweep point: scalar rows and/or one time series."""

    rows: list[dict] = field(default_factory=list)
    series_columns: list[str] | None = None
    series: list[list] | None = None
    summary: dict = field(default_factory=dict)


def _horizon(cfg: ExperimentConfig, default_kappa: float = HORIZON_KAPPA) -> float:
    t_end = cfg.options.get("t_end")
    if t_end is not None:
        return float(t_end)
    return default_kappa / cfg.model.kappa_bar


def _ratios(p: ModelParams) -> dict:
    kb = p.kappa_bar
    return {
        "J_over_kappa_bar": p.J / kb if kb > 0 else math.inf,
        "omega2_beta": p.omega2 * p.beta,
        "delta_over_kappa_bar": p.Delta / kb if kb > 0 else math.inf,
    }


def run_volume(cfg: ExperimentConfig) -> PointResult:
    p = cfg.model
    maps = tomography(p, cfg.equation, settings=cfg.integrator, t_horizon=_horizon(cfg))
    vs = volume_series(maps)
    cols = ["kappa_t", "t", "volume"]
    rows = [[p.kappa_bar * t, t, v] for t, v in zip(vs.times, vs.vol)]
    summary = dict(_ratios(p), N=nm_measure(vs), rising_segments=len(vs.rising))
    return PointResult(series_columns=cols, series=rows, summary=summary)


def run_nm_measure(cfg: ExperimentConfig) -> PointResult:
    p = cfg.model
    horizon = _horizon(cfg)
    vs = volume_series(tomography(p, cfg.equation, settings=cfg.integrator, t_horizon=horizon))
    row = dict(_ratios(p), N=nm_measure(vs), rising_segments=len(vs.rising), kappa_t_horizon=horizon * p.kappa_bar)
    return PointResult(rows=[row], summary=row)


def _threshold_row(cfg: ExperimentConfig, temperature: float) -> dict:
    p = cfg.model
    opts = cfg.options
    res = find_threshold(
        p,
        temperature=temperature,
        detuning=p.Delta / p.kappa_bar,
        resolution=float(opts["resolution"]),
        t_horizon=_horizon(cfg),
        bracket=tuple(float(x) for x in opts["bracket"]),
        kind=cfg.equation,
        settings=cfg.integrator,
        scan_points=int(opts["scan_points"]),
    )
    row = {
        "omega2_beta": res.temperature,
        "delta_over_kappa_bar": res.detuning,
        "j_over_kappa_th": res.j_over_kappa_th,
        "bracket_lo": res.bracket[0],
        "bracket_hi": res.bracket[1],
        "evaluations": res.evaluations,
        "flips": res.flips,
    }
    if cfg.reference is not None:
        rep = physical_units_report(p.replace(J=res.j_over_kappa_th * p.kappa_bar, beta=temperature / p.omega2), **cfg.reference)
        row["J_th_MHz"] = rep["J_MHz"]
        row["temperature_K"] = rep["temperature_K"]
    return row


def run_threshold(cfg: ExperimentConfig) -> PointResult:
    row = _threshold_row(cfg, cfg.model.omega2 * cfg.model.beta)
    return PointResult(rows=[row], summary=row)


def run_work(cfg: ExperimentConfig) -> PointResult:
    p = cfg.model
    opts = cfg.options
    rho0 = initial_state(state_of(opts["initial_bloch"]), p)
    ws = average_work(
        p,
        cfg.equation,
        rho0=rho0,
        t_end=opts.get("t_end"),
        drive_kind=DriveKind.parse(opts["drive"]),
        settings=cfg.integrator,
        samples_per_period=int(opts["samples_per_period"]),
    )
    cols = ["kappa_t", "t", "power", "work"]
    rows = [[p.kappa_bar * t, t, pw, w] for t, pw, w in zip(ws.times, ws.power, ws.work)]
    summary = dict(_ratios(p), omega_d=ws.omega_d, final_work=float(ws.work[-1]))
    return PointResult(series_columns=cols, series=rows, summary=summary)


def run_compare_me(cfg: ExperimentConfig) -> PointResult:
    """Reduced-CQ trace distance between local and global propagation."""
    p = cfg.model
    rho0 = initial_state(state_of(cfg.options["initial_bloch"]), p)
    t_end = _horizon(cfg, default_kappa=10.0)
    settings = cfg.integrator.resolved(p)
    times = sample_times(t_end, settings.sample_dt)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        loc = propagate_many(p, "local", [rho0], t_end, settings, times)[0].reduced()
        glo = propagate_many(p, "nonlocal", [rho0], t_end, settings, times)[0].reduced()
    td = trace_distance(loc, glo)
    bl, bg = bloch_of(loc), bloch_of(glo)
    cols = ["kappa_t", "t", "trace_distance", "local_x", "local_y", "local_z", "nonlocal_x", "nonlocal_y", "nonlocal_z"]
    rows = [[p.kappa_bar * t, t, d, *a, *b] for t, d, a, b in zip(times, td, bl, bg)]
    summary = dict(_ratios(p), max_trace_distance=float(td.max()))
    return PointResult(series_columns=cols, series=rows, summary=summary)


def rate_error_map(p: ModelParams, j_values, beta_omega1_values) -> list[dict]:
    """Relative errors of replacing the global decay rates by the TQ rate.

    Each cell evaluates ``|gamma_down(eps_i) - gamma_down(omega2)| /
    gamma_down(omega2)`` at coupling ``J`` and inverse temperature
    ``beta = beta_omega1 / omega1``; columns carry both the ``omega1`` and the
    ``kappa_bar`` normalization of ``J``.
    """
    rows = []
    for bw in beta_omega1_values:
        for j in j_values:
            q = p.replace(J=float(j), beta=float(bw) / p.omega1)
            es = eigensystem(q)
            ref = ohmic_rates(q.omega2, q)
            r1 = ohmic_rates(es.eps1, q)
            r2 = ohmic_rates(es.eps2, q)
            balance = max(
                abs(r.up - r.down * math.exp(-q.beta * r.at_frequency)) / r.down for r in (ref, r1, r2)
            )
            rows.append(
                {
                    "J": float(j),
                    "beta_omega1": float(bw),
                    "err_eps1": abs(r1.down - ref.down) / ref.down,
                    "err_eps2": abs(r2.down - ref.down) / ref.down,
                    "J_over_omega1": float(j) / q.omega1,
                    "J_over_kappa_bar": float(j) / q.kappa_bar,
                    "detailed_balance_residual": balance,
                }
            )
    return rows


def run_rate_error(cfg: ExperimentConfig) -> PointResult:
    p = cfg.model
    j_values = cfg.options["j_values"]
    if j_values is None:
        j_values = np.linspace(0.0, 0.2 * p.omega1, 21).tolist()
    rows = rate_error_map(p, j_values, cfg.options["beta_omega1_values"])
    return PointResult(rows=rows, summary={"cells": len(rows)})


def physical_units_report(p: ModelParams, omega2_hz: float | None = None, angular: bool = False) -> dict:
    """Express model quantities in laboratory units.

    ``omega2_hz`` fixes the frequency scale: every frequency is rescaled by
    ``omega2_hz / omega2``. With ``angular=False`` (default) the reference is
    an ordinary frequency ``omega/2pi``, so the bath temperature is
    ``hbar 2pi omega2_hz / (k_B omega2 beta)``; with ``angular=True`` the
    ``2pi`` is dropped. Without a reference the natural-unit values are
    returned unchanged.
    """
    natural = {
        "omega1": p.omega1,
        "omega2": p.omega2,
        "J": p.J,
        "kappa_bar": p.kappa_bar,
        "lambda0": p.lambda0,
        "omega2_beta": p.omega2 * p.beta,
    }
    if omega2_hz is None:
        return dict(natural, units="natural (hbar = k_B = 1)")
    scale = omega2_hz / p.omega2
    omega2_rad = omega2_hz if angular else 2 * math.pi * omega2_hz
    x = p.omega2 * p.beta
    temperature = constants.hbar * omega2_rad / (constants.k * x) if x > 0 and math.isfinite(x) else 0.0
    return {
        "omega1_GHz": p.omega1 * scale / 1e9,
        "omega2_GHz": p.omega2 * scale / 1e9,
        "J_MHz": p.J * scale / 1e6,
        "kappa_bar_MHz": p.kappa_bar * scale / 1e6,
        "lambda0_MHz": p.lambda0 * scale / 1e6,
        "omega2_beta": x,
        "temperature_K": temperature,
        "units": "laboratory",
        "convention": "reference is angular frequency (rad/s)" if angular else "reference is omega/2pi (Hz)",
    }


_RUNNERS = {
    Task.VOLUME: run_volume,
    Task.NM_MEASURE: run_nm_measure,
    Task.THRESHOLD: run_threshold,
    Task.WORK: run_work,
    Task.COMPARE_ME: run_compare_me,
    Task.RATE_ERROR: run_rate_error,
}


def _run_child(doc: dict) -> PointResult:
    # re-parsed inside the worker so only plain data crosses process boundaries
    cfg = parse_config(doc)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return _RUNNERS[cfg.task](cfg)


def _run_fit_temperature(doc: dict, temperature: float) -> dict:
    cfg = parse_config(doc)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return _threshold_row(cfg, temperature)


def _map(fn, jobs, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: str, columns: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def version_string() -> str:
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        sha = subprocess.run(
            ["git", "-C", here, "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5, check=True,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        sha = ""
    return f"{__version__}+g{sha}" if sha else __version__


def execute(cfg: ExperimentConfig) -> dict:
    """Run the configured task, write CSV + JSON sidecar, return the metadata."""
    t0 = time.perf_counter()
    out_dir = cfg.output_path
    os.makedirs(out_dir, exist_ok=True)
    name = cfg.task.value
    files: list[str] = []
    summary: dict = {}

    if cfg.task is Task.POWER_LAW_FIT:
        if cfg.sweep is not None:
            raise ConfigError("sweep: not supported for fit_powerlaw (use 'temperatures')")
        opts = cfg.options
        if opts["points"] is not None:
            points = [tuple(map(float, q)) for q in opts["points"]]
            rows = [{"omega2_beta": a, "j_over_kappa_th": b} for a, b in points]
        else:
            temps = sorted(float(t) for t in opts["temperatures"])
            doc = dict(cfg.to_dict(), task="threshold")
            for key in ("points", "temperatures"):
                doc.pop(key, None)
            rows = _map(_run_fit_temperature, [(doc, t) for t in temps], cfg.workers)
            points = [(r["omega2_beta"], r["j_over_kappa_th"]) for r in rows]
        path = os.path.join(out_dir, "fit_powerlaw_points.csv")
        write_csv(path, list(rows[0]), [list(r.values()) for r in rows])
        files.append(path)
        fit = fit_power_law(points)
        summary = {"A_fit": fit.A_fit, "B_fit": fit.B_fit, "residual": fit.residual}
        path = os.path.join(out_dir, "fit_powerlaw.csv")
        write_csv(path, ["A_fit", "B_fit", "residual", "n_points"], [[fit.A_fit, fit.B_fit, fit.residual, len(points)]])
        files.append(path)
    else:
        children = cfg.children()
        results = _map(_run_child, [(c.to_dict(),) for c in children], cfg.workers)
        sweep = cfg.sweep
        if cfg.task in SERIES_TASKS:
            summary = {"points": []}
            for i, (child, res) in enumerate(zip(children, results)):
                if sweep is None:
                    path = os.path.join(out_dir, f"{name}.csv")
                    cols, rows = res.series_columns, res.series
                else:
                    value = getattr(child.model, sweep.param)
                    path = os.path.join(out_dir, f"{name}_{sweep.param}_{i:03d}.csv")
                    cols = [sweep.param] + res.series_columns
                    rows = [[value] + r for r in res.series]
                write_csv(path, cols, rows)
                files.append(path)
                summary["points"].append(dict(res.summary, file=os.path.basename(path)))
        else:
            all_rows = []
            for child, res in zip(children, results):
                for r in res.rows:
                    all_rows.append(({sweep.param: getattr(child.model, sweep.param)} if sweep else {}) | r)
            path = os.path.join(out_dir, f"{name}.csv")
            write_csv(path, list(all_rows[0]), [list(r.values()) for r in all_rows])
            files.append(path)
            summary = {"rows": len(all_rows)}
            if cfg.task is Task.RATE_ERROR:
                summary["max_detailed_balance_residual"] = max(r["detailed_balance_residual"] for r in all_rows)

    meta = {
        "task": name,
        "version": version_string(),
        "resolved_config": cfg.to_dict(),
        "provenance": cfg.provenance,
        "integrator": cfg.integrator.to_dict(),
        "files": [os.path.basename(f) for f in files],
        "summary": summary,
        "notes": {
            "time_horizon": "volume analysis horizon defaults to 15/kappa_bar (not stated in the source model; a choice)",
            "rise_rule": "rise > 1e-6 over >= 3 samples, ending above 1e-6",
            "sample_dt": "null means derived per task: 0.01/kappa_bar, refined to 200 samples per "
            "CQ-TQ exchange period for volume tasks and to drive period/128 for work",
        },
        "wall_time_s": time.perf_counter() - t0,
    }
    if cfg.reference is not None:
        meta["units"] = physical_units_report(cfg.model, **cfg.reference)
    path = os.path.join(out_dir, f"{name}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=_json_default)
    return meta


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def run_task(config, overrides: dict | None = None) -> int:
    """Parse ``config``, execute it and map failures onto exit codes.

    Returns 0 on success, 2 for configuration errors, 3 for numerical
    failures and 4 for I/O errors.
    """
    try:
        cfg = config if isinstance(config, ExperimentConfig) else parse_config(config, overrides=overrides)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("cannot read configuration: %s", exc)
        return EXIT_IO
    try:
        execute(cfg)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except (IntegrationError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    return EXIT_OK
