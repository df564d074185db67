"""Bloch-map tomography of the CQ, volume of accessible states and its crossover."""

from __future__ import annotations

import logging
import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from .core import bloch_of, state_of
from .dynamics import (
    IntegratorSettings,
    MasterEquationKind,
    initial_state,
    propagate_many,
    sample_times,
)
from .model import ModelParams

log = logging.getLogger(__name__)

RISE_TOL = 1e-6
MIN_RISE_SAMPLES = 3
VOLUME_FLOOR = 1e-6
HORIZON_KAPPA = 15.0
DEFAULT_BRACKET = (0.01, 100.0)
SAMPLES_PER_EXCHANGE = 200

# r(0) = 0 gives the translation, r(0) = e_i the columns of A
TOMOGRAPHY_BLOCH = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)


class ThresholdWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AffineBlochMap:
    """``r(t) = A r(0) + T`` for the reduced CQ dynamics at time ``t``."""

    A: np.ndarray
    T: np.ndarray
    t: float

    def apply(self, r0) -> np.ndarray:
        return self.A @ np.asarray(r0, dtype=float) + self.T

    @property
    def volume(self) -> float:
        return float(np.linalg.det(self.A))


class BlochMapSeries(Sequence):
    """Time-ordered affine maps stored as stacked arrays."""

    def __init__(self, times, A, T):
        self.times = np.asarray(times, dtype=float)
        self.A = np.asarray(A, dtype=float)
        self.T = np.asarray(T, dtype=float)

    def __len__(self):
        return len(self.times)

    def __getitem__(self, k):
        if isinstance(k, slice):
            return BlochMapSeries(self.times[k], self.A[k], self.T[k])
        return AffineBlochMap(self.A[k], self.T[k], float(self.times[k]))

    def predict(self, r0) -> np.ndarray:
        """Bloch vectors ``A(t) r0 + T(t)`` for every stored time."""
        return self.A @ np.asarray(r0, dtype=float) + self.T


def volume_sample_dt(p: ModelParams) -> float:
    """Default sampling step for volume analysis.

    ``0.01 / kappa_bar``, refined so that one CQ-TQ exchange period
    ``2 pi / sqrt(4 J^2 + Delta^2)`` holds at least 200 samples; coarser grids
    clip the tops of the volume oscillations at strong coupling.
    """
    dt = 0.01 / p.kappa_bar
    exchange = math.hypot(2 * p.J, p.Delta)
    if exchange > 0:
        dt = min(dt, 2 * math.pi / exchange / SAMPLES_PER_EXCHANGE)
    return dt


def _tomography_initial_states(p: ModelParams) -> list[np.ndarray]:
    return [initial_state(state_of(r), p) for r in TOMOGRAPHY_BLOCH]


def tomography(
    p: ModelParams,
    kind: MasterEquationKind = MasterEquationKind.LOCAL,
    t_grid=None,
    settings: IntegratorSettings | None = None,
    t_horizon: float | None = None,
) -> BlochMapSeries:
    """Reconstruct the CQ affine Bloch map from four joint propagations.

    The TQ starts thermal in every run. ``T(t)`` comes from the maximally
    mixed CQ, column ``i`` of ``A(t)`` from ``(I + sigma_i)/2`` minus ``T(t)``.
    Without ``t_grid`` the maps are sampled every ``sample_dt`` (default
    :func:`volume_sample_dt`) up to ``t_horizon`` (default ``15 / kappa_bar``).
    """
    if p.lambda0 != 0:
        raise ValueError("tomography is defined for the undriven CQ (lambda0 = 0)")
    settings = settings or IntegratorSettings()
    if settings.sample_dt is None and p.kappa_bar > 0:
        settings = replace(settings, sample_dt=volume_sample_dt(p))
    settings = settings.resolved(p)
    if t_grid is None:
        horizon = t_horizon if t_horizon is not None else HORIZON_KAPPA / p.kappa_bar
        times = sample_times(horizon, settings.sample_dt)
        t_end = horizon
    else:
        t_grid = np.asarray(t_grid, dtype=float)
        if np.any(np.diff(t_grid) <= 0) or t_grid[0] < 0:
            raise ValueError("t_grid must be non-negative and strictly increasing")
        times = t_grid if t_grid[0] == 0 else np.concatenate([[0.0], t_grid])
        t_end = float(times[-1]) if times[-1] > 0 else settings.sample_dt
    trajs = propagate_many(p, kind, _tomography_initial_states(p), t_end, settings, times=times)
    bloch = np.stack([bloch_of(tr.reduced()) for tr in trajs], axis=1)  # (n, 4, 3)
    T = bloch[:, 0, :]
    A = np.swapaxes(bloch[:, 1:, :] - T[:, None, :], 1, 2)
    if t_grid is not None and t_grid[0] != 0:
        times, A, T = times[1:], A[1:], T[1:]
    return BlochMapSeries(times, A, T)


@dataclass(frozen=True)
class Segment:
    start: int  # sample index, inclusive
    stop: int  # sample index, inclusive
    direction: int  # +1 rising, -1 non-increasing
    change: float


@dataclass
class VolumeSeries:
    times: np.ndarray
    vol: np.ndarray
    segments: list[Segment]
    rise_tol: float = RISE_TOL
    min_samples: int = MIN_RISE_SAMPLES
    floor: float = VOLUME_FLOOR
    rising: list[Segment] = field(default_factory=list)

    @property
    def has_rise(self) -> bool:
        return bool(self.rising)


def segment_monotone(vol) -> list[Segment]:
    """Split a sampled series into maximal rising / non-increasing runs."""
    vol = np.asarray(vol, dtype=float)
    if len(vol) < 2:
        return [Segment(0, len(vol) - 1, -1, 0.0)] if len(vol) else []
    sign = np.where(np.diff(vol) > 0, 1, -1)
    breaks = np.flatnonzero(np.diff(sign)) + 1
    starts = np.concatenate([[0], breaks])
    stops = np.concatenate([breaks, [len(sign)]])
    return [
        Segment(int(a), int(b), int(sign[a]), float(vol[b] - vol[a]))
        for a, b in zip(starts, stops)
    ]


def volume_series(
    maps,
    rise_tol: float = RISE_TOL,
    min_samples: int = MIN_RISE_SAMPLES,
    floor: float = VOLUME_FLOOR,
) -> VolumeSeries:
    """Volume of accessible states ``det A(t)`` and its monotone segments.

    A rising segment counts as a temporary increase only if it spans at
    least ``min_samples`` samples, rises by more than ``rise_tol`` and ends
    above ``floor``; anything smaller is integrator jitter.

    ``maps`` is a :class:`BlochMapSeries`, a sequence of
    :class:`AffineBlochMap`, or a ``(times, volumes)`` pair.
    """
    if isinstance(maps, BlochMapSeries):
        times, vol = maps.times, np.linalg.det(maps.A)
    elif isinstance(maps, tuple) and len(maps) == 2:
        times, vol = (np.asarray(x, dtype=float) for x in maps)
    else:
        times = np.array([m.t for m in maps], dtype=float)
        vol = np.array([m.volume for m in maps])
    segments = segment_monotone(vol)
    rising = [
        s
        for s in segments
        if s.direction > 0
        and s.stop - s.start + 1 >= min_samples
        and s.change > rise_tol
        and vol[s.stop] >= floor
    ]
    return VolumeSeries(times, vol, segments, rise_tol, min_samples, floor, rising)


def nm_measure(vs: VolumeSeries) -> float:
    """Sum of the volume gained over all counted rising segments.

    The series is assumed to start from ``V(0) = 1``, so no further
    normalization is applied.
    """
    return float(sum(s.change for s in vs.rising))


def nm_of(
    p: ModelParams,
    kind: MasterEquationKind = MasterEquationKind.LOCAL,
    settings: IntegratorSettings | None = None,
    t_horizon: float | None = None,
) -> tuple[float, VolumeSeries]:
    vs = volume_series(tomography(p, kind, settings=settings, t_horizon=t_horizon))
    return nm_measure(vs), vs


@dataclass(frozen=True)
class ThresholdResult:
    j_over_kappa_th: float
    bracket: tuple[float, float]
    temperature: float  # omega2 * beta
    detuning: float  # Delta / kappa_bar
    evaluations: int = 0
    flips: int = 1
    t_horizon: float = HORIZON_KAPPA


def threshold_params(template: ModelParams, j_over_kappa: float, temperature: float, detuning: float) -> ModelParams:
    """Copy ``template`` with ``J``, ``beta`` and ``omega1`` set from the ratios."""
    kb = template.kappa_bar
    return template.replace(
        J=j_over_kappa * kb,
        beta=temperature / template.omega2,
        omega1=template.omega2 + detuning * kb,
        lambda0=0.0,
    )


def find_threshold(
    template: ModelParams,
    temperature: float,
    detuning: float = 0.0,
    resolution: float = 0.01,
    t_horizon: float | None = None,
    bracket: tuple[float, float] = DEFAULT_BRACKET,
    kind: MasterEquationKind = MasterEquationKind.LOCAL,
    settings: IntegratorSettings | None = None,
    scan_points: int = 9,
) -> ThresholdResult:
    """Smallest ``J/kappa_bar`` at which the CQ volume shows a temporary increase.

    ``template`` supplies ``omega2`` and ``kappa_bar``; ``temperature`` is
    ``omega2 * beta`` and ``detuning`` is ``Delta / kappa_bar``. A log-spaced
    scan over ``bracket`` locates the first Markovian -> non-Markovian flip,
    which is then bisected down to ``resolution``.
    """
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    lo, hi = bracket
    if not 0 < lo < hi:
        raise ValueError(f"invalid bracket {bracket}")
    horizon = t_horizon if t_horizon is not None else HORIZON_KAPPA / template.kappa_bar
    evaluations = 0

    def predicate(j: float) -> bool:
        nonlocal evaluations
        evaluations += 1
        p = threshold_params(template, j, temperature, detuning)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            maps = tomography(p, kind, settings=settings, t_horizon=horizon)
        return volume_series(maps).has_rise

    grid = np.geomspace(lo, hi, max(scan_points, 2))
    flags = [predicate(j) for j in grid]
    if flags[0]:
        raise ValueError(
            f"lower end of bracket J/kappa_bar={lo:g} already shows a volume increase "
            f"(omega2*beta={temperature:g}, Delta/kappa_bar={detuning:g})"
        )
    if not any(flags):
        raise ValueError(
            f"upper end of bracket J/kappa_bar={hi:g} shows no volume increase "
            f"(omega2*beta={temperature:g}, Delta/kappa_bar={detuning:g})"
        )
    flips = sum(1 for a, b in zip(flags, flags[1:]) if a != b)
    if flips > 1:
        warnings.warn(
            f"rise predicate is not monotone in J/kappa_bar at omega2*beta={temperature:g}, "
            f"Delta/kappa_bar={detuning:g}; returning the smallest flip",
            ThresholdWarning,
            stacklevel=2,
        )
    k = flags.index(True)
    a, b = float(grid[k - 1]), float(grid[k])
    while b - a > resolution:
        mid = 0.5 * (a + b)
        if predicate(mid):
            b = mid
        else:
            a = mid
    log.info("threshold %.4f at omega2*beta=%g, Delta/kappa=%g (%d evaluations)", b, temperature, detuning, evaluations)
    return ThresholdResult(
        j_over_kappa_th=b,
        bracket=(a, b),
        temperature=temperature,
        detuning=detuning,
        evaluations=evaluations,
        flips=flips,
        t_horizon=horizon * template.kappa_bar,
    )


@dataclass(frozen=True)
class PowerLawFit:
    A_fit: float
    B_fit: float
    residual: float  # RMS of log-space residuals

    def __call__(self, temperature):
        """Predicted threshold ``1 + A / (omega2 beta)^B``."""
        return 1.0 + self.A_fit / np.asarray(temperature, dtype=float) ** self.B_fit


def fit_power_law(points) -> PowerLawFit:
    """Least-squares fit of ``th - 1 = A / x^B`` in log-log space.

    ``points`` are ``(omega2 * beta, threshold)`` pairs.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (temperature, threshold) pairs")
    if len(pts) < 3:
        raise ValueError("at least three points are needed for a power-law fit")
    x, th = pts[:, 0], pts[:, 1]
    if np.any(x <= 0):
        raise ValueError("temperatures omega2*beta must be positive")
    if np.any(th <= 1):
        bad = ", ".join(f"({a:g}, {b:g})" for a, b in pts[th <= 1])
        raise ValueError(f"thresholds must exceed 1 for the log fit; offending points: {bad}")
    lx, ly = np.log(x), np.log(th - 1)
    design = np.column_stack([np.ones_like(lx), -lx])
    coef, *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - design @ coef
    return PowerLawFit(A_fit=float(math.exp(coef[0])), B_fit=float(coef[1]), residual=float(np.sqrt(np.mean(resid**2))))
