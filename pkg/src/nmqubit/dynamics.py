"""Local and global master equations and their numerical integration."""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from .core import (
    check_density_matrix,
    commutator_super,
    dagger,
    embed,
    expm_propagate,
    lindblad_super,
    partial_trace_over_tq,
    pauli,
    state_violations,
    unvec,
    vec,
)
from .model import (
    ModelParams,
    ModelWarning,
    build_hs,
    drive_amplitude,
    drive_operator,
    nonlocal_lindblad_ops,
    ohmic_rates,
    secular_validity,
)

log = logging.getLogger(__name__)

SAMPLE_TOL = 1e-7
ABORT_TOL = 1e-5
WEAK_DRIVE_ENVELOPE = 0.05


class MasterEquationKind(enum.Enum):
    LOCAL = "local"
    NONLOCAL = "nonlocal"

    @classmethod
    def parse(cls, value) -> "MasterEquationKind":
        if isinstance(value, cls):
            return value
        aliases = {
            "locallindblad": cls.LOCAL,
            "local": cls.LOCAL,
            "nonlocalsecular": cls.NONLOCAL,
            "nonlocal": cls.NONLOCAL,
            "non-local": cls.NONLOCAL,
            "global": cls.NONLOCAL,
        }
        try:
            return aliases[str(value).lower().replace("_", "")]
        except KeyError:
            raise ValueError(f"unknown master equation kind {value!r}") from None


class IntegrationError(RuntimeError):
    """The integrator failed or produced states outside the abort tolerance."""


@dataclass(frozen=True)
class IntegratorSettings:
    """Adaptive Runge-Kutta controls.

    ``sample_dt = None`` resolves to ``0.01 / kappa_bar`` for the model at hand.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf
    sample_dt: float | None = None
    method: str = "DOP853"

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.sample_dt is not None and not self.sample_dt > 0:
            raise ValueError("sample_dt must be positive")

    def resolved(self, p: ModelParams) -> "IntegratorSettings":
        if self.sample_dt is not None:
            return self
        if p.kappa_bar == 0:
            raise ValueError("sample_dt must be given explicitly when kappa_bar = 0")
        return replace(self, sample_dt=0.01 / p.kappa_bar)

    def to_dict(self) -> dict:
        return {
            "rel_tol": self.rel_tol,
            "abs_tol": self.abs_tol,
            "max_step": None if math.isinf(self.max_step) else self.max_step,
            "sample_dt": self.sample_dt,
            "method": self.method,
        }


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_times, 4, 4)
    params: ModelParams
    kind: MasterEquationKind
    settings: IntegratorSettings
    diagnostics: dict = field(default_factory=dict)

    def reduced(self) -> np.ndarray:
        return partial_trace_over_tq(self.states)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def tq_gibbs(p: ModelParams) -> np.ndarray:
    """Thermal TQ state ``exp(-beta omega2 sz / 2) / Z``."""
    x = p.beta * p.omega2
    if math.isinf(x):
        pe = 0.0
    else:
        # p_e = 1 / (1 + e^x), written to avoid overflow
        pe = 0.5 * (1.0 - math.tanh(0.5 * x))
    return np.diag([pe, 1.0 - pe]).astype(complex)


def initial_state(rho1: np.ndarray, p: ModelParams) -> np.ndarray:
    """Product state of the given CQ state with the thermal TQ."""
    rho1 = check_density_matrix(rho1)
    if rho1.shape != (2, 2):
        raise ValueError("the CQ state must be 2x2")
    return np.kron(rho1, tq_gibbs(p))


def local_channels(p: ModelParams) -> list[tuple[float, np.ndarray]]:
    if p.kappa_bar == 0:
        return []
    r = ohmic_rates(p.omega2, p)
    return [(r.down, embed(pauli("-"), 2)), (r.up, embed(pauli("+"), 2))]


def nonlocal_channels(p: ModelParams) -> list[tuple[float, np.ndarray]]:
    if p.kappa_bar == 0:
        return []
    ops = nonlocal_lindblad_ops(p)
    r1 = ohmic_rates(ops.eps1, p)
    r2 = ohmic_rates(ops.eps2, p)
    return [
        (r1.down, ops.L1),
        (r1.up, dagger(ops.L1)),
        (r2.down, ops.L2),
        (r2.up, dagger(ops.L2)),
    ]


def channels(p: ModelParams, kind: MasterEquationKind) -> list[tuple[float, np.ndarray]]:
    kind = MasterEquationKind.parse(kind)
    if kind is MasterEquationKind.LOCAL:
        return local_channels(p)
    report = secular_validity(p)
    if p.kappa_bar > 0 and not report.valid:
        warnings.warn(
            f"secular approximation questionable: gap/rate ratio {report.ratio:.3g} "
            f"<= {report.threshold:g}",
            ModelWarning,
            stacklevel=3,
        )
    return nonlocal_channels(p)


def _dissipator(chs) -> np.ndarray:
    d = np.zeros((16, 16), dtype=complex)
    for rate, op in chs:
        d += lindblad_super(op, rate)
    return d


def local_dissipator(p: ModelParams) -> np.ndarray:
    """16x16 superoperator of the TQ-local thermal dissipator."""
    return _dissipator(local_channels(p))


def nonlocal_dissipator(p: ModelParams) -> np.ndarray:
    """16x16 superoperator of the secular dissipator in the ``H_S`` eigenbasis."""
    return _dissipator(channels(p, MasterEquationKind.NONLOCAL))


def dissipator(p: ModelParams, kind: MasterEquationKind) -> np.ndarray:
    kind = MasterEquationKind.parse(kind)
    if kind is MasterEquationKind.LOCAL:
        return local_dissipator(p)
    return nonlocal_dissipator(p)


def liouvillian(p: ModelParams, kind: MasterEquationKind) -> np.ndarray:
    """Time-independent part of the generator (drive excluded)."""
    return commutator_super(build_hs(p)) + dissipator(p, kind)


def rhs(p: ModelParams, kind: MasterEquationKind, t: float, rho: np.ndarray) -> np.ndarray:
    """``d rho / dt`` evaluated directly on the matrix, without superoperators."""
    rho = np.asarray(rho, dtype=complex)
    h = build_hs(p) + drive_amplitude(p, t) * drive_operator()
    out = -1j * (h @ rho - rho @ h)
    for rate, op in channels(p, kind):
        opd = dagger(op)
        ldl = opd @ op
        out += rate * (op @ rho @ opd - 0.5 * (ldl @ rho + rho @ ldl))
    return out


def drive_diagnostics(p: ModelParams) -> dict:
    """Weak-drive ratios; the tested envelope is ``lambda0 <= 0.05 omega2``."""
    return {
        "lambda0_over_omega2": p.lambda0 / p.omega2,
        "lambda0_over_kappa_bar": (p.lambda0 / p.kappa_bar) if p.kappa_bar > 0 else math.inf,
        "within_tested_envelope": p.lambda0 <= WEAK_DRIVE_ENVELOPE * p.omega2,
    }


def sample_times(t_end: float, dt: float) -> np.ndarray:
    """Uniform grid of multiples of ``dt`` not exceeding ``t_end``.

    The grid stays uniform, so the last sample lies within one ``dt`` of
    ``t_end`` rather than exactly on it.
    """
    n = int(math.floor(t_end / dt + 1e-9))
    return dt * np.arange(n + 1)


def propagate_many(
    p: ModelParams,
    kind: MasterEquationKind,
    rho0s,
    t_end: float,
    settings: IntegratorSettings | None = None,
    times=None,
) -> list[Trajectory]:
    """Propagate several initial states under the same generator.

    The states share one adaptive integration (their vectors are stacked), so
    step control is driven by the worst of them. Results are sampled at
    ``times`` if given, else at multiples of ``settings.sample_dt``.
    """
    kind = MasterEquationKind.parse(kind)
    settings = (settings or IntegratorSettings()).resolved(p)
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    rho0s = [check_density_matrix(r) for r in rho0s]
    if any(r.shape != (4, 4) for r in rho0s):
        raise ValueError("initial states must be 4x4 joint density matrices")
    if times is None:
        times = sample_times(t_end, settings.sample_dt)
    else:
        times = np.asarray(times, dtype=float)
        if times[0] != 0 or np.any(np.diff(times) <= 0) or times[-1] > t_end:
            raise ValueError("times must start at 0, increase strictly and stay within t_end")

    n = len(rho0s)
    lv = liouvillian(p, kind)
    y0 = vec(np.array(rho0s)).reshape(-1)

    if p.lambda0 == 0:
        def f(t, y):
            return (lv @ y.reshape(n, 16).T).T.reshape(-1)
    else:
        drive = commutator_super(drive_operator())
        lam0, wd = p.lambda0, p.drive_frequency

        def f(t, y):
            ys = y.reshape(n, 16).T
            return (lv @ ys + (lam0 * math.sin(wd * t)) * (drive @ ys)).T.reshape(-1)

    sol = solve_ivp(
        f,
        (0.0, float(t_end)),
        y0,
        method=settings.method,
        t_eval=times,
        rtol=settings.rel_tol,
        atol=settings.abs_tol,
        max_step=settings.max_step,
    )
    if sol.status != 0:
        raise IntegrationError(f"integration failed at t={sol.t[-1] if sol.t.size else 0:.6g}: {sol.message}")

    states = unvec(sol.y.T.reshape(len(times), n, 16))
    out = []
    for k in range(n):
        traj_states = np.ascontiguousarray(states[:, k])
        viol = state_violations(traj_states)
        worst = max(viol.values())
        if worst > ABORT_TOL:
            raise IntegrationError(f"state invariants violated beyond {ABORT_TOL:g}: {viol}")
        if worst > SAMPLE_TOL:
            log.warning("state invariants drift beyond %g: %s", SAMPLE_TOL, viol)
        diag = {"violations": viol, "nfev": int(sol.nfev), "within_tolerance": worst <= SAMPLE_TOL}
        out.append(Trajectory(times, traj_states, p, kind, settings, diag))
    return out


def propagate(
    p: ModelParams,
    kind: MasterEquationKind,
    rho0: np.ndarray,
    t_end: float,
    settings: IntegratorSettings | None = None,
    times=None,
) -> Trajectory:
    """Integrate the master equation from ``rho0`` up to ``t_end``."""
    return propagate_many(p, kind, [rho0], t_end, settings, times)[0]


def exact_propagate(p: ModelParams, kind: MasterEquationKind, rho0: np.ndarray, t: float) -> np.ndarray:
    """Matrix-exponential reference solution; only for undriven models."""
    if p.lambda0 != 0:
        raise ValueError("exact propagation requires lambda0 = 0 (time-independent generator)")
    return expm_propagate(liouvillian(p, kind), rho0, t)


def stationary_state(p: ModelParams, kind: MasterEquationKind) -> np.ndarray:
    """Null vector of the undriven generator, normalized to unit trace."""
    w, v = np.linalg.eig(liouvillian(p, kind))
    k = int(np.argmin(np.abs(w)))
    rho = unvec(v[:, k])
    rho = rho / np.trace(rho)
    return 0.5 * (rho + dagger(rho))
