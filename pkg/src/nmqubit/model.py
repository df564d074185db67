"""Hamiltonians, exact eigensystem, Ohmic rates and global jump operators.

All quantities are in natural units (hbar = k_B = 1). ``kappa_bar`` is the
zero-temperature decay rate of the thermal qubit; the dimensionless bath
coupling is recovered as ``kappa = kappa_bar / omega2`` and used only inside
:func:`ohmic_rates`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, fields

import numpy as np

from .core import dagger, embed, pauli

WEAK_COUPLING_LIMIT = 0.1
SECULAR_RATIO_DEFAULT = 10.0

BASIS_LABELS = ("ee", "eg", "ge", "gg")


class ModelWarning(UserWarning):
    """Parameters outside the regime where the master equations are trusted."""


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the driven CQ / thermal TQ pair.

    ``omega_d`` may be left as ``None``; the drive then runs at ``omega1``.
    ``beta`` may be ``math.inf`` for a zero-temperature bath. ``kappa_bar = 0``
    switches the bath off (unitary dynamics).
    """

    omega1: float
    omega2: float
    J: float
    kappa_bar: float
    beta: float
    lambda0: float = 0.0
    omega_d: float | None = None

    def __post_init__(self):
        for name in ("omega1", "omega2", "J", "kappa_bar", "beta", "lambda0"):
            value = getattr(self, name)
            if not isinstance(value, (int, float, np.floating, np.integer)) or math.isnan(value):
                raise ValueError(f"{name} must be a real number, got {value!r}")
        if self.omega1 <= 0 or not math.isfinite(self.omega1):
            raise ValueError(f"omega1 must be positive and finite, got {self.omega1}")
        if self.omega2 <= 0 or not math.isfinite(self.omega2):
            raise ValueError(f"omega2 must be positive and finite, got {self.omega2}")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.J < 0 or not math.isfinite(self.J):
            raise ValueError(f"J must be non-negative, got {self.J}")
        if self.kappa_bar < 0 or not math.isfinite(self.kappa_bar):
            raise ValueError(f"kappa_bar must be non-negative, got {self.kappa_bar}")
        if self.lambda0 < 0 or not math.isfinite(self.lambda0):
            raise ValueError(f"lambda0 must be non-negative, got {self.lambda0}")
        if self.omega_d is not None and (self.omega_d <= 0 or not math.isfinite(self.omega_d)):
            raise ValueError(f"omega_d must be positive, got {self.omega_d}")
        if self.kappa_bar / self.omega2 > WEAK_COUPLING_LIMIT:
            warnings.warn(
                f"kappa_bar/omega2 = {self.kappa_bar / self.omega2:.3g} exceeds "
                f"{WEAK_COUPLING_LIMIT}; weak system-bath coupling is questionable",
                ModelWarning,
                stacklevel=3,
            )

    @property
    def Delta(self) -> float:
        return self.omega1 - self.omega2

    @property
    def Omega(self) -> float:
        return self.omega1 + self.omega2

    @property
    def drive_frequency(self) -> float:
        return self.omega1 if self.omega_d is None else self.omega_d

    @property
    def kappa(self) -> float:
        """Dimensionless bath coupling."""
        return self.kappa_bar / self.omega2

    def replace(self, **changes) -> "ModelParams":
        data = asdict(self)
        data.update(changes)
        return ModelParams(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_ratios(
        cls,
        *,
        j_over_kappa: float,
        omega2_beta: float,
        delta_over_kappa: float = 0.0,
        omega2_over_kappa: float = 100.0,
        kappa_bar: float = 1.0,
        lambda0: float = 0.0,
        omega_d: float | None = None,
    ) -> "ModelParams":
        """Build parameters from the dimensionless ratios used in the figures."""
        omega2 = omega2_over_kappa * kappa_bar
        return cls(
            omega1=omega2 + delta_over_kappa * kappa_bar,
            omega2=omega2,
            J=j_over_kappa * kappa_bar,
            kappa_bar=kappa_bar,
            beta=omega2_beta / omega2,
            lambda0=lambda0,
            omega_d=omega_d,
        )


def build_hs(p: ModelParams) -> np.ndarray:
    """System Hamiltonian ``sum_j (omega_j/2) sz_j + J sx_1 sx_2``."""
    sz, sx = pauli("z"), pauli("x")
    return (
        0.5 * p.omega1 * embed(sz, 1)
        + 0.5 * p.omega2 * embed(sz, 2)
        + p.J * embed(sx, 1) @ embed(sx, 2)
    )


def drive_operator() -> np.ndarray:
    """``sigma_x`` of the CQ embedded in the joint space."""
    return embed(pauli("x"), 1)


def drive_amplitude(p: ModelParams, t) -> np.ndarray:
    return p.lambda0 * np.sin(p.drive_frequency * np.asarray(t, dtype=float))


def build_hd(p: ModelParams, t: float) -> np.ndarray:
    """Drive Hamiltonian ``lambda0 sin(omega_d t) sx_1``."""
    return drive_amplitude(p, t) * drive_operator()


@dataclass(frozen=True)
class EigenSystem:
    energies: np.ndarray  # E1 <= E2 <= E3 <= E4
    states: np.ndarray  # columns are |E1>, ..., |E4>
    alpha: float
    xi: float
    eta: float
    delta: float
    eps1: float
    eps2: float

    def state(self, k: int) -> np.ndarray:
        """Eigenvector ``|E_k>`` with the 1-based labels used for the levels."""
        return self.states[:, k - 1]

    def ket_bra(self, k: int, m: int) -> np.ndarray:
        return np.outer(self.state(k), self.state(m).conj())


def eigensystem(p: ModelParams) -> EigenSystem:
    """Closed-form eigenpairs of :func:`build_hs`.

    The mixing coefficients are evaluated through half angles,
    ``alpha = cos(phi/2)``, ``xi = sin(phi/2)`` with ``phi = atan2(2J, Omega)``
    and ``eta = cos(theta/2)``, ``delta = -sin(theta/2)`` with
    ``theta = atan2(2J, Delta)``. These equal the usual ratio formulas
    ``(Omega + R)/sqrt((Omega + R)^2 + 4J^2)`` etc. but stay finite at
    ``J = 0`` and do not cancel for ``Delta < 0``. The phase convention is
    ``alpha, eta >= 0``.
    """
    J, Om, De = p.J, p.Omega, p.Delta
    r_om = math.hypot(2 * J, Om)
    r_de = math.hypot(2 * J, De)
    phi = math.atan2(2 * J, Om)
    theta = math.atan2(2 * J, De)
    alpha, xi = math.cos(phi / 2), math.sin(phi / 2)
    eta, delta = math.cos(theta / 2), -math.sin(theta / 2)

    ee, eg, ge, gg = np.eye(4, dtype=complex)
    e4 = alpha * ee + xi * gg
    e3 = eta * eg - delta * ge
    e2 = eta * ge + delta * eg
    e1 = alpha * gg - xi * ee
    E4, E3 = 0.5 * r_om, 0.5 * r_de
    return EigenSystem(
        energies=np.array([-E4, -E3, E3, E4]),
        states=np.column_stack([e1, e2, e3, e4]),
        alpha=alpha,
        xi=xi,
        eta=eta,
        delta=delta,
        eps1=0.5 * (r_om - r_de),
        eps2=0.5 * (r_om + r_de),
    )


@dataclass(frozen=True)
class RatePair:
    down: float
    up: float
    at_frequency: float


def ohmic_rates(omega: float, p: ModelParams) -> RatePair:
    """Ohmic emission/absorption rates at transition frequency ``omega``.

    ``down = (kappa/2) omega [1 + coth(omega beta / 2)]`` and
    ``up = down exp(-omega beta)``, with ``kappa = kappa_bar / omega2``.
    """
    if not omega > 0:
        raise ValueError(f"rates are only defined for positive frequencies, got {omega}")
    x = omega * p.beta
    # 1 + coth(x/2) = 2 / (1 - exp(-x)); expm1 keeps precision at high temperature
    down = p.kappa * omega / -math.expm1(-x) if math.isfinite(x) else p.kappa * omega
    up = down * math.exp(-x)
    return RatePair(down=down, up=up, at_frequency=omega)


@dataclass(frozen=True)
class NonlocalOps:
    Lx1: np.ndarray
    Ly1: np.ndarray
    Lx2: np.ndarray
    Ly2: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    eps1: float
    eps2: float


def nonlocal_lindblad_ops(p: ModelParams) -> NonlocalOps:
    """Global jump operators in the eigenbasis of ``H_S``.

    ``L1`` and ``L2`` lower the energy by ``eps1`` and ``eps2`` respectively,
    ``L_k = (Lx(eps_k) - i Ly(eps_k)) / 2``.
    """
    es = eigensystem(p)
    a, x, e, d = es.alpha, es.xi, es.eta, es.delta
    k = es.ket_bra
    down1 = k(3, 4) + k(1, 2)
    down2 = k(2, 4) - k(1, 3)
    lx1 = (a * e - x * d) * down1
    ly1 = 1j * (a * e + x * d) * down1
    lx2 = (a * d + x * e) * down2
    ly2 = 1j * (a * d - x * e) * down2
    return NonlocalOps(
        Lx1=lx1,
        Ly1=ly1,
        Lx2=lx2,
        Ly2=ly2,
        L1=0.5 * (lx1 - 1j * ly1),
        L2=0.5 * (lx2 - 1j * ly2),
        eps1=es.eps1,
        eps2=es.eps2,
    )


def sigma_minus_expansion(ops: NonlocalOps) -> np.ndarray:
    """Rebuild the TQ lowering operator from the global operators."""
    total = np.zeros((4, 4), dtype=complex)
    for lx, ly in ((ops.Lx1, ops.Ly1), (ops.Lx2, ops.Ly2)):
        total += lx - 1j * ly + dagger(lx) - 1j * dagger(ly)
    return 0.5 * total


@dataclass(frozen=True)
class SecularReport:
    min_gap: float
    max_rate: float
    ratio: float
    valid: bool
    threshold: float


def secular_validity(p: ModelParams, threshold: float = SECULAR_RATIO_DEFAULT) -> SecularReport:
    """Compare the smallest Bohr-frequency gap with the largest decay rate.

    ``valid`` means ``min{2 eps1, 2 eps2, eps2 - eps1} / max{gamma(eps1),
    gamma(eps2)} > threshold``; the default threshold of 10 stands in for
    "much greater than".
    """
    es = eigensystem(p)
    min_gap = min(2 * es.eps1, 2 * es.eps2, es.eps2 - es.eps1)
    if p.kappa_bar == 0:
        max_rate = 0.0
    else:
        max_rate = max(ohmic_rates(es.eps1, p).down, ohmic_rates(es.eps2, p).down)
    ratio = math.inf if max_rate == 0 else min_gap / max_rate
    return SecularReport(
        min_gap=min_gap,
        max_rate=max_rate,
        ratio=ratio,
        valid=ratio > threshold or threshold == 0,
        threshold=threshold,
    )


def gibbs_state(h: np.ndarray, beta: float) -> np.ndarray:
    """Normalized ``exp(-beta h)`` for a Hermitian ``h``."""
    w, v = np.linalg.eigh(h)
    if math.isinf(beta):
        weights = (w <= w.min() + 1e-12).astype(float)
    else:
        weights = np.exp(-beta * (w - w.min()))
    weights /= weights.sum()
    return (v * weights) @ dagger(v)
