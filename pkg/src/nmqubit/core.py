"""Linear algebra and state utilities for one and two qubits.

Conventions used throughout the package:

* single-qubit basis ``{|e>, |g>}`` with ``sigma_z |e> = +|e>``;
* two-qubit basis ``|ee>, |eg>, |ge>, |gg>`` with the cold qubit as the left
  (major) tensor factor;
* column-major vectorization, ``vec(rho) = rho.reshape(-1, order="F")``, so
  that ``vec(A X B) = (B^T kron A) vec(X)``.
"""

from __future__ import annotations

import numpy as np

DEFAULT_TOL = 1e-9

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    # raising |g> -> |e>, i.e. a single 1 at (row e, col g)
    "+": np.array([[0, 1], [0, 0]], dtype=complex),
    "-": np.array([[0, 0], [1, 0]], dtype=complex),
    "id": np.eye(2, dtype=complex),
}
_ALIASES = {"plus": "+", "minus": "-", "−": "-", "i": "id", "identity": "id"}


class StateError(ValueError):
    """Raised when a matrix fails the density-matrix checks."""


def pauli(which: str) -> np.ndarray:
    """Return the 2x2 Pauli, ladder or identity matrix named by ``which``.

    Accepted labels are ``x``, ``y``, ``z``, ``+``, ``-`` and ``id``.
    """
    key = _ALIASES.get(which, which)
    try:
        return _PAULI[key].copy()
    except KeyError:
        raise ValueError(f"unknown Pauli label {which!r}") from None


def kron(a, b) -> np.ndarray:
    """Kronecker product with ``a`` as the left (major) factor."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ValueError("kron expects two square matrices")
    return np.kron(a, b)


def embed(op, site: int) -> np.ndarray:
    """Embed a single-qubit operator on ``site`` (1 = CQ, 2 = TQ)."""
    if site == 1:
        return kron(op, np.eye(2))
    if site == 2:
        return kron(np.eye(2), op)
    raise ValueError("site must be 1 or 2")


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def vec(rho: np.ndarray) -> np.ndarray:
    """Column-major vectorization (works on a stack ``(..., n, n)``)."""
    rho = np.asarray(rho)
    return np.swapaxes(rho, -1, -2).reshape(rho.shape[:-2] + (-1,))


def unvec(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    n = int(round(np.sqrt(v.shape[-1])))
    if n * n != v.shape[-1]:
        raise ValueError("vector length is not a perfect square")
    return np.swapaxes(v.reshape(v.shape[:-1] + (n, n)), -1, -2)


def spre(a: np.ndarray) -> np.ndarray:
    """Superoperator of left multiplication ``X -> a X``."""
    return np.kron(np.eye(a.shape[0]), a)


def spost(a: np.ndarray) -> np.ndarray:
    """Superoperator of right multiplication ``X -> X a``."""
    return np.kron(a.T, np.eye(a.shape[0]))


def commutator_super(h: np.ndarray) -> np.ndarray:
    """Superoperator of ``X -> -i [h, X]``."""
    return -1j * (spre(h) - spost(h))


def lindblad_super(op: np.ndarray, rate: float) -> np.ndarray:
    """Superoperator of ``rate * (L X L^+ - {L^+ L, X}/2)``."""
    op = np.asarray(op, dtype=complex)
    ldl = dagger(op) @ op
    return rate * (np.kron(op.conj(), op) - 0.5 * spre(ldl) - 0.5 * spost(ldl))


def partial_trace_over_tq(rho: np.ndarray) -> np.ndarray:
    """Reduced CQ state ``tr_2 rho``; accepts a single 4x4 matrix or a stack."""
    rho = np.asarray(rho)
    if rho.shape[-2:] != (4, 4):
        raise ValueError(f"expected a 4x4 joint state, got shape {rho.shape[-2:]}")
    r = rho.reshape(rho.shape[:-2] + (2, 2, 2, 2))
    return np.einsum("...ajbj->...ab", r)


def bloch_of(rho: np.ndarray) -> np.ndarray:
    """Bloch vector ``r_i = tr(rho sigma_i)`` of a qubit state (or a stack)."""
    rho = np.asarray(rho)
    if rho.shape[-2:] != (2, 2):
        raise ValueError("bloch_of expects 2x2 matrices")
    x = 2.0 * rho[..., 1, 0].real
    y = 2.0 * rho[..., 1, 0].imag
    z = (rho[..., 0, 0] - rho[..., 1, 1]).real
    return np.stack([x, y, z], axis=-1)


def state_of(r) -> np.ndarray:
    """Qubit state ``(I + r . sigma) / 2`` for a Bloch vector ``r``."""
    r = np.asarray(r, dtype=float)
    if r.shape[-1] != 3:
        raise ValueError("Bloch vectors have three components")
    out = np.empty(r.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0] = 0.5 * (1 + r[..., 2])
    out[..., 1, 1] = 0.5 * (1 - r[..., 2])
    out[..., 0, 1] = 0.5 * (r[..., 0] - 1j * r[..., 1])
    out[..., 1, 0] = 0.5 * (r[..., 0] + 1j * r[..., 1])
    return out


def state_violations(rho: np.ndarray) -> dict[str, float]:
    """Worst-case deviations from Hermiticity, unit trace and positivity.

    Works on a single matrix or a stack; the returned numbers are maxima over
    the stack. ``negativity`` is ``max(0, -min eigenvalue)``.
    """
    rho = np.asarray(rho)
    herm = np.abs(rho - dagger(rho)).max()
    tr = np.abs(np.trace(rho, axis1=-2, axis2=-1) - 1.0).max()
    # eigvalsh only reads one triangle; symmetrize so the anti-Hermitian part
    # is reported by ``herm`` alone.
    eig = np.linalg.eigvalsh(0.5 * (rho + dagger(rho)))
    neg = max(0.0, -float(eig.min()))
    return {"hermiticity": float(herm), "trace": float(tr), "negativity": neg}


def is_density_matrix(rho: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    v = state_violations(rho)
    return max(v.values()) <= tol


def check_density_matrix(rho: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Return ``rho`` as a complex array, raising :class:`StateError` if invalid."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim < 2 or rho.shape[-1] != rho.shape[-2] or rho.shape[-1] not in (2, 4):
        raise StateError(f"density matrices must be 2x2 or 4x4, got {rho.shape}")
    v = state_violations(rho)
    bad = {k: x for k, x in v.items() if x > tol}
    if bad:
        desc = ", ".join(f"{k}={x:.3g}" for k, x in bad.items())
        raise StateError(f"not a density matrix at tol={tol:g}: {desc}")
    return rho


def trace_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Trace distance ``||a - b||_1 / 2`` between Hermitian matrices (stack-aware)."""
    d = np.asarray(a) - np.asarray(b)
    return 0.5 * np.abs(np.linalg.eigvalsh(0.5 * (d + dagger(d)))).sum(axis=-1)


def purity(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho)
    return np.einsum("...ij,...ji->...", rho, rho).real


def expm_taylor(m: np.ndarray, tol: float = 1e-16) -> np.ndarray:
    """Matrix exponential by scaling and squaring of a truncated Taylor series.

    Kept independent of :func:`scipy.linalg.expm` so it can serve as an
    oracle for the ODE integrator.
    """
    m = np.asarray(m, dtype=complex)
    norm = np.abs(m).sum(axis=0).max() if m.size else 0.0
    squarings = max(0, int(np.ceil(np.log2(norm / 0.25)))) if norm > 0.25 else 0
    a = m / 2.0**squarings
    result = np.eye(m.shape[0], dtype=complex)
    term = np.eye(m.shape[0], dtype=complex)
    for k in range(1, 40):
        term = term @ a / k
        result = result + term
        if np.abs(term).max() <= tol * np.abs(result).max():
            break
    for _ in range(squarings):
        result = result @ result
    return result


def expm_propagate(liouvillian, rho0: np.ndarray, t: float) -> np.ndarray:
    """Exact propagation ``unvec(exp(L t) vec(rho0))`` for a constant generator.

    ``liouvillian`` must be a fixed 16x16 (or 4x4 for one qubit) matrix; a
    callable generator is rejected because it is time dependent.
    """
    if callable(liouvillian):
        raise ValueError("expm_propagate only handles time-independent generators")
    lv = np.asarray(liouvillian, dtype=complex)
    rho0 = np.asarray(rho0, dtype=complex)
    n = rho0.shape[-1]
    if lv.shape != (n * n, n * n):
        raise ValueError(f"generator shape {lv.shape} does not match a {n}x{n} state")
    if t == 0:
        return rho0.copy()
    return unvec(expm_taylor(lv * t) @ vec(rho0))
