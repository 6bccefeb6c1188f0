"""Majorization-minimization over unit-modulus mirror coefficients.

The transmit-power cost is written as ``||B x||^2`` where ``x = conj(phi)`` holds
the diagonal of the inverse phase matrix and column ``i`` of ``B`` is the
vectorized outer product of column ``i`` of ``pinv(H1)`` with row ``i`` of
``pinv(H2) @ diag(sqrt(p))``. Every MM step minimizes a surrogate that touches
the cost at the current point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import khatri_rao

from .scenario import ChannelSet
from .zf import RankDeficientError, zf_precoder

PAPER = "paper"
SPECTRAL = "spectral"
AUTO = "auto"
SURROGATE_KINDS = (PAPER, SPECTRAL, AUTO)

# |y_i| below this (relative to the surrogate's scale) leaves phase i untouched
ZERO_COEFF_TOL = 1e-14


@dataclass(frozen=True)
class ReducedMap:
    b: np.ndarray
    weighting: str = "unweighted"
    powers: Optional[np.ndarray] = None
    gram: np.ndarray = field(init=False, repr=False)
    lambda_max: float = field(init=False)

    def __post_init__(self):
        b = np.asarray(self.b, dtype=complex)
        if b.ndim == 1:
            b = b[:, None]
        gram = b.conj().T @ b
        gram = 0.5 * (gram + gram.conj().T)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "gram", gram)
        object.__setattr__(self, "lambda_max", float(np.linalg.eigvalsh(gram)[-1]) if gram.size else 0.0)

    @property
    def n(self) -> int:
        return self.b.shape[1]


def _pinv_checked(h: np.ndarray, zf_tol: float) -> np.ndarray:
    prec = zf_precoder(h, zf_tol)
    if prec.rank < min(h.shape):
        raise RankDeficientError(f"channel factor of shape {h.shape} has rank {prec.rank}")
    return prec.g


def anchored_right_inverse(ch: ChannelSet, phases, zf_tol: float = 1e-10) -> np.ndarray:
    """``diag(phi) H1 pinv(W)``: a right inverse of ``H2`` that makes the map exact at ``phases``.

    Swapping it in for ``pinv(H2)`` keeps ``||B x||^2`` an upper bound on the true
    cost for every ``x`` whenever ``N <= M``, with equality at ``phases``.
    """
    phi = np.exp(1j * np.asarray(phases, dtype=float).ravel())
    w = ch.h2 @ (phi[:, None] * ch.h1)
    return (phi[:, None] * ch.h1) @ _pinv_checked(w, zf_tol)


def build_reduced_map(ch: ChannelSet, powers=None, zf_tol: float = 1e-10, right_inverse=None) -> ReducedMap:
    """Reduced linear map of the power cost; ``powers=None`` gives the unweighted (P = I) form.

    ``right_inverse`` (N x K) replaces ``pinv(H2)`` in the map when given.
    """
    h1p = _pinv_checked(ch.h1, zf_tol)  # M x N
    h2p = _pinv_checked(ch.h2, zf_tol) if right_inverse is None else np.asarray(right_inverse, dtype=complex)  # N x K
    if powers is None:
        right = h2p.T  # K x N
        weighting = "unweighted"
    else:
        powers = np.asarray(powers, dtype=float)
        if np.any(powers < 0):
            raise ValueError("powers must be non-negative")
        right = np.sqrt(powers)[:, None] * h2p.T
        weighting = "power_weighted"
    # column i = kron(right[:, i], h1p[:, i]) = vec(h1p[:, i] right[:, i]^T), column-major vec
    b = khatri_rao(right, h1p)
    return ReducedMap(b, weighting, None if powers is None else powers.copy())


def factored_cost(ch: ChannelSet, phases, powers=None) -> float:
    """||pinv(H1) diag(exp(-1j*theta)) pinv(H2) P^(1/2)||_F^2 evaluated as matrices."""
    theta = np.asarray(phases, dtype=float).ravel()
    z = np.linalg.pinv(ch.h1) @ (np.exp(-1j * theta)[:, None] * np.linalg.pinv(ch.h2))
    if powers is not None:
        z = z * np.sqrt(np.asarray(powers, dtype=float))[None, :]
    return float(np.sum(np.abs(z) ** 2))


def objective_power(rmap: ReducedMap, x) -> float:
    v = rmap.b @ np.asarray(x, dtype=complex)
    return float(np.real(np.vdot(v, v)))


def phases_to_x(theta) -> np.ndarray:
    return np.exp(-1j * np.asarray(theta, dtype=float))


def x_to_phases(x) -> np.ndarray:
    return np.mod(-np.angle(x), 2.0 * np.pi)


@dataclass(frozen=True)
class Surrogate:
    """``f(x) = x^H Q x + 2 Re(x^H q_lin) + const_term`` expanded at ``x_t``."""

    kind: str
    quad: np.ndarray
    q_lin: np.ndarray
    const_term: float
    x_t: np.ndarray
    aux: dict

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=complex)
        return float(np.real(np.vdot(x, self.quad @ x)) + 2.0 * np.real(np.vdot(x, self.q_lin)) + self.const_term)


def build_surrogate_paper(rmap: ReducedMap, x_t) -> Surrogate:
    """Closed-form bound with ``A = B^H``, so that ``A A^H = B^H B`` and ``|A^H x_t| = |B x_t|``."""
    x_t = np.asarray(x_t, dtype=complex)
    b = rmap.b
    n = rmap.n
    c = np.abs(b @ x_t)
    c_max = float(c.max()) if c.size else 0.0
    gram = rmap.gram
    m_mat = c_max * gram
    l_mat = b.conj().T @ (c[:, None] * b) - n**2 * gram
    q_lin = (l_mat - m_mat) @ x_t
    const = float(np.real(np.vdot(x_t, (m_mat - l_mat) @ x_t)))
    return Surrogate(PAPER, m_mat, q_lin, const, x_t.copy(), {"c_t": c, "c_max": c_max, "L": l_mat})


def build_surrogate_spectral(rmap: ReducedMap, x_t) -> Surrogate:
    """``lambda_max * I`` majorizes the Gram matrix, giving a bound tight at ``x_t``."""
    x_t = np.asarray(x_t, dtype=complex)
    lam = rmap.lambda_max
    n = rmap.n
    shifted = rmap.gram @ x_t - lam * x_t  # (R - lam I) x_t
    const = float(np.real(np.vdot(x_t, -shifted)))
    return Surrogate(SPECTRAL, lam * np.eye(n), shifted, const, x_t.copy(), {"lambda_max": lam})


def _direction(s: Surrogate) -> tuple:
    if s.kind == SPECTRAL:
        return -s.q_lin, max(1.0, s.aux["lambda_max"])
    if s.aux["c_max"] == 0.0:
        return np.zeros_like(s.x_t), 1.0
    rhs = (s.quad - s.aux["L"]) @ s.x_t  # (M - L) x_t
    y = np.linalg.lstsq(s.quad, rhs, rcond=None)[0]
    return y, 1.0


def minimize_surrogate(s: Surrogate, x_t, rmap: ReducedMap) -> np.ndarray:
    """Closed-form phase update; both signs of the phase are scored on the true cost."""
    x_t = np.asarray(x_t, dtype=complex)
    y, scale = _direction(s)
    move = np.abs(y) > ZERO_COEFF_TOL * scale
    if not np.any(move):
        return x_t.copy()
    ang = np.angle(y[move])
    plus = x_t.copy()
    plus[move] = np.exp(1j * ang)
    minus = x_t.copy()
    minus[move] = np.exp(-1j * ang)
    f_plus = objective_power(rmap, plus)
    f_minus = objective_power(rmap, minus)
    if f_minus < f_plus - 1e-12 * max(1.0, abs(f_plus)):
        return minus
    return plus


@dataclass
class MMState:
    x: np.ndarray
    objective_trace: list
    mse_trace: list
    iterations: int
    converged: bool
    kind: str
    switched_at: Optional[int] = None

    @property
    def phases(self) -> np.ndarray:
        return x_to_phases(self.x)

    def iterations_to(self, mse_tol: float) -> Optional[int]:
        """First iteration whose MSE fell below ``mse_tol`` (1-based), or None."""
        for i, m in enumerate(self.mse_trace, start=1):
            if m < mse_tol:
                return i
        return None


def mm_loop(rmap: ReducedMap, x0, mse_tol: float = 1e-4, max_iter: int = 200, kind: str = SPECTRAL) -> MMState:
    """Run MM from ``x0`` until the successive-iterate MSE drops below ``mse_tol``.

    MSE is ``||x_{t+1} - x_t||^2 / N`` (the squared Frobenius change of the diagonal
    phase matrix relative to its norm). In ``auto`` mode the ``paper`` surrogate is used
    until a step fails to lower the cost; that step is discarded and the loop continues
    with the spectral surrogate for good.
    """
    if kind not in SURROGATE_KINDS:
        raise ValueError(f"unknown surrogate kind {kind!r}")
    x = np.exp(1j * np.angle(np.asarray(x0, dtype=complex)))
    n = x.size
    obj = objective_power(rmap, x)
    obj_trace = [obj]
    mse_trace = []
    active = SPECTRAL if kind == SPECTRAL else PAPER
    switched_at = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if active == PAPER:
            x_new = minimize_surrogate(build_surrogate_paper(rmap, x), x, rmap)
            obj_new = objective_power(rmap, x_new)
            if kind == AUTO and not obj_new < obj:
                active = SPECTRAL
                switched_at = it
        if active == SPECTRAL:
            x_new = minimize_surrogate(build_surrogate_spectral(rmap, x), x, rmap)
            obj_new = objective_power(rmap, x_new)
        mse = float(np.sum(np.abs(x_new - x) ** 2) / n)
        x, obj = x_new, obj_new
        obj_trace.append(obj)
        mse_trace.append(mse)
        if mse < mse_tol:
            converged = True
            break
    return MMState(x, obj_trace, mse_trace, it, converged, kind, switched_at)
