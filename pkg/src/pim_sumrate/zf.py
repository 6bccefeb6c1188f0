"""Cascaded channel, zero-forcing precoder and the rate / power quantities built on it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ChannelSet

TWO_PI = 2.0 * np.pi


class RankDeficientError(RuntimeError):
    """The cascaded channel cannot be zero-forced (numerical rank below K)."""


@dataclass(frozen=True)
class PhaseVector:
    """Mirror phases in [0, 2*pi); ``phi`` is the unit-modulus coefficient vector."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.mod(np.asarray(self.theta, dtype=float).ravel(), TWO_PI)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def from_unit_modulus(cls, x) -> "PhaseVector":
        return cls(np.angle(x))

    @property
    def phi(self) -> np.ndarray:
        return np.exp(1j * self.theta)

    def __len__(self):
        return self.theta.size


@dataclass(frozen=True)
class Precoder:
    g: np.ndarray
    effective_channel: np.ndarray
    min_singular_value: float
    max_singular_value: float
    rank: int

    @property
    def rank_deficient(self) -> bool:
        return self.rank < self.g.shape[1]

    @property
    def column_norms_sq(self) -> np.ndarray:
        """||g_k||^2, the per-user weight of the transmit-power cost."""
        return np.sum(np.abs(self.g) ** 2, axis=0)


def _theta(phases) -> np.ndarray:
    if isinstance(phases, PhaseVector):
        return phases.theta
    return np.asarray(phases, dtype=float).ravel()


def cascade(ch: ChannelSet, phases) -> np.ndarray:
    """K x M end-to-end channel ``h2 @ diag(exp(1j*theta)) @ h1``."""
    phi = np.exp(1j * _theta(phases))
    return (ch.h2 * phi[None, :]) @ ch.h1


def zf_precoder(W: np.ndarray, zf_tol: float = 1e-10) -> Precoder:
    """Moore-Penrose pseudo-inverse of ``W`` via SVD.

    Singular values below ``zf_tol`` times the largest are dropped. A rank below
    K is reported through ``Precoder.rank_deficient``, not raised.
    """
    W = np.atleast_2d(np.asarray(W, dtype=complex))
    u, s, vh = np.linalg.svd(W, full_matrices=False)
    smax = float(s[0]) if s.size else 0.0
    keep = s > zf_tol * smax if smax > 0 else np.zeros_like(s, dtype=bool)
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    g = (vh.conj().T * inv_s[None, :]) @ u.conj().T
    return Precoder(
        g=g,
        effective_channel=W @ g,
        min_singular_value=float(s[-1]) if s.size else 0.0,
        max_singular_value=smax,
        rank=int(np.count_nonzero(keep)),
    )


def precoder_for(ch: ChannelSet, phases, zf_tol: float = 1e-10, strict: bool = True) -> Precoder:
    prec = zf_precoder(cascade(ch, phases), zf_tol)
    if strict and prec.rank_deficient:
        raise RankDeficientError(f"cascaded channel has rank {prec.rank} < K={prec.g.shape[1]}")
    return prec


def power_cost(prec: Precoder, p) -> float:
    """tr(G P G^H) = sum_k p_k ||g_k||^2."""
    p = np.asarray(p, dtype=float)
    return float(np.dot(prec.column_norms_sq, p))


def sinr(ch: ChannelSet, phases, prec, p, noise_power: float) -> np.ndarray:
    """Per-user SINR of an arbitrary linear precoder (interference not assumed nulled).

    ``prec`` is a :class:`Precoder` or a bare M x K beamforming matrix.
    """
    p = np.asarray(p, dtype=float)
    g = prec.g if isinstance(prec, Precoder) else np.asarray(prec, dtype=complex)
    gains = np.abs(cascade(ch, phases) @ g) ** 2  # gains[k, i] = |h_k Theta H1 g_i|^2
    received = gains * p[None, :]
    signal = np.diag(received).copy()
    interference = received.sum(axis=1) - signal
    return signal / (interference + noise_power)


def user_rates(p, noise_power: float) -> np.ndarray:
    return np.log2(1.0 + np.asarray(p, dtype=float) / noise_power)


def sum_rate(p, noise_power: float) -> float:
    return float(np.sum(user_rates(p, noise_power)))
