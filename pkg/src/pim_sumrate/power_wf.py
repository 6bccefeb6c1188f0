"""Power allocation for fixed mirror phases under per-user QoS floors.

Two solvers live here: the closed-form eigenvalue water-filling written for the
alternating scheme (kept verbatim so it can be audited) and an exact KKT solver
for ``max sum log2(1 + p_k / s2)`` s.t. ``sum w_k p_k <= p_max``, ``p_k >= floor_k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LN2 = np.log(2.0)


class InfeasibleError(ValueError):
    """The QoS floors alone exceed the power budget."""


class NoPositiveEigenvaluesError(ValueError):
    pass


@dataclass(frozen=True)
class WaterfillInput:
    weights: np.ndarray
    p_floor: np.ndarray
    p_max: float
    noise_power: float = 1.0

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        f = np.atleast_1d(np.asarray(self.p_floor, dtype=float))
        if f.shape != w.shape:
            raise ValueError(f"weights {w.shape} and floors {f.shape} differ in shape")
        if np.any(f < 0):
            raise ValueError("power floors must be non-negative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "p_floor", f)


@dataclass(frozen=True)
class PowerAllocation:
    p: np.ndarray
    feasible: bool
    water_level: float
    active_floor_mask: np.ndarray
    kkt: dict = None

    def sum_rate(self, noise_power: float) -> float:
        return float(np.sum(np.log2(1.0 + self.p / noise_power)))


def min_powers(rate_floors, noise_power: float) -> np.ndarray:
    """Smallest powers meeting the rate floors under zero forcing: s2 * (2**R - 1)."""
    return noise_power * (np.exp2(np.asarray(rate_floors, dtype=float)) - 1.0)


def feasibility_check(inp: WaterfillInput) -> bool:
    return bool(np.dot(inp.weights, inp.p_floor) <= inp.p_max)


def _kkt_report(inp: WaterfillInput, p: np.ndarray) -> dict:
    w, f, s2 = inp.weights, inp.p_floor, inp.noise_power
    above = p > f * (1 + 1e-12) + 1e-15
    marginal = w * (s2 + p)  # equal across users above their floors at the optimum
    if np.any(above):
        spread = float((marginal[above].max() - marginal[above].min()) / marginal[above].max())
    else:
        spread = 0.0
    return {
        "budget_residual": float(np.dot(w, p) - inp.p_max),
        "marginal_spread": spread,
        "floor_violation": float(np.max(f - p, initial=0.0)),
        "above_floor": above,
    }


def _level_from_active(inp: WaterfillInput, active: np.ndarray) -> float:
    # budget: sum_{active} (mu - w_k s2) + sum_{rest} w_k f_k = p_max
    w, f, s2 = inp.weights, inp.p_floor, inp.noise_power
    return float((inp.p_max - np.dot(w[~active], f[~active]) + s2 * np.sum(w[active])) / np.count_nonzero(active))


def _allocate(inp: WaterfillInput, mu: float) -> np.ndarray:
    return np.maximum(inp.p_floor, mu / inp.weights - inp.noise_power)


def _breakpoint_level(inp: WaterfillInput) -> float:
    """Exact level ``mu = 1 / (nu ln 2)`` from the sorted breakpoints of the piecewise-linear budget."""
    w, f, s2 = inp.weights, inp.p_floor, inp.noise_power
    bp = w * (f + s2)  # user k rises above its floor once mu exceeds bp[k]
    order = np.argsort(bp)
    k = w.size
    # budget(mu) = sum_k max(w_k f_k, mu - w_k s2) is increasing and piecewise linear
    for j in range(k):
        active = np.zeros(k, dtype=bool)
        active[order[: j + 1]] = True
        mu = _level_from_active(inp, active)
        upper = bp[order[j + 1]] if j + 1 < k else np.inf
        if mu <= upper:
            return max(mu, bp[order[j]])
    raise AssertionError("unreachable: last segment is unbounded")  # pragma: no cover


def _bisection_level(inp: WaterfillInput, lo: float = 1e-18, hi: float = 1e18, max_iter: int = 200) -> float:
    # bisection on nu in log space; mu = 1 / (nu ln 2)
    w = inp.weights

    def excess(nu):
        return np.dot(w, _allocate(inp, 1.0 / (nu * LN2))) - inp.p_max

    log_lo, log_hi = np.log(lo), np.log(hi)
    for _ in range(max_iter):
        mid = 0.5 * (log_lo + log_hi)
        if excess(np.exp(mid)) > 0:
            log_lo = mid  # too much power: raise the price
        else:
            log_hi = mid
        if log_hi - log_lo < 1e-15:
            break
    return 1.0 / (np.exp(log_hi) * LN2)


def waterfill_exact(inp: WaterfillInput, method: str = "breakpoints") -> PowerAllocation:
    """Exact KKT solution; ``water_level`` is ``1 / (nu ln 2)`` (``nan`` when every user sits on its floor).

    ``method="bisection"`` finds the multiplier numerically and then snaps to the
    closed-form level of the identified active set.
    """
    w, f = inp.weights, inp.p_floor
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    if not feasibility_check(inp):
        raise InfeasibleError(f"floors need {np.dot(w, f):.6g} > p_max={inp.p_max:.6g}")
    if method == "breakpoints":
        mu = _breakpoint_level(inp)
    elif method == "bisection":
        mu = _bisection_level(inp)
        active = mu / w - inp.noise_power > f
        if np.any(active):
            mu = _level_from_active(inp, active)
    else:
        raise ValueError(f"unknown method {method!r}")
    p = _allocate(inp, mu)
    on_floor = p <= f
    p[on_floor] = f[on_floor]
    level = mu if not np.all(on_floor) else float("nan")
    return PowerAllocation(p, True, level, on_floor, _kkt_report(inp, p))


def waterfill_paper(eigenvalues, p_floor, p_max: float, noise_power: float = 1.0, rank_tol: float = 1e-10) -> PowerAllocation:
    """Eigenvalue water-filling, applied verbatim.

    ``p_k = [alpha*lam_k - s2]^+ + p_floor_k / lam_k`` with
    ``alpha = (p_max - sum_k p_floor_k / lam_k + s2 * sum_{k<=q} 1/lam_k) / q`` and ``q``
    the number of non-zero eigenvalues. ``eigenvalues`` must be sorted in descending
    order and aligned with ``p_floor``. The formula is not re-derived: ``feasible`` only
    reports whether the result satisfies ``sum_k p_k / lam_k <= p_max`` and the floors.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    f = np.asarray(p_floor, dtype=float)
    if np.any(np.diff(lam) > 0):
        raise ValueError("eigenvalues must be sorted in descending order")
    s2 = noise_power
    nz = lam > rank_tol * max(1.0, float(lam.max(initial=0.0)))
    q = int(np.count_nonzero(nz))
    if q == 0:
        raise NoPositiveEigenvaluesError("no positive eigenvalues")
    inv = np.zeros_like(lam)
    inv[nz] = 1.0 / lam[nz]
    alpha = (p_max - np.sum(f * inv) + s2 * np.sum(inv[:q])) / q
    p = np.maximum(alpha * lam - s2, 0.0) + f * inv
    p[~nz] = 0.0
    cost = float(np.sum(p * inv))
    feasible = bool(cost <= p_max * (1 + 1e-9) and np.all(p >= f - 1e-9) and np.all(nz | (f == 0)))
    return PowerAllocation(p, feasible, float(alpha), alpha * lam - s2 <= 0, {"budget_used": cost})


def waterfill_exact_batch(weights, p_floor, p_max: float, noise_power: float = 1.0):
    """Vectorized :func:`waterfill_exact` over a batch of weight vectors.

    ``weights`` is (B, K). Returns ``(p, feasible)`` with ``p`` of shape (B, K);
    rows whose floors exceed the budget come back as the floors with ``feasible=False``.
    """
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    f = np.broadcast_to(np.asarray(p_floor, dtype=float), w.shape)
    s2 = noise_power
    floor_cost = np.sum(w * f, axis=1)
    feasible = floor_cost <= p_max
    bp = w * (f + s2)
    order = np.argsort(bp, axis=1)
    bp_s = np.take_along_axis(bp, order, axis=1)
    w_s = np.take_along_axis(w, order, axis=1)
    wf_s = np.take_along_axis(w * f, order, axis=1)
    k = w.shape[1]
    n_active = np.arange(1, k + 1)
    # level when the j+1 users with the smallest breakpoints are above their floors
    mu = (p_max - (floor_cost[:, None] - np.cumsum(wf_s, axis=1)) + s2 * np.cumsum(w_s, axis=1)) / n_active
    upper = np.concatenate([bp_s[:, 1:], np.full((w.shape[0], 1), np.inf)], axis=1)
    j = np.argmax(mu <= upper, axis=1)
    level = np.maximum(mu[np.arange(w.shape[0]), j], bp_s[:, 0])
    p = np.maximum(f, level[:, None] / w - s2)
    p = np.where(feasible[:, None], p, f)
    return p, feasible
