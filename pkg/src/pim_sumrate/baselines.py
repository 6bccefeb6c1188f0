"""Reference points: random fixed phases, multi-start phase search and an exhaustive phase grid."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .alternating import Status, power_step
from .power_wf import min_powers, waterfill_exact_batch
from .scenario import STREAM_BASELINE, STREAM_GLOBAL_SEARCH, ChannelSet, RngSeed, ScenarioConfig, random_phases
from .zf import PhaseVector, cascade, power_cost, precoder_for, sum_rate

RANDOM_PHASE = "random_phase"
GLOBAL_SEARCH = "global_search"
GRID = "grid"


class BudgetExceededError(RuntimeError):
    pass


class DimensionTooLargeError(ValueError):
    pass


@dataclass
class BaselineResult:
    kind: str
    sum_rate: float
    phases: PhaseVector
    evaluations: int
    status: Status = Status.CONVERGED
    power_cost: float = 0.0
    powers: np.ndarray = None
    metadata: dict = field(default_factory=dict)


def random_phase_baseline(ch: ChannelSet, cfg: ScenarioConfig, seed: RngSeed, waterfill: str = "exact") -> BaselineResult:
    """One uniformly random, frozen mirror configuration followed by the power step only."""
    ch.check(cfg)
    theta = random_phases(cfg.N, seed.generator(STREAM_BASELINE))
    prec = precoder_for(ch, theta, cfg.zf_tol)
    p_floor = min_powers(cfg.rate_floor_array, cfg.noise_power)
    if np.dot(prec.column_norms_sq, p_floor) > cfg.p_max:
        return BaselineResult(RANDOM_PHASE, 0.0, PhaseVector(theta), 1, Status.INFEASIBLE,
                              power_cost(prec, p_floor), p_floor)
    alloc = power_step(prec, cascade(ch, theta), p_floor, cfg, waterfill)
    return BaselineResult(RANDOM_PHASE, sum_rate(alloc.p, cfg.noise_power), PhaseVector(theta), 1,
                          Status.CONVERGED, power_cost(prec, alloc.p), alloc.p)


class PhaseEvaluator:
    """Batched objective: zero-forcing weights, exact water-filling and the resulting sum rate.

    ``merit`` equals the sum rate where the QoS floors fit the budget and the negative
    relative budget overshoot elsewhere, so feasible points always rank higher.
    """

    def __init__(self, ch: ChannelSet, cfg: ScenarioConfig):
        ch.check(cfg)
        self.ch = ch
        self.cfg = cfg
        self.p_floor = min_powers(cfg.rate_floor_array, cfg.noise_power)
        self.evaluations = 0

    def weights(self, thetas: np.ndarray) -> np.ndarray:
        phi = np.exp(1j * thetas)  # (B, N)
        W = (self.ch.h2[None, :, :] * phi[:, None, :]) @ self.ch.h1[None, :, :]  # (B, K, M)
        gram = W @ np.conj(np.swapaxes(W, 1, 2))
        try:
            inv = np.linalg.inv(gram)
        except np.linalg.LinAlgError:
            inv = np.stack([np.linalg.pinv(g) for g in gram])
        w = np.real(np.diagonal(inv, axis1=1, axis2=2)).copy()
        w[~np.isfinite(w) | (w <= 0)] = np.inf
        return w

    def __call__(self, thetas) -> tuple:
        """Return ``(merit, rate, feasible)`` arrays for a (B, N) batch of phase vectors."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        self.evaluations += thetas.shape[0]
        cfg = self.cfg
        w = self.weights(thetas)
        finite = np.all(np.isfinite(w), axis=1)
        w_safe = np.where(finite[:, None], w, 1.0)
        p, feasible = waterfill_exact_batch(w_safe, self.p_floor, cfg.p_max, cfg.noise_power)
        feasible &= finite
        rate = np.sum(np.log2(1.0 + p / cfg.noise_power), axis=1)
        overshoot = (np.sum(w_safe * self.p_floor, axis=1) - cfg.p_max) / max(cfg.p_max, 1e-300)
        merit = np.where(feasible, rate, -np.where(finite, overshoot, np.inf))
        return merit, np.where(feasible, rate, 0.0), feasible


def _finish(kind: str, ev: PhaseEvaluator, theta: np.ndarray, evaluations: int, metadata: dict) -> BaselineResult:
    cfg = ev.cfg
    prec = precoder_for(ev.ch, theta, cfg.zf_tol, strict=False)
    merit, rate, feasible = ev(theta[None, :])
    if not feasible[0]:
        return BaselineResult(kind, 0.0, PhaseVector(theta), evaluations, Status.INFEASIBLE,
                              power_cost(prec, ev.p_floor), ev.p_floor, metadata)
    alloc = power_step(prec, cascade(ev.ch, theta), ev.p_floor, cfg, "exact")
    return BaselineResult(kind, sum_rate(alloc.p, cfg.noise_power), PhaseVector(theta), evaluations,
                          Status.CONVERGED, power_cost(prec, alloc.p), alloc.p, metadata)


def _pattern_search(ev: PhaseEvaluator, theta: np.ndarray, step0: float, min_step: float, max_evals: int):
    """Best-improvement coordinate search with step halving; returns (theta, merit, converged, evals)."""
    n = theta.size
    best = ev(theta[None, :])[0][0]
    evals = 1
    step = step0
    eye = np.eye(n)
    while step >= min_step:
        if evals + 2 * n > max_evals:
            return theta, best, False, evals
        cands = np.concatenate([theta + step * eye, theta - step * eye])
        merit = ev(cands)[0]
        evals += 2 * n
        i = int(np.argmax(merit))
        if merit[i] > best:
            theta, best = np.mod(cands[i], 2 * np.pi), merit[i]
        else:
            step *= 0.5
    return theta, best, True, evals


def global_search(ch: ChannelSet, cfg: ScenarioConfig, restarts: int = 20, seed: RngSeed = RngSeed(0),
                  max_evals_per_start: int = 50_000, min_step: float = 1e-7) -> BaselineResult:
    """Multi-start pattern search over the phases with exact water-filling at every point.

    Start ``i`` is the ``i``-th uniform draw of the realization's search stream, so a run
    with more restarts contains every start of a run with fewer.
    """
    if restarts < 1:
        raise ValueError("restarts must be positive")
    ev = PhaseEvaluator(ch, cfg)
    rng = seed.generator(STREAM_GLOBAL_SEARCH)
    starts = [random_phases(cfg.N, rng) for _ in range(restarts)]
    best_theta, best_merit, any_converged, total = None, -np.inf, False, 0
    for start in starts:
        theta, merit, converged, evals = _pattern_search(ev, start, np.pi / 2, min_step, max_evals_per_start)
        total += evals
        any_converged |= converged
        if best_theta is None or merit > best_merit or (merit == best_merit and tuple(theta) < tuple(best_theta)):
            best_theta, best_merit = theta, merit
    if not any_converged:
        raise BudgetExceededError(f"no start converged within {max_evals_per_start} evaluations")
    meta = {"method": "multistart best-improvement coordinate search with step halving",
            "restarts": restarts, "min_step": min_step}
    return _finish(GLOBAL_SEARCH, ev, best_theta, total, meta)


def grid_oracle(ch: ChannelSet, cfg: ScenarioConfig, steps_per_dim: int = 720, chunk: int = 20_000) -> BaselineResult:
    """Exhaustive search over the uniform phase grid with ``steps_per_dim`` points per mirror unit.

    A common phase rotation leaves the cost unchanged and maps the grid onto itself,
    so the first phase is pinned to 0 and only ``steps_per_dim**(N-1)`` points are scored.
    """
    if cfg.N > 3:
        raise DimensionTooLargeError(f"grid oracle supports N <= 3, got N={cfg.N}")
    if not 1 <= steps_per_dim <= 3600:
        raise ValueError("steps_per_dim must lie in [1, 3600]")
    ev = PhaseEvaluator(ch, cfg)
    axis = 2 * np.pi * np.arange(steps_per_dim) / steps_per_dim
    best_theta, best_merit = np.zeros(cfg.N), -np.inf
    if cfg.N == 1:
        best_merit = ev(best_theta[None, :])[0][0]
        count = 1
    else:
        grid = itertools.product(axis, repeat=cfg.N - 1)
        count = 0
        while True:
            block = np.array(list(itertools.islice(grid, chunk)))
            if block.size == 0:
                break
            thetas = np.concatenate([np.zeros((block.shape[0], 1)), block], axis=1)
            merit = ev(thetas)[0]
            i = int(np.argmax(merit))  # first maximum = lexicographically smallest phase
            if merit[i] > best_merit:
                best_theta, best_merit = thetas[i], merit[i]
            count += block.shape[0]
    return _finish(GRID, ev, best_theta, count, {"steps_per_dim": steps_per_dim})
