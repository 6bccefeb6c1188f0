"""Alternating phase / power optimization with QoS floors and an infeasibility exit."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import phase_mm
from .power_wf import PowerAllocation, WaterfillInput, min_powers, waterfill_exact, waterfill_paper
from .scenario import STREAM_PHASE_INIT, ChannelSet, RngSeed, ScenarioConfig, random_phases
from .zf import PhaseVector, cascade, Precoder, power_cost, precoder_for, sum_rate, user_rates

WEIGHTED = "weighted"
PAPER_LITERAL = "paper_literal"
ANCHOR_PINV = "pinv"
ANCHOR_CURRENT = "current"


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    INFEASIBLE = "Infeasible"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class SolverOptions:
    surrogate: str = phase_mm.SPECTRAL
    weighting: str = WEIGHTED
    waterfill: str = "exact"
    anchor: str = ANCHOR_CURRENT

    def __post_init__(self):
        if self.surrogate not in phase_mm.SURROGATE_KINDS:
            raise ValueError(f"surrogate must be one of {phase_mm.SURROGATE_KINDS}")
        if self.weighting not in (WEIGHTED, PAPER_LITERAL):
            raise ValueError("weighting must be 'weighted' or 'paper_literal'")
        if self.waterfill not in ("exact", "paper"):
            raise ValueError("waterfill must be 'exact' or 'paper'")
        if self.anchor not in (ANCHOR_PINV, ANCHOR_CURRENT):
            raise ValueError("anchor must be 'pinv' or 'current'")


@dataclass(frozen=True)
class OuterStep:
    sum_rate: float
    power_cost: float
    mm_iterations: int
    phase_step_accepted: bool = True
    budget_ok: bool = True


@dataclass
class Solution:
    phases: PhaseVector
    powers: PowerAllocation
    sum_rate: float
    status: Status
    outer_trace: list = field(default_factory=list)
    power_cost: float = 0.0

    @property
    def outer_iterations(self) -> int:
        return len(self.outer_trace)

    @property
    def mm_iterations(self) -> int:
        return sum(s.mm_iterations for s in self.outer_trace)

    @property
    def rate_trace(self) -> np.ndarray:
        return np.array([s.sum_rate for s in self.outer_trace])


def paper_eigen_allocation(prec: Precoder, W: np.ndarray, p_floor, cfg: ScenarioConfig) -> PowerAllocation:
    """Eigenvalue water-filling on the cascade Gram matrix, re-checked against the true budget.

    Eigenvalues (descending) are paired with users in order of descending power floor.
    """
    lam = np.sort(np.linalg.eigvalsh(W @ W.conj().T))[::-1]
    lam = np.clip(lam, 0.0, None)
    order = np.argsort(-np.asarray(p_floor), kind="stable")
    raw = waterfill_paper(lam, np.asarray(p_floor)[order], cfg.p_max, cfg.noise_power)
    p = np.empty_like(raw.p)
    p[order] = raw.p
    ok = power_cost(prec, p) <= cfg.p_max * (1 + 1e-9) and bool(np.all(p >= np.asarray(p_floor) - 1e-9))
    mask = np.empty_like(raw.active_floor_mask)
    mask[order] = raw.active_floor_mask
    return PowerAllocation(p, ok, raw.water_level, mask, raw.kkt)


def power_step(prec: Precoder, W: np.ndarray, p_floor, cfg: ScenarioConfig, method: str = "exact") -> PowerAllocation:
    if method == "paper":
        return paper_eigen_allocation(prec, W, p_floor, cfg)
    return waterfill_exact(WaterfillInput(prec.column_norms_sq, p_floor, cfg.p_max, cfg.noise_power))


def solve(ch: ChannelSet, cfg: ScenarioConfig, seed: RngSeed, options: SolverOptions = SolverOptions()) -> Solution:
    """Alternate MM phase updates and water-filling until the sum rate settles.

    Phases start uniform at random from the realization seed and powers at the
    QoS floors. Each outer pass runs the MM loop on the power-cost map, declares the
    realization infeasible if the floors no longer fit the budget, and otherwise
    re-allocates power. In weighted mode a phase update that would raise the true
    cost at the current powers is discarded, which keeps the rate trace monotone.
    With ``anchor="current"`` and ``N <= M`` the weighted map is rebuilt around the
    current phases each pass, so the MM loop descends a tight bound on the true cost.

    Raises :class:`~pim_sumrate.zf.RankDeficientError` when the cascade cannot be
    zero-forced.
    """
    ch.check(cfg)
    s2 = cfg.noise_power
    p_floor = min_powers(cfg.rate_floor_array, s2)
    theta = random_phases(cfg.N, seed.generator(STREAM_PHASE_INIT))
    p = p_floor.copy()
    prec = precoder_for(ch, theta, cfg.zf_tol)
    trace = []
    alloc = None
    status = Status.MAX_ITERATIONS
    prev_rate = None
    weighted = options.weighting == WEIGHTED
    anchored = weighted and options.anchor == ANCHOR_CURRENT and cfg.N <= cfg.M

    for _ in range(cfg.outer_max_iter):
        right = phase_mm.anchored_right_inverse(ch, theta, cfg.zf_tol) if anchored else None
        rmap = phase_mm.build_reduced_map(ch, p if weighted else None, cfg.zf_tol, right)
        mm = phase_mm.mm_loop(rmap, phase_mm.phases_to_x(theta), cfg.mm_mse_tol, cfg.mm_max_iter, options.surrogate)
        cand = mm.phases
        cand_prec = precoder_for(ch, cand, cfg.zf_tol)
        accepted = True
        if weighted and power_cost(cand_prec, p) > power_cost(prec, p) * (1 + 1e-12):
            accepted = False
        if accepted:
            theta, prec = cand, cand_prec

        if np.dot(prec.column_norms_sq, p_floor) > cfg.p_max:
            status = Status.INFEASIBLE
            break

        W = cascade(ch, theta)
        alloc = power_step(prec, W, p_floor, cfg, options.waterfill)
        p = alloc.p
        rate = sum_rate(p, s2)
        trace.append(OuterStep(rate, power_cost(prec, p), mm.iterations, accepted, alloc.feasible))
        if prev_rate is not None and abs(rate - prev_rate) <= cfg.outer_rel_tol * max(abs(prev_rate), 1e-300):
            status = Status.CONVERGED
            break
        prev_rate = rate

    phases = PhaseVector(theta)
    if status is Status.INFEASIBLE:
        floors = PowerAllocation(p_floor.copy(), False, float("nan"), np.ones(cfg.K, dtype=bool))
        return Solution(phases, floors, 0.0, status, trace, power_cost(prec, p_floor))
    return Solution(phases, alloc, sum_rate(alloc.p, s2), status, trace, power_cost(prec, alloc.p))


def qos_violation(sol: Solution, cfg: ScenarioConfig) -> np.ndarray:
    """``R_min_k - log2(1 + p_k / s2)``; non-positive entries mean the floor is met."""
    return cfg.rate_floor_array - user_rates(sol.powers.p, cfg.noise_power)
