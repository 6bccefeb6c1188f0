import dataclasses

import numpy as np
import pytest

from conftest import random_channels
from pim_sumrate.alternating import PAPER_LITERAL, SolverOptions, Status, qos_violation, solve
from pim_sumrate.baselines import random_phase_baseline
from pim_sumrate.scenario import ChannelSet, RngSeed, ScenarioConfig, generate_channels, snr_config
from pim_sumrate.zf import power_cost, precoder_for, sum_rate


def check_solution(sol, ch, cfg):
    assert sol.status in (Status.CONVERGED, Status.MAX_ITERATIONS, Status.INFEASIBLE)
    if sol.status is Status.INFEASIBLE:
        return
    prec = precoder_for(ch, sol.phases.theta)
    assert power_cost(prec, sol.powers.p) <= cfg.p_max * (1 + 1e-8)
    assert np.max(qos_violation(sol, cfg)) <= 1e-9
    assert np.all(np.diff(sol.rate_trace) >= -1e-9)
    assert sol.sum_rate == pytest.approx(sum_rate(sol.powers.p, cfg.noise_power))


def test_scalar_link():
    cfg = ScenarioConfig(1, 1, 1, p_max=10.0)
    ch = ChannelSet([[1.0]], [[1.0]])
    sol = solve(ch, cfg, RngSeed(5))
    assert sol.sum_rate == pytest.approx(np.log2(11))
    assert sol.powers.p == pytest.approx([10.0])
    assert sol.status is Status.CONVERGED


def test_infeasible_floors():
    cfg = ScenarioConfig(1, 1, 1, p_max=10.0, rate_floors=(4.0,))  # needs 15 > 10
    sol = solve(ChannelSet([[1.0]], [[1.0]]), cfg, RngSeed(5))
    assert sol.status is Status.INFEASIBLE
    assert sol.sum_rate == 0.0
    assert not sol.powers.feasible


def test_floor_exactly_met_gives_zero_violation():
    cfg = ScenarioConfig(1, 1, 1, p_max=15.0, rate_floors=(4.0,))
    sol = solve(ChannelSet([[1.0]], [[1.0]]), cfg, RngSeed(5))
    assert qos_violation(sol, cfg) == pytest.approx([0.0], abs=1e-12)


def test_zero_floors_never_violated(rng):
    cfg = snr_config(2, 3, 3, 10.0)
    sol = solve(random_channels(rng, 2, 3, 3), cfg, RngSeed(1))
    assert np.all(qos_violation(sol, cfg) <= 0)


def test_deterministic():
    cfg = snr_config(3, 4, 4, 15.0, "fixed(1)")
    ch = generate_channels(cfg, RngSeed(9, 3))
    a, b = solve(ch, cfg, RngSeed(9, 3)), solve(ch, cfg, RngSeed(9, 3))
    assert np.array_equal(a.phases.theta, b.phases.theta)
    assert np.array_equal(a.rate_trace, b.rate_trace)


@pytest.mark.parametrize("options", [
    SolverOptions(),
    SolverOptions(surrogate="auto"),
    SolverOptions(surrogate="paper"),
])
def test_weighted_modes_keep_guarantees(options):
    cfg = snr_config(2, 4, 4, 10.0, "fixed(1)")
    for r in range(10):
        seed = RngSeed(4, r)
        ch = generate_channels(cfg, seed)
        check_solution(solve(ch, cfg, seed, options), ch, cfg)


def test_paper_literal_and_paper_waterfill_run():
    cfg = snr_config(2, 4, 4, 10.0, "fixed(1)")
    for options in (SolverOptions(weighting=PAPER_LITERAL), SolverOptions(waterfill="paper")):
        seed = RngSeed(4, 0)
        sol = solve(generate_channels(cfg, seed), cfg, seed, options)
        assert sol.status in (Status.CONVERGED, Status.MAX_ITERATIONS, Status.INFEASIBLE)
        assert all(np.isfinite(s.sum_rate) for s in sol.outer_trace)


def test_phase_step_never_raises_true_cost():
    cfg = snr_config(2, 3, 4, 10.0, "fixed(1)")  # N > M: reduced cost differs from the true cost
    for r in range(10):
        seed = RngSeed(12, r)
        ch = generate_channels(cfg, seed)
        sol = solve(ch, cfg, seed)
        check_solution(sol, ch, cfg)


def test_iteration_cap_respected():
    cfg = dataclasses.replace(snr_config(3, 4, 6, 20.0), outer_max_iter=3, outer_rel_tol=1e-15)
    seed = RngSeed(1)
    sol = solve(generate_channels(cfg, seed), cfg, seed)
    assert sol.outer_iterations <= 3
    assert sol.status in (Status.CONVERGED, Status.MAX_ITERATIONS)


def test_anchor_option_validated():
    with pytest.raises(ValueError):
        SolverOptions(anchor="nearest")


def test_anchored_phase_step_at_least_as_good_on_average():
    cfg = snr_config(2, 4, 4, 10.0, "fixed(0)")
    gains = []
    for r in range(30):
        seed = RngSeed(3, r)
        ch = generate_channels(cfg, seed)
        check_solution(solve(ch, cfg, seed, SolverOptions(anchor="pinv")), ch, cfg)
        gains.append(solve(ch, cfg, seed).sum_rate - solve(ch, cfg, seed, SolverOptions(anchor="pinv")).sum_rate)
    assert np.mean(gains) > 0


@pytest.mark.slow
def test_beats_start_and_random_phase_mostly():
    cfg = snr_config(2, 4, 4, 10.0, "fixed(0)")
    wins = 0
    for r in range(200):
        seed = RngSeed(0, r)
        ch = generate_channels(cfg, seed)
        sol = solve(ch, cfg, seed)
        assert sol.sum_rate >= sol.outer_trace[0].sum_rate - 1e-9
        wins += sol.sum_rate >= random_phase_baseline(ch, cfg, seed).sum_rate - 1e-9
    assert wins >= 190
