import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_waterfill
from pim_sumrate.power_wf import (InfeasibleError, NoPositiveEigenvaluesError, WaterfillInput, feasibility_check,
                                  min_powers, waterfill_exact, waterfill_exact_batch, waterfill_paper)


def test_min_powers():
    assert min_powers([2.0], 1.0) == pytest.approx([3.0])
    assert min_powers([0.0, 0.0], 1.0) == pytest.approx([0.0, 0.0])
    assert min_powers([1.0], 2.0) == pytest.approx([2.0])


@pytest.mark.parametrize("method", ["breakpoints", "bisection"])
def test_exact_single_user(method):
    a = waterfill_exact(WaterfillInput([1.0], [0.0], 10.0, 1.0), method)
    assert a.p == pytest.approx([10.0])
    assert a.feasible


@pytest.mark.parametrize("method", ["breakpoints", "bisection"])
def test_exact_two_users_hand_kkt(method):
    a = waterfill_exact(WaterfillInput([1.0, 2.0], [0.0, 0.0], 10.0, 1.0), method)
    assert a.p == pytest.approx([5.5, 2.25], abs=1e-12)
    # 1e-3 grid over p1 on the budget line p1 + 2 p2 = 10
    p1 = np.arange(0, 10 + 1e-9, 1e-3)
    rates = np.log2(1 + p1) + np.log2(1 + (10 - p1) / 2)
    assert p1[np.argmax(rates)] == pytest.approx(5.5, abs=1e-3)


def test_exact_floors_saturate_budget():
    a = waterfill_exact(WaterfillInput([1.0, 1.0], [3.0, 3.0], 6.0, 1.0))
    assert a.p == pytest.approx([3.0, 3.0])
    assert a.feasible
    assert np.dot([1, 1], a.p) == pytest.approx(6.0)
    assert np.all(a.active_floor_mask)


def test_exact_infeasible():
    with pytest.raises(InfeasibleError):
        waterfill_exact(WaterfillInput([1.0, 1.0], [3.0, 3.0], 5.0, 1.0))


@pytest.mark.parametrize("inp, expected", [
    (WaterfillInput([1, 1], [0, 0], 1.0), True),
    (WaterfillInput([1, 1], [3, 3], 5.0), False),
    (WaterfillInput([1, 1], [3, 3], 6.0), True),
])
def test_feasibility_check(inp, expected):
    assert feasibility_check(inp) is expected


def random_instance(r):
    K = int(r.integers(1, 5))
    w = r.uniform(0.05, 5.0, K)
    floors = r.uniform(0, 3, K) * (r.random(K) < 0.6)
    p_max = np.dot(w, floors) + r.uniform(0, 40)
    return WaterfillInput(w, floors, p_max, float(r.uniform(0.2, 2.0)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_exact_kkt_certificate(seed):
    inp = random_instance(np.random.default_rng(seed))
    a = waterfill_exact(inp)
    w, f, p = inp.weights, inp.p_floor, a.p
    assert np.all(p >= f)
    if np.any(p > f):
        assert abs(np.dot(w, p) - inp.p_max) <= 1e-8 * max(inp.p_max, 1e-300)
        assert a.kkt["marginal_spread"] <= 1e-6
        # users left on their floor would not gain from the level
        level = w[p > f] * (inp.noise_power + p[p > f])
        on = ~(p > f)
        assert np.all(w[on] * (inp.noise_power + f[on]) >= level.max() * (1 - 1e-9))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bisection_agrees_with_breakpoints(seed):
    inp = random_instance(np.random.default_rng(seed))
    assert waterfill_exact(inp, "bisection").p == pytest.approx(waterfill_exact(inp).p, rel=1e-9, abs=1e-12)


def test_batch_agrees_with_scalar(rng):
    K = 3
    w = rng.uniform(0.05, 4, (200, K))
    f = np.array([0.5, 0.0, 1.0])
    p_max = 8.0
    p, feasible = waterfill_exact_batch(w, f, p_max, 0.7)
    for i in range(200):
        inp = WaterfillInput(w[i], f, p_max, 0.7)
        assert feasible[i] == feasibility_check(inp)
        if feasible[i]:
            assert p[i] == pytest.approx(waterfill_exact(inp).p, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_exact_matches_brute_force(seed):
    inp = random_instance(np.random.default_rng(1000 + seed))
    a = waterfill_exact(inp)
    _, bf = brute_force_waterfill(inp.weights, inp.p_floor, inp.p_max, inp.noise_power)
    exact = a.sum_rate(inp.noise_power)
    assert exact >= bf - 1e-9
    assert abs(exact - bf) <= 1e-4 * max(exact, 1e-12)


def test_sum_rate_monotone_in_budget(rng):
    w, f = rng.uniform(0.1, 3, 4), rng.uniform(0, 1, 4)
    base = np.dot(w, f)
    rates = [waterfill_exact(WaterfillInput(w, f, base + b)).sum_rate(1.0) for b in np.linspace(0, 50, 60)]
    assert np.all(np.diff(rates) >= -1e-12)


# -- eigenvalue water-filling, taken verbatim ---------------------------------

def test_eigen_formula_single_user():
    a = waterfill_paper([1.0], [0.0], 7.0, 1.0)
    assert a.water_level == pytest.approx(8.0)
    assert a.p == pytest.approx([7.0])
    assert a.feasible


def test_eigen_formula_budget_exhausted_by_floors():
    a = waterfill_paper([1.0, 0.5], [3.0, 3.0], 5.0, 1.0)
    assert not a.feasible


def test_eigen_formula_requires_positive_eigenvalue():
    with pytest.raises(NoPositiveEigenvaluesError):
        waterfill_paper([0.0, 0.0], [0.0, 0.0], 1.0)


def test_eigen_formula_requires_descending_order():
    with pytest.raises(ValueError):
        waterfill_paper([1.0, 2.0], [0.0, 0.0], 1.0)


def test_eigen_formula_terms():
    lam = np.array([4.0, 2.0, 1.0])
    f = np.array([0.5, 1.0, 0.2])
    a = waterfill_paper(lam, f, 10.0, 1.0)
    alpha = (10.0 - np.sum(f / lam) + np.sum(1 / lam)) / 3
    assert a.water_level == pytest.approx(alpha)
    assert a.p == pytest.approx(np.maximum(alpha * lam - 1, 0) + f / lam)


@pytest.mark.parametrize("seed", range(10))
def test_eigen_formula_vs_exact_on_random_k4(seed):
    # cross-check only: the discrepancy is recorded, nothing is asserted about its size
    r = np.random.default_rng(seed)
    lam = np.sort(r.uniform(0.2, 5, 4))[::-1]
    f = r.uniform(0, 1, 4)
    p_max = 20.0
    paper = waterfill_paper(lam, f, p_max)
    exact = waterfill_exact(WaterfillInput(1 / lam, f, p_max))
    gap = exact.sum_rate(1.0) - paper.sum_rate(1.0)
    if paper.feasible:
        assert gap >= -1e-9  # a budget-feasible allocation cannot beat the optimum
    assert np.isfinite(gap)


def test_eigen_formula_equals_exact_zero_floors_all_active(rng):
    lam = np.sort(rng.uniform(0.5, 3, 4))[::-1]
    p_max = 50.0  # large enough that alpha * lam_k > s2 for every k
    paper = waterfill_paper(lam, np.zeros(4), p_max)
    exact = waterfill_exact(WaterfillInput(1 / lam, np.zeros(4), p_max))
    assert paper.p == pytest.approx(exact.p, rel=1e-10)
