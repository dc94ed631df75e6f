"""Acceptance suite: one test per criterion, each printing a pass line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one line per
criterion; every tolerance is pinned in the assertions below.
"""

import math
import time

import numpy as np
import pytest

from ltmoments import (
    ConstantOne,
    CtmcKernel,
    McConfig,
    PolyTail,
    PureEscape,
    RenewalProblem,
    TwoState,
    build_difference_walk,
    classify,
    compare,
    estimate,
    green_function,
    growth_rate,
    hitting_moment,
    rate_curve,
    solve,
    solve_by_series,
    srw_torus_rate,
    truncated_mean,
)

FAMILIES = {
    "constant-one": ConstantOne(),
    "pure-escape": PureEscape(2.0),
    "two-state": TwoState(1.0, 1.0),
    "poly-tail": PolyTail(1.5, 1.0),
}


def two_state_rate(gamma, a=1.0, b=1.0):
    s = a + b
    return 0.5 * ((gamma - s) + math.sqrt((gamma - s) ** 2 + 4.0 * gamma * b))


def escape_moment(q, gamma, t):
    t = np.asarray(t, dtype=float)
    if gamma == q:
        return q * t + 1.0
    return (gamma / (gamma - q)) * np.exp((gamma - q) * t) - q / (gamma - q)


def _passed(num, text):
    print("ACCEPTANCE %02d PASS: %s" % (num, text))


def test_criterion_01_constant_kernel_oracle():
    start = time.monotonic()
    sol = solve(RenewalProblem(ConstantOne(), 1.0, 5.0, 1e-3))
    rel = np.max(np.abs(sol.values - np.exp(sol.grid)) / np.exp(sol.grid))
    elapsed = time.monotonic() - start
    assert rel < 1e-6
    assert elapsed < 5.0
    _passed(1, "constant kernel matches e^t within %.2e (%.1fs)" % (rel, elapsed))


def test_criterion_02_three_regime_exactness_escape():
    q = 2.0
    kernel = PureEscape(q)

    sub = classify(kernel, 1.0)
    assert sub.regime == "subcritical"
    sol = solve(RenewalProblem(kernel, 1.0, 20.0, 1 / 128))
    assert abs(sol.values[-1] / 2.0 - 1.0) <= 0.01
    assert abs(sub.limit / 2.0 - 1.0) <= 1e-10

    crit = classify(kernel, 2.0)
    assert crit.regime == "critical"
    assert abs(2.0 * crit.h_infinity - 0.5) <= 1e-10  # slope t/(gamma H) = 2t
    sol = solve(RenewalProblem(kernel, 2.0, 10.0, 1 / 128))
    assert abs(sol.values[-1] / 21.0 - 1.0) <= 0.01

    sup = classify(kernel, 5.0)
    assert sup.regime == "supercritical"
    assert abs(sup.rate - 3.0) <= 1e-10
    T = 4.0  # rate * T = 12
    sol = solve(RenewalProblem(kernel, 5.0, T, 1e-3))
    observed = math.exp(-sup.rate * T) * sol.values[-1]
    assert abs(observed / (5.0 / 3.0) - 1.0) <= 0.02
    assert abs(sup.prefactor / (5.0 / 3.0) - 1.0) <= 0.02
    _passed(2, "escape kernel: limit 2, linear 2t+1, rate 3 with prefactor 5/3")


def test_criterion_03_two_state_analytic_rate():
    kernel = TwoState(1.0, 1.0)
    got = growth_rate(kernel, 1.0)
    assert abs(got - (math.sqrt(5.0) - 1.0) / 2.0) <= 1e-9
    worst = 0.0
    for gamma in (0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0):
        err = abs(growth_rate(kernel, gamma) - two_state_rate(gamma))
        worst = max(worst, err)
        assert err <= 1e-9
    _passed(3, "two-state bisection matches the quadratic root, worst err %.2e" % worst)


@pytest.mark.parametrize("alpha", [1.2, 1.5, 1.8])
def test_criterion_04_critical_weak_bounds_and_slope(alpha):
    kernel = PolyTail(alpha, 1.0)
    gamma = 1.0 / green_function(kernel)
    assert math.isinf(hitting_moment(kernel))  # infinite-mean critical regime
    horizon, step = 4000.0, 1 / 16
    problem = RenewalProblem(kernel, gamma, horizon, step)
    assert problem.n_steps >= 1000
    sol = solve(problem)
    # weak bounds on the upper half of the horizon
    checkpoints = np.linspace(horizon / 2, horizon, 12)
    ratios = []
    for t in checkpoints:
        m = truncated_mean(kernel, gamma, t)
        z = sol.values[sol.index_of(round(t / step) * step)]
        ratios.append(z * m / t)
    ratios = np.asarray(ratios)
    assert np.all(ratios >= 0.95) and np.all(ratios <= 2.05)
    # strong growth exponent over the upper decade
    fit = sol.grid >= horizon / 10
    slope = np.polyfit(np.log(sol.grid[fit]), np.log(sol.values[fit]), 1)[0]
    assert abs(slope - (alpha - 1.0)) <= 0.05
    _passed(4, "alpha=%.1f: ratio in [%.3f, %.3f], slope %.3f vs %.1f"
            % (alpha, ratios.min(), ratios.max(), slope, alpha - 1.0))


def test_criterion_05_rate_curve_suite():
    grid = np.array([0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0,
                     128.0, 256.0, 512.0, 1000.0, 1024.0])
    for name, kernel in (("two-state", TwoState(1.0, 1.0)),
                         ("difference-walk", CtmcKernel(build_difference_walk(1, 16)))):
        curve = rate_curve(kernel, grid)
        assert curve.gamma_c == 0.0  # infinite Green function
        finite = curve.second_diffs[np.isfinite(curve.second_diffs)]
        assert np.all(finite >= -1e-8)
        assert curve.threshold_ok
        k1000 = int(np.where(grid == 1000.0)[0][0])
        assert curve.rates[k1000] / 1000.0 >= 0.95
    # finite-threshold sign pattern, both sides
    pe = PureEscape(2.0)
    gamma_c = 1.0 / green_function(pe)
    both = rate_curve(pe, np.array([0.5, 1.0, 1.9, 2.1, 3.0, 4.0]))
    assert both.gamma_c == pytest.approx(gamma_c)
    assert both.threshold_ok
    _passed(5, "rate curves convex with correct threshold pattern and slope limit")


def test_criterion_06_torus_formula_cross_check():
    gamma = 4.0
    r_torus = srw_torus_rate(1, gamma)
    r_small = growth_rate(CtmcKernel(build_difference_walk(1, 16)), gamma)
    r_large = growth_rate(CtmcKernel(build_difference_walk(1, 32)), gamma)
    assert abs(r_large - r_small) < 1e-5  # truncation resolved
    assert abs(r_torus - r_large) <= 1e-4
    _passed(6, "torus rate %.10f vs truncated-walk rate %.10f" % (r_torus, r_large))


def test_criterion_07_solver_vs_series_equivalence():
    worst = 0.0
    for kernel in FAMILIES.values():
        for gamma in (0.3, 1.0, 3.0):
            problem = RenewalProblem(kernel, gamma, 5.0, 1 / 256)
            a = solve(problem)
            b = solve_by_series(problem)
            diff = float(np.max(np.abs(a.values - b.values) / np.maximum(b.values, 1.0)))
            budget = a.error_estimate + b.error_estimate
            assert diff <= budget
            worst = max(worst, diff / budget)
    _passed(7, "march and series agree within summed estimates (worst ratio %.2f)" % worst)


def test_criterion_08_monte_carlo_concordance(two_state_gen):
    start = time.monotonic()
    cfg = McConfig(generator=two_state_gen, start=0, gamma=1.0,
                   horizons=(1.0, 2.0, 3.0), replicas=100000, base_seed=42)
    mc = estimate(cfg)
    sol = solve(RenewalProblem(TwoState(1.0, 1.0), 1.0, 3.0, 1 / 512))
    res = compare(cfg, sol, mc=mc)
    assert res.passed
    wrong = solve(RenewalProblem(TwoState(1.0, 1.0), 1.2, 3.0, 1 / 512))
    neg = compare(cfg, wrong, mc=mc)
    assert not neg.passed
    assert np.max(np.abs(neg.z_scores)) > 3.0
    elapsed = time.monotonic() - start
    assert elapsed < 60.0
    _passed(8, "all |z| <= 3 (max %.2f), negative control rejected (%.1fs)"
            % (np.max(np.abs(res.z_scores)), elapsed))


def test_criterion_09_bounds_invariant_sweep():
    horizon, step = 3.0, 1 / 256
    for name, kernel in FAMILIES.items():
        previous = None
        for gamma in (0.0, 0.5, 2.0, 8.0):
            sol = solve(RenewalProblem(kernel, gamma, horizon, step))
            assert sol.values[0] == 1.0
            assert np.all(sol.values >= 1.0 - 1e-12)
            slack = 1.0 + 2.0 * sol.error_estimate + 1e-9
            assert np.all(sol.values <= np.exp(gamma * sol.grid) * slack)
            assert np.all(np.diff(sol.values) >= -1e-12 * sol.values[:-1])
            if previous is not None:
                assert np.all(sol.values >= previous - 1e-12 * np.maximum(previous, 1.0))
            previous = sol.values
    _passed(9, "1 <= Z <= e^(gamma t), monotone in t and gamma, all families")
