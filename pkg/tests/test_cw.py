"""Nodewise max-min quotient engine and the a-priori bound."""

import numpy as np
import pytest

from foldfinder import (abc_model, build_grid, coupled_model, cw_ascend,
                        cw_value, make_state, rayleigh_nl, solve_nehari,
                        sublinear_state, upper_bound_lambda, zero_model)


def _one_node_state(value):
    grid = build_grid("interval", 1)
    spec = abc_model(q=1.5, gamma=4.0)
    return make_state(grid, spec, np.array([[value]]))


LAM_STAR_1 = 8.0 * 1.6 ** 0.25 - 1.6 ** 1.25   # one-node fold value
U_STAR_1 = np.sqrt(1.6)


def test_value_one_node_solution():
    cand = cw_value(_one_node_state(1.0))
    assert cand.lambda_cw == pytest.approx(7.0, abs=1e-13)
    assert cand.gap == 0.0
    assert cand.active_node == (0, 0)


def test_value_one_node_scaled():
    cand = cw_value(_one_node_state(2.0))
    assert cand.lambda_cw == pytest.approx((16.0 - 8.0) / 2.0 ** 0.5,
                                           abs=1e-12)


def test_value_at_exact_solution_equals_lambda():
    grid = build_grid("interval", 21)
    spec = abc_model(q=1.5, gamma=4.0)
    lam = 3.0
    report = solve_nehari(grid, spec, lam)
    cand = cw_value(report.state)
    assert cand.lambda_cw == pytest.approx(lam, abs=1e-7)
    assert cand.gap <= 1e-6 * grid.stencil_scale


def test_ratio_sandwich():
    rng = np.random.default_rng(0)
    grid = build_grid("interval", 11)
    spec = abc_model(q=1.5, gamma=4.0)
    for _ in range(10):
        state = make_state(grid, spec, 0.2 + rng.random((1, 11)))
        cand = cw_value(state)
        r_nl = rayleigh_nl(state)
        assert cand.lambda_cw <= r_nl + 1e-12
        assert r_nl <= cand.lambda_cw + cand.gap + 1e-12


def test_ascend_one_node_reaches_fold():
    cand = cw_ascend(_one_node_state(1.0))
    assert cand.lambda_cw == pytest.approx(LAM_STAR_1, rel=1e-4)
    assert cand.state.u[0, 0] == pytest.approx(U_STAR_1, rel=5e-3)
    assert cand.stable


def test_ascend_never_exceeds_fold_value_stably():
    # stable candidates stay below the closed-form maximum
    rng = np.random.default_rng(1)
    grid = build_grid("interval", 1)
    spec = abc_model(q=1.5, gamma=4.0)
    for _ in range(10):
        init = make_state(grid, spec, np.array([[0.2 + 2.0 * rng.random()]]))
        cand = cw_ascend(init)
        if cand.stable:
            assert cand.lambda_cw <= LAM_STAR_1 + 1e-8


def test_ascend_zero_model_diverges_flagged():
    grid = build_grid("interval", 9)
    spec = zero_model(q=1.5, m=1)
    init = sublinear_state(grid, spec, 4.0)
    cand = cw_ascend(init, max_iters=120)
    assert not cand.converged
    assert cand.diagnostics["capped"]


def test_ascend_coupled_symmetry():
    grid = build_grid("interval", 9)
    spec = coupled_model(q=1.5)
    init = sublinear_state(grid, spec, 2.0)
    cand = cw_ascend(init, max_iters=150)
    u = cand.state.u
    assert np.abs(u[0] - u[1]).max() <= 1e-8 * np.abs(u).max()


def test_upper_bound_one_node_coincides_with_fold():
    grid = build_grid("interval", 1)
    spec = abc_model(q=1.5, gamma=4.0)
    assert upper_bound_lambda(spec, grid) == pytest.approx(LAM_STAR_1,
                                                           abs=1e-10)


def test_upper_bound_three_nodes_closed_form():
    grid = build_grid("interval", 3)
    spec = abc_model(q=1.5, gamma=4.0)
    lam1 = 32.0 * (1.0 - np.cos(np.pi / 4.0))
    # scalar ray profile lam1*t^2/2 - t^4/4 over t^q/q maximised in closed form
    u_star = (0.5 * lam1 / 2.5) ** 0.5
    expect = lam1 * u_star ** 0.5 - u_star ** 2.5
    assert upper_bound_lambda(spec, grid) == pytest.approx(expect, rel=1e-10)


def test_upper_bound_positive_and_infinite_cases():
    grid = build_grid("interval", 7)
    assert upper_bound_lambda(coupled_model(q=1.5), grid) > 0.0
    assert upper_bound_lambda(zero_model(q=1.5, m=1), grid) == np.inf


def test_stable_candidates_respect_upper_bound():
    rng = np.random.default_rng(2)
    grid = build_grid("interval", 9)
    spec = abc_model(q=1.5, gamma=4.0)
    bound = upper_bound_lambda(spec, grid)
    for _ in range(5):
        init = make_state(grid, spec, 0.1 + 0.4 * rng.random((1, 9)))
        cand = cw_ascend(init, max_iters=120)
        if cand.stable:
            assert cand.lambda_cw <= bound + 1e-8 * bound
