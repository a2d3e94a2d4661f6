import numpy as np
import pytest

from fireworks.analysis import (BumpTestFunction, asymptotic_bound_check, asymptotic_table,
                                cumulative_trapezoid, free_motion_limit, mass_trace,
                                shipped_test_functions, weak_residual)
from fireworks.errors import ValidityError
from fireworks.kernels import KernelSet, family, sample_kernels
from fireworks.phase_space import DistributionField, PhaseSpaceGrid, restrict_to_characteristics
from fireworks.phase_space import stream_history
from fireworks.solver import picard_solve

F0 = family("separable-product", amplitude=0.5, x_width=1.0, v_center=0.2, v_width=0.3)


def kset(eta, gamma, f0=F0):
    return KernelSet(family("constant", value=eta), family("constant", value=gamma),
                     family("constant"), f0)


@pytest.fixture(scope="module")
def grid():
    return PhaseSpaceGrid.uniform(1, (-8, 8), (-1, 1), 64, 33, 2.0, 65)


def solved(ks, g, **kw):
    return picard_solve(ks, g, "J_plus", tol=1e-12, **kw)[0]


def test_cumulative_trapezoid_matches_closed_form():
    t = np.linspace(0, 2, 201)
    out = cumulative_trapezoid(np.exp(-t), t[1])
    assert out[0] == 0 and np.allclose(out, 1 - np.exp(-t), atol=1e-5)


def test_mass_constant_without_explosions():
    g = PhaseSpaceGrid.uniform(1, (0, 2), (-1, 1), 32, 17, 1.0, 33, boundary="periodic")
    ks = kset(0.5, 0.0, family("separable-product", amplitude=1.0, v_width=0.3))
    tr = mass_trace(solved(ks, g), ks, g)
    assert np.allclose(tr.mass, tr.mass[0], rtol=1e-13)
    assert tr.ineq01_holds and tr.ineq02_holds


def test_homogeneous_mass_law():
    g = PhaseSpaceGrid.uniform(1, (0, 4), (-1, 1), 16, 33, 2.0, 257, boundary="periodic")
    ks = kset(0.5, 1.0, family("separable-product", amplitude=0.25, v_width=0.4))
    tr = mass_trace(solved(ks, g), ks, g)
    assert abs(tr.mass[-1] / tr.mass[0] - np.exp(-1.0)) < 1e-2 * np.exp(-1.0)
    assert tr.delta == pytest.approx(0.5)


def test_pure_loss_inequality_is_tight(grid):
    ks = kset(0.0, 0.5)
    tr = mass_trace(solved(ks, grid), ks, grid)
    assert tr.delta == 0.0
    slack = tr.ineq01_slack[:-1]
    # M' = -gamma M (plus outflow), so a forward difference misses it by dt/2 gamma^2 M
    assert np.all(np.abs(slack) <= 0.5 * grid.dt * 0.25 * tr.mass[:-1] * 1.01 + 1e-3 * tr.mass[0])
    assert tr.ineq01_holds and tr.ineq02_holds


def test_inequalities_hold_for_decay(grid):
    ks = kset(0.5, 1.0)
    tr = mass_trace(solved(ks, grid), ks, grid)
    assert tr.ineq01_holds and tr.ineq02_holds and tr.non_increasing


def test_negative_field_rejected(grid):
    ks = kset(0.5, 1.0)
    f = DistributionField(-np.ones(grid.field_shape), grid)
    with pytest.raises(ValidityError):
        mass_trace(f, ks, grid)


def test_free_motion_limit_without_explosions(grid):
    ks = kset(0.5, 0.0)
    f = solved(ks, grid)
    lim = free_motion_limit(f, ks, grid)
    assert np.allclose(lim.field.values, stream_history(sample_kernels(ks, grid).f0, grid),
                       atol=1e-15)
    assert lim.tail == 0.0
    tab = asymptotic_table(f, lim, ks, grid)
    assert np.all(tab["lhs"] < 1e-14) and np.all(tab["rhs"] == 0)


def test_free_motion_limit_is_constant_along_characteristics(grid):
    ks = kset(0.5, 1.0)
    f = solved(ks, grid)
    lim = free_motion_limit(f, ks, grid)
    tol = grid.eps_quad() * float(np.max(lim.profile))
    for x0, xi in [(-1.0, 0.5), (0.0, 0.0), (0.5, -0.75)]:
        ref = restrict_to_characteristics(lim.field, 0.0, [x0], [xi])
        for t in (0.5, 1.0, 2.0):
            assert abs(restrict_to_characteristics(lim.field, t, [x0], [xi]) - ref) < tol


def test_free_motion_limit_pure_loss(grid):
    gam = 0.5
    ks = kset(0.0, gam)
    lim = free_motion_limit(solved(ks, grid), ks, grid)
    f0 = sample_kernels(ks, grid).f0
    expected = f0 * np.exp(-gam * grid.t_final)
    # first-order transport: agreement to the grid's quadrature tolerance
    assert np.max(np.abs(lim.profile - expected)) < grid.eps_quad() * np.max(f0)


def test_bound_at_horizon_is_tail(grid):
    ks = kset(0.5, 1.0)
    f = solved(ks, grid)
    lim = free_motion_limit(f, ks, grid)
    b = asymptotic_bound_check(f, lim, ks, grid, grid.t_final)
    assert b.rhs == pytest.approx(lim.tail) and b.passed


def test_decay_scenario_bound(default_cfg, default_solution):
    f, _ = default_solution
    cfg = default_cfg
    lim = free_motion_limit(f, cfg.kernels, cfg.grid)
    checks = [asymptotic_bound_check(f, lim, cfg.kernels, cfg.grid, t) for t in (1.0, 2.0, 4.0)]
    assert all(c.passed for c in checks)
    assert checks[0].lhs > checks[1].lhs > checks[2].lhs


def test_weak_residual_zero_field(grid):
    ks = kset(0.5, 1.0, family("constant", value=0.0))
    f = DistributionField(np.zeros(grid.field_shape), grid)
    for tf in shipped_test_functions(grid):
        assert weak_residual(f, ks, grid, tf).value == 0.0


def test_weak_residual_free_streaming(grid):
    ks = kset(0.5, 0.0)
    f = solved(ks, grid)
    for tf in shipped_test_functions(grid):
        assert weak_residual(f, ks, grid, tf).value < grid.eps_quad()


def test_weak_residual_sensitivity(grid):
    ks = kset(0.5, 1.0)
    f = solved(ks, grid)
    f0 = sample_kernels(ks, grid).f0
    bumped = DistributionField(f.values + 0.1 * f0, grid)
    for tf in shipped_test_functions(grid):
        r = weak_residual(f, ks, grid, tf)
        assert r.relative < 10 * grid.eps_quad()
        assert weak_residual(bumped, ks, grid, tf).value >= 10 * r.value


def test_weak_residual_detects_wrong_solution(grid):
    # the loss-free stream is not a solution once explosions are switched on
    ks = kset(0.5, 1.0)
    wrong = DistributionField(stream_history(sample_kernels(ks, grid).f0, grid), grid)
    right = solved(ks, grid)
    tf = shipped_test_functions(grid)[0]
    assert weak_residual(wrong, ks, grid, tf).value > 10 * weak_residual(right, ks, grid, tf).value


def test_test_function_support_checked(grid):
    f = DistributionField(np.zeros(grid.field_shape), grid)
    ks = kset(0.5, 1.0)
    bad = [BumpTestFunction(0.5, 0.4, (7.5,), (1.0,), (0.0,), (0.5,)),
           BumpTestFunction(0.5, 0.4, (0.0,), (1.0,), (0.0,), (1.0,)),
           BumpTestFunction(1.8, 0.4, (0.0,), (1.0,), (0.0,), (0.5,))]
    for tf in bad:
        with pytest.raises(ValueError):
            weak_residual(f, ks, grid, tf)


def test_bump_derivative_matches_finite_difference(grid):
    tf = shipped_test_functions(grid)[1]
    phi, dphi = tf.evaluate(grid)
    # d/dt + xi d/dx of phi, checked against central differences in t and x
    k, i = 20, 30
    dt, hx = grid.dt, grid.hx[0]
    xi = grid.v_nodes[0]
    fd = ((phi[k + 1, i] - phi[k - 1, i]) / (2 * dt)
          + xi * (phi[k, i + 1] - phi[k, i - 1]) / (2 * hx))
    assert np.allclose(dphi[k, i], fd, atol=5e-3 * np.abs(dphi).max())
