import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import trapezoid

from fireworks.io import (read_snapshot_binary, read_snapshot_csv, write_snapshot_binary,
                          write_snapshot_csv)
from fireworks.phase_space import (DistributionField, PhaseSpaceGrid, free_stream, l1_norm,
                                   quadrature, relativistic_velocity_map,
                                   restrict_to_characteristics, shift, stream_history,
                                   trapezoid_weights)


def test_trapezoid_weights_match_scipy():
    x = np.linspace(-2.0, 3.0, 41)
    y = np.cos(x) + x**3
    w = trapezoid_weights(-2.0, 3.0, 41)
    assert np.isclose(w @ y, trapezoid(y, x), rtol=1e-14)
    assert np.isclose(w.sum(), 5.0)


def test_quadrature_of_product_gaussian_matches_scipy():
    g = PhaseSpaceGrid.uniform(1, (-5, 5), (-2, 2), 81, 41, 1.0, 3)
    x, v = g.x_nodes[0], g.v_nodes[0]
    f = np.exp(-x[:, None] ** 2) * (1 + v[None, :] ** 2)
    expected = trapezoid(trapezoid(f, v, axis=1), x)
    assert np.isclose(quadrature(f, g.weights), expected, rtol=1e-13)


def test_quadrature_keeps_leading_axes_and_rejects_bad_shape():
    g = PhaseSpaceGrid.uniform(1, (0, 1), (0, 1), 5, 4, 1.0, 3)
    vals = np.ones(g.field_shape)
    assert np.allclose(quadrature(vals, g.weights), 1.0)
    with pytest.raises(ValueError):
        quadrature(np.ones((3, 3)), g.weights)


def test_two_dimensional_volume():
    g = PhaseSpaceGrid.uniform(2, [(-1, 1), (0, 3)], (-1, 1), [9, 7], 5, 1.0, 3)
    assert np.isclose(quadrature(np.ones(g.slice_shape), g.weights), 6.0 * 4.0)
    assert g.x_mesh().shape == (9, 7, 1, 1, 2)
    assert g.v_mesh().shape == (1, 1, 5, 5, 2)


def test_grid_validation():
    with pytest.raises(ValueError):
        PhaseSpaceGrid.uniform(4, (0, 1), (0, 1), 4, 4, 1.0, 3)
    with pytest.raises(ValueError):
        PhaseSpaceGrid.uniform(1, (1, 0), (0, 1), 4, 4, 1.0, 3)
    with pytest.raises(ValueError):
        PhaseSpaceGrid.uniform(1, (0, 1), (0, 1), 4, 4, 1.0, 1)
    g = PhaseSpaceGrid.uniform(1, (0, 1), (0, 1), 4, 4, 1.0, 5)
    assert g.time_index(0.5) == 2
    with pytest.raises(ValueError):
        g.time_index(0.3)


@given(st.floats(-50, 50, allow_nan=False))
def test_relativistic_speed_below_one_and_invertible(p):
    c = float(relativistic_velocity_map(np.array([p]))[0])
    assert abs(c) < 1
    if abs(p) < 20:  # inverse loses precision once c rounds toward 1
        assert np.isclose(c / np.sqrt(1 - c * c), p, rtol=1e-9, atol=1e-12)


def test_relativistic_grid_speed():
    g = PhaseSpaceGrid.uniform(1, (0, 1), (-3, 3), 4, 7, 1.0, 3, relativistic=True)
    s = g.speed()[..., 0]
    assert np.all(np.abs(s) < 1)
    assert np.allclose(s, g.v_nodes[0] / np.sqrt(1 + g.v_nodes[0] ** 2))


def test_shift_by_whole_cells_is_exact():
    # t * xi is a multiple of hx for every velocity node, so no interpolation error
    g = PhaseSpaceGrid.uniform(1, (-4, 4), (-1, 1), 33, 5, 1.0, 3)
    x = g.x_nodes[0]
    f0 = np.exp(-x[:, None] ** 2) * np.ones((1, 5))
    out = free_stream(f0, g, 1.0)
    for j, v in enumerate(g.v_nodes[0]):
        expected = np.where(np.abs(x - v) <= 4, np.exp(-(x - v) ** 2), 0.0)
        expected[(x - v) < -4] = 0.0
        assert np.allclose(out[:, j], expected, atol=1e-15)


def test_free_stream_matches_analytic_translate():
    g = PhaseSpaceGrid.uniform(1, (-6, 6), (-2, 2), 256, 65, 1.0, 3)
    x, v = g.x_nodes[0][:, None], g.v_nodes[0][None, :]
    f0 = np.exp(-x**2 / 2) * np.exp(-v**2 / 0.5)
    exact = np.exp(-(x - v) ** 2 / 2) * np.exp(-v**2 / 0.5)
    err = l1_norm(free_stream(f0, g, 1.0) - exact, g) / l1_norm(exact, g)
    assert err < 1e-3


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 3.0), st.integers(0, 2**31 - 1))
def test_periodic_shift_conserves_mass_and_sign(s, seed):
    g = PhaseSpaceGrid.uniform(1, (0, 2), (-1, 1), 24, 9, 1.0, 3, boundary="periodic")
    u = np.random.default_rng(seed).random(g.slice_shape)
    out = shift(u, g, s)
    assert out.min() >= 0
    assert np.isclose(quadrature(out, g.weights), quadrature(u, g.weights), rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 3.0), st.integers(0, 2**31 - 1))
def test_zero_boundary_shift_never_creates_mass(s, seed):
    g = PhaseSpaceGrid.uniform(1, (0, 2), (-1, 1), 24, 9, 1.0, 3)
    u = np.random.default_rng(seed).random(g.slice_shape)
    out = shift(u, g, s)
    assert out.min() >= 0
    assert quadrature(out, g.weights) <= quadrature(u, g.weights) * (1 + 1e-12) + 1e-12


def test_stream_history_is_repeated_shift(small_grid):
    g = small_grid
    f0 = np.random.default_rng(1).random(g.slice_shape)
    hist = stream_history(f0, g)
    assert np.array_equal(hist[0], f0)
    assert np.allclose(hist[5], free_stream(f0, g, 5 * g.dt, n_steps=5), rtol=0, atol=1e-15)


def test_restriction_of_linear_field_is_exact():
    g = PhaseSpaceGrid.uniform(1, (-4, 4), (-1, 1), 17, 9, 2.0, 9)
    x = g.x_mesh()[..., 0]
    vals = np.broadcast_to(x + 5.0, g.slice_shape)
    h = DistributionField(np.broadcast_to(vals, g.field_shape), g)
    for t, x0, xi in [(0.0, 0.3, 0.5), (0.7, -1.2, 1.0), (2.0, 1.0, -0.25)]:
        got = restrict_to_characteristics(h, t, [x0], [xi])
        assert np.isclose(got, x0 + t * xi + 5.0, atol=1e-12)


def test_restriction_outside_box_is_zero():
    g = PhaseSpaceGrid.uniform(1, (-1, 1), (-1, 1), 9, 9, 1.0, 5)
    h = DistributionField(np.ones(g.field_shape), g)
    assert restrict_to_characteristics(h, 1.0, [0.8], [1.0]) == 0.0


def test_distribution_field_shape_check(small_grid):
    with pytest.raises(ValueError):
        DistributionField(np.zeros((2, 3)), small_grid)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_snapshot_roundtrip_is_exact(tmp_path_factory, seed):
    g = PhaseSpaceGrid.uniform(2, (-1, 1), (-2, 2), [3, 4], [3, 2], 1.0, 3)
    vals = np.random.default_rng(seed).standard_normal(g.slice_shape) * 1e3
    d = tmp_path_factory.mktemp("snap")
    write_snapshot_csv(d / "f.csv", vals, g, 0.5)
    t, back = read_snapshot_csv(d / "f.csv", g)
    assert t == 0.5 and np.array_equal(back, vals)
    write_snapshot_binary(d / "f.bin", vals, g, 0.5)
    t, back, meta = read_snapshot_binary(d / "f.bin")
    assert t == 0.5 and np.array_equal(back, vals)
    assert meta["shape"] == [3, 4, 3, 2] and meta["dtype"] == "<f8"


def test_snapshot_csv_header(tmp_path):
    g = PhaseSpaceGrid.uniform(1, (0, 1), (0, 1), 2, 2, 1.0, 3)
    write_snapshot_csv(tmp_path / "f.csv", np.arange(4.0).reshape(2, 2), g, 1.0)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "t,x1,v1,value"
    assert lines[1:] == ["1,0,0,0", "1,0,1,1", "1,1,0,2", "1,1,1,3"]
