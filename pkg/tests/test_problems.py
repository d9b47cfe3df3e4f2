"""Benchmark systems: hand-checked values, Jacobian oracles, error handling."""

import numpy as np
import pytest

from rpnn_parareal import OdeSystem, burgers_semidiscretize, eval_jacobian, make_benchmark
from rpnn_parareal.problems import (
    ARENSTORF_V2_0,
    BENCHMARK_NAMES,
    burgers_initial_condition,
    default_initial_state,
)

from conftest import central_fd_jacobian, sample_benchmark_state


def test_sir_field_hand_value():
    system = make_benchmark("sir")
    got = system.field(np.array([0.3, 0.5, 0.2]))
    np.testing.assert_allclose(got, [-0.015, -0.035, 0.05], rtol=1e-14)


def test_lorenz_origin_is_equilibrium():
    system = make_benchmark("lorenz")
    assert np.array_equal(system.field(np.zeros(3)), np.zeros(3))


@pytest.mark.parametrize("name", ["sir", "rober"])
def test_field_component_sums_vanish(name):
    system = make_benchmark(name)
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = sample_benchmark_state(name, rng, system)
        f = system.field(x)
        assert abs(f.sum()) <= 1e-14 * (1.0 + np.abs(f).max())


def test_sir_jacobian_hand_entry():
    system = make_benchmark("sir")
    jac = eval_jacobian(system, np.array([0.3, 0.5, 0.2]))
    assert jac[0, 0] == pytest.approx(-0.05, rel=1e-14)


def test_linear_system_jacobian_is_constant():
    a = np.array([[1.0, 2.0], [-3.0, 0.5]])
    system = OdeSystem(2, lambda x: a @ x, lambda x: a.copy(), "lin")
    for x in (np.zeros(2), np.array([3.0, -7.0])):
        np.testing.assert_array_equal(eval_jacobian(system, x), a)


@pytest.mark.parametrize("name", BENCHMARK_NAMES)
def test_jacobian_matches_finite_differences(name):
    system = make_benchmark(name)
    rng = np.random.default_rng(42)
    for _ in range(20):
        x = sample_benchmark_state(name, rng, system)
        analytic = system.jacobian(x)
        fd = central_fd_jacobian(system.field, x)
        err = np.linalg.norm(analytic - fd) / max(np.linalg.norm(analytic), 1e-12)
        assert err <= 1e-6, f"{name}: rel err {err:.2e}"


def test_benchmark_defaults_match_setups():
    assert make_benchmark("sir").params == {"beta": 0.1, "gamma": 0.1}
    assert make_benchmark("rober").params == {"k1": 0.04, "k2": 3e7, "k3": 1e4}
    lorenz = make_benchmark("lorenz").params
    assert (lorenz["sigma"], lorenz["r"], lorenz["b"]) == (10.0, 28.0, 8.0 / 3.0)
    aren = make_benchmark("arenstorf").params
    assert aren["a"] == 0.12277471 and aren["b"] == 1.0 - 0.12277471
    assert make_benchmark("brusselator").params == {"A": 1.0, "B": 3.0}
    burgers = make_benchmark("burgers")
    assert burgers.params["nu"] == 1.0 / 50.0 and burgers.dim == 51


def test_arenstorf_state_ordering_and_velocity_literal():
    system = make_benchmark("arenstorf")
    assert system.labels == ("x1", "x2", "v1", "v2")
    x0 = default_initial_state("arenstorf")
    assert x0[0] == 0.994 and x0[3] == ARENSTORF_V2_0
    # first-order form: first two components are the velocities
    f = system.field(x0)
    assert f[0] == x0[2] and f[1] == x0[3]


def test_make_benchmark_rejects_bad_input():
    with pytest.raises(ValueError):
        make_benchmark("heat")
    with pytest.raises(ValueError):
        make_benchmark("sir", {"mu": 1.0})
    with pytest.raises(ValueError):
        make_benchmark("sir", {"beta": float("nan")})


def test_make_benchmark_applies_overrides():
    system = make_benchmark("sir", {"beta": 0.3})
    assert system.params["beta"] == 0.3
    np.testing.assert_allclose(
        system.field(np.array([1.0, 1.0, 0.0])), [-0.3, 0.2, 0.1], rtol=1e-14
    )


def test_eval_jacobian_rejects_nonfinite_state():
    system = make_benchmark("sir")
    with pytest.raises(ValueError):
        eval_jacobian(system, np.array([1.0, np.inf, 0.0]))
    with pytest.raises(ValueError):
        eval_jacobian(system, np.array([1.0, 2.0]))


def test_system_is_frozen():
    system = make_benchmark("sir")
    with pytest.raises(Exception):
        system.dim = 5


# ---------------------------------------------------------------------------
# Burgers semi-discretization
# ---------------------------------------------------------------------------


def test_burgers_field_vanishes_at_zero():
    system, _ = burgers_semidiscretize(51, 1.0 / 50.0)
    assert np.array_equal(system.field(np.zeros(51)), np.zeros(51))


def test_burgers_interior_stencils():
    _, disc = burgers_semidiscretize(5, 1.0 / 50.0)
    u = np.array([0.0, 1.0, 2.0, 1.0, 0.0])
    dx = 0.25
    d1u = disc.d1 @ u
    d2u = disc.d2 @ u
    for i in (1, 2, 3):
        assert d1u[i] == pytest.approx((u[i + 1] - u[i - 1]) / (2 * dx), rel=1e-14)
        assert d2u[i] == pytest.approx((u[i + 1] - 2 * u[i] + u[i - 1]) / dx**2, rel=1e-14)


def test_burgers_inviscid_hand_value():
    system, _ = burgers_semidiscretize(5, 0.0)
    u = np.array([0.0, 1.0, 2.0, 1.0, 0.0])
    f = system.field(u)
    # interior component 2: -u_2 * (u_3 - u_1) / (2 * 0.25) = 0
    assert f[2] == 0.0


def test_burgers_boundary_rows_zero():
    system, disc = burgers_semidiscretize(17, 0.5)
    rng = np.random.default_rng(1)
    for _ in range(5):
        u = rng.standard_normal(17)
        f = system.field(u)
        assert f[0] == 0.0 and f[-1] == 0.0
        jac = system.jacobian(u)
        assert np.all(jac[0] == 0.0) and np.all(jac[-1] == 0.0)
    assert np.all(disc.d1[0] == 0.0) and np.all(disc.d2[-1] == 0.0)


def test_burgers_jacobian_matches_fd_at_sine_profile():
    system, _ = burgers_semidiscretize(51, 1.0 / 50.0)
    x = np.arange(51) / 50.0
    u = np.sin(2.0 * np.pi * x)
    analytic = system.jacobian(u)
    fd = central_fd_jacobian(system.field, u)
    err = np.linalg.norm(analytic - fd) / np.linalg.norm(analytic)
    assert err <= 1e-6


def test_burgers_rejects_tiny_grid():
    with pytest.raises(ValueError):
        burgers_semidiscretize(2, 0.1)


def test_burgers_batched_field_rows_match_per_state_field():
    system, _ = burgers_semidiscretize(51, 1.0 / 50.0)
    rng = np.random.default_rng(3)
    states = rng.standard_normal((5, 51))
    rows = system.field_rows(states)
    for c in range(5):
        np.testing.assert_allclose(rows[c], system.field(states[c]), atol=1e-12)


def test_burgers_initial_conditions_vanish_at_boundary():
    x = np.arange(51) / 50.0
    for kind in ("sine", "quadratic", "multiwave"):
        u = burgers_initial_condition(kind, x)
        assert u[0] == 0.0 and u[-1] == 0.0
    with pytest.raises(ValueError):
        burgers_initial_condition("square", x)
