import mpmath
import numpy as np
import pytest

from critsde.catalog import FieldFunction
from critsde.errors import DomainError, SmallnessError
from critsde.mild import (apply_duhamel, check_gradient_bound, diffeomorphism_bounds,
                          singular_gauss_nodes, solve_mild, solve_transform_pde,
                          time_holder_check)
from critsde.spaces import solver_time_grid, symmetric_time_grid


def _stationary(exps, axis, scale=1.0, times=None):
    times = solver_time_grid(exps.T)[1:] if times is None else times
    return FieldFunction(kind="stationary", profile="gaussian", scale=scale,
                         exps=exps).sample(times, axis)


def test_singular_nodes_integrate_beta():
    s, w = singular_gauss_nodes(1.0, 0.25, 0.5, n=64)
    assert np.all((s > 0) & (s < 1))
    assert np.all(np.diff(s) > 0)
    approx = np.sum(w * s ** -0.25 * (1 - s) ** -0.5)
    assert approx == pytest.approx(float(mpmath.beta(0.75, 0.5)), rel=1e-6)
    s0, w0 = singular_gauss_nodes(2.0, 0.0, 0.0, n=8)
    assert w0.sum() == pytest.approx(2.0, rel=1e-14)
    with pytest.raises(DomainError):
        singular_gauss_nodes(1.0, 1.0, 0.5)


def test_duhamel_of_stationary_gaussian(exps, axis):
    # u(t, 0) = int_0^t (2 pi (1 + s))^{-1/2} ds = sqrt(2/pi) (sqrt(1 + t) - 1)
    f = _stationary(exps, axis)
    sol = solve_mild(f, exps=exps)
    mid = axis.size // 2
    t = sol.u.times
    expected = np.sqrt(2 / np.pi) * (np.sqrt(1 + t) - 1)
    assert sol.u.values[-1, mid] == pytest.approx(0.3305, abs=2e-3)
    assert sol.u.values[:, mid] == pytest.approx(expected, abs=2e-3)
    assert sol.iterations == 1
    assert sol.converged
    assert sol.gradient_consistency() < 1e-3
    report = check_gradient_bound(sol, f)
    assert report["pass"]
    assert report["g_norm"] == 0.0


def test_duhamel_gradient_is_odd(exps, axis):
    f = _stationary(exps, axis)
    sol = solve_mild(f, exps=exps)
    g = sol.grad_u.values[-1, 0]
    assert g == pytest.approx(-g[::-1], abs=1e-10)


def test_picard_with_transport(exps, axis):
    f = _stationary(exps, axis)
    g = _stationary(exps, axis, scale=0.1)
    sol = solve_mild(f, g, exps=exps, tol=1e-8)
    assert sol.converged
    assert sol.residual <= 1e-8
    assert sol.iterations > 1
    assert sol.smallness == pytest.approx(sol.constants.C0 * sol.g_norm)
    assert sol.contraction_ratio < 0.5
    assert check_gradient_bound(sol, f, g)["pass"]
    assert sol.to_dict()["iterations"] == sol.iterations
    # g > 0 transports from the left: u grows at x = -1 and shrinks at x = 1
    plain = solve_mild(f, exps=exps)
    mid = axis.size // 2
    assert sol.u.values[-1, mid - 32] > plain.u.values[-1, mid - 32]
    assert sol.u.values[-1, mid + 32] < plain.u.values[-1, mid + 32]


def test_smallness_refused(exps, axis):
    f = _stationary(exps, axis)
    g = _stationary(exps, axis, scale=20.0)
    with pytest.raises(SmallnessError) as err:
        solve_mild(f, g, exps=exps)
    assert err.value.ratio >= 1.0
    assert err.value.threshold == pytest.approx(1.0 / 1.6686, rel=1e-3)


def test_solver_grid_must_start_at_zero(exps, axis):
    f = _stationary(exps, axis)
    with pytest.raises(DomainError):
        solve_mild(f, exps=exps, times=solver_time_grid(1.0)[1:])
    with pytest.raises(DomainError):
        solve_mild(f)


def test_apply_duhamel_without_transport_is_linear(exps, axis):
    f = _stationary(exps, axis)
    times = solver_time_grid(1.0, n_uniform=8, n_refine=4)
    u1, g1 = apply_duhamel(f, None, None, exps, times, n_nodes=16)
    u2, g2 = apply_duhamel(f * 2.0, None, None, exps, times, n_nodes=16)
    assert u2 == pytest.approx(2 * u1, abs=1e-12)
    assert np.all(u1[0] == 0)


def test_time_holder(exps, axis):
    sol = solve_mild(_stationary(exps, axis), exps=exps)
    report = time_holder_check(sol, exps)
    assert not report["skipped"]
    assert report["theta"] == pytest.approx(0.3)
    assert report["pass"]
    assert report["slope"] >= report["threshold"]


def test_transform_pde(exps, axis):
    times = symmetric_time_grid(exps.T)
    b1 = FieldFunction(kind="stationary", profile="gaussian", scale=0.1,
                       exps=exps).sample(times, axis)
    sol = solve_transform_pde(b1, exps)
    assert sol.u.n_components == 1
    assert sol.converged
    assert 0 < sol.bound < 1
    assert sol.delta == pytest.approx(1 - sol.bound)
    bounds = diffeomorphism_bounds(sol)
    assert bounds["pass"]
    assert bounds["psi_max"] == pytest.approx(1.0 / bounds["phi_min"])


def test_transform_needs_half_smallness(exps, axis):
    times = symmetric_time_grid(exps.T)
    b1 = FieldFunction(kind="stationary", profile="gaussian", scale=1.0,
                       exps=exps).sample(times, axis)
    # C0 * 0.531 is about 0.89
    with pytest.raises(SmallnessError):
        solve_transform_pde(b1, exps)
