import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from critsde.catalog import FieldFunction
from critsde.errors import DomainError, SimulationError, SpecificationError
from critsde.heat import compute_constants
from critsde.sde import (BLOCK_SIZE, DriftSpec, build_example_drift, euler_maruyama,
                         field_reversed_norm, increment_modulus, integrability_proxy,
                         krylov_check, lag_autocorrelation, mollified_drift_convergence,
                         stepping_grid)
from critsde.spaces import ExponentPair, space_axis


def test_stepping_grid_uniform():
    times, eval_t = stepping_grid(0.0, 1.0, 64, 1.0, clamp=False)
    assert times.size == 65
    assert np.allclose(np.diff(times), 1.0 / 64)
    assert np.array_equal(eval_t, times[:-1])
    with pytest.raises(DomainError):
        stepping_grid(0.0, 1.0, 8, 1.0, clamp=False)
    with pytest.raises(DomainError):
        stepping_grid(0.5, 0.5, 64, 1.0, clamp=False)


def test_stepping_grid_clamped_at_singularity():
    T, n = 0.5, 64
    times, eval_t = stepping_grid(0.0, T, n, T, clamp=True)
    eps = T / n ** 2
    assert times[-1] == T
    assert np.all(np.diff(times) > 0)
    assert np.all(np.diff(times) <= T / n + 1e-15)
    assert eval_t.max() <= T - eps
    assert T - times[-2] <= eps
    # halving steps only start in the final base step
    assert np.allclose(np.diff(times[:n - 1]), T / n)


def test_brownian_terminal_law():
    drift = DriftSpec(exps=ExponentPair(T=1.0))
    ens = euler_maruyama(drift, 0.0, 20000, 64, seed=11)
    assert ens.states.shape == (20000, 65, 1)
    x = ens.terminal()
    assert x.mean() == pytest.approx(0.0, abs=0.03)
    assert x.var() == pytest.approx(1.0, abs=0.05)
    assert ens.path_integrals["abs_drift"] == pytest.approx(np.zeros(20000))
    assert ens.header()["n_paths"] == 20000


def test_ornstein_uhlenbeck_moments():
    # dX = -X dt + dW from 1: mean e^{-1}, variance (1 - e^{-2}) / 2
    drift = DriftSpec(b2="linear", b2_params={"k": 1.0}, exps=ExponentPair(T=1.0))
    x = euler_maruyama(drift, 1.0, 20000, 256, seed=3).terminal()
    assert x.mean() == pytest.approx(np.exp(-1.0), abs=0.02)
    assert x.var() == pytest.approx(0.4323, abs=0.02)


def test_ensembles_are_reproducible_across_workers():
    drift = DriftSpec(b2="bump", b2_params={"height": 1.0}, exps=ExponentPair(T=1.0))
    one = euler_maruyama(drift, 0.0, BLOCK_SIZE + 500, 32, seed=99, workers=1)
    two = euler_maruyama(drift, 0.0, BLOCK_SIZE + 500, 32, seed=99, workers=2)
    assert np.array_equal(one.states, two.states)
    head = euler_maruyama(drift, 0.0, BLOCK_SIZE, 32, seed=99)
    assert np.array_equal(head.states, one.states[:BLOCK_SIZE])
    other = euler_maruyama(drift, 0.0, BLOCK_SIZE, 32, seed=100)
    assert not np.array_equal(other.states, head.states)


def test_record_stride_keeps_endpoint():
    drift = DriftSpec(exps=ExponentPair(T=1.0))
    ens = euler_maruyama(drift, 0.0, 100, 64, seed=1, record_stride=10)
    assert ens.times[0] == 0.0
    assert ens.times[-1] == 1.0
    assert ens.states.shape[1] == ens.times.size == 8


def test_bad_arguments():
    drift = DriftSpec(exps=ExponentPair(T=1.0))
    with pytest.raises(DomainError):
        euler_maruyama(drift, [0.0, 0.0], 10, 32, seed=1)
    with pytest.raises(DomainError):
        euler_maruyama(drift, 0.0, 0, 32, seed=1)
    with pytest.raises(SpecificationError):
        DriftSpec(b1="log_singular", b1_params={"width": 2.0})
    with pytest.raises(SpecificationError):
        DriftSpec(b1="grid")


def test_non_finite_drift_is_fatal():
    drift = DriftSpec(b2="grid", b2_params={"x": [0.0, 1.0], "values": [np.inf, np.inf]},
                      exps=ExponentPair(T=1.0))
    with pytest.raises(SimulationError) as err:
        euler_maruyama(drift, 0.0, 200, 32, seed=1)
    assert err.value.n_excluded == 200


def test_example_drift_fraction(exps_half):
    drift = build_example_drift(exps=exps_half, b1_fraction=0.5)
    c0 = compute_constants(exps_half).C0
    assert 2 * c0 * drift.reversed_norm() == pytest.approx(0.5)
    assert drift.singular_at_T
    with pytest.raises(DomainError):
        build_example_drift(profile="constant", exps=exps_half)


def test_example_drift_reversed_norm_on_grid(exps_half):
    drift = build_example_drift(exps=exps_half, scale=0.3)
    x = space_axis(8.0, 1.0 / 32)
    grid = DriftSpec(b1="grid", b1_field=drift.sample_b1(x), exps=exps_half)
    assert grid.reversed_norm() == pytest.approx(drift.reversed_norm(), rel=1e-3)


def test_field_reversed_norm(exps_half):
    f = FieldFunction(kind="stationary", profile="indicator", exps=exps_half)
    # T^{1/4} * sqrt(2)
    assert field_reversed_norm(f) == pytest.approx(0.5 ** 0.25 * np.sqrt(2.0))
    log_f = FieldFunction(kind="log_damped", profile="gaussian", exps=exps_half)
    with pytest.raises(DomainError):
        field_reversed_norm(log_f)
    # reversal moves the t = 0 blow-up of these kinds to t = T
    for kind in ("weighted", "log_singular_reversed"):
        assert field_reversed_norm(FieldFunction(kind=kind, exps=exps_half)) == np.inf
    # |b1| of the example drift reverses to a weighted field with finite norm
    drift = build_example_drift(exps=exps_half, b1_fraction=0.5)
    magnitude = FieldFunction(kind="log_singular", profile="gaussian",
                              scale=drift.b1_scale, exps=exps_half)
    assert field_reversed_norm(magnitude) == pytest.approx(drift.reversed_norm())


def test_integrands_use_step_midpoints():
    # int_0^1 t^{-1/2} dt = 2; the midpoint sum misses it by about 0.605 / sqrt(n)
    drift = DriftSpec(exps=ExponentPair(T=1.0))
    ens = euler_maruyama(drift, 0.0, 50, 256, seed=4,
                         integrands={"root": lambda t, X: np.full(X.shape[0], t ** -0.5)})
    vals = ens.path_integrals["root"]
    assert np.all(np.isfinite(vals))
    assert vals == pytest.approx(np.full(50, 2.0 - 0.605 / 16.0), abs=2e-3)
    assert ens.n_excluded == 0


def test_non_finite_integrand_excludes_paths():
    drift = DriftSpec(exps=ExponentPair(T=1.0))

    def capped(t, X):
        return np.where(X[:, 0] > 3.0, np.nan, 1.0)

    ens = euler_maruyama(drift, 0.0, 8000, 128, seed=17, integrands={"capped": capped})
    assert 0 < ens.n_excluded <= 80
    assert ens.n_paths == 8000 - ens.n_excluded
    assert ens.path_integrals["capped"] == pytest.approx(np.ones(ens.n_paths))


def test_krylov_estimate_holds(exps_half):
    drift = build_example_drift(exps=exps_half, b1_fraction=0.5)
    f = FieldFunction(kind="stationary", profile="indicator", exps=exps_half)
    ens = euler_maruyama(drift, 0.0, 4096, 128, seed=5, integrands={f.name: f})
    report = krylov_check(f, drift, ens, compute_constants(exps_half))
    assert report["pass"]
    assert 0 < report["lhs_mc"] <= 0.5
    assert report["drift_bound"]["pass"]
    assert report["drift_bound"]["rhs"] == pytest.approx(0.5)
    negative = FieldFunction(kind="stationary", profile="indicator", scale=-1.0,
                             exps=exps_half)
    with pytest.raises(DomainError):
        krylov_check(negative, drift, ens, compute_constants(exps_half))
    other = FieldFunction(kind="stationary", profile="gaussian", exps=exps_half, name="g")
    with pytest.raises(SpecificationError):
        krylov_check(other, drift, ens, compute_constants(exps_half))


def test_krylov_with_reversed_singular_field(exps_half):
    drift = build_example_drift(exps=exps_half, b1_fraction=0.5, b2="bump")
    f = FieldFunction(kind="log_singular_reversed", exps=exps_half)
    ens = euler_maruyama(drift, 0.0, 2000, 128, seed=6, integrands={f.name: f})
    assert ens.n_excluded == 0
    assert np.all(np.isfinite(ens.path_integrals[f.name]))
    report = krylov_check(f, drift, ens, compute_constants(exps_half),
                          x=space_axis(8.0, 1.0 / 32))
    assert np.isfinite(report["lhs_mc"]) and report["lhs_mc"] > 0
    assert np.isfinite(report["se"])
    assert report["f_norm"] == np.inf
    assert report["rhs"] == np.inf
    assert report["pass"]


def test_krylov_with_reversed_drift_magnitude(exps_half):
    # f = |b1| forward, so I_T f is the reversed drift magnitude
    drift = build_example_drift(exps=exps_half, b1_fraction=0.5, b2="bump")
    f = FieldFunction(kind="log_singular", profile="gaussian", scale=drift.b1_scale,
                      exps=exps_half, name="b1_magnitude")
    ens = euler_maruyama(drift, 0.0, 4096, 128, seed=12, integrands={f.name: f})
    report = krylov_check(f, drift, ens, compute_constants(exps_half))
    assert report["f_norm"] == pytest.approx(drift.reversed_norm())
    assert np.isfinite(report["rhs"])
    assert report["pass"]
    # the same quantity as the drift's own |b1| integral, up to evaluation times
    assert report["lhs_mc"] == pytest.approx(np.mean(ens.path_integrals["abs_b1"]), rel=0.05)


def test_krylov_for_brownian_motion(exps):
    # zero drift: E int_0^1 1{|W_t| <= 1} dt = int_0^1 (2 Phi(1/sqrt t) - 1) dt
    drift = DriftSpec(exps=exps)
    f = FieldFunction(kind="stationary", profile="indicator", exps=exps)
    ens = euler_maruyama(drift, 0.0, 20000, 256, seed=31, record_stride=256,
                         integrands={f.name: f})
    report = krylov_check(f, drift, ens, compute_constants(exps))
    exact = quad(lambda t: 2.0 * norm.cdf(1.0 / np.sqrt(t)) - 1.0, 0.0, 1.0)[0]
    assert report["lhs_mc"] == pytest.approx(exact, abs=0.015)
    assert report["xi_integral"] == 0.0
    assert report["rhs"] == pytest.approx(compute_constants(exps).C0 * np.sqrt(2.0))
    assert report["pass"]
    assert report["drift_bound"]["rhs"] == 0.0
    assert report["drift_bound"]["pass"]

    zero = FieldFunction(kind="zero", profile="indicator", exps=exps, name="nothing")
    ens = euler_maruyama(drift, 0.0, 500, 32, seed=31, integrands={zero.name: zero})
    report = krylov_check(zero, drift, ens, compute_constants(exps))
    assert report["lhs_mc"] == 0.0
    assert report["rhs"] == 0.0
    assert report["pass"]


def test_brownian_path_diagnostics():
    drift = DriftSpec(exps=ExponentPair(T=1.0))
    ens = euler_maruyama(drift, 0.0, 10000, 256, seed=21)
    mod = increment_modulus(ens)
    assert mod["slope"] == pytest.approx(0.5, abs=0.05)
    assert mod["pass"]
    # E|W_D| = sqrt(2 D / pi)
    assert mod["moduli"][0] == pytest.approx(np.sqrt(2 * mod["gaps"][0] / np.pi), rel=0.05)
    assert integrability_proxy(ens)["fraction"] == 1.0
    assert lag_autocorrelation(ens)["pass"]
    with pytest.raises(DomainError):
        increment_modulus(euler_maruyama(drift, 0.0, 100, 64, seed=1))


def test_mollified_drift_is_a_grid_drift(exps_half):
    drift = build_example_drift(exps=exps_half, b1_fraction=0.5)
    x = space_axis(8.0, 1.0 / 64)
    moll = drift.mollified(4, x)
    assert moll.b1 == "grid"
    X = np.array([[0.0], [20.0]])
    t = 0.25
    assert moll.evaluate_b1(t, X)[0, 0] == pytest.approx(drift.evaluate_b1(t, X)[0, 0],
                                                         rel=0.05)
    assert moll.evaluate_b1(t, X)[1, 0] == 0.0


@pytest.mark.slow
def test_mollified_drift_convergence(exps_half):
    drift = build_example_drift(exps=exps_half, b1_fraction=0.5)
    x = space_axis(8.0, 1.0 / 128)
    report = mollified_drift_convergence(drift, [2, 8, 32], seed=7, x=x, n_paths=8192,
                                         n_steps=128)
    assert report["drift_error_decreasing"]
    assert report["ks_at_floor"]
    assert [r["n"] for r in report["rows"]] == [2, 8, 32]


@pytest.mark.slow
@pytest.mark.parametrize("which", ["indicator", "b1_magnitude"])
def test_krylov_acceptance(exps_half, which):
    drift = build_example_drift(exps=exps_half, b1_fraction=0.5, b2="bump")
    if which == "indicator":
        f = FieldFunction(kind="stationary", profile="indicator", exps=exps_half)
    else:
        f = FieldFunction(kind="log_singular", profile="gaussian", scale=drift.b1_scale,
                          exps=exps_half, name="b1_magnitude")
    ens = euler_maruyama(drift, 0.0, 100000, 1024, seed=41, record_stride=1024,
                         integrands={f.name: f}, workers=4)
    report = krylov_check(f, drift, ens, compute_constants(exps_half), n_se=2.0)
    assert report["lhs_mc"] <= report["rhs"] + 2.0 * report["se"]
    assert report["pass"]
    assert report["drift_bound"]["pass"]


@pytest.mark.slow
def test_terminal_moments_acceptance():
    n, n_steps = 100000, 1024
    dt = 1.0 / n_steps
    brownian = DriftSpec(exps=ExponentPair(T=1.0))
    x = euler_maruyama(brownian, 0.0, n, n_steps, seed=51, record_stride=n_steps,
                       workers=4).terminal()
    assert abs(x.mean()) <= 3.0 * np.sqrt(1.0 / n)
    assert abs(x.var() - 1.0) <= 3.0 * np.sqrt(2.0 / n)

    ou = DriftSpec(b2="linear", b2_params={"k": 1.0}, exps=ExponentPair(T=1.0))
    x = euler_maruyama(ou, 1.0, n, n_steps, seed=52, record_stride=n_steps,
                       workers=4).terminal()
    var = 0.5 * (1.0 - np.exp(-2.0))
    # Euler bias is O(dt) in both moments
    assert abs(x.mean() - np.exp(-1.0)) <= 3.0 * np.sqrt(var / n) + dt
    assert abs(x.var() - var) <= 3.0 * var * np.sqrt(2.0 / n) + dt
