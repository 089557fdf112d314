import warnings

import mpmath
import numpy as np
import pytest

from critsde.errors import DomainError, KernelTruncationWarning, TruncationError
from critsde.heat import (compute_constants, constants_record, grad_heat_convolve,
                          heat_convolve, heat_convolve_many, heat_kernel, kernel_gradient_norm,
                          kernel_norm, theta_exponent, truncation_check)
from critsde.spaces import ExponentPair, indicator_cells, lp_norm, space_axis
from critsde.util import loglog_slope


def test_kernel_unit_mass():
    h = 1.0 / 32
    k = heat_kernel(0.3, h, 257)
    assert k.sum() * h == pytest.approx(1.0, rel=1e-13)
    assert heat_kernel(0.3, h, 33, d=2).shape == (65, 65)
    with pytest.raises(DomainError):
        heat_kernel(0.0, h, 10)


def test_heat_of_gaussian(axis, gaussian):
    # K(1) * N(0,1) = N(0,2)
    h = axis[1] - axis[0]
    u = heat_convolve(1.0, gaussian, h)
    mid = axis.size // 2
    assert u[mid] == pytest.approx(1.0 / np.sqrt(4 * np.pi), rel=1e-6)
    du = grad_heat_convolve(1.0, gaussian, h)
    assert du.shape == (1, axis.size)
    at_one = mid + 32
    assert axis[at_one] == pytest.approx(1.0)
    assert du[0, at_one] == pytest.approx(-0.5 * np.exp(-0.25) / np.sqrt(4 * np.pi), rel=1e-5)


def test_batched_convolutions_agree(axis, gaussian):
    h = axis[1] - axis[0]
    taus = np.array([0.1, 0.5, 1.0])
    slices = np.stack([gaussian, 2 * gaussian, np.roll(gaussian, 40)])
    many = heat_convolve_many(taus, slices, h)
    for i in range(3):
        assert many[i] == pytest.approx(heat_convolve(taus[i], slices[i], h), abs=1e-12)
    w = np.array([0.2, 0.3, 0.5])
    total, grad = heat_convolve_many(taus, slices, h, weights=w, gradient=True)
    assert total == pytest.approx(np.tensordot(w, many, axes=(0, 0)), abs=1e-12)
    assert grad.shape == (1, axis.size)


def test_truncation_warning():
    with pytest.warns(KernelTruncationWarning):
        truncation_check(4.0, 3.0)
    with pytest.raises(TruncationError):
        truncation_check(4.0, 3.0, strict=True)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        truncation_check(0.5, 8.0)


@pytest.mark.parametrize("r", [1.0, 1.5, 2.0, 3.0])
def test_kernel_norms_against_quadrature(r):
    t = 0.7
    k = lambda x: mpmath.exp(-x ** 2 / (2 * t)) / mpmath.sqrt(2 * mpmath.pi * t)
    ref = mpmath.quad(lambda x: k(x) ** r, [-mpmath.inf, 0, mpmath.inf]) ** (1 / r)
    assert kernel_norm(t, r) == pytest.approx(float(ref), rel=1e-10)
    ref_grad = mpmath.quad(lambda x: (abs(x) / t * k(x)) ** r,
                           [-mpmath.inf, 0, mpmath.inf]) ** (1 / r)
    assert kernel_gradient_norm(t, r) == pytest.approx(float(ref_grad), rel=1e-9)


def test_kernel_gradient_l2_closed_form():
    # ||d_x K(t)||_2 = t^{-3/4} / (2 pi^{1/4})
    assert kernel_gradient_norm(0.4, 2.0) == pytest.approx(
        0.4 ** -0.75 / (2 * np.pi ** 0.25), rel=1e-10)


def test_constants_p2_q4():
    c = compute_constants(ExponentPair(p=2.0, q=4.0, T=1.0))
    assert c.C_grad == pytest.approx(1.6686, abs=1e-4)
    assert c.C_sup == pytest.approx(0.89994, abs=1e-4)
    assert c.C0 == pytest.approx(max(c.C_sup, c.C_grad))
    assert c.theta == pytest.approx(0.3)
    assert constants_record(c)["key"] == "p=2.0,q=4.0,d=1,T=1.0"


@pytest.mark.parametrize("q", [3.0, 4.0, 6.0, 10.0])
def test_constants_are_kernel_time_integrals(q):
    # both constants are a kernel norm at t = 1 times a Beta time integral
    exps = ExponentPair.critical(q)
    c = compute_constants(exps)
    pc = exps.p_conj
    grad = kernel_gradient_norm(1.0, pc) * float(mpmath.beta(1 - 1 / q, 1 / q))
    sup = kernel_norm(1.0, pc) * float(mpmath.beta(1 - 1 / q, 1 / q + 0.5))
    assert c.C_grad == pytest.approx(grad, rel=1e-8)
    assert c.C_sup == pytest.approx(sup, rel=1e-10)


def test_constants_with_long_horizon():
    c = compute_constants(ExponentPair(p=2.0, q=4.0, T=16.0))
    assert c.C0 == pytest.approx(4.0 * c.C_sup)


def test_constants_need_critical_pair():
    with pytest.raises(DomainError):
        compute_constants(ExponentPair(p=2.0, q=6.0))


def test_theta_exponent():
    assert theta_exponent(4.0) == pytest.approx(0.3)
    assert theta_exponent(2.0) == 0.0
    assert 0.0 < theta_exponent(1e6) <= 1.0


@pytest.mark.parametrize("shape", ["gaussian", "indicator"])
@pytest.mark.parametrize("s", [0.1, 0.5])
@pytest.mark.parametrize("t", [0.1, 0.5])
def test_semigroup_property(shape, s, t):
    x = space_axis(12.0, 1.0 / 32)
    h = x[1] - x[0]
    if shape == "gaussian":
        f = np.exp(-x ** 2 / 2.0) / np.sqrt(2 * np.pi)
    else:
        f = indicator_cells(x, -1.0, 1.0)
    twice = heat_convolve(t, heat_convolve(s, f, h), h)
    once = heat_convolve(t + s, f, h)
    inner = np.abs(x) <= 8.0
    assert np.max(np.abs(twice - once)[inner]) <= 1e-4


def test_rate_at_small_times():
    x = space_axis(4.0, 1.0 / 256)
    h = x[1] - x[0]
    ts = np.logspace(-3, -1, 7)
    # a jump costs sqrt(t) in L^1: int |Phi(y / sqrt t) - 1{y > 0}| dy = sqrt(2 t / pi)
    box = indicator_cells(x, -1.0, 1.0)
    errs = [lp_norm(heat_convolve(t, box, h) - box, h, 1.0) for t in ts]
    slope, _ = loglog_slope(ts, errs)
    assert 0.45 <= slope <= 0.55
    assert errs[0] == pytest.approx(2.0 * np.sqrt(2.0 * ts[0] / np.pi), rel=0.05)
    # smooth data converge at the full rate t
    smooth = np.exp(-x ** 2 / 2.0) / np.sqrt(2 * np.pi)
    errs = [lp_norm(heat_convolve(t, smooth, h) - smooth, h, 2.0) for t in ts]
    slope, _ = loglog_slope(ts, errs)
    assert 0.95 <= slope <= 1.05
