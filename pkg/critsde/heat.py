""" Gaussian heat semigroup on truncated grids and the explicit constants of
the weighted-space parabolic estimates.

K(t, x) = (2 pi t)^{-d/2} exp(-|x|^2 / 2t). Kernels are sampled on every grid
offset the domain can produce (2n - 1 points per axis) so the zero-padded
convolution never drops mass that stays inside the domain.
"""
import warnings

import numpy as np
from scipy import fft, integrate, special
from traits.api import HasStrictTraits, Float, Instance

from critsde.errors import DomainError, TruncationError, KernelTruncationWarning
from critsde.spaces import ExponentPair, convolve_same


class KernelConstants(HasStrictTraits):
    exps = Instance(ExponentPair)
    C_grad = Float
    C_sup = Float
    C0 = Float
    theta = Float

    def to_dict(self):
        return constants_record(self)


def _check_time(t):
    if not (t > 0 and np.isfinite(t)):
        raise DomainError("heat kernel needs 0 < t < inf, got %r" % (t,))


def truncation_check(t, L, strict=False):
    """ warns (or raises in strict mode) when sqrt(t) > L/3 """
    if np.sqrt(t) > L / 3.0:
        msg = "kernel width sqrt(t)=%.4g exceeds a third of the domain radius %.4g" % (
            np.sqrt(t), L)
        if strict:
            raise TruncationError(msg)
        warnings.warn(msg, KernelTruncationWarning, stacklevel=3)


def kernel_offsets(spacing, n):
    return (np.arange(2 * n - 1) - (n - 1)) * spacing


def heat_kernel(t, spacing, n, d=1, normalize=True):
    """ K(t) on the (2n-1)^d offset grid. normalize rescales the sampled
    kernel to unit discrete mass (truncation correction).
    """
    _check_time(t)
    off = kernel_offsets(spacing, n)
    k1 = np.exp(-off ** 2 / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)
    if normalize:
        k1 = k1 / (k1.sum() * spacing)
    out = k1
    for _ in range(d - 1):
        out = np.multiply.outer(out, k1)
    return out


def heat_gradient_kernel(t, spacing, n, d=1, axis=0):
    """ d/dx_axis K(t). Analytic samples once sqrt(t) >= 2 spacing, centered
    differences of the normalized kernel below that.
    """
    _check_time(t)
    off = kernel_offsets(spacing, n)
    k1 = np.exp(-off ** 2 / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)
    mass = k1.sum() * spacing
    k1 = k1 / mass
    if np.sqrt(t) >= 2.0 * spacing:
        dk1 = -off / t * k1
    else:
        dk1 = np.gradient(k1, spacing)
    factors = [dk1 if i == axis else k1 for i in range(d)]
    out = factors[0]
    for f in factors[1:]:
        out = np.multiply.outer(out, f)
    return out


def heat_convolve(t, h, spacing, method="auto", strict=False, normalize=True):
    """ K(t) * h on the grid of h (zero outside the truncated domain) """
    _check_time(t)
    h = np.asarray(h, dtype=float)
    d = h.ndim
    n = h.shape[-1]
    truncation_check(t, (n - 1) * spacing / 2.0, strict)
    return convolve_same(h, heat_kernel(t, spacing, n, d, normalize), d, method) * spacing ** d


def grad_heat_convolve(t, h, spacing, method="auto", strict=False):
    """ (d_1 K(t) * h, ..., d_d K(t) * h), stacked on a leading axis """
    _check_time(t)
    h = np.asarray(h, dtype=float)
    d = h.ndim
    n = h.shape[-1]
    truncation_check(t, (n - 1) * spacing / 2.0, strict)
    grads = [convolve_same(h, heat_gradient_kernel(t, spacing, n, d, i), d, method)
             for i in range(d)]
    return np.stack(grads) * spacing ** d


# complex entries held per batch of transformed kernels
BATCH_ENTRIES = 1 << 22


def heat_convolve_many(taus, slices, spacing, weights=None, gradient=False):
    """ K(tau_k) * F_k for a stack of slices F_k (shape (m, n, ..., n)).

    Without weights the m convolutions are returned; with weights only
    sum_k w_k K(tau_k) * F_k, accumulated in Fourier space so a whole
    quadrature rule costs one inverse transform. gradient=True also returns
    the d/dx_i K convolutions, stacked after the node axis (or first when
    weighted).
    """
    taus = np.asarray(taus, dtype=float)
    slices = np.asarray(slices, dtype=float)
    m = taus.size
    d = slices.ndim - 1
    n = slices.shape[-1]
    size = (fft.next_fast_len(3 * n - 2, real=True),) * d
    axes = tuple(range(1, d + 1))
    crop = (slice(None),) + tuple(slice(n - 1, 2 * n - 1) for _ in range(d))
    spec_f = fft.rfftn(slices, s=size, axes=axes)
    chunk = max(1, BATCH_ENTRIES // spec_f[0].size)

    def _apply(make_kernel):
        acc = None
        parts = []
        for lo in range(0, m, chunk):
            sel = slice(lo, min(lo + chunk, m))
            kernels = np.stack([make_kernel(tau) for tau in taus[sel]])
            prod = fft.rfftn(kernels, s=size, axes=axes) * spec_f[sel]
            if weights is None:
                parts.append(fft.irfftn(prod, s=size, axes=axes)[crop])
            else:
                part = np.tensordot(np.asarray(weights, dtype=float)[sel], prod, axes=(0, 0))
                acc = part if acc is None else acc + part
        if weights is None:
            return np.concatenate(parts) * spacing ** d
        full = fft.irfftn(acc[np.newaxis], s=size, axes=axes)[crop][0]
        return full * spacing ** d

    value = _apply(lambda tau: heat_kernel(tau, spacing, n, d))
    if not gradient:
        return value
    grads = [_apply(lambda tau, i=i: heat_gradient_kernel(tau, spacing, n, d, i))
             for i in range(d)]
    return value, np.stack(grads, axis=0 if weights is not None else 1)


""" norms and constants """

def kernel_norm(t, r, d=1):
    """ ||K(t)||_{L^r(R^d)} in closed form """
    _check_time(t)
    if np.isinf(r):
        return (2 * np.pi * t) ** (-d / 2.0)
    return (2 * np.pi * t) ** (-d * (r - 1) / (2.0 * r)) * r ** (-d / (2.0 * r))


def kernel_gradient_norm(t, r, d=1):
    """ ||d_1 K(t)||_{L^r(R^d)} by quadrature of the one-dimensional factor """
    _check_time(t)
    k1 = lambda x: np.exp(-x ** 2 / (2 * t)) / np.sqrt(2 * np.pi * t)
    if np.isinf(r):
        first = k1(np.sqrt(t)) / np.sqrt(t)
    else:
        val, _ = integrate.quad(lambda x: (abs(x) / t * k1(x)) ** r, -np.inf, np.inf,
                                epsabs=0, epsrel=1e-13, limit=200)
        first = val ** (1.0 / r)
    return first * kernel_norm(t, r, 1) ** (d - 1)


def theta_exponent(q):
    """ time-Holder exponent 2(q-1)(q-2)/((3q-2)q), clipped to [0, 1] """
    th = 2.0 * (q - 1) * (q - 2) / ((3 * q - 2) * q)
    return float(min(max(th, 0.0), 1.0))


def compute_constants(exps):
    """ C_grad (closed form), C_sup, C0 = max(C_sup sqrt(T), C_grad) and theta """
    p, q, d, T = exps.p, exps.q, exps.d, exps.T
    if q <= 1:
        raise DomainError("constants need q > 1 (Beta pole at q = 1)")
    if not exps.is_critical:
        raise DomainError("constants are defined for critical pairs 2/q + d/p = 1 "
                          "(got p=%g, q=%g, d=%d)" % (p, q, d))
    pc = exps.p_conj
    c_grad = (np.pi ** (-(d + p - 1) / (2 * p))
              * 2.0 ** ((p - d) / (2 * p))
              * special.gamma((2 * p - 1) / (2 * p - 2)) ** ((p - 1) / p)
              * ((p - 1) / p) ** (((d + 1) * p - d) / (2 * p))
              * special.beta(1 - 1 / q, 1 / q))
    c_sup = (pc ** (-d / (2 * pc)) * (2 * np.pi) ** (-d / (2 * p))
             * special.beta(1 - 1 / q, 1 / q + 0.5))
    c0 = max(c_sup * np.sqrt(T), c_grad)
    return KernelConstants(exps=exps, C_grad=float(c_grad), C_sup=float(c_sup),
                           C0=float(c0), theta=theta_exponent(q))


def constants_record(consts):
    e = consts.exps
    return {"key": "p=%r,q=%r,d=%d,T=%r" % (e.p, e.q, e.d, e.T),
            "exponents": e.to_dict(),
            "C_grad": consts.C_grad, "C_sup": consts.C_sup,
            "C0": consts.C0, "theta": consts.theta}
