""" Weighted space-time function spaces on grids.

A SpaceTimeField holds f(t, x) sampled on a strictly increasing time grid and
a uniform spatial grid on [-L, L]^d. Values are time-major: shape
(n_times, n_x, ..., n_x) for scalar fields and
(n_times, n_components, n_x, ..., n_x) for vector fields.

The weighted norm is sup_t t^{1/q} ||f(t)||_{L^p}, with spatial norms from the
trapezoid rule on the truncated domain and the sup taken over grid times.
"""
import functools

import numpy as np
from nipype import logging
from scipy import integrate, signal, special
from scipy.interpolate import interp1d
from traits.api import (HasStrictTraits, CArray, Float, Int, Enum, Bool,
                        Either)

from critsde.errors import DomainError, DataError, ResolutionError

utlogger = logging.getLogger("nipype.utils")

CRITICAL_TOL = 1e-12
SYMMETRY_TOL = 1e-12
# grids at or below this many points convolve by direct summation
DIRECT_LIMIT = 4096


class ExponentPair(HasStrictTraits):
    """ (p, q, d, T): spatial and temporal Lebesgue exponents, dimension and
    horizon. Both exponents must be finite.
    """
    p = Float(2.0)
    q = Float(4.0)
    d = Int(1)
    T = Float(1.0)

    def __init__(self, **traits):
        super(ExponentPair, self).__init__(**traits)
        self.check()

    def check(self):
        if not (1.0 <= self.p < np.inf) or not (1.0 <= self.q < np.inf):
            raise DomainError("exponents must satisfy 1 <= p, q < inf (got p=%r, q=%r)"
                              % (self.p, self.q))
        if self.d < 1:
            raise DomainError("dimension must be positive, got %r" % self.d)
        if not (0.0 < self.T < np.inf):
            raise DomainError("horizon T must be positive and finite, got %r" % self.T)

    @classmethod
    def critical(cls, q, d=1, T=1.0):
        """ the p making (p, q) critical in dimension d """
        if q <= 2:
            raise DomainError("no finite critical p for q <= 2")
        return cls(p=d / (1.0 - 2.0 / q), q=q, d=d, T=T)

    @property
    def is_critical(self):
        return abs(2.0 / self.q + self.d / self.p - 1.0) <= CRITICAL_TOL

    @property
    def p_conj(self):
        if self.p == 1.0:
            return np.inf
        return self.p / (self.p - 1.0)

    def to_dict(self):
        return {"p": self.p, "q": self.q, "d": self.d, "T": self.T}


class SpaceTimeField(HasStrictTraits):
    times = CArray(dtype=float, shape=(None,))
    # grid coordinates along each spatial axis (the grid is the same on every axis)
    x = CArray(dtype=float, shape=(None,))
    values = CArray(dtype=float)
    d = Int(1)
    # 0 for scalar fields
    n_components = Int(0)
    T = Float(1.0)

    def __init__(self, check=True, **traits):
        super(SpaceTimeField, self).__init__(**traits)
        if check:
            self.check()

    def check(self):
        t = self.times
        if t.size == 0:
            raise DomainError("field has an empty time grid")
        if t[0] < 0 or t[-1] > self.T * (1 + SYMMETRY_TOL):
            raise DomainError("times must lie in [0, T]")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise DomainError("times must be strictly increasing")
        if self.x.size < 2:
            raise DomainError("spatial grid needs at least two points")
        dx = np.diff(self.x)
        if not np.all(dx > 0) or not np.allclose(dx, dx[0], rtol=1e-9, atol=0):
            raise DomainError("spatial grid must be uniform and increasing")
        if self.values.shape != self.expected_shape:
            raise DataError("values have shape %s, expected %s"
                            % (self.values.shape, self.expected_shape))
        if not np.all(np.isfinite(self.values)):
            raise DataError("field contains non-finite values")

    @property
    def h(self):
        return float(self.x[1] - self.x[0])

    @property
    def L(self):
        return float(max(-self.x[0], self.x[-1]))

    @property
    def is_vector(self):
        return self.n_components > 0

    @property
    def space_shape(self):
        return (self.x.size,) * self.d

    @property
    def expected_shape(self):
        comp = (self.n_components,) if self.n_components else ()
        return (self.times.size,) + comp + self.space_shape

    def magnitude(self):
        """ pointwise Euclidean length for vector fields, |f| otherwise """
        if self.is_vector:
            return np.sqrt(np.sum(self.values ** 2, axis=1))
        return np.abs(self.values)

    def slice_norms(self, p):
        """ ||f(t)||_p for every grid time """
        return lp_norm(self.magnitude(), self.h, p, self.d)

    def with_values(self, values, times=None, n_components=None):
        return SpaceTimeField(
            times=self.times if times is None else times,
            x=self.x, values=values, d=self.d, T=self.T,
            n_components=self.n_components if n_components is None else n_components)

    def component(self, i):
        if not self.is_vector:
            raise DomainError("component() needs a vector field")
        return self.with_values(self.values[:, i], n_components=0)

    def _compatible(self, other):
        if (self.values.shape != other.values.shape
                or not np.array_equal(self.times, other.times)
                or not np.array_equal(self.x, other.x)):
            raise DataError("fields live on different grids")

    def __add__(self, other):
        self._compatible(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        self._compatible(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        return self.with_values(float(c) * self.values)

    __rmul__ = __mul__


class SpaceMembership(HasStrictTraits):
    linf_q_norm = Float(0.0)
    # absent (None) when the weighted slices jump between grid times
    cq_norm = Either(None, Float)
    limit_at_zero = Float(0.0)
    in_c0q = Bool(False)
    tol = Float(1e-3)
    continuity_gap = Float(0.0)

    def to_dict(self):
        return {"linf_q_norm": self.linf_q_norm, "cq_norm": self.cq_norm,
                "limit_at_zero": self.limit_at_zero, "in_c0q": self.in_c0q,
                "tol": self.tol, "continuity_gap": self.continuity_gap}


class MollifierSpec(HasStrictTraits):
    n = Int(1)
    profile = Enum("bump", "cosine")

    def __init__(self, **traits):
        super(MollifierSpec, self).__init__(**traits)
        if self.n < 1:
            raise DomainError("mollifier scale index must be positive")


""" grids """

def space_axis(L, h):
    """ uniform axis on [-L, L]; h is rounded so that 2L/h is an integer """
    if L <= 0 or h <= 0:
        raise DomainError("need L > 0 and h > 0")
    n = int(round(2.0 * L / h)) + 1
    return np.linspace(-L, L, n)


def solver_time_grid(T, ratio=1.2, n_uniform=64, n_refine=28):
    """ 0, a geometric cluster toward t=0 with step ratio `ratio`, then the
    uniform grid with step T/n_uniform up to T.
    """
    coarse = T / float(n_uniform)
    uniform = np.arange(n_uniform + 1) * coarse
    uniform[-1] = T
    geometric = coarse * ratio ** -np.arange(1, n_refine + 1)
    return np.unique(np.concatenate([uniform, geometric]))


def symmetric_time_grid(T, ratio=1.2, n_uniform=64, n_refine=28):
    """ grid on (0, T) symmetric under t -> T - t, clustered at both ends.
    Neither endpoint is included so fields singular at 0 or T can be sampled.
    """
    if n_uniform % 2:
        raise DomainError("n_uniform must be even for a symmetric grid")
    coarse = T / float(n_uniform)
    inner = np.arange(1, n_uniform // 2) * coarse
    geometric = coarse * ratio ** -np.arange(1, n_refine + 1)
    left = np.unique(np.concatenate([geometric, inner]))
    return np.concatenate([left, [T / 2.0], T - left[::-1]])


def log_time_grid(T, t_min, per_decade=8):
    """ geometric grid from t_min to T """
    if not 0 < t_min < T:
        raise DomainError("need 0 < t_min < T")
    decades = np.log10(T / t_min)
    n = int(np.ceil(decades * per_decade)) + 1
    t = np.logspace(np.log10(t_min), np.log10(T), n)
    t[-1] = T
    return t


def indicator_cells(x, a, b, height=1.0, p=1.0):
    """ samples height*1_[a,b) on a uniform grid from cell overlaps.

    Each node stands for the cell [x - h/2, x + h/2]; the sampled value is
    height * frac^(1/p) where frac is the covered fraction of that cell, so
    the trapezoid p-th power integral equals height^p (b - a) exactly.
    """
    x = np.asarray(x, dtype=float)
    h = x[1] - x[0]
    lo = np.maximum(x - h / 2.0, a)
    hi = np.minimum(x + h / 2.0, b)
    frac = np.clip((hi - lo) / h, 0.0, 1.0)
    return height * frac ** (1.0 / p)


""" norms """

def lp_norm(values, h, p, d=1):
    """ trapezoid L^p norm over the last d axes """
    a = np.abs(np.asarray(values, dtype=float))
    if np.isinf(p):
        return a.max(axis=tuple(range(-d, 0)))
    a = a ** p
    for _ in range(d):
        a = integrate.trapezoid(a, dx=h, axis=-1)
    return a ** (1.0 / p)


def _check_field(field):
    if field.times.size == 0:
        raise DomainError("field has an empty time grid")
    if not np.all(np.isfinite(field.values)):
        raise DataError("field contains non-finite values")


def weighted_slice_norms(field, exps):
    _check_field(field)
    return field.times ** (1.0 / exps.q) * field.slice_norms(exps.p)


def weighted_norm(field, exps):
    """ sup over grid times of t^{1/q} ||f(t)||_p """
    return float(np.max(weighted_slice_norms(field, exps)))


def continuity_gap(field, exps):
    """ largest L^p distance between adjacent weighted slices """
    _check_field(field)
    if field.times.size < 2:
        return 0.0
    w = field.times ** (1.0 / exps.q)
    shape = (-1,) + (1,) * (field.values.ndim - 1)
    weighted = field.values * w.reshape(shape)
    diffs = np.diff(weighted, axis=0)
    if field.is_vector:
        diffs = np.sqrt(np.sum(diffs ** 2, axis=1))
    return float(np.max(lp_norm(diffs, field.h, exps.p, field.d)))


def classify_space(field, exps, tol=1e-3, jump_tol=0.2):
    """ places a gridded field in L^inf_q, C_q and C^0_q.

    The weighted limit at zero is read off the smallest grid time; cq_norm is
    only reported when no adjacent pair of weighted slices is further apart
    than jump_tol times the weighted norm.
    """
    _check_field(field)
    if field.times[0] <= 0:
        raise DomainError("classification needs the smallest grid time to be positive")
    w = weighted_slice_norms(field, exps)
    linf = float(np.max(w))
    gap = continuity_gap(field, exps)
    cq = linf if gap <= jump_tol * max(linf, np.finfo(float).tiny) else None
    limit = float(w[0])
    return SpaceMembership(linf_q_norm=linf, cq_norm=cq, limit_at_zero=limit,
                           in_c0q=bool(limit <= tol), tol=tol, continuity_gap=gap)


def lq_membership(field, exps, r=None, min_decades=6):
    """ decides membership of ||f(t)||_p in L^r(0,T) from the decay of its
    decade-wise integrals toward t = 0.

    With I_k the integral over [10^-(k+1), 10^-k], a model I_k ~ k^-a is fitted
    on the deeper half of the covered decades; the time integral converges
    iff a > 1. Power-law blow-ups show up as a (very) negative a.
    """
    from critsde.util import loglog_slope
    _check_field(field)
    r = exps.q if r is None else float(r)
    t = field.times
    if t[0] <= 0:
        raise DomainError("membership check needs positive grid times")
    norms = field.slice_norms(exps.p)
    with np.errstate(divide="ignore"):
        # integrand of d(log t), kept in log space so deep grids do not overflow
        log_g = r * np.log(norms) + np.log(t)
    g = np.exp(log_g)
    cum = integrate.cumulative_trapezoid(g, np.log(t), initial=0.0)
    j_lo = int(np.ceil(-np.log10(t[-1])))
    j_hi = int(np.floor(-np.log10(t[0])))
    edges = 10.0 ** -np.arange(j_lo, j_hi + 1, dtype=float)
    if edges.size < min_decades + 1:
        raise DomainError("membership check needs at least %d decades of grid, got %d"
                          % (min_decades, max(edges.size - 1, 0)))
    c_edges = np.interp(np.log(edges), np.log(t), cum)
    increments = c_edges[:-1] - c_edges[1:]
    k = np.arange(j_lo, j_hi, dtype=float) + 0.5
    half = increments.size // 2
    tail_inc, tail_k = increments[half:], k[half:]
    if not np.any(tail_inc > 0):
        return {"r": r, "decay_exponent": np.inf, "member": True,
                "n_decades": int(increments.size), "increments": increments.tolist()}
    growing = bool(tail_inc[-1] > tail_inc[-2])
    slope, _ = loglog_slope(tail_k, tail_inc)
    a = -slope
    return {"r": r, "decay_exponent": a, "member": bool(a > 1.0 and not growing),
            "n_decades": int(increments.size), "increments": increments.tolist()}


""" time reversal """

def is_symmetric_grid(times, T):
    return np.allclose(T - times[::-1], times, rtol=0, atol=SYMMETRY_TOL * T)


def reverse_time(field, resample=False):
    """ I_T f(t) = f(T - t) on the same grid.

    Symmetric grids are reversed by reindexing; other grids need resample=True
    and are linearly interpolated in time.
    """
    _check_field(field)
    T = field.T
    if is_symmetric_grid(field.times, T):
        return field.with_values(field.values[::-1].copy())
    if not resample:
        raise DomainError("time grid is not symmetric under t -> T - t; enable resampling")
    utlogger.debug("reverse_time: resampling an asymmetric grid of %d times",
                   field.times.size)
    vals = field.values
    interp = interp1d(field.times, vals, axis=0, bounds_error=False,
                      fill_value=(vals[0], vals[-1]), assume_sorted=True)
    return field.with_values(interp(T - field.times))


""" mollification """

def _profile(name, r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    if name == "bump":
        out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    elif name == "cosine":
        out[inside] = 0.5 * (1.0 + np.cos(np.pi * r[inside]))
    else:
        raise DomainError("unknown mollifier profile %r" % name)
    return out


@functools.lru_cache(maxsize=None)
def mollifier_constant(name, d=1):
    """ c with c * integral of profile(|x|) over the unit ball equal to 1 """
    sphere = 2.0 * np.pi ** (d / 2.0) / special.gamma(d / 2.0)
    radial, _ = integrate.quad(lambda r: r ** (d - 1) * _profile(name, r), 0.0, 1.0,
                               epsabs=1e-14, epsrel=1e-13, limit=200)
    return 1.0 / (sphere * radial)


def mollifier_density(moll, r, d=1):
    """ rho(x) at |x| = r, unit mass, supported in the unit ball """
    return mollifier_constant(moll.profile, d) * _profile(moll.profile, r)


def mollifier_mass(moll, d=1):
    sphere = 2.0 * np.pi ** (d / 2.0) / special.gamma(d / 2.0)
    mass, _ = integrate.quad(lambda r: sphere * r ** (d - 1) * mollifier_density(moll, r, d),
                             0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return mass


def mollifier_kernel(moll, h, d=1):
    """ rho_n(x) = n^d rho(n x) sampled on grid offsets, normalized to unit
    discrete mass
    """
    if 1.0 / moll.n < 2.0 * h:
        raise ResolutionError("mollifier width 1/%d is below two grid spacings (h=%g)"
                              % (moll.n, h))
    m = int(np.floor(1.0 / (moll.n * h)))
    offsets = np.arange(-m, m + 1) * h
    grids = np.meshgrid(*([offsets] * d), indexing="ij")
    radius = np.sqrt(sum(g ** 2 for g in grids)) * moll.n
    k = mollifier_density(moll, radius, d) * moll.n ** d
    return k / (k.sum() * h ** d)


def convolve_same(values, kernel, d=1, method="auto"):
    """ linear convolution over the last d axes of values, zero padded and
    cropped back to the input grid; kernel has odd length on every axis.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    if method == "auto":
        method = "direct" if n ** d <= DIRECT_LIMIT else "fft"
    if method == "fft":
        k = kernel.reshape((1,) * (values.ndim - d) + kernel.shape)
        return signal.fftconvolve(values, k, mode="same", axes=tuple(range(-d, 0)))
    lead = values.shape[:values.ndim - d]
    flat = values.reshape((-1,) + values.shape[values.ndim - d:])
    out = np.empty_like(flat)
    for i in range(flat.shape[0]):
        out[i] = signal.convolve(flat[i], kernel, mode="same", method="direct")
    return out.reshape(lead + values.shape[values.ndim - d:])


def mollify(field, moll):
    """ f_n(t) = f(t) * rho_n slice by slice """
    _check_field(field)
    k = mollifier_kernel(moll, field.h, field.d)
    out = convolve_same(field.values, k, field.d) * field.h ** field.d
    return field.with_values(out)


def mollification_profile(field, n_list, exps, profile="bump"):
    """ [(n, sup_t t^{1/q} ||f_n(t) - f(t)||_p), ...] for n in n_list.

    Convergence to zero is only guaranteed in C_q, so the field must classify
    as C_q on its grid (see classify_space); a bounded weighted norm alone is
    not enough.
    """
    membership = classify_space(field, exps)
    if membership.cq_norm is None:
        raise DomainError("mollification error profile needs a C_q field; weighted slices "
                          "jump by %.4g" % membership.continuity_gap)
    rows = []
    for n in n_list:
        fn = mollify(field, MollifierSpec(n=int(n), profile=profile))
        rows.append((int(n), weighted_norm(fn - field, exps)))
    return rows


def summarize_profile(rows, threshold=1e-2, noise=0.05):
    """ monotonicity / convergence flags and the log-log decay slope """
    from critsde.errors import FitError
    from critsde.util import loglog_slope
    errs = np.array([e for _, e in rows], dtype=float)
    ns = np.array([n for n, _ in rows], dtype=float)
    out = {
        "nonincreasing": bool(np.all(errs[1:] <= errs[:-1] * (1.0 + noise))),
        "strictly_decreasing": bool(np.all(errs[1:] < errs[:-1])),
        "converged": bool(errs.size and errs[-1] < threshold),
        "threshold": threshold,
        "slope": None,
    }
    try:
        out["slope"] = loglog_slope(ns, errs)[0]
    except FitError:
        pass
    return out


""" the piecewise counterexample """

def counterexample_field(x, k_max, times=None):
    """ f(t,x) = sum_k 1_[(k-1)/k, k/(k+1))(t) k 1_[k, k+1/k^2)(x) on [0,1).

    Every time slice has unit L^2 norm; the bumps are sampled with
    L^2-conserving cell fractions. times defaults to the left end of each
    time window (one slice per k).
    """
    x = np.asarray(x, dtype=float)
    h = x[1] - x[0]
    if x[-1] < k_max + 1:
        raise ResolutionError("spatial grid must reach x = %d" % (k_max + 1))
    if h > 1.0 / (4.0 * k_max ** 2) * (1.0 + 1e-9):
        raise ResolutionError("spacing %g cannot resolve the k=%d bump (need <= %g)"
                              % (h, k_max, 1.0 / (4.0 * k_max ** 2)))
    if times is None:
        times = np.array([(k - 1.0) / k for k in range(1, k_max + 1)])
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(times >= 1):
        raise DomainError("counterexample times must lie in [0, 1)")
    values = np.zeros((times.size, x.size))
    for i, t in enumerate(times):
        k = counterexample_window(t)
        if 1 <= k <= k_max:
            values[i] = indicator_cells(x, k, k + 1.0 / k ** 2, height=k, p=2.0)
    return SpaceTimeField(times=times, x=x, values=values, d=1, T=1.0)


def counterexample_window(t):
    """ the k with t in [(k-1)/k, k/(k+1)) """
    return int(np.floor(1.0 / (1.0 - t) + 1e-9))


def counterexample_table(field, n_list, profile="bump"):
    """ for each n: (n, k attaining the max, max_k sup_t ||f_n(t) - f(t)||_2^2) """
    rows = []
    for n in n_list:
        fn = mollify(field, MollifierSpec(n=int(n), profile=profile))
        sq = lp_norm(fn.values - field.values, field.h, 2.0) ** 2
        i = int(np.argmax(sq))
        rows.append((int(n), counterexample_window(field.times[i]), float(sq[i])))
    return rows
