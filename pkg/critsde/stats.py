""" Statistics of simulated laws: two-sample KS distances, kernel density
estimates, L^r integrability proxies for the density, and the strong Feller
probe x -> P_{s,t} f(x) under common random numbers.
"""
import numpy as np
from nipype import logging
from scipy import integrate, stats
from traits.api import HasStrictTraits, CArray, Float, Int

from critsde.errors import BandwidthError, DomainError
from critsde.heat import heat_convolve

utlogger = logging.getLogger("nipype.utils")

MIN_KDE_SAMPLES = 100
STABILITY_TOL = 0.05


def ks_distance(sample_a, sample_b):
    """ sup_x |F_a(x) - F_b(x)| for the empirical CDFs """
    a = np.ravel(np.asarray(sample_a, dtype=float))
    b = np.ravel(np.asarray(sample_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise DomainError("KS distance needs two nonempty samples")
    return float(stats.ks_2samp(a, b, method="asymp").statistic)


class DensityEstimate(HasStrictTraits):
    grid = CArray(dtype=float, shape=(None,))
    values = CArray(dtype=float, shape=(None,))
    bandwidth = Float
    n_samples = Int

    @property
    def spacing(self):
        return float(self.grid[1] - self.grid[0])

    @property
    def mass(self):
        return float(integrate.trapezoid(self.values, self.grid))

    def rows(self):
        return list(zip(self.grid.tolist(), self.values.tolist()))


def bandwidth_for(sample, rule="silverman"):
    """ 1.06 std n^{-1/5}, or a positive number passed through """
    if not isinstance(rule, str):
        bw = float(rule)
        if not bw > 0:
            raise BandwidthError("bandwidth must be positive, got %r" % rule)
        return bw
    if rule != "silverman":
        raise BandwidthError("unknown bandwidth rule %r" % rule)
    std = float(np.std(sample, ddof=1))
    if not std > 0 or not np.isfinite(std):
        raise BandwidthError("sample has zero variance; no bandwidth")
    return 1.06 * std * sample.size ** -0.2


def kde(sample, bandwidth="silverman", per_bandwidth=8, pad=5.0):
    """ Gaussian KDE on an automatic grid anchored at min(sample) - pad*bw.

    Samples are binned to the nearest node (integer counts, so the estimate
    does not depend on sample order) and smoothed with the heat kernel at
    time bw^2.
    """
    x = np.ravel(np.asarray(sample, dtype=float))
    if x.size < MIN_KDE_SAMPLES:
        raise DomainError("density estimate needs at least %d samples" % MIN_KDE_SAMPLES)
    if not np.all(np.isfinite(x)):
        raise DomainError("sample contains non-finite values")
    bw = bandwidth_for(x, bandwidth)
    h = bw / float(per_bandwidth)
    origin = x.min() - pad * bw
    n = int(np.ceil((x.max() + pad * bw - origin) / h)) + 1
    if n % 2 == 0:
        n += 1
    grid = origin + h * np.arange(n)
    idx = np.clip(np.rint((x - origin) / h).astype(int), 0, n - 1)
    counts = np.bincount(idx, minlength=n).astype(float)
    values = heat_convolve(bw ** 2, counts / (x.size * h), h)
    return DensityEstimate(grid=grid, values=np.maximum(values, 0.0), bandwidth=bw,
                           n_samples=int(x.size))


def lr_norm_proxy(density, r):
    """ trapezoid int |p|^r dy """
    if r < 1:
        raise DomainError("r must be at least 1, got %r" % r)
    return float(integrate.trapezoid(np.abs(density.values) ** r, density.grid))


def lr_stability(sample, r, bandwidth="silverman", tol=STABILITY_TOL):
    """ the proxy on the default KDE grid and on one twice as fine """
    coarse = lr_norm_proxy(kde(sample, bandwidth), r)
    fine = lr_norm_proxy(kde(sample, bandwidth, per_bandwidth=16), r)
    change = abs(fine - coarse) / max(abs(coarse), np.finfo(float).tiny)
    return {"r": r, "value": fine, "coarse_value": coarse, "rel_change": change,
            "tol": tol, "stable": bool(change <= tol)}


def gaussian_lr_norm(t, r):
    """ int N(0, t)(y)^r dy = (2 pi t)^{-(r-1)/2} r^{-1/2} """
    return (2 * np.pi * t) ** (-(r - 1) / 2.0) / np.sqrt(r)


def lr_space_time_proxy(ensemble, r, t0, component=0, max_times=64, bandwidth="silverman"):
    """ int_{t0}^{T} int |p(t, y)|^r dy dt over (at most max_times) recorded times """
    times = ensemble.times
    idx = np.flatnonzero((times >= t0) & (times > 0))
    if idx.size < 2:
        raise DomainError("need at least two recorded times in [t0, T]")
    if idx.size > max_times:
        keep = np.unique(np.linspace(0, idx.size - 1, max_times).round().astype(int))
        idx = idx[keep]
    per_time = [lr_norm_proxy(kde(ensemble.states[:, i, component], bandwidth), r)
                for i in idx]
    value = float(integrate.trapezoid(per_time, times[idx]))
    return {"r": r, "t0": t0, "value": value, "times": times[idx].tolist(),
            "per_time": per_time, "finite": bool(np.isfinite(value))}


""" strong Feller probe """

def _probe_values(drift, f, t, x, n_paths, seed, s, n_steps, workers):
    from critsde.sde import euler_maruyama
    x0 = np.zeros(drift.exps.d)
    x0[0] = x
    ens = euler_maruyama(drift, x0, n_paths, n_steps, seed, t_start=s, t_end=t,
                         workers=workers)
    return f(ens.states[:, -1, :])


def feller_probe(drift, f, t, x_list, n_paths, seed, s=0.0, n_steps=256, workers=1):
    """ rows (x, P_{s,t} f(x), stderr); every x reuses the same seed so the
    Brownian increments are common across starting points
    """
    if not f.bounded:
        raise DomainError("Feller probe needs a bounded test function")
    rows = []
    for x in x_list:
        vals = _probe_values(drift, f, t, float(x), n_paths, seed, s, n_steps, workers)
        rows.append((float(x), float(np.mean(vals)),
                     float(np.std(vals, ddof=1) / np.sqrt(vals.size))))
    return rows


def feller_continuity(drift, f, t, center, spacings, n_paths, seed, s=0.0,
                      n_steps=256, n_se=2.0, workers=1):
    """ max adjacent gap of P_{s,t} f on center + spacing * {-2..2} for each
    spacing, with CRN standard errors of the gaps; the gaps must shrink with
    the spacing up to n_se standard errors
    """
    if not f.bounded:
        raise DomainError("Feller probe needs a bounded test function")
    rows = []
    for spacing in spacings:
        xs = center + spacing * np.arange(-2, 3)
        vals = [_probe_values(drift, f, t, float(x), n_paths, seed, s, n_steps, workers)
                for x in xs]
        gaps, ses = [], []
        for a, b in zip(vals[:-1], vals[1:]):
            if a.size == b.size:
                diff = b - a
                se = np.std(diff, ddof=1) / np.sqrt(diff.size)
            else:
                se = np.sqrt(np.var(a, ddof=1) / a.size + np.var(b, ddof=1) / b.size)
            gaps.append(abs(float(np.mean(b) - np.mean(a))))
            ses.append(float(se))
        j = int(np.argmax(gaps))
        rows.append({"spacing": float(spacing), "max_gap": gaps[j], "se": ses[j],
                     "estimates": [float(np.mean(v)) for v in vals]})
    ok = all(r2["max_gap"] <= r1["max_gap"] + n_se * np.hypot(r1["se"], r2["se"])
             for r1, r2 in zip(rows, rows[1:]))
    return {"rows": rows, "s": s, "t": t, "pass": bool(ok)}
