""" Euler-Maruyama for dX = b(t, X) dt + sigma(X) dW with b = b1 + b2, where b1
may blow up as t -> T and b2 is bounded, plus the Monte Carlo checks built on
the ensembles (Krylov estimate, increment modulus, mollified drifts).

Randomness is counter based: paths are cut into fixed blocks of BLOCK_SIZE and
block k draws from Philox keyed by (seed, k), so an ensemble does not depend
on how many worker processes simulated it.
"""
from multiprocessing import Pool

import numpy as np
from nipype import logging
from scipy.interpolate import RegularGridInterpolator
from traits.api import HasStrictTraits, CArray, Dict, Enum, Instance, Int

from critsde.catalog import (B2_FAMILIES, FieldFunction, b2_bound, b2_values,
                             example_reversed_norm, profile_lp_norm)
from critsde.errors import DomainError, FitError, SimulationError, SpecificationError
from critsde.heat import compute_constants
from critsde.spaces import (ExponentPair, MollifierSpec, SpaceTimeField, mollify,
                            reverse_time, symmetric_time_grid, weighted_norm)
from critsde.util import SEED_MASK, derive_seed, loglog_slope

utlogger = logging.getLogger("nipype.utils")

BLOCK_SIZE = 4096
EXCLUSION_LIMIT = 0.01
MIN_STEPS = 16
B1_FAMILIES = ("zero", "log_singular", "gaussian_profile_weighted", "grid")


class DriftSpec(HasStrictTraits):
    """ b = b1 + b2 by catalog name.

    b1 acts along the first coordinate:
      log_singular                scale ((T-t)/2T)^{-1/q} |log((T-t)/2T)|^{-1} phi(x)
      gaussian_profile_weighted  scale (T-t)^{-1/q} phi(x), phi Gaussian
      grid                       b1_field, held constant between grid times
    b1_params: profile (log_singular only), params (profile parameters), scale.
    """
    b1 = Enum(*B1_FAMILIES)
    b1_params = Dict
    b1_field = Instance(SpaceTimeField)
    b2 = Enum(*B2_FAMILIES)
    b2_params = Dict
    exps = Instance(ExponentPair, ())

    def __init__(self, **traits):
        super(DriftSpec, self).__init__(**traits)
        self.check()

    def check(self):
        if self.b1 == "grid":
            if self.b1_field is None:
                raise SpecificationError("grid drift needs b1_field")
            if self.b1_field.d != self.exps.d:
                raise SpecificationError("b1_field dimension does not match the exponents")
        known = {"profile", "params", "scale"}
        extra = set(self.b1_params) - known
        if extra:
            raise SpecificationError("unknown b1 parameters: %s" % ", ".join(sorted(extra)))
        b2_bound(self.b2, self.b2_params, self.exps.d)

    @property
    def bound_b2(self):
        return b2_bound(self.b2, self.b2_params, self.exps.d)

    @property
    def b1_scale(self):
        return float(self.b1_params.get("scale", 1.0))

    @property
    def b1_function(self):
        if self.b1 == "log_singular":
            return FieldFunction(kind="log_singular",
                                 profile=self.b1_params.get("profile", "gaussian"),
                                 params=dict(self.b1_params.get("params", {})),
                                 scale=self.b1_scale, exps=self.exps, name="b1")
        if self.b1 == "gaussian_profile_weighted":
            return FieldFunction(kind="weighted_reversed", profile="gaussian",
                                 params=dict(self.b1_params.get("params", {})),
                                 scale=self.b1_scale, exps=self.exps, name="b1")
        return None

    @property
    def singular_at_T(self):
        return self.b1 in ("log_singular", "gaussian_profile_weighted") and self.b1_scale != 0

    def evaluate_b1(self, t, X):
        """ b1 at time t for states X of shape (m, d) -> (m, d) """
        X = np.asarray(X, dtype=float)
        out = np.zeros_like(X)
        if self.b1 == "zero":
            return out
        if self.b1 == "grid":
            return self._grid_values(t, X)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[:, 0] = self.b1_function.evaluate(t, X)
        return out

    def _grid_values(self, t, X):
        f = self.b1_field
        i = int(np.clip(np.searchsorted(f.times, t, side="right") - 1, 0, f.times.size - 1))
        comps = f.values[i] if f.is_vector else f.values[i][np.newaxis]
        out = np.zeros_like(X)
        for c in range(comps.shape[0]):
            if f.d == 1:
                out[:, c] = np.interp(X[:, 0], f.x, comps[c], left=0.0, right=0.0)
            else:
                interp = RegularGridInterpolator((f.x,) * f.d, comps[c],
                                                 bounds_error=False, fill_value=0.0)
                out[:, c] = interp(X)
        return out

    def evaluate_b2(self, t, X):
        return b2_values(self.b2, t, X, self.b2_params)

    def evaluate(self, t, X):
        return self.evaluate_b1(t, X) + self.evaluate_b2(t, X)

    def sample_b1(self, x, times=None):
        """ b1 on a grid; the default times are symmetric so I_T is exact """
        times = symmetric_time_grid(self.exps.T) if times is None else np.asarray(times)
        if self.b1 == "grid":
            return self.b1_field
        d = self.exps.d
        if self.b1 == "zero":
            values = np.zeros((times.size,) + (np.size(x),) * d)
            field = SpaceTimeField(times=times, x=x, values=values, d=d, T=self.exps.T)
        else:
            field = self.b1_function.sample(times, x)
        if d == 1:
            return field
        vec = np.zeros((times.size, d) + field.space_shape)
        vec[:, 0] = field.values
        return field.with_values(vec, n_components=d)

    def reversed_norm(self):
        """ sup_t t^{1/q} ||I_T b1(t)||_p """
        p, d = self.exps.p, self.exps.d
        if self.b1 == "zero":
            return 0.0
        if self.b1 == "log_singular":
            return example_reversed_norm(self.exps, self.b1_params.get("profile", "gaussian"),
                                         self.b1_params.get("params"), self.b1_scale)
        if self.b1 == "gaussian_profile_weighted":
            return abs(self.b1_scale) * profile_lp_norm("gaussian", p, d,
                                                        self.b1_params.get("params"))
        return weighted_norm(reverse_time(self.b1_field, resample=True), self.exps)

    def mollified(self, n, x, times=None, profile="bump"):
        """ the drift with b1 replaced by its mollification at scale 1/n """
        field = mollify(self.sample_b1(x, times), MollifierSpec(n=int(n), profile=profile))
        return DriftSpec(b1="grid", b1_field=field, b2=self.b2,
                         b2_params=dict(self.b2_params), exps=self.exps)

    def to_dict(self):
        out = {"b1": self.b1, "b1_params": dict(self.b1_params), "b2": self.b2,
               "b2_params": dict(self.b2_params), "bound_b2": self.bound_b2,
               "exponents": self.exps.to_dict()}
        if self.b1 != "grid":
            out["reversed_norm"] = self.reversed_norm()
        return out


class PathEnsemble(HasStrictTraits):
    times = CArray(dtype=float, shape=(None,))
    # (path, time, d)
    states = CArray(dtype=float)
    seed = Int(0)
    n_paths = Int(0)
    dt_policy = Dict
    # name -> per-path time integral (abs_drift, abs_b1, abs_b2 and integrands)
    path_integrals = Dict
    n_excluded = Int(0)
    x0 = CArray(dtype=float, shape=(None,))

    @property
    def d(self):
        return self.states.shape[-1]

    def terminal(self, component=0):
        return self.states[:, -1, component]

    def at(self, i, component=0):
        return self.states[:, i, component]

    def header(self):
        return {"seed": self.seed, "n_paths": self.n_paths, "n_excluded": self.n_excluded,
                "n_times": int(self.times.size), "d": int(self.d),
                "x0": self.x0.tolist(), "dt_policy": dict(self.dt_policy),
                "integrals": sorted(self.path_integrals)}


def build_example_drift(profile="gaussian", exps=None, params=None, scale=1.0,
                        b1_fraction=None, b2="zero", b2_params=None):
    """ the t -> T singular drift with base profile phi. b1_fraction, when
    given, sets the scale so that ||I_T b1|| = b1_fraction / (2 C0).
    """
    exps = ExponentPair(p=2.0, q=4.0, d=1, T=0.5) if exps is None else exps
    if not np.isfinite(profile_lp_norm(profile, exps.p, exps.d, params)):
        raise DomainError("base profile %r has infinite L^%g norm" % (profile, exps.p))
    if b1_fraction is not None:
        consts = compute_constants(exps)
        unit = example_reversed_norm(exps, profile, params, 1.0)
        scale = b1_fraction * 0.5 / consts.C0 / unit
    return DriftSpec(b1="log_singular",
                     b1_params={"profile": profile, "params": dict(params or {}),
                                "scale": float(scale)},
                     b2=b2, b2_params=dict(b2_params or {}), exps=exps)


def stepping_grid(t_start, t_end, n_steps, T, clamp):
    """ step times and drift evaluation times.

    Without clamping the grid is uniform. With clamping (b1 singular at T and
    t_end = T) steps become min(dt, (T - t)/2) until T - t <= eps = T/n_steps^2;
    the last step then reaches T with the drift frozen at T - eps.
    return: (times, eval_times) with len(eval_times) = len(times) - 1
    """
    if n_steps < MIN_STEPS:
        raise DomainError("need at least %d steps, got %d" % (MIN_STEPS, n_steps))
    if not t_start < t_end <= T:
        raise DomainError("need t_start < t_end <= T")
    dt = (t_end - t_start) / float(n_steps)
    lattice = t_start + dt * np.arange(n_steps + 1)
    lattice[-1] = t_end
    if not clamp or t_end < T:
        return lattice, lattice[:-1].copy()
    eps = T / float(n_steps) ** 2
    uniform = lattice[lattice <= T - 2.0 * dt + 1e-12 * T]
    t = uniform[-1]
    tail = []
    while T - t > eps:
        t = t + min(dt, (T - t) / 2.0)
        tail.append(t)
    times = np.concatenate([uniform, tail, [T]])
    return times, np.minimum(times[:-1], T - eps)


def _simulate_block(job):
    (drift, diffusion, x0, nb, seed, block, times, eval_t, rec, integrands) = job
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, block], dtype=np.uint64)))
    d = x0.size
    X = np.tile(x0, (nb, 1))
    states = np.empty((nb, rec.size, d))
    states[:, 0] = X
    names = ["abs_drift", "abs_b1", "abs_b2"] + sorted(integrands)
    acc = dict((k, np.zeros(nb)) for k in names)
    bad = np.zeros(nb, dtype=bool)
    slot = dict((int(k), j) for j, k in enumerate(rec))
    for k in range(eval_t.size):
        te = eval_t[k]
        dt = times[k + 1] - times[k]
        b1 = drift.evaluate_b1(te, X)
        b2 = drift.evaluate_b2(te, X)
        ok = np.all(np.isfinite(b1), axis=1) & np.all(np.isfinite(b2), axis=1)
        bad |= ~ok
        b1[~ok] = 0.0
        b2[~ok] = 0.0
        b = b1 + b2
        acc["abs_drift"] += np.sqrt(np.sum(b ** 2, axis=1)) * dt
        acc["abs_b1"] += np.sqrt(np.sum(b1 ** 2, axis=1)) * dt
        acc["abs_b2"] += np.sqrt(np.sum(b2 ** 2, axis=1)) * dt
        # midpoint in time keeps integrands singular at either end finite
        tm = 0.5 * (times[k] + times[k + 1])
        for name, fn in integrands.items():
            v = np.asarray(fn(tm, X), dtype=float)
            fin = np.isfinite(v)
            bad |= ~fin
            acc[name] += np.where(fin, v, 0.0) * dt
        dW = rng.standard_normal((nb, d)) * np.sqrt(dt)
        if diffusion is not None:
            dW[:, 0] *= diffusion.evaluate(X[:, 0])
        X = X + b * dt + dW
        j = slot.get(k + 1)
        if j is not None:
            states[:, j] = X
    return states, acc, bad


def euler_maruyama(drift, x0, n_paths, n_steps, seed, diffusion=None, t_start=0.0,
                   t_end=None, record_stride=1, integrands=None, workers=1, clamp=None):
    """ left-endpoint Euler-Maruyama; see stepping_grid for the step policy.

    integrands maps names to callables f(t, X) -> (m,) whose time integrals
    along each path are accumulated with X at the left endpoint and t at the
    step midpoint.
    Paths meeting a non-finite drift or integrand are excluded; more than 1%
    excluded raises SimulationError.
    """
    T = drift.exps.T
    t_end = T if t_end is None else float(t_end)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size != drift.exps.d:
        raise DomainError("x0 has %d coordinates in dimension %d" % (x0.size, drift.exps.d))
    if diffusion is not None and drift.exps.d != 1:
        raise DomainError("state-dependent diffusion is one-dimensional")
    if n_paths < 1:
        raise DomainError("need at least one path")
    seed = int(seed) & SEED_MASK
    clamp = drift.singular_at_T if clamp is None else bool(clamp)
    times, eval_t = stepping_grid(float(t_start), t_end, int(n_steps), T, clamp)
    n_intervals = eval_t.size
    rec = np.unique(np.concatenate([np.arange(0, n_intervals + 1, max(1, int(record_stride))),
                                    [n_intervals]]))
    integrands = dict(integrands or {})
    jobs = []
    for block, lo in enumerate(range(0, n_paths, BLOCK_SIZE)):
        nb = min(BLOCK_SIZE, n_paths - lo)
        jobs.append((drift, diffusion, x0, nb, seed, block, times, eval_t, rec, integrands))
    if workers > 1 and len(jobs) > 1:
        pool = Pool(min(int(workers), len(jobs)))
        try:
            results = pool.map(_simulate_block, jobs)
        finally:
            pool.close()
            pool.join()
    else:
        results = [_simulate_block(job) for job in jobs]

    states = np.concatenate([r[0] for r in results])
    bad = np.concatenate([r[2] for r in results])
    integrals = dict((k, np.concatenate([r[1][k] for r in results])) for k in results[0][1])
    n_bad = int(bad.sum())
    if n_bad > EXCLUSION_LIMIT * n_paths:
        raise SimulationError("%d of %d paths met a non-finite drift or integrand"
                              % (n_bad, n_paths), n_excluded=n_bad, n_paths=n_paths)
    if n_bad:
        utlogger.warning("excluding %d of %d paths with non-finite drift or integrand",
                         n_bad, n_paths)
        keep = ~bad
        states = states[keep]
        integrals = dict((k, v[keep]) for k, v in integrals.items())
    policy = {"base_step": (t_end - float(t_start)) / n_steps, "n_steps": int(n_steps),
              "clamp": clamp, "freeze_eps": T / float(n_steps) ** 2 if clamp else 0.0,
              "n_intervals": int(n_intervals), "record_stride": int(record_stride),
              "t_start": float(t_start), "t_end": t_end, "block_size": BLOCK_SIZE}
    return PathEnsemble(times=times[rec], states=states, seed=seed,
                        n_paths=int(states.shape[0]), dt_policy=policy,
                        path_integrals=integrals, n_excluded=n_bad, x0=x0)


""" checks on ensembles """

def field_reversed_norm(ff, x=None):
    """ sup_t t^{1/q} ||I_T f(t)||_p for a catalog FieldFunction """
    exps = ff.exps
    phi = profile_lp_norm(ff.profile, exps.p, exps.d, ff.params)
    if ff.kind == "zero" or ff.scale == 0:
        return 0.0
    if ff.kind == "stationary":
        return exps.T ** (1.0 / exps.q) * abs(ff.scale) * phi
    if ff.kind == "weighted_reversed":
        return abs(ff.scale) * phi
    if ff.kind == "log_singular":
        return example_reversed_norm(exps, ff.profile, ff.params, ff.scale)
    if ff.kind in ("weighted", "log_singular_reversed"):
        # reversal moves the t = 0 blow-up to t = T, where t^{1/q} no longer damps it
        return np.inf
    if x is None:
        raise DomainError("a spatial grid is needed to measure a %r field" % ff.kind)
    field = ff.sample(symmetric_time_grid(exps.T), x)
    return weighted_norm(reverse_time(field), exps)


def krylov_check(f, drift, ensemble, constants, n_se=2.0, x=None):
    """ E int_0^T f(t, X_t) dt against C0 (1 + E int |b(t, X_t)| dt) ||I_T f||.

    f is a nonnegative FieldFunction whose path integral was accumulated
    under the name f.name.
    """
    if not f.nonnegative:
        raise DomainError("Krylov check needs f >= 0; split f into its positive and negative parts")
    if f.name not in ensemble.path_integrals:
        raise SpecificationError("ensemble carries no path integral named %r" % f.name)
    vals = ensemble.path_integrals[f.name]
    n = vals.size
    lhs = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    xi = float(np.mean(ensemble.path_integrals["abs_drift"]))
    f_norm = field_reversed_norm(f, x)
    C0 = constants.C0
    rhs = C0 * (1.0 + xi) * f_norm
    report = {"lhs_mc": lhs, "se": se, "xi_integral": xi, "f_norm": f_norm,
              "C0": C0, "rhs": rhs, "pass": bool(lhs <= rhs + n_se * se)}
    b1_norm = drift.reversed_norm()
    if C0 * b1_norm < 0.5:
        bound = 0.0
        if b1_norm > 0:
            bound = 2.0 * (1.0 + drift.exps.T * drift.bound_b2) * C0 * b1_norm
        b1_int = ensemble.path_integrals["abs_b1"]
        b1_mean = float(np.mean(b1_int))
        b1_se = float(np.std(b1_int, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        report["drift_bound"] = {"lhs_mc": b1_mean, "se": b1_se, "rhs": bound,
                                 "pass": bool(b1_mean <= bound + n_se * b1_se)}
    return report


def _uniform_record_indices(ensemble):
    policy = ensemble.dt_policy
    step = policy["base_step"] * policy["record_stride"]
    rel = (ensemble.times - policy["t_start"]) / step
    return np.flatnonzero(np.isclose(rel, np.round(rel), rtol=0, atol=1e-9)), step


def increment_modulus(ensemble, gaps=None, component=0, theta=0.3, margin=0.1,
                      min_paths=10000, max_level=7):
    """ fits log max_t E|X_{t+D} - X_t| against log D over dyadic D """
    if ensemble.n_paths < min_paths:
        raise DomainError("increment modulus needs at least %d paths" % min_paths)
    idx, step = _uniform_record_indices(ensemble)
    levels = gaps if gaps is not None else [2 ** k for k in range(max_level + 1)]
    xs, ys = [], []
    for k in levels:
        k = int(k)
        if k >= idx.size:
            continue
        a, b = idx[:-k], idx[k:]
        inc = np.abs(ensemble.states[:, b, component] - ensemble.states[:, a, component])
        xs.append(k * step)
        ys.append(float(np.max(np.mean(inc, axis=0))))
    if len(xs) < 3:
        raise FitError("increment modulus needs at least 3 gap scales, got %d" % len(xs))
    slope, _ = loglog_slope(xs, ys)
    return {"gaps": xs, "moduli": ys, "slope": slope, "theta": theta,
            "threshold": theta / 2.0 - margin, "pass": bool(slope >= theta / 2.0 - margin)}


def integrability_proxy(ensemble, level=0.99):
    """ share of simulated paths with a finite int_0^T |b(t, X_t)| dt """
    vals = ensemble.path_integrals["abs_drift"]
    total = ensemble.n_paths + ensemble.n_excluded
    frac = float(np.sum(np.isfinite(vals))) / total if total else 0.0
    return {"fraction": frac, "level": level, "n_excluded": ensemble.n_excluded,
            "pass": bool(frac >= level)}


def lag_autocorrelation(ensemble, component=0):
    """ lag-1 autocorrelation of step-normalized increments, pooled over paths """
    idx, step = _uniform_record_indices(ensemble)
    x = ensemble.states[:, idx, component]
    inc = np.diff(x, axis=1) / np.sqrt(step)
    inc = inc - inc.mean()
    num = np.sum(inc[:, 1:] * inc[:, :-1])
    den = np.sqrt(np.sum(inc[:, 1:] ** 2) * np.sum(inc[:, :-1] ** 2))
    rho = float(num / den) if den > 0 else 0.0
    thresh = 3.0 / np.sqrt(inc.size)
    return {"lag1": rho, "threshold": thresh, "pass": bool(abs(rho) <= thresh)}


def mollified_drift_convergence(drift, n_list, seed, x, x0=0.0, n_paths=20000,
                                n_steps=256, times=None, noise=0.1, workers=1):
    """ weighted drift errors ||I_T(b1^n - b1)|| and terminal KS distances of
    X^n against X, with shared Brownian increments across n.

    The noise floor is the KS distance between X and an independent copy.
    """
    from critsde.stats import ks_distance
    times = symmetric_time_grid(drift.exps.T) if times is None else times
    base_field = drift.sample_b1(x, times)
    ref = euler_maruyama(drift, x0, n_paths, n_steps, seed, clamp=True, workers=workers)
    twin = euler_maruyama(drift, x0, n_paths, n_steps, derive_seed(seed, 1), clamp=True,
                          workers=workers)
    floor = ks_distance(ref.terminal(), twin.terminal())
    rows = []
    for n in n_list:
        moll = drift.mollified(n, x, times)
        err = weighted_norm(reverse_time(moll.b1_field - base_field), drift.exps)
        ens = euler_maruyama(moll, x0, n_paths, n_steps, seed, clamp=True, workers=workers)
        rows.append({"n": int(n), "drift_error": err,
                     "ks": ks_distance(ens.terminal(), ref.terminal())})
    errs = np.array([r["drift_error"] for r in rows])
    ks = np.array([r["ks"] for r in rows])
    return {"rows": rows, "noise_floor": floor,
            "drift_error_nonincreasing": bool(np.all(errs[1:] <= errs[:-1] * (1 + noise))),
            "drift_error_decreasing": bool(np.all(errs[1:] < errs[:-1])),
            "ks_nonincreasing": bool(np.all(ks[1:] <= ks[:-1] * (1 + noise) + floor)),
            "ks_at_floor": bool(ks[-1] <= 2.0 * floor) if ks.size else True}
