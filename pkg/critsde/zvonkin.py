""" One-dimensional Zvonkin transform for dX = b(t, X) dt + sigma(X) dW.

Phi(x) = int_0^x 1/sigma takes X to Y = Phi(X) with unit noise and drift
b(t, Psi(Y))/sigma(Psi(Y)) - sigma'(Psi(Y))/2, Psi = Phi^{-1}. Both tables
are cubic Hermite splines built from exact derivative data (Phi' = 1/sigma,
Psi' = sigma o Psi).
"""
import numpy as np
from nipype import logging
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator
from traits.api import (HasStrictTraits, Any, Bool, CArray, Dict, Enum, Float,
                        Instance)

from critsde.errors import EllipticityError, SpecificationError, DomainError
from critsde.sde import DriftSpec, PathEnsemble, euler_maruyama
from critsde.stats import ks_distance
from critsde.util import derive_seed

utlogger = logging.getLogger("nipype.utils")

SIGMA_FAMILIES = ("constant", "affine_bounded", "tanh", "grid", "step")
_SIGMA_DEFAULTS = {
    "constant": {"c": 1.0},
    "affine_bounded": {"a": 2.0, "b": 1.0},
    "tanh": {"a": 2.0, "width": 1.0},
    "grid": {},
    "step": {"left": 1.0, "right": 2.0, "at": 0.0},
}
# Fritsch-Carlson monotonicity region for Hermite cubics
MONOTONE_RADIUS2 = 9.0


class SigmaSpec(HasStrictTraits):
    """ diffusion coefficient sigma(x) by family.

      constant        c
      affine_bounded  a + b x / (1 + |x|)
      tanh            a + tanh(x / width)
      grid            linear interpolation of params x, values
      step            left for x < at, right otherwise (no derivative)

    split says which part of sigma' the transformed drift files as its
    singular L^p part ("lp") or its bounded part ("bounded").
    """
    family = Enum(*SIGMA_FAMILIES)
    params = Dict
    split = Enum("bounded", "lp")

    def __init__(self, **traits):
        super(SigmaSpec, self).__init__(**traits)
        merged = dict(_SIGMA_DEFAULTS[self.family])
        for key, val in self.params.items():
            if key not in merged and not (self.family == "grid" and key in ("x", "values")):
                raise SpecificationError("sigma family %r has no parameter %r"
                                         % (self.family, key))
            merged[key] = val
        if self.family == "grid":
            if "x" not in merged or "values" not in merged:
                raise SpecificationError("grid sigma needs x and values")
            merged["x"] = np.asarray(merged["x"], dtype=float)
            merged["values"] = np.asarray(merged["values"], dtype=float)
        self.params = merged

    def _p(self, key):
        return float(self.params[key])

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "constant":
            return np.full_like(x, self._p("c"))
        if self.family == "affine_bounded":
            return self._p("a") + self._p("b") * x / (1.0 + np.abs(x))
        if self.family == "tanh":
            return self._p("a") + np.tanh(x / self._p("width"))
        if self.family == "grid":
            xs, vals = self.params["x"], self.params["values"]
            return np.interp(x, xs, vals)
        return np.where(x < self._p("at"), self._p("left"), self._p("right"))

    __call__ = evaluate

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "constant":
            return np.zeros_like(x)
        if self.family == "affine_bounded":
            return self._p("b") / (1.0 + np.abs(x)) ** 2
        if self.family == "tanh":
            w = self._p("width")
            return 1.0 / (w * np.cosh(x / w) ** 2)
        if self.family == "grid":
            xs, vals = self.params["x"], self.params["values"]
            return np.interp(x, xs, np.gradient(vals, xs, edge_order=1))
        raise SpecificationError("sigma family %r has no derivative" % self.family)

    @property
    def has_derivative(self):
        return self.family != "step"

    @property
    def delta1(self):
        return self.bounds()[0]

    @property
    def delta2(self):
        return self.bounds()[1]

    def bounds(self):
        """ (inf sigma, sup sigma) over R """
        if self.family == "constant":
            c = self._p("c")
            return c, c
        if self.family == "affine_bounded":
            a, b = self._p("a"), abs(self._p("b"))
            return a - b, a + b
        if self.family == "tanh":
            a = self._p("a")
            return a - 1.0, a + 1.0
        if self.family == "grid":
            v = self.params["values"]
            return float(v.min()), float(v.max())
        lo, hi = sorted((self._p("left"), self._p("right")))
        return lo, hi

    def derivative_bound(self):
        """ sup |sigma'| """
        if self.family == "constant":
            return 0.0
        if self.family == "affine_bounded":
            return abs(self._p("b"))
        if self.family == "tanh":
            return 1.0 / self._p("width")
        if self.family == "grid":
            xs, vals = self.params["x"], self.params["values"]
            return float(np.max(np.abs(np.gradient(vals, xs, edge_order=1))))
        raise SpecificationError("sigma family %r has no derivative" % self.family)

    def derivative_lp_norm(self, p):
        """ ||sigma'||_{L^p(R)} """
        if self.family == "constant":
            return 0.0
        if self.family == "grid":
            xs, vals = self.params["x"], self.params["values"]
            g = np.abs(np.gradient(vals, xs, edge_order=1)) ** p
            return float(integrate.trapezoid(g, xs) ** (1.0 / p))
        val, _ = integrate.quad(lambda x: abs(float(self.derivative(x))) ** p,
                                -np.inf, np.inf, limit=200)
        return val ** (1.0 / p)

    def to_dict(self):
        params = dict((k, v.tolist() if isinstance(v, np.ndarray) else v)
                      for k, v in self.params.items())
        return {"family": self.family, "params": params, "split": self.split}


class ZvonkinMap(HasStrictTraits):
    x = CArray(dtype=float, shape=(None,))
    phi = CArray(dtype=float, shape=(None,))
    phi_prime = CArray(dtype=float, shape=(None,))
    psi_prime = CArray(dtype=float, shape=(None,))
    delta1 = Float
    delta2 = Float
    monotone_fallback = Bool(False)
    sigma = Instance(SigmaSpec)
    _phi_spline = Any
    _psi_spline = Any

    @property
    def y(self):
        """ nodes of the inverse table (= Phi at the x nodes) """
        return self.phi

    def phi_at(self, x):
        return self._phi_spline(np.asarray(x, dtype=float))

    def psi_at(self, y):
        """ Psi(y); nan outside the tabulated range """
        return self._psi_spline(np.asarray(y, dtype=float))

    @property
    def y_range(self):
        return float(self.phi[0]), float(self.phi[-1])


def _phi_nodes(sigma, x):
    """ cumulative trapezoid of 1/sigma with the endpoint-derivative correction
    when sigma' exists
    """
    f = 1.0 / sigma.evaluate(x)
    h = np.diff(x)
    cells = 0.5 * h * (f[1:] + f[:-1])
    if sigma.has_derivative:
        fp = -sigma.derivative(x) * f ** 2
        cells += h ** 2 / 12.0 * (fp[:-1] - fp[1:])
    return np.concatenate([[0.0], np.cumsum(cells)])


def build_phi(sigma, interval=None, resolution=4001, x0=0.0, T=1.0):
    """ tabulates Phi and Psi on interval (default x0 +- 8 sqrt(T) delta2,
    always containing 0)
    """
    d1, d2 = sigma.bounds()
    if interval is None:
        half = 8.0 * np.sqrt(T) * d2
        interval = (x0 - half, x0 + half)
    lo, hi = float(interval[0]), float(interval[1])
    if not lo < hi:
        raise DomainError("empty interval for the Phi table")
    step = (hi - lo) / (resolution - 1)
    lo, hi = min(lo, -step), max(hi, step)
    x = np.linspace(lo, hi, resolution)
    s = sigma.evaluate(x)
    if np.any(s <= 0) or d1 <= 0:
        raise EllipticityError("sigma must be positive (min %g on the table)" % s.min())
    if np.any(s < d1 - 1e-12) or np.any(s > d2 + 1e-12):
        raise EllipticityError("sigma leaves its declared bounds [%g, %g]" % (d1, d2))
    raw = _phi_nodes(sigma, x)
    phi_spline = CubicHermiteSpline(x, raw, 1.0 / s, extrapolate=True)
    phi = raw - phi_spline(0.0)
    phi_spline = CubicHermiteSpline(x, phi, 1.0 / s, extrapolate=True)
    psi_spline = CubicHermiteSpline(phi, x, s, extrapolate=False)
    dy = np.diff(phi)
    alpha = s[:-1] / (np.diff(x) / dy)
    beta = s[1:] / (np.diff(x) / dy)
    fallback = bool(np.any(alpha ** 2 + beta ** 2 > MONOTONE_RADIUS2))
    if fallback:
        utlogger.warning("Hermite inverse table is not monotone; using PCHIP")
        psi_spline = PchipInterpolator(phi, x, extrapolate=False)
    zmap = ZvonkinMap(x=x, phi=phi, phi_prime=1.0 / s, psi_prime=s, delta1=d1,
                      delta2=d2, monotone_fallback=fallback, sigma=sigma)
    zmap._phi_spline = phi_spline
    zmap._psi_spline = psi_spline
    return zmap


def bilipschitz_check(zmap, tol=1e-9):
    """ delta2^-1 <= dPhi/dx <= delta1^-1 on every grid cell (enough because Phi
    is monotone), the same for Psi with the reciprocal bounds, and the
    Psi(Phi(x)) round trip at cell midpoints
    """
    slopes = np.diff(zmap.phi) / np.diff(zmap.x)
    lo, hi = 1.0 / zmap.delta2, 1.0 / zmap.delta1
    mid = 0.5 * (zmap.x[1:] + zmap.x[:-1])
    round_trip = float(np.max(np.abs(zmap.psi_at(zmap.phi_at(mid)) - mid)))
    phi_ok = bool(np.all(slopes >= lo * (1 - tol)) and np.all(slopes <= hi * (1 + tol)))
    inv = 1.0 / slopes
    psi_ok = bool(np.all(inv >= zmap.delta1 * (1 - tol)) and np.all(inv <= zmap.delta2 * (1 + tol)))
    return {"phi_slope_min": float(slopes.min()), "phi_slope_max": float(slopes.max()),
            "lower": lo, "upper": hi, "round_trip": round_trip,
            "monotone": bool(np.all(slopes > 0)),
            "pass": bool(phi_ok and psi_ok and round_trip <= 1e-6)}


class TransformedDrift(HasStrictTraits):
    """ drift of Y = Phi(X): b(t, Psi)/sigma(Psi) - sigma'(Psi)/2.

    The b1 part carries b1/sigma and, for split="lp", the -sigma'/2 term;
    otherwise -sigma'/2 joins the bounded b2 part. States outside the
    tabulated range evaluate to nan so the simulator excludes the path.
    """
    base = Instance(DriftSpec)
    sigma = Instance(SigmaSpec)
    zmap = Instance(ZvonkinMap)

    @property
    def exps(self):
        return self.base.exps

    @property
    def singular_at_T(self):
        return self.base.singular_at_T

    def _x(self, Y):
        return self.zmap.psi_at(np.asarray(Y, dtype=float)[:, 0])[:, np.newaxis]

    def evaluate_b1(self, t, Y):
        X = self._x(Y)
        out = self.base.evaluate_b1(t, X) / self.sigma.evaluate(X)
        if self.sigma.split == "lp":
            out = out - 0.5 * self.sigma.derivative(X)
        return out

    def evaluate_b2(self, t, Y):
        X = self._x(Y)
        out = self.base.evaluate_b2(t, X) / self.sigma.evaluate(X)
        if self.sigma.split == "bounded":
            out = out - 0.5 * self.sigma.derivative(X)
        return out

    def evaluate(self, t, Y):
        return self.evaluate_b1(t, Y) + self.evaluate_b2(t, Y)

    @property
    def bound_b2(self):
        extra = 0.5 * self.sigma.derivative_bound() if self.sigma.split == "bounded" else 0.0
        return self.base.bound_b2 / self.sigma.delta1 + extra

    def reversed_norm(self):
        """ upper bound on sup_t t^{1/q} ||I_T (singular part)(t)||_p in y.

        ||h o Psi||_p <= delta1^{-1/p} ||h||_p from the change of variables,
        and the sigma' part is time independent.
        """
        p, q, T = self.exps.p, self.exps.q, self.exps.T
        d1 = self.sigma.delta1
        out = d1 ** (-1.0 - 1.0 / p) * self.base.reversed_norm()
        if self.sigma.split == "lp":
            out += 0.5 * T ** (1.0 / q) * d1 ** (-1.0 / p) * self.sigma.derivative_lp_norm(p)
        return out

    def to_dict(self):
        return {"base": self.base.to_dict(), "sigma": self.sigma.to_dict(),
                "bound_b2": self.bound_b2, "reversed_norm": self.reversed_norm()}


def transformed_drift(b, sigma, zmap):
    if not sigma.has_derivative:
        raise SpecificationError("the transformed drift needs sigma'; family %r has none"
                                 % sigma.family)
    if b.exps.d != 1:
        raise DomainError("the Zvonkin transform is one-dimensional")
    return TransformedDrift(base=b, sigma=sigma, zmap=zmap)


def simulate_both_routes(b, sigma, x0, n_paths, n_steps, seed, zmap=None, workers=1):
    """ route A: X directly with noise sigma(X) dW; route B: Y = Phi(X) with
    unit noise, mapped back through Psi. The routes use independent seeds.
    """
    T = b.exps.T
    zmap = build_phi(sigma, x0=x0, T=T) if zmap is None else zmap
    drift_y = transformed_drift(b, sigma, zmap)
    route_a = euler_maruyama(b, [x0], n_paths, n_steps, derive_seed(seed, 0xA),
                             diffusion=sigma, workers=workers)
    y0 = float(zmap.phi_at(x0))
    ens_y = euler_maruyama(drift_y, [y0], n_paths, n_steps, derive_seed(seed, 0xB),
                           workers=workers, clamp=b.singular_at_T)
    back = zmap.psi_at(ens_y.states[..., 0])[..., np.newaxis]
    inside = np.all(np.isfinite(back), axis=(1, 2))
    exits = int((~inside).sum())
    if exits:
        utlogger.warning("route B: %d paths left the Phi table", exits)
    ints = dict((k, v[inside]) for k, v in ens_y.path_integrals.items())
    route_b = PathEnsemble(times=ens_y.times, states=back[inside], seed=ens_y.seed,
                           n_paths=int(inside.sum()), dt_policy=dict(ens_y.dt_policy),
                           path_integrals=ints, n_excluded=ens_y.n_excluded + exits,
                           x0=np.array([x0]))
    return route_a, route_b


def noise_floor(self_distances):
    """ same-law KS level: the mean KS distance between independent route-A
    replicates
    """
    selfs = np.asarray(self_distances, dtype=float)
    if selfs.size == 0 or not np.all(np.isfinite(selfs)):
        raise DomainError("the noise floor needs finite self-distances")
    return float(np.mean(selfs))


def route_equivalence(b, sigma, x0, n_paths, n_steps_list=(256, 1024), seed=0,
                      factor=1.5, replicates=4, workers=1):
    """ KS(route A, route B) at each step count against the noise floor of
    independent route-A replicates
    """
    zmap = build_phi(sigma, x0=x0, T=b.exps.T)
    rows = []
    for n_steps in n_steps_list:
        s = derive_seed(seed, n_steps)
        route_a, route_b = simulate_both_routes(b, sigma, x0, n_paths, n_steps, s,
                                                zmap=zmap, workers=workers)
        selfs = []
        for r in range(replicates):
            twin = euler_maruyama(b, [x0], n_paths, n_steps, derive_seed(s, 0xC, r),
                                  diffusion=sigma, workers=workers)
            selfs.append(ks_distance(route_a.terminal(), twin.terminal()))
        floor = noise_floor(selfs)
        ks = ks_distance(route_a.terminal(), route_b.terminal())
        rows.append({"n_steps": int(n_steps), "ks": ks, "self_distances": selfs,
                     "noise_floor": floor, "exits": route_b.n_excluded,
                     "pass": bool(ks <= factor * floor)})
    refine_ok = all(r2["ks"] <= r1["ks"] + r1["noise_floor"] for r1, r2 in zip(rows, rows[1:]))
    return {"rows": rows, "factor": factor, "refinement_ok": bool(refine_ok),
            "bilipschitz": bilipschitz_check(zmap),
            "pass": bool(all(r["pass"] for r in rows) and refine_ok)}
