""" Named families used by experiments and configs: spatial profiles,
time factors, space-time test fields and bounded probe functions.

Profiles are evaluated on point arrays of shape (..., d) and return shape
(...). The weak point of any profile catalog is the p-norm; every entry here
knows its own (closed form where one exists, quadrature otherwise).
"""
import numpy as np
from scipy import integrate, special
from traits.api import (HasStrictTraits, Enum, Str, Dict, Float, Bool,
                        Instance)

from critsde.errors import DomainError, SpecificationError
from critsde.spaces import ExponentPair, SpaceTimeField, indicator_cells

PROFILES = ("gaussian", "bump", "indicator", "tent", "constant")
TIME_FACTORS = ("zero", "stationary", "weighted", "log_damped",
                "log_singular", "log_singular_reversed", "weighted_reversed")

_PROFILE_DEFAULTS = {
    "gaussian": {"scale": 1.0, "width": 1.0, "center": 0.0},
    "bump": {"scale": 1.0, "radius": 1.0, "center": 0.0},
    "indicator": {"scale": 1.0, "a": -1.0, "b": 1.0},
    "tent": {"scale": 1.0, "width": 1.0, "center": 0.0},
    "constant": {"value": 1.0},
}


def profile_params(name, params=None):
    if name not in _PROFILE_DEFAULTS:
        raise SpecificationError("unknown profile %r (choose from %s)"
                                 % (name, ", ".join(PROFILES)))
    merged = dict(_PROFILE_DEFAULTS[name])
    for key, val in (params or {}).items():
        if key not in merged:
            raise SpecificationError("profile %r has no parameter %r" % (name, key))
        merged[key] = float(val)
    return merged


def _radius(pts, center):
    pts = np.asarray(pts, dtype=float)
    return np.sqrt(np.sum((pts - center) ** 2, axis=-1))


def profile_values(name, pts, params=None):
    """ the profile at points pts (shape (..., d)) """
    pr = profile_params(name, params)
    pts = np.asarray(pts, dtype=float)
    if name == "gaussian":
        d = pts.shape[-1]
        w2 = pr["width"] ** 2
        r2 = _radius(pts, pr["center"]) ** 2
        return pr["scale"] * (2 * np.pi * w2) ** (-d / 2.0) * np.exp(-r2 / (2 * w2))
    if name == "bump":
        r = _radius(pts, pr["center"]) / pr["radius"]
        out = np.zeros_like(r)
        inside = r < 1
        out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
        return pr["scale"] * out
    if name == "indicator":
        inside = np.all((pts >= pr["a"]) & (pts < pr["b"]), axis=-1)
        return pr["scale"] * inside.astype(float)
    if name == "tent":
        r = _radius(pts, pr["center"]) / pr["width"]
        return pr["scale"] * np.maximum(0.0, 1.0 - r)
    return np.full(pts.shape[:-1], pr["value"])


def _radial_norm(fn, p, d, rmax):
    sphere = 2.0 * np.pi ** (d / 2.0) / special.gamma(d / 2.0)
    val, _ = integrate.quad(lambda r: sphere * r ** (d - 1) * abs(fn(r)) ** p,
                            0.0, rmax, epsabs=1e-14, epsrel=1e-12, limit=200)
    return val ** (1.0 / p)


def profile_lp_norm(name, p, d=1, params=None):
    """ ||profile||_{L^p(R^d)}; inf for non-integrable profiles """
    pr = profile_params(name, params)
    if name == "gaussian":
        w2 = pr["width"] ** 2
        return abs(pr["scale"]) * (2 * np.pi * w2) ** (-d * (p - 1) / (2.0 * p)) \
            * p ** (-d / (2.0 * p))
    if name == "bump":
        rr = pr["radius"]
        unit = _radial_norm(lambda r: np.exp(-1.0 / (1.0 - r ** 2)) if r < 1 else 0.0,
                            p, d, 1.0)
        return abs(pr["scale"]) * unit * rr ** (d / float(p))
    if name == "indicator":
        return abs(pr["scale"]) * max(pr["b"] - pr["a"], 0.0) ** (d / float(p))
    if name == "tent":
        unit = _radial_norm(lambda r: max(0.0, 1.0 - r), p, d, 1.0)
        return abs(pr["scale"]) * unit * pr["width"] ** (d / float(p))
    return np.inf if pr["value"] != 0 else 0.0


def profile_sup(name, params=None):
    pr = profile_params(name, params)
    if name == "gaussian":
        # d-dependent peak; callers only use this in d = 1
        return abs(pr["scale"]) / np.sqrt(2 * np.pi * pr["width"] ** 2)
    if name == "bump":
        return abs(pr["scale"]) * np.exp(-1.0)
    if name in ("indicator", "tent"):
        return abs(pr["scale"])
    return abs(pr["value"])


def mesh_points(x, d):
    """ (n, ..., n, d) array of grid points """
    grids = np.meshgrid(*([np.asarray(x, dtype=float)] * d), indexing="ij")
    return np.stack(grids, axis=-1)


def sample_profile(name, x, d=1, params=None, p=1.0):
    """ profile on the grid; indicators use cell fractions so their sampled
    p-th power integral is exact
    """
    if name == "indicator":
        pr = profile_params(name, params)
        axis = indicator_cells(x, pr["a"], pr["b"], height=1.0, p=p)
        out = axis
        for _ in range(d - 1):
            out = np.multiply.outer(out, axis)
        return pr["scale"] * out
    return profile_values(name, mesh_points(x, d), params)


def time_factor(kind, t, exps, beta=1.0):
    """ scalar time modulation of a separable field f(t,x) = tau(t) phi(x).

    log_singular is the forward drift factor, singular at t = T:
    s^{-1/q} |log s|^{-1} with s = (T - t)/(2T) (exactly the T = 1/2 drift
    when T = 1/2). The *_reversed kinds are the same factors under t -> T - t.
    """
    t = np.asarray(t, dtype=float)
    q, T = exps.q, exps.T
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == "zero":
            return np.zeros_like(t)
        if kind == "stationary":
            return np.ones_like(t)
        if kind == "weighted":
            return t ** (-1.0 / q)
        if kind == "weighted_reversed":
            return (T - t) ** (-1.0 / q)
        if kind == "log_damped":
            return t ** (-1.0 / q) * np.abs(np.log(t / (2.0 * T))) ** (-beta)
        if kind in ("log_singular", "log_singular_reversed"):
            s = (T - t if kind == "log_singular" else t) / (2.0 * T)
            return s ** (-1.0 / q) / np.abs(np.log(s))
    raise SpecificationError("unknown time factor %r" % kind)


def example_reversed_norm(exps, profile="gaussian", params=None, scale=1.0):
    """ sup_t t^{1/q} ||I_T b(t)||_p for the example drift; the sup sits at t = T
    and equals (2T)^{1/q} scale ||phi||_p / log 2
    """
    phi = profile_lp_norm(profile, exps.p, exps.d, params)
    return (2.0 * exps.T) ** (1.0 / exps.q) * abs(scale) * phi / np.log(2.0)


class FieldFunction(HasStrictTraits):
    """ separable space-time field f(t,x) = scale tau(t) phi(x) """
    kind = Enum(*TIME_FACTORS)
    profile = Enum(*PROFILES)
    params = Dict
    scale = Float(1.0)
    beta = Float(1.0)
    exps = Instance(ExponentPair, ())
    name = Str("f")

    def evaluate(self, t, pts):
        """ f at time(s) t and points pts (..., d); t broadcasts against pts[..., 0] """
        phi = profile_values(self.profile, pts, self.params)
        return self.scale * time_factor(self.kind, t, self.exps, self.beta) * phi

    __call__ = evaluate

    @property
    def nonnegative(self):
        if self.kind == "zero":
            return True
        sign = 1.0
        if self.profile == "constant":
            sign = profile_params("constant", self.params)["value"]
        return self.scale * sign >= 0

    def sample(self, times, x, p=None):
        times = np.asarray(times, dtype=float)
        p = self.exps.p if p is None else p
        phi = sample_profile(self.profile, x, self.exps.d, self.params, p=p)
        tau = time_factor(self.kind, times, self.exps, self.beta)
        if not np.all(np.isfinite(tau)):
            raise DomainError("field %r is singular on the requested time grid" % self.name)
        values = self.scale * np.multiply.outer(tau, phi)
        return SpaceTimeField(times=times, x=x, values=values, d=self.exps.d, T=self.exps.T)

    def to_dict(self):
        return {"kind": self.kind, "profile": self.profile, "params": dict(self.params),
                "scale": self.scale, "beta": self.beta, "name": self.name}


PROBE_FUNCTIONS = ("indicator_halfline", "indicator_interval", "tanh", "identity")


class ProbeFunction(HasStrictTraits):
    """ test function f(x) of the first coordinate for semigroup probes """
    family = Enum(*PROBE_FUNCTIONS)
    params = Dict

    @property
    def bounded(self):
        return self.family != "identity"

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        x1 = pts[..., 0]
        if self.family == "indicator_halfline":
            return (x1 <= float(self.params.get("c", 0.0))).astype(float)
        if self.family == "indicator_interval":
            a = float(self.params.get("a", -1.0))
            b = float(self.params.get("b", 1.0))
            return ((x1 >= a) & (x1 <= b)).astype(float)
        if self.family == "tanh":
            return np.tanh(x1 / float(self.params.get("width", 1.0)))
        return x1

    def to_dict(self):
        return {"family": self.family, "params": dict(self.params)}


B2_FAMILIES = ("zero", "constant", "linear", "indicator_bump", "bump", "grid")


def b2_values(family, t, pts, params):
    """ bounded drift part at points pts (m, d) -> (m, d) """
    pts = np.asarray(pts, dtype=float)
    m, d = pts.shape
    if family == "zero":
        return np.zeros((m, d))
    if family == "constant":
        c = np.broadcast_to(np.asarray(params.get("c", 0.0), dtype=float), (d,))
        return np.tile(c, (m, 1))
    if family == "linear":
        return -float(params.get("k", 1.0)) * pts
    if family in ("indicator_bump", "bump"):
        out = np.zeros((m, d))
        height = float(params.get("height", 1.0))
        if family == "indicator_bump":
            a, b = float(params.get("a", -0.5)), float(params.get("b", 0.5))
            out[:, 0] = height * ((pts[:, 0] >= a) & (pts[:, 0] <= b))
        else:
            pr = {"scale": height, "radius": float(params.get("radius", 1.0)),
                  "center": float(params.get("center", 0.0))}
            out[:, 0] = profile_values("bump", pts, pr)
        return out
    if family == "grid":
        xs = np.asarray(params["x"], dtype=float)
        vals = np.asarray(params["values"], dtype=float)
        out = np.zeros((m, d))
        out[:, 0] = np.interp(pts[:, 0], xs, vals, left=vals[0], right=vals[-1])
        return out
    raise SpecificationError("unknown b2 family %r" % family)


def b2_bound(family, params, d=1):
    """ sup |b2|; inf for the unbounded linear family """
    if family == "zero":
        return 0.0
    if family == "constant":
        c = np.broadcast_to(np.asarray(params.get("c", 0.0), dtype=float), (d,))
        return float(np.sqrt(np.sum(c ** 2)))
    if family == "linear":
        return 0.0 if float(params.get("k", 1.0)) == 0 else np.inf
    if family == "indicator_bump":
        return abs(float(params.get("height", 1.0)))
    if family == "bump":
        return abs(float(params.get("height", 1.0))) * np.exp(-1.0)
    if family == "grid":
        return float(np.max(np.abs(params["values"])))
    raise SpecificationError("unknown b2 family %r" % family)
