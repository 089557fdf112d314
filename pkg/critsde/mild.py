""" Picard solver for the mild (Duhamel) form of

    du/dt = 1/2 Lap u + g . grad u + f,   u(0, .) = 0,

i.e. u(t) = int_0^t K(t - s) * (g . grad u + f)(s) ds, together with the
vector-valued transform problem (g = f = time-reversed b1) and the checks of
the explicit W^{1,inf} bounds.

Sources are singular like s^{-1/q} at s = 0 and the gradient kernel like
(t - s)^{-1/2} at s = t; the time integral therefore runs on a two-panel
Gauss-Legendre rule with power substitutions at both ends, and the sources
are interpolated through their weighted (bounded) profiles s^{1/q} F(s).
"""
import numpy as np
from nipype import logging
from scipy import interpolate, special
from traits.api import (HasStrictTraits, Instance, Int, Float, Bool, List)

from critsde.errors import ConvergenceError, DataError, DomainError, SmallnessError
from critsde.heat import (KernelConstants, compute_constants, heat_convolve_many,
                          truncation_check)
from critsde.spaces import (SpaceTimeField, lp_norm, reverse_time,
                            solver_time_grid, weighted_norm)
from critsde.util import loglog_slope

utlogger = logging.getLogger("nipype.utils")

GRADIENT_SLACK = 0.05


class MildSolution(HasStrictTraits):
    u = Instance(SpaceTimeField)
    grad_u = Instance(SpaceTimeField)
    iterations = Int(0)
    # largest ratio of successive Picard differences (0 when fewer than two)
    contraction_ratio = Float(0.0)
    residual = Float(0.0)
    constants = Instance(KernelConstants)
    converged = Bool(False)
    history = List(Float)
    f_norm = Float(0.0)
    g_norm = Float(0.0)

    @property
    def smallness(self):
        """ C0 ||g||, the contraction factor the estimates guarantee """
        return self.constants.C0 * self.g_norm

    def sup_norms(self):
        return (float(np.max(np.abs(self.u.values))),
                float(np.max(self.grad_u.magnitude())))

    def gradient_consistency(self):
        """ max distance between grad_u and centered differences of u (d = 1) """
        if self.u.d != 1 or self.u.is_vector:
            raise DomainError("difference cross-check is implemented for scalar 1-d solutions")
        fd = np.gradient(self.u.values, self.u.h, axis=-1)
        return float(np.max(np.abs(fd - self.grad_u.values[:, 0])))

    def to_dict(self):
        return {"iterations": self.iterations,
                "contraction_ratio": self.contraction_ratio,
                "residual": self.residual, "converged": self.converged,
                "history": list(self.history), "f_norm": self.f_norm,
                "g_norm": self.g_norm, "smallness": self.smallness,
                "constants": self.constants.to_dict()}


class TransformSolution(MildSolution):
    """ vector solution U of the transform problem; grad_u holds the Jacobian
    rows dU_j/dx_i flattened as component j*d + i
    """
    bound = Float
    delta = Float

    def to_dict(self):
        out = super(TransformSolution, self).to_dict()
        out.update({"bound": self.bound, "delta": self.delta})
        return out


""" quadrature """

def singular_gauss_nodes(t, alpha0, alpha1, n=64):
    """ nodes and weights for int_0^t F(s) ds when F ~ s^-alpha0 at 0 and
    (t - s)^-alpha1 at t.

    [0, t/2] uses s = (t/2) w^(1/(1-alpha0)) and [t/2, t] uses
    s = t - (t/2) w^(1/(1-alpha1)), each with n Gauss-Legendre nodes in w.
    The Jacobians cancel the power singularities exactly.
    """
    if not t > 0:
        raise DomainError("need t > 0")
    if not (0.0 <= alpha0 < 1.0 and 0.0 <= alpha1 < 1.0):
        raise DomainError("singularity exponents must lie in [0, 1)")
    x, wx = special.roots_legendre(n)
    w = 0.5 * (x + 1.0)
    wx = 0.5 * wx
    half = 0.5 * t
    m0 = 1.0 / (1.0 - alpha0)
    m1 = 1.0 / (1.0 - alpha1)
    left = half * w ** m0
    left_w = half * m0 * w ** (m0 - 1.0) * wx
    right = t - half * w[::-1] ** m1
    right_w = (half * m1 * w ** (m1 - 1.0) * wx)[::-1]
    return np.concatenate([left, right]), np.concatenate([left_w, right_w])


def _weighted_spline(times, values, q):
    """ s -> F(s) through a cubic spline of s^{1/q} F(s) on the positive
    times, held constant outside them
    """
    times = np.asarray(times, dtype=float)
    keep = times > 0
    tp = times[keep]
    if tp.size == 0:
        raise DomainError("source needs at least one positive grid time")
    shape = (-1,) + (1,) * (np.ndim(values) - 1)
    vals = np.asarray(values, dtype=float)[keep] * (tp ** (1.0 / q)).reshape(shape)
    if tp.size == 1:
        spline = lambda s: np.repeat(vals, np.size(s), axis=0)
    else:
        spline = interpolate.make_interp_spline(tp, vals, k=min(3, tp.size - 1), axis=0)

    def evaluate(s):
        s = np.asarray(s, dtype=float)
        return spline(np.clip(s, tp[0], tp[-1])) * (s ** (-1.0 / q)).reshape(shape)
    return evaluate


def _transport_values(g, times, q):
    """ g on the solver grid as (n_times, d, space...) """
    vals = g.values
    if not g.is_vector:
        if g.d != 1:
            raise DataError("transport field must be a vector field for d > 1")
        vals = vals[:, np.newaxis]
    elif g.n_components != g.d:
        raise DataError("transport field has %d components in dimension %d"
                        % (g.n_components, g.d))
    out = np.zeros((times.size,) + vals.shape[1:])
    pos = times > 0
    out[pos] = _weighted_spline(g.times, vals, q)(times[pos])
    return out


def _check_grids(f, g):
    if g is None:
        return
    if not np.array_equal(f.x, g.x) or f.d != g.d:
        raise DataError("source and transport fields live on different spatial grids")


def apply_duhamel(f, g, grad_u, exps, times, n_nodes=64):
    """ one application of the Picard map: the mild solution with source
    g . grad_u + f, with grad_u given on `times`.
    return: (u, grad_u) arrays of shapes (n_t, space...) and (n_t, d, space...)
    """
    times = np.asarray(times, dtype=float)
    q, d, h = exps.q, f.d, f.h
    if f.is_vector:
        raise DataError("apply_duhamel needs a scalar source")
    sources = [_weighted_spline(f.times, f.values, q)]
    if g is not None and grad_u is not None:
        gv = _transport_values(g, times, q)
        sources.append(_weighted_spline(times, np.sum(gv * grad_u, axis=1), q))
    space = f.space_shape
    u = np.zeros((times.size,) + space)
    grad = np.zeros((times.size, d) + space)
    for i, t in enumerate(times):
        if t <= 0:
            continue
        s, w = singular_gauss_nodes(t, 1.0 / q, 0.5, n_nodes)
        F = sources[0](s)
        for src in sources[1:]:
            F = F + src(s)
        u[i], grad[i] = heat_convolve_many(t - s, F, h, weights=w, gradient=True)
    return u, grad


def _sup_distance(a, b):
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def solve_mild(f, g=None, exps=None, tol=1e-8, max_iter=200, times=None,
               n_nodes=64, strict=False, smallness_limit=1.0):
    """ Picard iteration u^{k+1} = T u^k from u^0 = 0.

    Refuses (SmallnessError) when C0 ||g|| >= smallness_limit; raises
    ConvergenceError when max_iter applications do not bring successive
    iterates within tol in the W^{1,inf} sup norm.
    """
    if exps is None:
        raise DomainError("solve_mild needs the exponent pair")
    consts = compute_constants(exps)
    _check_grids(f, g)
    f_norm = weighted_norm(f, exps)
    if not np.isfinite(f_norm):
        raise DomainError("source has no finite weighted norm")
    g_norm = weighted_norm(g, exps) if g is not None else 0.0
    if g is not None and g_norm == 0.0:
        g = None
    ratio = consts.C0 * g_norm
    if ratio >= smallness_limit:
        raise SmallnessError("smallness violated: C0*||g|| = %.4g >= %.4g"
                             % (ratio, smallness_limit), ratio=ratio,
                             threshold=smallness_limit / consts.C0)
    times = solver_time_grid(exps.T) if times is None else np.asarray(times, dtype=float)
    if times[0] != 0.0:
        raise DomainError("solver grid must start at t = 0")
    truncation_check(times[-1], f.L, strict)

    u = np.zeros((times.size,) + f.space_shape)
    grad = np.zeros((times.size, f.d) + f.space_shape)
    history = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        u_new, grad_new = apply_duhamel(f, g, grad, exps, times, n_nodes)
        diff = max(_sup_distance(u_new, u), _sup_distance(grad_new, grad))
        history.append(diff)
        u, grad = u_new, grad_new
        utlogger.debug("picard iteration %d: successive difference %.3e", iterations, diff)
        if g is None or diff <= tol:
            break
    else:
        raise ConvergenceError("Picard iteration did not reach tol=%g in %d iterations"
                               % (tol, max_iter), residual=history[-1],
                               iterations=max_iter)

    if g is None:
        residual = 0.0
    else:
        u_chk, grad_chk = apply_duhamel(f, g, grad, exps, times, n_nodes)
        residual = max(_sup_distance(u_chk, u), _sup_distance(grad_chk, grad))
    steps = [b / a for a, b in zip(history[:-1], history[1:]) if a > 0]
    u[0] = 0.0
    grad[0] = 0.0
    sol = MildSolution(
        u=SpaceTimeField(times=times, x=f.x, values=u, d=f.d, T=exps.T),
        grad_u=SpaceTimeField(times=times, x=f.x, values=grad, d=f.d, T=exps.T,
                              n_components=f.d),
        iterations=iterations, contraction_ratio=float(max(steps)) if steps else 0.0,
        residual=residual, constants=consts, converged=bool(residual <= tol),
        history=history, f_norm=f_norm, g_norm=g_norm)
    utlogger.info("mild solve: %d iterations, ratio %.3g, residual %.2e",
                  sol.iterations, sol.contraction_ratio, sol.residual)
    return sol


def check_gradient_bound(sol, f, g=None, slack=GRADIENT_SLACK):
    """ compares max(||u||_inf, ||grad u||_inf) with C0 ||f|| / (1 - C0 ||g||)
    and ||grad u||_inf with C_grad (||f|| + ||g|| ||grad u||_inf)
    """
    exps = sol.constants.exps
    f_norm = weighted_norm(f, exps)
    g_norm = weighted_norm(g, exps) if g is not None else 0.0
    C0, C_grad = sol.constants.C0, sol.constants.C_grad
    u_sup, grad_sup = sol.sup_norms()
    lhs = max(u_sup, grad_sup)
    denom = 1.0 - C0 * g_norm
    rhs = C0 * f_norm / denom if denom > 0 else np.inf
    grad_rhs = C_grad * (f_norm + g_norm * grad_sup)
    return {"lhs": lhs, "rhs": rhs, "grad_lhs": grad_sup, "grad_rhs": grad_rhs,
            "f_norm": f_norm, "g_norm": g_norm, "slack": slack,
            "pass": bool(lhs <= rhs * (1 + slack) and grad_sup <= grad_rhs * (1 + slack))}


def time_holder_check(sol, exps, n_uniform=64, max_level=5, margin=0.1):
    """ fits the W^{1,p} modulus sup_t ||u(t + D) - u(t)|| against dyadic gaps
    D = 2^k T/n_uniform on the uniform part of the solver grid
    """
    theta = sol.constants.theta if sol.constants is not None else 0.0
    if exps.q <= 2 or theta <= 0:
        utlogger.warning("time Holder check skipped: theta = 0 for q = %g", exps.q)
        return {"skipped": True, "theta": 0.0, "slope": None, "pass": True}
    times = sol.u.times
    step = exps.T / float(n_uniform)
    idx = np.flatnonzero(np.isclose(times / step, np.round(times / step), atol=1e-9))
    gaps, moduli = [], []
    for level in range(max_level + 1):
        k = 2 ** level
        if k >= idx.size:
            break
        a, b = idx[:-k], idx[k:]
        du = sol.u.values[b] - sol.u.values[a]
        dg = sol.grad_u.values[b] - sol.grad_u.values[a]
        dg = np.sqrt(np.sum(dg ** 2, axis=1))
        mod = lp_norm(du, sol.u.h, exps.p, sol.u.d) + lp_norm(dg, sol.u.h, exps.p, sol.u.d)
        gaps.append(k * step)
        moduli.append(float(np.max(mod)))
    out = {"skipped": False, "theta": theta, "threshold": theta / 2.0 - margin,
           "gaps": gaps, "moduli": moduli}
    if not np.any(np.asarray(moduli) > 0):
        out.update(slope=None, passed_vacuously=True)
        out["pass"] = True
        return out
    slope, _ = loglog_slope(gaps, moduli)
    out["slope"] = slope
    out["pass"] = bool(slope >= theta / 2.0 - margin)
    return out


""" transform problem """

def solve_transform_pde(b1, exps, tol=1e-8, max_iter=200, times=None, n_nodes=64,
                        strict=False, resample=False):
    """ dU/dt = 1/2 Lap U + I_T b1 . grad U + I_T b1, one scalar solve per
    component sharing the transport field. Needs C0 ||I_T b1|| < 1/2.
    """
    consts = compute_constants(exps)
    g = reverse_time(b1, resample=resample)
    g_norm = weighted_norm(g, exps)
    ratio = consts.C0 * g_norm
    if ratio >= 0.5:
        raise SmallnessError("smallness violated: C0*||I_T b1|| = %.4g >= 1/2" % ratio,
                             ratio=ratio, threshold=0.5 / consts.C0)
    d = b1.d
    comps = [g.component(j) if g.is_vector else g for j in range(d)]
    sols = [solve_mild(c, g, exps, tol=tol, max_iter=max_iter, times=times,
                       n_nodes=n_nodes, strict=strict) for c in comps]
    first = sols[0]
    U = np.stack([s.u.values for s in sols], axis=1)
    J = np.concatenate([s.grad_u.values for s in sols], axis=1)
    bound = ratio / (1.0 - ratio)
    sol = TransformSolution(
        u=first.u.with_values(U, n_components=d),
        grad_u=first.u.with_values(J, n_components=d * d),
        iterations=max(s.iterations for s in sols),
        contraction_ratio=max(s.contraction_ratio for s in sols),
        residual=max(s.residual for s in sols), constants=consts,
        converged=all(s.converged for s in sols), history=first.history,
        f_norm=g_norm, g_norm=g_norm, bound=bound, delta=1.0 - bound)
    utlogger.info("transform solve: C0*||I_T b1|| = %.3g, bound %.3g, delta %.3g",
                  ratio, bound, sol.delta)
    return sol


def diffeomorphism_bounds(sol):
    """ singular values of grad Phi = I + grad U(T - t) over the grid, their
    reciprocals for grad Psi, and delta < min <= max < 2 - delta
    """
    d = sol.u.d
    J = sol.grad_u.values
    nt = J.shape[0]
    J = np.moveaxis(J.reshape((nt, d, d) + J.shape[2:]), (1, 2), (-2, -1))
    jac = np.eye(d) + J
    sv = np.linalg.svd(jac.reshape((-1, d, d)), compute_uv=False)
    smin, smax = float(sv.min()), float(sv.max())
    U_sup = float(np.max(np.abs(sol.u.values)))
    grad_sup = float(np.max(np.sqrt(np.sum(sol.grad_u.values ** 2, axis=1))))
    return {"phi_min": smin, "phi_max": smax,
            "psi_min": 1.0 / smax, "psi_max": 1.0 / smin if smin > 0 else np.inf,
            "delta": sol.delta, "U_sup": U_sup, "gradU_sup": grad_sup,
            "bound": sol.bound,
            # U = 0 gives grad Phi = I with delta = 1, so the sandwich is closed
            "pass": bool(sol.delta <= smin + 1e-12 and smax <= 2.0 - sol.delta + 1e-12
                         and max(U_sup, grad_sup) <= sol.bound * (1 + GRADIENT_SLACK))}
