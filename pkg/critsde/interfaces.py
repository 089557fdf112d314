import os

import numpy as np
from nipype import logging
from nipype.interfaces.base import (BaseInterface, BaseInterfaceInputSpec, Directory,
                                    File, TraitedSpec, isdefined, traits)
from scipy.stats import norm

from critsde.catalog import FieldFunction, ProbeFunction, profile_lp_norm
from critsde.config import ExperimentConfig, parse_config
from critsde.errors import ConfigError, CritError, FitError, SmallnessError
from critsde.heat import compute_constants, constants_record, theta_exponent
from critsde.mild import check_gradient_bound, solve_mild, time_holder_check
from critsde.plots import emit_plots
from critsde.sde import (DriftSpec, build_example_drift, euler_maruyama, increment_modulus,
                         integrability_proxy, krylov_check, lag_autocorrelation,
                         mollified_drift_convergence)
from critsde.spaces import (classify_space, counterexample_field, counterexample_table,
                            mollification_profile, solver_time_grid, space_axis,
                            summarize_profile, symmetric_time_grid, weighted_norm)
from critsde.stats import (feller_continuity, feller_probe, gaussian_lr_norm, kde,
                           lr_space_time_proxy, lr_stability)
from critsde.storage import (Manifest, load_manifest, save_density, save_ensemble,
                             save_field, save_probe, save_zmap, write_csv, write_json)
from critsde.zvonkin import SigmaSpec, bilipschitz_check, build_phi, route_equivalence

iflogger = logging.getLogger("nipype.interface")

COUNTEREXAMPLE_BOUND = 0.23
DUHAMEL_TOL = 2e-3


""" config -> catalog objects """

def drift_from_config(conf):
    dr, exps = conf.drift, conf.exponents
    params = dict(dr.b1_params)
    if dr.b1 == "log_singular" and dr.b1_fraction is not None:
        return build_example_drift(profile=params.get("profile", "gaussian"), exps=exps,
                                   params=params.get("params"), b1_fraction=dr.b1_fraction,
                                   b2=dr.b2, b2_params=dict(dr.b2_params))
    if dr.b1 == "gaussian_profile_weighted" and dr.b1_fraction is not None:
        unit = profile_lp_norm("gaussian", exps.p, exps.d, params.get("params"))
        params["scale"] = dr.b1_fraction * 0.5 / compute_constants(exps).C0 / unit
    return DriftSpec(b1=dr.b1, b1_params=params, b2=dr.b2, b2_params=dict(dr.b2_params),
                     exps=exps)


def field_from_config(conf, name="f"):
    f = conf.f
    return FieldFunction(kind=f.kind, profile=f.profile, params=dict(f.params),
                         scale=f.scale, beta=f.beta, exps=conf.exponents, name=name)


def sigma_from_config(conf):
    s = conf.sigma
    return SigmaSpec(family=s.family, params=dict(s.params), split=s.split)


def probe_from_config(conf):
    return ProbeFunction(family=conf.probe.family, params=dict(conf.probe.params))


def x0_from_config(conf):
    x0 = np.zeros(conf.exponents.d)
    x0[0] = conf.numerics.x0
    return x0


# which catalog objects each experiment builds
_USES = {
    "pde-solve": ("f",),
    "krylov-check": ("drift", "f"),
    "simulate": ("drift",),
    "zvonkin-compare": ("drift", "sigma"),
    "mollify-demo": ("f",),
    "counterexample": (),
    "feller-probe": ("drift", "probe"),
    "density": ("drift",),
}


def validate_objects(conf):
    """ builds every catalog object the experiment needs; catalog problems
    surface as ConfigError before anything runs
    """
    builders = {"drift": drift_from_config, "f": field_from_config,
                "sigma": sigma_from_config, "probe": probe_from_config}
    try:
        for name in _USES[conf.experiment]:
            builders[name](conf)
    except ConfigError:
        raise
    except (CritError, ValueError) as e:
        raise ConfigError("cannot build the %s experiment: %s" % (conf.experiment, e))


""" interfaces """

class LabInputSpec(BaseInterfaceInputSpec):
    config = traits.Dict(
            mandatory=True,
            desc="experiment config mapping, validated by critsde.config.parse_config")
    out_dir = Directory(
            mandatory=True,
            desc="directory receiving the artifacts and manifest.json")
    seed = traits.Int(desc="overrides the config seed")
    workers = traits.Int(desc="overrides the config worker count")
    strict = traits.Bool(desc="overrides the config strict flag")


class LabOutputSpec(TraitedSpec):
    manifest_file = File(exists=True, desc="the experiment manifest")
    passed = traits.Bool(desc="True iff every check in the manifest passed")


class LabExperiment(BaseInterface):
    """ Runs one experiment into out_dir. Subclasses fill the manifest in
    _run_experiment; numeric failures become failed checks, so the manifest
    is written whatever happens.
    """
    input_spec = LabInputSpec
    output_spec = LabOutputSpec
    experiment = None

    def __init__(self, *args, **kwargs):
        super(LabExperiment, self).__init__(*args, **kwargs)
        self.manifest = None
        self.manifest_file = None

    def _override(self, name):
        val = getattr(self.inputs, name)
        return val if isdefined(val) else None

    def _run_interface(self, runtime):
        conf = parse_config(self.inputs.config, seed=self._override("seed"),
                            workers=self._override("workers"),
                            strict=self._override("strict"))
        if conf.experiment != self.experiment:
            raise ConfigError("%s cannot run a %r config" % (type(self).__name__,
                                                              conf.experiment))
        out_dir = os.path.abspath(self.inputs.out_dir)
        if not os.path.isdir(out_dir):
            os.makedirs(out_dir)
        man = Manifest(out_dir=out_dir, meta={"experiment": conf.experiment,
                                              "seed": conf.seed})
        self.manifest = man
        man.add_file(write_json(man.path("config.json"), conf.to_dict()), "config")
        iflogger.info("running %s (seed %d, %d workers) into %s", conf.experiment,
                      conf.seed, conf.workers, out_dir)
        try:
            self._run_experiment(conf, man)
        except CritError as e:
            iflogger.error("%s failed: %s", conf.experiment, e)
            man.add_check(conf.experiment, False, value=str(e))
            man.meta["diagnostic"] = str(e)
        self.manifest_file = man.write()
        return runtime

    def _run_experiment(self, conf, man):
        raise NotImplementedError

    def _list_outputs(self):
        outputs = self._outputs().get()
        outputs["manifest_file"] = self.manifest_file
        outputs["passed"] = bool(self.manifest.passed)
        return outputs


class PdeSolve(LabExperiment):
    """ mild solution of u_t = Lap u / 2 + g . grad u + f on the grid """
    experiment = "pde-solve"

    def _run_experiment(self, conf, man):
        exps, num = conf.exponents, conf.numerics
        consts = compute_constants(exps)
        man.add_file(write_json(man.path("constants.json"), constants_record(consts)),
                     "constants")
        x = space_axis(conf.grid.L, conf.grid.h)
        times = solver_time_grid(exps.T, n_uniform=conf.grid.n_times)
        ff = field_from_config(conf)
        f = ff.sample(times[1:], x)
        g = None
        if num.g_fraction > 0:
            unit = profile_lp_norm(num.g_profile, exps.p, exps.d)
            gf = FieldFunction(kind="weighted", profile=num.g_profile, exps=exps,
                               scale=num.g_fraction / consts.C0 / unit, name="g")
            g = gf.sample(times[1:], x)
        ratio = consts.C0 * weighted_norm(g, exps) if g is not None else 0.0
        try:
            sol = solve_mild(f, g, exps, tol=num.tol, max_iter=num.max_iter, times=times,
                             n_nodes=num.n_nodes, strict=conf.strict,
                             smallness_limit=num.smallness_limit)
        except SmallnessError as e:
            iflogger.error("refusing to solve: %s", e)
            man.add_check("smallness", False, value=e.ratio, threshold=num.smallness_limit)
            man.meta["diagnostic"] = str(e)
            return
        man.add_check("smallness", True, value=ratio, threshold=num.smallness_limit)
        man.add_check("converged", sol.converged, value=sol.residual, threshold=num.tol)
        if g is not None:
            man.add_check("contraction", sol.contraction_ratio <= num.g_fraction + 0.05,
                          value=sol.contraction_ratio, threshold=num.g_fraction + 0.05)
        bound = check_gradient_bound(sol, f, g)
        man.add_check("gradient_bound", bound["pass"], value=bound["grad_lhs"],
                      threshold=bound["grad_rhs"])
        holder = time_holder_check(sol, exps, n_uniform=conf.grid.n_times)
        if not holder["skipped"]:
            man.add_check("time_holder", holder["pass"], value=holder["slope"],
                          threshold=holder["threshold"])
        oracle = self._duhamel_oracle(conf, ff, g)
        if oracle is not None:
            i0 = int(np.argmin(np.abs(x)))
            val = float(sol.u.values[-1, i0])
            man.add_check("duhamel_oracle", abs(val - oracle) <= DUHAMEL_TOL,
                          value=val, threshold=oracle)
        for path in save_field(sol.u, man.path("u")):
            man.add_file(path, "field")
        sup_u = np.max(np.abs(sol.u.values), axis=-1)
        sup_g = np.max(sol.grad_u.magnitude(), axis=-1)
        man.add_file(write_csv(man.path("u_profile.csv"), ["t", "sup_u", "sup_grad_u"],
                               zip(times, sup_u, sup_g)), "profile")
        report = sol.to_dict()
        report.update(gradient_bound=bound, time_holder=holder)
        man.add_file(write_json(man.path("solution.json"), report), "report")

    @staticmethod
    def _duhamel_oracle(conf, ff, g):
        """ u(T, 0) = scale sqrt(2/pi) (sqrt(w^2 + T) - w) for a stationary centered
        Gaussian source of width w in d = 1 and no transport
        """
        params = dict(ff.params)
        if (g is not None or conf.exponents.d != 1 or ff.kind != "stationary"
                or ff.profile != "gaussian" or float(params.get("center", 0.0)) != 0.0):
            return None
        w = float(params.get("width", 1.0))
        amp = ff.scale * float(params.get("scale", 1.0))
        T = conf.exponents.T
        return amp * np.sqrt(2.0 / np.pi) * (np.sqrt(w ** 2 + T) - w)


class KrylovCheck(LabExperiment):
    experiment = "krylov-check"

    def _run_experiment(self, conf, man):
        exps, num = conf.exponents, conf.numerics
        drift = drift_from_config(conf)
        ff = field_from_config(conf)
        consts = compute_constants(exps)
        ens = euler_maruyama(drift, x0_from_config(conf), num.n_paths, num.n_steps, conf.seed,
                             integrands={ff.name: ff}, workers=conf.workers)
        x = space_axis(conf.grid.L, conf.grid.h)
        report = krylov_check(ff, drift, ens, consts, n_se=num.n_se, x=x)
        man.add_check("krylov", report["pass"], value=report["lhs_mc"], threshold=report["rhs"])
        rows = [("krylov", report["lhs_mc"], report["se"], report["rhs"])]
        if "drift_bound" in report:
            db = report["drift_bound"]
            man.add_check("drift_bound", db["pass"], value=db["lhs_mc"], threshold=db["rhs"])
            rows.append(("drift_bound", db["lhs_mc"], db["se"], db["rhs"]))
        man.add_file(write_csv(man.path("krylov.csv"), ["estimate", "lhs", "stderr", "rhs"],
                               rows), "table")
        report.update(drift=drift.to_dict(), f=ff.to_dict(), ensemble=ens.header())
        man.add_file(write_json(man.path("krylov.json"), report), "report")


class Simulate(LabExperiment):
    experiment = "simulate"

    def _run_experiment(self, conf, man):
        exps, num = conf.exponents, conf.numerics
        drift = drift_from_config(conf)
        ens = euler_maruyama(drift, x0_from_config(conf), num.n_paths, num.n_steps, conf.seed,
                             record_stride=num.record_stride, workers=conf.workers)
        for path in save_ensemble(ens, man.path("ensemble")):
            man.add_file(path, "ensemble")
        integ = integrability_proxy(ens)
        man.add_check("integrability", integ["pass"], value=integ["fraction"],
                      threshold=integ["level"])
        lag = lag_autocorrelation(ens)
        man.add_check("lag_autocorrelation", lag["pass"], value=lag["lag1"],
                      threshold=lag["threshold"])
        report = {"drift": drift.to_dict(), "integrability": integ, "lag": lag}
        try:
            mod = increment_modulus(ens, theta=theta_exponent(exps.q))
        except (FitError, ValueError) as e:
            iflogger.warning("increment modulus skipped: %s", e)
        else:
            man.add_check("increment_modulus", mod["pass"], value=mod["slope"],
                          threshold=mod["threshold"])
            man.add_file(write_csv(man.path("modulus.csv"), ["gap", "modulus"],
                                   zip(mod["gaps"], mod["moduli"])), "modulus")
            report["modulus"] = mod
        term = ens.terminal()
        man.add_file(write_csv(man.path("terminal.csv"), ["statistic", "value"],
                               [("mean", float(np.mean(term))),
                                ("variance", float(np.var(term, ddof=1))),
                                ("n_paths", ens.n_paths), ("n_excluded", ens.n_excluded)]),
                     "table")
        man.add_file(write_json(man.path("simulate.json"), report), "report")


class ZvonkinCompare(LabExperiment):
    experiment = "zvonkin-compare"

    def _run_experiment(self, conf, man):
        num = conf.numerics
        drift = drift_from_config(conf)
        sigma = sigma_from_config(conf)
        zmap = build_phi(sigma, resolution=num.resolution, x0=num.x0, T=conf.exponents.T)
        man.add_file(save_zmap(zmap, man.path("zmap.csv")), "zmap")
        bl = bilipschitz_check(zmap)
        man.add_check("bilipschitz", bl["pass"], value=bl["round_trip"], threshold=1e-6)
        rep = route_equivalence(drift, sigma, num.x0, num.n_paths, num.n_steps_list,
                                seed=conf.seed, factor=num.factor,
                                replicates=num.replicates, workers=conf.workers)
        for row in rep["rows"]:
            man.add_check("route_equivalence_%d" % row["n_steps"], row["pass"],
                          value=row["ks"], threshold=num.factor * row["noise_floor"])
        man.add_check("refinement", rep["refinement_ok"])
        man.add_file(write_csv(man.path("routes.csv"),
                               ["n_steps", "ks", "noise_floor", "exits"],
                               [(r["n_steps"], r["ks"], r["noise_floor"], r["exits"])
                                for r in rep["rows"]]), "table")
        rep.update(sigma=sigma.to_dict(), drift=drift.to_dict(), map_bilipschitz=bl,
                   monotone_fallback=zmap.monotone_fallback)
        man.add_file(write_json(man.path("zvonkin.json"), rep), "report")


class MollifyDemo(LabExperiment):
    experiment = "mollify-demo"

    def _run_experiment(self, conf, man):
        exps, num = conf.exponents, conf.numerics
        x = space_axis(conf.grid.L, conf.grid.h)
        times = symmetric_time_grid(exps.T, n_uniform=conf.grid.n_times)
        field = field_from_config(conf).sample(times, x)
        rows = mollification_profile(field, num.n_list, exps, profile=num.mollifier)
        summary = summarize_profile(rows)
        man.add_file(write_csv(man.path("mollify.csv"), ["n", "error"], rows), "error_decay")
        man.add_check("strictly_decreasing", summary["strictly_decreasing"])
        man.add_check("converged", summary["converged"], value=rows[-1][1],
                      threshold=summary["threshold"])
        report = {"rows": rows, "summary": summary,
                  "membership": classify_space(field, exps).to_dict()}
        if num.with_paths:
            paths = mollified_drift_convergence(drift_from_config(conf), num.n_list, conf.seed,
                                                x, x0=num.x0, n_paths=num.n_paths,
                                                n_steps=num.n_steps, workers=conf.workers)
            man.add_file(write_csv(man.path("mollify_paths.csv"), ["n", "ks", "drift_error"],
                                   [(r["n"], r["ks"], r["drift_error"])
                                    for r in paths["rows"]]), "ks_decay")
            man.add_check("paths_ks_nonincreasing", paths["ks_nonincreasing"],
                          value=paths["rows"][-1]["ks"], threshold=paths["noise_floor"])
            report["paths"] = paths
        man.add_file(write_json(man.path("mollify.json"), report), "report")


class Counterexample(LabExperiment):
    """ L^inf_q without C_q: mollification does not converge in the weighted norm """
    experiment = "counterexample"

    def _run_experiment(self, conf, man):
        num = conf.numerics
        k = num.k_max
        h = 1.0 / (4.0 * k ** 2)
        n_x = int(round((k + 2) / h)) + 1
        x = np.linspace(0.0, k + 2.0, n_x)
        # one slice in the middle of each time window, so every time is positive
        ks = np.arange(1, k + 1, dtype=float)
        times = (ks - 1.0) / ks + 0.5 / (ks * (ks + 1.0))
        field = counterexample_field(x, k, times)
        rows = counterexample_table(field, num.n_list, profile=num.mollifier)
        man.add_file(write_csv(man.path("counterexample.csv"), ["n", "k", "sq_error"], rows),
                     "counterexample")
        low = min(r[2] for r in rows)
        man.add_check("lower_bound", low >= COUNTEREXAMPLE_BOUND, value=low,
                      threshold=COUNTEREXAMPLE_BOUND)
        membership = classify_space(field, conf.exponents)
        man.add_check("not_cq", membership.cq_norm is None,
                      value=membership.continuity_gap)
        man.add_file(write_json(man.path("counterexample.json"),
                                {"rows": rows, "membership": membership.to_dict()}),
                     "report")


class FellerProbe(LabExperiment):
    experiment = "feller-probe"

    def _run_experiment(self, conf, man):
        exps, num = conf.exponents, conf.numerics
        drift = drift_from_config(conf)
        f = probe_from_config(conf)
        t = exps.T if num.t is None else num.t
        xs = num.center + num.spacings[0] * np.arange(-2, 3)
        rows = feller_probe(drift, f, t, xs, num.n_paths, conf.seed, s=num.s,
                            n_steps=num.n_steps, workers=conf.workers)
        man.add_file(save_probe(rows, man.path("probe.csv")), "probe")
        cont = feller_continuity(drift, f, t, num.center, num.spacings, num.n_paths,
                                 conf.seed, s=num.s, n_steps=num.n_steps, n_se=num.n_se,
                                 workers=conf.workers)
        man.add_check("feller_continuity", cont["pass"], value=cont["rows"][-1]["max_gap"])
        man.add_file(write_csv(man.path("feller_gaps.csv"), ["spacing", "max_gap", "stderr"],
                               [(r["spacing"], r["max_gap"], r["se"]) for r in cont["rows"]]),
                     "table")
        if drift.b1 == "zero" and drift.b2 == "zero" and f.family == "indicator_halfline":
            c = float(f.params.get("c", 0.0))
            i = int(np.argmin(np.abs(xs - num.center)))
            x, est, se = rows[i]
            exact = float(norm.cdf((c - x) / np.sqrt(t - num.s)))
            man.add_check("brownian_exact", abs(est - exact) <= 3.0 * se, value=est,
                          threshold=exact)
        man.add_file(write_json(man.path("feller.json"),
                                {"probe": rows, "continuity": cont, "t": t, "s": num.s,
                                 "f": f.to_dict(), "drift": drift.to_dict()}), "report")


class Density(LabExperiment):
    experiment = "density"

    def _run_experiment(self, conf, man):
        exps, num = conf.exponents, conf.numerics
        drift = drift_from_config(conf)
        ens = euler_maruyama(drift, x0_from_config(conf), num.n_paths, num.n_steps, conf.seed,
                             record_stride=num.record_stride, workers=conf.workers)
        sample = ens.terminal()
        man.add_file(save_density(kde(sample, num.bandwidth), man.path("density.csv")),
                     "density")
        free = drift.b1 == "zero" and drift.b2 == "zero"
        rows = []
        for r in num.r_list:
            stab = lr_stability(sample, r, num.bandwidth, tol=num.rel_tol)
            man.add_check("stable_r%g" % r, stab["stable"], value=stab["rel_change"],
                          threshold=num.rel_tol)
            exact = None
            if free:
                exact = gaussian_lr_norm(exps.T, r)
                rel = abs(stab["value"] - exact) / exact
                man.add_check("closed_form_r%g" % r, rel <= num.rel_tol, value=stab["value"],
                              threshold=exact)
            rows.append((r, stab["value"], stab["coarse_value"], stab["rel_change"], exact))
        man.add_file(write_csv(man.path("lr_norms.csv"),
                               ["r", "value", "coarse_value", "rel_change", "closed_form"],
                               rows), "table")
        st = lr_space_time_proxy(ens, max(num.r_list), num.t0_fraction * exps.T,
                                 bandwidth=num.bandwidth)
        man.add_check("space_time_finite", st["finite"], value=st["value"])
        man.add_file(write_json(man.path("density.json"),
                                {"rows": rows, "space_time": st, "drift": drift.to_dict(),
                                 "ensemble": ens.header()}), "report")


EXPERIMENT_INTERFACES = {
    "pde-solve": PdeSolve,
    "krylov-check": KrylovCheck,
    "simulate": Simulate,
    "zvonkin-compare": ZvonkinCompare,
    "mollify-demo": MollifyDemo,
    "counterexample": Counterexample,
    "feller-probe": FellerProbe,
    "density": Density,
}


class PlotScriptsInputSpec(BaseInterfaceInputSpec):
    manifest_file = File(exists=True, mandatory=True, desc="manifest to draw from")


class PlotScriptsOutputSpec(TraitedSpec):
    manifest_file = File(exists=True, desc="the manifest, now listing the scripts")
    scripts = traits.List(File(exists=True), desc="gnuplot scripts, one per table")


class PlotScripts(BaseInterface):
    input_spec = PlotScriptsInputSpec
    output_spec = PlotScriptsOutputSpec

    def __init__(self, *args, **kwargs):
        super(PlotScripts, self).__init__(*args, **kwargs)
        self.scripts = []

    def _run_interface(self, runtime):
        man = load_manifest(self.inputs.manifest_file)
        self.scripts = emit_plots(man)
        for path in self.scripts:
            man.add_file(path, "plot_script")
        man.write(os.path.basename(self.inputs.manifest_file))
        return runtime

    def _list_outputs(self):
        outputs = self._outputs().get()
        outputs["manifest_file"] = os.path.abspath(self.inputs.manifest_file)
        outputs["scripts"] = list(self.scripts)
        return outputs


def interface_for(conf):
    if isinstance(conf, ExperimentConfig):
        conf = conf.experiment
    return EXPERIMENT_INTERFACES[conf]
