import json
import os
from glob import glob

from configobj import ConfigObj
from traits.api import (HasStrictTraits, Bool, Dict, Either, Enum, Float, Instance,
                        Int, List, Str, TraitError)

from critsde.catalog import B2_FAMILIES, PROBE_FUNCTIONS, PROFILES, TIME_FACTORS
from critsde.errors import ConfigError, CritError
from critsde.sde import B1_FAMILIES, MIN_STEPS
from critsde.spaces import ExponentPair
from critsde.util import SEED_MASK
from critsde.zvonkin import SIGMA_FAMILIES

EXPERIMENTS = [
    "pde-solve",
    "krylov-check",
    "simulate",
    "zvonkin-compare",
    "mollify-demo",
    "counterexample",
    "feller-probe",
    "density"]

SECTIONS = ["exponents", "grid", "drift", "sigma", "f", "probe", "numerics"]
TOP_KEYS = ["experiment", "seed", "workers", "strict"] + SECTIONS

# per-experiment defaults, merged under whatever the config file sets
EXPERIMENT_DEFAULTS = {
    "pde-solve": {
        "exponents": {"p": 2.0, "q": 4.0, "d": 1, "T": 1.0},
        "grid": {"L": 12.0, "h": 0.0625},
        "f": {"kind": "stationary", "profile": "gaussian"},
    },
    "krylov-check": {
        "exponents": {"p": 2.0, "q": 4.0, "d": 1, "T": 0.5},
        "drift": {"b1": "log_singular", "b1_fraction": 0.5},
        "f": {"kind": "stationary", "profile": "indicator"},
        "numerics": {"n_paths": 100000, "n_steps": 1024},
    },
    "simulate": {
        "exponents": {"p": 2.0, "q": 4.0, "d": 1, "T": 0.5},
        "drift": {"b1": "log_singular", "b1_fraction": 0.5},
        "numerics": {"n_paths": 20000, "n_steps": 1024, "record_stride": 16},
    },
    "zvonkin-compare": {
        "exponents": {"p": 2.0, "q": 4.0, "d": 1, "T": 1.0},
        "drift": {"b2": "bump"},
        "sigma": {"family": "tanh"},
        "numerics": {"n_paths": 20000},
    },
    "mollify-demo": {
        "exponents": {"p": 2.0, "q": 4.0, "d": 1, "T": 1.0},
        "grid": {"L": 8.0, "h": 0.0009765625},
        "f": {"kind": "weighted", "profile": "gaussian"},
        "numerics": {"n_list": [4, 16, 64, 256]},
    },
    "counterexample": {
        "exponents": {"p": 2.0, "q": 4.0, "d": 1, "T": 1.0},
        "numerics": {"n_list": [4, 8, 16], "k_max": 32},
    },
    "feller-probe": {
        "exponents": {"p": 2.0, "q": 4.0, "d": 1, "T": 0.5},
        "drift": {"b1": "log_singular", "b1_fraction": 0.5},
        "probe": {"family": "indicator_halfline"},
        "numerics": {"n_paths": 20000, "n_steps": 256},
    },
    "density": {
        "exponents": {"p": 2.0, "q": 4.0, "d": 1, "T": 0.5},
        "drift": {"b1": "log_singular", "b1_fraction": 0.5},
        "numerics": {"n_paths": 20000, "n_steps": 256, "record_stride": 8},
    },
}


class GridSection(HasStrictTraits):
    L = Float(8.0)
    h = Float(0.0625)
    # uniform part of the solver / symmetric time grids
    n_times = Int(64)

    def check(self):
        if not (self.L > 0 and self.h > 0 and self.h < self.L):
            raise ConfigError("grid needs 0 < h < L (got L=%r, h=%r)" % (self.L, self.h))
        if self.n_times < 4:
            raise ConfigError("grid.n_times must be at least 4")


class DriftSection(HasStrictTraits):
    b1 = Enum("zero", *B1_FAMILIES[1:])
    b1_params = Dict
    # sets the scale so that C0 ||I_T b1|| = b1_fraction / 2
    b1_fraction = Either(None, Float)
    b2 = Enum(*B2_FAMILIES)
    b2_params = Dict

    def check(self):
        if self.b1 == "grid" or (self.b2 == "grid" and not self.b2_params):
            raise ConfigError("grid drifts cannot be configured from a file")
        if self.b1_fraction is not None and not 0 <= self.b1_fraction < 1:
            raise ConfigError("drift.b1_fraction must lie in [0, 1)")


class SigmaSection(HasStrictTraits):
    family = Enum("tanh", *SIGMA_FAMILIES)
    params = Dict
    split = Enum("bounded", "lp")

    def check(self):
        pass


class FSection(HasStrictTraits):
    kind = Enum("stationary", *TIME_FACTORS)
    profile = Enum("gaussian", *PROFILES)
    params = Dict
    scale = Float(1.0)
    beta = Float(1.0)

    def check(self):
        pass


class ProbeSection(HasStrictTraits):
    family = Enum("indicator_halfline", *PROBE_FUNCTIONS)
    params = Dict

    def check(self):
        pass


class NumericsSection(HasStrictTraits):
    # pde-solve
    tol = Float(1e-8)
    max_iter = Int(200)
    n_nodes = Int(64)
    g_fraction = Float(0.0)
    g_profile = Enum("gaussian", *PROFILES)
    smallness_limit = Float(1.0)
    # simulations
    n_paths = Int(20000)
    n_steps = Int(256)
    n_steps_list = List(Int, [256, 1024])
    record_stride = Int(1)
    x0 = Float(0.0)
    n_se = Float(2.0)
    # mollification / counterexample
    n_list = List(Int, [4, 16, 64, 256])
    mollifier = Enum("bump", "cosine")
    k_max = Int(32)
    with_paths = Bool(False)
    # zvonkin
    resolution = Int(4001)
    factor = Float(1.5)
    replicates = Int(4)
    # feller / density
    t = Either(None, Float)
    s = Float(0.0)
    center = Float(0.0)
    spacings = List(Float, [0.2, 0.1, 0.05])
    r_list = List(Float, [1.0, 2.0, 3.0])
    t0_fraction = Float(0.125)
    bandwidth = Either(Str("silverman"), Float, default="silverman")
    rel_tol = Float(0.05)

    def check(self):
        if not self.tol > 0:
            raise ConfigError("numerics.tol must be positive")
        if self.max_iter < 1 or self.n_nodes < 2:
            raise ConfigError("numerics.max_iter >= 1 and numerics.n_nodes >= 2 required")
        if not 0 <= self.g_fraction:
            raise ConfigError("numerics.g_fraction must be nonnegative")
        if self.n_paths < 1:
            raise ConfigError("numerics.n_paths must be positive")
        if self.n_steps < MIN_STEPS or any(n < MIN_STEPS for n in self.n_steps_list):
            raise ConfigError("step counts must be at least %d" % MIN_STEPS)
        if self.record_stride < 1:
            raise ConfigError("numerics.record_stride must be positive")
        if not self.n_list or any(n < 1 for n in self.n_list):
            raise ConfigError("numerics.n_list needs positive mollifier indices")
        if self.k_max < 1:
            raise ConfigError("numerics.k_max must be positive")
        if self.resolution < 3:
            raise ConfigError("numerics.resolution must be at least 3")
        if self.replicates < 1:
            raise ConfigError("numerics.replicates must be positive")
        if any(s <= 0 for s in self.spacings) or any(r < 1 for r in self.r_list):
            raise ConfigError("spacings must be positive and r_list entries at least 1")
        if not 0 < self.t0_fraction < 1:
            raise ConfigError("numerics.t0_fraction must lie in (0, 1)")


class ExperimentConfig(HasStrictTraits):
    experiment = Enum(*EXPERIMENTS)
    seed = Int(0)
    workers = Int(1)
    strict = Bool(False)
    exponents = Instance(ExponentPair, ())
    grid = Instance(GridSection, ())
    drift = Instance(DriftSection, ())
    sigma = Instance(SigmaSection, ())
    f = Instance(FSection, ())
    probe = Instance(ProbeSection, ())
    numerics = Instance(NumericsSection, ())

    def to_dict(self):
        out = {"experiment": self.experiment, "seed": self.seed,
               "workers": self.workers, "strict": self.strict}
        for name in SECTIONS:
            out[name] = getattr(self, name).trait_get()
        return _plain(out)


def _plain(obj):
    if isinstance(obj, dict):
        return dict((str(k), _plain(v)) for k, v in obj.items())
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _merge(base, over):
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


_SECTION_CLASSES = {
    "exponents": ExponentPair,
    "grid": GridSection,
    "drift": DriftSection,
    "sigma": SigmaSection,
    "f": FSection,
    "probe": ProbeSection,
    "numerics": NumericsSection,
}


def parse_config(conf_dict, **overrides):
    """ strict validation of a config mapping (a ConfigObj works too).
    overrides (seed, workers, strict) replace the file values when not None.
    """
    d = _plain(dict(conf_dict))
    if "experiment" not in d:
        raise ConfigError("missing required field 'experiment'")
    unknown = sorted(set(d) - set(TOP_KEYS))
    if unknown:
        raise ConfigError("unknown config keys: %s" % ", ".join(unknown))
    exp = d["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError("unknown experiment %r (choose from %s)" % (exp, ", ".join(EXPERIMENTS)))
    d = _merge(EXPERIMENT_DEFAULTS[exp], d)
    for k, v in overrides.items():
        if v is not None:
            d[k] = v
    sections = {}
    for name in SECTIONS:
        values = d.get(name, {})
        if not isinstance(values, dict):
            raise ConfigError("section %r must be a mapping" % name)
        try:
            sec = _SECTION_CLASSES[name](**values)
            if name != "exponents":
                sec.check()
        except (TraitError, CritError, TypeError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError("bad [%s] section: %s" % (name, e))
        sections[name] = sec
    try:
        conf = ExperimentConfig(experiment=exp, seed=d.get("seed", 0),
                                workers=d.get("workers", 1), strict=d.get("strict", False),
                                **sections)
    except TraitError as e:
        raise ConfigError("bad top-level value: %s" % e)
    if not 0 <= conf.seed <= SEED_MASK:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if conf.workers < 1:
        raise ConfigError("workers must be at least 1")
    return conf


def get_config_dict(conf_path):
    """ .json through json, anything else as a ConfigObj with unrepr values """
    if not os.path.exists(conf_path):
        raise ConfigError("config file %s does not exist" % conf_path)
    try:
        if conf_path.endswith(".json"):
            with open(conf_path) as f:
                return json.load(f)
        return ConfigObj(conf_path, unrepr=True, file_error=True).dict()
    except Exception as e:
        raise ConfigError("cannot parse %s: %s" % (conf_path, e))


def select_conf():
    # if there's only one config around, select it
    confs = sorted(glob("./*.json") + glob("./*.conf"))
    if not confs:
        raise ConfigError("Could not find any .json or .conf files in current directory.")
    if len(confs) > 1:
        raise ConfigError("Several config files found (%s); pick one with --config."
                          % ", ".join(confs))
    return confs[0]


def write_default_conf(experiment, name=None):
    if experiment not in EXPERIMENTS:
        raise ConfigError("unknown experiment %r" % experiment)
    name = name if name else experiment + ".conf"
    if os.path.exists(name):
        raise ConfigError("File already exists: %s" % name)
    conf = parse_config({"experiment": experiment}).to_dict()
    if name.endswith(".json"):
        with open(name, "w") as f:
            json.dump(conf, f, indent=2, sort_keys=True)
            f.write("\n")
        return name
    config = ConfigObj(name, unrepr=True)
    for k in TOP_KEYS:
        config[k] = conf[k]
    config.write()
    return name


def flatten(conf):
    """ the top-level knobs interface inputs may carry directly """
    d = conf.to_dict() if isinstance(conf, ExperimentConfig) else dict(conf)
    return {"seed": d.get("seed"), "workers": d.get("workers"),
            "strict": d.get("strict"), "config": d}


def apply_dict_to_obj(the_d, obj, skip_names=()):
    if not the_d:
        return
    for name, val in the_d.items():
        if name in skip_names or "traits" not in dir(obj) or name not in obj.traits().keys():
            continue
        if val is None:
            continue
        setattr(obj, name, val)
