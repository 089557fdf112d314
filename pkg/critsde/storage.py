""" Artifact files. Fields and ensembles are stored as a JSON header next to a
CSV table; every experiment ends with a manifest listing the files it wrote
(with sha256 digests) and the checks it ran.

Cells are written with util.fmt, so re-running a seeded experiment rewrites
the tables byte for byte. The only wall-clock value lives in the manifest.
"""
import csv
import datetime
import json
import os

import numpy as np
from nipype import logging
from traits.api import HasStrictTraits, Dict, Directory, List

from critsde.errors import DataError, ManifestError
from critsde.sde import BLOCK_SIZE, PathEnsemble
from critsde.spaces import SpaceTimeField
from critsde.util import fmt, sha256_file

utlogger = logging.getLogger("nipype.utils")

MANIFEST_NAME = "manifest.json"


def _jsonable(obj):
    if isinstance(obj, dict):
        return dict((str(k), _jsonable(v)) for k, v in obj.items())
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # json has no inf/nan; keep them readable
        return v if np.isfinite(v) else repr(v)
    return obj


def write_json(path, obj):
    with open(path, "w") as f:
        json.dump(_jsonable(obj), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_json(path):
    with open(path) as f:
        return json.load(f)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) if v is not None else "" for v in row])
    return path


def read_csv(path):
    """ return: (header, rows of floats) """
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [[float(v) if v != "" else np.nan for v in row] for row in reader]
    return header, rows


def _stem(path):
    return path[:-5] if path.endswith(".json") else path


""" fields """

def save_field(field, path):
    """ writes <stem>.json (grid and shape) and <stem>.csv with one row per
    grid value: t, [component,] x_1..x_d, value
    """
    stem = _stem(path)
    header = {"kind": "field", "times": field.times, "x": field.x, "d": field.d,
              "T": field.T, "n_components": field.n_components,
              "table": os.path.basename(stem) + ".csv"}
    write_json(stem + ".json", header)
    names = ["t"] + (["component"] if field.is_vector else []) + \
        ["x%d" % (i + 1) for i in range(field.d)] + ["value"]
    vals = field.values

    def rows():
        for idx in np.ndindex(*vals.shape):
            lead = [field.times[idx[0]]]
            rest = idx[1:]
            if field.is_vector:
                lead.append(int(rest[0]))
                rest = rest[1:]
            yield lead + [field.x[i] for i in rest] + [vals[idx]]

    write_csv(stem + ".csv", names, rows())
    return stem + ".json", stem + ".csv"


def load_field(path):
    stem = _stem(path)
    header = read_json(stem + ".json")
    _, rows = read_csv(os.path.join(os.path.dirname(stem) or ".", header["table"]))
    times = np.asarray(header["times"], dtype=float)
    x = np.asarray(header["x"], dtype=float)
    d, nc = int(header["d"]), int(header["n_components"])
    shape = (times.size,) + ((nc,) if nc else ()) + (x.size,) * d
    values = np.array([r[-1] for r in rows], dtype=float)
    if values.size != int(np.prod(shape)):
        raise DataError("field table has %d values, header expects %s" % (values.size, shape))
    return SpaceTimeField(times=times, x=x, values=values.reshape(shape), d=d,
                          T=float(header["T"]), n_components=nc)


""" ensembles """

def save_ensemble(ens, path, block_size=BLOCK_SIZE):
    """ <stem>.json plus one CSV shard per block of paths. A shard row is
    path, the path integrals, then the state at every recorded time
    (coordinates innermost).
    """
    stem = _stem(path)
    base = os.path.basename(stem)
    names = sorted(ens.path_integrals)
    state_cols = ["x%d@%d" % (c + 1, i) for i in range(ens.times.size) for c in range(ens.d)]
    shards = []
    for k, lo in enumerate(range(0, ens.n_paths, block_size)):
        hi = min(lo + block_size, ens.n_paths)
        shard = "%s.block%04d.csv" % (stem, k)
        ints = [ens.path_integrals[n][lo:hi] for n in names]
        flat = ens.states[lo:hi].reshape(hi - lo, -1)
        write_csv(shard, ["path"] + names + state_cols,
                  ([lo + j] + [v[j] for v in ints] + flat[j].tolist() for j in range(hi - lo)))
        shards.append(os.path.basename(shard))
    header = dict(ens.header())
    header.update({"kind": "ensemble", "times": ens.times, "integrals": names,
                   "shards": shards, "stem": base})
    write_json(stem + ".json", header)
    return [stem + ".json"] + [os.path.join(os.path.dirname(stem), s) for s in shards]


def load_ensemble(path):
    stem = _stem(path)
    header = read_json(stem + ".json")
    folder = os.path.dirname(stem) or "."
    names = header["integrals"]
    times = np.asarray(header["times"], dtype=float)
    d = int(header["d"])
    rows = []
    for shard in header["shards"]:
        rows.extend(read_csv(os.path.join(folder, shard))[1])
    table = np.array(rows, dtype=float).reshape(len(rows), -1)
    k = len(names)
    states = table[:, 1 + k:].reshape(len(rows), times.size, d)
    integrals = dict((n, table[:, 1 + j]) for j, n in enumerate(names))
    return PathEnsemble(times=times, states=states, seed=int(header["seed"]),
                        n_paths=len(rows), dt_policy=header["dt_policy"],
                        path_integrals=integrals, n_excluded=int(header["n_excluded"]),
                        x0=np.asarray(header["x0"], dtype=float))


""" small tables """

def save_zmap(zmap, path):
    return write_csv(path, ["x", "phi"], zip(zmap.x, zmap.phi))


def save_density(density, path):
    return write_csv(path, ["y", "density"], density.rows())


def save_probe(rows, path):
    return write_csv(path, ["x", "estimate", "stderr"], rows)


""" manifest """

class Manifest(HasStrictTraits):
    """ {files: [{path, sha256, role}], checks: [{name, pass, value, threshold}]}
    with paths relative to out_dir.
    """
    out_dir = Directory
    files = List(Dict)
    checks = List(Dict)
    meta = Dict

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def add_file(self, path, role):
        full = path if os.path.isabs(path) else self.path(path)
        if not os.path.exists(full):
            raise ManifestError("cannot register missing file %s" % full)
        rel = os.path.relpath(full, self.out_dir)
        self.files = [f for f in self.files if f["path"] != rel]
        self.files.append({"path": rel, "sha256": sha256_file(full), "role": role})
        return rel

    def add_check(self, name, passed, value=None, threshold=None):
        self.checks.append({"name": name, "pass": bool(passed),
                            "value": _jsonable(value), "threshold": _jsonable(threshold)})

    def by_role(self, role):
        return [f for f in self.files if f["role"] == role]

    @property
    def failing(self):
        return [c["name"] for c in self.checks if not c["pass"]]

    @property
    def passed(self):
        return not self.failing

    def to_dict(self):
        return {"files": list(self.files), "checks": list(self.checks),
                "failing": self.failing, "meta": dict(self.meta),
                "written": datetime.datetime.now().isoformat()}

    def write(self, name=MANIFEST_NAME):
        path = self.path(name)
        write_json(path, self.to_dict())
        utlogger.info("manifest %s: %d files, %d checks, failing: %s", path,
                      len(self.files), len(self.checks), ", ".join(self.failing) or "none")
        return path


def load_manifest(path):
    try:
        d = read_json(path)
    except (IOError, OSError, ValueError) as e:
        raise ManifestError("cannot read manifest %s: %s" % (path, e))
    for key in ("files", "checks"):
        if not isinstance(d.get(key), list):
            raise ManifestError("manifest %s has no %r list" % (path, key))
    return Manifest(out_dir=os.path.dirname(os.path.abspath(path)), files=d["files"],
                    checks=d["checks"], meta=d.get("meta", {}))
