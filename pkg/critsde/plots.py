""" gnuplot scripts for the tabular artifacts of a manifest. Scripts only
reference the CSVs (by path relative to the script); no data is copied in.
"""
import os

from nipype import logging

from critsde.errors import FitError, ManifestError
from critsde.storage import read_csv
from critsde.util import loglog_slope

utlogger = logging.getLogger("nipype.utils")

# role -> how to draw it; loglog roles get a fitted-slope label
PLOT_ROLES = {
    "error_decay": {"xlabel": "n", "ylabel": "sup_t t^{1/q} ||f_n(t) - f(t)||_p",
                    "using": "1:2", "style": "linespoints", "loglog": True},
    "ks_decay": {"xlabel": "n", "ylabel": "KS distance", "using": "1:2",
                 "style": "linespoints", "loglog": True},
    "modulus": {"xlabel": "gap", "ylabel": "max_t E|X_{t+gap} - X_t|", "using": "1:2",
                "style": "linespoints", "loglog": True},
    "counterexample": {"xlabel": "n", "ylabel": "max_k sup_t ||f_n - f||_2^2",
                       "using": "1:3", "style": "linespoints", "loglog": False,
                       "logx": True},
    "density": {"xlabel": "y", "ylabel": "density", "using": "1:2",
                "style": "lines", "loglog": False},
    "probe": {"xlabel": "x", "ylabel": "P_{s,t} f(x)", "using": "1:2:3",
              "style": "yerrorbars", "loglog": False},
    "zmap": {"xlabel": "x", "ylabel": "Phi(x)", "using": "1:2",
             "style": "lines", "loglog": False},
    "profile": {"xlabel": "t", "ylabel": "sup_x |u(t, x)|", "using": "1:2",
                "style": "linespoints", "loglog": False},
}


def _slope_label(csv_path):
    _, rows = read_csv(csv_path)
    try:
        slope, _ = loglog_slope([r[0] for r in rows], [r[1] for r in rows])
    except FitError:
        return None
    return "fitted slope = %.4f" % slope


def plot_script(csv_path, role, script_path):
    spec = PLOT_ROLES[role]
    base = os.path.splitext(os.path.basename(csv_path))[0]
    rel = os.path.relpath(csv_path, os.path.dirname(script_path) or ".")
    lines = ["# %s: %s" % (role, rel),
             'set datafile separator ","',
             "set key autotitle columnhead",
             "set terminal pngcairo size 800,600",
             'set output "%s.png"' % base,
             'set xlabel "%s"' % spec["xlabel"],
             'set ylabel "%s"' % spec["ylabel"]]
    if spec["loglog"]:
        lines.append("set logscale xy")
        label = _slope_label(csv_path)
        if label:
            lines.append('set label 1 "%s" at graph 0.05, graph 0.92' % label)
    elif spec.get("logx"):
        lines.append("set logscale x")
    lines.append('plot "%s" using %s with %s' % (rel, spec["using"], spec["style"]))
    with open(script_path, "w") as f:
        f.write("\n".join(lines) + "\n")
    return script_path


def emit_plots(manifest, out_dir=None):
    """ one .gp script per plottable CSV; returns the script paths """
    out_dir = manifest.out_dir if out_dir is None else out_dir
    scripts = []
    for entry in manifest.files:
        role = entry["role"]
        if role not in PLOT_ROLES:
            continue
        csv_path = os.path.join(manifest.out_dir, entry["path"])
        if not os.path.exists(csv_path):
            raise ManifestError("manifest lists %s but the file is missing" % entry["path"])
        stem = os.path.splitext(os.path.basename(entry["path"]))[0]
        scripts.append(plot_script(csv_path, role, os.path.join(out_dir, stem + ".gp")))
    utlogger.info("wrote %d plot scripts to %s", len(scripts), out_dir)
    return scripts
