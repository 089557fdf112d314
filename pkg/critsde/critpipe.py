#!/usr/bin/env python
# encoding: utf-8

"""
critpipe.py

Command line launcher for the critsde experiments.
"""

import getopt
import os
import sys

from critsde.config import (EXPERIMENTS, get_config_dict, select_conf,
                            write_default_conf)
from critsde.errors import ConfigError, CritError
from critsde.util import int_or_none, seed_or_none

help_message = """
Runs one critsde experiment from a config file and writes its tables, JSON
reports, gnuplot scripts and a manifest (files with sha256 digests, and the
pass/fail state of every check) to an output directory. You can also import
critsde.workflows.run and drive experiments from your own code.

Usage
-----
critpipe.py [options] <experiment>

Experiments
-----------
%s

Commands
--------
-h, --help
    Prints out this message.
-i, --init
    Writes a starter config for <experiment> to the current directory
    (<experiment>.conf, or the name given with -c).

Parameters
----------
-c, --config (path)
    The config file to use, .json or .conf. Defaults to the only config file
    in the current directory.
-o, --out (path)
    The directory for the artifacts. Default is the current directory.
-s, --seed (u64)
    Overrides the config seed.
-n, --workers (integer)
    Number of worker processes. Results do not depend on it.
--strict
    Escalates kernel truncation warnings to errors.

Exit status: 0 when every check passed, 1 when a check failed, 2 for usage or
config errors.
""" % "\n".join("    " + e for e in EXPERIMENTS)


class Usage(Exception):
    def __init__(self, msg=help_message):
        self.msg = msg


def main(argv=None):
    if argv is None:
        argv = sys.argv
    try:
        try:
            opts, args = getopt.getopt(argv[1:], "hic:o:s:n:",
                                       ["help", "init", "config=", "out=", "seed=",
                                        "workers=", "strict"])
        except getopt.error as msg:
            raise Usage(msg="\n" + str(msg))
        # option processing
        init = False
        c_file = None
        out_dir = os.getcwd()
        seed = None
        workers = None
        strict = None
        for option, value in opts:
            if option in ("-h", "--help"):
                raise Usage()
            if option in ("-i", "--init"):
                init = True
            if option in ("-c", "--config"):
                c_file = value
            if option in ("-o", "--out"):
                out_dir = value
            if option in ("-s", "--seed"):
                seed = seed_or_none(value)
                if seed is None:
                    raise Usage(msg="Seed must be an unsigned 64-bit integer, got %r." % value)
            if option in ("-n", "--workers"):
                workers = int_or_none(value)
                if workers is None or workers < 1:
                    raise Usage(msg="Workers must be a positive integer, got %r." % value)
            if option == "--strict":
                strict = True
        if len(args) > 1:
            raise Usage(msg="Give a single experiment, got: %s" % " ".join(args))
        experiment = args[0] if args else None
        if experiment is not None and experiment not in EXPERIMENTS:
            raise Usage(msg="Unknown experiment %r." % experiment)
        if init:
            if experiment is None:
                raise Usage(msg="--init needs an experiment name.")
            print("wrote %s" % write_default_conf(experiment, c_file))
            return 0
        # select config file
        if not c_file:
            try:
                c_file = select_conf()
            except ConfigError as e:
                raise Usage(msg=str(e))
        conf = get_config_dict(c_file)
        if experiment is not None:
            if conf.get("experiment", experiment) != experiment:
                raise Usage(msg="%s configures %r, not %r."
                            % (c_file, conf.get("experiment"), experiment))
            conf["experiment"] = experiment
        from critsde.workflows import run
        status, manifest = run(conf, out_dir, seed=seed, workers=workers, strict=strict)
        for check in manifest.checks:
            print("%-28s %s" % (check["name"], "pass" if check["pass"] else "FAIL"))
        if manifest.meta.get("diagnostic"):
            print(manifest.meta["diagnostic"])
        return status
    except ConfigError as err:
        return _complain(str(err))
    except Usage as err:
        return _complain(err.msg)
    except (CritError, RuntimeError) as err:
        print("critpipe: %s" % err, file=sys.stderr)
        return 1


def _complain(msg):
    f_str = os.path.basename(sys.argv[0]) + ":"
    lfs = len(f_str)
    f_str = "%s\n%s\n%s\n" % ("-" * lfs, f_str, "-" * lfs)
    print(f_str + str(msg), file=sys.stderr)
    print("-------------------\nfor help use --help\n-------------------", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
