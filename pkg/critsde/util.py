import hashlib

import numpy as np

from critsde.errors import FitError

SEED_MASK = (1 << 64) - 1


def int_or_none(s):
    try:
        return int(s)
    except (TypeError, ValueError):
        return None


def seed_or_none(s):
    """ parses a u64 seed, None if it is not one """
    n = int_or_none(s)
    if n is None or n < 0 or n > SEED_MASK:
        return None
    return n


def derive_seed(seed, *tags):
    """ a new 64-bit seed that depends on seed and the integer tags only """
    ss = np.random.SeedSequence([int(seed) & SEED_MASK] + [int(t) for t in tags])
    return int(ss.generate_state(1, np.uint64)[0])


def sha256_file(path, chunk=1 << 16):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        block = f.read(chunk)
        while block:
            h.update(block)
            block = f.read(chunk)
    return h.hexdigest()


def fmt(v):
    """ full precision text for csv cells; repr round-trips doubles """
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def loglog_slope(x, y, min_points=3):
    """ least squares slope of log(y) against log(x)
    return: (slope, intercept)
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if keep.sum() < min_points:
        raise FitError("need at least %d positive points for a log-log fit, got %d"
                       % (min_points, keep.sum()))
    slope, intercept = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(slope), float(intercept)
