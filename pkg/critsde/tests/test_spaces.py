import numpy as np
import pytest

from critsde.catalog import FieldFunction
from critsde.errors import DataError, DomainError, ResolutionError
from critsde.spaces import (ExponentPair, MollifierSpec, SpaceTimeField, classify_space,
                            continuity_gap, counterexample_field, counterexample_table,
                            counterexample_window, indicator_cells, log_time_grid,
                            lp_norm, lq_membership, mollification_profile, mollifier_kernel,
                            mollifier_mass, mollify, reverse_time, solver_time_grid,
                            space_axis, summarize_profile, symmetric_time_grid,
                            weighted_norm)


def _field(times, x, values, T=1.0):
    return SpaceTimeField(times=times, x=x, values=values, d=1, T=T)


def test_critical_pair():
    e = ExponentPair.critical(4.0)
    assert e.p == pytest.approx(2.0)
    assert e.is_critical
    assert ExponentPair(p=3.0, q=6.0).is_critical
    assert not ExponentPair(p=2.0, q=6.0).is_critical
    assert ExponentPair(p=2.0).p_conj == pytest.approx(2.0)


@pytest.mark.parametrize("kwargs", [{"p": 0.5}, {"q": np.inf}, {"T": 0.0}, {"d": 0}])
def test_exponent_pair_rejects(kwargs):
    with pytest.raises(DomainError):
        ExponentPair(**kwargs)


def test_field_validation(axis):
    good = np.zeros((3, axis.size))
    _field([0.1, 0.2, 0.3], axis, good)
    with pytest.raises(DomainError):
        _field([0.1, 0.1, 0.3], axis, good)
    with pytest.raises(DataError):
        _field([0.1, 0.2], axis, good)
    bad = good.copy()
    bad[1, 4] = np.nan
    with pytest.raises(DataError):
        _field([0.1, 0.2, 0.3], axis, bad)


def test_gaussian_l2_norm(axis, gaussian):
    # int N(0,1)^2 = 1 / (2 sqrt(pi)) = 0.28209...
    assert lp_norm(gaussian, axis[1] - axis[0], 2.0) ** 2 == pytest.approx(
        1.0 / (2.0 * np.sqrt(np.pi)), rel=1e-9)
    assert lp_norm(gaussian, axis[1] - axis[0], np.inf) == pytest.approx(
        1.0 / np.sqrt(2 * np.pi))


def test_weighted_norm_of_weighted_field(exps, axis, gaussian):
    times = symmetric_time_grid(exps.T)
    values = np.multiply.outer(times ** -0.25, gaussian)
    f = _field(times, axis, values)
    assert weighted_norm(f, exps) == pytest.approx(lp_norm(gaussian, f.h, 2.0), rel=1e-12)
    assert continuity_gap(f, exps) == pytest.approx(0.0, abs=1e-12)


def test_weighted_norm_is_a_norm(exps, axis, gaussian):
    times = symmetric_time_grid(exps.T, n_uniform=8, n_refine=4)
    rng = np.random.default_rng(5)
    f = _field(times, axis, np.multiply.outer(times ** -0.25, gaussian))
    g = _field(times, axis, rng.standard_normal((times.size, axis.size)))
    nf = weighted_norm(f, exps)
    for c in (-2.0, 0.5, 3.0):
        assert weighted_norm(c * f, exps) == pytest.approx(abs(c) * nf, rel=1e-12)
    assert weighted_norm(0.0 * f, exps) == 0.0
    assert weighted_norm(f + g, exps) <= nf + weighted_norm(g, exps) + 1e-12
    assert weighted_norm(f - g, exps) <= nf + weighted_norm(g, exps) + 1e-12


def test_classification(exps, axis, gaussian):
    times = symmetric_time_grid(exps.T)
    weighted = classify_space(_field(times, axis, np.multiply.outer(times ** -0.25, gaussian)),
                              exps)
    assert weighted.cq_norm == pytest.approx(weighted.linf_q_norm)
    assert not weighted.in_c0q
    # small stationary field: t_min^{1/4} * 0.005 * ||phi||_2 is below the tolerance
    small = classify_space(_field(times, axis, 0.005 * np.tile(gaussian, (times.size, 1))),
                           exps)
    assert small.in_c0q
    assert small.cq_norm is not None
    with pytest.raises(DomainError):
        classify_space(_field(solver_time_grid(1.0), axis,
                              np.zeros((solver_time_grid(1.0).size, axis.size))), exps)


def test_reverse_time(axis, gaussian):
    times = symmetric_time_grid(1.0)
    values = np.multiply.outer(times, gaussian)
    f = _field(times, axis, values)
    r = reverse_time(f)
    assert np.allclose(r.values[0], times[-1] * gaussian)
    assert np.array_equal(reverse_time(r).values, f.values)
    g = _field(np.linspace(0.1, 0.8, 5), axis, np.zeros((5, axis.size)))
    with pytest.raises(DomainError):
        reverse_time(g)
    assert reverse_time(g, resample=True).values.shape == (5, axis.size)


def test_indicator_cells_exact_power_integral():
    x = np.linspace(0.0, 4.0, 401)
    v = indicator_cells(x, 1.003, 2.517, height=3.0, p=2.0)
    assert np.sum(v ** 2) * (x[1] - x[0]) == pytest.approx(9.0 * (2.517 - 1.003), rel=1e-12)


@pytest.mark.parametrize("profile", ["bump", "cosine"])
def test_mollifier_mass(profile):
    moll = MollifierSpec(n=8, profile=profile)
    assert mollifier_mass(moll) == pytest.approx(1.0, rel=1e-10)
    h = 1.0 / 256
    assert mollifier_kernel(moll, h).sum() * h == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ResolutionError):
        mollifier_kernel(MollifierSpec(n=200, profile=profile), h)


def test_mollify_preserves_mass(axis, gaussian):
    f = _field(np.array([0.5]), axis, gaussian[np.newaxis])
    fn = mollify(f, MollifierSpec(n=4))
    h = f.h
    assert np.sum(fn.values) * h == pytest.approx(np.sum(gaussian) * h, rel=1e-10)


def test_mollification_converges(exps):
    x = space_axis(8.0, 1.0 / 512)
    times = symmetric_time_grid(exps.T, n_uniform=8, n_refine=4)
    field = FieldFunction(kind="weighted", profile="gaussian", exps=exps).sample(times, x)
    rows = mollification_profile(field, [4, 16, 64], exps)
    summary = summarize_profile(rows)
    assert summary["strictly_decreasing"]
    assert summary["converged"]
    assert summary["slope"] < -1.5


def test_counterexample_lower_bound():
    k_max = 8
    x = np.linspace(0.0, 10.0, 2561)
    field = counterexample_field(x, k_max)
    norms = lp_norm(field.values, field.h, 2.0)
    assert norms == pytest.approx(np.ones(k_max), rel=1e-9)
    rows = counterexample_table(field, [4, 8, 16])
    assert [r[0] for r in rows] == [4, 8, 16]
    assert min(r[2] for r in rows) >= 0.23


def test_counterexample_resolution():
    with pytest.raises(ResolutionError):
        counterexample_field(np.linspace(0.0, 10.0, 101), 8)
    assert counterexample_window(0.0) == 1
    assert counterexample_window(0.5) == 2
    assert counterexample_window(0.7) == 3


def test_counterexample_is_not_cq():
    k_max = 8
    ks = np.arange(1, k_max + 1, dtype=float)
    times = (ks - 1) / ks + 0.5 / (ks * (ks + 1))
    field = counterexample_field(np.linspace(0.0, 10.0, 2561), k_max, times)
    m = classify_space(field, ExponentPair(p=2.0, q=4.0, T=1.0))
    assert m.cq_norm is None
    assert m.linf_q_norm <= 1.0 + 1e-9


def test_mollification_profile_needs_cq():
    k_max = 8
    ks = np.arange(1, k_max + 1, dtype=float)
    times = (ks - 1) / ks + 0.5 / (ks * (ks + 1))
    field = counterexample_field(np.linspace(0.0, 10.0, 2561), k_max, times)
    exps = ExponentPair(p=2.0, q=4.0, T=1.0)
    # bounded in L^inf_q, so only the continuity requirement rejects it
    assert np.isfinite(weighted_norm(field, exps))
    with pytest.raises(DomainError):
        mollification_profile(field, [4, 16], exps)
    x = space_axis(4.0, 1.0 / 64)
    with pytest.raises(DomainError):
        mollification_profile(_field(np.array([0.0, 0.5]), x, np.ones((2, x.size))), [4],
                              exps)


@pytest.mark.parametrize("beta,member", [(0.2, False), (0.5, True)])
def test_log_damped_membership(beta, member):
    exps = ExponentPair(p=2.0, q=4.0, T=1.0)
    times = log_time_grid(1.0, 1e-300, per_decade=4)
    x = space_axis(4.0, 0.25)
    f = FieldFunction(kind="log_damped", profile="gaussian", beta=beta, scale=1e-3,
                      exps=exps).sample(times, x)
    report = lq_membership(f, exps)
    assert report["member"] is member
    assert report["decay_exponent"] == pytest.approx(4 * beta, abs=0.15)


def test_weighted_field_not_in_lq():
    exps = ExponentPair(p=2.0, q=4.0, T=1.0)
    times = log_time_grid(1.0, 1e-60, per_decade=4)
    x = space_axis(4.0, 0.25)
    f = FieldFunction(kind="weighted", profile="gaussian", exps=exps).sample(times, x)
    assert not lq_membership(f, exps)["member"]
    with pytest.raises(DomainError):
        lq_membership(f.with_values(f.values[-9:], times=times[-9:]), exps)
