import numpy as np
import pytest
from scipy.stats import norm

from critsde.catalog import ProbeFunction
from critsde.errors import BandwidthError, DomainError
from critsde.sde import DriftSpec, euler_maruyama
from critsde.spaces import ExponentPair
from critsde.stats import (bandwidth_for, feller_continuity, feller_probe, gaussian_lr_norm,
                           kde, ks_distance, lr_norm_proxy, lr_space_time_proxy,
                           lr_stability)


@pytest.fixture
def normal_sample():
    return np.random.default_rng(1234).standard_normal(20000)


def test_ks_distance(normal_sample):
    assert ks_distance(normal_sample, normal_sample) == 0.0
    # 2 Phi(1/4) - 1
    shifted = np.random.default_rng(99).standard_normal(20000) + 0.5
    assert ks_distance(normal_sample, shifted) == pytest.approx(0.1974, abs=0.02)
    with pytest.raises(DomainError):
        ks_distance([], normal_sample)


def test_ks_distance_is_a_metric():
    rng = np.random.default_rng(8)
    a = rng.standard_normal(3000)
    b = rng.standard_normal(2000) + 0.2
    c = rng.standard_t(4, 2500)
    assert ks_distance(a, b) == pytest.approx(ks_distance(b, a), abs=1e-12)
    assert ks_distance(a, c) <= ks_distance(a, b) + ks_distance(b, c) + 1e-12
    assert ks_distance(b, c) <= ks_distance(b, a) + ks_distance(a, c) + 1e-12
    assert ks_distance(a, b) <= ks_distance(a, c) + ks_distance(c, b) + 1e-12


def test_kde_of_normal_sample(normal_sample):
    est = kde(normal_sample)
    assert est.mass == pytest.approx(1.0, abs=1e-6)
    assert est.bandwidth == pytest.approx(1.06 * 20000 ** -0.2, rel=0.05)
    assert est.grid.size % 2 == 1
    zero = np.argmin(np.abs(est.grid))
    assert est.values[zero] == pytest.approx(norm.pdf(0.0), abs=0.02)
    assert len(est.rows()) == est.grid.size
    # int N(0,1)^2 = 0.2821
    assert lr_norm_proxy(est, 2.0) == pytest.approx(0.2821, abs=0.01)


def test_kde_ignores_sample_order(normal_sample):
    a = kde(normal_sample)
    b = kde(normal_sample[::-1])
    assert a.grid.size == b.grid.size
    assert b.values == pytest.approx(a.values, rel=1e-9, abs=1e-12)


def test_bandwidth_rules(normal_sample):
    assert bandwidth_for(normal_sample, 0.3) == 0.3
    with pytest.raises(BandwidthError):
        bandwidth_for(normal_sample, -1.0)
    with pytest.raises(BandwidthError):
        bandwidth_for(normal_sample, "scott")
    with pytest.raises(BandwidthError):
        bandwidth_for(np.ones(500))


def test_kde_rejects_small_or_bad_samples():
    with pytest.raises(DomainError):
        kde(np.zeros(10))
    bad = np.random.default_rng(0).standard_normal(200)
    bad[3] = np.nan
    with pytest.raises(DomainError):
        kde(bad)


def test_lr_norms(normal_sample):
    assert gaussian_lr_norm(1.0, 2.0) == pytest.approx(0.28209479, rel=1e-7)
    assert gaussian_lr_norm(1.0, 3.0) == pytest.approx(0.0919, abs=1e-4)
    report = lr_stability(normal_sample, 3.0)
    assert report["stable"]
    assert report["value"] == pytest.approx(gaussian_lr_norm(1.0, 3.0), rel=0.1)
    with pytest.raises(DomainError):
        lr_norm_proxy(kde(normal_sample), 0.5)


def test_space_time_proxy():
    drift = DriftSpec(exps=ExponentPair(T=1.0))
    ens = euler_maruyama(drift, 0.0, 4000, 64, seed=4, record_stride=8)
    report = lr_space_time_proxy(ens, 2.0, 0.25)
    assert report["finite"]
    assert min(report["times"]) >= 0.25
    # int_{1/4}^1 (4 pi t)^{-1/2} dt = (1 - 1/2) / sqrt(pi)
    assert report["value"] == pytest.approx(0.5 / np.sqrt(np.pi), rel=0.1)
    with pytest.raises(DomainError):
        lr_space_time_proxy(ens, 2.0, 0.99)


def test_feller_probe_brownian():
    drift = DriftSpec(exps=ExponentPair(T=1.0))
    f = ProbeFunction(family="indicator_halfline", params={"c": 0.0})
    rows = feller_probe(drift, f, 1.0, [0.0, 1.0], 20000, seed=17, n_steps=32)
    assert rows[0][1] == pytest.approx(0.5, abs=0.015)
    assert rows[1][1] == pytest.approx(norm.cdf(-1.0), abs=0.015)
    assert rows[0][2] > 0
    with pytest.raises(DomainError):
        feller_probe(drift, ProbeFunction(family="identity"), 1.0, [0.0], 100, seed=1)


def test_feller_continuity_brownian():
    drift = DriftSpec(exps=ExponentPair(T=1.0))
    f = ProbeFunction(family="indicator_halfline")
    report = feller_continuity(drift, f, 1.0, 0.0, [0.2, 0.1, 0.05], 4096, seed=2,
                               n_steps=32)
    assert report["pass"]
    gaps = [r["max_gap"] for r in report["rows"]]
    assert gaps[0] > gaps[-1]
    assert len(report["rows"][0]["estimates"]) == 5
