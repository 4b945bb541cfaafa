import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import ndtri

from nubesim.empirical import (
    SampleBatch,
    dkw_band,
    fit_rate,
    ks_distance,
    ks_report,
    moment_stderr,
    sample_moment,
    tail_prob,
    weighted_ks,
)
from nubesim.rng import stream


def test_ks_examples():
    assert ks_distance([-1.0, 1.0]) == pytest.approx(0.3413447460685429, abs=1e-12)
    assert ks_distance([0.0]) == 0.5
    with pytest.raises(ValueError):
        ks_distance([])


def test_ks_exact_quantiles():
    for m in (10, 1000, 10**6):
        q = ndtri((np.arange(1, m + 1) - 0.5) / m)
        assert abs(ks_distance(q) - 1 / (2 * m)) <= 1e-12


def test_ks_discrete_law_matches_samples():
    x = np.array([-1.0, 0.5, 0.5, 2.0])
    atoms, probs = np.array([-1.0, 0.5, 2.0]), np.array([0.25, 0.5, 0.25])
    assert ks_distance(atoms, probs) == pytest.approx(ks_distance(x), abs=1e-15)
    for k in (1, 3):
        assert weighted_ks(atoms, k, probs=probs)[0] == pytest.approx(weighted_ks(x, k)[0], abs=1e-14)


def test_weighted_examples():
    b = SampleBatch([-1.0, 1.0])
    assert weighted_ks(b, 0)[0] == ks_distance(b)
    v, z = weighted_ks(b, 3)
    assert v >= 8 * (1 - 0.8413447460685429)
    with pytest.raises(ValueError):
        weighted_ks(b, -1)


def test_weighted_regression_pin():
    x = stream(2024, 0).standard_normal(10**6)
    v, _ = weighted_ks(x, 3)
    assert math.isfinite(v) and v < 10
    # realized value for this seed; pins the candidate set against silent changes
    assert v == pytest.approx(0.00538332939738004, rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-8, 8), min_size=1, max_size=60))
def test_weighted_properties(values):
    b = SampleBatch(values)
    assert weighted_ks(b, 0)[0] == ks_distance(b)
    prev = -1.0
    for k in range(0, 5):
        v = weighted_ks(b, k)[0]
        assert v >= prev
        prev = v
    assert ks_distance(b) <= 1


def test_ks_report_fields():
    b = SampleBatch(stream(1, 0).standard_normal(5000))
    rep = ks_report(b)
    assert set(rep.weighted) == {1, 2, 3}
    assert all(rep.weighted[k] >= rep.uniform for k in rep.weighted)
    assert rep.dkw_band == pytest.approx(dkw_band(5000, 1e-3))


def test_dkw_covers_normal_samples():
    n = 10**5
    band = dkw_band(n, 1e-3)
    misses = sum(ks_distance(stream(seed, 7).standard_normal(n)) > band for seed in range(100))
    assert misses == 0


def test_tail_prob():
    x = [-1.0, 0.0, 2.0]
    assert tail_prob(x, -5) == 1.0
    assert tail_prob(x, 5) == 0.0
    assert tail_prob(x, 1.0, two_sided=True) == pytest.approx(2 / 3)
    z = np.linspace(-3, 3, 50)
    y = stream(3, 0).standard_normal(1000)
    t = [tail_prob(y, v) for v in z]
    assert np.all(np.diff(t) <= 0)


def test_sample_moments():
    assert sample_moment([-1.0, 1.0], 1) == 0
    assert sample_moment([-1.0, 1.0], 2) == 1
    y = stream(4, 0).standard_normal(10**6)
    assert abs(sample_moment(y, 6) - 15) <= 3 * moment_stderr(y, 6)
    with pytest.raises(ValueError):
        sample_moment(y, 0)


def test_dkw_band():
    assert dkw_band(200000, 0.01) == pytest.approx(math.sqrt(math.log(200) / 400000), rel=1e-14)
    assert dkw_band(200000, 0.01) == pytest.approx(0.003640, abs=1e-6)
    assert dkw_band(4000, 0.1) == pytest.approx(dkw_band(1000, 0.1) / 2, rel=1e-14)
    with pytest.raises(ValueError):
        dkw_band(10, 2.0)


def test_fit_rate():
    n = np.array([16, 64, 256, 1024])
    fit = fit_rate(zip(n, n**-0.5))
    assert fit.slope == pytest.approx(-0.5, abs=1e-12) and fit.r_squared == pytest.approx(1.0)
    assert fit_rate(zip(n, 3 * n**-0.2)).slope == pytest.approx(-0.2, abs=1e-12)
    eps = stream(5, 0).normal(0, 0.02, n.size)
    assert abs(fit_rate(zip(n, n**-0.5 * np.exp(eps))).slope + 0.5) <= 0.05
    with pytest.raises(ValueError):
        fit_rate([(1, 1), (2, 0.5)])


def test_batch_roundtrip(tmp_path):
    b = SampleBatch(stream(9, 0).standard_normal(1000), seed=9, model_tag="fbm")
    assert np.all(np.diff(b.values) >= 0) and b.n_samples == 1000
    path = tmp_path / "batch.bin"
    b.save(path)
    raw = path.read_bytes()
    assert len(raw) == 8 + 8 * 1000
    assert int.from_bytes(raw[:8], "little") == 1000
    c = SampleBatch.load(path)
    assert np.array_equal(b.values, c.values) and c.seed == 9 and c.model_tag == "fbm"
