import math

import numpy as np
import pytest

from nubesim import kernels
from nubesim.geometric import (
    RggSpec,
    Window,
    add_one_cost,
    count_subgraphs,
    concentration_c_rgg,
    dump_points_csv,
    estimate_poincare_terms,
    make_spec,
    poisson_tail_bound,
    sample_counts,
    sample_ppp,
    sample_ppp_batch,
    sample_statistic,
    second_diff,
    uniform_bound_poisson,
    unit_ball_volume,
    variance_lower_bound,
)
from nubesim.graphs import NAMED_PATTERNS, PatternGraph
from nubesim.rng import stream

EDGE = NAMED_PATTERNS["edge"]
TRI = NAMED_PATTERNS["triangle"]
UNIT = Window.unit(2)


def test_window():
    with pytest.raises(ValueError):
        Window((0.0, 0.0), (1.0, 0.0))
    w = Window((0.0, -1.0), (2.0, 1.0))
    assert w.volume == 4.0 and w.dim == 2
    assert w.contains([1.0, 0.0]) and not w.contains([3.0, 0.0])


def test_ppp_count_moments():
    pts, off = sample_ppp_batch(stream(1, 0), UNIT, 100.0, 100_000)
    c = np.diff(off)
    se_mean = math.sqrt(100 / c.size)
    assert abs(c.mean() - 100) <= 5 * se_mean
    se_var = math.sqrt((c.var() ** 2) * 2 / c.size + 100 / c.size)
    assert abs(c.var(ddof=1) - 100) <= 5 * se_var
    assert np.all((pts >= 0) & (pts <= 1))


def test_ppp_single_and_guard():
    x = sample_ppp(UNIT, 30.0, seed=4)
    assert x.shape[1] == 2
    with pytest.raises(MemoryError):
        sample_ppp(UNIT, 1e9, seed=0)


def test_count_examples():
    r = 0.1
    line = np.array([[0.1, 0.5], [0.2, 0.5], [0.3, 0.5]])
    # spacing r up to rounding; nudge inward so both adjacent pairs are at distance <= r
    line[1, 0] -= 1e-12
    line[2, 0] -= 2e-12
    assert count_subgraphs(line, r, EDGE) == 2
    tri = np.array([[0.5, 0.5], [0.52, 0.5], [0.5, 0.52]])
    assert count_subgraphs(tri, r, TRI) == 1
    square = np.array([[0.5, 0.5], [0.51, 0.5], [0.5, 0.51], [0.51, 0.51]])
    assert count_subgraphs(square, r, TRI) == 4
    assert count_subgraphs(np.array([[0.5, 0.5], [0.5, 0.5]]), r, EDGE) == 0


def test_add_one_cost_examples():
    spec = RggSpec(UNIT, 50.0, 0.1, EDGE, std_dev=2.0)
    pts = np.array([[0.5, 0.5], [0.52, 0.5], [0.5, 0.53], [0.9, 0.9]])
    assert add_one_cost(spec, pts, [0.1, 0.1]) == 0.0
    assert add_one_cost(spec, pts, [0.51, 0.51]) == 1.5
    linear = RggSpec(UNIT, 50.0, 0.1, NAMED_PATTERNS["point"])
    assert add_one_cost(linear, pts, [0.3, 0.3]) == 1.0
    with pytest.raises(ValueError):
        add_one_cost(spec, pts, [1.5, 0.5])


def test_second_diff_examples():
    spec = RggSpec(UNIT, 50.0, 0.1, EDGE, std_dev=4.0)
    pts = np.array([[0.5, 0.5]])
    assert second_diff(spec, pts, [0.3, 0.3], [0.35, 0.3]) == 0.25
    assert second_diff(spec, pts, [0.3, 0.3], [0.45, 0.3]) == 0.0
    linear = RggSpec(UNIT, 50.0, 0.1, NAMED_PATTERNS["point"])
    assert second_diff(linear, pts, [0.3, 0.3], [0.31, 0.3]) == 0.0


@pytest.mark.parametrize("name", ["edge", "path3", "triangle"])
def test_incremental_matches_recount(name):
    pat = NAMED_PATTERNS[name]
    spec = RggSpec(UNIT, 30.0, 0.2, pat, std_dev=1.0)
    gen = stream(77, 0)
    for _ in range(500 // 3 + 1):
        pts = gen.random((int(gen.integers(0, 41)), 2))
        x, y = gen.random(2), gen.random(2)
        base = count_subgraphs(pts, spec.radius, pat)
        with_x = count_subgraphs(np.vstack([pts, x]), spec.radius, pat)
        with_y = count_subgraphs(np.vstack([pts, y]), spec.radius, pat)
        with_xy = count_subgraphs(np.vstack([pts, x, y]), spec.radius, pat)
        assert add_one_cost(spec, pts, x) == with_x - base
        assert second_diff(spec, pts, x, y) == with_xy - with_x - with_y + base
        assert second_diff(spec, pts, x, y) == second_diff(spec, pts, y, x)


def test_linear_functional_terms():
    t = 100.0
    spec, _ = make_spec(UNIT, t, 0.05, NAMED_PATTERNS["point"])
    terms = estimate_poincare_terms(spec, outer=200, inner=20, seed=3)
    assert terms.a1 == terms.a2 == terms.a4 == terms.a5 == 0.0
    assert abs(terms.a3 - 1 / t) <= 3 * terms.stderr3 + 1e-12
    assert uniform_bound_poisson(terms) == pytest.approx(0.2)


def test_tiny_radius_terms_vanish():
    spec = RggSpec(UNIT, 50.0, 1e-9, EDGE, std_mean=0.0, std_dev=1.0)
    terms = estimate_poincare_terms(spec, outer=50, inner=10, seed=1)
    assert terms.terms == (0.0,) * 5


def _augment(pts, off, extra):
    """Append the points of ``extra`` to every configuration of a batch."""
    out_pts, out_off = pts, off
    for x in extra:
        out_pts = np.insert(out_pts, out_off[1:], x, axis=0)
        out_off = out_off + np.arange(out_off.size)
    return np.ascontiguousarray(out_pts), out_off


def _brute_terms(spec, outer, inner, seed):
    """Naive estimator: every difference from full recounts of augmented configurations."""
    gen = stream(seed, 0)
    m = spec.mean_points
    sd = spec.std_dev
    rows = []
    for _ in range(outer):
        x1, x2, x3 = spec.window.uniform(gen, 3)
        pts, off = sample_ppp_batch(gen, spec.window, spec.intensity, inner)

        def F(*extra):
            p, o = _augment(pts, off, extra)
            return kernels.pair_counts(p, o, spec.radius) / sd

        f0 = F()
        f1, f2, f3 = F(x1), F(x2), F(x3)
        d1, d2 = f1 - f0, f2 - f0
        s13 = F(x1, x3) - f1 - f3 + f0
        s23 = F(x2, x3) - f2 - f3 + f0
        s12 = F(x1, x2) - f1 - f2 + f0
        rows.append([
            math.sqrt(np.mean(d1**2 * d2**2)) * math.sqrt(np.mean(s13**2 * s23**2)) * m**3,
            np.mean(s13**2 * s23**2) * m**3,
            np.mean(d1**4) * m,
            6 * math.sqrt(np.mean(d1**4)) * math.sqrt(np.mean(s12**4)) * m**2,
            3 * np.mean(s12**4) * m**2,
        ])
    rows = np.array(rows)
    return rows.mean(axis=0), rows.std(axis=0, ddof=1) / math.sqrt(outer)


@pytest.mark.slow
def test_terms_match_brute_force():
    spec, _ = make_spec(UNIT, 50.0, 0.15, EDGE, n_pilot=50_000, seed=8)
    est = estimate_poincare_terms(spec, outer=2000, inner=200, seed=9)
    mean, se = _brute_terms(spec, 2000, 200, seed=10)
    for a, sa, b, sb in zip(est.terms, est.stderrs, mean, se):
        assert abs(a - b) <= 3 * math.hypot(sa, sb)
    meta = est.mc_meta
    assert meta["outer"] == 2000 and meta["inner"] == 200 and meta["seed"] == 9
    assert "jackknife_bias_a1" in meta


def test_terms_json_roundtrip():
    import json

    spec = RggSpec(UNIT, 30.0, 0.1, EDGE, std_mean=5.0, std_dev=2.0)
    terms = estimate_poincare_terms(spec, outer=20, inner=10, seed=2)
    d = json.loads(terms.to_json())
    assert d["a3"] == terms.a3 and d["mc_meta"]["outer"] == 20


def test_uniform_bound_poisson():
    assert uniform_bound_poisson((0, 0, 0.01, 0, 0)) == pytest.approx(0.2)
    assert uniform_bound_poisson((0, 0, 0, 0, 0)) == 0.0
    assert uniform_bound_poisson((0.04, 0, 0, 0, 0)) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        uniform_bound_poisson((-1, 0, 0, 0, 0))


def test_variance_lower_bound():
    assert variance_lower_bound(2, 1.0, 100.0, 0.1, 2) == pytest.approx(100 * math.pi)
    assert variance_lower_bound(2, 1.0, 100.0, 0.0, 2) == 0.0
    vals = [variance_lower_bound(3, 1.0, t, 0.1, 2) for t in (10, 20, 40, 80)]
    assert np.all(np.diff(vals) > 0)


def test_concentration_c_rgg():
    r = math.sqrt(1 / (100 * math.pi))
    assert concentration_c_rgg(2, 1.0, 100.0, r, 2, 1.0) == pytest.approx(10 / 64)
    a = concentration_c_rgg(2, 0.25, 100.0, 0.05, 2, 0.1)
    b = concentration_c_rgg(2, 0.5, 100.0, 0.05, 2, 0.1)
    assert b == pytest.approx(math.sqrt(2) * a)
    lo = concentration_c_rgg(2, 1.0, 100.0, r * (1 - 1e-9), 2, 1.0)
    hi = concentration_c_rgg(2, 1.0, 100.0, r * (1 + 1e-9), 2, 1.0)
    assert lo == pytest.approx(hi, rel=1e-6)


def test_poisson_tail_bound():
    assert poisson_tail_bound(1e-12, 2, 1.0) == pytest.approx(2.0)
    # (c z)^(1/q) = 4^(1/2) = 2, so the value is 2 exp(-1/2)
    assert poisson_tail_bound(4.0, 2, 1.0) == pytest.approx(2 * math.exp(-0.5))
    z = np.linspace(0.01, 30, 300)
    assert np.all(np.diff(poisson_tail_bound(z, 3, 0.7)) <= 0)


def test_unit_ball_volume():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_standardized_statistic_moments():
    spec, meta = make_spec(UNIT, 50.0, 0.1, EDGE, n_pilot=100_000, seed=1)
    assert meta["pilot"] == "monte_carlo" and meta["pilot_samples"] == 100_000
    x = sample_statistic(spec, 100_000, seed=2)
    assert abs(x.mean()) <= 5 / math.sqrt(x.size)
    se_var = np.std(x**2, ddof=1) / math.sqrt(x.size)
    assert abs(x.var(ddof=1) - 1) <= 5 * se_var


def test_variance_shape_fitted_v():
    # empirical v = Var S / max-branch; it should be positive and of stable size over the grid
    vs = []
    for t, r in [(30.0, 0.1), (50.0, 0.1), (50.0, 0.15), (100.0, 0.08)]:
        c = sample_counts(UNIT, t, r, EDGE, 20_000, seed=int(t * 100 + r * 1000))
        vs.append(c.var(ddof=1) / variance_lower_bound(2, 1.0, t, r, 2))
    assert min(vs) > 0 and max(vs) / min(vs) < 10


def test_statistic_deterministic_across_workers():
    spec = RggSpec(UNIT, 20.0, 0.1, TRI, std_mean=1.0, std_dev=1.0)
    a = sample_statistic(spec, 3000, seed=5, chunk=500)
    b = sample_statistic(spec, 3000, seed=5, chunk=500, workers=2)
    assert a.tobytes() == b.tobytes()


def test_dump_points(tmp_path):
    pts = stream(0, 0).random((5, 2))
    path = tmp_path / "pts.csv"
    dump_points_csv(pts, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x1,x2" and len(lines) == 6
    assert np.allclose(np.loadtxt(path, delimiter=",", skiprows=1), pts, rtol=0, atol=0)
