"""Acceptance criteria 1-11, one verdict line each (see the terminal summary)."""
import math
import time

import numpy as np
import pytest
from scipy.special import ndtr

from nubesim import chaos, geometric, harness, rademacher as rd
from nubesim.chaos import FbmSpec
from nubesim.empirical import SampleBatch, dkw_band, fit_rate, ks_distance, tail_prob, weighted_ks
from nubesim.graphs import NAMED_PATTERNS
from nubesim.rng import stream
from nubesim.stein import lemma_constant, std_normal_cdf, stein_derivative, stein_solution

DELTA = 1e-3
N_FM = 10**6
# deterministic B-terms carry jackknife errors at rounding level
FLOAT_SLACK = 1e-9
TRI = NAMED_PATTERNS["triangle"]


def test_criterion_01_stein_grid(verdict):
    t0 = time.perf_counter()
    z = np.round(np.arange(-6.0, 6.0 + 1e-9, 0.05), 10)[:, None]
    w = np.round(np.arange(-10.0, 10.0 + 1e-9, 0.01), 10)[None, :]
    zz, ww = np.broadcast_arrays(z, w)
    keep = np.abs(ww - zz) >= 1e-6
    zz, ww = zz[keep], ww[keep]
    f = stein_solution(zz, ww)
    d = stein_derivative(zz, ww)
    resid = np.max(np.abs(d - ww * f - ((ww <= zz).astype(float) - std_normal_cdf(zz))))
    max_d, max_wf = np.max(np.abs(d)), np.max(np.abs(ww * f))
    elapsed = time.perf_counter() - t0
    ok = resid <= 1e-10 and max_d <= 1 + 1e-12 and max_wf <= 1 + 1e-12 and elapsed < 10
    verdict(1, ok, f"residual={resid:.2e} max|f'|={max_d:.6f} max|wf|={max_wf:.6f} "
                   f"points={zz.size} time={elapsed:.2f}s")
    assert ok


def test_criterion_02_lemma_scan(verdict):
    t0 = time.perf_counter()
    gen = stream(2, 0)
    ks = gen.integers(1, 6, 1000)
    c1s = 1e3 * (1.0 - gen.random(1000))  # in (0, 1e3]
    z = np.concatenate([np.linspace(-200, 200, 40001), np.geomspace(1e-8, 1e6, 2001)])
    az = np.abs(z)
    worst = 0.0
    for k, c1 in zip(ks, c1s):
        c2 = lemma_constant(int(k), float(c1)).c2
        with np.errstate(divide="ignore"):
            lhs = np.minimum(1.0, c1 / az ** (2 * k)) * (1 + az) ** (2 * k)
        worst = max(worst, float(np.max(lhs / c2)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1 + 1e-12 and elapsed < 10
    verdict(2, ok, f"max lhs/c2={worst:.12f} over 1000 draws time={elapsed:.2f}s")
    assert ok


@pytest.fixture(scope="module")
def fm_runs():
    runs = {}
    for i, h in enumerate((0.3, 0.5, 0.7)):
        for j, n in enumerate((16, 64, 256)):
            spec = FbmSpec(h, n)
            x = chaos.sample_statistic(spec, N_FM, seed=300 + 10 * i + j)
            runs[h, n] = (chaos.diagnostics(spec), SampleBatch(x, seed=300 + 10 * i + j, model_tag="fbm"))
    return runs


def test_criterion_03_fourth_moment(verdict, fm_runs):
    band = dkw_band(N_FM, DELTA)
    rows = []
    ok = True
    for (h, n), (d, b) in sorted(fm_runs.items()):
        ks = ks_distance(b)
        ok &= ks <= d.fm_bound + band
        rows.append(f"H={h},n={n}:{ks:.4f}<={d.fm_bound:.4f}+{band:.4f}")
    d100 = chaos.diagnostics(FbmSpec(0.5, 100))
    closed = abs(d100.kappa4_excess - 0.12) <= 1e-12 and abs(d100.fm_bound - 0.141421) <= 1e-6
    sim = ks_distance(chaos.sample_statistic(FbmSpec(0.5, 100), N_FM, seed=31))
    gen = stream(32, 0)
    oracle = np.concatenate([np.sum(gen.standard_normal((50_000, 100)) ** 2 - 1, axis=1) / math.sqrt(200)
                             for _ in range(N_FM // 50_000)])
    ks_oracle = ks_distance(oracle)
    match = abs(sim - ks_oracle) <= 2 * band
    ok = ok and closed and match
    verdict(3, ok, "; ".join(rows) + f"; H=0.5,n=100 excess={d100.kappa4_excess:.6f} "
                   f"bound={d100.fm_bound:.6f} sim={sim:.4f} iid-oracle={ks_oracle:.4f}")
    assert ok


def test_criterion_04_concentration(verdict, fm_runs):
    ok = True
    worst = -np.inf
    for (h, n), (d, b) in fm_runs.items():
        for z in (1.0, 2.0, 3.0):
            emp = tail_prob(b, z, two_sided=True)
            bound = chaos.gauss_tail_bound(z, 2, d.c_n)
            se = math.sqrt(max(emp * (1 - emp), 1.0 / N_FM) / N_FM)
            ok &= emp <= bound + 3 * se
            worst = max(worst, emp - bound)
    cn = chaos.diagnostics(FbmSpec(0.5, 100)).c_n
    ok = ok and abs(cn - 0.559) <= 1e-3
    verdict(4, ok, f"max(emp - bound)={worst:.4f} over 27 checks; c_n(H=0.5,n=100)={cn:.5f}")
    assert ok


def test_criterion_05_rate_fit(verdict):
    sizes = [2**e for e in range(4, 11)]
    out = {}
    for h, target in ((0.5, -0.5), (0.7, -0.2)):
        pts = []
        for n in sizes:
            x = chaos.sample_statistic(FbmSpec(h, n), 200_000, seed=500 + n + int(100 * h))
            pts.append((n, ks_distance(x)))
        out[h] = (fit_rate(pts).slope, target)
    ok = all(abs(s - t) <= 0.15 for s, t in out.values())
    verdict(5, ok, "; ".join(f"H={h}: slope={s:.3f} target={t} |diff|={abs(s - t):.3f}"
                             for h, (s, t) in out.items()))
    assert ok


def test_criterion_06_nonuniform_decay(verdict):
    n = 256
    x = np.sort(chaos.sample_statistic(FbmSpec(0.5, n), N_FM, seed=600))
    uniform = ks_distance(x)
    z = np.linspace(-4.0, 4.0, 16001)
    fz = np.searchsorted(x, z, side="right") / x.size
    gap = np.abs(fz - ndtr(z))
    curve = gap * (1 + np.abs(z)) ** 3
    a_n = chaos.berry_rate(0.5, n)
    pos = np.abs(z) >= 1e-2
    env = chaos.fbm_nonuniform_bound(np.abs(z[pos]), a_n, c=1.0)
    fitted = float(np.max(gap[pos] / env))
    ok = float(np.max(curve)) < 20 * uniform and fitted <= 1e3
    verdict(6, ok, f"max curve={np.max(curve):.4f} < 20*ks={20 * uniform:.4f}; "
                   f"fitted envelope constant={fitted:.4f} (a_n={a_n:.4f}, c=1)")
    assert ok


def _bound_stderr(terms):
    a, s = terms.terms, terms.stderrs
    parts = []
    if a[0] > 0:
        parts.append(s[0] / math.sqrt(a[0]))
    if a[1] > 0:
        parts.append(s[1] / (2 * math.sqrt(a[1])))
    if a[2] > 0:
        parts.append(s[2] / math.sqrt(a[2]))
    if a[3] + a[4] > 0:
        parts.append(math.hypot(s[3], s[4]) / math.sqrt(a[3] + a[4]))
    return math.sqrt(sum(p * p for p in parts))


def test_criterion_07_poisson_poincare(verdict):
    unit = geometric.Window.unit(2)
    lin, _ = geometric.make_spec(unit, 100.0, 0.05, NAMED_PATTERNS["point"])
    lt = geometric.estimate_poincare_terms(lin, outer=500, inner=20, seed=70)
    ok_a = (lt.a1 == lt.a2 == lt.a4 == lt.a5 == 0.0) and abs(lt.a3 - 0.01) <= 3 * lt.stderr3 + 1e-12
    rows = [f"(a) A3={lt.a3!r} others 0"]
    ok_b = True
    band = dkw_band(200_000, DELTA)
    for i, (t, r) in enumerate([(50.0, 0.1), (50.0, 0.2), (100.0, 0.1)]):
        spec, _ = geometric.make_spec(unit, t, r, "edge", n_pilot=100_000, seed=71 + i)
        x = geometric.sample_statistic(spec, 200_000, seed=81 + i)
        terms = geometric.estimate_poincare_terms(spec, outer=2000, inner=200, seed=91 + i)
        bound = geometric.uniform_bound_poisson(terms)
        se = _bound_stderr(terms)
        ks = ks_distance(x)
        ok_b &= ks <= bound + 3 * se + band
        rows.append(f"(t={t:g},r={r:g}) ks={ks:.4f} bound={bound:.3f}+-{se:.3f}")
    ok = ok_a and ok_b
    verdict(7, ok, "; ".join(rows))
    assert ok


def test_criterion_08_rademacher_exact(verdict):
    cases = [("2-runs m=%d" % m, rd.make_two_runs([1.0] * m)) for m in (4, 8, 12)]
    cases += [("ER n=%d p=%g" % (n, p), rd.make_er(n, p, TRI)) for n in (5, 6) for p in (0.3, 0.5)]
    ok = True
    rows = []
    worst_z = 0.0
    rounding = 0
    for i, (name, model) in enumerate(cases):
        spec, F = model.rademacher(), model.functional()
        atoms, probs = rd.enumerate_distribution(spec, F)
        exact = rd.estimate_b_terms(spec, F)
        ks = ks_distance(atoms, probs)
        bound = rd.uniform_bound_rademacher(exact)
        mc = rd.estimate_b_terms(spec, F, mode="monte_carlo", replicas=100_000, seed=800 + i)
        for e, m, s in zip(exact.terms, mc.terms, mc.stderrs):
            agree = abs(e - m) <= 3 * s + FLOAT_SLACK * max(1.0, abs(e))
            ok &= agree
            if s > 1e-12 * max(1.0, abs(e)):
                worst_z = max(worst_z, abs(e - m) / s)
            else:
                rounding += 1
        ok &= ks <= bound
        rows.append(f"{name}: ks={ks:.4f}<=bound={bound:.2f}")
    verdict(8, ok, "; ".join(rows) + f"; worst |mc-exact|/stderr={worst_z:.2f} over random terms; "
                   f"{rounding} deterministic terms agree to rounding")
    assert ok


def test_criterion_09_two_runs_shape(verdict):
    ratios = []
    norms_ok = True
    for m in (16, 64, 256):
        ts = rd.make_two_runs([1.0] * m)
        norm = rd.two_runs_norm_bound([1.0] * m)
        norms_ok &= abs(norm - m**-0.5) <= 1e-15
        x = rd.sample_two_runs(ts, 10**6, seed=900 + m)
        ratios.append(weighted_ks(x, 3)[0] / norm)
    spread = max(ratios) / min(ratios)
    ok = norms_ok and spread < 10
    verdict(9, ok, "ratios=" + ", ".join(f"{r:.3f}" for r in ratios) + f" spread={spread:.2f}")
    assert ok


def test_criterion_10_er_shape(verdict):
    ratios = []
    for n in (10, 20, 40):
        es = rd.make_er(n, 0.3, TRI)
        x = rd.sample_er(es, 200_000, seed=1000 + n)
        ratios.append(weighted_ks(x, 3)[0] / rd.er_bound_scale(n, 0.3, TRI))
    spread = max(ratios) / min(ratios)
    psi_ok = all(
        rd.psi(NAMED_PATTERNS[name], n, p) == rd.psi_naive(NAMED_PATTERNS[name], n, p)
        for name in ("edge", "path3", "triangle", "star3", "square")
        for n in (5, 10, 20, 40)
        for p in (0.05, 0.3, 0.8)
    )
    ok = spread < 10 and psi_ok
    verdict(10, ok, "ratios=" + ", ".join(f"{r:.3f}" for r in ratios) + f" spread={spread:.2f} psi-naive={psi_ok}")
    assert ok


def _suite_specs():
    return [
        harness.ExperimentSpec("fbm", {"hurst": 0.7, "n": 64}, n_samples=50_000, seed=11, replicas=5),
        harness.ExperimentSpec("rgg", {"t": 30.0, "r": 0.1, "outer": 100, "inner": 30, "pilot": 10_000},
                               n_samples=20_000, seed=12, replicas=4),
        harness.ExperimentSpec("two_runs", {"uniform": 8, "mode": "enumerate"}, seed=13),
        harness.ExperimentSpec("two_runs", {"uniform": 64, "mode": "mc"}, n_samples=50_000, seed=14, replicas=6),
        harness.ExperimentSpec("er", {"n": 10, "p": 0.3}, n_samples=50_000, seed=15, replicas=3),
    ]


def test_criterion_11_determinism(verdict, tmp_path):
    reports = {}
    for workers in (1, 3):
        rows = [harness.run_experiment(s, workers=workers) for s in _suite_specs()]
        csv_path = harness.emit_report(rows, tmp_path / f"w{workers}.csv")
        json_path = harness.emit_report(rows, tmp_path / f"w{workers}.json")
        unit = geometric.Window.unit(2)
        spec, _ = geometric.make_spec(unit, 30.0, 0.1, "triangle", n_pilot=5000, seed=1, workers=workers)
        terms = geometric.estimate_poincare_terms(spec, 60, 20, seed=2, workers=workers, chunk=7)
        fb = chaos.sample_statistic(FbmSpec(0.3, 256), 30_000, seed=3, workers=workers, chunk=4000)
        ts = rd.make_two_runs([1.0] * 6)
        bt = rd.estimate_b_terms(ts.rademacher(), ts.functional(), mode="mc", replicas=4000, seed=4)
        reports[workers] = (csv_path.read_bytes(), json_path.read_bytes(), terms.to_json(), fb.tobytes(),
                            bt.to_json())
    same = [a == b for a, b in zip(reports[1], reports[3])]
    ok = all(same)
    verdict(11, ok, f"byte-identical across workers 1 vs 3: csv={same[0]} json={same[1]} "
                    f"A-terms={same[2]} fbm={same[3]} B-terms={same[4]}")
    assert ok
