"""Experiment orchestration: specs, end-to-end pipelines and reports.

A run is a pure function of its ``ExperimentSpec``: the samples depend on
``(seed, replica index)`` only, so reports are byte-identical for any
``workers`` setting. Unknown constants (``c_H``, ``C``, ``v``, ``c``)
are explicit parameters defaulting to 1 and are echoed in every row.
"""
from dataclasses import asdict, dataclass, field
import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from . import chaos, geometric, rademacher
from .empirical import SampleBatch, dkw_band, fit_rate, ks_distance, tail_prob, weighted_ks
from .graphs import PatternGraph
from .stein import std_normal_cdf

MODELS = ("fbm", "rgg", "two_runs", "er", "custom")
BOUND_KINDS = ("fourth_moment", "poincare_poisson", "poincare_rademacher", "norm_ratio", "er_scale")
SHAPE_KINDS = ("norm_ratio", "er_scale")
TAIL_Z = (1.0, 2.0, 3.0)

CSV_COLUMNS = [
    "experiment_id", "model", "param_1", "param_2", "param_3", "param_4",
    "n_samples", "seed", "ks_uniform", "ks_w1", "ks_w2", "ks_w3",
    "bound_kind", "bound_value", "ratio",
    "tail_z1", "tail_emp1", "tail_bound1",
    "tail_z2", "tail_emp2", "tail_bound2",
    "tail_z3", "tail_emp3", "tail_bound3",
]

# which param_i is the size parameter used for ordering and rate fits
SIZE_PARAM = {"fbm": "param_2", "rgg": "param_1", "two_runs": "param_1", "er": "param_1", "custom": "param_1"}

DEFAULTS = {
    "fbm": {"hurst": 0.5, "n": 64, "c_H": 1.0, "c": 1.0, "method": "spectral"},
    "rgg": {"t": 50.0, "r": 0.1, "dim": 2, "pattern": "edge", "outer": 2000, "inner": 200,
            "v": 1.0, "pilot": 100_000, "c": 1.0},
    "two_runs": {"uniform": 8, "weights": None, "mode": "enumerate", "C": 1.0},
    "er": {"n": 10, "p": 0.3, "pattern": "triangle", "mode": "mc", "C": 1.0},
    "custom": {"path": None, "bound_kind": "fourth_moment", "bound_value": None},
}


class ExperimentError(ValueError):
    """Invalid experiment; ``param`` names the offending setting."""

    def __init__(self, message, param=None):
        self.param = param
        super().__init__(f"{param}: {message}" if param else message)


@dataclass
class ExperimentSpec:
    model: str
    model_params: dict = field(default_factory=dict)
    n_samples: int = 100_000
    weights_k: list = field(default_factory=lambda: [1, 2, 3])
    seed: int = 0
    replicas: int = 8
    output_path: str = ""

    def __post_init__(self):
        if self.model not in MODELS:
            raise ExperimentError(f"unknown model {self.model!r}; choose from {MODELS}", "model")
        if int(self.n_samples) < 1:
            raise ExperimentError("must be positive", "n_samples")
        if not self.weights_k or any(int(k) < 0 for k in self.weights_k):
            raise ExperimentError("need a nonempty list of integers >= 0", "weights_k")
        if int(self.replicas) < 1:
            raise ExperimentError("must be positive", "replicas")
        self.n_samples = int(self.n_samples)
        self.weights_k = [int(k) for k in self.weights_k]
        self.seed = int(self.seed)
        self.replicas = int(self.replicas)

    def params(self):
        merged = dict(DEFAULTS[self.model])
        merged.update(self.model_params)
        return merged

    def identity(self):
        """Canonical JSON of everything that determines the result."""
        d = {"model": self.model, "params": self.params(), "n_samples": self.n_samples,
             "weights_k": self.weights_k, "seed": self.seed, "replicas": self.replicas}
        return json.dumps(d, sort_keys=True, default=str)

    def experiment_id(self):
        return f"{self.model}-{hashlib.sha1(self.identity().encode()).hexdigest()[:12]}"


@dataclass
class ReportRow:
    experiment_id: str
    model: str
    param_1: float
    param_2: float
    param_3: float
    param_4: float
    n_samples: int
    seed: int
    ks_uniform: float
    ks_w1: float
    ks_w2: float
    ks_w3: float
    bound_kind: str
    bound_value: float
    ratio: float
    tail_z1: float
    tail_emp1: float
    tail_bound1: float
    tail_z2: float
    tail_emp2: float
    tail_bound2: float
    tail_z3: float
    tail_emp3: float
    tail_bound3: float
    extra: dict = field(default_factory=dict)

    @property
    def size(self):
        return getattr(self, SIZE_PARAM[self.model])

    def recomputed_ratio(self):
        return compute_ratio(self.bound_kind, self.ks_uniform, self.ks_w3, self.bound_value)


def compute_ratio(kind, ks_uniform, ks_w3, bound_value):
    """Distance over bound: weighted (k=3) distance for shape kinds, uniform otherwise."""
    num = ks_w3 if kind in SHAPE_KINDS else ks_uniform
    if bound_value == 0:
        return math.inf if num > 0 else 0.0
    return num / bound_value


def _chunk(spec):
    return max(1, math.ceil(spec.n_samples / spec.replicas))


def _pattern(name):
    try:
        return PatternGraph.named(name)
    except ValueError as exc:
        raise ExperimentError(str(exc), "pattern") from None


def _distances(values, ks_list, probs=None):
    out = {"uniform": ks_distance(values, probs)}
    for k in sorted(set(ks_list) | {1, 2, 3}):
        out[k] = weighted_ks(values, k, probs=probs)[0]
    return out


def _law_tail(atoms, probs, z):
    return float(np.sum(probs[np.abs(atoms) >= z]))


def _kolmogorov_tail(z, d):
    # P(|F| >= z) <= 2 (1 - Phi(z)) + 2 d for any law at Kolmogorov distance d
    return min(1.0, 2.0 * (1.0 - std_normal_cdf(z)) + 2.0 * d)


def _run_fbm(spec, p, workers):
    try:
        fs = chaos.FbmSpec(float(p["hurst"]), int(p["n"]))
    except ValueError as exc:
        raise ExperimentError(str(exc), "hurst/n") from None
    diag = chaos.diagnostics(fs)
    x = chaos.sample_statistic(fs, spec.n_samples, spec.seed, method=p["method"],
                               workers=workers, chunk=_chunk(spec))
    batch = SampleBatch(x, seed=spec.seed, model_tag="fbm")
    dist = _distances(batch, spec.weights_k)
    tails = [(z, tail_prob(batch, z, two_sided=True), chaos.gauss_tail_bound(z, 2, diag.c_n)) for z in TAIL_Z]
    extra = {"diagnostics": diag.to_dict(), "constants": {"c_H": float(p["c_H"]), "c": float(p["c"])},
             "dkw_band_1e-3": dkw_band(spec.n_samples, 1e-3), "method": p["method"]}
    params = (fs.hurst, fs.n, float(p["c_H"]), float(p["c"]))
    return params, dist, "fourth_moment", diag.fm_bound, tails, extra


def _run_rgg(spec, p, workers):
    pattern = _pattern(p["pattern"])
    dim = int(p["dim"])
    window = geometric.Window.unit(dim)
    t, r = float(p["t"]), float(p["r"])
    try:
        rs, pilot_meta = geometric.make_spec(window, t, r, pattern, v_const=float(p["v"]),
                                             n_pilot=int(p["pilot"]), seed=spec.seed ^ 0x5EED,
                                             workers=workers)
    except (ValueError, MemoryError) as exc:
        raise ExperimentError(str(exc), "t/r") from None
    x = geometric.sample_statistic(rs, spec.n_samples, spec.seed, workers=workers,
                                   chunk=_chunk(spec))
    batch = SampleBatch(x, seed=spec.seed, model_tag="rgg")
    dist = _distances(batch, spec.weights_k)
    terms = geometric.estimate_poincare_terms(rs, int(p["outer"]), int(p["inner"]),
                                              seed=spec.seed ^ 0xA7E5, workers=workers)
    bound = geometric.uniform_bound_poisson(terms)
    q = pattern.n_vertices
    c_rgg = geometric.concentration_c_rgg(q, float(p["v"]), t, r, dim, window.volume)
    tails = [(z, tail_prob(batch, z, two_sided=True), geometric.poisson_tail_bound(z, q, c_rgg)) for z in TAIL_Z]
    extra = {"terms": terms.terms, "stderrs": terms.stderrs, "mc_meta": terms.mc_meta,
             "standardization": {"mean": rs.std_mean, "std": rs.std_dev, **pilot_meta},
             "constants": {"v": float(p["v"]), "c": float(p["c"])}, "pattern": p["pattern"],
             "dkw_band_1e-3": dkw_band(spec.n_samples, 1e-3)}
    return (t, r, dim, q), dist, "poincare_poisson", bound, tails, extra


def _load_weights(p):
    if p.get("weights") is not None:
        w = p["weights"]
        if isinstance(w, str):
            path = Path(w)
            if path.exists():
                w = [float(v) for v in path.read_text().replace(",", " ").split()]
            else:
                w = [float(v) for v in w.replace(",", " ").split()]
        return [float(v) for v in w]
    m = int(p["uniform"])
    if m < 1:
        raise ExperimentError("must be positive", "uniform")
    return [1.0] * m


def _run_two_runs(spec, p, workers):
    weights = _load_weights(p)
    try:
        ts = rademacher.make_two_runs(weights)
    except ValueError as exc:
        raise ExperimentError(str(exc), "weights") from None
    norm = rademacher.two_runs_norm_bound(weights)
    mode = p["mode"]
    extra = {"constants": {"C": float(p["C"])}, "mean": ts.mean, "std": ts.std_dev, "mode": mode,
             "norm_ratio": norm}
    if mode == "enumerate":
        try:
            atoms, probs = rademacher.enumerate_distribution(ts.rademacher(), ts.functional())
            terms = rademacher.estimate_b_terms(ts.rademacher(), ts.functional(), mode="enumerate")
        except rademacher.ResourceError as exc:
            raise ExperimentError(str(exc), "uniform/weights") from None
        dist = _distances(atoms, spec.weights_k, probs=probs)
        bound = rademacher.uniform_bound_rademacher(terms)
        tails = [(z, _law_tail(atoms, probs, z), _kolmogorov_tail(z, dist["uniform"])) for z in TAIL_Z]
        extra.update({"terms": terms.terms, "stderrs": terms.stderrs, "exact": True,
                      "sixth_moment": rademacher.law_moment(atoms, probs, 6)})
        return (len(weights), norm, 1.0, float(p["C"])), dist, "poincare_rademacher", bound, tails, extra
    if mode not in ("mc", "monte_carlo"):
        raise ExperimentError(f"unknown mode {mode!r}", "mode")
    x = rademacher.sample_two_runs(ts, spec.n_samples, spec.seed, workers=workers,
                                   chunk=_chunk(spec))
    batch = SampleBatch(x, seed=spec.seed, model_tag="two_runs")
    dist = _distances(batch, spec.weights_k)
    tails = [(z, tail_prob(batch, z, two_sided=True), _kolmogorov_tail(z, dist["uniform"])) for z in TAIL_Z]
    extra.update({"exact": False, "dkw_band_1e-3": dkw_band(spec.n_samples, 1e-3)})
    return (len(weights), norm, 0.0, float(p["C"])), dist, "norm_ratio", norm, tails, extra


def _run_er(spec, p, workers):
    pattern = _pattern(p["pattern"])
    n, prob = int(p["n"]), float(p["p"])
    try:
        es = rademacher.make_er(n, prob, pattern)
    except ValueError as exc:
        raise ExperimentError(str(exc), "n/p/pattern") from None
    scale = rademacher.er_bound_scale(n, prob, pattern)
    extra = {"constants": {"C": float(p["C"])}, "mean": es.mean, "std": es.std_dev,
             "psi": rademacher.psi(pattern, n, prob), "pattern": p["pattern"], "mode": p["mode"]}
    if p["mode"] == "enumerate":
        try:
            atoms, probs = rademacher.enumerate_distribution(es.rademacher(), es.functional())
        except rademacher.ResourceError as exc:
            raise ExperimentError(str(exc), "n") from None
        dist = _distances(atoms, spec.weights_k, probs=probs)
        tails = [(z, _law_tail(atoms, probs, z), _kolmogorov_tail(z, dist["uniform"])) for z in TAIL_Z]
        extra.update({"exact": True, "sixth_moment": rademacher.law_moment(atoms, probs, 6)})
    elif p["mode"] in ("mc", "monte_carlo"):
        x = rademacher.sample_er(es, spec.n_samples, spec.seed, workers=workers,
                                 chunk=_chunk(spec))
        batch = SampleBatch(x, seed=spec.seed, model_tag="er")
        dist = _distances(batch, spec.weights_k)
        tails = [(z, tail_prob(batch, z, two_sided=True), _kolmogorov_tail(z, dist["uniform"])) for z in TAIL_Z]
        extra.update({"exact": False, "dkw_band_1e-3": dkw_band(spec.n_samples, 1e-3)})
    else:
        raise ExperimentError(f"unknown mode {p['mode']!r}", "mode")
    return (n, prob, pattern.n_vertices, float(p["C"])), dist, "er_scale", scale, tails, extra


def _run_custom(spec, p, workers):
    if not p.get("path"):
        raise ExperimentError("custom model needs a sample file", "path")
    kind = p["bound_kind"]
    if kind not in BOUND_KINDS:
        raise ExperimentError(f"unknown bound kind {kind!r}", "bound_kind")
    if p.get("bound_value") is None:
        raise ExperimentError("custom model needs a bound value", "bound_value")
    batch = SampleBatch.load(p["path"])
    dist = _distances(batch, spec.weights_k)
    tails = [(z, tail_prob(batch, z, two_sided=True), _kolmogorov_tail(z, dist["uniform"])) for z in TAIL_Z]
    extra = {"path": str(p["path"]), "n_loaded": batch.n_samples}
    return (batch.n_samples, 0.0, 0.0, 0.0), dist, kind, float(p["bound_value"]), tails, extra


_PIPELINES = {"fbm": _run_fbm, "rgg": _run_rgg, "two_runs": _run_two_runs, "er": _run_er, "custom": _run_custom}


def run_experiment(spec, workers=1):
    """Run one experiment end to end and return its report row."""
    p = spec.params()
    params, dist, kind, bound, tails, extra = _PIPELINES[spec.model](spec, p, workers)
    extra["weighted"] = {str(k): dist[k] for k in sorted(k for k in dist if k != "uniform")}
    extra["replicas"] = spec.replicas
    n_samples = spec.n_samples if not extra.get("exact") else 0
    ratio = compute_ratio(kind, dist["uniform"], dist[3], bound)
    flat = []
    for z, emp, b in tails:
        flat += [float(z), float(emp), float(b)]
    return ReportRow(
        spec.experiment_id(), spec.model, *(float(v) for v in params), n_samples, spec.seed,
        float(dist["uniform"]), float(dist[1]), float(dist[2]), float(dist[3]),
        kind, float(bound), float(ratio), *flat, extra=_jsonable(extra),
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def sort_rows(rows):
    return sorted(rows, key=lambda r: (r.model, r.size, r.experiment_id))


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def emit_report(rows, path, fmt=None):
    """Write rows (sorted by model, then size) as CSV or JSON."""
    rows = sort_rows(rows)
    if not rows:
        raise ValueError("need at least one row")
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "csv")
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in rows:
                w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    elif fmt == "json":
        path.write_text(json.dumps([asdict(r) for r in rows], indent=1, sort_keys=True) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def read_report(path):
    path = Path(path)
    if path.suffix == ".json":
        return [ReportRow(**d) for d in json.loads(path.read_text())]
    rows = []
    with open(path, newline="") as fh:
        for d in csv.DictReader(fh):
            kw = {}
            for c in CSV_COLUMNS:
                v = d[c]
                if c in ("experiment_id", "model", "bound_kind"):
                    kw[c] = v
                elif c in ("n_samples", "seed"):
                    kw[c] = int(v)
                else:
                    kw[c] = float(v)
            rows.append(ReportRow(**kw))
    return rows


@dataclass(frozen=True)
class RateVerdict:
    fit: object
    exponent: float
    tolerance: float
    passed: bool


def rate_report(rows, exponent, tolerance=0.15):
    """Fit log(ks_uniform) against log(size) and compare with ``exponent``."""
    models = {r.model for r in rows}
    if len(models) != 1:
        raise ValueError(f"rate report needs rows from a single model, got {sorted(models)}")
    sizes = {r.size for r in rows}
    if len(sizes) < 3:
        raise ValueError("rate report needs at least 3 distinct sizes")
    fit = fit_rate([(r.size, r.ks_uniform) for r in rows])
    return RateVerdict(fit, float(exponent), tolerance, abs(fit.slope - exponent) <= tolerance)


def parse_config(text):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ExperimentError(f"line {lineno}: expected key = value", "config")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _coerce(value)
    return out


def _coerce(value):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def spec_from_mapping(mapping):
    """Build an ExperimentSpec from flat config keys; unknown keys become model params."""
    m = dict(mapping)
    top = {}
    for key in ("model", "n_samples", "seed", "replicas", "output_path"):
        if key in m:
            top[key] = m.pop(key)
    if "weights_k" in m:
        wk = m.pop("weights_k")
        top["weights_k"] = [int(v) for v in str(wk).split(",")] if not isinstance(wk, list) else wk
    if "model" not in top:
        raise ExperimentError("config must name a model", "model")
    return ExperimentSpec(model_params=m, **top)
