"""Time the compiled counting kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each workload is checked for equal output on both backends before timing.
"""
import argparse
import json
import platform
import timeit

import numpy as np

from nubesim import _pykernels
from nubesim.geometric import Window, rgg, sample_ppp_batch
from nubesim.graphs import NAMED_PATTERNS, _plan
from nubesim.rng import stream

try:
    from nubesim import _ckernels
except ImportError:
    _ckernels = None


def workloads():
    gen = stream(0, 0)
    pts, off = sample_ppp_batch(gen, Window.unit(2), 50.0, 2000)
    queries = gen.random((2, 2))
    bits = np.where(gen.random((20_000, 45)) < 0.3, 1, -1).astype(np.int8)
    big, _ = sample_ppp_batch(gen, Window.unit(2), 400.0, 1)
    g = rgg(big, 0.08)
    tri = NAMED_PATTERNS["triangle"]
    order, anchor = _plan(tri, [])
    pins = np.full(3, -1, dtype=np.int64)
    return {
        "pair_counts (2000 configs, t=50)": ("pair_counts", (pts, off, 0.1)),
        "neighbor_counts (2000 configs, 2 queries)": ("neighbor_counts", (pts, off, queries, 0.1)),
        "triangle_counts (20000 ER graphs, n=10)": ("triangle_counts", (bits, 10)),
        f"count_embeddings (triangle, {g.n_nodes} nodes)": (
            "count_embeddings", (g.adj, g.indptr, g.indices, tri.adjacency, order, anchor, pins)),
    }


def bench(repeat):
    rows = []
    for label, (name, args) in workloads().items():
        py = getattr(_pykernels, name)
        entry = {"workload": label, "python_s": min(timeit.repeat(lambda: py(*args), number=1, repeat=repeat))}
        if _ckernels is not None:
            cy = getattr(_ckernels, name)
            if not np.array_equal(np.asarray(cy(*args)), np.asarray(py(*args))):
                raise AssertionError(f"backends disagree on {label}")
            entry["cython_s"] = min(timeit.repeat(lambda: cy(*args), number=1, repeat=repeat))
            entry["speedup"] = entry["python_s"] / entry["cython_s"]
        rows.append(entry)
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the timings here")
    args = ap.parse_args(argv)
    rows = bench(args.repeat)
    print(f"python {platform.python_version()}, numpy {np.__version__}, "
          f"compiled kernels {'available' if _ckernels else 'missing'}")
    print(f"{'workload':48s} {'python':>10s} {'cython':>10s} {'speedup':>8s}")
    for r in rows:
        cy = f"{r['cython_s'] * 1e3:8.2f}ms" if "cython_s" in r else "       n/a"
        sp = f"{r['speedup']:7.1f}x" if "speedup" in r else "     n/a"
        print(f"{r['workload']:48s} {r['python_s'] * 1e3:8.2f}ms {cy} {sp}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
