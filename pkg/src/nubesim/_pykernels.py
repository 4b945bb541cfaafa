"""Numpy implementations of the counting kernels (fallback for ``_ckernels``)."""
import numpy as np
from scipy.spatial.distance import pdist


def pair_counts(points, offsets, radius):
    points = np.asarray(points, dtype=float)
    r2 = radius * radius
    out = np.zeros(len(offsets) - 1, dtype=np.int64)
    for b in range(len(offsets) - 1):
        block = points[offsets[b]:offsets[b + 1]]
        if len(block) < 2:
            continue
        d2 = pdist(block, "sqeuclidean")
        out[b] = np.count_nonzero((d2 > 0.0) & (d2 <= r2))
    return out


def neighbor_counts(points, offsets, queries, radius):
    points = np.asarray(points, dtype=float)
    queries = np.asarray(queries, dtype=float)
    r2 = radius * radius
    out = np.zeros((len(offsets) - 1, len(queries)), dtype=np.int64)
    for b in range(len(offsets) - 1):
        block = points[offsets[b]:offsets[b + 1]]
        if len(block) == 0:
            continue
        diff = block[:, None, :] - queries[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        out[b] = np.count_nonzero((d2 > 0.0) & (d2 <= r2), axis=0)
    return out


def count_embeddings(adj, indptr, indices, pattern, order, anchor, fixed):
    n = adj.shape[0]
    q = pattern.shape[0]
    image = [-1] * q
    used = np.zeros(max(n, 1), dtype=bool)

    def extend(pos):
        if pos == q:
            return 1
        v = order[pos]
        if fixed[v] >= 0:
            candidates = (fixed[v],)
        elif anchor[pos] >= 0:
            a = image[anchor[pos]]
            candidates = indices[indptr[a]:indptr[a + 1]]
        else:
            candidates = range(n)
        total = 0
        for c in candidates:
            c = int(c)
            if used[c]:
                continue
            if any(pattern[order[t], v] and not adj[image[order[t]], c] for t in range(pos)):
                continue
            used[c] = True
            image[v] = c
            total += extend(pos + 1)
            used[c] = False
        return total

    return extend(0)


def triangle_counts(bits, n):
    bits = np.asarray(bits)
    iu = np.triu_indices(n, 1)
    adj = np.zeros((len(bits), n, n), dtype=np.int64)
    adj[:, iu[0], iu[1]] = bits > 0
    adj = adj + adj.transpose(0, 2, 1)
    paths = adj @ adj
    return np.einsum("gij,gij->g", paths, adj) // 6
