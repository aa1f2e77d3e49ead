"""Independent reference implementations used as test oracles.

These are deliberately naive (pure-Python scans and double loops) and stay
separate from the library code paths they check.
"""

import math


def brute_pk(ref, hyp, k):
    """Pk by direct window enumeration over label slices."""
    n = len(ref)
    assert n == len(hyp) and 1 <= k < n

    def one_segment(labels, i, j):
        # utterances i..j lie in one segment iff no label change inside
        chunk = labels[i:j + 1]
        return all(a == b for a, b in zip(chunk, chunk[1:]))

    penalties = 0
    for i in range(n - k + 1):
        j = min(i + k, n - 1)
        if one_segment(ref, i, j) != one_segment(hyp, i, j):
            penalties += 1
    return penalties / (n - k + 1)


def brute_window_diff(ref, hyp, k):
    """WindowDiff by counting label changes in each window slice."""
    n = len(ref)
    assert n == len(hyp) and 1 <= k < n

    def changes(labels, i):
        # boundaries trailing utterances i..i+k
        chunk = labels[i:i + k + 2]
        return sum(1 for a, b in zip(chunk, chunk[1:]) if a != b)

    penalties = 0
    for i in range(n - k + 1):
        if changes(ref, i) != changes(hyp, i):
            penalties += 1
    return penalties / (n - k + 1)


NOISE = -1


def reference_dbscan(points, eps, min_pts):
    """Textbook DBSCAN on cosine distance, written with plain loops.

    Semantics mirror the library: neighborhoods include the point itself,
    clusters are components of the core graph, border points follow their
    nearest core (ties to the lowest core index), everything else is noise,
    and ids are numbered by first appearance.
    """
    pts = [list(map(float, p)) for p in points]
    n = len(pts)

    def cosine_distance(a, b):
        dot = sum(x * y for x, y in zip(a, b))
        na = math.sqrt(sum(x * x for x in a))
        nb = math.sqrt(sum(x * x for x in b))
        return 1.0 - dot / (na * nb)

    dist = [[cosine_distance(pts[i], pts[j]) for j in range(n)] for i in range(n)]
    slack = eps + 1e-12
    neighbors = [[j for j in range(n) if dist[i][j] <= slack] for i in range(n)]
    core = [len(neighbors[i]) >= min_pts for i in range(n)]

    labels = [NOISE] * n
    cluster = 0
    for i in range(n):
        if not core[i] or labels[i] != NOISE:
            continue
        # depth-first expansion over core points only
        stack = [i]
        labels[i] = cluster
        while stack:
            p = stack.pop()
            for q in neighbors[p]:
                if core[q] and labels[q] == NOISE:
                    labels[q] = cluster
                    stack.append(q)
        cluster += 1

    for i in range(n):
        if core[i] or labels[i] != NOISE:
            continue
        best = None
        for j in neighbors[i]:
            if core[j] and (best is None or dist[i][j] < dist[i][best]):
                best = j
        if best is not None:
            labels[i] = labels[best]

    remap = {}
    out = []
    for l in labels:
        if l == NOISE:
            out.append(NOISE)
        else:
            if l not in remap:
                remap[l] = len(remap)
            out.append(remap[l])
    return out


def partition_of(labels):
    """Cluster membership as a canonical set of frozensets plus the noise set."""
    clusters = {}
    noise = set()
    for i, l in enumerate(labels):
        if l == NOISE:
            noise.add(i)
        else:
            clusters.setdefault(l, set()).add(i)
    return frozenset(frozenset(v) for v in clusters.values()), frozenset(noise)
