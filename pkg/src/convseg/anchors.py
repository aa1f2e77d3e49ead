"""Offline phase: cluster per-topic sentence embeddings and extract anchors.

DBSCAN runs on cosine distance (1 - cosine similarity).  The variant here is
deterministic and stable under permutation of the input points:

* a point is *core* when its eps-neighborhood (self included) holds at least
  ``min_pts`` points;
* clusters are the connected components of the core-core adjacency graph;
* a non-core point with a core neighbor joins the cluster of its *nearest*
  core point (ties broken by lowest point index), everything else is noise;
* cluster ids are renumbered in order of first appearance in the input.

Each cluster contributes one anchor: the unit-normalized arithmetic mean of
its members.  Topics whose points are all noise fall back to a single anchor
over the whole topic corpus, flagged so callers can tell.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .model import ValidationError, check_topic_names, is_unit, unit_normalize

NOISE = -1

ANCHOR_SET_VERSION = "1"


@dataclass(frozen=True)
class DbscanParams:
    """Cosine-distance radius and density threshold."""

    eps: float = 0.25
    min_pts: int = 5

    def __post_init__(self):
        if self.eps < 0:
            raise ValidationError(f"eps must be >= 0, got {self.eps}")
        if self.min_pts < 1:
            raise ValidationError(f"min_pts must be >= 1, got {self.min_pts}")


def _as_point_matrix(points) -> np.ndarray:
    if isinstance(points, np.ndarray) and points.ndim == 2:
        mat = np.asarray(points, dtype=np.float64)
    else:
        rows = [np.asarray(p, dtype=np.float64) for p in points]
        if not rows:
            raise ValidationError("dbscan requires at least one point")
        dims = {r.shape for r in rows}
        if len(dims) != 1 or rows[0].ndim != 1:
            raise ValidationError(f"points must share one dimension, got shapes {sorted(dims)}")
        mat = np.vstack(rows)
    if mat.shape[0] == 0:
        raise ValidationError("dbscan requires at least one point")
    if not np.all(np.isfinite(mat)):
        raise ValidationError("dbscan input contains non-finite values")
    return mat


def dbscan(points, params: DbscanParams) -> np.ndarray:
    """Cluster ``points`` (sequence of vectors or an (n, d) matrix).

    Returns an int label per point; ``NOISE`` (-1) marks outliers.  The
    pairwise search is the naive O(n^2) one, which is fine at corpus scale.
    """
    mat = _as_point_matrix(points)
    n = mat.shape[0]
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0):
        raise ValidationError("dbscan input contains a zero vector")
    unit = mat / norms[:, None]
    dist = 1.0 - unit @ unit.T
    within = dist <= params.eps + 1e-12
    core = within.sum(axis=1) >= params.min_pts

    labels = np.full(n, NOISE, dtype=int)
    if not core.any():
        return labels

    # connected components of the core-core graph, grown breadth-first
    comp = np.full(n, -1, dtype=int)
    n_comp = 0
    core_adj = within & core[None, :] & core[:, None]
    for seed in np.flatnonzero(core):
        if comp[seed] != -1:
            continue
        frontier = np.zeros(n, dtype=bool)
        frontier[seed] = True
        member = np.zeros(n, dtype=bool)
        while frontier.any():
            member |= frontier
            reached = core_adj[frontier].any(axis=0)
            frontier = reached & ~member
        comp[member] = n_comp
        n_comp += 1
    labels[core] = comp[core]

    # border points join the nearest core's cluster (ties: lowest core index)
    core_idx = np.flatnonzero(core)
    border = ~core & within[:, core_idx].any(axis=1)
    for p in np.flatnonzero(border):
        d = dist[p, core_idx]
        reachable = d <= params.eps + 1e-12
        cands = core_idx[reachable]
        labels[p] = labels[cands[np.argmin(d[reachable])]]

    # renumber by first appearance so the labeling is order-deterministic
    remap: dict[int, int] = {}
    for i in range(n):
        if labels[i] != NOISE and labels[i] not in remap:
            remap[labels[i]] = len(remap)
    return np.array([remap[l] if l != NOISE else NOISE for l in labels], dtype=int)


@dataclass(frozen=True)
class TopicAnchors:
    """Anchors of one topic, ordered by descending source cluster size."""

    name: str
    anchors: tuple[np.ndarray, ...]
    cluster_sizes: tuple[int, ...]
    params: DbscanParams
    fallback: bool = False
    noise_count: int = 0

    def __post_init__(self):
        if not self.anchors:
            raise ValidationError(f"topic {self.name!r} has no anchors")
        if len(self.anchors) != len(self.cluster_sizes):
            raise ValidationError(
                f"topic {self.name!r}: {len(self.anchors)} anchors vs "
                f"{len(self.cluster_sizes)} cluster sizes"
            )
        for a in self.anchors:
            if not is_unit(a):
                raise ValidationError(f"topic {self.name!r} has a non-unit anchor")


@dataclass(frozen=True)
class AnchorSet:
    """Per-topic anchor collections; topic order is the scoring column order."""

    dim: int
    topics: tuple[TopicAnchors, ...]

    def __post_init__(self):
        check_topic_names(t.name for t in self.topics)
        for t in self.topics:
            for a in t.anchors:
                if a.shape != (self.dim,):
                    raise ValidationError(
                        f"topic {t.name!r} anchor has shape {a.shape}, expected ({self.dim},)"
                    )

    @property
    def topic_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.topics)

    def anchors_of(self, name: str) -> tuple[np.ndarray, ...]:
        for t in self.topics:
            if t.name == name:
                return t.anchors
        raise ValidationError(f"unknown topic {name!r}; have {list(self.topic_names)}")

    def anchor_matrix(self, name: str) -> np.ndarray:
        return np.vstack(self.anchors_of(name))


def extract_anchors(corpus: Mapping[str, Sequence], params) -> AnchorSet:
    """Run DBSCAN per topic and turn cluster means into anchors.

    ``corpus`` maps topic name -> sequence of embedding vectors.  ``params``
    is a single :class:`DbscanParams` for every topic or a mapping from topic
    name to per-topic params.
    """
    if not corpus:
        raise ValidationError("anchor extraction needs at least one topic")
    names = check_topic_names(corpus.keys())
    dims = set()
    topics = []
    for name in names:
        vectors = corpus[name]
        if len(vectors) == 0:
            raise ValidationError(f"topic {name!r} has an empty corpus")
        mat = _as_point_matrix(vectors)
        dims.add(mat.shape[1])
        if len(dims) > 1:
            raise ValidationError(f"corpus dimensions differ across topics: {sorted(dims)}")
        p = params[name] if isinstance(params, Mapping) else params
        labels = dbscan(mat, p)
        n_clusters = labels.max() + 1
        noise_count = int((labels == NOISE).sum())
        if n_clusters == 0:
            anchors = (unit_normalize(mat.mean(axis=0)),)
            sizes = (mat.shape[0],)
            fallback = True
        else:
            means = [unit_normalize(mat[labels == c].mean(axis=0)) for c in range(n_clusters)]
            counts = [int((labels == c).sum()) for c in range(n_clusters)]
            order = sorted(range(n_clusters), key=lambda c: (-counts[c], c))
            anchors = tuple(means[c] for c in order)
            sizes = tuple(counts[c] for c in order)
            fallback = False
        topics.append(TopicAnchors(name=name, anchors=anchors, cluster_sizes=sizes,
                                   params=p, fallback=fallback, noise_count=noise_count))
    return AnchorSet(dim=dims.pop(), topics=tuple(topics))


# --- persistence ------------------------------------------------------------

def save_anchor_set(aset: AnchorSet, path) -> None:
    payload = {
        "version": ANCHOR_SET_VERSION,
        "dim": aset.dim,
        "topics": [
            {
                "name": t.name,
                "anchors": [a.tolist() for a in t.anchors],
                "cluster_sizes": list(t.cluster_sizes),
                "eps": t.params.eps,
                "min_pts": t.params.min_pts,
                "fallback": t.fallback,
                "noise_count": t.noise_count,
            }
            for t in aset.topics
        ],
    }
    Path(path).write_text(json.dumps(payload) + "\n")


def load_anchor_set(path) -> AnchorSet:
    raw = json.loads(Path(path).read_text())
    version = raw.get("version")
    if version != ANCHOR_SET_VERSION:
        raise ValidationError(
            f"unsupported anchor set version {version!r} in {path}; expected {ANCHOR_SET_VERSION!r}"
        )
    try:
        dim = int(raw["dim"])
        topics = []
        for t in raw["topics"]:
            anchors = tuple(np.asarray(a, dtype=np.float64) for a in t["anchors"])
            for a in anchors:
                a.flags.writeable = False
            topics.append(TopicAnchors(
                name=str(t["name"]),
                anchors=anchors,
                cluster_sizes=tuple(int(s) for s in t["cluster_sizes"]),
                params=DbscanParams(eps=float(t["eps"]), min_pts=int(t["min_pts"])),
                fallback=bool(t["fallback"]),
                noise_count=int(t.get("noise_count", 0)),
            ))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed anchor set file {path}: {exc}") from exc
    return AnchorSet(dim=dim, topics=tuple(topics))
