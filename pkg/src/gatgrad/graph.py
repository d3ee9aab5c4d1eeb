"""Directed graph topology and node feature storage.

An edge (i, j) makes node j a message source for target node i. Neighbor
lists keep the edge-file insertion order; gradient code indexes neighbors
positionally, so that order must be reproducible across runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Graph", "augment", "load_graph", "save_graph"]


def augment(h: np.ndarray) -> np.ndarray:
    """Prefix a feature vector with a constant 1.

    The leading 1 lets the first column of a weight matrix act as an
    additive bias. Non-finite entries are rejected with their index.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 1:
        raise ValueError(f"expected a 1-D feature vector, got shape {h.shape}")
    bad = np.flatnonzero(~np.isfinite(h))
    if bad.size:
        raise ValueError(f"non-finite feature entry at index {int(bad[0])}")
    out = np.empty(h.size + 1)
    out[0] = 1.0
    out[1:] = h
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Graph:
    """Immutable directed graph on nodes 0..num_nodes-1.

    Duplicate edges are rejected outright: a duplicated neighbor would be
    double-counted by the aggregation step. Self-loops are honored only if
    they appear explicitly in the edge list.
    """

    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    neighbor_lists: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.num_nodes <= 0:
            raise ValueError("num_nodes must be positive")
        edges = tuple((int(i), int(j)) for i, j in self.edges)
        object.__setattr__(self, "edges", edges)
        lists: list[list[int]] = [[] for _ in range(self.num_nodes)]
        seen: set[tuple[int, int]] = set()
        for i, j in edges:
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise ValueError(
                    f"edge ({i}, {j}) out of range for {self.num_nodes} nodes"
                )
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
            lists[i].append(j)
        object.__setattr__(self, "neighbor_lists", tuple(tuple(l) for l in lists))

    def neighbors(self, i: int) -> tuple[int, ...]:
        """Message sources of node i, in edge insertion order."""
        if not 0 <= i < self.num_nodes:
            raise IndexError(f"node {i} out of range for {self.num_nodes} nodes")
        return self.neighbor_lists[i]


def load_graph(path) -> tuple[Graph, np.ndarray]:
    """Read a graph JSON file; return the topology and the (n, H) feature matrix."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        n = int(raw["num_nodes"])
        dim = int(raw["feature_dim"])
        feature_rows = raw["features"]
        edges = tuple((int(i), int(j)) for i, j in raw["edges"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed graph file {path}: {exc}") from None
    features = np.zeros((n, dim))
    if len(feature_rows) != n:
        raise ValueError(f"expected {n} feature rows, got {len(feature_rows)}")
    for idx, row in enumerate(feature_rows):
        if len(row) != dim:
            raise ValueError(f"feature row {idx} has length {len(row)}, expected {dim}")
        features[idx] = row
    if features.size and not np.isfinite(features).all():
        raise ValueError("non-finite feature entries")
    features.setflags(write=False)
    return Graph(n, edges), features


def save_graph(path, graph: Graph, features: np.ndarray) -> None:
    """Write the graph JSON file consumed by load_graph."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != graph.num_nodes:
        raise ValueError(
            f"feature matrix has {features.shape[0]} rows for {graph.num_nodes} nodes"
        )
    payload = {
        "num_nodes": graph.num_nodes,
        "feature_dim": int(features.shape[1]),
        "features": features.tolist(),
        "edges": [list(e) for e in graph.edges],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
