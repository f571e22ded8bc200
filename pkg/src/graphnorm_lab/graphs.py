"""Graphs, batches, structural matrices and synthetic generators.

Node features are stored as ``d x n`` matrices: column ``i`` is node ``i``.
"""

from dataclasses import dataclass, field

import numpy as np


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    n: int
    edges: tuple
    node_features: np.ndarray = field(repr=False)
    label: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise GraphError(f"graph needs at least one node, got n={self.n}")
        seen = set()
        norm = []
        for i, j in self.edges:
            i, j = int(i), int(j)
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i}, {j}) out of range for n={self.n}")
            if i == j:
                raise GraphError(f"self-loop on node {i}")
            key = (i, j) if i < j else (j, i)
            if key in seen:
                raise GraphError(f"duplicate edge {key}")
            seen.add(key)
            norm.append(key)
        object.__setattr__(self, "edges", tuple(norm))
        feats = np.asarray(self.node_features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[1] != self.n:
            raise GraphError(f"node_features must be d x {self.n}, got {feats.shape}")
        feats = feats.copy()
        feats.setflags(write=False)
        object.__setattr__(self, "node_features", feats)
        object.__setattr__(self, "label", int(self.label))

    @property
    def feature_dim(self):
        return self.node_features.shape[0]

    def degrees(self):
        deg = np.zeros(self.n, dtype=np.int64)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def with_features(self, features):
        return Graph(self.n, self.edges, features, self.label)

    def permuted(self, perm):
        """Relabel nodes so that new node ``k`` is old node ``perm[k]``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(self.n)
        edges = tuple((int(inv[i]), int(inv[j])) for i, j in self.edges)
        return Graph(self.n, edges, self.node_features[:, perm], self.label)

    def same_as(self, other):
        return (
            self.n == other.n
            and self.edges == other.edges
            and self.label == other.label
            and np.array_equal(self.node_features, other.node_features)
        )


class GraphBatch:
    """Several graphs viewed as one block-diagonal graph.

    ``offsets`` has ``len(graphs) + 1`` entries; graph ``g`` owns node columns
    ``offsets[g]:offsets[g + 1]``.
    """

    def __init__(self, graphs):
        graphs = list(graphs)
        if not graphs:
            raise GraphError("empty batch")
        dims = {g.feature_dim for g in graphs}
        if len(dims) != 1:
            raise GraphError(f"inconsistent feature dimensions in batch: {sorted(dims)}")
        self.graphs = graphs
        self.offsets = np.concatenate([[0], np.cumsum([g.n for g in graphs])]).astype(np.int64)

    def __len__(self):
        return len(self.graphs)

    @property
    def total_nodes(self):
        return int(self.offsets[-1])

    @property
    def sizes(self):
        return np.diff(self.offsets)

    @property
    def labels(self):
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    def features(self):
        return np.concatenate([g.node_features for g in self.graphs], axis=1)

    def segment_ids(self):
        return np.repeat(np.arange(len(self.graphs)), self.sizes)

    def edge_index(self):
        """Undirected edges of the block-diagonal graph with global node ids."""
        rows, cols = [], []
        for off, g in zip(self.offsets[:-1], self.graphs):
            if g.edges:
                e = np.asarray(g.edges, dtype=np.int64) + off
                rows.append(e[:, 0])
                cols.append(e[:, 1])
        if not rows:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        return np.concatenate(rows), np.concatenate(cols)


def adjacency(g):
    a = np.zeros((g.n, g.n))
    for i, j in g.edges:
        a[i, j] = a[j, i] = 1.0
    return a


def degree_matrix(a):
    a = np.asarray(a, dtype=np.float64)
    return np.diag(a.sum(axis=1))


def one_hot_degree_features(g, max_degree):
    deg = g.degrees()
    feats = np.zeros((max_degree + 1, g.n))
    for i, d in enumerate(deg):
        if d > max_degree:
            raise GraphError(f"node {i} has degree {d} > max_degree {max_degree}")
        feats[d, i] = 1.0
    return feats


def _structure_only(n, edges, label=0):
    return Graph(n, edges, np.zeros((0, n)), label)


def with_degree_features(graphs, max_degree=None):
    """Attach one-hot degree features; ``max_degree`` defaults to the set's maximum."""
    graphs = list(graphs)
    if max_degree is None:
        max_degree = max(int(g.degrees().max(initial=0)) for g in graphs)
    return [g.with_features(one_hot_degree_features(g, max_degree)) for g in graphs]


def make_complete_graph(n, label=0):
    if n < 1:
        raise GraphError(f"complete graph needs n >= 1, got {n}")
    edges = tuple((i, j) for i in range(n) for j in range(i + 1, n))
    return _structure_only(n, edges, label)


def make_er_graph(n, p, seed, label=0):
    if not 0.0 <= p <= 1.0:
        raise GraphError(f"edge probability must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return _structure_only(n, tuple(zip(iu[keep].tolist(), ju[keep].tolist())), label)


def _circulant_regular(n, r):
    # offsets 1..r/2 around a cycle; for odd r (n even) add the diameter chords
    edges = set()
    for i in range(n):
        for k in range(1, r // 2 + 1):
            j = (i + k) % n
            edges.add((min(i, j), max(i, j)))
        if r % 2:
            j = (i + n // 2) % n
            edges.add((min(i, j), max(i, j)))
    return tuple(sorted(edges))


def make_regular_graph(n, r, seed, label=0, max_retries=1000):
    """Random simple r-regular graph from the pairing (configuration) model.

    Pairings with self-loops or multi-edges are rejected; after
    ``max_retries`` failures a deterministic circulant graph is returned.
    """
    if r < 0 or r >= n:
        raise GraphError(f"need 0 <= r < n, got n={n}, r={r}")
    if (n * r) % 2:
        raise GraphError(f"no {r}-regular graph on {n} nodes: n*r is odd")
    rng = np.random.default_rng(seed)
    stubs = np.repeat(np.arange(n), r)
    for _ in range(max_retries):
        perm = rng.permutation(stubs)
        pairs = perm.reshape(-1, 2)
        if np.any(pairs[:, 0] == pairs[:, 1]):
            continue
        keys = {(min(a, b), max(a, b)) for a, b in pairs.tolist()}
        if len(keys) == len(pairs):
            return _structure_only(n, tuple(sorted(keys)), label)
    return _structure_only(n, _circulant_regular(n, r), label)


def make_synthetic_classification_set(count, class_rule="regular", seed=0):
    """Balanced two-class graph set distinguished only by structure.

    ``class_rule``:
      * ``"regular"`` - random 2-regular vs 3-regular graphs on an even
        number of nodes in [8, 16];
      * ``"er"`` - Erdos-Renyi graphs of 10-24 nodes, density 0.15 vs 0.3.

    Features are one-hot degrees computed over the whole set; output order
    is shuffled deterministically.
    """
    rng = np.random.default_rng(seed)
    graphs = []
    for k in range(count):
        label = k % 2
        sub = int(rng.integers(2**31))
        if class_rule == "regular":
            n = 2 * int(rng.integers(4, 9))
            graphs.append(make_regular_graph(n, 2 + label, sub, label=label))
        elif class_rule == "er":
            n = int(rng.integers(10, 25))
            graphs.append(make_er_graph(n, (0.15, 0.3)[label], sub, label=label))
        else:
            raise GraphError(f"unknown class_rule {class_rule!r}; expected 'regular' or 'er'")
    order = rng.permutation(count)
    return with_degree_features([graphs[i] for i in order])
