"""Reader for the TUDataset plain-text graph classification format.

A dataset ``NAME`` lives in a directory holding

    NAME_A.txt               one "i, j" edge per line, 1-indexed global node ids
    NAME_graph_indicator.txt graph id (1-indexed) of node i on line i
    NAME_graph_labels.txt    class label of graph g on line g
    NAME_node_labels.txt     optional categorical node label per node
"""

import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphs import Graph, one_hot_degree_features

log = logging.getLogger(__name__)

_SPLIT = re.compile(r"[,\s]+")


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetMeta:
    name: str
    num_graphs: int
    num_classes: int
    avg_nodes: float


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_ids: tuple
    test_ids: tuple


def _read_int_rows(path, width=None):
    if not path.exists():
        raise FileNotFoundError(f"missing dataset file: {path}")
    rows = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = [t for t in _SPLIT.split(line.strip()) if t]
            if not tokens:
                continue
            try:
                vals = [int(t) for t in tokens]
            except ValueError:
                raise DatasetFormatError(f"{path.name}:{lineno}: non-integer token in {line.strip()!r}") from None
            if width is not None and len(vals) != width:
                raise DatasetFormatError(f"{path.name}:{lineno}: expected {width} values, got {len(vals)}")
            rows.append((lineno, vals))
    return rows


def parse_tudataset(directory, name):
    """Parse ``directory/NAME_*.txt`` into graphs plus summary statistics.

    Node labels, when present, become one-hot features (one row per distinct
    label value, in sorted order); otherwise one-hot degree features with the
    dataset-wide maximum degree.  Graph labels are remapped to ``0..C-1`` in
    sorted order of the raw values.
    """
    root = Path(directory)
    prefix = root / name
    edge_rows = _read_int_rows(Path(f"{prefix}_A.txt"), width=2)
    indicator = [v[0] for _, v in _read_int_rows(Path(f"{prefix}_graph_indicator.txt"), width=1)]
    raw_labels = [v[0] for _, v in _read_int_rows(Path(f"{prefix}_graph_labels.txt"), width=1)]
    node_label_path = Path(f"{prefix}_node_labels.txt")
    node_labels = None
    if node_label_path.exists():
        node_labels = [v[0] for _, v in _read_int_rows(node_label_path, width=1)]
        if len(node_labels) != len(indicator):
            raise DatasetFormatError(
                f"{node_label_path.name}: {len(node_labels)} labels for {len(indicator)} nodes"
            )

    num_graphs = len(raw_labels)
    if num_graphs == 0:
        raise DatasetFormatError(f"{name}: no graphs")
    graph_of = np.asarray(indicator, dtype=np.int64) - 1
    if graph_of.size == 0 or graph_of.min() < 0 or graph_of.max() >= num_graphs:
        raise DatasetFormatError(f"{name}: graph_indicator references graphs outside 1..{num_graphs}")
    if np.any(np.diff(graph_of) < 0):
        raise DatasetFormatError(f"{name}: graph_indicator is not grouped by graph")
    counts = np.bincount(graph_of, minlength=num_graphs)
    if np.any(counts == 0):
        raise DatasetFormatError(f"{name}: graph {int(np.argmin(counts)) + 1} has no nodes")
    starts = np.concatenate([[0], np.cumsum(counts)])

    edge_sets = [set() for _ in range(num_graphs)]
    for lineno, (i, j) in edge_rows:
        i, j = i - 1, j - 1
        if not (0 <= i < graph_of.size and 0 <= j < graph_of.size):
            raise DatasetFormatError(f"{name}_A.txt:{lineno}: node id out of range")
        g = graph_of[i]
        if graph_of[j] != g:
            raise DatasetFormatError(f"{name}_A.txt:{lineno}: edge ({i + 1}, {j + 1}) crosses graphs")
        if i == j:
            log.warning("%s_A.txt:%d: self-loop on node %d dropped", name, lineno, i + 1)
            continue
        key = (min(i, j) - starts[g], max(i, j) - starts[g])
        edge_sets[g].add((int(key[0]), int(key[1])))

    # each undirected edge normally appears once per direction
    directed = {}
    for lineno, (i, j) in edge_rows:
        directed[(i, j)] = directed.get((i, j), 0) + 1
    dupes = sum(1 for c in directed.values() if c > 1)
    if dupes:
        log.warning("%s: %d directed edge pairs repeated; collapsed", name, dupes)

    classes = sorted(set(raw_labels))
    remap = {c: k for k, c in enumerate(classes)}

    structures = [(int(counts[g]), tuple(sorted(edge_sets[g]))) for g in range(num_graphs)]
    graphs = []
    if node_labels is not None:
        values = sorted(set(node_labels))
        row_of = {v: k for k, v in enumerate(values)}
        for g, (n, edges) in enumerate(structures):
            feats = np.zeros((len(values), n))
            for local, lab in enumerate(node_labels[starts[g]:starts[g + 1]]):
                feats[row_of[lab], local] = 1.0
            graphs.append(Graph(n, edges, feats, remap[raw_labels[g]]))
    else:
        bare = [Graph(n, edges, np.zeros((0, n)), remap[raw_labels[g]]) for g, (n, edges) in enumerate(structures)]
        max_deg = max(int(g.degrees().max(initial=0)) for g in bare)
        graphs = [g.with_features(one_hot_degree_features(g, max_deg)) for g in bare]

    meta = DatasetMeta(
        name=name,
        num_graphs=num_graphs,
        num_classes=len(classes),
        avg_nodes=float(counts.mean()),
    )
    return graphs, meta


def stratified_folds(labels, k=10, seed=0):
    """Seeded stratified k-fold split.

    Within each class the indices are shuffled, then dealt round-robin to the
    folds; the dealing position carries over between classes so fold sizes
    differ by at most one.  A class with fewer than ``k`` members is allowed
    (with a warning); fewer than ``k`` samples overall is an error.
    """
    labels = np.asarray(labels, dtype=np.int64)
    classes, counts = np.unique(labels, return_counts=True)
    if k < 2:
        raise ValueError(f"need k >= 2 folds, got {k}")
    if len(classes) < 2:
        raise ValueError("stratified folds need at least two classes")
    if labels.size < k:
        raise ValueError(f"{labels.size} samples cannot fill k={k} folds")
    if counts.min() < k:
        small = classes[np.argmin(counts)]
        log.warning("class %s has %d samples, fewer than k=%d; some folds will not test it",
                    small, counts.min(), k)
    rng = np.random.default_rng(seed)
    buckets = [[] for _ in range(k)]
    cursor = 0
    for c in classes:
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        for i in idx:
            buckets[cursor % k].append(int(i))
            cursor += 1
    all_ids = np.arange(labels.size)
    folds = []
    for f, test in enumerate(buckets):
        test = tuple(sorted(test))
        train = tuple(int(i) for i in np.setdiff1d(all_ids, test))
        folds.append(FoldSplit(f, train, test))
    return folds
