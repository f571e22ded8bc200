"""Batch-level vs dataset-level statistics at a BatchNorm input.

For each checkpoint the dataset is split into a fixed seeded partition of
batches; every batch is fed forward in training mode and the mean and
standard deviation of one feature at the chosen normalization input are
recorded.  The spread of the per-batch values around the dataset-level
values measures how noisy the batch statistics are.
"""

from dataclasses import dataclass

import numpy as np

from .graphs import GraphBatch, make_er_graph, with_degree_features
from .model import forward, norm_inputs

SPREAD_EPS = 1e-8


class ProbeError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseRecord:
    epoch: int
    layer_id: str
    feature_dim: int
    batch_mean_max: float
    batch_mean_min: float
    batch_std_max: float
    batch_std_min: float
    dataset_mean: float
    dataset_std: float

    @property
    def mean_spread(self):
        return (self.batch_mean_max - self.batch_mean_min) / (abs(self.dataset_mean) + SPREAD_EPS)

    @property
    def std_spread(self):
        return (self.batch_std_max - self.batch_std_min) / (abs(self.dataset_std) + SPREAD_EPS)

    def row(self):
        return (self.epoch, self.layer_id, self.feature_dim, self.batch_mean_max, self.batch_mean_min,
                self.batch_std_max, self.batch_std_min, self.dataset_mean, self.dataset_std)


CSV_HEADER = ("epoch", "layer", "dim", "mean_max", "mean_min", "std_max", "std_min", "ds_mean", "ds_std")


def layer_name(layer_id):
    """Accept ``"l{k}.n{j}"`` or a layer index ``k`` (meaning its first norm)."""
    if isinstance(layer_id, (int, np.integer)):
        return f"l{int(layer_id)}.n0"
    return str(layer_id)


def fixed_partition(count, batch_size, seed):
    order = np.random.default_rng(seed).permutation(count)
    return [order[s:s + batch_size] for s in range(0, count, batch_size)]


def batch_inputs(params, config, graphs, batch_size, layer_id, seed):
    """Per-batch pre-norm activations ``(d x N_B)`` at ``layer_id``."""
    name = layer_name(layer_id)
    if config.norm == "none" or name not in config.norm_names():
        raise ProbeError(f"layer {name!r} has no normalization; available: {config.norm_names() or 'none'}")
    out = []
    for idx in fixed_partition(len(graphs), batch_size, seed):
        batch = GraphBatch([graphs[i] for i in idx])
        _, cache = forward(params, config, batch, "train", None)
        out.append(norm_inputs(cache)[name])
    return out


def probe(checkpoints, dataset, batch_size, layer_id, feature_dim, seed=0):
    """One NoiseRecord per checkpoint.

    ``checkpoints`` is an iterable of ``(epoch, params, config)``.  Batch
    statistics never touch running averages, so checkpoints are read-only.
    """
    graphs = list(dataset)
    if not graphs:
        raise ProbeError("empty dataset")
    name = layer_name(layer_id)
    records = []
    for epoch, params, config in checkpoints:
        if not 0 <= feature_dim < config.hidden_dim:
            raise ProbeError(f"feature_dim {feature_dim} outside 0..{config.hidden_dim - 1}")
        per_batch = [u[feature_dim] for u in batch_inputs(params, config, graphs, batch_size, name, seed)]
        means = np.array([v.mean() for v in per_batch])
        stds = np.array([v.std() for v in per_batch])
        everything = np.concatenate(per_batch)
        records.append(NoiseRecord(
            epoch=int(epoch), layer_id=name, feature_dim=int(feature_dim),
            batch_mean_max=float(means.max()), batch_mean_min=float(means.min()),
            batch_std_max=float(stds.max()), batch_std_min=float(stds.min()),
            dataset_mean=float(everything.mean()), dataset_std=float(everything.std()),
        ))
    return records


def noise_summary(records):
    """Per-record normalized spreads ``(epoch, layer, dim, mean_spread, std_spread)``."""
    return [(r.epoch, r.layer_id, r.feature_dim, r.mean_spread, r.std_spread) for r in records]


def mean_spread_by_dim(params, config, graphs, batch_size, layer_id, dims, seed=0):
    """Normalized batch-mean spread for several feature dims from one pass over the batches."""
    inputs = batch_inputs(params, config, list(graphs), batch_size, layer_id, seed)
    means = np.stack([u.mean(axis=1) for u in inputs], axis=1)  # d x batches
    ds = np.concatenate(inputs, axis=1).mean(axis=1)
    dims = np.asarray(dims)
    return (means[dims].max(axis=1) - means[dims].min(axis=1)) / (np.abs(ds[dims]) + SPREAD_EPS)


def mixed_size_dataset(count, seed, n_min=5, n_max=50, p=0.2):
    """ER graphs with sizes drawn uniformly from ``n_min..n_max`` and one-hot degree features."""
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(count):
        n = int(rng.integers(n_min, n_max + 1))
        graphs.append(make_er_graph(n, p, int(rng.integers(2**63 - 1)), label=i % 2))
    return with_degree_features(graphs)


def homogeneous_dataset(count, seed, n=12, p=0.3):
    """``count`` copies of one ER graph."""
    g = make_er_graph(n, p, seed)
    return with_degree_features([g] * count)
