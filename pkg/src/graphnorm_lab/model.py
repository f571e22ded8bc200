"""Small GIN/GCN graph classifiers with hand-written backpropagation.

Layer ``k`` computes ``H_k = F(Norm(W_k H_{k-1} Q))`` where ``Q`` is the
GIN aggregation ``A + (1 + xi_k) I`` or the symmetric GCN aggregation, and
``F`` is ReLU (GCN) or the rest of an MLP (GIN).  For GIN with
``mlp_depth`` sublayers, ``W_k`` is the first MLP linear map and each later
sublayer is ``ReLU(Norm(W x + b))``.

Parameters are a flat ``dict`` of float64 arrays::

    l{k}.W, l{k}.xi                      layer weight, GIN self weight
    l{k}.mlp{j}.W, l{k}.mlp{j}.b         extra GIN MLP sublayers (j >= 1)
    l{k}.n{j}.gamma/.beta/.alpha         normalization after sublayer j
    head.W, head.b                       linear classifier on the readout
"""

import hashlib
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graphs import GraphBatch
from .norms import DEFAULT_EPS, DEFAULT_MOMENTUM, KINDS, BatchNormState, norm_backward, norm_forward

log = logging.getLogger(__name__)


class ModelError(RuntimeError):
    pass


class TrainingDiverged(ModelError):
    def __init__(self, iteration, loss):
        super().__init__(f"training diverged at iteration {iteration} (loss={loss})")
        self.iteration = iteration
        self.loss = loss


@dataclass(frozen=True)
class ModelConfig:
    in_dim: int
    arch: str = "gin"
    layers: int = 5
    hidden_dim: int = 64
    mlp_depth: int = 2
    norm: str = "graph"
    readout: str = "sum"
    xi_learnable: bool = True
    classes: int = 2
    residual: bool = False
    norm_every_sublayer: bool = True
    epsilon: float = DEFAULT_EPS
    momentum: float = DEFAULT_MOMENTUM

    def __post_init__(self):
        if self.arch not in ("gin", "gcn"):
            raise ValueError(f"arch must be 'gin' or 'gcn', got {self.arch!r}")
        if self.norm not in KINDS:
            raise ValueError(f"norm must be one of {KINDS}, got {self.norm!r}")
        if self.readout not in ("sum", "mean"):
            raise ValueError(f"readout must be 'sum' or 'mean', got {self.readout!r}")
        if self.layers < 1 or self.hidden_dim < 1 or self.in_dim < 1:
            raise ValueError("layers, hidden_dim and in_dim must be >= 1")
        if self.arch == "gin" and self.mlp_depth < 1:
            raise ValueError("GIN needs mlp_depth >= 1")
        if self.classes < 2:
            raise ValueError("need at least two classes")

    @property
    def sublayers(self):
        return self.mlp_depth if self.arch == "gin" else 1

    def norm_slots(self, k):
        """Sublayer indices of layer ``k`` followed by a normalization."""
        if self.norm == "none":
            return ()
        if self.norm_every_sublayer:
            return tuple(range(self.sublayers))
        return (0,)

    def norm_names(self):
        return [f"l{k}.n{j}" for k in range(self.layers) for j in self.norm_slots(k)]


def init_params(config, seed):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights; norms start at gamma=1, beta=0, alpha=1.

    Random draws do not depend on the norm kind, so models that differ only
    in normalization share their weights for a given seed.
    """
    rng = np.random.default_rng(seed)

    def uni(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    h = config.hidden_dim
    params = {}
    d_in = config.in_dim
    for k in range(config.layers):
        params[f"l{k}.W"] = uni((h, d_in), d_in)
        for j in range(1, config.sublayers):
            params[f"l{k}.mlp{j}.W"] = uni((h, h), h)
            params[f"l{k}.mlp{j}.b"] = uni((h,), h)
        if config.arch == "gin" and config.xi_learnable:
            params[f"l{k}.xi"] = np.zeros(1)
        d_in = h
    params["head.W"] = uni((config.classes, h), h)
    params["head.b"] = uni((config.classes,), h)
    for k in range(config.layers):
        for j in config.norm_slots(k):
            params[f"l{k}.n{j}.gamma"] = np.ones(h)
            params[f"l{k}.n{j}.beta"] = np.zeros(h)
            if config.norm == "graph":
                params[f"l{k}.n{j}.alpha"] = np.ones(h)
    return params


def init_state(config):
    """Running statistics for every batch-norm slot (empty for other kinds)."""
    if config.norm != "batch":
        return {}
    return {name: BatchNormState.fresh(config.hidden_dim, config.momentum) for name in config.norm_names()}


def copy_params(params):
    return {k: v.copy() for k, v in params.items()}


def _fingerprint(params):
    h = hashlib.blake2b(digest_size=16)
    for key in sorted(params):
        h.update(key.encode())
        h.update(np.ascontiguousarray(params[key]).tobytes())
    return h.hexdigest()


def _structure(batch):
    """Sparse block-diagonal adjacency and GCN aggregation for a batch (memoized on it)."""
    memo = getattr(batch, "_agg_memo", None)
    if memo is not None:
        return memo
    n = batch.total_nodes
    r, c = batch.edge_index()
    rows = np.concatenate([r, c])
    cols = np.concatenate([c, r])
    adj = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    a_hat = adj + sp.identity(n, format="csr")
    dinv = 1.0 / np.sqrt(np.asarray(a_hat.sum(axis=1)).ravel())
    q_gcn = sp.csr_matrix(sp.diags(dinv) @ a_hat @ sp.diags(dinv))
    memo = (adj, q_gcn)
    batch._agg_memo = memo
    return memo


def _xi(params, config, k):
    if config.arch != "gin":
        return None
    key = f"l{k}.xi"
    return float(params[key][0]) if key in params else 0.0


def _aggregate(x, adj, q_gcn, xi):
    # x Q with Q symmetric: (Q x^T)^T
    if xi is None:
        return (q_gcn @ x.T).T
    return (adj @ x.T).T + (1.0 + xi) * x


def _aggregate_backward(g, adj, q_gcn, xi):
    if xi is None:
        return (q_gcn @ g.T).T
    return (adj @ g.T).T + (1.0 + xi) * g


def _check_finite(arr, where):
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"non-finite activations at {where}")


def forward(params, config, batch, mode="train", state=None):
    """Class logits ``(num_graphs, classes)`` and the cache needed by ``backward``.

    ``state`` holds batch-norm running statistics; it is updated in train
    mode and read in eval mode.
    """
    if batch.graphs[0].feature_dim != config.in_dim:
        raise ModelError(f"batch features have dim {batch.graphs[0].feature_dim}, model expects {config.in_dim}")
    adj, q_gcn = _structure(batch)
    offsets = batch.offsets
    state = state if state is not None else {}
    h = batch.features()
    layer_caches = []
    for k in range(config.layers):
        x = h
        xi = _xi(params, config, k)
        agg = _aggregate(x, adj, q_gcn, xi)
        norm_slots = config.norm_slots(k)
        subs = []
        cur = agg
        for j in range(config.sublayers):
            if j == 0:
                u = params[f"l{k}.W"] @ cur
            else:
                u = params[f"l{k}.mlp{j}.W"] @ cur + params[f"l{k}.mlp{j}.b"][:, None]
            ncache = None
            z = u
            if j in norm_slots:
                name = f"l{k}.n{j}"
                z, ncache = norm_forward(
                    u, offsets, config.norm,
                    params[f"{name}.gamma"], params[f"{name}.beta"], params.get(f"{name}.alpha"),
                    config.epsilon, state.get(name), mode,
                )
            a = np.maximum(z, 0.0)
            _check_finite(a, f"layer {k} sublayer {j}")
            subs.append({"in": cur, "u": u, "norm": ncache, "mask": z > 0.0})
            cur = a
        res = config.residual and cur.shape == x.shape
        h = cur + x if res else cur
        layer_caches.append({"x": x, "agg": agg, "xi": xi, "subs": subs, "res": res})

    pooled = np.add.reduceat(h, offsets[:-1], axis=1)
    if config.readout == "mean":
        pooled = pooled / batch.sizes
    logits = params["head.W"] @ pooled + params["head.b"][:, None]
    _check_finite(logits, "head")
    cache = {
        "fingerprint": _fingerprint(params),
        "batch_id": id(batch),
        "layers": layer_caches,
        "pooled": pooled,
        "h_out": h,
    }
    return logits.T, cache


def norm_inputs(cache):
    """Pre-normalization activations ``{norm_name: (d x N)}`` recorded by ``forward``."""
    out = {}
    for k, lc in enumerate(cache["layers"]):
        for j, sub in enumerate(lc["subs"]):
            if sub["norm"] is not None:
                out[f"l{k}.n{j}"] = sub["u"]
    return out


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over graphs and its gradient w.r.t. the logits."""
    labels = np.asarray(labels, dtype=np.int64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.sum(np.exp(shifted), axis=1))
    b = logits.shape[0]
    loss = float(np.mean(logz - shifted[np.arange(b), labels]))
    probs = np.exp(shifted - logz[:, None])
    probs[np.arange(b), labels] -= 1.0
    return loss, probs / b


def backward(params, config, batch, labels, cache):
    """Gradient of the mean cross-entropy loss for every entry of ``params``."""
    if cache.get("batch_id") != id(batch) or cache.get("fingerprint") != _fingerprint(params):
        raise ModelError("stale forward cache: params or batch changed since forward()")
    adj, q_gcn = _structure(batch)
    offsets = batch.offsets
    logits = (params["head.W"] @ cache["pooled"] + params["head.b"][:, None]).T
    _, dlogits = softmax_cross_entropy(logits, labels)
    g_logits = dlogits.T
    grads = {
        "head.W": g_logits @ cache["pooled"].T,
        "head.b": g_logits.sum(axis=1),
    }
    g_pooled = params["head.W"].T @ g_logits
    if config.readout == "mean":
        g_pooled = g_pooled / batch.sizes
    g_h = g_pooled[:, batch.segment_ids()]

    for k in reversed(range(config.layers)):
        lc = cache["layers"][k]
        g_x_res = g_h if lc["res"] else None
        g_cur = g_h
        for j in reversed(range(config.sublayers)):
            sub = lc["subs"][j]
            g_z = g_cur * sub["mask"]
            if sub["norm"] is not None:
                name = f"l{k}.n{j}"
                g_u, ng = norm_backward(g_z, sub["norm"])
                for pname, val in ng.items():
                    grads[f"{name}.{pname}"] = val
            else:
                g_u = g_z
            if j == 0:
                grads[f"l{k}.W"] = g_u @ sub["in"].T
                g_cur = params[f"l{k}.W"].T @ g_u
            else:
                grads[f"l{k}.mlp{j}.W"] = g_u @ sub["in"].T
                grads[f"l{k}.mlp{j}.b"] = g_u.sum(axis=1)
                g_cur = params[f"l{k}.mlp{j}.W"].T @ g_u
        g_agg = g_cur
        if f"l{k}.xi" in params:
            grads[f"l{k}.xi"] = np.array([np.sum(g_agg * lc["x"])])
        g_h = _aggregate_backward(g_agg, adj, q_gcn, lc["xi"])
        if g_x_res is not None:
            g_h = g_h + g_x_res
    return grads


def loss_and_grads(params, config, batch, mode="train", state=None):
    logits, cache = forward(params, config, batch, mode, state)
    loss, _ = softmax_cross_entropy(logits, batch.labels)
    return loss, backward(params, config, batch, batch.labels, cache)


def batch_loss(params, config, batch, mode="train", state=None):
    logits, _ = forward(params, config, batch, mode, state)
    return softmax_cross_entropy(logits, batch.labels)[0]


def gradient_check(params, config, batch, rel_step=1e-5, floor=1e-6, mode="train"):
    """Compare ``backward`` with central differences, coordinate by coordinate.

    The step for entry ``theta`` is ``rel_step * max(1, |theta|)``; the error
    is ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``.  The
    floor keeps finite-difference round-off (about 1e-11 in the loss
    difference quotient) from dominating gradients that are essentially zero.
    Returns ``{name: max error over that tensor}``.  ``params`` is restored.
    """
    _, grads = loss_and_grads(params, config, batch, mode)
    report = {}
    for name, value in params.items():
        worst = 0.0
        for idx in np.ndindex(value.shape):
            old = value[idx]
            h = rel_step * max(1.0, abs(old))
            value[idx] = old + h
            up = batch_loss(params, config, batch, mode)
            value[idx] = old - h
            down = batch_loss(params, config, batch, mode)
            value[idx] = old
            numeric = (up - down) / (2.0 * h)
            analytic = grads[name][idx]
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            worst = max(worst, err)
        report[name] = worst
    return report


def predict(params, config, graphs, state=None, batch_size=256, mode="eval"):
    """Argmax class per graph; ties resolve to the lowest class index."""
    graphs = list(graphs)
    out = []
    for start in range(0, len(graphs), batch_size):
        batch = GraphBatch(graphs[start:start + batch_size])
        st = state if mode == "eval" else None
        logits, _ = forward(params, config, batch, mode, st)
        out.append(np.argmax(logits, axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def evaluate(params, config, graphs, state=None, batch_size=256):
    graphs = list(graphs)
    if not graphs:
        return float("nan")
    mode = "eval" if config.norm != "batch" or state else "train"
    pred = predict(params, config, graphs, state, batch_size, mode)
    labels = np.array([g.label for g in graphs])
    return float(np.mean(pred == labels))


class Adam:
    """Adam with bias correction over a dict of parameters."""

    def __init__(self, params, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@dataclass
class TrainTrace:
    seed: int
    losses: list = field(default_factory=list)
    epoch_of_iter: list = field(default_factory=list)
    epochs: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    test_acc: list = field(default_factory=list)
    wall_clock: float = 0.0

    def csv_rows(self):
        """Rows ``(iteration, loss, epoch, train_acc, test_acc)``; accuracies on epoch-final rows."""
        last_iter = {}
        for it, ep in enumerate(self.epoch_of_iter, start=1):
            last_iter[ep] = it
        acc = {ep: (tr, te) for ep, tr, te in zip(self.epochs, self.train_acc, self.test_acc)}
        rows = []
        for it, (loss, ep) in enumerate(zip(self.losses, self.epoch_of_iter), start=1):
            tr, te = acc.get(ep, (None, None)) if last_iter[ep] == it else (None, None)
            rows.append((it, loss, ep, tr, te))
        return rows


def train(params, config, graphs, test_graphs=None, *, epochs=400, batch_size=128, lr=1e-2,
          seed=0, state=None, max_iterations=None, eval_every_epoch=True, on_epoch_end=None):
    """Mini-batch Adam training on cross-entropy; ``params``/``state`` are updated in place.

    The learning rate decays linearly per epoch, ``lr * (1 - epoch / epochs)``.
    ``on_epoch_end(epoch, params, state)`` is called after each full epoch.
    """
    graphs = list(graphs)
    if not graphs:
        raise ValueError("cannot train on an empty dataset")
    state = init_state(config) if state is None else state
    rng = np.random.default_rng(seed)
    opt = Adam(params, lr=lr)
    trace = TrainTrace(seed=seed)
    start = time.perf_counter()
    iteration = 0
    for epoch in range(epochs):
        epoch_lr = lr * (1.0 - epoch / epochs)
        order = rng.permutation(len(graphs))
        for s in range(0, len(graphs), batch_size):
            batch = GraphBatch([graphs[i] for i in order[s:s + batch_size]])
            loss, grads = loss_and_grads(params, config, batch, "train", state)
            iteration += 1
            if not np.isfinite(loss) or loss > 1e6:
                raise TrainingDiverged(iteration, loss)
            opt.step(params, grads, epoch_lr)
            trace.losses.append(loss)
            trace.epoch_of_iter.append(epoch)
            if max_iterations is not None and iteration >= max_iterations:
                break
        if eval_every_epoch:
            trace.epochs.append(epoch)
            trace.train_acc.append(evaluate(params, config, graphs, state))
            trace.test_acc.append(evaluate(params, config, test_graphs, state) if test_graphs else float("nan"))
        if on_epoch_end is not None:
            on_epoch_end(epoch, params, state)
        if max_iterations is not None and iteration >= max_iterations:
            break
    trace.wall_clock = time.perf_counter() - start
    return trace
