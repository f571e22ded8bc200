"""Aggregation matrices, the mean-shift projector and normalization layers.

Hidden representations are ``d x N`` matrices whose columns are nodes; a
batch is described by column offsets, graph ``g`` owning columns
``offsets[g]:offsets[g+1]``.

Normalization kinds and the set each (mu, sigma) pair is computed over:

    batch     one feature, all nodes of all graphs in the batch
    layer     one node, all features
    instance  one feature, the nodes of one graph
    graph     as instance, but the mean is scaled by a learnable alpha and
              the variance is taken around the alpha-shifted values
"""

from dataclasses import dataclass, field

import numpy as np

from .graphs import GraphBatch

KINDS = ("none", "batch", "layer", "instance", "graph")
DEFAULT_EPS = 1e-5
DEFAULT_MOMENTUM = 0.1
ROUNDOFF = 1e-12


class NormError(ValueError):
    pass


def q_gcn(a):
    """Symmetric GCN aggregation D^-1/2 (A + I) D^-1/2 with D the degrees of A + I."""
    a = np.asarray(a, dtype=np.float64)
    a_hat = a + np.eye(a.shape[0])
    d = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return d[:, None] * a_hat * d[None, :]


def q_gin(a, xi):
    a = np.asarray(a, dtype=np.float64)
    return a + (1.0 + xi) * np.eye(a.shape[0])


def shift_matrix(n):
    """N = I - 11^T / n; right-multiplying subtracts each row's mean."""
    if n < 1:
        raise NormError(f"shift_matrix needs n >= 1, got {n}")
    return np.eye(n) - np.full((n, n), 1.0 / n)


@dataclass
class NormSpec:
    kind: str
    gamma: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray = None
    epsilon: float = DEFAULT_EPS

    def __post_init__(self):
        if self.kind not in KINDS:
            raise NormError(f"unknown norm kind {self.kind!r}; allowed: {', '.join(KINDS)}")
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.gamma.shape != self.beta.shape or self.gamma.ndim != 1:
            raise NormError("gamma and beta must be vectors of equal length")
        if self.kind == "graph":
            if self.alpha is None:
                raise NormError("graph normalization needs alpha")
            self.alpha = np.asarray(self.alpha, dtype=np.float64)
            if self.alpha.shape != self.gamma.shape:
                raise NormError("alpha must match gamma in length")
        # zero is allowed for exact textbook comparisons; training uses DEFAULT_EPS
        if self.epsilon < 0:
            raise NormError(f"epsilon must be non-negative, got {self.epsilon}")

    @classmethod
    def default(cls, kind, dim, epsilon=DEFAULT_EPS):
        alpha = np.ones(dim) if kind == "graph" else None
        return cls(kind, np.ones(dim), np.zeros(dim), alpha, epsilon)

    @property
    def dim(self):
        return self.gamma.size


@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = DEFAULT_MOMENTUM

    @classmethod
    def fresh(cls, dim, momentum=DEFAULT_MOMENTUM):
        return cls(np.zeros(dim), np.ones(dim), momentum)

    def update(self, mean, var):
        m = self.momentum
        self.running_mean = (1.0 - m) * self.running_mean + m * mean
        self.running_var = (1.0 - m) * self.running_var + m * var


def _offsets(batch):
    if isinstance(batch, GraphBatch):
        return batch.offsets
    return np.asarray(batch, dtype=np.int64)


@dataclass
class _Segments:
    starts: np.ndarray
    sizes: np.ndarray
    seg: np.ndarray = field(repr=False)

    @classmethod
    def from_offsets(cls, offsets):
        sizes = np.diff(offsets)
        if np.any(sizes <= 0):
            raise NormError("every graph in a batch needs at least one node")
        return cls(offsets[:-1], sizes, np.repeat(np.arange(sizes.size), sizes))

    def sum(self, x):
        return np.add.reduceat(x, self.starts, axis=1)

    def spread(self, stat):
        return stat[:, self.seg]


def _center_scale(x, segs, alpha, eps):
    """Row-wise segmented (x - alpha*mu) / sqrt(var + eps) with its cache."""
    mu = segs.sum(x) / segs.sizes
    shift = mu if alpha is None else alpha[:, None] * mu
    s = x - segs.spread(shift)
    var = segs.sum(s * s) / segs.sizes
    denom = np.sqrt(var + eps)
    # a zero-variance scope with eps=0 (e.g. a one-node graph) maps to 0, not NaN
    inv = np.divide(1.0, denom, out=np.zeros_like(denom), where=denom > 0)
    xhat = s * segs.spread(inv)
    return xhat, (segs, alpha, mu, s, var, inv)


def _center_scale_backward(gxhat, cache):
    segs, alpha, mu, s, var, inv = cache
    dvar = -0.5 * segs.sum(gxhat * s) * inv**3
    ds = gxhat * segs.spread(inv) + segs.spread(2.0 * dvar / segs.sizes) * s
    ds_sum = segs.sum(ds)
    if alpha is None:
        dalpha = None
        dmu = -ds_sum
    else:
        dalpha = -np.sum(ds_sum * mu, axis=1)
        dmu = -alpha[:, None] * ds_sum
    dx = ds + segs.spread(dmu / segs.sizes)
    return dx, dalpha


def norm_forward(h, offsets, kind, gamma=None, beta=None, alpha=None, eps=DEFAULT_EPS,
                 state=None, mode="train"):
    """Normalize ``h`` (d x N) and return ``(out, cache)`` for ``norm_backward``.

    In batch/train mode ``state`` (if given) has its running statistics
    updated in place; batch/eval mode reads them instead of batch statistics.
    """
    h = np.asarray(h, dtype=np.float64)
    offsets = _offsets(offsets)
    if offsets[-1] != h.shape[1]:
        raise NormError(f"batch offsets cover {offsets[-1]} nodes but h has {h.shape[1]} columns")
    if mode not in ("train", "eval"):
        raise NormError(f"mode must be 'train' or 'eval', got {mode!r}")
    if kind == "none":
        return h, (kind, None)
    d, total = h.shape
    if kind == "batch":
        if mode == "eval":
            if state is None:
                raise NormError("batch normalization in eval mode needs a BatchNormState")
            inv = 1.0 / np.sqrt(state.running_var + eps)
            xhat = (h - state.running_mean[:, None]) * inv[:, None]
            inner = ("eval", inv)
        else:
            segs = _Segments.from_offsets(np.array([0, total]))
            xhat, c = _center_scale(h, segs, None, eps)
            if state is not None:
                state.update(c[2][:, 0], c[4][:, 0])
            inner = ("train", c)
    elif kind == "layer":
        segs = _Segments.from_offsets(np.array([0, d]))
        xhat_t, inner = _center_scale(h.T, segs, None, eps)
        xhat = xhat_t.T
    elif kind in ("instance", "graph"):
        segs = _Segments.from_offsets(offsets)
        a = None
        if kind == "graph":
            if alpha is None:
                raise NormError("graph normalization needs alpha")
            a = np.asarray(alpha, dtype=np.float64)
        xhat, inner = _center_scale(h, segs, a, eps)
    else:
        raise NormError(f"unknown norm kind {kind!r}; allowed: {', '.join(KINDS)}")
    out = gamma[:, None] * xhat + beta[:, None]
    return out, (kind, (xhat, gamma, inner))


def norm_backward(dout, cache):
    """Gradients ``(dh, {"gamma", "beta"[, "alpha"]})`` for a ``norm_forward`` call."""
    kind, payload = cache
    if kind == "none":
        return dout, {}
    xhat, gamma, inner = payload
    grads = {"gamma": np.sum(dout * xhat, axis=1), "beta": np.sum(dout, axis=1)}
    gxhat = dout * gamma[:, None]
    if kind == "batch":
        tag, c = inner
        if tag == "eval":
            return gxhat * c[:, None], grads
        dh, _ = _center_scale_backward(gxhat, c)
    elif kind == "layer":
        dh_t, _ = _center_scale_backward(gxhat.T, inner)
        dh = dh_t.T
    else:
        dh, dalpha = _center_scale_backward(gxhat, inner)
        if kind == "graph":
            grads["alpha"] = dalpha
    return dh, grads


def normalize(h, batch, spec, state=None, mode="train"):
    """Apply ``spec`` to ``h`` laid out by ``batch`` (a GraphBatch or offsets)."""
    if spec.kind != "none" and spec.dim != np.shape(h)[0]:
        raise NormError(f"norm parameters have length {spec.dim}, features have {np.shape(h)[0]}")
    out, _ = norm_forward(h, _offsets(batch), spec.kind, spec.gamma, spec.beta,
                          spec.alpha, spec.epsilon, state, mode)
    return out


def apply_shift_scale(w_h_q, n_nodes=None, eps=DEFAULT_EPS, safe=False):
    """Matrix-form instance normalization of one graph: S (W H Q) N.

    ``S = diag(1 / sigma_i)`` where ``sigma_i^2`` is the mean square of row
    ``i`` after the shift, plus ``eps``.  With ``safe=True`` rows whose
    shifted values are zero up to round-off (``ROUNDOFF`` relative to the
    unshifted row) are left unscaled instead of having noise amplified.
    """
    m = np.asarray(w_h_q, dtype=np.float64)
    n = m.shape[1] if n_nodes is None else n_nodes
    if m.shape[1] != n:
        raise NormError(f"expected {n} node columns, got {m.shape[1]}")
    shifted = m @ shift_matrix(n)
    var = np.mean(shifted * shifted, axis=1) + eps
    flat = np.max(np.abs(shifted), axis=1) <= ROUNDOFF * np.max(np.abs(m), axis=1)
    if not safe:
        if eps == 0.0 and np.any(flat):
            raise NormError("zero-variance row with eps=0; pass safe=True or eps>0")
        flat[:] = False
    scale = np.ones_like(var)
    scale[~flat] = 1.0 / np.sqrt(var[~flat])
    return scale[:, None] * shifted
