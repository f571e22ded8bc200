"""Gradient descent on a linear GNN with and without the mean shift.

Each sample is ``(X, Q, p, y)``; the vanilla model predicts ``w^T X Q p`` and
the shifted model ``w^T X Q N p``.  Both are least-squares problems in the
combined features ``z``, so gradient descent with step ``1 / sigma_max``
contracts the error at least as fast as ``rho = 1 - sigma_min+ / sigma_max``
of ``Z Z^T`` per step.

Data generation:

* ``Y`` (the mean of ``XQ``): Gaussian with entry scale ``y_scale``,
  resampled until its smallest singular value is >= 0.1 and no eigenvector
  of ``Y Y^T`` or ``Y^T Y`` is (nearly) orthogonal to the all-ones vector.
* ``XQ = Y + E`` with ``E = P_v G``: Gaussian noise with the direction
  ``v = Y^{-T} 1`` projected out, scaled so ``E[E E^T] <= delta1 I``.  This
  makes ``1^T Y^{-1} (XQ) N = 0`` hold sample by sample.
* ``Q`` is the GIN aggregation of a random graph with a large self weight
  (well conditioned), and ``X = (Y + E) Q^{-1}``.
* ``p ~ N(0, I)``, radially shrunk when ``|X| |Q| |p| > sqrt(b)``.
* ``y = w_true^T X Q N p`` with ``w_true`` orthogonal to ``v``, so the
  shifted model is well specified and ``w_true`` is recoverable.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .graphs import adjacency, make_er_graph
from .norms import q_gin, shift_matrix

log = logging.getLogger(__name__)

POS_TOL = 1e-12
MAX_ATTEMPTS = 1000


class TestbedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TestbedConfig:
    m: int = 2000
    n: int = 8
    delta1: float = 0.05
    b: float = None
    seed: int = 0
    y_scale: float = 0.5
    graph_density: float = 0.3
    self_weight: float = None

    def __post_init__(self):
        if self.m < 1 or self.n < 2 or self.delta1 < 0:
            raise ValueError("need m >= 1, n >= 2 and delta1 >= 0")

    @property
    def bound(self):
        return 25.0 * self.n if self.b is None else float(self.b)

    @property
    def xi(self):
        return 2.0 * self.n if self.self_weight is None else float(self.self_weight)


@dataclass
class LinearSample:
    X: np.ndarray
    Q: np.ndarray
    p: np.ndarray
    y: float
    XQ: np.ndarray = field(repr=False)  # exact Y + E; X is derived from it


@dataclass
class GroundTruth:
    Y: np.ndarray
    w_true: np.ndarray
    v: np.ndarray
    clipped: int = 0


@dataclass
class ConvergenceTrace:
    err_vanilla: np.ndarray
    err_shift: np.ndarray
    rho1: float
    rho2: float
    lr_vanilla: float
    lr_shift: float
    wstar_norm_vanilla: float
    wstar_norm_shift: float

    def bound_ratio(self):
        """Largest measured-error / (rho^t |w*|) over both traces."""
        t = np.arange(self.err_vanilla.size)
        out = 0.0
        for err, rho, wn in ((self.err_vanilla, self.rho1, self.wstar_norm_vanilla),
                             (self.err_shift, self.rho2, self.wstar_norm_shift)):
            bound = rho**t * wn
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(bound > 0, err / bound, np.where(err > 0, np.inf, 0.0))
            out = max(out, float(ratio.max()))
        return out


def _draw_y(n, scale, rng):
    ones = np.ones(n)
    for _ in range(MAX_ATTEMPTS):
        y = scale * rng.standard_normal((n, n))
        if linalg.singular_values(y)[-1] < 0.1:
            continue
        ok = True
        for gram in (y @ y.T, y.T @ y):
            _, vecs = linalg.sym_eigen(gram)
            if np.any(np.abs(ones @ vecs) < 1e-3 * np.linalg.norm(vecs, axis=0)):
                ok = False
                break
        if ok:
            return y
    raise TestbedError(f"could not draw a suitable Y in {MAX_ATTEMPTS} attempts")


def generate_dataset(config):
    """Samples and ground truth for ``config``; see the module docstring."""
    rng = np.random.default_rng(config.seed)
    n = config.n
    y_mean = _draw_y(n, config.y_scale, rng)
    ones = np.ones(n)
    v = np.linalg.solve(y_mean.T, ones)
    p_v = np.eye(n) - np.outer(v, v) / (v @ v)
    w_true = p_v @ rng.standard_normal(n)
    shift = shift_matrix(n)
    noise_scale = math.sqrt(config.delta1 / n)
    root_b = math.sqrt(config.bound)

    samples = []
    clipped = 0
    for _ in range(config.m):
        graph_seed = int(rng.integers(2**63 - 1))
        q = q_gin(adjacency(make_er_graph(n, config.graph_density, graph_seed)), config.xi)
        if config.delta1 > 0:
            xq = y_mean + p_v @ (noise_scale * rng.standard_normal((n, n)))
        else:
            xq = y_mean.copy()
        x = np.linalg.solve(q.T, xq.T).T
        p = rng.standard_normal(n)
        size = np.linalg.norm(x, 2) * np.linalg.norm(q, 2) * np.linalg.norm(p)
        if size > root_b:
            p *= root_b / size
            clipped += 1
        y = float(w_true @ (xq @ (shift @ p)))
        samples.append(LinearSample(X=x, Q=q, p=p, y=y, XQ=xq))
    if clipped:
        log.info("boundness: %d of %d importance vectors shrunk to |X||Q||p| = sqrt(b)", clipped, config.m)
    return samples, GroundTruth(Y=y_mean, w_true=w_true, v=v, clipped=clipped)


def combined_features(samples, shifted):
    n = samples[0].XQ.shape[1]
    shift = shift_matrix(n)
    cols = [s.XQ @ (shift @ s.p) if shifted else s.XQ @ s.p for s in samples]
    return np.stack(cols, axis=1)


def targets(samples):
    return np.array([s.y for s in samples])


def gram(z):
    return linalg.matmul(z, z.T)


def closed_form_optimum(z, y):
    """Minimum-norm least-squares solution (Z Z^T)^+ Z y."""
    return linalg.pseudoinverse(gram(z)) @ (z @ np.asarray(y, dtype=np.float64))


def positive_spectrum(z):
    evals, _ = linalg.sym_eigen(gram(z))
    return linalg.positive_extremes(evals, POS_TOL)


def rate(z):
    lo, hi = positive_spectrum(z)
    return 1.0 - lo / hi


def effective_condition_and_rates(z_vanilla, z_shift):
    return rate(z_vanilla), rate(z_shift)


def gradient_descent(z, y, steps, lr=None, w_star=None):
    """Run ``w <- w - lr (Z Z^T w - Z y)`` from zero; return ``(errors, lr, w_star)``.

    ``errors[t] = |w_t - w*|`` for ``t = 0..steps``; ``lr`` defaults to
    ``1 / sigma_max(Z Z^T)``.
    """
    zzt = gram(z)
    zy = z @ np.asarray(y, dtype=np.float64)
    _, top = positive_spectrum(z)
    if lr is None:
        lr = 1.0 / top
    elif lr > 2.0 / top:
        warnings.warn(f"learning rate {lr:.3g} exceeds 2/sigma_max = {2.0 / top:.3g}; expect divergence")
    if w_star is None:
        w_star = closed_form_optimum(z, y)
    w = np.zeros(z.shape[0])
    errors = np.empty(steps + 1)
    errors[0] = np.linalg.norm(w - w_star)
    for t in range(1, steps + 1):
        w = w - lr * (zzt @ w - zy)
        errors[t] = np.linalg.norm(w - w_star)
    return errors, lr, w_star


def steps_to_reach(rho, start, target, margin=1.0):
    """Steps for ``start * rho^t`` to fall to ``target``, times ``margin``."""
    if start <= target:
        return 0
    if rho <= 0.0:
        return 1
    return int(math.ceil(margin * math.log(target / start) / math.log(rho)))


def run_testbed(config, steps=None, floor=1e-10):
    """Both models on one generated dataset.

    By default the traces run until the faster model's bound ``rho^t``
    reaches ``floor`` (capped at 20000 steps) so every recorded step stays
    above float64 round-off.
    """
    samples, truth = generate_dataset(config)
    y = targets(samples)
    z_v = combined_features(samples, shifted=False)
    z_s = combined_features(samples, shifted=True)
    rho1, rho2 = effective_condition_and_rates(z_v, z_s)
    if steps is None:
        steps = min(20000, steps_to_reach(min(rho1, rho2), 1.0, floor))
    err_v, lr_v, ws_v = gradient_descent(z_v, y, steps)
    err_s, lr_s, ws_s = gradient_descent(z_s, y, steps)
    trace = ConvergenceTrace(
        err_vanilla=err_v, err_shift=err_s, rho1=rho1, rho2=rho2,
        lr_vanilla=lr_v, lr_shift=lr_s,
        wstar_norm_vanilla=float(np.linalg.norm(ws_v)),
        wstar_norm_shift=float(np.linalg.norm(ws_s)),
    )
    return trace, truth


def trial_seeds(master_seed, trials):
    """Independent per-trial seeds expanded from one master seed."""
    children = np.random.SeedSequence(master_seed).spawn(trials)
    return [int(c.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for c in children]


def csv_rows(traces):
    """Rows ``(trial, step, err_vanilla, err_shift, rho1, rho2)``."""
    rows = []
    for trial, tr in enumerate(traces):
        for t, (ev, es) in enumerate(zip(tr.err_vanilla, tr.err_shift)):
            rows.append((trial, t, ev, es, tr.rho1, tr.rho2))
    return rows
