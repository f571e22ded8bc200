"""Singular-value checks of the aggregation matrix before and after the mean shift.

For an aggregation ``Q`` (n x n) and the shift projector ``N`` the ascending
singular values interlace,

    lam_1 <= mu_1 <= lam_2 <= ... <= lam_{n-1} <= mu_{n-1} <= lam_n,

where ``mu_1..mu_{n-1}`` are the singular values of ``QN`` other than the
zero that ``N`` always contributes.  ``spectrum_report`` measures this,
and the ``verify_*`` helpers measure the regular and complete graph
degeneracies of the shift.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import linalg
from .graphs import adjacency, make_complete_graph, make_regular_graph, one_hot_degree_features
from .norms import apply_shift_scale, q_gcn, q_gin, shift_matrix

log = logging.getLogger(__name__)

REL_TOL = 1e-8


@dataclass
class SpectrumReport:
    lam: np.ndarray        # singular values of Q, descending
    mu: np.ndarray         # singular values of QN, descending (last one ~0)
    interlacing_ok: bool
    zero_singular_present: bool
    cond_q: float
    cond_qn: float
    graph_id: object = None
    arch: str = ""
    equality_cases: int = 0

    @property
    def n(self):
        return self.lam.size

    @property
    def strict_improvement(self):
        return self.cond_qn < self.cond_q


def _positive_condition(values, scale):
    pos = values[values > REL_TOL * scale]
    if pos.size == 0:
        return float("inf")
    return float(pos.max() / pos.min())


def interlacing_violation(lam_asc, mu_asc):
    """Largest violation of the chain lam_i <= mu_i <= lam_{i+1}; <= 0 means it holds."""
    n = lam_asc.size
    mu = mu_asc[: n - 1]
    lower = lam_asc[: n - 1] - mu
    upper = mu - lam_asc[1:]
    return float(max(lower.max(initial=-np.inf), upper.max(initial=-np.inf)))


def spectrum_report(q, graph_id=None, arch=""):
    q = np.asarray(q, dtype=np.float64)
    n = q.shape[0]
    if q.ndim != 2 or q.shape[1] != n or n < 2:
        raise ValueError(f"spectrum_report needs a square matrix with n >= 2, got {q.shape}")
    qn = linalg.matmul(q, shift_matrix(n))
    lam = linalg.singular_values(q)
    mu = linalg.singular_values(qn)
    scale = float(lam[0])
    tol = REL_TOL * scale
    lam_asc = lam[::-1]
    # drop the structural zero (the smallest value) and compare the rest
    mu_asc = mu[::-1][1:]
    violation = interlacing_violation(lam_asc, mu_asc)
    zero_present = bool(mu[-1] <= tol)

    # equality cases: attribute to a right singular vector of Q orthogonal to 1
    equal = np.isclose(lam_asc[:-1], mu_asc, rtol=0.0, atol=tol) | np.isclose(lam_asc[1:], mu_asc, rtol=0.0, atol=tol)
    n_equal = int(np.sum(equal))
    if n_equal:
        evals, vecs = linalg.sym_eigen(q.T @ q)
        ortho = np.abs(vecs.sum(axis=0)) <= 1e-6
        log.debug("graph %s: %d equality case(s); %d right singular vector(s) with 1^T v = 0",
                  graph_id, n_equal, int(ortho.sum()))

    return SpectrumReport(
        lam=lam,
        mu=mu,
        interlacing_ok=violation <= tol,
        zero_singular_present=zero_present,
        cond_q=_positive_condition(lam, scale),
        cond_qn=_positive_condition(mu, scale),
        graph_id=graph_id,
        arch=arch,
        equality_cases=n_equal,
    )


def aggregation_matrix(graph, arch, xi=0.0):
    a = adjacency(graph)
    if arch == "gcn":
        return q_gcn(a)
    if arch == "gin":
        return q_gin(a, xi)
    raise ValueError(f"arch must be 'gin' or 'gcn', got {arch!r}")


def verify_regular_zero(n, r, xi, w=None, seed=0, arch="gin"):
    """Frobenius norm of S (W H0 Q) N for an r-regular graph with one-hot degree features.

    ``w`` defaults to a seeded Gaussian ``(r + 1) x (r + 1)`` matrix; S is the
    epsilon-stabilized per-row scaling that skips round-off-flat rows.
    """
    g = make_regular_graph(n, r, seed)
    h0 = one_hot_degree_features(g, r)
    if w is None:
        w = np.random.default_rng(seed).standard_normal((h0.shape[0], h0.shape[0]))
    q = q_gcn(adjacency(g)) if arch == "gcn" else q_gin(adjacency(g), xi)
    out = apply_shift_scale(w @ h0 @ q, n, safe=True)
    return linalg.frobenius(out)


def verify_complete_identity(n, xi):
    """Frobenius norm of Q_GIN(K_n) N - xi N."""
    a = adjacency(make_complete_graph(n))
    nmat = shift_matrix(n)
    return linalg.frobenius(q_gin(a, xi) @ nmat - xi * nmat)


def dataset_spectrum_survey(graphs, arch="gin", sample_count=None, seed=0, xi=0.0):
    """Spectrum reports for a seeded sample of graphs (n >= 2), ordered by graph index."""
    graphs = list(graphs)
    eligible = [i for i, g in enumerate(graphs) if g.n >= 2]
    if sample_count is not None and sample_count < len(eligible):
        rng = np.random.default_rng(seed)
        eligible = sorted(rng.choice(eligible, size=sample_count, replace=False).tolist())
    return [
        spectrum_report(aggregation_matrix(graphs[i], arch, xi), graph_id=i, arch=arch)
        for i in eligible
    ]
