"""Empirical checks of the random-initialization lemmas.

Covers concentration of layer norms, the layer-wise Gaussian moment
recursion, the rank of the last-hidden-layer feature matrix (including the
diagonally dominant witness) and the gradient-Lipschitz bound for the output
layer.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from lintrain._rng import rng_for
from lintrain.net import features, forward, softplus

QUADRATURE_NODES = 100


def _gauss_nodes(k):
    # probabilists' Hermite: weights sum to sqrt(2 pi)
    x, w = hermegauss(k)
    return x, w / math.sqrt(2 * math.pi)


def gaussian_second_moment(var, alpha, nodes=QUADRATURE_NODES):
    """E[softplus(g)^2] for g ~ N(0, var)."""
    x, w = _gauss_nodes(nodes)
    return float(w @ softplus(math.sqrt(var) * x, alpha) ** 2)


def gaussian_pair_moment(var, cov, alpha, nodes=QUADRATURE_NODES):
    """E[(softplus(g) - softplus(g'))^2], (g, g') centred with equal variance."""
    resid = var - cov * cov / var if var > 0 else 0.0
    if cov > var * (1 + 1e-12) or resid < -1e-12 * max(var, 1.0):
        raise ValueError(f"covariance [[{var}, {cov}], [{cov}, {var}]] is not positive semidefinite")
    if cov == var:
        return 0.0
    x, w = _gauss_nodes(nodes)
    sd = math.sqrt(var)
    g = sd * x[:, None]
    gp = (cov / sd) * x[:, None] + math.sqrt(max(resid, 0.0)) * x[None, :]
    diff = softplus(g, alpha) - softplus(gp, alpha)
    return float(w @ (diff * diff) @ w)


@dataclass
class MomentTable:
    p: np.ndarray        # p^(0..L)
    p_pair: np.ndarray   # p_ij^(0..L)
    err_p: np.ndarray
    err_pair: np.ndarray


def gaussian_moment_recursion(c_w, c_b, alpha, gamma, depth, nodes=QUADRATURE_NODES):
    """Expected squared activations p^(l) and pair differences p_ij^(l).

    p^(0) = 1 and p_ij^(0) = gamma.  Each layer maps (p, q) to
    (E sigma(g)^2, E (sigma(g) - sigma(g'))^2) with Var g = c_w p + c_b and
    Cov(g, g') = c_w (p - q/2) + c_b.  Errors are differences against a run
    with twice the nodes.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    p, q = [1.0], [float(gamma)]
    ep, eq = [0.0], [0.0]
    for _ in range(depth):
        var = c_w * p[-1] + c_b
        cov = c_w * (p[-1] - q[-1] / 2) + c_b
        vals = [gaussian_second_moment(var, alpha, k) for k in (nodes, 2 * nodes)]
        pairs = [gaussian_pair_moment(var, cov, alpha, k) for k in (nodes, 2 * nodes)]
        p.append(vals[1])
        q.append(pairs[1])
        ep.append(abs(vals[1] - vals[0]))
        eq.append(abs(pairs[1] - pairs[0]))
    return MomentTable(np.array(p), np.array(q), np.array(ep), np.array(eq))


def moment_recursion_for(spec, gamma, depth=None):
    return gaussian_moment_recursion(spec.c_w, spec.c_b, spec.alpha, gamma,
                                     spec.H if depth is None else depth)


@dataclass
class ConcentrationReport:
    widths: tuple
    deviations: dict      # width -> sqrt(m)-scaled deviations per trial
    iqr: dict
    spread_ratio: float   # max IQR / min IQR across widths


def _iqr(v):
    q75, q25 = np.percentile(v, [75, 25])
    return float(q75 - q25)


def layer_deviations(m, trials, x, c_w, c_b, alpha, seed=0, x_prime=None, nodes=QUADRATURE_NODES):
    """sqrt(m) * |‖sigma(Wx+b)‖^2/m - mean| over fresh (W, b) draws.

    With ``x_prime`` the difference ‖sigma(Wx+b) - sigma(Wx'+b)‖^2 is used
    instead, against its own Gaussian expectation.
    """
    x = np.asarray(x, dtype=float)
    if x_prime is None:
        mean = gaussian_second_moment(c_w * (x @ x) + c_b, alpha, nodes)
    else:
        xp = np.asarray(x_prime, dtype=float)
        var = c_w * (x @ x) + c_b
        var_p = c_w * (xp @ xp) + c_b
        if not np.isclose(var, var_p):
            raise ValueError("difference variant expects inputs of equal norm")
        mean = gaussian_pair_moment(var, c_w * (x @ xp) + c_b, alpha, nodes)
    out = np.empty(trials)
    for t in range(trials):
        rng = rng_for(seed, "concentration", m, t)
        W = math.sqrt(c_w) * rng.standard_normal((m, x.size))
        b = math.sqrt(c_b) * rng.standard_normal(m)
        h = softplus(W @ x + b, alpha)
        if x_prime is not None:
            h = h - softplus(W @ xp + b, alpha)
        out[t] = math.sqrt(m) * abs(h @ h / m - mean)
    return out


def concentration_suite(widths, trials, c_w=2.0, c_b=0.01, alpha=10.0, input_dim=16,
                        seed=0, difference=False):
    """Width-stability of the sqrt(m)-scaled norm deviation."""
    rng = rng_for(seed, "concentration-probe")
    x = rng.standard_normal(input_dim)
    x /= np.linalg.norm(x)
    xp = None
    if difference:
        xp = rng.standard_normal(input_dim)
        xp /= np.linalg.norm(xp)
    devs, iqr = {}, {}
    for m in widths:
        devs[m] = layer_deviations(m, trials, x, c_w, c_b, alpha, seed, xp)
        iqr[m] = _iqr(devs[m])
    spreads = list(iqr.values())
    return ConcentrationReport(tuple(widths), devs, iqr, max(spreads) / min(spreads))


def tail_frequencies(deviations, betas):
    """Empirical P(deviation >= beta) for each beta."""
    d = np.asarray(deviations)
    return np.array([np.mean(d >= b) for b in betas])


@dataclass
class FeatureMatrix:
    M: np.ndarray
    singular_values: np.ndarray
    rank: int
    threshold: float

    @property
    def n(self):
        return self.M.shape[0]

    @property
    def full_rank(self):
        return self.rank == self.n

    @classmethod
    def from_array(cls, M):
        M = np.asarray(M, dtype=float)
        s = np.linalg.svd(M, compute_uv=False)
        tol = rank_threshold(M.shape, s)
        return cls(M, s, int(np.sum(s > tol)), tol)


def rank_threshold(shape, s):
    return max(shape) * np.finfo(float).eps * (s[0] if len(s) else 0.0)


def feature_matrix(params, X):
    """M with rows [x_i^(H); 1]: the ones column is last."""
    return FeatureMatrix.from_array(features(params, X))


def rank_check(M, singular_values=None):
    """(numerical rank, rank == n) using the scaled machine-epsilon threshold."""
    if isinstance(M, FeatureMatrix):
        return M.rank, M.full_rank
    M = np.asarray(M, dtype=float)
    s = np.linalg.svd(M, compute_uv=False) if singular_values is None else singular_values
    rank = int(np.sum(s > rank_threshold(M.shape, s)))
    return rank, rank == M.shape[0]


def separation_margins(Xt):
    """‖x_i‖^2 - <x_i, x_j> for every ordered pair i != j (diagonal is +inf)."""
    Xt = np.asarray(Xt, dtype=float)
    G = Xt.T @ Xt
    margins = np.diag(G)[:, None] - G
    np.fill_diagonal(margins, np.inf)
    return margins


def separation_constant(Xt):
    """Half the smallest pairwise margin; the witness default."""
    return 0.5 * float(np.min(separation_margins(Xt)))


def witness_construction(Xt, c_gamma, beta, m_H=None, alpha=10.0):
    """Feature matrix at w_j = beta x_j, b_j = c_gamma beta / 2 - beta ‖x_j‖^2.

    ``Xt`` holds the previous-layer features x~_1..x~_n as columns.  Neurons
    beyond the first n get zero weights and biases.
    """
    Xt = np.asarray(Xt, dtype=float)
    n = Xt.shape[1]
    m_H = n if m_H is None else m_H
    if m_H < n:
        raise ValueError(f"need m_H >= n, got m_H={m_H}, n={n}")
    if n > 1 and not np.all(separation_margins(Xt) > c_gamma):
        raise ValueError(f"features are not separated by c_gamma={c_gamma}: smallest margin "
                         f"{np.min(separation_margins(Xt)):.6g}")
    Wt = np.zeros((m_H, Xt.shape[0]))
    bt = np.zeros(m_H)
    Wt[:n] = beta * Xt.T
    bt[:n] = c_gamma * beta / 2 - beta * np.sum(Xt * Xt, axis=0)
    body = softplus(Xt.T @ Wt.T + bt, alpha) / math.sqrt(m_H)
    return FeatureMatrix.from_array(np.hstack([body, np.ones((n, 1))]))


def dominance_margins(fm, sigma_minus=0.0):
    """|Mt_ii| - sum_{j != i} |Mt_ij| for the shifted square block Mt."""
    M = fm.M if isinstance(fm, FeatureMatrix) else np.asarray(fm)
    n = M.shape[0]
    m_H = M.shape[1] - 1
    Mt = np.abs(M[:, :n] - sigma_minus / math.sqrt(m_H))
    diag = np.diag(Mt)
    return diag - (Mt.sum(axis=1) - diag)


def lipschitz_probe(Z, Y, loss, pairs=100, seed=0, scale=1.0):
    """Largest ‖grad Jbar(w) - grad Jbar(w')‖ / ‖w - w'‖ over random pairs.

    Only the output block varies; Z holds the rows z_i^T.  Returns
    (max_ratio, bound) with bound = (zeta/n) sum ‖z_i‖^2.
    """
    Z = np.asarray(Z, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n = Z.shape[0]
    shape = (Y.shape[0], Z.shape[1])
    bound = loss.zeta / n * float(np.sum(Z * Z))
    rng = rng_for(seed, "lipschitz-probe")
    best = 0.0
    for _ in range(pairs):
        W = scale * rng.standard_normal(shape)
        Wp = scale * rng.standard_normal(shape)
        gap = np.linalg.norm(W - Wp)
        if gap == 0:
            continue
        gW = loss.grad(W @ Z.T, Y) @ Z / n
        gWp = loss.grad(Wp @ Z.T, Y) @ Z / n
        best = max(best, float(np.linalg.norm(gW - gWp) / gap))
    return best, bound


def lipschitz_probe_params(params, X, Y, loss, pairs=100, seed=0):
    return lipschitz_probe(features(params, X), Y, loss, pairs, seed)


def hidden_separation(params, X):
    """Smallest ‖x_i^(H-1)‖^2 - <x_i^(H-1), x_j^(H-1)> over pairs."""
    trace = forward(params, np.asarray(X, dtype=float))
    return float(np.min(separation_margins(trace.xs[-2])))


def monte_carlo_moments(c_w, c_b, alpha, gamma, depth, samples=10_000_000, batches=100, seed=0):
    """Sampling estimate of the moment recursion with standard errors.

    Each batch runs the whole recursion on its own draws, so the spread of
    batch estimates includes error propagated from earlier layers.
    """
    per = samples // batches
    est = np.empty((batches, 2, depth))
    for bidx in range(batches):
        rng = rng_for(seed, "moments-mc", bidx)
        p, q = 1.0, float(gamma)
        for l in range(depth):
            var = c_w * p + c_b
            cov = c_w * (p - q / 2) + c_b
            g = math.sqrt(var) * rng.standard_normal(per)
            rho = cov / var
            h = rho * g + math.sqrt(max(var * (1 - rho * rho), 0.0)) * rng.standard_normal(per)
            sg = softplus(g, alpha)
            diff = sg - softplus(h, alpha)
            p, q = float(np.mean(sg * sg)), float(np.mean(diff * diff))
            est[bidx, 0, l], est[bidx, 1, l] = p, q
    mean = est.mean(axis=0)
    se = est.std(axis=0, ddof=1) / math.sqrt(batches)
    return mean[0], mean[1], se[0], se[1]
