"""Capacity bounds for the Jacobian of theta -> (f(x_1), ..., f(x_n)) and the
margin-based generalization bound for output-layer training."""

import math
from dataclasses import dataclass

import numpy as np

from lintrain.net import forward, jacobian_fX


class BoundViolation(AssertionError):
    pass


def frobenius_bound_per_sample(theta_sq_norm, H, m_y):
    """2(H+1) ((m_y^2 + H + ‖theta‖^2) / (H+1))^(H+1)."""
    return 2 * (H + 1) * ((m_y ** 2 + H + theta_sq_norm) / (H + 1)) ** (H + 1)


def trace_norm_bound_holds(params, X, rtol=1e-12):
    """1 + ‖x^(l)‖^2 <= (1 + ‖x‖^2) prod_{i<=l} (1 + ‖W^(i)‖_F^2 + ‖b^(i)‖^2) for every l."""
    trace = forward(params, X)
    x0 = np.atleast_2d(trace.xs[0].T).T
    lhs0 = 1 + np.sum(x0 * x0, axis=0)
    factor = np.ones_like(lhs0)
    ok = True
    for l in range(1, params.H + 1):
        W, b = params.weights[l - 1], params.biases[l - 1]
        factor = factor * (1 + np.sum(W * W) + b @ b)
        xl = np.atleast_2d(trace.xs[l].T).T
        lhs = 1 + np.sum(xl * xl, axis=0)
        ok &= bool(np.all(lhs <= lhs0 * factor * (1 + rtol)))
    return ok


def jacobian_frobenius_bound(params, X, check=True):
    """(observed ‖Jac f_X‖_F^2, n * per-sample bound) for unit-norm inputs.

    Also verifies the forward-trace norm recursion on the same inputs.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[1]
    jac = jacobian_fX(params, X)
    observed = float(np.sum(jac * jac))
    theta = params.flatten()
    bound = n * frobenius_bound_per_sample(float(theta @ theta), params.H, params.widths[-1])
    if check:
        if not trace_norm_bound_holds(params, X):
            raise BoundViolation("forward-trace norm recursion violated")
        if observed > bound:
            raise BoundViolation(f"Jacobian Frobenius norm^2 {observed!r} exceeds bound {bound!r}")
    return observed, bound


def log_volume(jac):
    """(sum_i log s_i, (d/2) log(‖J‖_F^2 / d)) for a tall Jacobian with d columns."""
    jac = np.asarray(jac, dtype=float)
    rows, d = jac.shape
    if rows < d:
        raise ValueError(f"Jacobian must be tall (n m_y >= d), got {jac.shape}")
    s = np.linalg.svd(jac, compute_uv=False)
    with np.errstate(divide="ignore"):
        logvol = float(np.sum(np.log(s))) if np.all(s > 0) else -math.inf
    fro2 = float(np.sum(jac * jac))
    amgm = 0.5 * d * math.log(fro2 / d) if fro2 > 0 else -math.inf
    return logvol, amgm


def jacobian_log_volume(params, X, check=True, rtol=1e-9):
    logvol, amgm = log_volume(jacobian_fX(params, X))
    if check and logvol > amgm + rtol * max(1.0, abs(amgm)):
        raise BoundViolation(f"log volume {logvol!r} exceeds AM-GM bound {amgm!r}")
    return logvol, amgm


@dataclass
class FeasibilityVerdict:
    log_lhs: float
    log_rhs: float
    feasible: bool
    underparameterized: bool   # d < n m_y


def capacity_feasibility(n, d, m_y, H, epsilon, R, C=1.0):
    """Compare both sides of

        C R n / d^{3/2} * (m_y^2 + H + R^2)^{H+1} / H^H  >=  (2/sqrt(eps))^{n m_y / d - 1}

    in log space.
    """
    if min(n, d, m_y, H, epsilon, R, C) <= 0:
        raise ValueError("all arguments must be positive")
    log_lhs = (math.log(C) + math.log(R) + math.log(n) - 1.5 * math.log(d)
               + (H + 1) * math.log(m_y ** 2 + H + R * R) - H * math.log(H))
    log_rhs = (n * m_y / d - 1) * (math.log(2) - 0.5 * math.log(epsilon))
    return FeasibilityVerdict(log_lhs, log_rhs, log_lhs >= log_rhs, d < n * m_y)


def minimal_feasible_radius(n, d, m_y, H, epsilon, C=1.0, hi=2.0, tol=1e-10):
    """Smallest R making the capacity inequality hold (its left side grows with R)."""
    def ok(R):
        return capacity_feasibility(n, d, m_y, H, epsilon, R, C).feasible

    lo = 1e-300
    if ok(lo):
        return lo
    while not ok(hi):
        lo, hi = hi, hi * 2
    while (hi - lo) > tol * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def margin_losses(f, j, rho):
    """Ramp margin loss and 0-1 loss for class index ``j`` (0-based)."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    f = np.asarray(f, dtype=float)
    others = np.delete(f, j)
    margin = f[j] - np.max(others)
    ramp = min(max(1 - margin / rho, 0.0), 1.0)
    zero_one = float(np.argmax(f) != j)
    return ramp, zero_one


def margin_risk(F, labels, rho):
    """Average ramp loss over the columns of F (vectorised margin_losses)."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    F = np.asarray(F, dtype=float)
    labels = np.asarray(labels, dtype=int)
    cols = np.arange(F.shape[1])
    true = F[labels, cols]
    rest = F.copy()
    rest[labels, cols] = -np.inf
    margin = true - rest.max(axis=0)
    return float(np.mean(np.clip(1 - margin / rho, 0.0, 1.0)))


def accuracy(F, labels):
    return float(np.mean(np.argmax(F, axis=0) == np.asarray(labels)))


def weight_norm(Wbar):
    """‖Wbar^T‖_{2,inf}: the largest Euclidean norm of an output unit's weights."""
    return float(np.max(np.linalg.norm(np.asarray(Wbar, dtype=float), axis=1)))


def feature_constant(Z):
    """c_hat = 2 max_i ‖z_i‖ over the rows of the feature matrix."""
    Z = np.asarray(Z, dtype=float)
    return 2 * float(np.max(np.linalg.norm(Z, axis=1)))


@dataclass
class GenBoundReport:
    rho: float
    varsigma: float
    weight_norm: float
    c_hat: float
    complexity_term: float
    confidence_term: float
    margin_risk: float = math.nan

    @property
    def bound_value(self):
        return self.complexity_term + self.confidence_term


def generalization_bound(Wbar, n, m_y, rho, varsigma, delta_prime, c_hat):
    """c m_y^2 k / (rho varsigma sqrt n) + sqrt(ln(pi^2 k^2 / delta') / (2n)),
    with k = max(ceil(varsigma ‖Wbar^T‖_{2,inf}), 1)."""
    if rho <= 0 or varsigma < 1 or not 0 < delta_prime < 1 or c_hat <= 0:
        raise ValueError("need rho > 0, varsigma >= 1, delta' in (0,1), c_hat > 0")
    norm = weight_norm(Wbar)
    k = max(math.ceil(varsigma * norm), 1)
    first = c_hat * m_y ** 2 * k / (rho * varsigma * math.sqrt(n))
    second = math.sqrt(math.log(math.pi ** 2 * k * k / delta_prime) / (2 * n))
    return GenBoundReport(rho, varsigma, norm, c_hat, first, second)
