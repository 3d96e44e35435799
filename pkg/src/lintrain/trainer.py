"""Masked gradient descent on the output layer and its convergence certificate.

Only the output block [W^(H+1), b^(H+1)] receives a nonzero learning rate,
1 / (c_z * zeta).  With the hidden layers frozen the objective is a convex,
(zeta/n) sum ||z_i||^2 -smooth function of that block, so the iterates obey

    J(w^t) <= L(f*) + c_z c_r zeta / (2 t),

which yields the step budget ceil(c_z c_r zeta / (2 eps)).
"""

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from lintrain.architect import param_count
from lintrain.losses import LossSpec
from lintrain.net import ForwardTrace, Params, features
from lintrain.verify import rank_check

MONOTONE_RTOL = 1e-12
RATE_RTOL = 1e-9


class CertificateError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class RankDeficientError(CertificateError):
    pass


class DescentViolation(CertificateError):
    pass


class BudgetExhausted(CertificateError):
    pass


def lr_mask(spec, c_z, zeta):
    """Learning-rate vector: 1/(c_z zeta) on the output block, 0 elsewhere."""
    if c_z <= 0 or zeta <= 0:
        raise ValueError("c_z and zeta must be positive")
    d = param_count(spec)
    eta = np.zeros(d)
    eta[d - spec.m_y * (spec.m_H + 1):] = 1.0 / (c_z * zeta)
    return eta


def masked_update(params, grad, eta):
    """theta - eta * grad J(theta) on the flattened parameter vector."""
    theta = params.flatten() - eta * grad.flatten()
    return Params.unflatten(theta, params.widths, params.alpha)


def estimate_cz(traces):
    """max(1, (1/n) sum_i ||z_i||^2) from forward traces or a feature matrix."""
    if isinstance(traces, ForwardTrace):
        Z = traces.z.reshape(traces.z.shape[0], -1).T
    elif isinstance(traces, np.ndarray):
        Z = np.atleast_2d(traces)
    else:
        traces = list(traces)
        if not traces:
            raise ValueError("need at least one trace")
        Z = np.stack([t.z for t in traces])
    return max(1.0, float(np.mean(np.sum(Z * Z, axis=1))))


def _svd_checked(M):
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    rank, ok = rank_check(M, singular_values=s)
    if not ok:
        tol = max(M.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
        raise RankDeficientError(
            f"feature matrix has rank {rank} < n={n}: singular value s_{rank + 1}="
            f"{s[min(rank, s.size - 1)]:.3e} is below threshold {tol:.3e}"
        )
    return U[:, :n], s[:n], Vt[:n]


def min_norm_interpolant(M, Y):
    """Smallest-Frobenius-norm Wbar with Wbar M^T = Y.

    M is the n x (m_H + 1) feature matrix, Y the m_y x n target matrix.
    """
    U, s, Vt = _svd_checked(M)
    return (np.asarray(Y, dtype=float) @ U / s) @ Vt


def nearest_interpolant(M, Y, W0):
    """Interpolant closest to W0 in Frobenius norm."""
    U, s, Vt = _svd_checked(M)
    residual = np.asarray(Y, dtype=float) - W0 @ np.asarray(M).T
    return W0 + (residual @ U / s) @ Vt


def output_layer_grad(Wbar, Z, Y, loss):
    """Gradient of Jbar(Wbar) = (1/n) sum loss(Wbar z_i, y_i); returns (grad, J)."""
    F = Wbar @ Z.T
    n = Z.shape[0]
    return loss.grad(F, Y) @ Z / n, loss.value(F, Y)


def masked_descent(W0, Z, Y, loss, eta):
    """Yield (k, Wbar^k, Jbar(Wbar^k)) for plain gradient descent at rate eta."""
    W = np.array(W0, dtype=float)
    k = 0
    while True:
        G, J = output_layer_grad(W, Z, Y, loss)
        yield k, W, J
        W = W - eta * G
        k += 1


@dataclass
class CertificateReport:
    c_z: float
    c_r: float
    zeta: float
    epsilon: float
    budget: int
    L_star: float
    initial: float
    achieved: float = math.nan
    steps: int = 0
    monotone: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    rate_ok: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    norm_ok: bool = False
    c_theta: float = math.nan
    w0_norm: float = math.nan
    wstar_norm: float = math.nan
    final_norm: float = math.nan
    trace: list = field(default_factory=list)
    success: bool = False
    message: str = ""

    @property
    def target(self):
        return self.L_star + self.epsilon

    @property
    def all_monotone(self):
        return bool(np.all(self.monotone))

    @property
    def all_rate_ok(self):
        return bool(np.all(self.rate_ok))

    def summary(self):
        return {
            "c_z": self.c_z, "c_r": self.c_r, "zeta": self.zeta, "epsilon": self.epsilon,
            "budget": self.budget, "steps": self.steps, "L_star": self.L_star,
            "initial": self.initial, "achieved": self.achieved,
            "monotone": self.all_monotone, "rate_ok": self.all_rate_ok,
            "norm_ok": self.norm_ok, "c_theta": self.c_theta, "success": self.success,
        }


def write_trace_csv(path, report, timing=True):
    header = ["step", "J", "dist_to_wstar", "w_norm"] + (["wall_clock"] if timing else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in report.trace:
            vals = [str(row[0])] + [f"{v:.17g}" for v in row[1:4]]
            if timing:
                vals.append(f"{row[4]:.6f}")
            w.writerow(vals)


def _flags(buf):
    return np.frombuffer(bytes(buf), dtype=bool).copy()


def train(params0, dataset, loss=None, epsilon=1e-3, max_steps=None, *,
          c_z=None, strict=True, record_every=1, time_limit=None):
    """Masked gradient descent until J <= L(f*) + epsilon or the budget runs out.

    Returns (params_t, report).  With ``strict`` a rank failure, a descent
    violation or an exhausted budget raises a CertificateError carrying the
    report; otherwise the report's ``success`` flag says what happened.
    ``time_limit`` (seconds) stops the run early as an unsuccessful one.
    """
    loss = loss or LossSpec("squared")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    Z = features(params0, dataset.X)
    Y = dataset.Y
    zeta = loss.zeta
    c_z = estimate_cz(Z) if c_z is None else float(c_z)

    W0 = params0.output_layer
    W_star = min_norm_interpolant(Z, Y)
    W_near = nearest_interpolant(Z, Y, W0)
    L_star = loss.value(W_star @ Z.T, Y)
    c_r = float(np.sum((W_near - W0) ** 2))
    budget = math.ceil(c_z * c_r * zeta / (2 * epsilon))
    limit = budget if max_steps is None else min(budget, int(max_steps))

    report = CertificateReport(
        c_z=c_z, c_r=c_r, zeta=zeta, epsilon=epsilon, budget=budget, L_star=L_star,
        initial=loss.value(W0 @ Z.T, Y),
        w0_norm=float(np.linalg.norm(W0)), wstar_norm=float(np.linalg.norm(W_star)),
    )
    report.c_theta = (report.w0_norm + 2 * report.wstar_norm) ** 2
    eta = 1.0 / (c_z * zeta)
    scale = c_z * c_r * zeta / 2
    # one byte per step; the budget itself can be far too large to preallocate
    monotone = bytearray()
    rate_ok = bytearray()

    start = time.perf_counter()
    prev = math.inf
    W = W0
    timed_out = False
    for k, W, J in masked_descent(W0, Z, Y, loss, eta):
        if k:
            monotone.append(J <= prev * (1 + MONOTONE_RTOL))
            rate_ok.append(J <= (L_star + scale / k) * (1 + RATE_RTOL))
        done = J <= report.target
        if k % record_every == 0 or done or k >= limit:
            report.trace.append((k, J, float(np.linalg.norm(W - W_star)),
                                 float(np.linalg.norm(W)), time.perf_counter() - start))
        if k and not monotone[-1] and strict:
            report.steps, report.achieved = k, J
            report.monotone, report.rate_ok = _flags(monotone), _flags(rate_ok)
            raise DescentViolation(
                f"objective rose from {prev!r} to {J!r} at step {k}; "
                "the smoothness constant c_z is underestimated", report)
        prev = J
        if done or k >= limit:
            break
        if time_limit is not None and k % 1000 == 0 and time.perf_counter() - start > time_limit:
            timed_out = True
            break

    report.steps, report.achieved = k, J
    report.monotone, report.rate_ok = _flags(monotone), _flags(rate_ok)
    report.final_norm = float(np.linalg.norm(W))
    report.norm_ok = report.final_norm ** 2 <= report.c_theta
    report.success = bool(J <= report.target and report.all_monotone)
    if not report.success:
        why = "time limit" if timed_out else "budget" if k >= budget else "max_steps"
        report.message = (f"J={J:.6g} above target {report.target:.6g} after {k} steps "
                          f"({why} exhausted; step limit {limit})")
        if strict:
            raise BudgetExhausted(report.message, report)
    return params0.with_output_layer(W), report
