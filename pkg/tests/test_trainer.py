import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lintrain.architect import ArchSpec, size_widths
from lintrain.data import Dataset, synthesize
from lintrain.losses import LossSpec
from lintrain.net import features, forward, grad_objective, init_params
from lintrain.trainer import (BudgetExhausted, CertificateReport, DescentViolation,
                              RankDeficientError, estimate_cz, lr_mask, masked_descent,
                              masked_update, min_norm_interpolant, nearest_interpolant, train,
                              write_trace_csv)


@pytest.fixture(scope="module")
def small_problem():
    ds = synthesize(16, 6, 3, "separable", seed=0)
    spec = size_widths(ds.n, 2, 0.1, ds.m_x, ds.m_y, last_width_factor=2)
    return ds, spec, init_params(spec, 0)


def test_lr_mask_example():
    spec = ArchSpec((2, 3, 1))
    eta = lr_mask(spec, c_z=1.0, zeta=2.0)
    assert eta.size == 13 and np.count_nonzero(eta) == 4
    assert np.all(eta[-4:] == 0.5)
    assert np.all(lr_mask(spec, 1e300, 2.0) < 1e-299)


def test_masked_update_leaves_hidden_layers_bitwise_unchanged(small_problem):
    ds, spec, p = small_problem
    loss = LossSpec("squared")
    c_z = estimate_cz(features(p, ds.X))
    eta = lr_mask(spec, c_z, loss.zeta)
    q = p
    for _ in range(3):
        q = masked_update(q, grad_objective(q, ds.X, ds.Y, loss), eta)
    for a, b in zip(p.weights[:-1] + p.biases[:-1], q.weights[:-1] + q.biases[:-1]):
        assert np.array_equal(a, b)
    assert not np.array_equal(p.weights[-1], q.weights[-1])


def test_masked_update_agrees_with_output_layer_descent(small_problem):
    ds, spec, p = small_problem
    loss = LossSpec("squared")
    Z = features(p, ds.X)
    c_z = estimate_cz(Z)
    eta = lr_mask(spec, c_z, loss.zeta)
    q = masked_update(p, grad_objective(p, ds.X, ds.Y, loss), eta)
    gen = masked_descent(p.output_layer, Z, ds.Y, loss, 1 / (c_z * loss.zeta))
    next(gen)
    _, W1, _ = next(gen)
    assert np.allclose(q.output_layer, W1, rtol=1e-12, atol=1e-14)


def test_estimate_cz_examples():
    assert estimate_cz(np.zeros((4, 3))) == 1.0
    assert estimate_cz(np.array([[1.0, 1.0]])) == 2.0
    Z = np.random.default_rng(0).standard_normal((5, 4)) * 3
    raw = np.mean(np.sum(Z * Z, axis=1))
    assert estimate_cz(2 * Z) == pytest.approx(4 * raw, rel=1e-14)


def test_estimate_cz_accepts_traces(small_problem):
    ds, _, p = small_problem
    tr = forward(p, ds.X)
    assert estimate_cz(tr) == pytest.approx(estimate_cz(features(p, ds.X)), rel=1e-14)


def test_min_norm_one_equation():
    M = np.zeros((1, 5))
    M[0, 0] = M[0, -1] = 1.0
    W = min_norm_interpolant(M, np.array([[3.0]]))
    assert np.allclose(W, [[1.5, 0, 0, 0, 1.5]], atol=1e-15)


def test_min_norm_orthogonal_system():
    Q, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((6, 6)))
    Y = np.random.default_rng(2).standard_normal((2, 6))
    assert np.allclose(min_norm_interpolant(Q, Y), Y @ Q, atol=1e-12)


def test_min_norm_beats_null_space_perturbations():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((8, 20))
    Y = rng.uniform(-1, 1, (3, 8))
    W = min_norm_interpolant(M, Y)
    assert np.max(np.abs(W @ M.T - Y)) <= 1e-8
    _, _, Vt = np.linalg.svd(M)
    null = Vt[8:]
    for _ in range(100):
        Wp = W + rng.standard_normal((3, null.shape[0])) @ null
        assert np.max(np.abs(Wp @ M.T - Y)) <= 1e-8
        assert np.linalg.norm(W) <= np.linalg.norm(Wp)


def test_nearest_interpolant_is_projection():
    rng = np.random.default_rng(4)
    M = rng.standard_normal((5, 9))
    Y = rng.standard_normal((2, 5))
    W0 = rng.standard_normal((2, 9))
    Wn = nearest_interpolant(M, Y, W0)
    assert np.allclose(Wn @ M.T, Y, atol=1e-10)
    # W0 - Wn lies in the row space of M
    P = np.linalg.pinv(M) @ M
    assert np.allclose((W0 - Wn) @ P, W0 - Wn, atol=1e-10)


def test_rank_deficiency_names_singular_value():
    M = np.ones((3, 4))
    with pytest.raises(RankDeficientError, match="singular value"):
        min_norm_interpolant(M, np.zeros((1, 3)))


def test_scalar_descent_matches_closed_form():
    z = np.array([[0.8, 1.0]])        # n = 1, feature plus bias
    y = np.array([[0.5]])
    W0 = np.array([[0.3, -0.2]])
    loss = LossSpec("squared")
    c_z = estimate_cz(z)
    eta = 1 / (c_z * loss.zeta)
    zz = float(np.sum(z * z))
    gen = masked_descent(W0, z, y, loss, eta)
    r0 = (W0 @ z.T - y).item()
    for k in range(20):
        step, W, J = next(gen)
        # residual contracts by (1 - 2 eta ||z||^2) each step
        r = r0 * (1 - 2 * eta * zz) ** k
        assert J == pytest.approx(r * r, rel=1e-10, abs=1e-300)


def test_train_certifies_realizable_problem(small_problem):
    ds, spec, p = small_problem
    params, rep = train(p, ds, epsilon=1e-3)
    assert rep.success and rep.achieved <= rep.target
    assert rep.L_star < 1e-20
    assert rep.steps <= rep.budget
    assert rep.all_monotone and rep.all_rate_ok and rep.norm_ok
    assert rep.final_norm <= rep.w0_norm + 2 * rep.wstar_norm
    for a, b in zip(p.weights[:-1], params.weights[:-1]):
        assert np.array_equal(a, b)


def test_train_huge_epsilon_stops_immediately(small_problem):
    ds, _, p = small_problem
    _, rep = train(p, ds, epsilon=1e6)
    assert rep.budget >= 1 and rep.steps <= 1 and rep.success


def test_budget_formula(small_problem):
    ds, _, p = small_problem
    _, rep = train(p, ds, epsilon=1e-2)
    assert rep.budget == math.ceil(rep.c_z * rep.c_r * rep.zeta / (2 * 1e-2))


def test_exhausted_max_steps(small_problem):
    ds, _, p = small_problem
    with pytest.raises(BudgetExhausted) as info:
        train(p, ds, epsilon=1e-9, max_steps=5)
    assert info.value.report.steps == 5
    _, rep = train(p, ds, epsilon=1e-9, max_steps=5, strict=False)
    assert not rep.success and "max_steps" in rep.message


def test_underestimated_cz_triggers_descent_violation(small_problem):
    ds, _, p = small_problem
    with pytest.raises(DescentViolation):
        train(p, ds, epsilon=1e-6, c_z=1e-3)


def test_logistic_loss_run_descends(small_problem):
    ds, _, p = small_problem
    Y = 2 * ds.Y - 1
    signed = Dataset(ds.X, Y, ds.labels)
    _, rep = train(p, signed, LossSpec("logistic"), epsilon=1e-2, max_steps=300, strict=False)
    assert rep.all_monotone and rep.achieved < rep.initial


def test_trace_csv(tmp_path, small_problem):
    ds, _, p = small_problem
    _, rep = train(p, ds, epsilon=1e-2, record_every=10)
    write_trace_csv(tmp_path / "t.csv", rep, timing=False)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "step,J,dist_to_wstar,w_norm"
    assert int(lines[-1].split(",")[0]) == rep.steps
    write_trace_csv(tmp_path / "u.csv", rep)
    assert (tmp_path / "u.csv").read_text().splitlines()[0].endswith("wall_clock")


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_output_objective_midpoint_convex(seed):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((6, 5))
    Y = rng.uniform(-1, 1, (2, 6))
    for kind in ("squared", "logistic"):
        loss = LossSpec(kind)
        for _ in range(50):
            A, B = rng.standard_normal((2, 5)) * 3, rng.standard_normal((2, 5)) * 3
            mid = loss.value(((A + B) / 2) @ Z.T, Y)
            ends = 0.5 * (loss.value(A @ Z.T, Y) + loss.value(B @ Z.T, Y))
            assert mid <= ends + 1e-12 * max(1.0, abs(ends))


def test_report_summary_keys():
    rep = CertificateReport(1.0, 2.0, 2.0, 0.1, 20, 0.0, 1.0)
    assert {"c_z", "c_r", "budget", "monotone", "norm_ok"} <= set(rep.summary())
