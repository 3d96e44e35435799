import math

import mpmath
import numpy as np
import pytest

from lintrain.architect import ArchSpec, size_widths
from lintrain.data import synthesize
from lintrain.losses import LossSpec
from lintrain.net import features, forward, init_params, softplus
from lintrain.verify import (FeatureMatrix, concentration_suite, dominance_margins,
                             feature_matrix, gaussian_moment_recursion, gaussian_pair_moment,
                             gaussian_second_moment, hidden_separation, layer_deviations,
                             lipschitz_probe, monte_carlo_moments, rank_check,
                             separation_constant, tail_frequencies, witness_construction)


# -- quadrature and the moment recursion

def test_relu_limit_halves_second_moment():
    assert gaussian_second_moment(2.0, math.inf) == pytest.approx(1.0, abs=1e-12)


def test_second_moment_against_mpmath():
    mpmath.mp.dps = 30
    var, alpha = 2.01, 10.0

    def integrand(t):
        g = mpmath.sqrt(var) * t
        sp = mpmath.log(1 + mpmath.exp(alpha * g)) / alpha
        return sp ** 2 * mpmath.npdf(t)

    ref = mpmath.quad(integrand, [-mpmath.inf, 0, mpmath.inf])
    assert gaussian_second_moment(var, alpha, 200) == pytest.approx(float(ref), rel=1e-4)


def test_identical_points_stay_identical():
    table = gaussian_moment_recursion(2.0, 0.01, 10.0, 0.0, 4)
    assert np.allclose(table.p_pair, 0.0, atol=1e-14)


def test_non_psd_covariance_rejected():
    with pytest.raises(ValueError):
        gaussian_pair_moment(1.0, 1.5, 10.0)


def test_quadrature_error_estimate_is_reported():
    table = gaussian_moment_recursion(2.0, 0.01, 10.0, 1.0, 2)
    assert table.p.shape == (3,) and table.p[0] == 1.0 and table.p_pair[0] == 1.0
    assert np.all(table.err_p[1:] > 0) and np.all(table.err_p < 1e-3)


def test_first_layer_matches_monte_carlo():
    table = gaussian_moment_recursion(2.0, 0.01, 10.0, 1.0, 1)
    p, q, sp, sq = monte_carlo_moments(2.0, 0.01, 10.0, 1.0, 1, samples=2_000_000, seed=4)
    assert abs(table.p[1] - p[0]) <= 3 * sp[0]
    assert abs(table.p_pair[1] - q[0]) <= 3 * sq[0]


def test_recursion_predicts_actual_network_norms():
    # |‖x^(l)‖^2 - p^(l)| <= 10 / sqrt(min width) in >= 95% of seeds
    spec = ArchSpec((16, 256, 256, 2))
    table = gaussian_moment_recursion(spec.c_w, spec.c_b, spec.alpha, 1.0, 2)
    x = np.random.default_rng(0).standard_normal(16)
    x /= np.linalg.norm(x)
    tol = 10 / math.sqrt(256)
    hits = 0
    for s in range(1000):
        xs = forward(init_params(spec, s), x).xs
        hits += all(abs(xs[l] @ xs[l] - table.p[l]) <= tol for l in (1, 2))
    assert hits >= 950


# -- concentration

def test_concentration_width_stable():
    rep = concentration_suite([64, 256, 1024], 300, seed=1)
    assert 1 / 3 <= rep.spread_ratio <= 3


def test_difference_variant_zero_for_identical_inputs():
    x = np.ones(9) / 3
    devs = layer_deviations(128, 20, x, 2.0, 0.01, 10.0, x_prime=x)
    assert np.all(devs == 0)


def test_tail_is_sub_gaussian():
    x = np.ones(16) / 4
    devs = layer_deviations(256, 10_000, x, 2.0, 0.01, 10.0, seed=2)
    beta = np.percentile(devs, 80)
    f1, f2 = tail_frequencies(devs, [beta, 2 * beta])
    assert 0 < f1 <= 0.21
    assert f2 <= f1 ** 2


# -- rank of the feature matrix

def test_rank_at_random_init():
    ds = synthesize(24, 6, 3, seed=0)
    spec = size_widths(ds.n, 2, 0.1, ds.m_x, ds.m_y)
    full = sum(feature_matrix(init_params(spec, s), ds.X).full_rank for s in range(100))
    assert full >= 99


def test_duplicate_rows_and_single_row():
    M = np.random.default_rng(0).standard_normal((4, 9))
    M[3] = M[1]
    assert rank_check(M) == (3, False)
    assert rank_check(np.array([[0.0, 0.0, 1.0]]))[1]
    assert not FeatureMatrix.from_array(M).full_rank


def test_witness_on_orthonormal_features():
    fm = witness_construction(np.eye(4), 0.5, 100.0)
    assert fm.rank == 4
    assert np.all(dominance_margins(fm) > 0)


def test_witness_beta_zero_is_degenerate():
    fm = witness_construction(np.eye(4), 0.5, 0.0)
    assert fm.rank <= 2
    assert np.allclose(fm.M[:, :-1], softplus(0.0) / 2)


def test_witness_dominance_grows_with_beta():
    Xt = synthesize(8, 5, 2, "random", seed=3).X
    c = separation_constant(Xt)
    margins = [np.min(dominance_margins(witness_construction(Xt, c, b))) for b in (1, 10, 100, 1000)]
    assert margins[-1] > 0
    tail = margins[1:]
    assert all(b >= a for a, b in zip(tail, tail[1:]))


def test_witness_rejects_insufficient_separation():
    with pytest.raises(ValueError):
        witness_construction(np.eye(3), 2.0, 100.0)


def test_witness_full_rank_on_separated_sets():
    for t in range(10):
        Xt = synthesize(20, 8, 2, "random", seed=t).X
        assert witness_construction(Xt, separation_constant(Xt), 100.0, m_H=30).full_rank


# -- Lipschitz probe

def test_lipschitz_scalar_case_approaches_bound():
    ratio, bound = lipschitz_probe(np.array([[1.0, 1.0]]), np.array([[0.3]]), LossSpec("squared"))
    assert bound == 4.0
    assert 3.9 < ratio <= 4.0 * (1 + 1e-12)


def test_lipschitz_scaling():
    rng = np.random.default_rng(1)
    Z = rng.standard_normal((6, 4))
    Y = rng.uniform(-1, 1, (2, 6))
    r1, b1 = lipschitz_probe(Z, Y, LossSpec("squared"), seed=5)
    r2, b2 = lipschitz_probe(2 * Z, Y, LossSpec("squared"), seed=5)
    assert b2 == pytest.approx(4 * b1, rel=1e-14)
    assert r2 <= 4 * r1 * (1 + 1e-12)
    for kind in ("squared", "logistic"):
        r, b = lipschitz_probe(Z, Y, LossSpec(kind), scale=3.0)
        assert r <= b * (1 + 1e-6)


def test_hidden_separation_at_schedule_widths():
    # the guarantee needs C large relative to 1/gamma; this set has gamma ~ 0.57
    ds = synthesize(64, 16, 2, seed=0)
    spec = size_widths(ds.n, 2, 0.1, ds.m_x, ds.m_y)
    ok = sum(hidden_separation(init_params(spec, s), ds.X) > 0 for s in range(40))
    assert ok >= 38


def test_feature_rows_end_with_ones():
    spec = ArchSpec((3, 5, 2))
    Z = features(init_params(spec, 0), synthesize(4, 3, 2, seed=0).X)
    assert np.array_equal(Z[:, -1], np.ones(4))
