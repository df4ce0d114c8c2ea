import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.stats import norm

from modecal.gp import (GpError, GpProposer, SquaredExponential, confidence_interval, expected_improvement,
                        gp_fit, gp_posterior, joint_posterior, multistart_sga, qei_gradient, qei_monte_carlo)


def kern(d=1, sf2=1.0, ell=1.0):
    return SquaredExponential(sf2, np.full(d, ell))


def random_state(rng, n=6, d=2):
    X = rng.random((n, d))
    y = np.sin(3 * X).sum(axis=1) + 0.1 * rng.standard_normal(n)
    return gp_fit(X, y, kern(d, 1.0, 0.4), noise=1e-4)


def test_single_point_interpolates():
    st = gp_fit(np.array([[0.3]]), np.array([2.0]), kern(), noise=1e-12)
    assert gp_posterior(st, np.array([0.3]))[0] == pytest.approx(2.0, abs=1e-8)


def test_empty_data_rejected():
    with pytest.raises(GpError):
        gp_fit(np.zeros((0, 1)), np.zeros(0), kern())


def test_interpolates_training_points(rng):
    X = rng.random((5, 8))
    y = rng.standard_normal(5)
    st = gp_fit(X, y, kern(8, 1.0, 0.7), noise=1e-10)
    m, S = joint_posterior(st, X)
    assert np.allclose(m, y, atol=1e-6)
    assert np.all(np.abs(np.diag(S)) < 1e-6)


def test_prior_reversion_far_away():
    st = gp_fit(np.array([[0.0], [1.0]]), np.array([1.0, 3.0]), kern(1, 2.0, 0.5), prior_mean=0.5)
    m, s = gp_posterior(st, np.array([100.0]))
    assert m == pytest.approx(0.5, rel=0.01)
    assert s == pytest.approx(np.sqrt(2.0), rel=0.01)


def test_two_point_conditioning_by_hand():
    x1, x2, xs = 0.0, 0.7, 0.4
    y1, y2, sf2, ell, sn2, mu = 1.0, -0.5, 1.3, 0.6, 1e-3, 0.2
    k = lambda a, b: sf2 * np.exp(-0.5 * (a - b) ** 2 / ell ** 2)
    K11, K22, K12 = k(x1, x1) + sn2, k(x2, x2) + sn2, k(x1, x2)
    det = K11 * K22 - K12 ** 2
    inv = np.array([[K22, -K12], [-K12, K11]]) / det
    ks = np.array([k(xs, x1), k(xs, x2)])
    mean = mu + ks @ inv @ np.array([y1 - mu, y2 - mu])
    var = sf2 - ks @ inv @ ks
    st = gp_fit(np.array([[x1], [x2]]), np.array([y1, y2]), kern(1, sf2, ell), noise=sn2, prior_mean=mu)
    m, s = gp_posterior(st, np.array([xs]))
    assert m == pytest.approx(mean, abs=1e-10)
    assert s ** 2 == pytest.approx(var, abs=1e-10)


def test_confidence_interval():
    lo, hi = confidence_interval(0.0, 10.0, 100, 1.96)
    assert (lo, hi) == pytest.approx((-1.96, 1.96))
    assert confidence_interval(3.0, 0.0) == (3.0, 3.0)
    assert confidence_interval(3.0, 2.0, z=0.0) == (3.0, 3.0)


def test_ei_closed_form_values():
    assert expected_improvement(1.0, 1.0, 1.0) == pytest.approx(0.398942, abs=1e-6)
    assert expected_improvement(0.0, 0.0, 1.0) == 1.0
    assert expected_improvement(2.0, 0.0, 1.0) == 0.0


def test_ei_matches_integral():
    m, s, f = 0.3, 0.8, 0.5
    y = np.linspace(m - 10 * s, m + 10 * s, 200_001)
    integrand = np.maximum(f - y, 0) * norm.pdf(y, m, s)
    assert expected_improvement(m, s, f) == pytest.approx(trapezoid(integrand, y), abs=1e-8)


def test_qei_q1_matches_closed_form(rng):
    st = random_state(rng)
    x = st.X[np.argmin(st.y)][None, :] + 0.15
    m, s = gp_posterior(st, x[0])
    assert expected_improvement(m, s, float(st.y.min())) > 1e-3
    f_star = float(st.y.min())
    est, se = qei_monte_carlo(st, x, f_star, n_samples=100_000, rng=np.random.default_rng(1))
    assert abs(est - expected_improvement(m, s, f_star)) < 3 * se


def test_qei_duplicate_points_equal_single(rng):
    st = random_state(rng)
    f_star = float(st.y.min())
    x = np.array([[0.2, 0.9]])
    one, se = qei_monte_carlo(st, x, f_star, n_samples=50_000, rng=np.random.default_rng(2))
    two, se2 = qei_monte_carlo(st, np.vstack([x, x]), f_star, n_samples=50_000, rng=np.random.default_rng(3),
                               jitter=1e-8)
    assert abs(one - two) < 3 * np.hypot(se, se2)


def test_qei_batch_beats_members(rng):
    st = random_state(rng)
    f_star = float(st.y.min())
    a, b = np.array([0.05, 0.05]), np.array([0.95, 0.95])
    q2, se = qei_monte_carlo(st, np.vstack([a, b]), f_star, n_samples=100_000, rng=np.random.default_rng(4))
    single = max(expected_improvement(*gp_posterior(st, a), f_star), expected_improvement(*gp_posterior(st, b), f_star))
    assert q2 >= single - 3 * se


def test_gradient_zero_without_improvement(rng):
    st = random_state(rng)
    g = qei_gradient(st, np.array([[0.4, 0.4], [0.6, 0.1]]), f_star=-1e6, Z=rng.standard_normal((100, 2)))
    assert np.all(g == 0.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_matches_crn_finite_differences(seed):
    rng = np.random.default_rng(seed)
    st = random_state(rng)
    best = st.X[np.argmin(st.y)]
    batch = np.clip(np.vstack([best + 0.05 * rng.standard_normal(2), rng.random(2)]), 0, 1)
    f_star = float(st.y.min())
    Z = np.random.default_rng(100 + seed).standard_normal((100_000, 2))
    g = qei_gradient(st, batch, f_star, Z)
    h = 1e-4
    fd = np.zeros_like(batch)
    for i in range(2):
        for k in range(2):
            up, dn = batch.copy(), batch.copy()
            up[i, k] += h
            dn[i, k] -= h
            fd[i, k] = (qei_monte_carlo(st, up, f_star, Z=Z)[0] - qei_monte_carlo(st, dn, f_star, Z=Z)[0]) / (2 * h)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 0.05


def test_q1_gradient_matches_analytic_ei_gradient(rng):
    st = random_state(rng)
    x = st.X[np.argmin(st.y)] + 0.1
    f_star = float(st.y.min())
    Z = np.random.default_rng(9).standard_normal((200_000, 1))
    g = qei_gradient(st, x[None, :], f_star, Z)[0]
    h = 1e-6
    ana = np.array([(expected_improvement(*gp_posterior(st, x + h * e), f_star)
                     - expected_improvement(*gp_posterior(st, x - h * e), f_star)) / (2 * h) for e in np.eye(2)])
    assert np.linalg.norm(g - ana) / np.linalg.norm(ana) < 0.05


def test_sga_beats_random_search_1d():
    X = np.array([[0.1], [0.3], [0.5], [0.7], [0.9]])
    y = (X[:, 0] - 0.62) ** 2 * 10
    st = gp_fit(X, y, kern(1, 1.0, 0.25), noise=1e-6)
    f_star = float(y.min())
    rng = np.random.default_rng(0)
    best = multistart_sga(st, 1, (np.zeros(1), np.ones(1)), restarts=4, steps=60, rng=rng)
    rand = np.random.default_rng(1).random((100, 1))
    ei = lambda x: expected_improvement(*gp_posterior(st, x), f_star)
    assert ei(best[0]) >= max(ei(r) for r in rand) - 1e-4


def test_sga_zero_steps_returns_initial_point(rng):
    st = random_state(rng)
    lo, hi = np.zeros(2), np.ones(2)
    out = multistart_sga(st, 1, (lo, hi), restarts=1, steps=0, rng=np.random.default_rng(3))
    expect = np.random.default_rng(3).random((1, 2))
    assert np.array_equal(out, expect)


def test_sga_deterministic(rng):
    st = random_state(rng)
    a = multistart_sga(st, 2, (np.zeros(2), np.ones(2)), restarts=2, steps=5, rng=np.random.default_rng(8))
    b = multistart_sga(st, 2, (np.zeros(2), np.ones(2)), restarts=2, steps=5, rng=np.random.default_rng(8))
    assert np.array_equal(a, b)


def test_proposer_stays_in_bounds(rng):
    lo, hi = np.full(8, -2.0), np.full(8, 3.0)
    prop = GpProposer(lo, hi, steps=5, restarts=2)
    P = lo + rng.random((12, 8)) * (hi - lo)
    L = np.abs(P).sum(axis=1)
    x = prop.propose(P, L, np.random.default_rng(0))
    assert x.shape == (8,) and np.all((x >= lo) & (x <= hi))
