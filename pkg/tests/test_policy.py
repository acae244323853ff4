import threading

import numpy as np
import pytest
import scipy.linalg

from uncaps.env import mass_spring_damper
from uncaps.policy import (GAIN_CACHE_QUANTUM, LQRPolicyProvider,
                           LinearFeedbackRule, averaged_policy_action,
                           dlqr_gain, ga_action, gaussian_fit, solve_dare,
                           uas_action)
from uncaps.rff import OptimalParamSet


class AffineProvider:
    """Test double whose action is affine in theta: u = W theta + c."""

    def __init__(self, w, c):
        self.w = np.asarray(w, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.dimension = self.w.shape[1]

    def action(self, theta, state):
        return self.w @ np.asarray(theta, dtype=float) + self.c


def riccati_iteration_oracle(a, b, q, r, tol=1e-12):
    # independent fixed-point iteration from P = Q
    p = q.copy()
    for _ in range(100_000):
        btp = b.T @ p
        k = np.linalg.solve(r + btp @ b, btp @ a)
        p_next = q + a.T @ p @ a - (a.T @ p @ b) @ k
        if np.max(np.abs(p_next - p)) <= tol:
            return p_next
        p = p_next
    raise AssertionError("oracle did not converge")


# --- Riccati / gains ---------------------------------------------------------

def test_dare_scalar_decayed_state():
    # A = 0: P = Q and the gain vanishes
    a = np.array([[0.0]])
    b = np.array([[0.7]])
    q = np.array([[2.5]])
    r = np.array([[0.3]])
    p = solve_dare(a, b, q, r)
    assert p[0, 0] == pytest.approx(2.5, abs=1e-10)
    assert dlqr_gain(a, b, q, r)[0, 0] == pytest.approx(0.0, abs=1e-12)


def test_dare_scalar_unit_system_matches_oracles():
    a = b = q = r = np.array([[1.0]])
    k = dlqr_gain(a, b, q, r)[0, 0]
    p_oracle = riccati_iteration_oracle(a, b, q, r)
    k_oracle = p_oracle[0, 0] / (1.0 + p_oracle[0, 0])
    assert k == pytest.approx(k_oracle, abs=1e-8)
    # closed form: P is the golden ratio, K = 1/phi
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    assert k == pytest.approx(1.0 / golden, abs=1e-8)


def test_dare_matches_scipy_on_msd_dynamics():
    plant = mass_spring_damper(dimension=3)
    for theta in [np.array([0.1, 0.2, 0.9]), np.array([0.8, 0.9, 0.1])]:
        a, b = plant.dynamics(theta)
        p = solve_dare(a, b, plant.q_reward, plant.r_reward)
        p_sp = scipy.linalg.solve_discrete_are(a, b, plant.q_reward,
                                               plant.r_reward)
        np.testing.assert_allclose(p, p_sp, atol=1e-8)


def test_riccati_residual_below_contract():
    plant = mass_spring_damper(dimension=5)
    rng = np.random.default_rng(0)
    for _ in range(10):
        a, b = plant.dynamics(rng.uniform(size=5))
        q, r = plant.q_reward, plant.r_reward
        p = solve_dare(a, b, q, r)
        btp = b.T @ p
        k = np.linalg.solve(r + btp @ b, btp @ a)
        residual = p - (q + a.T @ p @ a - (a.T @ p @ b) @ k)
        assert np.linalg.norm(residual) < 1e-9


def test_gains_differ_across_masses():
    provider = LQRPolicyProvider(mass_spring_damper(dimension=1))
    k_light = provider.gain(np.array([0.0]))
    k_heavy = provider.gain(np.array([1.0]))
    assert np.linalg.norm(k_light - k_heavy) > 0.0


def test_gain_cache_bit_identical_and_quantized():
    provider = LQRPolicyProvider(mass_spring_damper(dimension=2))
    theta = np.array([0.3, 0.6])
    first = provider.gain(theta)
    again = provider.gain(theta + 0.4 * GAIN_CACHE_QUANTUM)  # same cell
    assert again is first
    fresh = LQRPolicyProvider(mass_spring_damper(dimension=2)).gain(theta)
    np.testing.assert_array_equal(first, fresh)


def test_gain_cache_thread_safety():
    provider = LQRPolicyProvider(mass_spring_damper(dimension=2))
    thetas = np.random.default_rng(1).uniform(size=(16, 2))
    results = [None] * 8

    def worker(idx):
        results[idx] = [provider.gain(t).copy() for t in thetas]

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for got in results[1:]:
        for a, b in zip(results[0], got):
            np.testing.assert_array_equal(a, b)


# --- unscented action selection ------------------------------------------------

def test_uas_zero_variance_is_plain_action():
    provider = LQRPolicyProvider(mass_spring_damper(dimension=2))
    rng = np.random.default_rng(2)
    for _ in range(100):
        theta = rng.uniform(size=2)
        state = rng.normal(size=2)
        np.testing.assert_array_equal(
            uas_action(provider, theta, 0.0, 2.0, state),
            provider.action(theta, state))


def test_uas_affine_provider_exact():
    provider = AffineProvider(w=np.array([[1.0, -2.0], [0.5, 3.0]]),
                              c=np.array([0.1, 0.2]))
    theta = np.array([0.5, 0.5])  # interior: sigma points stay inside the cube
    action = uas_action(provider, theta, 0.005, 2.0, state=np.zeros(2))
    np.testing.assert_allclose(action, provider.action(theta, None), atol=1e-10)


def test_uas_matches_manual_five_term_sum():
    provider = LQRPolicyProvider(mass_spring_damper(dimension=2))
    theta = np.array([0.5, 0.4])
    sigma2, k = 0.01, 2.0
    state = np.array([0.8, -0.3])
    spread = np.sqrt((2 + k) * sigma2)
    pts = [theta.copy() for _ in range(5)]
    pts[1][0] += spread
    pts[2][1] += spread
    pts[3][0] -= spread
    pts[4][1] -= spread
    pts = [np.clip(p, 0, 1) for p in pts]
    w0, ws = k / (2 + k), 1 / (2 * (2 + k))
    oracle = w0 * provider.action(pts[0], state) \
        + ws * (provider.action(pts[1], state) + provider.action(pts[2], state)
                + provider.action(pts[3], state) + provider.action(pts[4], state))
    np.testing.assert_allclose(uas_action(provider, theta, sigma2, k, state),
                               oracle, atol=1e-10)


def test_uas_clamps_boundary_sigma_points():
    provider = LQRPolicyProvider(mass_spring_damper(dimension=1))
    state = np.array([1.0, 0.0])
    action = uas_action(provider, np.array([0.98]), 0.04, 2.0, state)
    spread = np.sqrt(3 * 0.04)
    w0, ws = 2 / 3, 1 / 6
    oracle = w0 * provider.action([0.98], state) \
        + ws * provider.action([1.0], state) \
        + ws * provider.action([0.98 - spread], state)
    np.testing.assert_allclose(action, oracle, atol=1e-12)


def test_uas_rejects_negative_variance():
    provider = AffineProvider(np.eye(2), np.zeros(2))
    with pytest.raises(ValueError):
        uas_action(provider, np.full(2, 0.5), -0.1, 2.0, np.zeros(2))


# --- averaged policy --------------------------------------------------------------

def test_averaged_action_degenerate_set():
    provider = LQRPolicyProvider(mass_spring_damper(dimension=1))
    theta = np.array([0.4])
    thetas = np.tile(theta, (7, 1))
    state = np.array([0.5, -0.1])
    np.testing.assert_allclose(averaged_policy_action(provider, thetas, state),
                               provider.action(theta, state), atol=1e-12)


def test_averaged_action_affine_linearity():
    provider = AffineProvider(np.array([[2.0, 1.0]]), np.array([0.3]))
    pair = np.array([[0.2, 0.8], [0.6, 0.4]])
    got = averaged_policy_action(provider, pair, state=None)
    np.testing.assert_allclose(got, provider.action(pair.mean(axis=0), None),
                               atol=1e-12)


def test_averaged_action_matches_loop_oracle():
    provider = LQRPolicyProvider(mass_spring_damper(dimension=3))
    rng = np.random.default_rng(3)
    thetas = rng.uniform(size=(5, 3))
    state = rng.normal(size=2)
    oracle = sum(provider.action(t, state) for t in thetas) / 5
    got = averaged_policy_action(provider, OptimalParamSet(thetas), state)
    np.testing.assert_allclose(got, oracle, atol=1e-12)


def test_averaged_action_rejects_empty():
    provider = AffineProvider(np.eye(1), np.zeros(1))
    with pytest.raises(ValueError):
        averaged_policy_action(provider, np.empty((0, 1)), np.zeros(1))


# --- Gaussian-approximation action --------------------------------------------------

def test_ga_action_identical_samples_is_plain():
    provider = LQRPolicyProvider(mass_spring_damper(dimension=2))
    theta = np.array([0.3, 0.7])
    thetas = np.tile(theta, (4, 1))
    state = np.array([1.0, 0.0])
    np.testing.assert_allclose(ga_action(provider, thetas, 2.0, state),
                               provider.action(theta, state), atol=1e-12)


def test_ga_action_affine_provider_hits_mean():
    provider = AffineProvider(np.array([[1.5, -0.5]]), np.array([1.0]))
    rng = np.random.default_rng(4)
    thetas = rng.uniform(0.3, 0.7, size=(6, 2))
    got = ga_action(provider, thetas, 2.0, state=None)
    np.testing.assert_allclose(got, provider.action(thetas.mean(axis=0), None),
                               atol=1e-10)


def test_ga_action_hand_computed_1d_case():
    # samples {0.2, 0.4, 0.6}: mean 0.4, unbiased isotropic variance 0.04,
    # so UAS sees sigma points {0.4, 0.4 +/- sqrt(3 * 0.04)}
    thetas = np.array([[0.2], [0.4], [0.6]])
    mean, variance = gaussian_fit(thetas)
    assert mean[0] == pytest.approx(0.4, abs=1e-15)
    assert variance == pytest.approx(0.04, abs=1e-15)

    provider = LQRPolicyProvider(mass_spring_damper(dimension=1))
    state = np.array([0.7, 0.2])
    spread = np.sqrt(3 * 0.04)
    w0, ws = 2 / 3, 1 / 6
    oracle = w0 * provider.action([0.4], state) \
        + ws * provider.action([min(0.4 + spread, 1.0)], state) \
        + ws * provider.action([max(0.4 - spread, 0.0)], state)
    np.testing.assert_allclose(ga_action(provider, thetas, 2.0, state), oracle,
                               atol=1e-10)


def test_ga_action_needs_two_samples():
    provider = AffineProvider(np.eye(1), np.zeros(1))
    with pytest.raises(ValueError):
        ga_action(provider, np.array([[0.5]]), 2.0, np.zeros(1))


# --- cross-cutting properties --------------------------------------------------------

def test_actions_stay_in_convex_hull():
    provider = LQRPolicyProvider(mass_spring_damper(dimension=2))
    rng = np.random.default_rng(5)
    for _ in range(20):
        theta = rng.uniform(size=2)
        state = rng.normal(size=2)
        sigma2 = float(rng.uniform(0.001, 0.05))
        spread = np.sqrt(4 * sigma2)
        pts = [theta.copy()]
        for i in range(2):
            up, dn = theta.copy(), theta.copy()
            up[i] = min(up[i] + spread, 1.0)
            dn[i] = max(dn[i] - spread, 0.0)
            pts.extend([up, dn])
        fetched = np.stack([provider.action(p, state) for p in pts])
        action = uas_action(provider, theta, sigma2, 2.0, state)
        assert np.all(action >= fetched.min(axis=0) - 1e-12)
        assert np.all(action <= fetched.max(axis=0) + 1e-12)


def test_closed_loop_stable_at_matched_parameter():
    plant = mass_spring_damper(dimension=5)
    provider = LQRPolicyProvider(plant)
    rng = np.random.default_rng(6)
    for _ in range(100):
        theta = rng.uniform(size=5)
        a, b = plant.dynamics(theta)
        k = provider.gain(theta)
        eigs = np.linalg.eigvals(a - b @ k)
        assert np.max(np.abs(eigs)) < 1.0


def test_gain_continuity():
    plant = mass_spring_damper(dimension=3)
    provider = LQRPolicyProvider(plant)
    rng = np.random.default_rng(7)
    for _ in range(20):
        theta = rng.uniform(0.05, 0.95, size=3)
        delta = np.full(3, 1e-4)
        diff = np.linalg.norm(provider.gain(theta + delta)
                              - provider.gain(theta))
        assert diff < 1e-2


def test_mean_gain_is_exact_average():
    provider = LQRPolicyProvider(mass_spring_damper(dimension=2))
    rng = np.random.default_rng(8)
    thetas = rng.uniform(size=(6, 2))
    explicit = sum(provider.gain(t) for t in thetas) / 6
    np.testing.assert_allclose(provider.mean_gain(thetas), explicit, atol=1e-15)


def test_linear_feedback_rule():
    rule = LinearFeedbackRule(gain=np.array([[2.0, 0.5]]),
                              target=np.array([1.0, 0.0]))
    np.testing.assert_allclose(rule(np.array([2.0, 2.0])), [-3.0], atol=1e-15)
