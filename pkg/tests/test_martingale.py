import math

import numpy as np
import pytest

from cqsm import (
    AlgoConfig,
    LqParams,
    ResidualReport,
    constant_test,
    lagged_state_test,
    lq_dynamics,
    lq_reward_fn,
    martingale_loss,
    optimal_score,
    orthogonality_residual,
    orthogonality_statistics,
    q_gradient_test,
    q_star,
    simulate_batch,
    trajectory_gaps,
)
from _oracles import evaluate_affine_score_q


def _diag_cfg(dt=0.01, horizon=50.0, seed=0):
    return AlgoConfig(dt=dt, n_steps=int(round(horizon / dt)), seed=seed)


def test_zero_everything_gives_exact_zero():
    # zero reward, zero score, zero value model: the integrand is identically
    # zero regardless of the visited states
    rng = np.random.default_rng(0)
    from cqsm import TrajectoryBatch

    batch = TrajectoryBatch(times=np.arange(21) * 0.1,
                            states=rng.normal(size=(21, 30)),
                            actions=rng.normal(size=(21, 30)),
                            reward_rates=np.zeros((20, 30)), seed=0)
    stats = orthogonality_statistics(batch, lambda x, a: 0.0 * x,
                                     lambda x, a: 0.0 * a, constant_test(),
                                     beta=1.0, lam=0.1)
    assert np.all(stats == 0.0)


def test_true_value_function_passes_z_test(k_ref, lq_ref):
    report = orthogonality_residual(
        lambda x, a: q_star(k_ref, x, a),
        lambda x, a: optimal_score(k_ref, lq_ref.lam, x, a),
        constant_test(), lq_ref, _diag_cfg(seed=1), n_traj=500)
    assert abs(report.z_score) < 3


def test_constant_offset_is_detected(k_ref, lq_ref):
    report = orthogonality_residual(
        lambda x, a: q_star(k_ref, x, a) + 0.5,
        lambda x, a: optimal_score(k_ref, lq_ref.lam, x, a),
        constant_test(), lq_ref, _diag_cfg(seed=1), n_traj=500)
    assert abs(report.z_score) > 3
    # the discounted increment of the constant integrates to about -0.5
    assert report.estimate == pytest.approx(-0.5, abs=0.1)


def test_suboptimal_score_with_its_true_value_function_passes(lq_ref):
    # evaluation direction: any fixed affine score paired with ITS value
    # function satisfies the orthogonality condition
    s_a, s_x, s_c = -1.0, 0.0, 0.0
    q = evaluate_affine_score_q(lq_ref, s_a, s_x, s_c)
    qfun = lambda x, a: (0.5 * q[0] * x * x + q[1] * x + 0.5 * q[2] * a * a
                         + q[3] * a + q[4] * x * a + q[5])
    score = lambda x, a: s_a * a + s_x * x + s_c
    report = orthogonality_residual(qfun, score, constant_test(), lq_ref,
                                    _diag_cfg(seed=4), n_traj=400)
    assert abs(report.z_score) < 3


def test_z_scores_are_calibrated_across_repetitions(k_ref, lq_ref):
    qfun = lambda x, a: q_star(k_ref, x, a)
    score = lambda x, a: optimal_score(k_ref, lq_ref.lam, x, a)
    inside = 0
    n_reps = 50
    for rep in range(n_reps):
        report = orthogonality_residual(
            qfun, score, constant_test(), lq_ref,
            _diag_cfg(dt=0.01, horizon=20.0, seed=1000 + rep), n_traj=150)
        inside += abs(report.z_score) < 2
    assert 0.90 <= inside / n_reps <= 0.99


def test_residual_shrinks_with_dt(k_ref, lq_ref):
    qfun = lambda x, a: q_star(k_ref, x, a)
    score = lambda x, a: optimal_score(k_ref, lq_ref.lam, x, a)
    estimates = []
    for dt in (0.2, 0.1, 0.05):
        report = orthogonality_residual(qfun, score, constant_test(), lq_ref,
                                        _diag_cfg(dt=dt, seed=77), n_traj=400)
        estimates.append(abs(report.estimate))
    assert estimates[0] > estimates[1] > estimates[2]


def test_gradient_and_lagged_test_processes(k_ref, lq_ref):
    batch = simulate_batch(
        lq_dynamics(lq_ref, lambda x, a: optimal_score(k_ref, lq_ref.lam, x, a)),
        lq_reward_fn(lq_ref), 0.0, 0.0, 0.1, 40, 6, seed=2)
    for i in range(6):
        xi = q_gradient_test(i)(batch.times, batch.states, batch.actions)
        assert xi.shape == (40, 6)
    lagged = lagged_state_test(lag=3, power=2)(batch.times, batch.states,
                                               batch.actions)
    assert np.all(lagged[:3] == 0)
    np.testing.assert_allclose(lagged[3:], batch.states[:-4] ** 2)
    with pytest.raises(ValueError):
        q_gradient_test(6)
    with pytest.raises(ValueError):
        lagged_state_test(lag=-1)


def test_statistics_with_gradient_test_process(k_ref, lq_ref):
    # the constant-gradient component reproduces the plain orthogonality sum
    batch = simulate_batch(
        lq_dynamics(lq_ref, lambda x, a: optimal_score(k_ref, lq_ref.lam, x, a)),
        lq_reward_fn(lq_ref), 0.0, 0.0, 0.05, 100, 8, seed=5)
    qfun = lambda x, a: q_star(k_ref, x, a)
    score = lambda x, a: optimal_score(k_ref, lq_ref.lam, x, a)
    s_const = orthogonality_statistics(batch, qfun, score, constant_test(),
                                       lq_ref.beta, lq_ref.lam)
    s_grad5 = orthogonality_statistics(batch, qfun, score, q_gradient_test(5),
                                       lq_ref.beta, lq_ref.lam)
    np.testing.assert_allclose(s_const, s_grad5, rtol=1e-12)


def test_martingale_loss_zero_case():
    from cqsm import TrajectoryBatch

    rng = np.random.default_rng(1)
    batch = TrajectoryBatch(times=np.arange(11) * 0.1,
                            states=rng.normal(size=(11, 5)),
                            actions=rng.normal(size=(11, 5)),
                            reward_rates=np.zeros((10, 5)), seed=0)
    gaps = trajectory_gaps(batch, lambda x, a: 0.0 * x, lambda x, a: 0.0 * a,
                           beta=1.0, lam=0.1)
    assert 0.5 * float(np.mean(gaps ** 2)) * batch.dt == 0.0


def test_martingale_loss_prefers_true_value_function(k_ref, lq_ref):
    cfg = _diag_cfg(dt=0.05, horizon=30.0, seed=6)
    score = lambda x, a: optimal_score(k_ref, lq_ref.lam, x, a)
    loss_true = martingale_loss(lambda x, a: q_star(k_ref, x, a), score,
                                lq_ref, cfg, n_traj=200)
    loss_off = martingale_loss(lambda x, a: q_star(k_ref, x, a) + 0.5, score,
                               lq_ref, cfg, n_traj=200)
    assert loss_true < loss_off
    assert loss_true >= 0.0


def test_loss_invariant_under_trajectory_relabeling(k_ref, lq_ref):
    batch = simulate_batch(
        lq_dynamics(lq_ref, lambda x, a: optimal_score(k_ref, lq_ref.lam, x, a)),
        lq_reward_fn(lq_ref), 0.0, 0.0, 0.05, 200, 16, seed=9)
    qfun = lambda x, a: q_star(k_ref, x, a)
    score = lambda x, a: optimal_score(k_ref, lq_ref.lam, x, a)
    gaps = trajectory_gaps(batch, qfun, score, lq_ref.beta, lq_ref.lam)
    perm = np.random.default_rng(0).permutation(batch.n_trajectories)
    assert np.mean(gaps ** 2) == pytest.approx(np.mean(gaps[:, perm] ** 2),
                                               rel=1e-14)


def test_jackknife_matches_classical_standard_error(k_ref, lq_ref):
    report = orthogonality_residual(
        lambda x, a: q_star(k_ref, x, a),
        lambda x, a: optimal_score(k_ref, lq_ref.lam, x, a),
        constant_test(), lq_ref, _diag_cfg(dt=0.05, horizon=10.0, seed=3),
        n_traj=100)
    batch = simulate_batch(
        lq_dynamics(lq_ref, lambda x, a: optimal_score(k_ref, lq_ref.lam, x, a)),
        lq_reward_fn(lq_ref), 0.0, 0.0, 0.05, 200, 100, seed=3)
    stats = orthogonality_statistics(
        batch, lambda x, a: q_star(k_ref, x, a),
        lambda x, a: optimal_score(k_ref, lq_ref.lam, x, a), constant_test(),
        lq_ref.beta, lq_ref.lam)
    classical = stats.std(ddof=1) / math.sqrt(len(stats))
    assert report.std_error == pytest.approx(classical, rel=1e-10)
    assert report.z_score == pytest.approx(report.estimate / report.std_error,
                                           rel=1e-12)


def test_orthogonality_requires_two_trajectories(k_ref, lq_ref):
    with pytest.raises(ValueError):
        orthogonality_residual(lambda x, a: q_star(k_ref, x, a),
                               lambda x, a: optimal_score(k_ref, lq_ref.lam, x, a),
                               constant_test(), lq_ref, _diag_cfg(), n_traj=1)


def test_report_fields():
    report = ResidualReport(1.0, 0.5, 10, 2.0)
    assert report.z_score == report.estimate / report.std_error
