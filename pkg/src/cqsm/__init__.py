"""Continuous-time reinforcement learning with score-driven action diffusions.

The package couples a learned quadratic value function to the score (drift) of
an action SDE: the critic is fitted through the martingale property of the
discounted value process, the actor by matching the score to the critic's
scaled action gradient.  A scalar linear-quadratic environment with a
closed-form solution supplies exact ground truth for every learned quantity.
"""

from ._version import __version__
from .sde import (
    DynamicsSpec,
    NoiseSource,
    SimulationError,
    Trajectory,
    TrajectoryBatch,
    em_step,
    simulate,
    simulate_batch,
    simulate_from,
    write_trajectory_csv,
)
from .lq import LqParams, env_step, lq_dynamics, lq_reward, lq_reward_fn
from .policy import (
    grad_a_q,
    grad_theta_q,
    grad_v_psi,
    psi_v,
    q_theta,
    score_params_from_q,
)
from .lq_analytic import (
    KCoefficients,
    SolveError,
    coefficient_residuals,
    hjb_residual,
    k_to_optimal_params,
    optimal_score,
    q_star,
    solve_lq,
)
from .samplers import (
    NoiseSchedule,
    ddpm_sample,
    langevin_batch,
    langevin_chain,
    langevin_sample,
    make_linear_schedule,
)
from .online import (
    AlgoConfig,
    DivergenceError,
    LearnState,
    LearningRecord,
    cqsm_step,
    initial_action,
    lr_schedule,
    run_cqsm,
    td_delta,
)
from .offline import (
    Episode,
    episode_return_to_go,
    make_episode,
    offline_update,
    return_gaps,
    rollout_episode,
    run_offline,
    score_gradient_residual,
)
from .martingale import (
    ResidualReport,
    constant_test,
    lagged_state_test,
    martingale_loss,
    orthogonality_residual,
    orthogonality_statistics,
    q_gradient_test,
    trajectory_gaps,
)
from .experiment import (
    ConfigError,
    ExperimentConfig,
    RunSummary,
    config_hash,
    estimate_discounted_return,
    format_config,
    load_config,
    optimal_policy_running_avg,
    parse_config,
    run_experiment,
    running_avg_reward,
    write_record_csv,
    write_summary_csv,
)
