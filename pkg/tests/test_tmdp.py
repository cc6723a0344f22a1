import numpy as np
import pytest

from araml.errors import DimensionError, NumericError, ParameterError
from araml.rng import SeededRng
from araml.tmdp import (
    BimatrixEnv,
    FixedPolicyAgent,
    FrequencyModel,
    IndependentQLearner,
    LevelKModel,
    MixtureModel,
    OpponentAwareQLearner,
    QTable,
    StaticOpponent,
    TmdpSpec,
    chicken_env,
    decaying,
    epsilon_greedy,
    expected_q,
    inverse_time,
    observe,
    predict_dist,
    q_update,
    run_iterated_game,
    train_q_fixed_opponent,
    value_iteration_oracle,
)


def random_spec(seed, n_states=5, n_d=3, n_a=3, gamma=0.9):
    gen = SeededRng(seed).substream("spec").generator()
    P = gen.dirichlet(np.ones(n_states), size=(n_states, n_d, n_a))
    R = gen.uniform(-1.0, 1.0, (n_states, n_d, n_a))
    return TmdpSpec(n_states, n_d, n_a, P, R, gamma)


def random_policy(seed, spec):
    gen = SeededRng(seed).substream("policy").generator()
    return gen.dirichlet(np.ones(spec.n_a), size=spec.n_states)


# ---------------------------------------------------------------------------
# Spec and Q-table


def test_spec_validation():
    spec = random_spec(0)
    with pytest.raises(ParameterError):
        TmdpSpec(5, 3, 3, spec.transition * 2, spec.reward, 0.9)
    with pytest.raises(ParameterError):
        TmdpSpec(5, 3, 3, spec.transition, spec.reward, 1.0)
    with pytest.raises(DimensionError):
        TmdpSpec(4, 3, 3, spec.transition, spec.reward, 0.9)


def test_qtable_zero_initialized():
    q = QTable(2, 3, 4)
    assert q.q.shape == (2, 3, 4)
    assert np.all(q.q == 0.0)


# ---------------------------------------------------------------------------
# Q-update rule


def test_q_update_gamma_zero_alpha_one():
    spec = random_spec(1, gamma=0.0)
    q = QTable(spec.n_states, spec.n_d, spec.n_a)
    opp = StaticOpponent(random_policy(1, spec))
    q_update(q, 2, 1, 0, r=0.7, next_state=3, alpha=1.0, spec_gamma=0.0, opp=opp)
    assert q.q[2, 1, 0] == pytest.approx(0.7)
    mask = np.ones_like(q.q, dtype=bool)
    mask[2, 1, 0] = False
    assert np.all(q.q[mask] == 0.0)


def test_q_update_alpha_zero_no_change():
    spec = random_spec(2)
    q = QTable(spec.n_states, spec.n_d, spec.n_a)
    q.q[:] = 1.5
    opp = StaticOpponent(random_policy(2, spec))
    q_update(q, 0, 0, 0, r=9.0, next_state=1, alpha=0.0, spec_gamma=0.9, opp=opp)
    assert np.all(q.q == 1.5)


def test_q_update_bootstrap_uses_expected_q():
    q = QTable(2, 2, 2)
    q.q[1] = np.array([[3.0, 1.0], [0.0, 0.0]])
    opp = StaticOpponent(np.array([[0.5, 0.5], [0.5, 0.5]]))
    # boot = max_d E[Q(1,d,a)] = max(2.0, 0.0) = 2.0
    q_update(q, 0, 0, 0, r=1.0, next_state=1, alpha=1.0, spec_gamma=0.5, opp=opp)
    assert q.q[0, 0, 0] == pytest.approx(1.0 + 0.5 * 2.0)


def test_q_update_rejects_nonfinite_reward():
    q = QTable(1, 1, 1)
    opp = StaticOpponent(np.array([[1.0]]))
    with pytest.raises(NumericError):
        q_update(q, 0, 0, 0, r=np.nan, next_state=0, alpha=0.5,
                 spec_gamma=0.9, opp=opp)


# ---------------------------------------------------------------------------
# expected_q


def test_expected_q_constant_rows():
    q = QTable(1, 2, 3)
    q.q[0, 1] = 4.2
    opp = StaticOpponent(np.array([[0.2, 0.3, 0.5]]))
    assert expected_q(q, 0, 1, opp) == pytest.approx(4.2)


def test_expected_q_point_mass_opponent():
    q = QTable(1, 1, 3)
    q.q[0, 0] = np.array([1.0, 7.0, 3.0])
    opp = StaticOpponent(np.array([[0.0, 1.0, 0.0]]))
    assert expected_q(q, 0, 0, opp) == pytest.approx(7.0)


def test_expected_q_hand_sum():
    q = QTable(1, 1, 2)
    q.q[0, 0] = np.array([3.0, 1.0])
    opp = StaticOpponent(np.array([[0.5, 0.5]]))
    assert expected_q(q, 0, 0, opp) == pytest.approx(2.0)


def test_expected_q_linear_in_opponent():
    gen = SeededRng(3).generator()
    q = QTable(1, 1, 4)
    q.q[0, 0] = gen.normal(size=4)
    p1, p2 = gen.dirichlet(np.ones(4)), gen.dirichlet(np.ones(4))
    lam = 0.3
    mix = StaticOpponent((lam * p1 + (1 - lam) * p2)[None, :])
    lhs = expected_q(q, 0, 0, mix)
    rhs = lam * expected_q(q, 0, 0, StaticOpponent(p1[None, :])) + (
        1 - lam
    ) * expected_q(q, 0, 0, StaticOpponent(p2[None, :]))
    assert lhs == pytest.approx(rhs, abs=1e-12)


# ---------------------------------------------------------------------------
# epsilon-greedy


def test_epsilon_greedy_fully_random():
    q = QTable(1, 4, 1)
    opp = StaticOpponent(np.array([[1.0]]))
    gen = SeededRng(4).generator()
    counts = np.bincount(
        [epsilon_greedy(q, 0, 1.0, opp, gen) for _ in range(100_000)], minlength=4
    )
    sigma = np.sqrt(0.25 * 0.75 / 100_000)
    assert np.all(np.abs(counts / 100_000 - 0.25) <= 4 * sigma)


def test_epsilon_greedy_exploit_unique_max():
    q = QTable(1, 3, 1)
    q.q[0, 2, 0] = 1.0
    opp = StaticOpponent(np.array([[1.0]]))
    gen = SeededRng(5).generator()
    assert all(epsilon_greedy(q, 0, 0.0, opp, gen) == 2 for _ in range(200))


def test_epsilon_greedy_mixture_frequency():
    # freq(d*) = (1 - eps) + eps / |D| = 0.8 + 0.2/4 = 0.85
    q = QTable(1, 4, 1)
    q.q[0, 1, 0] = 1.0
    opp = StaticOpponent(np.array([[1.0]]))
    gen = SeededRng(6).generator()
    hits = sum(epsilon_greedy(q, 0, 0.2, opp, gen) == 1 for _ in range(100_000))
    sigma = np.sqrt(0.85 * 0.15 / 100_000)
    assert abs(hits / 100_000 - 0.85) <= 3 * sigma


def test_epsilon_greedy_validation():
    q = QTable(1, 2, 1)
    opp = StaticOpponent(np.array([[1.0]]))
    with pytest.raises(ParameterError):
        epsilon_greedy(q, 0, 1.5, opp, SeededRng(0).generator())


# ---------------------------------------------------------------------------
# Opponent models


def test_frequency_posterior_mean():
    model = FrequencyModel(n_states=1, n_a=3, prior=1.0)
    for _ in range(10):
        observe(model, 0, 0)
    # (alpha + N) / (|A| alpha + N) with alpha = 1, N = 10
    assert model.predict(0)[0] == pytest.approx(11.0 / 13.0)


def test_mixture_zero_likelihood_elimination():
    m1 = StaticOpponent(np.array([[1.0, 0.0]]))
    m2 = StaticOpponent(np.array([[0.0, 1.0]]))
    mix = MixtureModel([m1, m2])
    observe(mix, 0, 0)
    assert mix.weights[0] == pytest.approx(1.0)
    assert mix.weights[1] == pytest.approx(0.0)


def test_mixture_bayes_factor():
    m1 = StaticOpponent(np.array([[0.8, 0.2]]))
    m2 = StaticOpponent(np.array([[0.2, 0.8]]))
    mix = MixtureModel([m1, m2])
    before = mix.weights[0] / mix.weights[1]
    observe(mix, 0, 0)
    after = mix.weights[0] / mix.weights[1]
    assert after / before == pytest.approx(4.0, abs=1e-12)


def test_mixture_predict_is_weighted_average():
    m1 = StaticOpponent(np.array([[0.8, 0.2]]))
    m2 = StaticOpponent(np.array([[0.2, 0.8]]))
    mix = MixtureModel([m1, m2], weights=[0.3, 0.7])
    expected = 0.3 * np.array([0.8, 0.2]) + 0.7 * np.array([0.2, 0.8])
    assert np.allclose(mix.predict(0), expected, atol=1e-15)


def test_mixture_all_zero_likelihood_falls_back_uniform():
    m1 = StaticOpponent(np.array([[1.0, 0.0]]))
    m2 = StaticOpponent(np.array([[1.0, 0.0]]))
    mix = MixtureModel([m1, m2])
    observe(mix, 0, 1)  # both components rule action 1 out
    assert np.allclose(mix.weights, [0.5, 0.5])


def test_level1_model_learns_fixed_payoffs():
    env = chicken_env()
    model = LevelKModel(1, 2, 2, opp_reward=lambda s, d, a: env.u_col[d, a],
                        k=1, alpha=0.2, gamma=0.0, temperature=0.1)
    # we always play E; the opponent's rewards are then C: -2, E: -4
    gen = SeededRng(7).generator()
    for _ in range(300):
        a = int(gen.integers(2))
        model.observe(0, a, d=1, next_state=0)
    # sharp softmax should now predict C (his better reply to E)
    assert model.predict(0)[0] > 0.99


def test_level_k_model_validation():
    with pytest.raises(ParameterError):
        LevelKModel(1, 2, 2, opp_reward=lambda s, d, a: 0.0, k=0)
    with pytest.raises(ParameterError):
        LevelKModel(1, 2, 2, opp_reward=lambda s, d, a: 0.0, k=2)  # no own_reward
    model = LevelKModel(1, 2, 2, opp_reward=lambda s, d, a: 0.0, k=1)
    with pytest.raises(ParameterError):
        model.observe(0, 0)  # missing d= and next_state=


def test_predict_dist_wraps_model():
    model = FrequencyModel(1, 3)
    dist = predict_dist(model, 0)
    assert dist.outcomes == (0, 1, 2)
    assert dist.probs.sum() == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# Iterated games


def test_iterated_game_constant_chicken_payoffs():
    env = chicken_env()
    traj = run_iterated_game(env, FixedPolicyAgent(0), FixedPolicyAgent(0),
                             100, SeededRng(0))
    assert np.all(traj.rewards_row == 0.0)
    assert np.all(traj.rewards_col == 0.0)


def test_iterated_game_escalate_vs_chicken():
    env = chicken_env()
    traj = run_iterated_game(env, FixedPolicyAgent(1), FixedPolicyAgent(0),
                             50, SeededRng(0))
    assert np.all(traj.rewards_row == 1.0)
    assert np.all(traj.rewards_col == -2.0)


def test_iterated_game_bit_reproducible():
    env = chicken_env()

    def play():
        row = IndependentQLearner(1, 2, alpha=0.1, epsilon=0.1)
        col = IndependentQLearner(1, 2, alpha=0.1, epsilon=0.1)
        return run_iterated_game(env, row, col, 500, SeededRng(42))

    t1, t2 = play(), play()
    assert np.array_equal(t1.actions_row, t2.actions_row)
    assert np.array_equal(t1.actions_col, t2.actions_col)
    assert np.array_equal(t1.rewards_row, t2.rewards_row)


def test_trajectory_summaries():
    traj = run_iterated_game(chicken_env(), FixedPolicyAgent(1),
                             FixedPolicyAgent(0), 100, SeededRng(0))
    assert traj.tail_mean(0.1) == (1.0, -2.0)
    roll_row, _ = traj.rolling_mean(10)
    assert len(roll_row) == 91
    assert np.allclose(roll_row, 1.0)


def test_joint_memory_state_model():
    env = BimatrixEnv(u_row=chicken_env().u_row, u_col=chicken_env().u_col,
                      memory="joint")
    assert env.n_states == 5
    assert env.next_state(1, 0) == 1 + 1 * 2 + 0


def test_schedules():
    sched = decaying(0.2, 0.01, 100)
    assert sched(0) == pytest.approx(0.2)
    assert sched(100) == pytest.approx(0.01)
    assert sched(1000) == pytest.approx(0.01)
    inv = inverse_time(0.1, 1000.0)
    assert inv(0) == pytest.approx(0.1)
    assert inv(1000) == pytest.approx(0.05)


# ---------------------------------------------------------------------------
# Oracle and convergence


def test_oracle_gamma_zero():
    spec = random_spec(8, gamma=0.0)
    policy = random_policy(8, spec)
    _, q_star = value_iteration_oracle(spec, policy)
    expected = np.einsum("sda,sa->sd", spec.reward, policy)
    assert np.allclose(q_star, expected, atol=1e-12)


def test_oracle_geometric_series():
    # one state, one action pair, reward 1, gamma 0.5 -> V* = 2
    P = np.ones((1, 1, 1, 1))
    R = np.ones((1, 1, 1))
    spec = TmdpSpec(1, 1, 1, P, R, 0.5)
    v, q = value_iteration_oracle(spec, np.array([[1.0]]))
    assert v[0] == pytest.approx(2.0, abs=1e-9)
    assert q[0, 0] == pytest.approx(2.0, abs=1e-9)


def test_oracle_bellman_residual():
    spec = random_spec(9)
    policy = random_policy(9, spec)
    v, q = value_iteration_oracle(spec, policy)
    r_bar = np.einsum("sda,sa->sd", spec.reward, policy)
    p_bar = np.einsum("sdat,sa->sdt", spec.transition, policy)
    residual = np.abs((r_bar + spec.gamma * (p_bar @ v)).max(axis=1) - v).max()
    assert residual <= 1e-9


def test_oracle_policy_shape_checked():
    spec = random_spec(10)
    with pytest.raises(DimensionError):
        value_iteration_oracle(spec, np.ones((2, 2)) / 2)


def test_q_learning_approaches_oracle():
    spec = random_spec(11)
    policy = random_policy(11, spec)
    q = train_q_fixed_opponent(spec, policy, 1_000_000, SeededRng(12))
    _, q_star = value_iteration_oracle(spec, policy)
    q_hat = np.einsum("sda,sa->sd", q.q, policy)
    assert np.abs(q_hat - q_star).max() <= 0.1


def test_q_learning_reproducible():
    spec = random_spec(13)
    policy = random_policy(13, spec)
    q1 = train_q_fixed_opponent(spec, policy, 20_000, SeededRng(14))
    q2 = train_q_fixed_opponent(spec, policy, 20_000, SeededRng(14))
    assert np.array_equal(q1.q, q2.q)


def test_opponent_aware_learner_runs():
    env = chicken_env()
    model = FrequencyModel(env.n_states, env.n_col_actions)
    row = OpponentAwareQLearner(env.n_states, 2, 2, model,
                                alpha=0.1, epsilon=0.2)
    col = IndependentQLearner(env.n_states, 2, alpha=0.1, epsilon=0.2)
    traj = run_iterated_game(env, row, col, 2000, SeededRng(15))
    assert len(traj.rewards_row) == 2000
    assert np.all(np.isfinite(row.qtable.q))
