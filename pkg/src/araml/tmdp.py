"""Threatened Markov Decision Processes.

An ordinary MDP augmented with an adversary: transitions and rewards
depend on both the supported agent's action d and the opponent's action
a, and the agent carries a belief p(a | state) about the opponent.  The
Q-table is kept per (state, d, a); acting and bootstrapping average it
over the current opponent belief.  Opponent models range from simple
action-frequency counting through Bayesian mixtures to a simulated
inner learner.

States and actions are integer indices throughout; label tuples on
:class:`TmdpSpec` exist for presentation only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import DiscreteDistribution
from .errors import DimensionError, NumericError, ParameterError
from .rng import SeededRng

__all__ = [
    "TmdpSpec",
    "QTable",
    "StaticOpponent",
    "FrequencyModel",
    "MixtureModel",
    "LevelKModel",
    "q_update",
    "expected_q",
    "epsilon_greedy",
    "observe",
    "predict_dist",
    "decaying",
    "inverse_time",
    "BimatrixEnv",
    "IndependentQLearner",
    "OpponentAwareQLearner",
    "FixedPolicyAgent",
    "Trajectory",
    "run_iterated_game",
    "value_iteration_oracle",
    "train_q_fixed_opponent",
    "chicken_env",
]


@dataclass(frozen=True)
class TmdpSpec:
    """The (states, own actions, opponent actions, transition, reward,
    discount) tuple describing the threatened decision process."""

    n_states: int
    n_d: int
    n_a: int
    transition: np.ndarray  # (S, D, A, S)
    reward: np.ndarray  # (S, D, A)
    gamma: float
    state_labels: tuple = ()
    d_labels: tuple = ()
    a_labels: tuple = ()

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        R = np.asarray(self.reward, dtype=float)
        shape = (self.n_states, self.n_d, self.n_a)
        if P.shape != shape + (self.n_states,):
            raise DimensionError(f"transition shape {P.shape} != {shape + (self.n_states,)}")
        if R.shape != shape:
            raise DimensionError(f"reward shape {R.shape} != {shape}")
        if np.any(P < 0) or not np.allclose(P.sum(axis=-1), 1.0, atol=1e-9):
            raise ParameterError("transition rows must be valid distributions")
        if not 0 <= self.gamma < 1:
            raise ParameterError("gamma must lie in [0, 1)")
        if not np.all(np.isfinite(R)):
            raise ParameterError("rewards must be finite")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", R)


class QTable:
    """Dense Q(state, d, a) table, zero-initialized."""

    __slots__ = ("q",)

    def __init__(self, n_states: int, n_d: int, n_a: int):
        self.q = np.zeros((n_states, n_d, n_a))

    def copy(self) -> "QTable":
        out = QTable(*self.q.shape)
        out.q = self.q.copy()
        return out


# ---------------------------------------------------------------------------
# Opponent models: predict(state) -> probability vector over A


class StaticOpponent:
    """Fixed, known opponent policy (used by oracles and tests)."""

    def __init__(self, policy: np.ndarray):
        policy = np.asarray(policy, dtype=float)
        if np.any(policy < 0) or not np.allclose(policy.sum(axis=-1), 1.0):
            raise ParameterError("policy rows must be distributions")
        self.policy = policy

    def predict(self, state: int) -> np.ndarray:
        return self.policy[state]

    def observe(self, state: int, action: int, **ctx):
        pass


class FrequencyModel:
    """Dirichlet-categorical action counting per state.

    predict() is the posterior-mean categorical; observe() increments the
    count of the realized action.
    """

    def __init__(self, n_states: int, n_a: int, prior: float = 1.0):
        if prior <= 0:
            raise ParameterError("Dirichlet prior must be positive")
        self.counts = np.full((n_states, n_a), float(prior))

    def predict(self, state: int) -> np.ndarray:
        row = self.counts[state]
        return row / row.sum()

    def observe(self, state: int, action: int, **ctx):
        self.counts[state, action] += 1.0


class MixtureModel:
    """Bayesian mixture over candidate opponent models.

    Weights are updated multiplicatively by each component's likelihood of
    the observed action (exact Bayes), then every component performs its
    own internal update.
    """

    def __init__(self, components: Sequence, weights=None):
        self.components = list(components)
        if weights is None:
            weights = np.full(len(self.components), 1.0 / len(self.components))
        weights = np.asarray(weights, dtype=float)
        if abs(weights.sum() - 1.0) > 1e-9 or np.any(weights < 0):
            raise ParameterError("mixture weights must be a distribution")
        self.weights = weights / weights.sum()

    def predict(self, state: int) -> np.ndarray:
        preds = np.stack([m.predict(state) for m in self.components])
        return self.weights @ preds

    def observe(self, state: int, action: int, **ctx):
        lik = np.array([m.predict(state)[action] for m in self.components])
        posterior = self.weights * lik
        total = posterior.sum()
        if total == 0.0:
            # every component rules the action out; fall back to uniform
            posterior = np.full(len(self.components), 1.0)
            total = posterior.sum()
        self.weights = posterior / total
        for m in self.components:
            m.observe(state, action, **ctx)


class LevelKModel:
    """Opponent simulated as a learner one level of reasoning down.

    At k=1 the opponent is an independent Q-learner over his own actions;
    at k>1 he is himself opponent-aware, modelling us with a level-(k-1)
    model.  Prediction is a softmax over the simulated Q-values.  The
    simulation needs the opponent's realized reward, supplied by
    ``opp_reward(state, own_action, opp_action)``.
    """

    def __init__(
        self,
        n_states: int,
        n_d: int,
        n_a: int,
        opp_reward: Callable[[int, int, int], float],
        k: int = 1,
        alpha: float = 0.1,
        gamma: float = 0.96,
        temperature: float = 1.0,
        own_reward: Callable[[int, int, int], float] | None = None,
    ):
        if k < 1:
            raise ParameterError("level must be >= 1")
        if temperature <= 0:
            raise ParameterError("temperature must be positive")
        self.k = k
        self.alpha = alpha
        self.gamma = gamma
        self.temperature = temperature
        self.opp_reward = opp_reward
        if k == 1:
            self.inner_q = np.zeros((n_states, n_a))
            self.inner_model = None
        else:
            # the simulated opponent models us one level down; from his
            # side, roles of d and a are swapped
            self.inner_q = np.zeros((n_states, n_a, n_d))
            if own_reward is None:
                raise ParameterError("k > 1 requires own_reward for the inner model")
            self.inner_model = LevelKModel(
                n_states, n_a, n_d,
                opp_reward=own_reward, k=k - 1, alpha=alpha, gamma=gamma,
                temperature=temperature, own_reward=opp_reward,
            )

    def predict(self, state: int) -> np.ndarray:
        if self.k == 1:
            values = self.inner_q[state]
        else:
            values = self.inner_q[state] @ self.inner_model.predict(state)
        z = values / self.temperature
        z = z - z.max()
        w = np.exp(z)
        return w / w.sum()

    def observe(self, state: int, action: int, d: int | None = None,
                next_state: int | None = None, **ctx):
        if d is None or next_state is None:
            raise ParameterError(
                "LevelKModel.observe needs the own action (d=) and next_state="
            )
        r = self.opp_reward(state, d, action)
        if self.k == 1:
            boot = self.inner_q[next_state].max()
            self.inner_q[state, action] += self.alpha * (
                r + self.gamma * boot - self.inner_q[state, action]
            )
        else:
            belief = self.inner_model.predict(next_state)
            boot = (self.inner_q[next_state] @ belief).max()
            self.inner_q[state, action, d] += self.alpha * (
                r + self.gamma * boot - self.inner_q[state, action, d]
            )
            self.inner_model.observe(state, d, d=action, next_state=next_state)


def observe(opp, state: int, action: int, **ctx):
    """Feed one observed opponent action to a model (dispatch helper)."""
    opp.observe(state, action, **ctx)
    return opp


def predict_dist(opp, state: int) -> DiscreteDistribution:
    """Opponent belief at a state as a normalized distribution over actions."""
    probs = np.asarray(opp.predict(state), dtype=float)
    return DiscreteDistribution(range(len(probs)), probs)


# ---------------------------------------------------------------------------
# Learning rule


def expected_q(q: QTable | np.ndarray, state: int, d: int, opp) -> float:
    """Opponent-averaged action value sum_a Q(state, d, a) p(a | state)."""
    table = q.q if isinstance(q, QTable) else q
    return float(table[state, d] @ opp.predict(state))


def q_update(
    q: QTable,
    state: int,
    d: int,
    a: int,
    r: float,
    next_state: int,
    alpha: float,
    spec_gamma: float,
    opp,
) -> QTable:
    """One opponent-averaged Q-learning step; only entry (state,d,a) changes.

    The bootstrap is max_d of the expected Q at the next state under the
    current opponent belief.
    """
    if not np.isfinite(r):
        raise NumericError(f"non-finite reward {r!r}")
    if not 0 <= alpha <= 1:
        raise ParameterError("learning rate must lie in (0, 1]")
    belief = opp.predict(next_state)
    boot = float((q.q[next_state] @ belief).max())
    q.q[state, d, a] = (1.0 - alpha) * q.q[state, d, a] + alpha * (
        r + spec_gamma * boot
    )
    return q


def epsilon_greedy(
    q: QTable | np.ndarray,
    state: int,
    epsilon: float,
    opp,
    gen: np.random.Generator,
) -> int:
    """Argmax of expected Q with probability 1-eps, else uniform.

    Argmax ties are broken uniformly at random from the same stream.
    """
    if not 0 <= epsilon <= 1:
        raise ParameterError("epsilon must lie in [0, 1]")
    table = q.q if isinstance(q, QTable) else q
    n_d = table.shape[1]
    if gen.random() < epsilon:
        return int(gen.integers(n_d))
    values = table[state] @ opp.predict(state)
    winners = np.flatnonzero(values == values.max())
    if len(winners) == 1:
        return int(winners[0])
    return int(winners[gen.integers(len(winners))])


# ---------------------------------------------------------------------------
# Repeated bimatrix environments and agents


@dataclass(frozen=True)
class BimatrixEnv:
    """Repeated two-player matrix game.

    ``memory='none'`` is the stateless repeated game (single state 0);
    ``memory='joint'`` exposes the previous joint action as the state
    (state 0 is the initial no-history state).
    """

    u_row: np.ndarray
    u_col: np.ndarray
    memory: str = "none"
    action_labels: tuple = ()

    def __post_init__(self):
        u_row = np.asarray(self.u_row, dtype=float)
        u_col = np.asarray(self.u_col, dtype=float)
        if u_row.shape != u_col.shape:
            raise DimensionError("payoff tables must have equal shapes")
        if self.memory not in ("none", "joint"):
            raise ParameterError(f"unknown memory model {self.memory!r}")
        object.__setattr__(self, "u_row", u_row)
        object.__setattr__(self, "u_col", u_col)

    @property
    def n_row_actions(self) -> int:
        return self.u_row.shape[0]

    @property
    def n_col_actions(self) -> int:
        return self.u_row.shape[1]

    @property
    def n_states(self) -> int:
        if self.memory == "none":
            return 1
        return 1 + self.n_row_actions * self.n_col_actions

    def next_state(self, d: int, a: int) -> int:
        if self.memory == "none":
            return 0
        return 1 + d * self.n_col_actions + a


def chicken_env() -> BimatrixEnv:
    from .templates import CHICKEN_PAYOFFS

    return BimatrixEnv(
        u_row=CHICKEN_PAYOFFS["u_row"],
        u_col=CHICKEN_PAYOFFS["u_col"],
        action_labels=CHICKEN_PAYOFFS["actions"],
    )


def _as_schedule(value) -> Callable[[int], float]:
    if callable(value):
        return value
    return lambda t: float(value)


def decaying(start: float, end: float, horizon: int) -> Callable[[int], float]:
    """Linear decay from start to end over the horizon, then constant."""
    def schedule(t: int) -> float:
        if t >= horizon:
            return end
        return start + (end - start) * t / horizon
    return schedule


def inverse_time(start: float, scale: float = 1000.0) -> Callable[[int], float]:
    """1/t-style decay: start * scale / (scale + t)."""
    return lambda t: start * scale / (scale + t)


class IndependentQLearner:
    """Plain Q-learner, blind to the opponent (baseline agent)."""

    def __init__(self, n_states: int, n_actions: int,
                 alpha=0.1, epsilon=0.1, gamma: float = 0.96):
        self.q = np.zeros((n_states, n_actions))
        self.alpha = _as_schedule(alpha)
        self.epsilon = _as_schedule(epsilon)
        self.gamma = gamma
        self.t = 0

    def act(self, state: int, gen: np.random.Generator) -> int:
        eps = self.epsilon(self.t)
        if gen.random() < eps:
            return int(gen.integers(self.q.shape[1]))
        row = self.q[state]
        winners = np.flatnonzero(row == row.max())
        return int(winners[gen.integers(len(winners))])

    def update(self, state, own, opp_action, reward, next_state):
        a = self.alpha(self.t)
        boot = self.q[next_state].max()
        self.q[state, own] += a * (reward + self.gamma * boot - self.q[state, own])
        self.t += 1


class OpponentAwareQLearner:
    """TMDP Q-learner: augmented table plus an opponent model.

    The opponent model is updated after the Q-step each iteration.
    """

    def __init__(self, n_states: int, n_d: int, n_a: int, opponent_model,
                 alpha=0.1, epsilon=0.1, gamma: float = 0.96):
        self.qtable = QTable(n_states, n_d, n_a)
        self.opp = opponent_model
        self.alpha = _as_schedule(alpha)
        self.epsilon = _as_schedule(epsilon)
        self.gamma = gamma
        self.t = 0

    def act(self, state: int, gen: np.random.Generator) -> int:
        return epsilon_greedy(self.qtable, state, self.epsilon(self.t), self.opp, gen)

    def update(self, state, own, opp_action, reward, next_state):
        q_update(
            self.qtable, state, own, opp_action, reward, next_state,
            self.alpha(self.t), self.gamma, self.opp,
        )
        self.opp.observe(state, opp_action, d=own, next_state=next_state)
        self.t += 1


class FixedPolicyAgent:
    """Plays a constant action or a state-indexed policy vector."""

    def __init__(self, action):
        self.action = action

    def act(self, state: int, gen: np.random.Generator) -> int:
        if np.isscalar(self.action):
            return int(self.action)
        return int(self.action[state])

    def update(self, *args):
        pass


@dataclass
class Trajectory:
    """Per-step record of one iterated-game run."""

    actions_row: np.ndarray
    actions_col: np.ndarray
    rewards_row: np.ndarray
    rewards_col: np.ndarray

    def rolling_mean(self, window: int = 100) -> tuple:
        kernel = np.full(window, 1.0 / window)
        return (
            np.convolve(self.rewards_row, kernel, mode="valid"),
            np.convolve(self.rewards_col, kernel, mode="valid"),
        )

    def tail_mean(self, fraction: float = 0.1) -> tuple:
        n = max(1, int(round(len(self.rewards_row) * fraction)))
        return (
            float(self.rewards_row[-n:].mean()),
            float(self.rewards_col[-n:].mean()),
        )


def run_iterated_game(
    env: BimatrixEnv,
    agent_row,
    agent_col,
    n_iterations: int,
    seed: int | SeededRng,
) -> Trajectory:
    """Alternating observe/act/update loop on a repeated matrix game.

    Each agent sees only the state, its own reward and the opponent's
    realized action.  Bit-reproducible under a fixed seed.
    """
    if n_iterations < 1:
        raise ParameterError("n_iterations must be >= 1")
    rng = seed if isinstance(seed, SeededRng) else SeededRng(seed)
    gen_row = rng.substream("row").generator()
    gen_col = rng.substream("col").generator()

    actions_row = np.empty(n_iterations, dtype=int)
    actions_col = np.empty(n_iterations, dtype=int)
    rewards_row = np.empty(n_iterations)
    rewards_col = np.empty(n_iterations)

    state = 0
    for t in range(n_iterations):
        d = agent_row.act(state, gen_row)
        a = agent_col.act(state, gen_col)
        r_row = env.u_row[d, a]
        r_col = env.u_col[d, a]
        nxt = env.next_state(d, a)
        agent_row.update(state, d, a, r_row, nxt)
        # the column agent sees the game transposed
        agent_col.update(state, a, d, r_col, nxt)
        actions_row[t], actions_col[t] = d, a
        rewards_row[t], rewards_col[t] = r_row, r_col
        state = nxt

    return Trajectory(actions_row, actions_col, rewards_row, rewards_col)


# ---------------------------------------------------------------------------
# Oracles and convergence harness


def value_iteration_oracle(
    spec: TmdpSpec,
    fixed_opp: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 1_000_000,
):
    """Exact solution of the MDP induced by a fixed opponent policy.

    Returns (V, Q) with Q over (state, d).  Raises if the fixed point is
    not reached within the iteration cap.
    """
    policy = np.asarray(fixed_opp, dtype=float)
    if policy.shape != (spec.n_states, spec.n_a):
        raise DimensionError(
            f"policy shape {policy.shape} != {(spec.n_states, spec.n_a)}"
        )
    # r(s,d) and P(s'|s,d) averaged over the opponent policy
    r_bar = np.einsum("sda,sa->sd", spec.reward, policy)
    p_bar = np.einsum("sdat,sa->sdt", spec.transition, policy)

    v = np.zeros(spec.n_states)
    for _ in range(max_iter):
        q = r_bar + spec.gamma * (p_bar @ v)
        v_new = q.max(axis=1)
        if np.abs(v_new - v).max() <= tol:
            return v_new, r_bar + spec.gamma * (p_bar @ v_new)
        v = v_new
    raise NumericError(f"value iteration did not converge within {max_iter} sweeps")


def train_q_fixed_opponent(
    spec: TmdpSpec,
    fixed_opp: np.ndarray,
    n_steps: int,
    rng: SeededRng,
    alpha_exponent: float = 0.75,
    block: int = 8192,
) -> QTable:
    """Online Q-learning against a known fixed opponent policy.

    Behavior policy is uniform exploration (Q-learning is off-policy);
    step sizes are per-cell Robbins-Monro, 1 / n_visits**alpha_exponent.
    Random draws are consumed in fixed blocks so results do not depend on
    how the loop is chunked.
    """
    policy = np.asarray(fixed_opp, dtype=float)
    opp = StaticOpponent(policy)
    q = QTable(spec.n_states, spec.n_d, spec.n_a)
    visits = np.zeros((spec.n_states, spec.n_d, spec.n_a))
    # expected-Q cache M[s, d] = Q[s, d] @ policy[s], updated incrementally
    m = np.zeros((spec.n_states, spec.n_d))

    cum_p = spec.transition.cumsum(axis=-1)
    cum_opp = policy.cumsum(axis=-1)
    gamma = spec.gamma
    reward = spec.reward

    state = 0
    done = 0
    b = 0
    while done < n_steps:
        n = min(block, n_steps - done)
        gen = rng.substream("train", b).generator()
        d_block = gen.integers(spec.n_d, size=n)
        u_opp = gen.random(n)
        u_next = gen.random(n)
        for i in range(n):
            d = int(d_block[i])
            a = int(np.searchsorted(cum_opp[state], u_opp[i], side="right"))
            nxt = int(np.searchsorted(cum_p[state, d, a], u_next[i], side="right"))
            visits[state, d, a] += 1
            alpha = visits[state, d, a] ** -alpha_exponent
            target = reward[state, d, a] + gamma * m[nxt].max()
            delta = alpha * (target - q.q[state, d, a])
            q.q[state, d, a] += delta
            m[state, d] += delta * policy[state, a]
            state = nxt
        done += n
        b += 1
    return q
