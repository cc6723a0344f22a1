"""Solvers for finite defend-attack games.

Three templates are covered, corresponding to white-, black- and gray-box
threat settings:

* sequential (attacker observes the defense): subgame-perfect baseline via
  backward induction, plus the Bayesian solution that replaces the
  common-knowledge attacker with a distribution over his judgements and
  simulates his optimal response;
* simultaneous: pure Nash enumeration on bimatrix games, plus a level-k
  best-response hierarchy grounded in a non-informative prior;
* sequential with defender private information: the double rollback that
  first simulates the attacker (who only holds a prior over the private
  state) and then optimizes the defense separately for each private state.

All spaces are explicit finite sets, so every integral is a finite sum and
every solver admits a brute-force oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .core import (
    DiscreteDistribution,
    RandomJudgement,
    UtilityTable,
    mc_argmax_distribution,
)
from .errors import DataError, DimensionError, ParameterError
from .rng import SeededRng

__all__ = [
    "SequentialGame",
    "SimultaneousGame",
    "PrivateInfoGame",
    "LevelKPolicy",
    "SequentialDraw",
    "PrivateInfoDraw",
    "solve_sequential_nash",
    "solve_sequential_ara",
    "enumerate_pure_nash",
    "solve_simultaneous_ara",
    "solve_private_info_ara",
    "load_game",
    "CHICKEN_PAYOFFS",
]

# Row/column payoffs of the Chicken game; C = chicken out, E = escalate.
CHICKEN_PAYOFFS = {
    "actions": ("C", "E"),
    "u_row": np.array([[0.0, -2.0], [1.0, -4.0]]),
    "u_col": np.array([[0.0, 1.0], [-2.0, -4.0]]),
}


def _check_belief_map(beliefs, d_actions, a_actions, outcomes, name):
    for d in d_actions:
        for a in a_actions:
            if (d, a) not in beliefs:
                raise ParameterError(f"{name} missing entry for ({d!r}, {a!r})")
            dist = beliefs[(d, a)]
            if dist.outcomes != tuple(outcomes):
                raise DimensionError(
                    f"{name}[({d!r}, {a!r})] has outcomes {dist.outcomes}, "
                    f"expected {tuple(outcomes)}"
                )


@dataclass(frozen=True)
class SequentialGame:
    """Defender moves first; the attacker observes her choice.

    ``p_d_outcome`` holds the defender's outcome beliefs per (d, a);
    ``p_a_outcome`` the attacker's, used only by the equilibrium baseline.
    """

    d_actions: tuple
    a_actions: tuple
    outcomes: tuple
    p_d_outcome: Mapping
    u_d: UtilityTable
    u_a: UtilityTable
    p_a_outcome: Mapping | None = None

    def __post_init__(self):
        object.__setattr__(self, "d_actions", tuple(self.d_actions))
        object.__setattr__(self, "a_actions", tuple(self.a_actions))
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        _check_belief_map(
            self.p_d_outcome, self.d_actions, self.a_actions, self.outcomes,
            "p_d_outcome",
        )
        if self.p_a_outcome is not None:
            _check_belief_map(
                self.p_a_outcome, self.d_actions, self.a_actions, self.outcomes,
                "p_a_outcome",
            )

    def psi_d(self, d, a) -> float:
        """Defender's exact expected utility of (d, a)."""
        p = self.p_d_outcome[(d, a)]
        return sum(self.u_d.value(d, o) * p.prob(o) for o in self.outcomes)

    def psi_a(self, d, a) -> float:
        """Attacker's exact expected utility of (d, a); needs p_a_outcome."""
        if self.p_a_outcome is None:
            raise ParameterError("attacker beliefs (p_a_outcome) not provided")
        p = self.p_a_outcome[(d, a)]
        return sum(self.u_a.value(a, o) * p.prob(o) for o in self.outcomes)


@dataclass(frozen=True)
class SimultaneousGame:
    """Agents move without observing each other.

    Either the bimatrix shortcut (``u_d_payoff``/``u_a_payoff`` indexed
    (d, a), for games with sure outcomes) or the outcome-based form is
    given, never both.
    """

    d_actions: tuple
    a_actions: tuple
    outcomes: tuple = ()
    p_d_outcome: Mapping | None = None
    p_a_outcome: Mapping | None = None
    u_d: UtilityTable | None = None
    u_a: UtilityTable | None = None
    u_d_payoff: np.ndarray | None = None
    u_a_payoff: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "d_actions", tuple(self.d_actions))
        object.__setattr__(self, "a_actions", tuple(self.a_actions))
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        bimatrix = self.u_d_payoff is not None or self.u_a_payoff is not None
        outcome_form = self.u_d is not None or self.p_d_outcome is not None
        if bimatrix and outcome_form:
            raise ParameterError(
                "bimatrix shortcut and outcome-based form are mutually exclusive"
            )
        if bimatrix:
            shape = (len(self.d_actions), len(self.a_actions))
            for name in ("u_d_payoff", "u_a_payoff"):
                table = getattr(self, name)
                if table is None:
                    raise ParameterError(f"bimatrix form requires {name}")
                table = np.asarray(table, dtype=float)
                if table.shape != shape:
                    raise DimensionError(f"{name} shape {table.shape} != {shape}")
                object.__setattr__(self, name, table)
        elif outcome_form:
            _check_belief_map(
                self.p_d_outcome, self.d_actions, self.a_actions, self.outcomes,
                "p_d_outcome",
            )
        else:
            raise ParameterError("provide either payoff tables or outcome form")

    @property
    def is_bimatrix(self) -> bool:
        return self.u_d_payoff is not None

    @classmethod
    def from_bimatrix(cls, d_actions, a_actions, u_d, u_a) -> "SimultaneousGame":
        return cls(
            d_actions=tuple(d_actions),
            a_actions=tuple(a_actions),
            u_d_payoff=np.asarray(u_d, dtype=float),
            u_a_payoff=np.asarray(u_a, dtype=float),
        )

    @classmethod
    def chicken(cls) -> "SimultaneousGame":
        acts = CHICKEN_PAYOFFS["actions"]
        return cls.from_bimatrix(
            acts, acts, CHICKEN_PAYOFFS["u_row"], CHICKEN_PAYOFFS["u_col"]
        )

    def defender_payoff_matrix(self) -> np.ndarray:
        """Defender expected utilities as a (|D|, |A|) matrix."""
        if self.is_bimatrix:
            return self.u_d_payoff
        out = np.empty((len(self.d_actions), len(self.a_actions)))
        for i, d in enumerate(self.d_actions):
            for j, a in enumerate(self.a_actions):
                p = self.p_d_outcome[(d, a)]
                out[i, j] = sum(
                    self.u_d.value(d, o) * p.prob(o) for o in self.outcomes
                )
        return out


@dataclass(frozen=True)
class PrivateInfoGame:
    """Sequential game where the defender privately observes v in V.

    ``a_prior_v`` is the attacker's belief over V, either unconditional or
    a mapping d -> distribution (the p_A(v|d) form).
    """

    d_actions: tuple
    a_actions: tuple
    outcomes: tuple
    v_states: tuple
    a_prior_v: DiscreteDistribution | Mapping
    p_d_outcome: Mapping  # (d, a, v) -> DiscreteDistribution
    u_d: UtilityTable  # axes (d, outcome, v)
    u_a: UtilityTable  # axes (a, outcome, v)

    def __post_init__(self):
        for name in ("d_actions", "a_actions", "outcomes", "v_states"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for d in self.d_actions:
            for a in self.a_actions:
                for v in self.v_states:
                    if (d, a, v) not in self.p_d_outcome:
                        raise ParameterError(
                            f"p_d_outcome missing entry for ({d!r}, {a!r}, {v!r})"
                        )
                    dist = self.p_d_outcome[(d, a, v)]
                    if dist.outcomes != self.outcomes:
                        raise DimensionError(
                            f"p_d_outcome[({d!r}, {a!r}, {v!r})] outcomes "
                            f"{dist.outcomes} != {self.outcomes}"
                        )

    def prior_v_given(self, d) -> DiscreteDistribution:
        if isinstance(self.a_prior_v, DiscreteDistribution):
            return self.a_prior_v
        return self.a_prior_v[d]

    def psi_d(self, d, a, v) -> float:
        p = self.p_d_outcome[(d, a, v)]
        return sum(self.u_d.value(d, o, v) * p.prob(o) for o in self.outcomes)


@dataclass(frozen=True)
class LevelKPolicy:
    """Level-k hierarchy for the simultaneous solver.

    ``judgements[j]`` models the agent reasoning at level j (attacker at
    the top level k, roles alternating downward).  Level 0 ignores every
    judgement and plays ``base_prior``, the non-informative distribution
    terminating the recursion.
    """

    level: int
    base_prior: DiscreteDistribution
    judgements: Mapping[int, RandomJudgement] = field(default_factory=dict)

    def __post_init__(self):
        if self.level < 0:
            raise ParameterError("level must be non-negative")


# ---------------------------------------------------------------------------
# Sequential template


def solve_sequential_nash(game: SequentialGame):
    """Subgame-perfect solution by backward induction.

    Exact; ties broken lexicographically by action identifier.  Returns
    (d_star, best_response) with best_response mapping each defense to the
    attacker's optimal reply.
    """
    best_response = {}
    for d in game.d_actions:
        best = None
        for a in sorted(game.a_actions):
            val = game.psi_a(d, a)
            if best is None or val > best[1]:
                best = (a, val)
        best_response[d] = best[0]
    d_star = None
    for d in sorted(game.d_actions):
        val = game.psi_d(d, best_response[d])
        if d_star is None or val > d_star[1]:
            d_star = (d, val)
    return d_star[0], best_response


@dataclass(frozen=True)
class SequentialDraw:
    """One draw of the attacker's judgements for a sequential game.

    ``u_a[i, k]`` is his utility for action a_i under outcome o_k;
    ``p_a[j, i, k]`` his outcome belief given (d_j, a_i).
    """

    u_a: np.ndarray
    p_a: np.ndarray

    @classmethod
    def from_game(cls, game: SequentialGame) -> "SequentialDraw":
        """The game's own attacker judgements (the common-knowledge case)."""
        u = np.array(
            [[game.u_a.value(a, o) for o in game.outcomes] for a in game.a_actions]
        )
        p = np.array(
            [
                [game.p_a_outcome[(d, a)].probs for a in game.a_actions]
                for d in game.d_actions
            ]
        )
        return cls(u_a=u, p_a=p)

    def psi_a(self, d_index: int, a_index: int) -> float:
        return float(self.u_a[a_index] @ self.p_a[d_index, a_index])


def solve_sequential_ara(
    game: SequentialGame,
    attacker_judgement,
    n_samples: int,
    rng: SeededRng,
):
    """Bayesian solution of the sequential game.

    For each defense d, the attacker's response distribution p_attack(d)
    is the MC argmax frequency of his random expected utility; the optimal
    defense maximizes the defender's exact expected utility averaged over
    that distribution.  Returns (d_star, p_attack).
    """
    a_index = {a: i for i, a in enumerate(game.a_actions)}
    p_attack = {}
    for j, d in enumerate(game.d_actions):
        def score(draw, a, _j=j):
            return draw.psi_a(_j, a_index[a])

        p_attack[d] = mc_argmax_distribution(
            attacker_judgement, game.a_actions, score, n_samples,
            rng.substream("p_attack", j),
        )

    d_star = None
    for d in sorted(game.d_actions):
        val = sum(game.psi_d(d, a) * p_attack[d].prob(a) for a in game.a_actions)
        if d_star is None or val > d_star[1]:
            d_star = (d, val)
    return d_star[0], p_attack


# ---------------------------------------------------------------------------
# Simultaneous template


def enumerate_pure_nash(game: SimultaneousGame) -> set:
    """All pure-strategy equilibria of a bimatrix game.

    A pair is kept iff neither agent can strictly improve by deviating
    unilaterally.
    """
    if not game.is_bimatrix:
        raise ParameterError("pure NE enumeration requires the bimatrix form")
    u_d, u_a = game.u_d_payoff, game.u_a_payoff
    equilibria = set()
    for i, d in enumerate(game.d_actions):
        for j, a in enumerate(game.a_actions):
            if u_d[i, j] < u_d[:, j].max():
                continue
            if u_a[i, j] < u_a[i, :].max():
                continue
            equilibria.add((d, a))
    return equilibria


def _level_role(top_level: int, j: int) -> str:
    # The level-k agent at the top is the attacker; roles alternate down.
    return "attacker" if (top_level - j) % 2 == 0 else "defender"


def _level_distribution(
    game: SimultaneousGame,
    hierarchy: LevelKPolicy,
    j: int,
    n_samples: int,
    rng: SeededRng,
) -> DiscreteDistribution:
    role = _level_role(hierarchy.level, j)
    own = game.a_actions if role == "attacker" else game.d_actions
    if j == 0:
        if hierarchy.base_prior.outcomes != tuple(own):
            raise DimensionError(
                f"base_prior is over {hierarchy.base_prior.outcomes}, but the "
                f"level-0 agent ({role}) acts on {tuple(own)}"
            )
        return hierarchy.base_prior

    below = _level_distribution(game, hierarchy, j - 1, n_samples, rng)
    judgement = hierarchy.judgements[j]
    own_index = {x: i for i, x in enumerate(own)}

    def score(draw, action):
        # draw: (|own|, |other|) expected-utility matrix for this level's agent
        return float(np.asarray(draw)[own_index[action]] @ below.probs)

    return mc_argmax_distribution(
        judgement, own, score, n_samples, rng.substream("level", j)
    )


def solve_simultaneous_ara(
    game: SimultaneousGame,
    hierarchy: LevelKPolicy,
    n_samples: int,
    rng: SeededRng,
):
    """Level-k solution of the simultaneous game.

    Judgement draws at each level are (|own actions|, |opponent actions|)
    expected-utility matrices for the agent reasoning at that level.
    Returns (d_star, opponent_belief), the level-k attacker distribution.
    """
    opponent_belief = _level_distribution(
        game, hierarchy, hierarchy.level, n_samples, rng
    )
    if _level_role(hierarchy.level, hierarchy.level) != "attacker":
        raise ParameterError("top of the hierarchy must model the attacker")
    payoff = game.defender_payoff_matrix()
    values = payoff @ opponent_belief.probs
    # lexicographic tie-break: max() keeps the first maximum in sorted order
    order = sorted(range(len(game.d_actions)), key=lambda i: game.d_actions[i])
    best = max(order, key=lambda i: values[i])
    return game.d_actions[best], opponent_belief


# ---------------------------------------------------------------------------
# Private-information template


@dataclass(frozen=True)
class PrivateInfoDraw:
    """One draw of the attacker's judgements with private information.

    ``u_a[i, k, m]`` over (a, outcome, v); ``p_a[j, i, m, k]`` his outcome
    beliefs per (d, a, v); ``p_v[j, m]`` his belief over v given d.
    """

    u_a: np.ndarray
    p_a: np.ndarray
    p_v: np.ndarray

    @classmethod
    def from_tables(cls, game: PrivateInfoGame, p_a_outcome=None, u_a=None, p_v=None):
        """Point judgements defaulting to the game's own tables."""
        if u_a is None:
            u_a = np.array(
                [
                    [
                        [game.u_a.value(a, o, v) for v in game.v_states]
                        for o in game.outcomes
                    ]
                    for a in game.a_actions
                ]
            ).transpose(0, 1, 2)  # (a, outcome, v)
        if p_a_outcome is None:
            p_a_outcome = game.p_d_outcome
        p_a = np.array(
            [
                [
                    [p_a_outcome[(d, a, v)].probs for v in game.v_states]
                    for a in game.a_actions
                ]
                for d in game.d_actions
            ]
        )  # (d, a, v, outcome)
        if p_v is None:
            p_v = np.array(
                [game.prior_v_given(d).probs for d in game.d_actions]
            )  # (d, v)
        return cls(u_a=u_a, p_a=p_a, p_v=p_v)

    def psi_a(self, d_index: int, a_index: int) -> float:
        # roll back over outcomes, then over v with the prior p_A(v|d)
        psi_dav = np.einsum(
            "ov,vo->v", self.u_a[a_index], self.p_a[d_index, a_index]
        )
        return float(psi_dav @ self.p_v[d_index])


def solve_private_info_ara(
    game: PrivateInfoGame,
    attacker_judgement,
    n_samples: int,
    rng: SeededRng,
):
    """Double rollback with simulated attacker.

    Attacker side: his random expected utility per (d, a, v) is averaged
    over his prior on v, and the MC argmax per defense gives p_attack(d).
    Defender side: her exact expected utility per (d, a, v) is averaged
    over p_attack(d), and the optimal defense is chosen per private state.
    Returns (policy, p_attack) with policy mapping v -> d.
    """
    a_index = {a: i for i, a in enumerate(game.a_actions)}
    p_attack = {}
    for j, d in enumerate(game.d_actions):
        def score(draw, a, _j=j):
            return draw.psi_a(_j, a_index[a])

        p_attack[d] = mc_argmax_distribution(
            attacker_judgement, game.a_actions, score, n_samples,
            rng.substream("p_attack", j),
        )

    policy = {}
    for v in game.v_states:
        best = None
        for d in sorted(game.d_actions):
            val = sum(
                game.psi_d(d, a, v) * p_attack[d].prob(a) for a in game.a_actions
            )
            if best is None or val > best[1]:
                best = (d, val)
        policy[v] = best[0]
    return policy, p_attack


# ---------------------------------------------------------------------------
# Game file loader (YAML, nested key-value)


def _dist_from_node(node, outcomes, where) -> DiscreteDistribution:
    try:
        probs = [float(node[o]) for o in outcomes]
    except KeyError as exc:
        raise DataError(f"{where}: missing probability for outcome {exc}") from None
    try:
        return DiscreteDistribution(outcomes, probs)
    except (ParameterError, DimensionError) as exc:
        raise DataError(f"{where}: {exc}") from None


def _utility_from_node(node, axes, where) -> UtilityTable:
    shape = tuple(len(labels) for labels in axes.values())
    values = np.empty(shape)
    it = np.ndindex(*shape)
    labels_per_axis = list(axes.values())
    for idx in it:
        key = tuple(labels_per_axis[k][i] for k, i in enumerate(idx))
        cursor = node
        for part in key:
            if not isinstance(cursor, dict) or part not in cursor:
                raise DataError(f"{where}: missing value for index {key}")
            cursor = cursor[part]
        try:
            values[idx] = float(cursor)
        except (TypeError, ValueError):
            raise DataError(f"{where}: non-numeric value at index {key}") from None
    return UtilityTable(axes, values)


def load_game(path):
    """Load a game description from a YAML document.

    The ``kind`` field selects the template (sequential, simultaneous,
    bimatrix, private_info).  All invariants are validated; failures name
    the offending index.
    """
    import yaml

    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or "kind" not in doc:
        raise DataError(f"{path}: expected a mapping with a 'kind' field")
    kind = doc["kind"]
    try:
        if kind == "bimatrix":
            d_actions = tuple(doc["d_actions"])
            a_actions = tuple(doc["a_actions"])
            u_d = _utility_from_node(
                doc["u_d"], {"d": d_actions, "a": a_actions}, f"{path}:u_d"
            )
            u_a = _utility_from_node(
                doc["u_a"], {"d": d_actions, "a": a_actions}, f"{path}:u_a"
            )
            return SimultaneousGame.from_bimatrix(
                d_actions, a_actions, u_d.values, u_a.values
            )
        if kind in ("sequential", "simultaneous"):
            d_actions = tuple(doc["d_actions"])
            a_actions = tuple(doc["a_actions"])
            outcomes = tuple(doc["outcomes"])
            beliefs = {}
            for side in ("p_d_outcome", "p_a_outcome"):
                if side not in doc:
                    continue
                beliefs[side] = {}
                for d in d_actions:
                    for a in a_actions:
                        node = doc[side].get(d, {}).get(a)
                        if node is None:
                            raise DataError(
                                f"{path}:{side}: missing entry for ({d!r}, {a!r})"
                            )
                        beliefs[side][(d, a)] = _dist_from_node(
                            node, outcomes, f"{path}:{side}[{d},{a}]"
                        )
            u_d = _utility_from_node(
                doc["u_d"], {"d": d_actions, "outcome": outcomes}, f"{path}:u_d"
            )
            u_a = _utility_from_node(
                doc["u_a"], {"a": a_actions, "outcome": outcomes}, f"{path}:u_a"
            )
            if kind == "sequential":
                return SequentialGame(
                    d_actions=d_actions,
                    a_actions=a_actions,
                    outcomes=outcomes,
                    p_d_outcome=beliefs["p_d_outcome"],
                    p_a_outcome=beliefs.get("p_a_outcome"),
                    u_d=u_d,
                    u_a=u_a,
                )
            return SimultaneousGame(
                d_actions=d_actions,
                a_actions=a_actions,
                outcomes=outcomes,
                p_d_outcome=beliefs["p_d_outcome"],
                p_a_outcome=beliefs.get("p_a_outcome"),
                u_d=u_d,
                u_a=u_a,
            )
        if kind == "private_info":
            d_actions = tuple(doc["d_actions"])
            a_actions = tuple(doc["a_actions"])
            outcomes = tuple(doc["outcomes"])
            v_states = tuple(doc["v_states"])
            prior = _dist_from_node(doc["a_prior_v"], v_states, f"{path}:a_prior_v")
            p_d_outcome = {}
            for d in d_actions:
                for a in a_actions:
                    for v in v_states:
                        node = doc["p_d_outcome"].get(d, {}).get(a, {}).get(v)
                        if node is None:
                            raise DataError(
                                f"{path}:p_d_outcome: missing entry for "
                                f"({d!r}, {a!r}, {v!r})"
                            )
                        p_d_outcome[(d, a, v)] = _dist_from_node(
                            node, outcomes, f"{path}:p_d_outcome[{d},{a},{v}]"
                        )
            u_d = _utility_from_node(
                doc["u_d"],
                {"d": d_actions, "outcome": outcomes, "v": v_states},
                f"{path}:u_d",
            )
            u_a = _utility_from_node(
                doc["u_a"],
                {"a": a_actions, "outcome": outcomes, "v": v_states},
                f"{path}:u_a",
            )
            return PrivateInfoGame(
                d_actions=d_actions,
                a_actions=a_actions,
                outcomes=outcomes,
                v_states=v_states,
                a_prior_v=prior,
                p_d_outcome=p_d_outcome,
                u_d=u_d,
                u_a=u_a,
            )
    except KeyError as exc:
        raise DataError(f"{path}: missing required field {exc}") from None
    raise DataError(f"{path}: unknown game kind {kind!r}")
