import itertools

import numpy as np
import pytest
import yaml

from araml.core import DiscreteDistribution, RandomJudgement, UtilityTable
from araml.errors import DataError, DimensionError, ParameterError
from araml.rng import SeededRng
from araml.templates import (
    CHICKEN_PAYOFFS,
    LevelKPolicy,
    PrivateInfoDraw,
    PrivateInfoGame,
    SequentialDraw,
    SequentialGame,
    SimultaneousGame,
    enumerate_pure_nash,
    load_game,
    solve_private_info_ara,
    solve_sequential_ara,
    solve_sequential_nash,
    solve_simultaneous_ara,
)


def make_sequential(u_d_vals, u_a_vals, p_d, p_a=None,
                    d_actions=("d0", "d1"), a_actions=("a0", "a1"),
                    outcomes=("win", "lose")):
    u_d = UtilityTable({"d": d_actions, "outcome": outcomes}, u_d_vals)
    u_a = UtilityTable({"a": a_actions, "outcome": outcomes}, u_a_vals)
    return SequentialGame(
        d_actions=d_actions, a_actions=a_actions, outcomes=outcomes,
        p_d_outcome=p_d, u_d=u_d, u_a=u_a, p_a_outcome=p_a,
    )


def random_sequential(seed, shared_beliefs=True):
    gen = SeededRng(seed).substream("game").generator()
    d_actions, a_actions, outcomes = ("d0", "d1"), ("a0", "a1"), ("o0", "o1")
    p_d, p_a = {}, {}
    for d in d_actions:
        for a in a_actions:
            p_d[(d, a)] = DiscreteDistribution(outcomes, gen.dirichlet([1, 1]))
            p_a[(d, a)] = (
                p_d[(d, a)] if shared_beliefs
                else DiscreteDistribution(outcomes, gen.dirichlet([1, 1]))
            )
    return make_sequential(
        gen.normal(size=(2, 2)), gen.normal(size=(2, 2)), p_d, p_a,
        d_actions, a_actions, outcomes,
    )


# ---------------------------------------------------------------------------
# Sequential template


def test_sequential_nash_indifferent_attacker():
    game = random_sequential(0)
    # constant attacker utility: every reply ties, lexicographic-first wins
    flat = make_sequential(
        game.u_d.values, np.zeros((2, 2)), game.p_d_outcome, game.p_a_outcome,
        outcomes=game.outcomes,
    )
    d_star, best = solve_sequential_nash(flat)
    assert all(best[d] == "a0" for d in flat.d_actions)
    expected = max(sorted(flat.d_actions), key=lambda d: flat.psi_d(d, "a0"))
    assert d_star == expected


def brute_force_sequential(game):
    # oracle: enumerate every attacker reply function, keep the subgame-
    # perfect profile (attacker best response at every node)
    best_reply = {}
    for d in game.d_actions:
        best_reply[d] = max(sorted(game.a_actions), key=lambda a: game.psi_a(d, a))
    d_star = max(sorted(game.d_actions), key=lambda d: game.psi_d(d, best_reply[d]))
    # deviation-proofness check on the returned profile
    for d in game.d_actions:
        for a in game.a_actions:
            assert game.psi_a(d, a) <= game.psi_a(d, best_reply[d]) + 1e-12
    assert all(
        game.psi_d(d, best_reply[d]) <= game.psi_d(d_star, best_reply[d_star]) + 1e-12
        for d in game.d_actions
    )
    return d_star, best_reply


@pytest.mark.parametrize("seed", range(10))
def test_sequential_nash_matches_brute_force(seed):
    game = random_sequential(seed)
    assert solve_sequential_nash(game) == brute_force_sequential(game)


def chicken_sequential():
    """Chicken with the defender moving first and sure outcomes."""
    acts = CHICKEN_PAYOFFS["actions"]
    outcomes = tuple(f"{d}{a}" for d in acts for a in acts)
    p = {
        (d, a): DiscreteDistribution.point_mass(f"{d}{a}", outcomes)
        for d in acts for a in acts
    }
    u_d = np.array([[CHICKEN_PAYOFFS["u_row"][i, j] for i in range(2) for j in range(2)]
                    for _ in acts])
    u_a = np.array([[CHICKEN_PAYOFFS["u_col"][i, j] for i in range(2) for j in range(2)]
                    for _ in acts])
    return make_sequential(u_d, u_a, p, p, acts, acts, outcomes)


def test_sequential_nash_chicken_leader_escalates():
    # rollback: after E the attacker prefers C (-2 beats -4), giving the
    # defender 1; after C the attacker escalates (1 beats 0), giving -2
    game = chicken_sequential()
    d_star, best = solve_sequential_nash(game)
    assert d_star == "E"
    assert best["E"] == "C"
    assert best["C"] == "E"


def test_sequential_ara_ck_collapse():
    for seed in range(10):
        game = random_sequential(seed)
        judgement = RandomJudgement.point_mass(SequentialDraw.from_game(game))
        d_nash, _ = solve_sequential_nash(game)
        d_ara, _ = solve_sequential_ara(game, judgement, 50, SeededRng(seed))
        assert d_ara == d_nash


def test_sequential_ara_uniform_attacker():
    game = random_sequential(3)
    # exchangeable attacker scores -> p_attack uniform, d_star maximizes
    # the uniform average of psi_d
    judgement = RandomJudgement(
        sampler=lambda gen: gen.normal(size=2),
        batch_scores=lambda gen, actions, n: gen.normal(size=(n, len(actions))),
    )
    d_star, p_attack = solve_sequential_ara(game, judgement, 20_000, SeededRng(0))
    for d in game.d_actions:
        assert p_attack[d].prob("a0") == pytest.approx(0.5, abs=0.02)
    expected = max(
        sorted(game.d_actions),
        key=lambda d: np.mean([game.psi_d(d, a) for a in game.a_actions]),
    )
    assert d_star == expected


def test_sequential_ara_bernoulli_attack_probability():
    game = random_sequential(4)
    # attacker picks a0 iff a Uniform(0,1) draw exceeds 0.3 -> p(a0) = 0.7
    def batch(gen, actions, n):
        u = gen.random(n)
        return np.stack([u, np.full(n, 0.3)], axis=1)

    judgement = RandomJudgement(sampler=lambda gen: float(gen.random()),
                                batch_scores=batch)
    _, p_attack = solve_sequential_ara(game, judgement, 100_000, SeededRng(1))
    for d in game.d_actions:
        assert p_attack[d].prob("a0") == pytest.approx(0.7, abs=0.01)


def test_sequential_ara_affine_utility_invariance():
    game = random_sequential(5)
    judgement = RandomJudgement.point_mass(SequentialDraw.from_game(game))
    rescaled = make_sequential(
        3.0 * game.u_d.values + 2.0, game.u_a.values,
        game.p_d_outcome, game.p_a_outcome, outcomes=game.outcomes,
    )
    d1, _ = solve_sequential_ara(game, judgement, 100, SeededRng(2))
    d2, _ = solve_sequential_ara(rescaled, judgement, 100, SeededRng(2))
    assert d1 == d2


def test_sequential_psi_a_requires_attacker_beliefs():
    game = random_sequential(0)
    stripped = make_sequential(
        game.u_d.values, game.u_a.values, game.p_d_outcome, None,
        outcomes=game.outcomes,
    )
    with pytest.raises(ParameterError):
        stripped.psi_a("d0", "a0")


# ---------------------------------------------------------------------------
# Simultaneous template


def test_pure_nash_chicken():
    assert enumerate_pure_nash(SimultaneousGame.chicken()) == {("C", "E"), ("E", "C")}


def test_pure_nash_matching_pennies_empty():
    game = SimultaneousGame.from_bimatrix(
        ("H", "T"), ("H", "T"),
        [[1, -1], [-1, 1]], [[-1, 1], [1, -1]],
    )
    assert enumerate_pure_nash(game) == set()


@pytest.mark.parametrize("seed", range(5))
def test_pure_nash_matches_second_enumeration(seed):
    gen = SeededRng(seed).generator()
    u_d, u_a = gen.normal(size=(4, 4)), gen.normal(size=(4, 4))
    d_actions = tuple(f"d{i}" for i in range(4))
    a_actions = tuple(f"a{j}" for j in range(4))
    game = SimultaneousGame.from_bimatrix(d_actions, a_actions, u_d, u_a)
    # independently written deviation check
    oracle = set()
    for i, j in itertools.product(range(4), range(4)):
        if all(u_d[i2, j] <= u_d[i, j] for i2 in range(4)) and all(
            u_a[i, j2] <= u_a[i, j] for j2 in range(4)
        ):
            oracle.add((d_actions[i], a_actions[j]))
    assert enumerate_pure_nash(game) == oracle


def test_simultaneous_forms_mutually_exclusive():
    with pytest.raises(ParameterError):
        SimultaneousGame(
            d_actions=("d",), a_actions=("a",), outcomes=("o",),
            u_d_payoff=np.zeros((1, 1)), u_a_payoff=np.zeros((1, 1)),
            u_d=UtilityTable({"d": ("d",), "outcome": ("o",)}, [[0.0]]),
        )


def test_level0_uniform_prior():
    game = SimultaneousGame.chicken()
    hierarchy = LevelKPolicy(
        level=0, base_prior=DiscreteDistribution.uniform(game.a_actions)
    )
    d_star, belief = solve_simultaneous_ara(game, hierarchy, 10, SeededRng(0))
    assert belief.prob("C") == pytest.approx(0.5)
    # row averages: C -> -1, E -> -1.5, so the defender chickens out
    assert d_star == "C"


def chicken_level_hierarchy(level):
    judgements = {}
    for j in range(1, level + 1):
        if (level - j) % 2 == 0:
            judgements[j] = RandomJudgement.point_mass(CHICKEN_PAYOFFS["u_col"].T)
        else:
            judgements[j] = RandomJudgement.point_mass(CHICKEN_PAYOFFS["u_row"])
    base = ("C", "E")
    return LevelKPolicy(
        level=level,
        base_prior=DiscreteDistribution.uniform(base),
        judgements=judgements,
    )


def test_level1_chicken_hand_values():
    # attacker vs uniform defender: EU(C) = (0 - 2)/2 = -1,
    # EU(E) = (1 - 4)/2 = -1.5, so he chickens out and the defender escalates
    game = SimultaneousGame.chicken()
    d_star, belief = solve_simultaneous_ara(
        game, chicken_level_hierarchy(1), 1000, SeededRng(0)
    )
    assert belief.prob("C") == 1.0
    assert d_star == "E"


def test_level2_equals_manual_composition():
    game = SimultaneousGame.chicken()
    hierarchy = chicken_level_hierarchy(2)
    rng = SeededRng(7)
    d_star, belief = solve_simultaneous_ara(game, hierarchy, 500, rng)

    # unroll the recursion by hand with the same substreams
    from araml.core import mc_argmax_distribution

    level0 = hierarchy.base_prior  # attacker prior
    j1 = hierarchy.judgements[1]
    manual1 = mc_argmax_distribution(
        j1, game.d_actions,
        lambda d, a: float(np.asarray(d)[game.d_actions.index(a)] @ level0.probs),
        500, rng.substream("level", 1),
    )
    j2 = hierarchy.judgements[2]
    manual2 = mc_argmax_distribution(
        j2, game.a_actions,
        lambda d, a: float(np.asarray(d)[game.a_actions.index(a)] @ manual1.probs),
        500, rng.substream("level", 2),
    )
    assert np.array_equal(belief.probs, manual2.probs)
    payoff = game.defender_payoff_matrix()
    values = payoff @ manual2.probs
    assert d_star == game.d_actions[int(np.argmax(values))]


def test_level_point_mass_belief_is_direct_best_response():
    # a point-mass level-(k-1) belief makes level k a plain best response
    game = SimultaneousGame.chicken()
    hierarchy = LevelKPolicy(
        level=1,
        base_prior=DiscreteDistribution.point_mass("E", ("C", "E")),
        judgements={1: RandomJudgement.point_mass(CHICKEN_PAYOFFS["u_col"].T)},
    )
    _, belief = solve_simultaneous_ara(game, hierarchy, 200, SeededRng(0))
    # attacker vs defender playing E: C gives -2, E gives -4 -> C surely
    assert belief.prob("C") == 1.0


def test_level0_wrong_role_prior_rejected():
    game = SimultaneousGame.chicken()
    bad = LevelKPolicy(
        level=1, base_prior=DiscreteDistribution.uniform(("C", "E", "X"))
    )
    with pytest.raises(DimensionError):
        solve_simultaneous_ara(game, bad, 10, SeededRng(0))


# ---------------------------------------------------------------------------
# Private-information template


def make_private_info(seed, n_v=2, v_irrelevant=False):
    gen = SeededRng(seed).substream("pi").generator()
    d_actions, a_actions = ("d0", "d1"), ("a0", "a1")
    outcomes = ("o0", "o1")
    v_states = tuple(f"v{m}" for m in range(n_v))
    if v_irrelevant:
        shared = {
            (d, a): DiscreteDistribution(outcomes, gen.dirichlet([1, 1]))
            for d in d_actions for a in a_actions
        }
        p = {(d, a, v): shared[(d, a)]
             for d in d_actions for a in a_actions for v in v_states}
    else:
        p = {
            (d, a, v): DiscreteDistribution(outcomes, gen.dirichlet([1, 1]))
            for d in d_actions for a in a_actions for v in v_states
        }
    u_d_vals = gen.normal(size=(2, 2, n_v))
    if v_irrelevant:
        u_d_vals = np.repeat(u_d_vals[:, :, :1], n_v, axis=2)
    u_a_vals = gen.normal(size=(2, 2, n_v))
    prior = DiscreteDistribution(v_states, gen.dirichlet(np.ones(n_v)))
    return PrivateInfoGame(
        d_actions=d_actions, a_actions=a_actions, outcomes=outcomes,
        v_states=v_states, a_prior_v=prior, p_d_outcome=p,
        u_d=UtilityTable({"d": d_actions, "outcome": outcomes, "v": v_states},
                         u_d_vals),
        u_a=UtilityTable({"a": a_actions, "outcome": outcomes, "v": v_states},
                         u_a_vals),
    )


def test_private_info_single_v_collapses_to_sequential():
    game = make_private_info(0, n_v=1)
    judgement = RandomJudgement.point_mass(PrivateInfoDraw.from_tables(game))
    policy, p_attack = solve_private_info_ara(game, judgement, 200, SeededRng(3))

    v = game.v_states[0]
    seq = make_sequential(
        game.u_d.values[:, :, 0],
        game.u_a.values[:, :, 0],
        {(d, a): game.p_d_outcome[(d, a, v)]
         for d in game.d_actions for a in game.a_actions},
        {(d, a): game.p_d_outcome[(d, a, v)]
         for d in game.d_actions for a in game.a_actions},
        outcomes=game.outcomes,
    )
    seq_judgement = RandomJudgement.point_mass(SequentialDraw.from_game(seq))
    d_seq, p_seq = solve_sequential_ara(seq, seq_judgement, 200, SeededRng(3))
    assert policy[v] == d_seq
    for d in game.d_actions:
        assert np.array_equal(p_attack[d].probs, p_seq[d].probs)


def test_private_info_payoff_irrelevant_signal():
    # v affects neither the defender's utilities nor the outcome beliefs
    game = make_private_info(1, n_v=2, v_irrelevant=True)
    judgement = RandomJudgement.point_mass(PrivateInfoDraw.from_tables(game))
    policy, _ = solve_private_info_ara(game, judgement, 200, SeededRng(0))
    assert len(set(policy.values())) == 1


@pytest.mark.parametrize("seed", range(5))
def test_private_info_matches_policy_enumeration(seed):
    game = make_private_info(seed)
    judgement = RandomJudgement.point_mass(PrivateInfoDraw.from_tables(game))
    policy, p_attack = solve_private_info_ara(game, judgement, 200, SeededRng(9))

    # brute-force oracle over all |D|^|V| policies, using the same p_attack
    def value(pol):
        total = 0.0
        for v in game.v_states:
            d = pol[v]
            total += sum(
                game.psi_d(d, a, v) * p_attack[d].prob(a) for a in game.a_actions
            )
        return total

    candidates = [
        dict(zip(game.v_states, combo))
        for combo in itertools.product(game.d_actions, repeat=len(game.v_states))
    ]
    best = max(candidates, key=value)
    assert value(policy) == pytest.approx(value(best), abs=1e-12)


def test_private_info_conditional_prior():
    game = make_private_info(2)
    gen = SeededRng(4).generator()
    conditional = {
        d: DiscreteDistribution(game.v_states, gen.dirichlet([1, 1]))
        for d in game.d_actions
    }
    game2 = PrivateInfoGame(
        d_actions=game.d_actions, a_actions=game.a_actions,
        outcomes=game.outcomes, v_states=game.v_states,
        a_prior_v=conditional, p_d_outcome=game.p_d_outcome,
        u_d=game.u_d, u_a=game.u_a,
    )
    for d in game2.d_actions:
        assert game2.prior_v_given(d) is conditional[d]


# ---------------------------------------------------------------------------
# Game file loader


def test_load_bimatrix_roundtrip(tmp_path):
    doc = {
        "kind": "bimatrix",
        "d_actions": ["C", "E"],
        "a_actions": ["C", "E"],
        "u_d": {"C": {"C": 0, "E": -2}, "E": {"C": 1, "E": -4}},
        "u_a": {"C": {"C": 0, "E": 1}, "E": {"C": -2, "E": -4}},
    }
    path = tmp_path / "chicken.yaml"
    path.write_text(yaml.safe_dump(doc))
    game = load_game(path)
    assert enumerate_pure_nash(game) == {("C", "E"), ("E", "C")}


def test_load_sequential_roundtrip(tmp_path):
    doc = {
        "kind": "sequential",
        "d_actions": ["d0", "d1"],
        "a_actions": ["a0"],
        "outcomes": ["w", "l"],
        "p_d_outcome": {
            "d0": {"a0": {"w": 0.7, "l": 0.3}},
            "d1": {"a0": {"w": 0.2, "l": 0.8}},
        },
        "p_a_outcome": {
            "d0": {"a0": {"w": 0.7, "l": 0.3}},
            "d1": {"a0": {"w": 0.2, "l": 0.8}},
        },
        "u_d": {"d0": {"w": 1, "l": 0}, "d1": {"w": 1, "l": 0}},
        "u_a": {"a0": {"w": 0, "l": 1}},
    }
    path = tmp_path / "seq.yaml"
    path.write_text(yaml.safe_dump(doc))
    game = load_game(path)
    d_star, best = solve_sequential_nash(game)
    assert d_star == "d0" and best["d0"] == "a0"


def test_load_game_reports_offending_index(tmp_path):
    doc = {
        "kind": "sequential",
        "d_actions": ["d0"],
        "a_actions": ["a0"],
        "outcomes": ["w", "l"],
        "p_d_outcome": {"d0": {"a0": {"w": 0.9}}},  # missing "l"
        "u_d": {"d0": {"w": 1, "l": 0}},
        "u_a": {"a0": {"w": 0, "l": 1}},
    }
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(doc))
    with pytest.raises(DataError, match="d0"):
        load_game(path)


def test_load_game_unknown_kind(tmp_path):
    path = tmp_path / "odd.yaml"
    path.write_text("kind: tictactoe\n")
    with pytest.raises(DataError, match="tictactoe"):
        load_game(path)
