"""Probability/utility primitives and the Monte Carlo argmax engine.

The central object is :func:`mc_argmax_distribution`: given a distribution
over an opponent's judgements (utilities and beliefs), it estimates how
often each available action comes out as the opponent's expected-utility
maximizer.  Everything else here is the supporting cast: normalized finite
distributions, dense utility tables, and seedable samplers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np

from .errors import DimensionError, NumericError, ParameterError
from .rng import SeededRng

__all__ = [
    "DiscreteDistribution",
    "UtilityTable",
    "RandomJudgement",
    "FiniteJudgement",
    "expected_utility",
    "mc_argmax_distribution",
    "sample_dirichlet",
    "sample_beta",
    "sample_uniform",
    "MC_BLOCK_SIZE",
]

NORMALIZATION_TOL = 1e-9

# Samples are drawn in fixed-size blocks, each from its own substream of
# the caller's rng.  Block boundaries do not depend on worker count, so a
# parallel evaluation of blocks reproduces the sequential result exactly.
MC_BLOCK_SIZE = 4096


class DiscreteDistribution:
    """Normalized probability table over a finite, ordered outcome set."""

    __slots__ = ("outcomes", "probs", "_index")

    def __init__(self, outcomes: Sequence[Hashable], probs):
        outcomes = tuple(outcomes)
        if len(set(outcomes)) != len(outcomes):
            raise ParameterError("outcomes must be unique")
        if not outcomes:
            raise ParameterError("outcome set must be nonempty")
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (len(outcomes),):
            raise DimensionError(
                f"{len(outcomes)} outcomes but probs shape {probs.shape}"
            )
        if not np.all(np.isfinite(probs)):
            raise ParameterError("probabilities must be finite")
        if np.any(probs < 0):
            raise ParameterError("probabilities must be non-negative")
        total = probs.sum()
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ParameterError(
                f"probabilities sum to {total!r}, beyond tolerance {NORMALIZATION_TOL}"
            )
        self.outcomes = outcomes
        self.probs = probs / total
        self.probs.flags.writeable = False
        self._index = {o: i for i, o in enumerate(outcomes)}

    @classmethod
    def uniform(cls, outcomes) -> "DiscreteDistribution":
        outcomes = tuple(outcomes)
        return cls(outcomes, np.full(len(outcomes), 1.0 / len(outcomes)))

    @classmethod
    def point_mass(cls, outcome, outcomes) -> "DiscreteDistribution":
        outcomes = tuple(outcomes)
        probs = np.zeros(len(outcomes))
        probs[outcomes.index(outcome)] = 1.0
        return cls(outcomes, probs)

    def prob(self, outcome) -> float:
        return float(self.probs[self._index[outcome]])

    __getitem__ = prob

    def as_dict(self) -> dict:
        return {o: float(p) for o, p in zip(self.outcomes, self.probs)}

    def sample(self, gen: np.random.Generator):
        return self.outcomes[int(gen.choice(len(self.outcomes), p=self.probs))]

    def tv_distance(self, other: "DiscreteDistribution") -> float:
        """Total-variation distance; outcome sets must match."""
        if self.outcomes != other.outcomes:
            raise DimensionError("outcome sets differ")
        return 0.5 * float(np.abs(self.probs - other.probs).sum())

    def __len__(self):
        return len(self.outcomes)

    def __repr__(self):
        inner = ", ".join(f"{o}: {p:.4g}" for o, p in zip(self.outcomes, self.probs))
        return f"DiscreteDistribution({{{inner}}})"


class UtilityTable:
    """Dense real-valued table over named finite axes."""

    __slots__ = ("axes", "values", "_indices")

    def __init__(self, axes: Mapping[str, Sequence[Hashable]], values):
        self.axes = {name: tuple(labels) for name, labels in axes.items()}
        for name, labels in self.axes.items():
            if len(set(labels)) != len(labels):
                raise ParameterError(f"axis {name!r} has duplicate labels")
        values = np.asarray(values, dtype=float)
        expected = tuple(len(labels) for labels in self.axes.values())
        if values.shape != expected:
            raise DimensionError(
                f"values shape {values.shape} does not match axes {expected}"
            )
        if not np.all(np.isfinite(values)):
            raise ParameterError("utility values must be finite")
        self.values = values
        self.values.flags.writeable = False
        self._indices = {
            name: {label: i for i, label in enumerate(labels)}
            for name, labels in self.axes.items()
        }

    def axis(self, name: str) -> tuple:
        return self.axes[name]

    def value(self, *labels) -> float:
        idx = tuple(
            self._indices[name][label]
            for name, label in zip(self.axes, labels)
        )
        return float(self.values[idx])

    def __repr__(self):
        names = ", ".join(f"{k}={len(v)}" for k, v in self.axes.items())
        return f"UtilityTable({names})"


@dataclass(frozen=True)
class RandomJudgement:
    """Seedable sampler of an opponent's (utilities, beliefs) draw.

    ``sampler(gen)`` returns one draw; identical generator state gives an
    identical draw.  ``batch_scores``, when provided, lets the MC engine
    score whole blocks of draws at once: it takes ``(gen, actions, n)``
    and returns an ``(n, len(actions))`` score matrix that must be
    distributed as n independent ``score(sampler(gen), action)`` rows.
    """

    sampler: Callable[[np.random.Generator], object]
    description: str = ""
    batch_scores: Callable | None = None

    def sample(self, gen: np.random.Generator):
        return self.sampler(gen)

    @classmethod
    def point_mass(cls, draw, description: str = "point mass") -> "RandomJudgement":
        return cls(sampler=lambda gen: draw, description=description)


@dataclass(frozen=True)
class FiniteJudgement:
    """Judgement with finitely many equally-likely-or-weighted draws.

    Used both as a regular judgement and as its own exhaustive-enumeration
    oracle (see :meth:`exact_argmax_distribution`).
    """

    draws: tuple
    weights: np.ndarray
    description: str = ""

    @classmethod
    def of(cls, draws, weights=None, description: str = "") -> "FiniteJudgement":
        draws = tuple(draws)
        if weights is None:
            weights = np.full(len(draws), 1.0 / len(draws))
        weights = np.asarray(weights, dtype=float)
        weights = weights / weights.sum()
        return cls(draws=draws, weights=weights, description=description)

    def sample(self, gen: np.random.Generator):
        i = int(gen.choice(len(self.draws), p=self.weights))
        return self.draws[i]

    def exact_argmax_distribution(self, actions, score) -> DiscreteDistribution:
        """Exact argmax frequencies, ties split uniformly among maximizers."""
        actions = tuple(actions)
        probs = np.zeros(len(actions))
        for draw, w in zip(self.draws, self.weights):
            scores = np.array([score(draw, a) for a in actions])
            winners = np.flatnonzero(scores == scores.max())
            probs[winners] += w / len(winners)
        return DiscreteDistribution(actions, probs)


def expected_utility(u: UtilityTable, p: DiscreteDistribution, action) -> float:
    """Exact finite-sum expected utility of ``action`` under belief ``p``.

    ``u`` must be a 2-axis (action, outcome) table whose outcome axis
    equals ``p``'s outcome set.
    """
    names = list(u.axes)
    if len(names) != 2:
        raise DimensionError(f"expected a 2-axis table, got axes {names}")
    action_axis, outcome_axis = names
    if u.axes[outcome_axis] != p.outcomes:
        raise DimensionError(
            f"outcome axis {u.axes[outcome_axis]} != belief outcomes {p.outcomes}"
        )
    i = u._indices[action_axis][action]
    return float(u.values[i] @ p.probs)


def _score_block(judgement, actions, score, gen, n) -> np.ndarray:
    if getattr(judgement, "batch_scores", None) is not None:
        scores = np.asarray(judgement.batch_scores(gen, actions, n), dtype=float)
        if scores.shape != (n, len(actions)):
            raise DimensionError(
                f"batch_scores returned shape {scores.shape}, "
                f"expected {(n, len(actions))}"
            )
        return scores
    scores = np.empty((n, len(actions)))
    for i in range(n):
        draw = judgement.sample(gen)
        for j, a in enumerate(actions):
            scores[i, j] = score(draw, a)
    return scores


def mc_argmax_distribution(
    judgement,
    actions: Sequence[Hashable],
    score: Callable,
    n_samples: int,
    rng: SeededRng,
) -> DiscreteDistribution:
    """Empirical frequency with which each action maximizes a random score.

    Draws ``n_samples`` independent judgements and counts, per action, how
    often it attains the maximum of ``score(draw, action)``.  Ties are
    broken uniformly at random from the same seeded stream, so fully
    exchangeable actions come out symmetric.  Sampling is organized in
    fixed blocks on substreams of ``rng``; the result depends only on
    ``(judgement, actions, n_samples, rng)``, never on parallelism.
    """
    actions = tuple(actions)
    if not actions:
        raise ParameterError("actions must be nonempty")
    if n_samples < 1:
        raise ParameterError(f"n_samples must be >= 1, got {n_samples}")

    counts = np.zeros(len(actions))
    n_blocks = (n_samples + MC_BLOCK_SIZE - 1) // MC_BLOCK_SIZE
    for b in range(n_blocks):
        m = min(MC_BLOCK_SIZE, n_samples - b * MC_BLOCK_SIZE)
        gen = rng.substream("mc_block", b).generator()
        scores = _score_block(judgement, actions, score, gen, m)
        if not np.all(np.isfinite(scores)):
            bad = int(np.flatnonzero(~np.isfinite(scores).all(axis=1))[0])
            raise NumericError(
                f"non-finite score at draw {b * MC_BLOCK_SIZE + bad}"
            )
        # Tie-break: among row maximizers, keep the one with the largest
        # fresh uniform draw (drawn after the scores, same stream).
        noise = gen.random(scores.shape)
        is_max = scores == scores.max(axis=1, keepdims=True)
        winners = np.where(is_max, noise, -1.0).argmax(axis=1)
        counts += np.bincount(winners, minlength=len(actions))

    return DiscreteDistribution(actions, counts / n_samples)


def sample_dirichlet(alphas, rng: SeededRng | np.random.Generator) -> DiscreteDistribution:
    """One Dirichlet draw, returned as a distribution over indices 0..k-1."""
    alphas = np.asarray(alphas, dtype=float)
    if alphas.ndim != 1 or len(alphas) < 2:
        raise ParameterError("alphas must be a vector of length >= 2")
    if np.any(alphas <= 0):
        raise ParameterError("Dirichlet parameters must be strictly positive")
    gen = rng.generator() if isinstance(rng, SeededRng) else rng
    probs = gen.dirichlet(alphas)
    return DiscreteDistribution(range(len(alphas)), probs)


def sample_beta(alpha: float, beta: float, rng: SeededRng | np.random.Generator) -> float:
    if alpha <= 0 or beta <= 0:
        raise ParameterError("Beta parameters must be strictly positive")
    gen = rng.generator() if isinstance(rng, SeededRng) else rng
    return float(gen.beta(alpha, beta))


def sample_uniform(lo: float, hi: float, rng: SeededRng | np.random.Generator) -> float:
    if not lo < hi:
        raise ParameterError(f"need lo < hi, got [{lo}, {hi})")
    gen = rng.generator() if isinstance(rng, SeededRng) else rng
    return float(gen.uniform(lo, hi))
