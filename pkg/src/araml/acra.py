"""Utility-sensitive Naive Bayes, good-word evasion, and the ACRA defense.

Binary instances with labels + (malicious, encoded 1) and - (benign, 0).
The attacker only ever touches malicious instances (integrity violation)
and may insert at most one "good word": a feature common in benign but
rare in malicious traffic.  The adversary-aware classifier sums over the
set of instances that could have originated the observed one, weighting
each by the simulated probability that a random expected-utility
maximizing attacker would have produced the observed instance from it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .core import DiscreteDistribution, RandomJudgement, mc_argmax_distribution
from .errors import DataError, DimensionError, ParameterError
from .rng import SeededRng

__all__ = [
    "POS",
    "NEG",
    "FeatureSpace",
    "NaiveBayesModel",
    "UtilityMatrix",
    "AttackerJudgement",
    "fit_nb",
    "classify_nb",
    "select_good_words",
    "attack_one_good_word",
    "originating_set",
    "attack_family",
    "attack_distribution",
    "attack_probability",
    "classify_acra",
    "evaluate",
    "MetricsRecord",
]

POS, NEG = 1, 0  # class codes: 1 = + (malicious), 0 = - (benign)


def make_synthetic_spam(
    n: int,
    rng: SeededRng,
    n_spam_words: int = 8,
    n_good_words: int = 8,
    n_noise: int = 8,
    prior_pos: float = 0.4,
) -> tuple:
    """Synthetic spam-like binary data with planted good words.

    The first block of features is common in malicious mail, the second
    in benign mail (the good words), the rest is symmetric noise.
    Returns (X, y).
    """
    gen = rng.generator()
    y = (gen.random(n) < prior_pos).astype(int)
    d = n_spam_words + n_good_words + n_noise
    p = np.empty((2, d))
    p[POS] = np.concatenate(
        [np.full(n_spam_words, 0.55), np.full(n_good_words, 0.05),
         np.full(n_noise, 0.2)]
    )
    p[NEG] = np.concatenate(
        [np.full(n_spam_words, 0.05), np.full(n_good_words, 0.55),
         np.full(n_noise, 0.2)]
    )
    X = (gen.random((n, d)) < p[y]).astype(np.int8)
    return X, y

_P_CLIP = 1e-6  # keeps Beta parameters strictly positive


@dataclass(frozen=True)
class FeatureSpace:
    """Binary feature space with a designated good-word subset."""

    n_features: int
    feature_names: tuple = ()
    good_words: tuple = ()

    def __post_init__(self):
        names = tuple(self.feature_names) or tuple(
            f"f{j}" for j in range(self.n_features)
        )
        if len(names) != self.n_features:
            raise DimensionError(
                f"{len(names)} names for {self.n_features} features"
            )
        if len(set(names)) != len(names):
            raise ParameterError("feature names must be unique")
        good = tuple(int(j) for j in self.good_words)
        if any(j < 0 or j >= self.n_features for j in good):
            raise ParameterError("good_words must index existing features")
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "good_words", good)


@dataclass(frozen=True)
class NaiveBayesModel:
    """Bernoulli Naive Bayes parameters (Laplace-smoothed).

    ``cond[y, j]`` is p(x_j = 1 | y) with class order (-, +).
    """

    prior: np.ndarray  # (2,), order (-, +)
    cond: np.ndarray  # (2, n_features)

    def __post_init__(self):
        if np.any(self.cond <= 0) or np.any(self.cond >= 1):
            raise ParameterError("conditional parameters must lie strictly in (0,1)")

    @property
    def n_features(self) -> int:
        return self.cond.shape[1]

    def log_likelihood(self, X: np.ndarray) -> np.ndarray:
        """log p(x | y) for each row; returns shape (n, 2), class order (-, +)."""
        X = np.atleast_2d(X).astype(float)
        log_p = np.log(self.cond)
        log_q = np.log1p(-self.cond)
        return X @ log_p.T + (1.0 - X) @ log_q.T

    def log_joint(self, X: np.ndarray) -> np.ndarray:
        return self.log_likelihood(X) + np.log(self.prior)

    def posterior_pos(self, X: np.ndarray) -> np.ndarray:
        """p(+ | x) per row, computed in log space."""
        lj = self.log_joint(X)
        m = lj.max(axis=1, keepdims=True)
        w = np.exp(lj - m)
        return w[:, POS] / w.sum(axis=1)


@dataclass(frozen=True)
class UtilityMatrix:
    """2x2 defender utility u(y_D, y), indexed (-, +) on both axes."""

    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.shape != (2, 2):
            raise DimensionError(f"utility matrix must be 2x2, got {u.shape}")
        if not np.all(np.isfinite(u)):
            raise ParameterError("utilities must be finite")
        for y in (NEG, POS):
            if not u[y, y] > u[1 - y, y]:
                raise ParameterError(
                    "correct classification must beat incorrect for each class"
                )
        object.__setattr__(self, "u", u)

    @classmethod
    def default(cls) -> "UtilityMatrix":
        # false positives penalized hardest; see README for rationale
        u = np.array([[1.0, 0.0], [-5.0, 1.0]])
        return cls(u)

    @classmethod
    def zero_one(cls) -> "UtilityMatrix":
        return cls(np.eye(2))

    def scaled(self, a: float, b: float) -> "UtilityMatrix":
        if a <= 0:
            raise ParameterError("scale must be positive")
        return UtilityMatrix(a * self.u + b)


def fit_nb(X: np.ndarray, y: np.ndarray, smoothing: float = 1.0) -> NaiveBayesModel:
    """Fit Bernoulli NB: empirical priors, Laplace-smoothed conditionals."""
    if smoothing <= 0:
        raise ParameterError("smoothing must be positive")
    X = np.atleast_2d(X)
    y = np.asarray(y)
    if len(X) == 0:
        raise DataError("empty training set")
    if len(X) != len(y):
        raise DimensionError(f"{len(X)} instances but {len(y)} labels")
    counts = np.array([(y == NEG).sum(), (y == POS).sum()], dtype=float)
    if np.any(counts == 0):
        raise DataError("training data must contain both classes")
    ones = np.stack([X[y == NEG].sum(axis=0), X[y == POS].sum(axis=0)]).astype(float)
    cond = (ones + smoothing) / (counts[:, None] + 2 * smoothing)
    return NaiveBayesModel(prior=counts / counts.sum(), cond=cond)


def _eu_per_decision(model: NaiveBayesModel, util: UtilityMatrix, X) -> np.ndarray:
    """Posterior expected utility of each decision; shape (n, 2), order (-, +)."""
    p_pos = model.posterior_pos(X)
    post = np.stack([1.0 - p_pos, p_pos], axis=1)
    return post @ util.u.T


def classify_nb(model: NaiveBayesModel, util: UtilityMatrix, X) -> np.ndarray:
    """Maximum posterior expected utility decisions; - wins exact ties."""
    X = np.atleast_2d(X)
    if X.shape[1] != model.n_features:
        raise DimensionError(
            f"instances have {X.shape[1]} features, model has {model.n_features}"
        )
    eu = _eu_per_decision(model, util, X)
    return (eu[:, POS] > eu[:, NEG]).astype(int)


def select_good_words(model: NaiveBayesModel, k: int = 10) -> tuple:
    """The k features with the highest p(x_j=1|-) / p(x_j=1|+) ratio."""
    ratio = model.cond[NEG] / model.cond[POS]
    order = np.argsort(-ratio, kind="stable")
    return tuple(int(j) for j in order[:k])


def attack_family(x: np.ndarray, space: FeatureSpace) -> tuple:
    """Attacks available from x: identity plus each absent good word.

    Actions are feature indices (the word inserted) or None for identity.
    """
    return (None,) + tuple(j for j in space.good_words if x[j] == 0)


def apply_attack(x: np.ndarray, action) -> np.ndarray:
    if action is None:
        return x.copy()
    out = x.copy()
    out[action] = 1
    return out


def attack_one_good_word(
    x: np.ndarray,
    label: int,
    model_view: NaiveBayesModel,
    util: UtilityMatrix,
    space: FeatureSpace,
) -> np.ndarray:
    """Insert the single good word that best fools the observed model.

    The objective scores a candidate by the defender's posterior expected
    utility of classifying +, as seen through ``model_view``; the best
    strictly-improving insertion wins, otherwise the instance is returned
    unchanged.  Benign instances are never modified.
    """
    if label != POS:
        return x.copy()
    candidates = attack_family(x, space)
    variants = np.stack([apply_attack(x, a) for a in candidates])
    scores = _eu_per_decision(model_view, util, variants)[:, POS]
    best = int(np.argmin(scores))
    if best == 0 or scores[best] >= scores[0]:
        return x.copy()
    return variants[best]


def attack_dataset(
    X: np.ndarray,
    y: np.ndarray,
    model_view: NaiveBayesModel,
    util: UtilityMatrix,
    space: FeatureSpace,
) -> np.ndarray:
    """Apply the one-good-word attack to every malicious row."""
    out = X.copy()
    for i in np.flatnonzero(np.asarray(y) == POS):
        out[i] = attack_one_good_word(X[i], POS, model_view, util, space)
    return out


def originating_set(x_prime: np.ndarray, space: FeatureSpace) -> list:
    """All preimages of x' under the <=1-good-word-insertion family."""
    out = [x_prime.copy()]
    for j in space.good_words:
        if x_prime[j] == 1:
            pre = x_prime.copy()
            pre[j] = 0
            out.append(pre)
    return out


@dataclass(frozen=True)
class AttackerJudgement:
    """Distribution over the attacker's utilities and success beliefs.

    A draw consists of per-attack utilities U(+,+,a) ~ Uniform(u_caught) -
    cost(a) and U(-,+,a) ~ Uniform(u_evaded) - cost(a), and a success
    probability P ~ Beta centered on the defender's own posterior p(+|a(x))
    with the given concentration.  The identity attack costs nothing.
    """

    insertion_cost: float = 0.1
    concentration: float = 10.0
    u_caught: tuple = (-1.0, 0.0)
    u_evaded: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.concentration <= 0:
            raise ParameterError("concentration must be positive")

    def cost(self, action) -> float:
        return 0.0 if action is None else self.insertion_cost

    def judgement_for(
        self,
        x: np.ndarray,
        model: NaiveBayesModel,
        space: FeatureSpace,
    ) -> tuple:
        """(family, RandomJudgement) for the attack family from x.

        The judgement's score is the attacker's expected utility
        [U(+,+,a) - U(-,+,a)] P + U(-,+,a); scoring is vectorized over
        draws via ``batch_scores``.
        """
        family = attack_family(x, space)
        variants = np.stack([apply_attack(x, a) for a in family])
        p_hat = np.clip(model.posterior_pos(variants), _P_CLIP, 1.0 - _P_CLIP)
        costs = np.array([self.cost(a) for a in family])
        index = {a: i for i, a in enumerate(family)}
        conc = self.concentration
        lo_c, hi_c = self.u_caught
        lo_e, hi_e = self.u_evaded

        def sample(gen):
            u_plus = gen.uniform(lo_c, hi_c, len(family)) - costs
            u_minus = gen.uniform(lo_e, hi_e, len(family)) - costs
            p = gen.beta(conc * p_hat, conc * (1.0 - p_hat))
            return (u_plus - u_minus) * p + u_minus

        def score(draw, action):
            return float(draw[index[action]])

        def batch_scores(gen, actions, n):
            k = len(actions)
            u_plus = gen.uniform(lo_c, hi_c, (n, k)) - costs
            u_minus = gen.uniform(lo_e, hi_e, (n, k)) - costs
            p = gen.beta(conc * p_hat, conc * (1.0 - p_hat), (n, k))
            return (u_plus - u_minus) * p + u_minus

        judgement = RandomJudgement(
            sampler=sample,
            description=f"good-word attacker (cost={self.insertion_cost})",
            batch_scores=batch_scores,
        )
        return family, judgement, score


def attack_distribution(
    x: np.ndarray,
    model: NaiveBayesModel,
    space: FeatureSpace,
    judgement: AttackerJudgement,
    n_samples: int,
    rng: SeededRng,
):
    """(family, distribution): probability of each attack from (x, +)."""
    family, rj, score = judgement.judgement_for(x, model, space)
    dist = mc_argmax_distribution(rj, family, score, n_samples, rng)
    return family, dist


def attack_probability(
    x: np.ndarray,
    x_prime: np.ndarray,
    model: NaiveBayesModel,
    space: FeatureSpace,
    judgement: AttackerJudgement,
    n_samples: int,
    rng: SeededRng,
) -> float:
    """Estimated probability that the random optimal attack maps x to x'."""
    action = _action_between(x, x_prime, space)
    _, dist = attack_distribution(x, model, space, judgement, n_samples, rng)
    return dist.prob(action)


def _action_between(x, x_prime, space: FeatureSpace):
    diff = np.flatnonzero(np.asarray(x) != np.asarray(x_prime))
    if len(diff) == 0:
        return None
    if len(diff) == 1:
        j = int(diff[0])
        if j in space.good_words and x[j] == 0 and x_prime[j] == 1:
            return j
    raise ParameterError("x_prime is not reachable from x under the attack family")


class _AttackCache:
    """Memoizes attack distributions per originating instance."""

    def __init__(self, model, space, judgement, n_samples, rng):
        self.model = model
        self.space = space
        self.judgement = judgement
        self.n_samples = n_samples
        self.rng = rng
        self._store = {}

    def distribution(self, x: np.ndarray):
        key = x.tobytes()
        if key not in self._store:
            # substream keyed by instance bits, so results are order-free
            import hashlib

            digest = hashlib.sha256(key).digest()
            k1 = int.from_bytes(digest[:4], "big")
            k2 = int.from_bytes(digest[4:8], "big")
            sub = self.rng.substream("attack", k1, k2)
            self._store[key] = attack_distribution(
                x, self.model, self.space, self.judgement, self.n_samples, sub
            )
        return self._store[key]


def _log_sum_exp(terms: np.ndarray) -> float:
    finite = terms[np.isfinite(terms)]
    if len(finite) == 0:
        return -np.inf
    m = finite.max()
    return float(m + np.log(np.exp(finite - m).sum()))


def classify_acra(
    model: NaiveBayesModel,
    util: UtilityMatrix,
    x_prime: np.ndarray,
    judgement: AttackerJudgement,
    space: FeatureSpace,
    n_samples: int,
    rng: SeededRng,
    _cache: _AttackCache | None = None,
) -> int:
    """Adversary-aware decision for one observed instance.

    Sums p(x|+) over the originating set, each weighted by the simulated
    probability of the attack mapping x to x'; log-sum-exp throughout.
    Returns the label code (POS/NEG); - wins exact ties, matching
    :func:`classify_nb`.
    """
    cache = _cache or _AttackCache(
        model, space, judgement, n_samples, rng.substream("cache")
    )
    x_prime = np.asarray(x_prime)

    terms = []
    for x in originating_set(x_prime, space):
        family, dist = cache.distribution(x)
        action = _action_between(x, x_prime, space)
        p_attack = dist.prob(action)
        if p_attack == 0.0:
            continue
        log_lik = float(model.log_likelihood(x[None, :])[0, POS])
        terms.append(np.log(p_attack) + log_lik)
    log_s_pos = np.log(model.prior[POS]) + _log_sum_exp(np.array(terms))
    log_s_neg = float(
        np.log(model.prior[NEG]) + model.log_likelihood(x_prime[None, :])[0, NEG]
    )

    # sign of EU(+) - EU(-) = (u(+,+)-u(-,+)) S+ + (u(+,-)-u(-,-)) S-
    gain_pos = util.u[POS, POS] - util.u[NEG, POS]
    gain_neg = util.u[POS, NEG] - util.u[NEG, NEG]
    m = max(log_s_pos, log_s_neg)
    if m == -np.inf:
        return NEG
    diff = gain_pos * np.exp(log_s_pos - m) + gain_neg * np.exp(log_s_neg - m)
    return POS if diff > 0 else NEG


def classify_acra_dataset(
    model, util, X_prime, judgement, space, n_samples, rng
) -> np.ndarray:
    cache = _AttackCache(model, space, judgement, n_samples, rng.substream("cache"))
    return np.array(
        [
            classify_acra(
                model, util, xp, judgement, space, n_samples, rng, _cache=cache
            )
            for xp in np.atleast_2d(X_prime)
        ]
    )


# ---------------------------------------------------------------------------
# Repeated hold-out evaluation


@dataclass
class MetricsRecord:
    """Per-repetition metrics with their means and standard deviations."""

    model_kind: str
    attack: bool
    accuracy: np.ndarray
    fpr: np.ndarray
    fnr: np.ndarray
    n_resampled: int = 0

    def summary(self) -> dict:
        out = {"model_kind": self.model_kind, "attack": self.attack,
               "n_repetitions": len(self.accuracy),
               "n_resampled": self.n_resampled}
        for name in ("accuracy", "fpr", "fnr"):
            vals = getattr(self, name)
            out[f"{name}_mean"] = float(np.mean(vals))
            out[f"{name}_std"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        return out


def _metrics(y_true: np.ndarray, y_pred: np.ndarray) -> tuple:
    acc = float((y_true == y_pred).mean())
    neg, pos = y_true == NEG, y_true == POS
    fpr = float((y_pred[neg] == POS).mean()) if neg.any() else 0.0
    fnr = float((y_pred[pos] == NEG).mean()) if pos.any() else 0.0
    return acc, fpr, fnr


def _split(n: int, test_fraction: float, gen: np.random.Generator):
    n_test = max(1, int(round(n * test_fraction)))
    perm = gen.permutation(n)
    return perm[n_test:], perm[:n_test]


def evaluate(
    model_kind: str,
    X: np.ndarray,
    y: np.ndarray,
    attack: bool,
    util: UtilityMatrix,
    judgement: AttackerJudgement,
    n_repetitions: int,
    test_fraction: float,
    rng: SeededRng,
    n_samples: int = 10_000,
    smoothing: float = 1.0,
    good_words_k: int = 10,
    n_workers: int = 1,
) -> MetricsRecord:
    """Repeated hold-out evaluation of plain NB or ACRA.

    Splits are derived only from (rng, repetition index), so different
    model kinds evaluated with the same rng see identical splits; the
    attack never touches benign instances, which makes plain-vs-tainted
    FPR agree exactly.  Degenerate single-class training splits are
    resampled and counted.
    """
    if model_kind not in ("nb", "acra"):
        raise ParameterError(f"unknown model kind {model_kind!r}")
    if n_repetitions < 1:
        raise ParameterError("n_repetitions must be >= 1")
    X = np.asarray(X)
    y = np.asarray(y)

    def one_rep(r: int):
        attempt = 0
        while True:
            gen = rng.substream("split", r, attempt).generator()
            train_idx, test_idx = _split(len(X), test_fraction, gen)
            if len(np.unique(y[train_idx])) == 2:
                break
            attempt += 1
        model = fit_nb(X[train_idx], y[train_idx], smoothing)
        space = FeatureSpace(
            n_features=X.shape[1],
            good_words=select_good_words(model, good_words_k),
        )
        X_test, y_test = X[test_idx], y[test_idx]
        if attack:
            X_test = attack_dataset(X_test, y_test, model, util, space)
        if model_kind == "nb":
            y_pred = classify_nb(model, util, X_test)
        else:
            y_pred = classify_acra_dataset(
                model, util, X_test, judgement, space, n_samples,
                rng.substream("acra", r),
            )
        return _metrics(y_test, y_pred) + (attempt,)

    if n_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(one_rep, range(n_repetitions)))
    else:
        results = [one_rep(r) for r in range(n_repetitions)]

    acc, fpr, fnr, attempts = (np.array(col) for col in zip(*results))
    return MetricsRecord(
        model_kind=model_kind,
        attack=attack,
        accuracy=acc,
        fpr=fpr,
        fnr=fnr,
        n_resampled=int(attempts.sum()),
    )
