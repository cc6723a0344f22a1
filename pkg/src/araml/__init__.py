"""Adversarial risk analysis for adversarial machine learning.

Subpackages:

* :mod:`araml.core`: discrete distributions, utility tables, random
  judgements and the Monte Carlo argmax engine everything else builds on;
* :mod:`araml.templates`: solvers for sequential, simultaneous and
  private-information defend-attack games;
* :mod:`araml.acra`: adversary-aware Naive Bayes against good-word
  evasion attacks;
* :mod:`araml.tmdp`: Q-learning in Markov decision processes threatened
  by an adversary, with pluggable opponent models;
* :mod:`araml.gradattack`: gradient evasion attacks and adversarial
  training on linear logistic models;
* :mod:`araml.cli`: the ``araml`` experiment runner.
"""

from .core import (
    DiscreteDistribution,
    FiniteJudgement,
    RandomJudgement,
    UtilityTable,
    expected_utility,
    mc_argmax_distribution,
)
from .errors import (
    AramlError,
    DataError,
    DimensionError,
    NumericError,
    ParameterError,
    UsageError,
)
from .reports import __version__
from .rng import SeededRng

__all__ = [
    "__version__",
    "AramlError",
    "UsageError",
    "DataError",
    "NumericError",
    "DimensionError",
    "ParameterError",
    "SeededRng",
    "DiscreteDistribution",
    "UtilityTable",
    "RandomJudgement",
    "FiniteJudgement",
    "expected_utility",
    "mc_argmax_distribution",
]
