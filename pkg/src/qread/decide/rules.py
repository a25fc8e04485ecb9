from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from qread.decide.discriminate import ChannelPair, poisson_threshold, tmsv_decide
from qread.decide.models import (
    GAUSSIAN_VALIDITY_FLOOR,
    JointCountModel,
    bayes_decide,
    exact_likelihood_model,
    gaussian_likelihood_model,
)
from qread.utils.errors import ParameterError

logger = logging.getLogger(__name__)

RULE_KINDS = ("auto", "coherent-threshold", "tmsv-threshold", "likelihood-table", "gaussian-likelihood")


class DecisionRule:
    kind = "rule"

    def decide(self, n_s, n_i) -> np.ndarray:
        """Return 1 where tau1 is chosen, 0 where tau0 is chosen."""
        raise NotImplementedError


@dataclass(frozen=True)
class CoherentThresholdRule(DecisionRule):
    """Single-beam rule on the signal count: tau0 iff n_S <= threshold."""

    threshold: float
    kind = "coherent-threshold"

    def __post_init__(self) -> None:
        if math.isnan(self.threshold) or self.threshold < 0:
            raise ParameterError("threshold must be non-negative")

    @classmethod
    def for_pair(cls, pair: ChannelPair) -> "CoherentThresholdRule":
        """Threshold on the effective signal rates, straylight included.

        Identical rates give an infinite threshold, so every outcome ties to tau0.
        """
        N = pair.mean_signal_photons
        rate0 = pair.signal_transmittance(0) * N + pair.straylight_mean
        rate1 = pair.signal_transmittance(1) * N + pair.straylight_mean
        if rate0 == rate1:
            return cls(math.inf)
        if rate0 == 0:
            return cls(0.0)
        return cls(poisson_threshold(rate0, rate1))

    def decide(self, n_s, n_i=None) -> np.ndarray:
        return (np.asarray(n_s, dtype=float) > self.threshold).astype(np.int8)


@dataclass(frozen=True)
class TmsvThresholdRule(DecisionRule):
    """Linear joint threshold on the effective transmittances; assumes a lossless idler."""

    tau0: float
    tau1: float
    kind = "tmsv-threshold"

    @classmethod
    def for_pair(cls, pair: ChannelPair) -> "TmsvThresholdRule":
        if pair.eta_i != 1.0:
            logger.warning("tmsv-threshold ignores the idler efficiency %.3f", pair.eta_i)
        return cls(pair.signal_transmittance(0), pair.signal_transmittance(1))

    def decide(self, n_s, n_i) -> np.ndarray:
        return tmsv_decide(n_s, n_i, self.tau0, self.tau1)


@dataclass(frozen=True, eq=False)
class LikelihoodRule(DecisionRule):
    models: Tuple[JointCountModel, JointCountModel]
    kind: str = "gaussian-likelihood"

    def decide(self, n_s, n_i) -> np.ndarray:
        n_s = np.asarray(n_s, dtype=float)
        n_i = np.zeros_like(n_s) if n_i is None else np.asarray(n_i, dtype=float)
        return np.asarray(bayes_decide((n_s, n_i), self.models), dtype=np.int8)


def exact_regime(pair: ChannelPair) -> bool:
    return pair.mean_signal_photons <= GAUSSIAN_VALIDITY_FLOOR and pair.noiseless


def build_rule(
    kind: str, pair: ChannelPair, transmitter: str = "tmsv", modes: Optional[int] = None
) -> DecisionRule:
    """Construct a decision rule; ``auto`` picks exact tables where they are tractable."""
    if kind not in RULE_KINDS:
        raise ParameterError(f"unknown rule kind {kind!r}; expected one of {RULE_KINDS}")
    if kind == "auto":
        kind = "likelihood-table" if exact_regime(pair) else "gaussian-likelihood"
    if kind == "coherent-threshold":
        return CoherentThresholdRule.for_pair(pair)
    if kind == "tmsv-threshold":
        if transmitter != "tmsv":
            raise ParameterError("tmsv-threshold needs an idler arm")
        return TmsvThresholdRule.for_pair(pair)
    if kind == "likelihood-table":
        models = tuple(exact_likelihood_model(pair, h, modes, transmitter) for h in (0, 1))
    else:
        models = tuple(gaussian_likelihood_model(pair, h, modes, transmitter=transmitter) for h in (0, 1))
    return LikelihoodRule(models=models, kind=kind)
