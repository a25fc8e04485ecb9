from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from qread.decide.discriminate import ChannelPair
from qread.stats.photon_stats import (
    JointCountPmf,
    PhotonDistribution,
    apply_loss,
    poisson_pair_joint,
)
from qread.utils.errors import InvalidRegime, ModelEvaluationError, ParameterError

logger = logging.getLogger(__name__)

GAUSSIAN_VALIDITY_FLOOR = 1e3
TRANSMITTERS = ("tmsv", "coherent")


class JointCountModel:
    """Likelihood of a count pair under one channel hypothesis."""

    def log_likelihood(self, n_s, n_i) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class ExactJointModel(JointCountModel):
    table: JointCountPmf

    def log_likelihood(self, n_s, n_i) -> np.ndarray:
        return self.table.log_pmf(n_s, n_i)


@dataclass(frozen=True, eq=False)
class GaussianJointModel(JointCountModel):
    """Bivariate normal over (n_S, n_I); a zero idler variance means a single beam."""

    mean: Tuple[float, float]
    cov: Tuple[Tuple[float, float], Tuple[float, float]]

    @property
    def mean_array(self) -> np.ndarray:
        return np.asarray(self.mean, dtype=float)

    @property
    def cov_array(self) -> np.ndarray:
        return np.asarray(self.cov, dtype=float)

    @property
    def single_beam(self) -> bool:
        return self.cov[1][1] == 0.0

    def correlation(self) -> float:
        cov = self.cov_array
        if self.single_beam:
            return 0.0
        return float(cov[0, 1] / np.sqrt(cov[0, 0] * cov[1, 1]))

    def log_likelihood(self, n_s, n_i) -> np.ndarray:
        n_s = np.asarray(n_s, dtype=float)
        if self.single_beam:
            return stats.norm.logpdf(n_s, loc=self.mean[0], scale=np.sqrt(self.cov[0][0]))
        n_i = np.asarray(n_i, dtype=float)
        points = np.stack(np.broadcast_arrays(n_s, n_i), axis=-1)
        dist = stats.multivariate_normal(self.mean_array, self.cov_array, allow_singular=True)
        return np.asarray(dist.logpdf(points))


def gaussian_likelihood_model(
    pair: ChannelPair,
    hypothesis: int,
    modes: Optional[int] = None,
    strict: bool = False,
    transmitter: str = "tmsv",
) -> GaussianJointModel:
    """Normal approximation of the pair-model counts.

    ``modes=None`` is the Poisson pair model; a finite mode count adds the
    multithermal excess N^2/M to the pair-number variance.
    """
    N = pair.mean_signal_photons
    if N < GAUSSIAN_VALIDITY_FLOOR:
        if strict:
            raise InvalidRegime(f"Gaussian model needs N > {GAUSSIAN_VALIDITY_FLOOR:g}, got {N:g}")
        logger.warning("Gaussian model used at N=%g, below its validity floor", N)
    a = pair.signal_transmittance(hypothesis)
    noise = pair.electronic_variance
    if transmitter == "coherent":
        rate = a * N + pair.straylight_mean
        return GaussianJointModel(mean=(rate, 0.0), cov=((rate + noise, 0.0), (0.0, 0.0)))
    if transmitter != "tmsv":
        raise ParameterError(f"unknown transmitter {transmitter!r}")
    b = pair.eta_i
    pair_var = N if modes is None else N + N * N / modes
    var_s = a * N * (1.0 - a) + a * a * pair_var + pair.straylight_mean + noise
    var_i = b * N * (1.0 - b) + b * b * pair_var + pair.idler_straylight + noise
    cov = a * b * pair_var
    mean = (a * N + pair.straylight_mean, b * N + pair.idler_straylight)
    return GaussianJointModel(mean=mean, cov=((var_s, cov), (cov, var_i)))


def exact_likelihood_model(
    pair: ChannelPair, hypothesis: int, modes: Optional[int] = None, transmitter: str = "tmsv"
) -> ExactJointModel:
    """Exact count tables; only defined without detector noise."""
    if not pair.noiseless:
        raise InvalidRegime("exact likelihood tables require zero straylight and electronic noise")
    a = pair.signal_transmittance(hypothesis)
    N = pair.mean_signal_photons
    if transmitter == "coherent":
        signal = apply_loss(PhotonDistribution.poisson(N), a)
        return ExactJointModel(JointCountPmf.signal_only(signal))
    if transmitter != "tmsv":
        raise ParameterError(f"unknown transmitter {transmitter!r}")
    return ExactJointModel(poisson_pair_joint(N, a, pair.eta_i, modes))


def bayes_decide(n: Tuple, models: Sequence[JointCountModel]) -> np.ndarray:
    """Equal-prior maximum-likelihood choice for counts ``n = (n_s, n_i)``; ties go to hypothesis 0."""
    n_s, n_i = n
    model0, model1 = models
    ll0 = np.asarray(model0.log_likelihood(n_s, n_i), dtype=float)
    ll1 = np.asarray(model1.log_likelihood(n_s, n_i), dtype=float)
    dead = np.isneginf(ll0) & np.isneginf(ll1)
    if np.any(dead) or np.any(np.isnan(ll0)) or np.any(np.isnan(ll1)):
        raise ModelEvaluationError(
            f"{int(np.count_nonzero(dead))} outcome(s) have zero likelihood under both hypotheses"
        )
    choice = (ll1 > ll0).astype(np.int8)
    return choice if choice.ndim else np.int8(choice)
