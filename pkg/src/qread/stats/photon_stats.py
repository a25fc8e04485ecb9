from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats
from scipy.special import gammaln, xlog1py, xlogy

from qread.utils.errors import ParameterError

logger = logging.getLogger(__name__)

TAIL_MASS = 1e-12
NORM_TOL = 1e-9
LOG_SPACE_THRESHOLD = 100
# per-mode occupancy above which the Poisson pair model is flagged
POISSON_PAIR_OCCUPANCY = 0.1


def _cutoff(dist: stats.rv_discrete) -> int:
    """Support cutoff: tail quantile at TAIL_MASS plus a 10 sigma margin."""
    quantile = float(dist.isf(TAIL_MASS))
    return int(math.ceil(quantile + 10.0 * float(dist.std())))


def _readonly(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=float, copy=True)
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class PhotonDistribution:
    """Photon-number pmf on n = 0..n_max."""

    pmf: np.ndarray

    def __post_init__(self) -> None:
        pmf = _readonly(self.pmf)
        if pmf.ndim != 1 or pmf.size == 0:
            raise ParameterError("pmf must be a non-empty 1-D array")
        if not np.all(np.isfinite(pmf)) or np.any(pmf < 0.0):
            raise ParameterError("pmf entries must be finite and non-negative")
        total = float(pmf.sum())
        if abs(total - 1.0) > NORM_TOL:
            raise ParameterError(f"pmf sums to {total!r}; use from_weights() to renormalize")
        object.__setattr__(self, "pmf", pmf)

    @property
    def n_max(self) -> int:
        return self.pmf.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.pmf.size)

    def mean(self) -> float:
        return float(np.dot(self.support, self.pmf))

    def variance(self) -> float:
        n = self.support
        mu = self.mean()
        return float(np.dot((n - mu) ** 2, self.pmf))

    def probability(self, n: int) -> float:
        return float(self.pmf[n]) if 0 <= n <= self.n_max else 0.0

    def padded(self, n_max: int) -> np.ndarray:
        out = np.zeros(max(n_max, self.n_max) + 1)
        out[: self.pmf.size] = self.pmf
        return out

    def normalized(self) -> "PhotonDistribution":
        return PhotonDistribution.from_weights(self.pmf)

    @classmethod
    def from_weights(cls, weights: Sequence[float]) -> "PhotonDistribution":
        """Build a pmf from non-negative weights, renormalizing explicitly."""
        values = np.asarray(weights, dtype=float)
        total = float(values.sum())
        if not total > 0.0:
            raise ParameterError("weights must have positive total mass")
        if abs(total - 1.0) > NORM_TOL:
            logger.debug("renormalizing pmf with total mass %.3e", total)
        return cls(values / total)

    @classmethod
    def fock(cls, n: int) -> "PhotonDistribution":
        if n < 0:
            raise ParameterError("photon number must be non-negative")
        pmf = np.zeros(n + 1)
        pmf[n] = 1.0
        return cls(pmf)

    @classmethod
    def poisson(cls, mean: float) -> "PhotonDistribution":
        if mean < 0:
            raise ParameterError("mean must be non-negative")
        if mean == 0:
            return cls.fock(0)
        dist = stats.poisson(mean)
        return cls._truncated(dist)

    @classmethod
    def thermal(cls, mean: float) -> "PhotonDistribution":
        """Bose-Einstein pmf N^n / (1+N)^(n+1)."""
        return cls.multithermal(mean, 1)

    @classmethod
    def multithermal(cls, total_mean: float, modes: int) -> "PhotonDistribution":
        """Total count of ``modes`` independent thermal modes, ``total_mean`` summed over all of them.

        Each mode carries ``total_mean / modes``.
        """
        if total_mean < 0:
            raise ParameterError("mean must be non-negative")
        if modes < 1:
            raise ParameterError("modes must be >= 1")
        if total_mean == 0:
            return cls.fock(0)
        dist = stats.nbinom(modes, modes / (modes + total_mean))
        return cls._truncated(dist)

    @classmethod
    def _truncated(cls, dist: stats.rv_discrete) -> "PhotonDistribution":
        n_max = _cutoff(dist)
        pmf = dist.pmf(np.arange(n_max + 1))
        logger.debug("pmf cutoff n_max=%d tail=%.2e", n_max, 1.0 - pmf.sum())
        return cls(pmf)


@dataclass(frozen=True)
class LossChannel:
    tau: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ParameterError(f"transmittance must lie in [0, 1], got {self.tau}")

    def apply(self, dist: PhotonDistribution) -> PhotonDistribution:
        return apply_loss(dist, self)


@dataclass(frozen=True)
class TmsvSource:
    """Twin-beam source; ``mean_photons`` is the mean per mode."""

    mean_photons: float
    modes: int = 1

    def __post_init__(self) -> None:
        if self.mean_photons < 0:
            raise ParameterError("mean_photons must be non-negative")
        if self.modes < 1:
            raise ParameterError("modes must be >= 1")

    @property
    def total_mean(self) -> float:
        return self.mean_photons * self.modes

    def pair_distribution(self) -> PhotonDistribution:
        return PhotonDistribution.multithermal(self.total_mean, self.modes)


@dataclass(frozen=True, eq=False)
class JointCountPmf:
    """pmf over (n_S, n_I); axis 0 is the signal count."""

    pmf: np.ndarray

    def __post_init__(self) -> None:
        pmf = _readonly(self.pmf)
        if pmf.ndim != 2 or pmf.size == 0:
            raise ParameterError("joint pmf must be a non-empty 2-D array")
        if not np.all(np.isfinite(pmf)) or np.any(pmf < 0.0):
            raise ParameterError("joint pmf entries must be finite and non-negative")
        total = float(pmf.sum())
        if abs(total - 1.0) > NORM_TOL:
            raise ParameterError(f"joint pmf sums to {total!r}")
        object.__setattr__(self, "pmf", pmf)

    @property
    def shape(self) -> tuple:
        return self.pmf.shape

    @classmethod
    def signal_only(cls, dist: PhotonDistribution) -> "JointCountPmf":
        """Single-beam statistics: the idler count is identically zero."""
        return cls(dist.pmf[:, None])

    def signal_marginal(self) -> PhotonDistribution:
        return PhotonDistribution(self.pmf.sum(axis=1))

    def idler_marginal(self) -> PhotonDistribution:
        return PhotonDistribution(self.pmf.sum(axis=0))

    def padded(self, shape: tuple) -> np.ndarray:
        rows = max(shape[0], self.pmf.shape[0])
        cols = max(shape[1], self.pmf.shape[1])
        out = np.zeros((rows, cols))
        out[: self.pmf.shape[0], : self.pmf.shape[1]] = self.pmf
        return out

    def log_pmf(self, n_s, n_i) -> np.ndarray:
        """Log-probability at integer counts; -inf outside the support."""
        n_s = np.asarray(n_s)
        n_i = np.asarray(n_i)
        si = np.rint(n_s).astype(np.int64)
        ii = np.rint(n_i).astype(np.int64)
        inside = (
            (si >= 0)
            & (ii >= 0)
            & (si < self.pmf.shape[0])
            & (ii < self.pmf.shape[1])
            & np.isclose(n_s, si)
            & np.isclose(n_i, ii)
        )
        values = np.zeros(np.broadcast(si, ii).shape)
        si_b, ii_b, inside_b = np.broadcast_arrays(si, ii, inside)
        values[inside_b] = self.pmf[si_b[inside_b], ii_b[inside_b]]
        with np.errstate(divide="ignore"):
            return np.log(values)


ChannelLike = Union[LossChannel, float]


def _tau_of(ch: ChannelLike) -> float:
    return ch.tau if isinstance(ch, LossChannel) else LossChannel(float(ch)).tau


def binomial_kernel(n: int, m: int, tau: float) -> float:
    """B(n|m,tau) = C(m,n) tau^n (1-tau)^(m-n), zero for n > m."""
    if n < 0 or m < 0 or n > m:
        return 0.0
    if m <= LOG_SPACE_THRESHOLD:
        return math.comb(m, n) * tau**n * (1.0 - tau) ** (m - n)
    log_b = (
        gammaln(m + 1)
        - gammaln(n + 1)
        - gammaln(m - n + 1)
        + xlogy(n, tau)
        + xlog1py(m - n, -tau)
    )
    return float(np.exp(log_b))


def binomial_kernel_matrix(m_max: int, tau: float, n_max: Optional[int] = None) -> np.ndarray:
    """Matrix K[n, m] = B(n|m,tau) for n <= n_max, m <= m_max (log-space)."""
    n_max = m_max if n_max is None else n_max
    m = np.arange(m_max + 1)[None, :]
    n = np.arange(n_max + 1)[:, None]
    valid = n <= m
    k = np.where(valid, m - n, 0)
    log_b = gammaln(m + 1) - gammaln(n + 1) - gammaln(k + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_b = log_b + xlogy(n, tau) + xlog1py(k, -tau)
        kernel = np.where(valid, np.exp(log_b), 0.0)
    return kernel


def apply_loss(dist: PhotonDistribution, ch: ChannelLike) -> PhotonDistribution:
    """Binomial compounding P(n) = sum_m P0(m) B(n|m,tau)."""
    tau = _tau_of(ch)
    if tau == 1.0:
        return dist
    kernel = binomial_kernel_matrix(dist.n_max, tau)
    return PhotonDistribution(kernel @ dist.pmf)


def compose_losses(tau: ChannelLike, eta: ChannelLike) -> LossChannel:
    return LossChannel(_tau_of(tau) * _tau_of(eta))


def joint_after_channels(
    pair: PhotonDistribution, tau_s: ChannelLike, tau_i: ChannelLike
) -> JointCountPmf:
    """Thin both arms of a perfectly correlated pair number independently."""
    tau_s, tau_i = _tau_of(tau_s), _tau_of(tau_i)
    k_s = binomial_kernel_matrix(pair.n_max, tau_s)
    weighted = k_s * pair.pmf[None, :]
    if tau_i == 1.0:
        return JointCountPmf(weighted)
    k_i = binomial_kernel_matrix(pair.n_max, tau_i)
    return JointCountPmf(weighted @ k_i.T)


def apply_loss_joint(joint: JointCountPmf, tau_s: ChannelLike, tau_i: ChannelLike) -> JointCountPmf:
    tau_s, tau_i = _tau_of(tau_s), _tau_of(tau_i)
    pmf = joint.pmf
    if tau_s != 1.0:
        pmf = binomial_kernel_matrix(pmf.shape[0] - 1, tau_s) @ pmf
    if tau_i != 1.0:
        pmf = pmf @ binomial_kernel_matrix(pmf.shape[1] - 1, tau_i).T
    return JointCountPmf(pmf)


def tmsv_joint_ideal(src: TmsvSource) -> JointCountPmf:
    return JointCountPmf(np.diag(src.pair_distribution().pmf))


def tmsv_joint_after_channels(src: TmsvSource, tau_s: ChannelLike, tau_i: ChannelLike) -> JointCountPmf:
    return joint_after_channels(src.pair_distribution(), tau_s, tau_i)


def pair_count_distribution(mean_pairs: float, modes: Optional[int] = None) -> PhotonDistribution:
    """Pair-number pmf used by the simulator: Poisson, or multithermal for finite modes."""
    if modes is None:
        return PhotonDistribution.poisson(mean_pairs)
    return PhotonDistribution.multithermal(mean_pairs, modes)


def poisson_pair_joint(
    mean_pairs: float, tau_s: ChannelLike, tau_i: ChannelLike, modes: Optional[int] = None
) -> JointCountPmf:
    return joint_after_channels(pair_count_distribution(mean_pairs, modes), tau_s, tau_i)


def pair_source_sampler_params(src: TmsvSource, energy_total: float) -> float:
    """Mean pair count of the Poisson pair model for a total signal energy."""
    if energy_total < 0:
        raise ParameterError("energy_total must be non-negative")
    occupancy = energy_total / src.modes
    if occupancy > POISSON_PAIR_OCCUPANCY:
        logger.warning(
            "photons per mode %.3g is not << 1; Poisson pair counts underestimate the variance",
            occupancy,
        )
    return float(energy_total)


def total_variation_distance(
    p: Union[PhotonDistribution, Sequence[float]], q: Union[PhotonDistribution, Sequence[float]]
) -> float:
    a = p.pmf if isinstance(p, PhotonDistribution) else np.asarray(p, dtype=float)
    b = q.pmf if isinstance(q, PhotonDistribution) else np.asarray(q, dtype=float)
    size = max(a.size, b.size)
    a = np.pad(a, (0, size - a.size))
    b = np.pad(b, (0, size - b.size))
    return 0.5 * float(np.abs(a - b).sum())
