from __future__ import annotations

import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy import stats

from qread.decide.discriminate import (
    ChannelPair,
    bayes_success_probability,
    coherent_error_probability,
)
from qread.decide.models import (
    GaussianJointModel,
    exact_likelihood_model,
    gaussian_likelihood_model,
)
from qread.decide.rules import CoherentThresholdRule, exact_regime
from qread.utils.errors import ModelEvaluationError

logger = logging.getLogger(__name__)

GRID_POINTS = 801
GRID_SPAN = 10.0


def photon_counting_error(lam: float, tau0: float, tau1: float) -> float:
    """Single-beam photon-counting error, including the limits the threshold excludes."""
    if tau0 == tau1 or lam == 0:
        return 0.5
    if tau0 == 0:
        return 0.5 * math.exp(-lam * tau1)
    return coherent_error_probability(lam, tau0, tau1)


def _gaussian_error_1d(model0: GaussianJointModel, model1: GaussianJointModel, points: int, span: float) -> float:
    m0, m1 = model0.mean[0], model1.mean[0]
    s0, s1 = math.sqrt(model0.cov[0][0]), math.sqrt(model1.cov[0][0])
    scale = max(s0, s1)
    x = np.linspace(min(m0, m1) - span * scale, max(m0, m1) + span * scale, points)
    overlap = np.minimum(stats.norm.pdf(x, m0, s0), stats.norm.pdf(x, m1, s1))
    return float(0.5 * overlap.sum() * (x[1] - x[0]))


def gaussian_bayes_error(
    model0: GaussianJointModel,
    model1: GaussianJointModel,
    points: int = GRID_POINTS,
    span: float = GRID_SPAN,
) -> float:
    """Equal-prior Bayes error between two normal count models.

    The overlap integral is taken on a square grid in coordinates whitened
    by the pooled covariance, centred between the two means.
    """
    if model0.single_beam and model1.single_beam:
        return _gaussian_error_1d(model0, model1, points, span)
    m0, m1 = model0.mean_array, model1.mean_array
    c0, c1 = model0.cov_array, model1.cov_array
    try:
        chol = np.linalg.cholesky(0.5 * (c0 + c1))
    except np.linalg.LinAlgError as exc:
        raise ModelEvaluationError("pooled covariance is not positive definite") from exc
    inv = np.linalg.inv(chol)
    mid = 0.5 * (m0 + m1)
    u0 = inv @ (m0 - mid)
    t0 = inv @ c0 @ inv.T
    t1 = inv @ c1 @ inv.T
    half = span + float(np.max(np.abs(u0)))
    axis = np.linspace(-half, half, points)
    zx, zy = np.meshgrid(axis, axis, indexing="ij")
    grid = np.stack([zx, zy], axis=-1)
    p0 = stats.multivariate_normal(u0, t0, allow_singular=True).pdf(grid)
    p1 = stats.multivariate_normal(-u0, t1, allow_singular=True).pdf(grid)
    step = axis[1] - axis[0]
    return float(0.5 * np.minimum(p0, p1).sum() * step * step)


def classical_marginal_error(pair: ChannelPair, modes: Optional[int] = None) -> float:
    """Error of the single-beam threshold rule applied to the signal marginal."""
    if pair.degenerate:
        return 0.5
    threshold = CoherentThresholdRule.for_pair(pair).threshold
    if math.isinf(threshold):
        return 0.5
    N = pair.mean_signal_photons
    if exact_regime(pair) and modes is None:
        k = math.floor(threshold)
        r0, r1 = pair.signal_transmittance(0) * N, pair.signal_transmittance(1) * N
        return float(0.5 * (stats.poisson.sf(k, r0) + stats.poisson.cdf(k, r1)))
    m0 = gaussian_likelihood_model(pair, 0, modes)
    m1 = gaussian_likelihood_model(pair, 1, modes)
    false1 = stats.norm.sf(threshold, m0.mean[0], math.sqrt(m0.cov[0][0]))
    false0 = stats.norm.cdf(threshold, m1.mean[0], math.sqrt(m1.cov[0][0]))
    return float(0.5 * (false1 + false0))


def joint_error(pair: ChannelPair, transmitter: str = "tmsv", modes: Optional[int] = None) -> float:
    if pair.degenerate:
        return 0.5
    if exact_regime(pair):
        tables = [exact_likelihood_model(pair, h, modes, transmitter).table for h in (0, 1)]
        return 1.0 - bayes_success_probability(*tables)
    models = [gaussian_likelihood_model(pair, h, modes, transmitter=transmitter) for h in (0, 1)]
    return gaussian_bayes_error(*models)


def predicted_error_probabilities(
    pair: ChannelPair, transmitter: str = "tmsv", modes: Optional[int] = None
) -> Tuple[float, float]:
    """(joint-rule error, classical marginal-rule error) predicted by the count models."""
    p_q = joint_error(pair, transmitter, modes)
    p_cla = classical_marginal_error(pair, modes)
    logger.debug("predicted p_err joint=%.5f classical=%.5f", p_q, p_cla)
    return p_q, p_cla
