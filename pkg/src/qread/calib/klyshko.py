from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Tuple, Union

import numpy as np

from qread.sim.frames import FrameSet
from qread.utils.errors import DivisionDomain, EmptyIdler, ParameterError

logger = logging.getLogger(__name__)

DEFAULT_SUBSETS = 10
# below this the signal efficiency says the arms are not quantum correlated
NEAR_ZERO_EFFICIENCY = 0.05


@dataclass(frozen=True)
class Estimate:
    value: float
    sigma: float = 0.0


@dataclass(frozen=True)
class NoiseEstimate:
    straylight_mean: float
    electronic_variance: float
    straylight_mean_idler: float = 0.0
    sigma_straylight: float = 0.0
    sigma_electronic: float = 0.0

    def __iter__(self) -> Iterator[float]:
        yield self.straylight_mean
        yield self.electronic_variance


@dataclass
class CalibrationResult:
    gamma: float
    sigma: float
    eta_s: float
    eta_i: float
    straylight_mean: float
    electronic_variance: float
    uncertainties: Dict[str, float] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        return {
            "gamma": self.gamma,
            "sigma": self.sigma,
            "eta_s": self.eta_s,
            "eta_i": self.eta_i,
            "straylight_mean": self.straylight_mean,
            "electronic_variance": self.electronic_variance,
            "uncertainties": dict(self.uncertainties),
            "flags": list(self.flags),
        }


NoiseLike = Union[NoiseEstimate, Tuple[float, float]]


def _subset_sigma(frames: FrameSet, statistic: Callable[[FrameSet], float], subsets: int) -> float:
    parts = min(subsets, len(frames))
    if parts < 2:
        return 0.0
    values = [statistic(part) for part in frames.split(parts)]
    return float(np.std(values, ddof=1))


def _gamma(frames: FrameSet) -> float:
    mean_i = float(np.mean(frames.n_i))
    if mean_i <= 0:
        raise EmptyIdler(f"mean idler count {mean_i:g} is not positive")
    return float(np.mean(frames.n_s)) / mean_i


def estimate_gamma(frames: FrameSet, subsets: int = DEFAULT_SUBSETS) -> Estimate:
    """Channel unbalance <n_S>/<n_I>."""
    if len(frames) < 2:
        raise ParameterError("need at least 2 frames")
    return Estimate(_gamma(frames), _subset_sigma(frames, _gamma, subsets))


def estimate_sigma(
    frames: FrameSet, gamma: float, straylight_mean: float = 0.0, electronic_variance: float = 0.0
) -> float:
    """Correlation-degradation statistic with the signal-side noise corrections."""
    n_s, n_i = frames.n_s, frames.n_i
    mean_s = float(np.mean(n_s))
    signal_only = mean_s - straylight_mean
    if signal_only <= 0:
        raise DivisionDomain(f"<n_S - N_SL> = {signal_only:g} is not positive")
    total = float(np.mean(n_s + gamma * n_i))
    if total <= 0:
        raise DivisionDomain(f"<n_S + gamma n_I> = {total:g} is not positive")
    spread = float(np.var(n_s - gamma * n_i, ddof=1))
    return spread / total * mean_s / signal_only - (electronic_variance + straylight_mean) / signal_only


def _efficiencies(frames: FrameSet, straylight: float, electronic: float) -> Tuple[float, float, float, float]:
    gamma = _gamma(frames)
    sigma = estimate_sigma(frames, gamma, straylight, electronic)
    eta_s = (1.0 + gamma) / 2.0 - sigma
    return gamma, sigma, eta_s, eta_s / gamma


def estimate_efficiencies(
    frames: FrameSet, noise: NoiseLike = (0.0, 0.0), subsets: int = DEFAULT_SUBSETS
) -> CalibrationResult:
    """Detection efficiencies of both arms from signal-idler correlations.

    Point estimates use every frame; uncertainties are the standard
    deviation of the same estimates over ``subsets`` consecutive subsets.
    The region-size condition (integration area much larger than the
    coherence area) is assumed, not checked.
    """
    if len(frames) < 2:
        raise ParameterError("need at least 2 frames")
    straylight, electronic = noise
    gamma, sigma, eta_s, eta_i = _efficiencies(frames, straylight, electronic)
    parts = min(subsets, len(frames))
    uncertainties = {"gamma": 0.0, "sigma": 0.0, "eta_s": 0.0, "eta_i": 0.0}
    if parts >= 2:
        table = np.array([_efficiencies(part, straylight, electronic) for part in frames.split(parts)])
        spread = np.std(table, axis=0, ddof=1)
        uncertainties = dict(zip(("gamma", "sigma", "eta_s", "eta_i"), map(float, spread)))
    if isinstance(noise, NoiseEstimate):
        uncertainties["straylight_mean"] = noise.sigma_straylight
        uncertainties["electronic_variance"] = noise.sigma_electronic
    flags = []
    for name, value in (("eta_s", eta_s), ("eta_i", eta_i)):
        if not 0.0 < value <= 1.0:
            flags.append(f"{name}_out_of_range")
            logger.warning("estimated %s=%.4f lies outside (0, 1]", name, value)
    if eta_s < NEAR_ZERO_EFFICIENCY:
        flags.append("no_quantum_correlation")
    return CalibrationResult(
        gamma=gamma,
        sigma=sigma,
        eta_s=eta_s,
        eta_i=eta_i,
        straylight_mean=float(straylight),
        electronic_variance=float(electronic),
        uncertainties=uncertainties,
        flags=flags,
    )


def estimate_noise(dark_frames: FrameSet, shutter_frames: FrameSet, subsets: int = DEFAULT_SUBSETS) -> NoiseEstimate:
    """Straylight from the dark region, read noise from shutter-closed frames."""
    if len(dark_frames) == 0 or len(shutter_frames) == 0:
        raise ParameterError("dark and shutter sets must be non-empty")
    offset_s = float(np.mean(shutter_frames.n_s))
    offset_i = float(np.mean(shutter_frames.n_i))
    straylight = float(np.mean(dark_frames.n_s)) - offset_s
    straylight_idler = float(np.mean(dark_frames.n_i)) - offset_i
    if straylight < 0 or straylight_idler < 0:
        logger.warning("negative straylight estimate (%.3g, %.3g) clamped at 0", straylight, straylight_idler)
    electronic = float(np.var(shutter_frames.n_s, ddof=1)) if len(shutter_frames) > 1 else 0.0

    def _mean_s(frames: FrameSet) -> float:
        return float(np.mean(frames.n_s))

    def _var_s(frames: FrameSet) -> float:
        return float(np.var(frames.n_s, ddof=1))

    return NoiseEstimate(
        straylight_mean=max(straylight, 0.0),
        electronic_variance=electronic,
        straylight_mean_idler=max(straylight_idler, 0.0),
        sigma_straylight=_subset_sigma(dark_frames, _mean_s, subsets),
        sigma_electronic=_subset_sigma(shutter_frames, _var_s, subsets) if len(shutter_frames) >= 2 * subsets else 0.0,
    )
