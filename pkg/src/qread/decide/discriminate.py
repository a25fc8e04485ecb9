from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy.special import entr, gammainc, gammaincc

from qread.stats.photon_stats import (
    JointCountPmf,
    TmsvSource,
    apply_loss_joint,
    tmsv_joint_after_channels,
)
from qread.utils.errors import DegenerateChannels, InvalidRegime, ParameterError

logger = logging.getLogger(__name__)

# largest joint table (per axis) the exact TMSV evaluation will build
MAX_EXACT_TABLE = 4000


@dataclass(frozen=True)
class ChannelPair:
    """One discrimination problem: two memory transmittances plus the detection chain."""

    tau0: float
    tau1: float
    eta_s: float = 1.0
    eta_i: float = 1.0
    mean_signal_photons: float = 0.0
    straylight_mean: float = 0.0
    electronic_variance: float = 0.0
    straylight_mean_idler: Optional[float] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau0 <= self.tau1 <= 1.0:
            raise ParameterError(f"need 0 <= tau0 <= tau1 <= 1, got tau0={self.tau0}, tau1={self.tau1}")
        for name in ("eta_s", "eta_i"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ParameterError(f"{name} must lie in (0, 1], got {value}")
        if self.mean_signal_photons < 0:
            raise ParameterError("mean_signal_photons must be non-negative")
        for name in ("straylight_mean", "electronic_variance", "straylight_mean_idler"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ParameterError(f"{name} must be non-negative")

    @property
    def idler_straylight(self) -> float:
        if self.straylight_mean_idler is None:
            return self.straylight_mean
        return self.straylight_mean_idler

    @property
    def degenerate(self) -> bool:
        return self.tau0 == self.tau1

    @property
    def noiseless(self) -> bool:
        return self.straylight_mean == 0 and self.idler_straylight == 0 and self.electronic_variance == 0

    def tau(self, hypothesis: int) -> float:
        if hypothesis not in (0, 1):
            raise ParameterError(f"hypothesis must be 0 or 1, got {hypothesis}")
        return self.tau1 if hypothesis else self.tau0

    def signal_transmittance(self, hypothesis: int) -> float:
        return self.eta_s * self.tau(hypothesis)


@dataclass
class GainReport:
    p_err_quantum: float
    p_err_classical_pc: float
    c_bound: float
    h_quantum: float
    h_classical_pc: float
    h_bound: float
    gain_a: float
    gain_emp: float
    sigma_gain_a: float = 0.0
    sigma_gain_emp: float = 0.0
    sigma_p_err_quantum: float = 0.0
    sigma_p_err_classical_pc: float = 0.0

    def to_dict(self) -> Dict[str, float]:
        return {key: float(value) for key, value in self.__dict__.items()}


def classical_bound(N: float, tau0: float, tau1: float) -> float:
    """Minimum error of any classical transmitter with mean energy N."""
    if not 0.0 <= tau0 <= tau1 <= 1.0:
        raise ParameterError("need 0 <= tau0 <= tau1 <= 1")
    if N < 0:
        raise ParameterError("N must be non-negative")
    exponent = N * (math.sqrt(tau1) - math.sqrt(tau0)) ** 2
    overlap = math.exp(-exponent)
    # 1 - sqrt(1 - y) written without cancellation
    return 0.5 * overlap / (1.0 + math.sqrt(-math.expm1(-exponent)))


def substitute_efficiency(pair: ChannelPair) -> Tuple[float, float]:
    """Fold the signal efficiency into the memory transmittances.

    The same substitution holds for the classical bound.
    """
    return pair.eta_s * pair.tau0, pair.eta_s * pair.tau1


def _check_distinct(tau0: float, tau1: float) -> None:
    if not 0.0 <= tau0 <= tau1 <= 1.0:
        raise ParameterError("need 0 <= tau0 <= tau1 <= 1")
    if tau0 == tau1:
        raise DegenerateChannels(f"tau0 == tau1 == {tau0}: channels are indistinguishable")


def poisson_threshold(rate0: float, rate1: float) -> float:
    """Likelihood-ratio threshold between Poisson(rate0) and Poisson(rate1)."""
    if rate0 <= 0 or rate0 == rate1:
        raise DegenerateChannels(f"threshold undefined for rates {rate0}, {rate1}")
    return (rate1 - rate0) / math.log1p((rate1 - rate0) / rate0)


def coherent_threshold(lam: float, tau0: float, tau1: float) -> float:
    """Decide tau0 iff n <= threshold."""
    _check_distinct(tau0, tau1)
    if tau0 == 0:
        raise DegenerateChannels("tau0 == 0: every nonzero count identifies tau1")
    if lam < 0:
        raise ParameterError("lambda must be non-negative")
    if lam == 0:
        return 0.0
    return poisson_threshold(lam * tau0, lam * tau1)


def coherent_success_probability(lam: float, tau0: float, tau1: float) -> float:
    k = math.floor(coherent_threshold(lam, tau0, tau1))
    # P(n <= k | Poisson(x)) = Q(k+1, x)
    return 0.5 * (float(gammaincc(k + 1, lam * tau0)) + float(gammainc(k + 1, lam * tau1)))


def coherent_error_probability(lam: float, tau0: float, tau1: float) -> float:
    k = math.floor(coherent_threshold(lam, tau0, tau1))
    return 0.5 * (float(gammainc(k + 1, lam * tau0)) + float(gammaincc(k + 1, lam * tau1)))


def tmsv_threshold_slope(tau0: float, tau1: float) -> float:
    _check_distinct(tau0, tau1)
    if tau1 == 1.0:
        return 1.0
    if tau0 == 0.0:
        return 0.0
    gain = math.log1p((tau1 - tau0) / tau0)
    loss = math.log1p((tau1 - tau0) / (1.0 - tau1))
    return 1.0 / (gain / loss + 1.0)


def tmsv_threshold(n_i: float, tau0: float, tau1: float) -> float:
    """Decide tau0 iff n_S <= threshold (idler arm lossless)."""
    return tmsv_threshold_slope(tau0, tau1) * n_i


def tmsv_decide(n_s, n_i, tau0: float, tau1: float) -> np.ndarray:
    """Vectorized threshold decision; 1 selects tau1."""
    n_s = np.asarray(n_s)
    n_i = np.asarray(n_i)
    slope = tmsv_threshold_slope(tau0, tau1)
    if tau1 == 1.0:
        # tau1 is only possible on the diagonal; n_S = n_I = 0 ties to tau0
        return ((n_s >= n_i) & (n_i > 0)).astype(np.int8)
    return (n_s > slope * n_i).astype(np.int8)


def _tmsv_tables(
    N: float, tau0: float, tau1: float, eta_s: float, modes: int
) -> Tuple[JointCountPmf, JointCountPmf]:
    source = TmsvSource(N / modes, modes)
    pair = source.pair_distribution()
    if pair.n_max + 1 > MAX_EXACT_TABLE:
        raise InvalidRegime(f"exact TMSV table of size {pair.n_max + 1} exceeds {MAX_EXACT_TABLE}")
    tables = []
    for tau in (tau0, tau1):
        joint = tmsv_joint_after_channels(source, tau, 1.0)
        if eta_s != 1.0:
            joint = apply_loss_joint(joint, eta_s, 1.0)
        tables.append(joint)
    return tables[0], tables[1]


def tmsv_success_probability(
    N: float, tau0: float, tau1: float, eta_s: float = 1.0, modes: int = 1
) -> float:
    """Exact success probability of the threshold receiver for a lossless idler.

    The signal passes the memory cell and then the detection efficiency
    ``eta_s``; the threshold is placed on the effective transmittances.
    """
    _check_distinct(tau0, tau1)
    if not 0.0 < eta_s <= 1.0:
        raise ParameterError("eta_s must lie in (0, 1]")
    table0, table1 = _tmsv_tables(N, tau0, tau1, eta_s, modes)
    rows, cols = table0.shape
    n_s, n_i = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    choose1 = tmsv_decide(n_s, n_i, eta_s * tau0, eta_s * tau1).astype(bool)
    success = 0.5 * (table0.pmf[~choose1].sum() + table1.pmf[choose1].sum())
    return float(success)


def tmsv_error_probability(
    N: float, tau0: float, tau1: float, eta_s: float = 1.0, modes: int = 1
) -> float:
    return 1.0 - tmsv_success_probability(N, tau0, tau1, eta_s, modes)


def bayes_success_probability(
    table0: Union[JointCountPmf, np.ndarray], table1: Union[JointCountPmf, np.ndarray]
) -> float:
    """Equal-prior Bayes success by enumerating every outcome."""
    p0 = table0.pmf if isinstance(table0, JointCountPmf) else np.atleast_2d(table0)
    p1 = table1.pmf if isinstance(table1, JointCountPmf) else np.atleast_2d(table1)
    shape = (max(p0.shape[0], p1.shape[0]), max(p0.shape[1], p1.shape[1]))
    a = np.zeros(shape)
    b = np.zeros(shape)
    a[: p0.shape[0], : p0.shape[1]] = p0
    b[: p1.shape[0], : p1.shape[1]] = p1
    return float(0.5 * np.maximum(a, b).sum())


def binary_entropy(p):
    """Binary Shannon entropy in bits, 0 log 0 = 0."""
    values = np.asarray(p, dtype=float)
    if np.any((values < 0) | (values > 1)) or np.any(np.isnan(values)):
        raise ParameterError("probability must lie in [0, 1]")
    h = (entr(values) + entr(1.0 - values)) / math.log(2.0)
    return float(h) if h.ndim == 0 else h


def gains(p_err_quantum: float, p_err_classical_pc: float, c_bound: float) -> GainReport:
    for name, value in (
        ("p_err_quantum", p_err_quantum),
        ("p_err_classical_pc", p_err_classical_pc),
        ("c_bound", c_bound),
    ):
        if value > 0.5:
            logger.debug("%s=%.4f above 1/2 (sampling noise)", name, value)
    h_q = binary_entropy(p_err_quantum)
    h_pc = binary_entropy(p_err_classical_pc)
    h_c = binary_entropy(c_bound)
    return GainReport(
        p_err_quantum=float(p_err_quantum),
        p_err_classical_pc=float(p_err_classical_pc),
        c_bound=float(c_bound),
        h_quantum=h_q,
        h_classical_pc=h_pc,
        h_bound=h_c,
        gain_a=h_c - h_q,
        gain_emp=h_pc - h_q,
    )
