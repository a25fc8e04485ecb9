from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from tqdm import tqdm

from qread.decide.discriminate import (
    ChannelPair,
    GainReport,
    binary_entropy,
    classical_bound,
    gains,
    substitute_efficiency,
)
from qread.decide.rules import RULE_KINDS, CoherentThresholdRule, DecisionRule, build_rule
from qread.decide.theory import predicted_error_probabilities
from qread.sim.frames import NO_TRUTH, FrameSet
from qread.sim.montecarlo import TRANSMITTERS, SimConfig, simulate_frames, simulate_set
from qread.utils.errors import ParameterError, UnlabeledData

logger = logging.getLogger(__name__)

CLASSICAL_REFERENCES = ("marginal", "coherent")


@dataclass(frozen=True)
class ExperimentConfig:
    pair: ChannelPair
    transmitter: str = "tmsv"
    frames_per_set: int = 10000
    rule: str = "auto"
    subsets: int = 10
    seed: int = 0
    sampling: str = "exact-pair"
    modes: Optional[int] = None
    workers: int = 1
    classical_reference: str = "marginal"
    max_exact_pair_photons: float = 1e7
    stream_tag: str = ""

    def __post_init__(self) -> None:
        if self.transmitter not in TRANSMITTERS:
            raise ParameterError(f"transmitter must be one of {TRANSMITTERS}")
        if self.rule not in RULE_KINDS:
            raise ParameterError(f"rule must be one of {RULE_KINDS}")
        if self.classical_reference not in CLASSICAL_REFERENCES:
            raise ParameterError(f"classical_reference must be one of {CLASSICAL_REFERENCES}")
        if self.subsets < 2 or self.frames_per_set % self.subsets:
            raise ParameterError(
                f"subsets={self.subsets} must be >= 2 and divide frames_per_set={self.frames_per_set}"
            )

    def sim_config(self, transmitter: Optional[str] = None) -> SimConfig:
        return SimConfig(
            pair=self.pair,
            transmitter=transmitter or self.transmitter,
            frames_per_set=self.frames_per_set,
            rng_seed=self.seed,
            sampling=self.sampling,
            modes=self.modes,
            workers=self.workers,
            max_exact_pair_photons=self.max_exact_pair_photons,
            stream_tag=self.stream_tag,
        )

    def joint_rule(self) -> DecisionRule:
        return build_rule(self.rule, self.pair, self.transmitter, self.modes)

    def with_cell(self, tau0: float, n: float) -> "ExperimentConfig":
        """The template at one sweep cell, drawing from streams of its own."""
        return replace(
            self,
            pair=replace(self.pair, tau0=tau0, mean_signal_photons=n),
            stream_tag=f"cell:{tau0!r}:{n!r}",
        )


@dataclass(frozen=True)
class ErrorEstimate:
    value: float
    sigma: float
    subset_values: Tuple[float, ...] = field(default=(), repr=False)


def _check_labeled(*sets: FrameSet) -> None:
    for frames in sets:
        if len(frames) == 0 or np.any(frames.truth == NO_TRUTH):
            raise UnlabeledData("error probability needs frames labeled with their true channel")


def _error_rate(frames: FrameSet, rule: DecisionRule) -> float:
    decided = rule.decide(frames.n_s, frames.n_i)
    return float(np.mean(decided != frames.truth))


def empirical_error_probability(
    set0: FrameSet, set1: FrameSet, rule: DecisionRule, subsets: int = 10
) -> ErrorEstimate:
    """Equal-prior error rate over two labeled sets, with a subset standard deviation."""
    _check_labeled(set0, set1)
    value = 0.5 * (_error_rate(set0, rule) + _error_rate(set1, rule))
    parts = min(subsets, len(set0), len(set1))
    if parts < 2:
        return ErrorEstimate(value, 0.0)
    per_subset = tuple(
        0.5 * (_error_rate(a, rule) + _error_rate(b, rule)) for a, b in zip(set0.split(parts), set1.split(parts))
    )
    return ErrorEstimate(value, float(np.std(per_subset, ddof=1)), per_subset)


def classical_bound_for(pair: ChannelPair) -> float:
    tau0, tau1 = substitute_efficiency(pair)
    return classical_bound(pair.mean_signal_photons, tau0, tau1)


def _classical_sets(cfg: ExperimentConfig, set0: FrameSet, set1: FrameSet) -> Tuple[FrameSet, FrameSet]:
    if cfg.classical_reference == "marginal":
        return set0, set1
    sim = cfg.sim_config(transmitter="coherent")
    return simulate_set(sim, 0), simulate_set(sim, 1)


def run_experiment(cfg: ExperimentConfig) -> GainReport:
    """Simulate both channels, decide every frame and report gains with subset error bars."""
    sim = cfg.sim_config()
    set0, set1 = simulate_set(sim, 0), simulate_set(sim, 1)
    cla0, cla1 = _classical_sets(cfg, set0, set1)
    quantum = empirical_error_probability(set0, set1, cfg.joint_rule(), cfg.subsets)
    classical = empirical_error_probability(cla0, cla1, CoherentThresholdRule.for_pair(cfg.pair), cfg.subsets)
    c_bound = classical_bound_for(cfg.pair)
    report = gains(quantum.value, classical.value, c_bound)
    per_subset = [gains(q, c, c_bound) for q, c in zip(quantum.subset_values, classical.subset_values)]
    if len(per_subset) >= 2:
        report.sigma_gain_a = float(np.std([g.gain_a for g in per_subset], ddof=1))
        report.sigma_gain_emp = float(np.std([g.gain_emp for g in per_subset], ddof=1))
    report.sigma_p_err_quantum = quantum.sigma
    report.sigma_p_err_classical_pc = classical.sigma
    logger.info(
        "tau0=%.4f N=%.3g p_err_q=%.4f p_err_pc=%.4f C=%.4f g_a=%.4f g_emp=%.4f",
        cfg.pair.tau0,
        cfg.pair.mean_signal_photons,
        report.p_err_quantum,
        report.p_err_classical_pc,
        report.c_bound,
        report.gain_a,
        report.gain_emp,
    )
    return report


def theoretical_report(cfg: ExperimentConfig) -> GainReport:
    p_q, p_cla = predicted_error_probabilities(cfg.pair, cfg.transmitter, cfg.modes)
    return gains(p_q, p_cla, classical_bound_for(cfg.pair))


@dataclass
class SweepRow:
    tau0: float
    n: float
    report: GainReport
    theory: GainReport


def sweep(
    template: ExperimentConfig,
    tau0_grid: Sequence[float],
    n_list: Sequence[float],
    progress: bool = False,
) -> List[SweepRow]:
    """One experiment per (N, tau0) cell: same seed, independent streams per cell."""
    if len(tau0_grid) == 0 or len(n_list) == 0:
        raise ParameterError("tau0 grid and N list must be non-empty")
    cells = [(float(n), float(t)) for n in n_list for t in tau0_grid]
    rows: List[SweepRow] = []
    for n, tau0 in tqdm(cells, desc="sweep", disable=not progress):
        cfg = template.with_cell(tau0, n)
        rows.append(SweepRow(tau0=tau0, n=n, report=run_experiment(cfg), theory=theoretical_report(cfg)))
    return rows


@dataclass(frozen=True)
class MemoryImage:
    bits: Tuple[int, ...]

    def __post_init__(self) -> None:
        bits = tuple(int(b) for b in self.bits)
        if not bits:
            raise ParameterError("memory image must hold at least one cell")
        if any(b not in (0, 1) for b in bits):
            raise ParameterError("memory cells hold 0 or 1")
        object.__setattr__(self, "bits", bits)

    @property
    def cells(self) -> int:
        return len(self.bits)

    @classmethod
    def from_string(cls, text: str) -> "MemoryImage":
        cells = [ch for ch in text if not ch.isspace()]
        if any(ch not in "01" for ch in cells):
            raise ParameterError("memory image string may only contain 0 and 1")
        return cls(tuple(int(ch) for ch in cells))

    @classmethod
    def random(cls, cells: int, seed: int = 0) -> "MemoryImage":
        rng = np.random.default_rng(seed)
        return cls(tuple(rng.integers(0, 2, size=cells).tolist()))

    def to_string(self) -> str:
        return "".join(str(b) for b in self.bits)


@dataclass
class ReadResult:
    bits: Tuple[int, ...]
    decoded: Tuple[int, ...]
    errors: int
    ber: float
    ber_ci: Tuple[float, float]
    information_per_cell: float

    def to_dict(self) -> dict:
        return {
            "bits": "".join(map(str, self.bits)),
            "decoded": "".join(map(str, self.decoded)),
            "errors": self.errors,
            "ber": self.ber,
            "ber_ci": list(self.ber_ci),
            "information_per_cell": self.information_per_cell,
        }


def read_memory(image: MemoryImage, cfg: ExperimentConfig, confidence: float = 0.95) -> ReadResult:
    """Illuminate every cell once with the configured transmitter and decode it."""
    sim = replace(cfg.sim_config(), frames_per_set=image.cells)
    frames = simulate_frames(sim, image.bits, kind="transmitter", tag="read")
    decoded = cfg.joint_rule().decide(frames.n_s, frames.n_i)
    errors = int(np.count_nonzero(decoded != frames.truth))
    ci = stats.binomtest(errors, image.cells).proportion_ci(confidence_level=confidence, method="exact")
    ber = errors / image.cells
    return ReadResult(
        bits=image.bits,
        decoded=tuple(int(b) for b in decoded),
        errors=errors,
        ber=ber,
        ber_ci=(float(ci.low), float(ci.high)),
        information_per_cell=1.0 - binary_entropy(ber),
    )
