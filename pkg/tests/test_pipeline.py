import math
from dataclasses import replace

import numpy as np
import pytest

from qread.decide.discriminate import ChannelPair, classical_bound
from qread.decide.rules import CoherentThresholdRule, DecisionRule
from qread.pipeline.experiment import (
    ExperimentConfig,
    MemoryImage,
    classical_bound_for,
    empirical_error_probability,
    read_memory,
    run_experiment,
    sweep,
    theoretical_report,
)
from qread.sim.frames import FrameSet
from qread.sim.montecarlo import simulate_set
from qread.utils.errors import ParameterError, UnlabeledData

TWIN_BEAM_ENERGIES = [1.15e5, 3.1e5, 5.2e5]


class _CoinRule(DecisionRule):
    def __init__(self, seed: int = 0) -> None:
        self.rng = np.random.default_rng(seed)

    def decide(self, n_s, n_i=None):
        return self.rng.integers(0, 2, size=np.shape(n_s)).astype(np.int8)


class _Inverted(DecisionRule):
    def __init__(self, rule: DecisionRule) -> None:
        self.rule = rule

    def decide(self, n_s, n_i=None):
        return (1 - self.rule.decide(n_s, n_i)).astype(np.int8)


def _labeled(n_s, truth: int) -> FrameSet:
    n_s = np.asarray(n_s, dtype=float)
    return FrameSet(np.arange(n_s.size), n_s, np.zeros_like(n_s), np.full(n_s.size, truth))


def test_perfect_rule_has_zero_error():
    estimate = empirical_error_probability(
        _labeled(np.zeros(100), 0), _labeled(np.full(100, 10.0), 1), CoherentThresholdRule(5.0)
    )
    assert estimate.value == 0.0 and estimate.sigma == 0.0


def test_coin_flip_rule():
    n = 10000
    estimate = empirical_error_probability(_labeled(np.zeros(n), 0), _labeled(np.zeros(n), 1), _CoinRule())
    assert estimate.value == pytest.approx(0.5, abs=3 * 0.5 / math.sqrt(2 * n))
    assert len(estimate.subset_values) == 10


def test_error_bars_shrink_with_more_frames():
    n = 10000
    set0, set1 = _labeled(np.zeros(n), 0), _labeled(np.zeros(n), 1)
    big = empirical_error_probability(set0, set1, _CoinRule(1), subsets=100)
    small = empirical_error_probability(set0.take(slice(0, n // 4)), set1.take(slice(0, n // 4)), _CoinRule(2), 100)
    assert 1.3 < small.sigma / big.sigma < 3.0


def test_label_swap_invariance():
    rng = np.random.default_rng(4)
    set0 = _labeled(rng.poisson(90.0, 500), 0)
    set1 = _labeled(rng.poisson(100.0, 500), 1)
    rule = CoherentThresholdRule(95.0)
    swapped0 = _labeled(set1.n_s, 0)
    swapped1 = _labeled(set0.n_s, 1)
    direct = empirical_error_probability(set0, set1, rule)
    flipped = empirical_error_probability(swapped0, swapped1, _Inverted(rule))
    assert direct.value == flipped.value


def test_unlabeled_frames_are_rejected():
    unlabeled = FrameSet.unlabeled(np.arange(10), np.zeros(10), np.zeros(10))
    with pytest.raises(UnlabeledData):
        empirical_error_probability(unlabeled, _labeled(np.zeros(10), 1), CoherentThresholdRule(1.0))


def test_experiment_config_validation():
    pair = ChannelPair(0.9, 1.0, mean_signal_photons=1e4)
    with pytest.raises(ParameterError):
        ExperimentConfig(pair=pair, frames_per_set=1000, subsets=3)
    with pytest.raises(ParameterError):
        ExperimentConfig(pair=pair, subsets=1)
    with pytest.raises(ParameterError):
        ExperimentConfig(pair=pair, rule="nearest")
    with pytest.raises(ParameterError):
        ExperimentConfig(pair=pair, classical_reference="ideal")


def test_classical_bound_uses_effective_transmittances():
    pair = ChannelPair(0.993, 1.0, eta_s=0.78, mean_signal_photons=1.15e5)
    assert classical_bound_for(pair) == classical_bound(1.15e5, 0.78 * 0.993, 0.78)


def test_indistinguishable_channels():
    pair = ChannelPair(0.99, 0.99, eta_s=0.8, eta_i=0.8, mean_signal_photons=1e4)
    report = run_experiment(ExperimentConfig(pair=pair, frames_per_set=1000, seed=3))
    assert report.p_err_quantum == 0.5 and report.p_err_classical_pc == 0.5
    assert report.c_bound == 0.5
    assert report.gain_a == 0.0 and report.gain_emp == 0.0
    assert report.sigma_gain_a == 0.0


def test_exact_regime_matches_theory():
    pair = ChannelPair(0.8, 1.0, eta_i=0.9, mean_signal_photons=200.0)
    cfg = ExperimentConfig(pair=pair, frames_per_set=10000, seed=8)
    report, theory = run_experiment(cfg), theoretical_report(cfg)
    assert report.p_err_quantum == pytest.approx(theory.p_err_quantum, abs=3 * report.sigma_p_err_quantum)
    assert report.p_err_classical_pc == pytest.approx(
        theory.p_err_classical_pc, abs=3 * report.sigma_p_err_classical_pc
    )
    assert theory.p_err_quantum < theory.p_err_classical_pc


def test_coherent_reference_matches_the_signal_marginal():
    pair = ChannelPair(0.98, 1.0, mean_signal_photons=1e4)
    marginal = run_experiment(ExperimentConfig(pair=pair, frames_per_set=2000, seed=2))
    coherent = run_experiment(
        ExperimentConfig(pair=pair, frames_per_set=2000, seed=2, classical_reference="coherent")
    )
    assert marginal.p_err_quantum == coherent.p_err_quantum
    assert coherent.p_err_classical_pc == pytest.approx(marginal.p_err_classical_pc, abs=0.03)


def test_twin_beam_regime_gain(twin_beam_pair):
    cfg = ExperimentConfig(pair=twin_beam_pair, frames_per_set=10000, seed=2026)
    report, theory = run_experiment(cfg), theoretical_report(cfg)
    assert report.p_err_quantum < report.c_bound
    assert report.p_err_quantum == pytest.approx(theory.p_err_quantum, abs=3 * report.sigma_p_err_quantum)
    assert report.gain_a == pytest.approx(theory.gain_a, abs=3 * report.sigma_gain_a)
    assert report.gain_emp > 0.1


def test_weaker_read_noise_gain(twin_beam_pair):
    cfg = ExperimentConfig(pair=replace(twin_beam_pair, electronic_variance=1e3), frames_per_set=10000, seed=2026)
    report = run_experiment(cfg)
    assert report.gain_a > 0.1
    assert 0.2 <= report.gain_emp <= 0.4


def test_detection_efficiency_folds_into_the_transmittances():
    n, tau0, eta_s, eta_i = 1e5, 0.99, 0.78, 0.77
    with_efficiency = ChannelPair(tau0, 1.0, eta_s=eta_s, eta_i=eta_i, mean_signal_photons=n, electronic_variance=1e4)
    folded = ChannelPair(
        eta_s * tau0, eta_s, eta_s=1.0, eta_i=eta_i, mean_signal_photons=n, electronic_variance=1e4
    )
    a = run_experiment(ExperimentConfig(pair=with_efficiency, frames_per_set=10000, seed=31))
    b = run_experiment(ExperimentConfig(pair=folded, frames_per_set=10000, seed=32))
    assert a.c_bound == pytest.approx(b.c_bound)
    for p_a, p_b in ((a.p_err_quantum, b.p_err_quantum), (a.p_err_classical_pc, b.p_err_classical_pc)):
        # each estimate averages two rates of 10000 frames
        sigma = math.sqrt(p_a * (1 - p_a) / 20000 + p_b * (1 - p_b) / 20000)
        assert p_a == pytest.approx(p_b, abs=3 * sigma)


def test_single_cell_sweep_equals_experiment():
    pair = ChannelPair(0.95, 1.0, eta_s=0.9, eta_i=0.9, mean_signal_photons=1e4, electronic_variance=100.0)
    cfg = ExperimentConfig(pair=pair, frames_per_set=1000, seed=4)
    (row,) = sweep(cfg, [0.95], [1e4])
    assert (row.tau0, row.n) == (0.95, 1e4)
    assert row.report == run_experiment(cfg.with_cell(0.95, 1e4))
    assert row.theory == theoretical_report(cfg)
    with pytest.raises(ParameterError):
        sweep(cfg, [], [1e4])


def test_sweep_cells_draw_from_their_own_streams():
    pair = ChannelPair(0.95, 1.0, eta_s=0.9, eta_i=0.9, mean_signal_photons=1e4, electronic_variance=100.0)
    cfg = ExperimentConfig(pair=pair, frames_per_set=200, seed=4)
    a, b = cfg.with_cell(0.95, 1e4), cfg.with_cell(0.96, 1e4)
    assert a.stream_tag != b.stream_tag
    assert a.stream_tag == cfg.with_cell(0.95, 1e4).stream_tag
    # the idler arm does not see tau0, so shared streams would repeat it exactly
    idler_a = simulate_set(a.sim_config(), 1).n_i
    idler_b = simulate_set(b.sim_config(), 1).n_i
    assert not np.array_equal(idler_a, idler_b)


def test_theoretical_gain_vanishes_as_channels_merge(twin_beam_pair):
    cfg = ExperimentConfig(pair=twin_beam_pair)
    near = theoretical_report(cfg.with_cell(0.998, 1.15e5))
    mid = theoretical_report(cfg.with_cell(0.994, 1.15e5))
    assert 0 < near.gain_a < mid.gain_a
    assert theoretical_report(cfg.with_cell(1.0, 1.15e5)).gain_a == 0.0


def test_theoretical_gain_grows_with_energy(twin_beam_pair):
    cfg = ExperimentConfig(pair=twin_beam_pair)
    grid = np.linspace(0.990, 0.999, 10)
    best = {}
    above = {}
    for n in TWIN_BEAM_ENERGIES:
        gains_a = [theoretical_report(cfg.with_cell(float(t), n)).gain_a for t in grid]
        best[n], above[n] = max(gains_a), sum(g > 0.06 for g in gains_a)
    low, mid, high = TWIN_BEAM_ENERGIES
    # at the lowest energy read noise keeps the gain near 0.03
    assert best[low] < 0.05 and above[low] == 0
    assert best[low] < best[mid] < best[high]
    assert best[high] > 0.1 and above[high] >= 3


@pytest.mark.slow
def test_twin_beam_sweep(twin_beam_pair):
    cfg = ExperimentConfig(pair=twin_beam_pair, frames_per_set=10000, seed=2026)
    rows = sweep(cfg, list(np.linspace(0.990, 0.999, 10)), TWIN_BEAM_ENERGIES)
    assert len(rows) == 30
    assert max(row.report.gain_a for row in rows) > 0.1
    assert max(row.theory.gain_a for row in rows) > 0.1
    best = max(rows, key=lambda row: row.report.gain_emp)
    spread = 3 * best.report.sigma_gain_emp
    assert 0.2 - spread <= best.report.gain_emp <= 0.4 + spread
    lowest = [row for row in rows if row.n == TWIN_BEAM_ENERGIES[0]]
    assert max(row.theory.gain_a for row in lowest) < 0.05


@pytest.mark.slow
def test_gain_region_widens_with_energy(twin_beam_pair):
    cfg = ExperimentConfig(pair=twin_beam_pair, frames_per_set=10000, seed=2026)
    low_n, high_n = TWIN_BEAM_ENERGIES[0], TWIN_BEAM_ENERGIES[-1]
    rows = sweep(cfg, list(np.linspace(0.990, 0.999, 10)), [low_n, high_n])

    def cells_above(n, threshold, theory=False):
        return sum((row.theory if theory else row.report).gain_a > threshold for row in rows if row.n == n)

    assert cells_above(high_n, 0.06) > cells_above(low_n, 0.06)
    assert cells_above(high_n, 0.06) >= 3
    assert cells_above(high_n, 0.06, theory=True) >= 3
    assert cells_above(low_n, 0.06, theory=True) == 0


def test_memory_image():
    image = MemoryImage.from_string("0101 1\n0")
    assert image.bits == (0, 1, 0, 1, 1, 0) and image.cells == 6
    assert image.to_string() == "010110"
    assert MemoryImage.random(50, seed=1) == MemoryImage.random(50, seed=1)
    for bad in ("012", ""):
        with pytest.raises(ParameterError):
            MemoryImage.from_string(bad)


def test_read_well_separated_cells():
    pair = ChannelPair(0.1, 1.0, mean_signal_photons=1e4)
    image = MemoryImage.random(1000, seed=3)
    result = read_memory(image, ExperimentConfig(pair=pair, frames_per_set=1000))
    assert result.errors == 0 and result.ber == 0.0
    assert result.decoded == image.bits
    assert result.information_per_cell == pytest.approx(1.0)
    assert result.ber_ci[0] == 0.0 and 0.0 < result.ber_ci[1] < 0.01


def test_read_indistinguishable_cells():
    pair = ChannelPair(0.9, 0.9, mean_signal_photons=1e4)
    image = MemoryImage.random(1000, seed=3)
    result = read_memory(image, ExperimentConfig(pair=pair, frames_per_set=1000))
    assert result.ber == pytest.approx(sum(image.bits) / 1000)
    assert result.ber == pytest.approx(0.5, abs=0.05)
    assert result.ber_ci[0] < result.ber < result.ber_ci[1]


def test_read_error_rate_tracks_the_experiment(twin_beam_pair):
    cfg = ExperimentConfig(pair=twin_beam_pair, frames_per_set=10000, seed=2026)
    image = MemoryImage.random(2000, seed=5)
    result = read_memory(image, cfg)
    report = run_experiment(cfg)
    p = report.p_err_quantum
    tolerance = 3 * math.sqrt(p * (1 - p) / 2000 + report.sigma_p_err_quantum**2)
    assert result.ber == pytest.approx(p, abs=tolerance)
    assert set(result.to_dict()) == {"bits", "decoded", "errors", "ber", "ber_ci", "information_per_cell"}
