import numpy as np
import pytest
from scipy import stats

from qread.stats.photon_stats import (
    JointCountPmf,
    LossChannel,
    PhotonDistribution,
    TmsvSource,
    apply_loss,
    binomial_kernel,
    compose_losses,
    pair_source_sampler_params,
    tmsv_joint_after_channels,
    tmsv_joint_ideal,
    total_variation_distance,
)
from qread.utils.errors import ParameterError


def _close(a: PhotonDistribution, b: PhotonDistribution, tol: float = 1e-9) -> bool:
    n = max(a.n_max, b.n_max)
    return bool(np.max(np.abs(a.padded(n) - b.padded(n))) < tol)


@pytest.mark.parametrize(
    "n, m, tau, expected",
    [(0, 1, 0.5, 0.5), (2, 2, 1.0, 1.0), (1, 3, 0.2, 0.384), (4, 3, 0.5, 0.0), (0, 0, 0.3, 1.0)],
)
def test_binomial_kernel_values(n, m, tau, expected):
    assert binomial_kernel(n, m, tau) == pytest.approx(expected, abs=1e-15)


def test_binomial_kernel_log_space_branch_matches_scipy():
    for n, m, tau in [(60, 150, 0.4), (0, 400, 0.01), (9000, 10000, 0.9), (5, 101, 1.0)]:
        assert binomial_kernel(n, m, tau) == pytest.approx(stats.binom.pmf(n, m, tau), rel=1e-9, abs=1e-300)


def test_fock_through_half_loss():
    out = apply_loss(PhotonDistribution.fock(1), LossChannel(0.5))
    np.testing.assert_allclose(out.pmf, [0.5, 0.5], atol=1e-15)


def test_poisson_thinning_closure():
    assert _close(apply_loss(PhotonDistribution.poisson(10.0), 0.5), PhotonDistribution.poisson(5.0))


@pytest.mark.parametrize("tau", [0.1, 0.5, 0.9])
def test_thermal_thinning_closure(tau):
    thinned = apply_loss(PhotonDistribution.thermal(1.0), tau)
    assert _close(thinned, PhotonDistribution.thermal(tau))


def test_loss_scales_the_mean_on_random_pmfs():
    rng = np.random.default_rng(0)
    for _ in range(100):
        dist = PhotonDistribution.from_weights(rng.random(int(rng.integers(1, 40))))
        for tau in np.linspace(0.0, 1.0, 11):
            assert apply_loss(dist, tau).mean() == pytest.approx(tau * dist.mean(), abs=1e-9)


@pytest.mark.parametrize(
    "dist",
    [
        PhotonDistribution.poisson(1e3),
        PhotonDistribution.thermal(50.0),
        PhotonDistribution.multithermal(200.0, 7),
        PhotonDistribution.poisson(0.0),
    ],
)
def test_constructors_are_normalized(dist):
    assert dist.pmf.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(dist.pmf >= 0)


def test_invalid_inputs_are_rejected():
    with pytest.raises(ParameterError):
        LossChannel(1.5)
    with pytest.raises(ParameterError):
        PhotonDistribution(np.array([0.5, 0.4]))
    with pytest.raises(ParameterError):
        PhotonDistribution(np.array([1.2, -0.2]))


def test_compose_losses_products():
    assert compose_losses(1.0, 0.78).tau == pytest.approx(0.78)
    assert compose_losses(0.99, 0.78).tau == pytest.approx(0.7722)


def test_composition_is_order_independent():
    dist = PhotonDistribution.thermal(3.0)
    a = apply_loss(apply_loss(dist, 0.99), 0.78)
    b = apply_loss(apply_loss(dist, 0.78), 0.99)
    c = apply_loss(dist, compose_losses(0.99, 0.78))
    assert _close(a, b) and _close(a, c)


def test_binomial_composition_identity():
    grid = np.round(np.arange(0.0, 1.01, 0.1), 10)
    for N in range(31):
        for tau in grid:
            for eta in grid:
                for n in range(N + 1):
                    chained = sum(binomial_kernel(m, N, tau) * binomial_kernel(n, m, eta) for m in range(N + 1))
                    assert abs(chained - binomial_kernel(n, N, tau * eta)) < 1e-12


def test_tmsv_ideal_vacuum_and_unit_mean():
    assert tmsv_joint_ideal(TmsvSource(0.0)).pmf.tolist() == [[1.0]]
    joint = tmsv_joint_ideal(TmsvSource(1.0))
    for n in range(10):
        assert joint.pmf[n, n] == pytest.approx(0.5 ** (n + 1), rel=1e-12)
    assert np.all(joint.pmf[~np.eye(joint.shape[0], dtype=bool)] == 0.0)
    assert _close(joint.signal_marginal(), PhotonDistribution.thermal(1.0))
    assert _close(joint.idler_marginal(), PhotonDistribution.thermal(1.0))


def test_tmsv_after_channels():
    src = TmsvSource(1.0)
    joint = tmsv_joint_after_channels(src, 0.5, 1.0)
    assert joint.pmf[0, 1] == pytest.approx(0.125, abs=1e-15)
    # idler-lossless case: P(n_S, n) = p(n) B(n_S | n, tau)
    p = PhotonDistribution.thermal(1.0)
    for n_s, n in [(0, 3), (2, 3), (3, 7)]:
        assert joint.pmf[n_s, n] == pytest.approx(p.pmf[n] * binomial_kernel(n_s, n, 0.5), rel=1e-12)
    lossless = tmsv_joint_after_channels(src, 1.0, 1.0)
    np.testing.assert_allclose(lossless.pmf, tmsv_joint_ideal(src).pmf, atol=1e-15)


def test_tmsv_marginals_factor_per_channel():
    src = TmsvSource(2.0)
    joint = tmsv_joint_after_channels(src, 0.6, 0.8)
    assert _close(joint.signal_marginal(), apply_loss(PhotonDistribution.thermal(2.0), 0.6))
    assert _close(joint.idler_marginal(), apply_loss(PhotonDistribution.thermal(2.0), 0.8))


def test_signal_only_joint_and_log_pmf():
    joint = JointCountPmf.signal_only(PhotonDistribution.poisson(2.0))
    assert joint.shape[1] == 1
    assert joint.log_pmf(1, 0) == pytest.approx(np.log(stats.poisson.pmf(1, 2.0)))
    assert np.isneginf(joint.log_pmf(1, 1))
    assert np.isneginf(joint.log_pmf(10_000, 0))


def test_pair_source_sampler_params():
    src = TmsvSource(mean_photons=1e-3, modes=10**8)
    assert pair_source_sampler_params(src, 0.0) == 0.0
    assert pair_source_sampler_params(src, 1.15e5) == 1.15e5
    with pytest.raises(ParameterError):
        pair_source_sampler_params(src, -1.0)


def test_multithermal_many_modes_is_nearly_poisson():
    multi = PhotonDistribution.multithermal(1e3, 10**6)
    assert total_variation_distance(multi, PhotonDistribution.poisson(1e3)) < 1e-3


def test_multithermal_variance():
    dist = PhotonDistribution.multithermal(100.0, 4)
    assert dist.mean() == pytest.approx(100.0, rel=1e-9)
    assert dist.variance() == pytest.approx(100.0 + 100.0**2 / 4, rel=1e-6)


def test_multithermal_takes_the_total_mean_over_all_modes():
    per_mode = TmsvSource(mean_photons=25.0, modes=4).pair_distribution()
    total = PhotonDistribution.multithermal(total_mean=100.0, modes=4)
    assert per_mode.mean() == pytest.approx(100.0, rel=1e-9)
    np.testing.assert_allclose(per_mode.pmf, total.pmf)
