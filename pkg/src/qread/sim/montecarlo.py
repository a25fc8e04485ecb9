from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from qread.decide.discriminate import ChannelPair
from qread.decide.models import gaussian_likelihood_model
from qread.sim.frames import NO_TRUTH, FrameRecord, FrameSet
from qread.sim.streams import ARM_IDLER, ARM_PAIR, ARM_SIGNAL, FrameStream, stream_key
from qread.utils.errors import ParameterError, RuntimeGuard

logger = logging.getLogger(__name__)

TRANSMITTERS = ("tmsv", "coherent")
SAMPLINGS = ("exact-pair", "gaussian")
# frame generators that add no clamping (calibration frames keep negative readings)
_UNCLAMPED = ("dark", "shutter")


@dataclass(frozen=True)
class SimConfig:
    pair: ChannelPair
    transmitter: str = "tmsv"
    frames_per_set: int = 10000
    rng_seed: int = 0
    sampling: str = "exact-pair"
    modes: Optional[int] = None
    workers: int = 1
    max_exact_pair_photons: float = 1e7
    chunk_size: int = 1000
    # prefix of every stream name; separates otherwise identical runs
    stream_tag: str = ""

    def __post_init__(self) -> None:
        if self.transmitter not in TRANSMITTERS:
            raise ParameterError(f"transmitter must be one of {TRANSMITTERS}, got {self.transmitter!r}")
        if self.sampling not in SAMPLINGS:
            raise ParameterError(f"sampling must be one of {SAMPLINGS}, got {self.sampling!r}")
        if self.frames_per_set < 1:
            raise ParameterError("frames_per_set must be >= 1")
        if self.modes is not None and self.modes < 1:
            raise ParameterError("modes must be >= 1")
        if self.workers < 1 or self.chunk_size < 1:
            raise ParameterError("workers and chunk_size must be >= 1")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ParameterError("rng_seed must be an unsigned 64-bit integer")


def _check_cost(cfg: SimConfig) -> None:
    N = cfg.pair.mean_signal_photons
    if cfg.sampling == "exact-pair" and N > cfg.max_exact_pair_photons:
        raise RuntimeGuard(
            f"exact-pair sampling at N={N:g} exceeds max_exact_pair_photons={cfg.max_exact_pair_photons:g}; "
            "use sampling=gaussian"
        )


def _pair_count(rng: np.random.Generator, N: float, modes: Optional[int]) -> int:
    if modes is None or N == 0:
        return int(rng.poisson(N))
    return int(rng.negative_binomial(modes, modes / (modes + N)))


def _arm(rng: np.random.Generator, pairs: int, p: float, straylight: float, noise_sd: float) -> float:
    """Thinned pairs plus straylight plus read noise, drawn in that order."""
    return float(rng.binomial(pairs, p) + rng.poisson(straylight) + rng.normal(0.0, noise_sd))


def _draw(
    cfg: SimConfig, kind: str, truth: int, stream: FrameStream, plan: Optional[dict] = None
) -> Tuple[float, float]:
    pair = cfg.pair
    N = pair.mean_signal_photons
    sd = math.sqrt(pair.electronic_variance)
    s_sig, s_idl = pair.straylight_mean, pair.idler_straylight
    if kind == "shutter":
        return (
            float(stream.generator(ARM_SIGNAL).normal(0.0, sd)),
            float(stream.generator(ARM_IDLER).normal(0.0, sd)),
        )
    if kind == "dark":
        return (
            _arm(stream.generator(ARM_SIGNAL), 0, 0.0, s_sig, sd),
            _arm(stream.generator(ARM_IDLER), 0, 0.0, s_idl, sd),
        )
    a = pair.signal_transmittance(truth)
    if cfg.sampling == "gaussian" and kind == "transmitter":
        mean, root = (plan or _gaussian_plan(cfg))[truth]
        x = mean + root @ stream.generator(ARM_PAIR).standard_normal(2)
        return float(x[0]), float(x[1])
    if kind == "classical":
        g_s, g_i = stream.generator(ARM_SIGNAL), stream.generator(ARM_IDLER)
        n_s = float(g_s.poisson(a * N) + g_s.poisson(s_sig) + g_s.normal(0.0, sd))
        n_i = float(g_i.poisson(pair.eta_i * N) + g_i.poisson(s_idl) + g_i.normal(0.0, sd))
        return n_s, n_i
    if cfg.transmitter == "coherent":
        g_s = stream.generator(ARM_SIGNAL)
        return float(g_s.poisson(a * N) + g_s.poisson(s_sig) + g_s.normal(0.0, sd)), 0.0
    pairs = _pair_count(stream.generator(ARM_PAIR), N, cfg.modes)
    n_s = _arm(stream.generator(ARM_SIGNAL), pairs, a, s_sig, sd)
    n_i = _arm(stream.generator(ARM_IDLER), pairs, pair.eta_i, s_idl, sd)
    return n_s, n_i


def _gaussian_plan(cfg: SimConfig) -> dict:
    """Mean and a square root of the covariance of each hypothesis."""
    plan = {}
    for truth in (0, 1):
        model = gaussian_likelihood_model(cfg.pair, truth, cfg.modes, transmitter=cfg.transmitter)
        cov = model.cov_array
        try:
            root = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            # singular for perfectly correlated or single-beam counts
            w, v = np.linalg.eigh(cov)
            root = v * np.sqrt(np.clip(w, 0.0, None))
        plan[truth] = (model.mean_array, root)
    return plan


def _stream_name(cfg: SimConfig, kind: str, truth: int, tag: str) -> str:
    name = kind if kind in _UNCLAMPED else f"{kind}:{cfg.transmitter}:{truth}"
    return "/".join(part for part in (cfg.stream_tag, tag, name) if part)


def _simulate_chunk(
    cfg: SimConfig,
    kind: str,
    key_by_truth: dict,
    plan: Optional[dict],
    truths: np.ndarray,
    frame_ids: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    out = np.empty((truths.size, 2))
    for row, (truth, frame_id) in enumerate(zip(truths, frame_ids)):
        stream = FrameStream(key_by_truth[int(truth)], int(frame_id))
        out[row] = _draw(cfg, kind, int(truth), stream, plan)
    return out[:, 0], out[:, 1]


def simulate_frames(
    cfg: SimConfig,
    truths: Sequence[int],
    frame_ids: Optional[Sequence[int]] = None,
    kind: str = "transmitter",
    tag: str = "",
) -> FrameSet:
    """Generate one frame per truth value; each frame draws from its own (seed, frame_id, arm) substream.

    ``kind`` is ``transmitter`` (the configured source), ``classical``,
    ``dark`` or ``shutter``.
    """
    truths = np.asarray(truths, dtype=np.int8)
    frame_ids = np.arange(truths.size) if frame_ids is None else np.asarray(frame_ids, dtype=np.int64)
    if kind not in _UNCLAMPED:
        _check_cost(cfg)
    keys = {t: stream_key(cfg.rng_seed, _stream_name(cfg, kind, t, tag)) for t in (NO_TRUTH, 0, 1)}
    plan = _gaussian_plan(cfg) if cfg.sampling == "gaussian" and kind == "transmitter" else None
    bounds = list(range(0, truths.size, cfg.chunk_size)) + [truths.size]
    chunks = [(truths[lo:hi], frame_ids[lo:hi]) for lo, hi in zip(bounds[:-1], bounds[1:])]
    if cfg.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(lambda c: _simulate_chunk(cfg, kind, keys, plan, *c), chunks))
    else:
        parts = [_simulate_chunk(cfg, kind, keys, plan, *c) for c in chunks]
    n_s = np.concatenate([p[0] for p in parts]) if parts else np.empty(0)
    n_i = np.concatenate([p[1] for p in parts]) if parts else np.empty(0)
    clamped = 0
    if kind not in _UNCLAMPED:
        negative = (n_s < 0) | (n_i < 0)
        clamped = int(np.count_nonzero(negative))
        if clamped:
            logger.debug("clamped %d of %d frames with negative counts", clamped, truths.size)
        n_s = np.maximum(n_s, 0.0)
        n_i = np.maximum(n_i, 0.0)
    return FrameSet(frame_ids, n_s, n_i, truths, clamped=clamped)


def simulate_frame(cfg: SimConfig, truth: int, stream: FrameStream) -> FrameRecord:
    _check_cost(cfg)
    n_s, n_i = _draw(cfg, "transmitter", truth, stream)
    return FrameRecord(stream.frame_id, max(n_s, 0.0), max(n_i, 0.0), truth)


def simulate_set(cfg: SimConfig, truth: int) -> FrameSet:
    logger.debug("simulating %d %s frames for tau%d", cfg.frames_per_set, cfg.transmitter, truth)
    return simulate_frames(cfg, np.full(cfg.frames_per_set, truth), kind="transmitter")


def classically_correlated_set(cfg: SimConfig, truth: int) -> FrameSet:
    """Independent Poisson arms with the TMSV means: no pair correlation."""
    return simulate_frames(cfg, np.full(cfg.frames_per_set, truth), kind="classical")


def simulate_dark_set(cfg: SimConfig, frames: Optional[int] = None) -> FrameSet:
    """Dark-region readings: straylight plus read noise, unclamped."""
    count = cfg.frames_per_set if frames is None else frames
    return simulate_frames(cfg, np.full(count, NO_TRUTH), kind="dark")


def simulate_shutter_set(cfg: SimConfig, frames: Optional[int] = None) -> FrameSet:
    """Shutter-closed readings: read noise only, unclamped."""
    count = cfg.frames_per_set if frames is None else frames
    return simulate_frames(cfg, np.full(count, NO_TRUTH), kind="shutter")
