from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

ARM_PAIR = 0
ARM_SIGNAL = 1
ARM_IDLER = 2

_MASK64 = (1 << 64) - 1


def stream_key(seed: int, name: str) -> int:
    """128-bit Philox key: hashed stream name in the high word, the run seed in the low word."""
    digest = hashlib.sha256(name.encode("utf-8")).hexdigest()
    return (int(digest[:16], 16) << 64) | (int(seed) & _MASK64)


@dataclass(frozen=True)
class FrameStream:
    """Counter-based substreams of one frame, one per arm."""

    key: int
    frame_id: int

    def generator(self, arm: int) -> np.random.Generator:
        counter = ((self.frame_id & _MASK64) << 192) | (arm << 128)
        return np.random.Generator(np.random.Philox(key=self.key, counter=counter))


def frame_stream(seed: int, name: str, frame_id: int) -> FrameStream:
    return FrameStream(stream_key(seed, name), frame_id)
