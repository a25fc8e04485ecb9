from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Optional

import numpy as np
import pandas as pd

from qread.utils.errors import ParameterError

NO_TRUTH = -1
COLUMNS = ["frame_id", "n_s", "n_i", "truth"]


@dataclass(frozen=True)
class FrameRecord:
    frame_id: int
    n_s: float
    n_i: float
    truth: Optional[int] = None


@dataclass(eq=False)
class FrameSet:
    """Column store of integrated (n_S, n_I) counts; truth -1 marks unlabeled frames."""

    frame_id: np.ndarray
    n_s: np.ndarray
    n_i: np.ndarray
    truth: np.ndarray
    clamped: int = field(default=0)

    def __post_init__(self) -> None:
        self.frame_id = np.asarray(self.frame_id, dtype=np.int64)
        self.n_s = np.asarray(self.n_s, dtype=float)
        self.n_i = np.asarray(self.n_i, dtype=float)
        self.truth = np.asarray(self.truth, dtype=np.int8)
        sizes = {a.shape for a in (self.frame_id, self.n_s, self.n_i, self.truth)}
        if len(sizes) != 1 or self.frame_id.ndim != 1:
            raise ParameterError("FrameSet columns must be 1-D arrays of equal length")
        if np.any((self.truth != NO_TRUTH) & (self.truth != 0) & (self.truth != 1)):
            raise ParameterError("truth must be 0, 1 or unlabeled")

    def __len__(self) -> int:
        return int(self.frame_id.size)

    @property
    def labeled(self) -> bool:
        return len(self) > 0 and bool(np.all(self.truth != NO_TRUTH))

    @classmethod
    def unlabeled(cls, frame_id, n_s, n_i) -> "FrameSet":
        n_s = np.asarray(n_s, dtype=float)
        return cls(frame_id, n_s, n_i, np.full(n_s.shape, NO_TRUTH, dtype=np.int8))

    @classmethod
    def from_records(cls, records: Iterable[FrameRecord]) -> "FrameSet":
        records = list(records)
        return cls(
            frame_id=[r.frame_id for r in records],
            n_s=[r.n_s for r in records],
            n_i=[r.n_i for r in records],
            truth=[NO_TRUTH if r.truth is None else r.truth for r in records],
        )

    @classmethod
    def concat(cls, sets: Iterable["FrameSet"]) -> "FrameSet":
        sets = list(sets)
        return cls(
            frame_id=np.concatenate([s.frame_id for s in sets]),
            n_s=np.concatenate([s.n_s for s in sets]),
            n_i=np.concatenate([s.n_i for s in sets]),
            truth=np.concatenate([s.truth for s in sets]),
            clamped=sum(s.clamped for s in sets),
        )

    def take(self, index) -> "FrameSet":
        return FrameSet(self.frame_id[index], self.n_s[index], self.n_i[index], self.truth[index])

    def split(self, parts: int) -> List["FrameSet"]:
        """Consecutive, near-equal subsets."""
        if parts < 1 or parts > len(self):
            raise ParameterError(f"cannot split {len(self)} frames into {parts} subsets")
        return [self.take(idx) for idx in np.array_split(np.arange(len(self)), parts)]

    def records(self) -> List[FrameRecord]:
        return [
            FrameRecord(int(f), float(s), float(i), None if t == NO_TRUTH else int(t))
            for f, s, i, t in zip(self.frame_id, self.n_s, self.n_i, self.truth)
        ]

    def to_frame(self) -> pd.DataFrame:
        truth = pd.array(np.where(self.truth == NO_TRUTH, None, self.truth).tolist(), dtype="Int8")
        return pd.DataFrame({"frame_id": self.frame_id, "n_s": self.n_s, "n_i": self.n_i, "truth": truth})

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "FrameSet":
        missing = [c for c in COLUMNS if c not in df.columns]
        if missing:
            raise ParameterError(f"frame table is missing columns {missing}")
        truth = df["truth"].astype("Int8").fillna(NO_TRUTH).to_numpy(dtype=np.int8)
        return cls(
            frame_id=df["frame_id"].to_numpy(dtype=np.int64),
            n_s=df["n_s"].to_numpy(dtype=float),
            n_i=df["n_i"].to_numpy(dtype=float),
            truth=truth,
        )
