from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence

import pandas as pd

from qread.calib.klyshko import CalibrationResult
from qread.pipeline.experiment import ReadResult, SweepRow
from qread.sim.frames import COLUMNS, NO_TRUTH, FrameSet
from qread.utils.errors import ParameterError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
FORMATS = ("csv", "json")
GAIN_COLUMNS = ["tau0", "N", "p_err_q", "p_err_cla_pc", "c_bound", "g_a", "g_a_sigma", "g_emp", "g_emp_sigma"]
THEORY_COLUMNS = ["tau0", "N", "p_err_q", "p_err_cla_pc", "c_bound", "g_a", "g_emp"]
BOUNDS_COLUMNS = ["N", "c_bound", "p_err_cla_pc"]


def _check_format(fmt: str) -> None:
    if fmt not in FORMATS:
        raise ParameterError(f"output format must be one of {FORMATS}, got {fmt!r}")


class OutputWriter:
    """Writes run artifacts under one output directory and remembers what it wrote."""

    def __init__(self, output_root: str | Path) -> None:
        self.output_root = Path(output_root)
        self.written: List[Path] = []

    def _path(self, name: str) -> Path:
        self.output_root.mkdir(parents=True, exist_ok=True)
        path = self.output_root / name
        self.written.append(path)
        return path

    def _write_json(self, name: str, payload: Any) -> Path:
        path = self._path(name)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, ensure_ascii=False, indent=2)
            f.write("\n")
        return path

    def _write_table(self, stem: str, df: pd.DataFrame, fmt: str) -> Path:
        _check_format(fmt)
        if fmt == "csv":
            path = self._path(f"{stem}.csv")
            df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
            return path
        return self._write_json(f"{stem}.json", df.to_dict(orient="records"))

    def write_frames(self, frames: FrameSet, stem: str, fmt: str = "csv") -> Path:
        """CSV (``truth`` NA when unlabeled) or JSON lines (``truth`` null)."""
        _check_format(fmt)
        if fmt == "csv":
            path = self._path(f"{stem}.csv")
            frames.to_frame().to_csv(
                path, index=False, float_format=FLOAT_FORMAT, na_rep="NA", lineterminator="\n"
            )
            return path
        path = self._path(f"{stem}.jsonl")
        with open(path, "w", encoding="utf-8") as f:
            for record in frames.records():
                f.write(json.dumps(dict(zip(COLUMNS, (record.frame_id, record.n_s, record.n_i, record.truth)))))
                f.write("\n")
        return path

    def write_calibration(self, result: CalibrationResult, name: str = "calibration.json") -> Path:
        return self._write_json(name, result.to_dict())

    def write_gain_table(self, rows: Sequence[SweepRow], fmt: str = "csv") -> List[Path]:
        measured = pd.DataFrame(
            [
                [
                    row.tau0,
                    row.n,
                    row.report.p_err_quantum,
                    row.report.p_err_classical_pc,
                    row.report.c_bound,
                    row.report.gain_a,
                    row.report.sigma_gain_a,
                    row.report.gain_emp,
                    row.report.sigma_gain_emp,
                ]
                for row in rows
            ],
            columns=GAIN_COLUMNS,
        )
        theory = pd.DataFrame(
            [
                [
                    row.tau0,
                    row.n,
                    row.theory.p_err_quantum,
                    row.theory.p_err_classical_pc,
                    row.theory.c_bound,
                    row.theory.gain_a,
                    row.theory.gain_emp,
                ]
                for row in rows
            ],
            columns=THEORY_COLUMNS,
        )
        return [self._write_table("gains", measured, fmt), self._write_table("theory", theory, fmt)]

    def write_bounds(self, table: pd.DataFrame, fmt: str = "csv") -> Path:
        return self._write_table("bounds", table[BOUNDS_COLUMNS], fmt)

    def write_read_result(self, result: ReadResult, name: str = "read.json") -> Path:
        return self._write_json(name, result.to_dict())


def read_frames(path: str | Path) -> FrameSet:
    """Load a frame file written by :class:`OutputWriter` or by external acquisition."""
    path = Path(path)
    if path.suffix == ".csv":
        df = pd.read_csv(path, na_values=["NA"], keep_default_na=False, float_precision="round_trip")
        return FrameSet.from_frame(df)
    if path.suffix in (".jsonl", ".json"):
        records: List[Dict[str, Any]] = []
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    records.append(json.loads(line))
        truth = [NO_TRUTH if r.get("truth") is None else int(r["truth"]) for r in records]
        return FrameSet(
            frame_id=[r["frame_id"] for r in records],
            n_s=[r["n_s"] for r in records],
            n_i=[r["n_i"] for r in records],
            truth=truth,
        )
    raise ParameterError(f"unsupported frame file {path.name}; expected .csv or .jsonl")
