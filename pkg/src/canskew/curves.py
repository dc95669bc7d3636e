"""Attack-success-probability curves over a delta-T (or mistiming) grid."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

__all__ = ["SuccessCurve"]


@dataclass(frozen=True, eq=False)
class SuccessCurve:
    grid: np.ndarray          # seconds
    p_success: np.ndarray     # probabilities in [0, 1]
    trials: int = 0           # 0 for model-predicted curves
    horizon: int = 0          # attack batches n (0 if not applicable)
    source: str = "EXPERIMENTAL"  # EXPERIMENTAL or PREDICTED

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        p = np.asarray(self.p_success, dtype=np.float64)
        if grid.shape != p.shape or grid.ndim != 1:
            raise ValueError("grid and p_success must be 1-d arrays of equal length")
        if np.any((p < 0.0) | (p > 1.0)):
            raise ValueError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "p_success", p)

    def to_csv(self):
        buf = io.StringIO(newline="")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["delta_t_seconds", "p_success"])
        for x, p in zip(self.grid, self.p_success):
            writer.writerow([f"{x:.12g}", f"{p:.12g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, trials=0, horizon=0, source="EXPERIMENTAL"):
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or header[:2] != ["delta_t_seconds", "p_success"]:
            raise ValueError("expected header 'delta_t_seconds,p_success'")
        grid, p = [], []
        for row in reader:
            if not row:
                continue
            grid.append(float(row[0]))
            p.append(float(row[1]))
        return cls(grid=np.array(grid), p_success=np.array(p), trials=trials, horizon=horizon, source=source)
