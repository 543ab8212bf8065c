"""Depth-map error metrics and the SBR/ppp robustness sweep."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, TextIO

import numpy as np

from .errors import DimensionMismatch, EmptyMask
from .types import DepthMap

CSV_HEADER = ("sbr", "ppp", "rmse_m", "pct_3cm", "pct_5cm")


def _as_array(d) -> np.ndarray:
    return d.depth_m if isinstance(d, DepthMap) else np.asarray(d, dtype=np.float64)


def _masked_errors(d, d_ref, mask=None, border: int = 0) -> np.ndarray:
    a, b = _as_array(d), _as_array(d_ref)
    if a.shape != b.shape:
        raise DimensionMismatch(f"depth maps differ in shape: {a.shape} vs {b.shape}")
    m = np.ones(a.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != a.shape:
        raise DimensionMismatch(f"mask shape {m.shape} differs from depth shape {a.shape}")
    if border > 0:
        m = m.copy()
        m[:border] = m[-border:] = False
        m[:, :border] = m[:, -border:] = False
    if not m.any():
        raise EmptyMask("no pixels selected")
    return a[m] - b[m]


def rmse(d, d_ref, mask=None, border: int = 0) -> float:
    """Root mean square depth error (meters) over the masked pixels."""
    e = _masked_errors(d, d_ref, mask, border)
    return float(np.sqrt(np.mean(e * e)))


def pct_correct(d, d_ref, threshold_m: float, mask=None, border: int = 0) -> float:
    """Percentage of pixels whose absolute error is strictly below ``threshold_m``."""
    if not threshold_m > 0:
        raise ValueError("threshold must be positive")
    e = _masked_errors(d, d_ref, mask, border)
    return 100.0 * float(np.count_nonzero(np.abs(e) < threshold_m)) / e.size


def score(depths: Sequence, refs: Sequence, border: int = 0) -> dict:
    """Pooled metrics over a sequence of depth maps."""
    errs = np.concatenate([_masked_errors(d, r, border=border) for d, r in zip(depths, refs)])
    return {
        "rmse_m": float(np.sqrt(np.mean(errs * errs))),
        "pct_3cm": 100.0 * float(np.count_nonzero(np.abs(errs) < 0.03)) / errs.size,
        "pct_5cm": 100.0 * float(np.count_nonzero(np.abs(errs) < 0.05)) / errs.size,
    }


def format_row(row: dict) -> list[str]:
    return [repr(float(row[k])) for k in CSV_HEADER]


def write_csv(rows: Iterable[dict], stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow(format_row(row))


def rows_to_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


@dataclass
class SweepSetup:
    """Everything needed to score one grid cell besides ``(sbr, ppp)``.

    ``reconstruct(sequence)`` returns the HR depth maps for a simulated
    sequence; ``simulate(sbr, ppp)`` produces that sequence.
    """

    simulate: Callable
    reconstruct: Callable
    border: int = 0
    extra: dict = field(default_factory=dict)


def sweep_grid(setup: SweepSetup, sbr_list: Sequence[float], ppp_list: Sequence[float],
               out: TextIO | None = None) -> list[dict]:
    """Simulate, reconstruct and score every ``(sbr, ppp)`` cell, SBR-major.

    When ``out`` is given each row is written and flushed as soon as it is
    computed, so an interrupted sweep leaves a valid partial CSV.
    """
    if not sbr_list or not ppp_list:
        raise ValueError("sweep lists must be nonempty")
    writer = None
    if out is not None:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        out.flush()
    rows = []
    for sbr in sbr_list:
        for ppp in ppp_list:
            seq = setup.simulate(sbr, ppp)
            depths = setup.reconstruct(seq)
            row = {"sbr": float(sbr), "ppp": float(ppp), **score(depths, seq.depths, setup.border)}
            if not all(math.isfinite(row[k]) for k in CSV_HEADER):
                raise FloatingPointError(f"non-finite metrics at sbr={sbr}, ppp={ppp}")
            rows.append(row)
            if writer is not None:
                writer.writerow(format_row(row))
                out.flush()
    return rows
