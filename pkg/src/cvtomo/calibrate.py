"""Raw two-channel voltage traces to calibrated quadrature datasets.

Pipeline: group-of-four block averaging on a fixed 250-sample spacing (100 ns
at 2.5 GS/s), shot-noise statistics from vacuum traces, voltage-to-quadrature
normalization so a vacuum input has mean 0 and variance 1/2 per channel, and
LO-phase assignment from the sawtooth sync markers (linear 0..2pi between
consecutive edges).

Block alignment starts at the first sync edge plus the per-channel delay
offset; the first and last complete blocks are dropped (a 2e6-sample record
therefore yields 7998 points). Points outside complete ramps are dropped and
counted in the dataset metadata.

Trace files are oscilloscope-agnostic: a JSON header (sample_rate,
delay_mismatch, sync_edges, channel file names) plus one little-endian
float32 binary file per channel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .measurement import QuadratureDataset

__all__ = [
    "RawTrace",
    "CalibrationRecord",
    "LinearFit",
    "block_average",
    "shot_noise_stats",
    "fit_shot_noise",
    "normalize_quadratures",
    "assign_phases",
    "PhaseAssignment",
    "noise_ratio",
    "ingest_trace",
    "edges_from_square_wave",
    "save_trace",
    "load_trace",
]

BLOCK_SPACING = 250
BLOCK_GROUP = 4
R2_LINEAR_FLAG = 0.995


@dataclass
class RawTrace:
    """Two synchronized voltage channels with sync markers.

    ``sync_edges`` are ascending sample indices of ramp boundaries; a record
    spanning n complete ramps carries n + 1 edges (the last one closes the
    final ramp). ``delay_mismatch`` shifts channel 2 block positions by the
    pre-calibrated electronic delay, in samples.
    """

    sample_rate: float
    channels: tuple[np.ndarray, np.ndarray]
    sync_edges: np.ndarray
    delay_mismatch: int = 0

    def __post_init__(self):
        ch1 = np.asarray(self.channels[0], dtype=float)
        ch2 = np.asarray(self.channels[1], dtype=float)
        if ch1.size != ch2.size:
            raise ValueError("channels must have equal length")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")
        self.channels = (ch1, ch2)
        self.sync_edges = np.asarray(self.sync_edges, dtype=np.int64)

    def __len__(self) -> int:
        return self.channels[0].size


@dataclass
class LinearFit:
    slope: float
    intercept: float
    r_squared: float

    @property
    def linear(self) -> bool:
        """False flags departure from the linear operating range."""
        return self.r_squared >= R2_LINEAR_FLAG


@dataclass
class CalibrationRecord:
    """Shot-noise statistics for one LO power, plus optional sweep fit."""

    lo_power_mw: float
    sn_mean: tuple[float, float]
    sn_var: tuple[float, float]
    electronics_var: tuple[float, float] | None = None
    fit: tuple[LinearFit, LinearFit] | None = None

    def to_json(self) -> dict:
        obj = {
            "lo_power_mw": self.lo_power_mw,
            "sn_mean": list(self.sn_mean),
            "sn_var": list(self.sn_var),
        }
        if self.electronics_var is not None:
            obj["electronics_var"] = list(self.electronics_var)
        if self.fit is not None:
            obj["fit"] = [
                {"slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared}
                for f in self.fit
            ]
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "CalibrationRecord":
        fit = None
        if "fit" in obj:
            fit = tuple(
                LinearFit(f["slope"], f["intercept"], f["r_squared"]) for f in obj["fit"]
            )
        ev = tuple(obj["electronics_var"]) if "electronics_var" in obj else None
        return cls(
            lo_power_mw=float(obj["lo_power_mw"]),
            sn_mean=tuple(obj["sn_mean"]),
            sn_var=tuple(obj["sn_var"]),
            electronics_var=ev,
            fit=fit,
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "CalibrationRecord":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _block_positions(trace: RawTrace, spacing: int, group: int) -> np.ndarray:
    n = len(trace)
    start = int(trace.sync_edges[0]) if trace.sync_edges.size else 0
    delay = int(trace.delay_mismatch)
    positions = np.arange(start, n, spacing, dtype=np.int64)
    ok = (positions + group <= n) & (positions + delay >= 0) & (positions + delay + group <= n)
    positions = positions[ok]
    if positions.size < 1:
        raise ValueError("trace too short for a single block")
    return positions


def block_average(
    trace: RawTrace, spacing: int = BLOCK_SPACING, group: int = BLOCK_GROUP, drop_edges: bool = True
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Average groups of ``group`` adjacent samples every ``spacing`` samples.

    Returns (avg_ch1, avg_ch2, positions); positions are channel-1 block
    start indices, channel 2 is read at position + delay_mismatch. With
    ``drop_edges`` the first and last block are discarded.
    """
    positions = _block_positions(trace, spacing, group)
    if drop_edges:
        if positions.size < 3:
            raise ValueError("trace too short once edge blocks are dropped")
        positions = positions[1:-1]
    offs = np.arange(group)
    ch1, ch2 = trace.channels
    avg1 = ch1[positions[:, None] + offs].mean(axis=1)
    avg2 = ch2[(positions + trace.delay_mismatch)[:, None] + offs].mean(axis=1)
    return avg1, avg2, positions


def shot_noise_stats(
    vacuum_trace: RawTrace, spacing: int = BLOCK_SPACING, group: int = BLOCK_GROUP
) -> tuple[tuple[float, float], tuple[float, float]]:
    """Per-channel (mean, unbiased variance) of the block-averaged vacuum trace."""
    avg1, avg2, _ = block_average(vacuum_trace, spacing, group)
    var1 = float(avg1.var(ddof=1)) if avg1.size > 1 else 0.0
    var2 = float(avg2.var(ddof=1)) if avg2.size > 1 else 0.0
    return (float(avg1.mean()), var1), (float(avg2.mean()), var2)


def fit_shot_noise(records: Sequence[CalibrationRecord]) -> tuple[LinearFit, LinearFit]:
    """Least-squares line of shot-noise variance versus LO power, per channel."""
    if len(records) < 2:
        raise ValueError("need at least two LO powers to fit")
    powers = np.array([r.lo_power_mw for r in records], dtype=float)
    if np.ptp(powers) == 0:
        raise ValueError("all LO powers are equal")
    fits = []
    for ch in range(2):
        y = np.array([r.sn_var[ch] for r in records], dtype=float)
        slope, intercept = np.polyfit(powers, y, 1)
        resid = y - (slope * powers + intercept)
        ss_tot = float(((y - y.mean()) ** 2).sum())
        r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
        fits.append(LinearFit(float(slope), float(intercept), r2))
    return tuple(fits)


def normalize_quadratures(
    avg_ch1: np.ndarray, avg_ch2: np.ndarray, calibration: CalibrationRecord
) -> tuple[np.ndarray, np.ndarray]:
    """Voltages to quadratures: x = (V - SN_mean) sqrt((1/2) / SN_var) per channel."""
    out = []
    for avg, mean, var in zip(
        (avg_ch1, avg_ch2), calibration.sn_mean, calibration.sn_var
    ):
        if var <= 0:
            raise ValueError("shot-noise variance must be positive")
        out.append((np.asarray(avg, dtype=float) - mean) * np.sqrt(0.5 / var))
    return out[0], out[1]


@dataclass
class PhaseAssignment:
    theta: np.ndarray  # for kept points
    keep: np.ndarray  # boolean mask over input points
    sweeps: int
    dropped: int


def assign_phases(positions: np.ndarray, sync_edges: np.ndarray) -> PhaseAssignment:
    """Linear LO phase 0..2pi between consecutive sync edges.

    Points outside complete ramps (before the first or at/after the last
    edge) are dropped and counted.
    """
    edges = np.asarray(sync_edges, dtype=np.int64)
    if edges.size < 2:
        raise ValueError("need at least two sync edges to delimit a ramp")
    positions = np.asarray(positions, dtype=np.int64)
    idx = np.searchsorted(edges, positions, side="right") - 1
    keep = (idx >= 0) & (idx < edges.size - 1)
    i = idx[keep]
    start = edges[i].astype(float)
    width = (edges[i + 1] - edges[i]).astype(float)
    theta = 2.0 * np.pi * (positions[keep] - start) / width
    return PhaseAssignment(theta, keep, int(edges.size - 1), int((~keep).sum()))


def noise_ratio(calibration: CalibrationRecord) -> tuple[float, float]:
    """Shot-noise variance over electronics-noise variance, per channel."""
    if calibration.electronics_var is None:
        raise ValueError("calibration carries no electronics-noise variance")
    out = []
    for sn, el in zip(calibration.sn_var, calibration.electronics_var):
        if el <= 0:
            raise ValueError("electronics variance must be positive")
        out.append(sn / el)
    return tuple(out)


def ingest_trace(
    trace: RawTrace,
    calibration: CalibrationRecord,
    spacing: int = BLOCK_SPACING,
    group: int = BLOCK_GROUP,
) -> QuadratureDataset:
    """Full pipeline: block averages -> normalized quadratures -> phases."""
    avg1, avg2, positions = block_average(trace, spacing, group)
    x, p = normalize_quadratures(avg1, avg2, calibration)
    ph = assign_phases(positions, trace.sync_edges)
    meta = {
        "source_id": "ingest",
        "lo_power_mw": calibration.lo_power_mw,
        "sweeps": ph.sweeps,
        "dropped_points": ph.dropped,
        "sample_rate": trace.sample_rate,
    }
    return QuadratureDataset("heterodyne", ph.theta, x[ph.keep], p[ph.keep], meta)


def edges_from_square_wave(marker: np.ndarray, threshold: float | None = None) -> np.ndarray:
    """Rising-edge indices of a square-wave sync channel.

    If the trailing segment after the last rising edge spans one full period
    (within 1%), the record end is appended as a closing edge.
    """
    marker = np.asarray(marker, dtype=float)
    if threshold is None:
        threshold = 0.5 * (marker.min() + marker.max())
    high = marker > threshold
    edges = np.flatnonzero(high[1:] & ~high[:-1]) + 1
    if high[0]:
        edges = np.concatenate([[0], edges])
    if edges.size >= 2:
        period = np.median(np.diff(edges))
        if abs((marker.size - edges[-1]) - period) <= 0.01 * period:
            edges = np.concatenate([edges, [marker.size]])
    return edges.astype(np.int64)


def save_trace(trace: RawTrace, base_path) -> Path:
    """Write <base>.json header plus <base>.ch1.f32 / <base>.ch2.f32 binaries."""
    base = Path(base_path)
    header = {
        "sample_rate": trace.sample_rate,
        "delay_mismatch": int(trace.delay_mismatch),
        "sync_edges": [int(e) for e in trace.sync_edges],
        "channels": [base.name + ".ch1.f32", base.name + ".ch2.f32"],
    }
    for ch, name in zip(trace.channels, header["channels"]):
        np.asarray(ch, dtype="<f4").tofile(base.parent / name)
    path = base.with_suffix(".json")
    with open(path, "w") as fh:
        json.dump(header, fh, indent=1)
        fh.write("\n")
    return path


def load_trace(header_path) -> RawTrace:
    header_path = Path(header_path)
    with open(header_path) as fh:
        header = json.load(fh)
    chans = []
    for name in header["channels"]:
        chans.append(np.fromfile(header_path.parent / name, dtype="<f4").astype(float))
    return RawTrace(
        sample_rate=float(header["sample_rate"]),
        channels=(chans[0], chans[1]),
        sync_edges=np.asarray(header["sync_edges"], dtype=np.int64),
        delay_mismatch=int(header.get("delay_mismatch", 0)),
    )
