"""Gait-cycle analysis: foot strikes, cycle normalization, and reference match.

Cycles run from one foot strike to the next strike of the same foot and are
resampled to ``P`` points over 0-100 % of the cycle. Joint angles are
reported in degrees with clinical signs (hip flexion, knee flexion and ankle
dorsiflexion positive); GRF is reported in body weights.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

N_POINTS = 100
CONTACT_THRESHOLD_BW = 0.05
DEBOUNCE_S = 0.1

SIGNALS = ("hip", "knee", "ankle", "grf")
# generalized-coordinate sign -> clinical sign
CLINICAL_SIGN = {"hip": 1.0, "knee": -1.0, "ankle": 1.0}


class GaitError(ValueError):
    pass


@dataclass
class Rollout:
    """Uniformly sampled time series of one walking episode."""

    dt: float
    joint_angles: dict[str, np.ndarray]  # rad, keyed by joint/dof name
    grf: dict[str, np.ndarray]  # N, keyed by foot label
    activations: np.ndarray  # (T, n_muscles)
    com_x: np.ndarray
    com_vx: np.ndarray
    body_weight: float
    legs: dict[str, dict[str, str]] = field(default_factory=dict)  # leg -> hip/knee/ankle/foot
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dt <= 0:
            raise GaitError("rollout dt must be positive")
        n = len(self.com_x)
        series = list(self.joint_angles.values()) + list(self.grf.values())
        series += [self.com_vx, self.activations]
        if any(len(s) != n for s in series):
            raise GaitError("all rollout series must have the same length")

    def __len__(self) -> int:
        return len(self.com_x)

    def signal(self, leg: str, name: str) -> np.ndarray:
        spec = self.legs[leg]
        if name == "grf":
            return np.asarray(self.grf[spec["foot"]]) / self.body_weight
        return np.degrees(np.asarray(self.joint_angles[spec[name]])) * CLINICAL_SIGN[name]


@dataclass
class GaitCycle:
    leg: str
    start: int
    end: int
    traces: dict[str, np.ndarray]

    def __post_init__(self):
        if self.end <= self.start:
            raise GaitError("cycle end must come after its start")


@dataclass
class ReferenceBand:
    mean: dict[str, np.ndarray]
    std: dict[str, np.ndarray]
    units: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        sizes = {len(v) for v in self.mean.values()} | {len(v) for v in self.std.values()}
        if len(sizes) > 1:
            raise GaitError("all reference signals must have the same number of points")
        if set(self.mean) != set(self.std):
            raise GaitError("reference mean and std must cover the same signals")
        for name, s in self.std.items():
            if np.any(np.asarray(s) < 0):
                raise GaitError(f"negative standard deviation for {name!r}")

    @property
    def n_points(self) -> int:
        return len(next(iter(self.mean.values())))


@dataclass
class MatchReport:
    match: dict[str, float]
    avg_effort: float
    distance: float
    n_cycles: int
    flags: list[str] = field(default_factory=list)

    @property
    def aggregate(self) -> float:
        vals = [v for v in self.match.values() if not math.isnan(v)]
        return float(np.mean(vals)) if vals else float("nan")

    def to_dict(self) -> dict:
        return {
            "match": self.match,
            "aggregate_match": self.aggregate,
            "avg_effort": self.avg_effort,
            "distance": self.distance,
            "n_cycles": self.n_cycles,
            "flags": self.flags,
        }


# --------------------------------------------------------------------------
# operations


def detect_foot_strikes(grf, dt: float, body_weight: float,
                        threshold_bw: float = CONTACT_THRESHOLD_BW,
                        debounce: float = DEBOUNCE_S) -> list[int]:
    """Sample indices where the GRF rises above the contact threshold.

    A crossing is an index ``i`` with ``grf[i-1] <= thr < grf[i]``. Crossings
    closer than ``debounce`` seconds to the previous accepted strike are
    ignored.
    """
    g = np.asarray(grf, dtype=float)
    thr = threshold_bw * body_weight
    above = g > thr
    rising = np.flatnonzero(~above[:-1] & above[1:]) + 1
    gap = int(round(debounce / dt))
    strikes: list[int] = []
    for i in rising:
        if not strikes or i - strikes[-1] >= gap:
            strikes.append(int(i))
    return strikes


def rollout_strikes(rollout: Rollout, leg: str, **kw) -> list[int]:
    foot = rollout.legs[leg]["foot"]
    return detect_foot_strikes(rollout.grf[foot], rollout.dt, rollout.body_weight, **kw)


def resample(signal, start: int, end: int, n_points: int = N_POINTS) -> np.ndarray:
    """Linear interpolation of ``signal[start..end]`` at ``n_points`` evenly
    spaced cycle fractions from 0 to 1 inclusive."""
    s = np.asarray(signal, dtype=float)
    pos = start + np.linspace(0.0, 1.0, n_points) * (end - start)
    return np.interp(pos, np.arange(len(s)), s)


def segment_and_normalize(signals: dict[str, np.ndarray], strikes: list[int], leg: str = "",
                          n_points: int = N_POINTS) -> list[GaitCycle]:
    """One cycle per consecutive pair of strikes; fewer than two strikes -> []."""
    cycles = []
    for start, end in zip(strikes[:-1], strikes[1:]):
        traces = {k: resample(v, start, end, n_points) for k, v in signals.items()}
        cycles.append(GaitCycle(leg, start, end, traces))
    return cycles


def rollout_cycles(rollout: Rollout, n_points: int = N_POINTS) -> list[GaitCycle]:
    cycles = []
    for leg in rollout.legs:
        signals = {name: rollout.signal(leg, name) for name in SIGNALS}
        cycles += segment_and_normalize(signals, rollout_strikes(rollout, leg), leg, n_points)
    return cycles


def average_cycles(cycles: list[GaitCycle]) -> dict[str, np.ndarray]:
    """Pointwise mean across all cycles (both legs pooled)."""
    if not cycles:
        raise GaitError("cannot average an empty list of cycles")
    names = cycles[0].traces.keys()
    return {k: np.mean([c.traces[k] for c in cycles], axis=0) for k in names}


def experimental_match(trace, band_mean, band_std) -> float:
    """Fraction of points where ``|trace - mean| <= std`` (edges count as inside)."""
    trace = np.asarray(trace, dtype=float)
    band_mean = np.asarray(band_mean, dtype=float)
    band_std = np.asarray(band_std, dtype=float)
    if not (trace.shape == band_mean.shape == band_std.shape):
        raise GaitError(
            f"point count mismatch: trace {trace.shape}, band {band_mean.shape}/{band_std.shape}"
        )
    return float(np.mean(np.abs(trace - band_mean) <= band_std))


def match_all(mean_traces: dict[str, np.ndarray], band: ReferenceBand) -> dict[str, float]:
    return {
        name: experimental_match(mean_traces[name], band.mean[name], band.std[name])
        for name in band.mean
        if name in mean_traces
    }


def summary_metrics(rollout: Rollout) -> tuple[float, float]:
    """(time-and-muscle mean of a^3, final minus initial COM x)."""
    if len(rollout) == 0:
        raise GaitError("empty rollout")
    a = np.asarray(rollout.activations, dtype=float)
    effort = float(np.mean(a**3)) if a.size else 0.0
    return effort, float(rollout.com_x[-1] - rollout.com_x[0])


def analyze(rollouts: list[Rollout], band: ReferenceBand | None = None,
            n_points: int | None = None) -> tuple[MatchReport, dict[str, np.ndarray] | None]:
    """Pool cycles across rollouts (each cycle weighs equally) and score them."""
    n_points = n_points or (band.n_points if band else N_POINTS)
    cycles: list[GaitCycle] = []
    efforts, distances = [], []
    for r in rollouts:
        cycles += rollout_cycles(r, n_points)
        e, d = summary_metrics(r)
        efforts.append(e)
        distances.append(d)
    flags = []
    mean_traces = None
    if cycles:
        mean_traces = average_cycles(cycles)
        match = match_all(mean_traces, band) if band else {}
    else:
        flags.append("no cycles")
        match = {name: float("nan") for name in (band.mean if band else ())}
    report = MatchReport(match=match, avg_effort=float(np.mean(efforts)),
                         distance=float(np.mean(distances)), n_cycles=len(cycles), flags=flags)
    return report, mean_traces


# --------------------------------------------------------------------------
# file formats


def read_reference_band(path) -> ReferenceBand:
    """CSV with header ``signal,percent,mean,std`` (rows sorted by percent)."""
    rows: dict[str, list[tuple[float, float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        missing = {"signal", "percent", "mean", "std"} - set(reader.fieldnames or [])
        if missing:
            raise GaitError(f"reference band file lacks columns {sorted(missing)}")
        for row in reader:
            rows.setdefault(row["signal"], []).append(
                (float(row["percent"]), float(row["mean"]), float(row["std"]))
            )
    mean, std = {}, {}
    for name, vals in rows.items():
        vals.sort()
        mean[name] = np.array([v[1] for v in vals])
        std[name] = np.array([v[2] for v in vals])
    units = {n: ("BW" if n == "grf" else "deg") for n in mean}
    return ReferenceBand(mean, std, units)


def write_reference_band(band: ReferenceBand, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["signal", "percent", "mean", "std"])
        for name in band.mean:
            pct = np.linspace(0.0, 100.0, band.n_points)
            for p, m, s in zip(pct, band.mean[name], band.std[name]):
                w.writerow([name, repr(float(p)), repr(float(m)), repr(float(s))])


def rollout_columns(dof_names, muscle_names, feet) -> list[str]:
    return (["t"] + [f"q_{d}" for d in dof_names] + [f"qdot_{d}" for d in dof_names]
            + [f"a_{m}" for m in muscle_names] + [f"u_{m}" for m in muscle_names]
            + [f"grf_{f}" for f in sorted(feet)] + ["com_x", "com_vx"])


def write_rollout_csv(path, columns: list[str], rows, meta: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# meta={json.dumps(meta, sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def read_rollout_csv(path) -> Rollout:
    path = Path(path)
    meta: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# meta="):
            meta = json.loads(line[len("# meta="):])
        elif not line.startswith("#") and line.strip():
            body.append(line)
    if not body:
        raise GaitError(f"{path}: no data")
    header = body[0].split(",")
    data = np.array([[float(v) for v in row.split(",")] for row in body[1:]]).reshape(
        -1, len(header))
    col = {name: data[:, i] for i, name in enumerate(header)}
    for needed in ("t", "com_x", "com_vx"):
        if needed not in col:
            raise GaitError(f"{path}: missing column {needed!r}")
    legs = meta.get("legs", {})
    if not legs:
        raise GaitError(f"{path}: header lacks the leg map")
    if "body_weight" not in meta:
        raise GaitError(f"{path}: header lacks the body weight")
    for leg, spec in legs.items():
        for key in ("hip", "knee", "ankle"):
            if f"q_{spec[key]}" not in col:
                raise GaitError(f"{path}: missing signal q_{spec[key]}")
        if f"grf_{spec['foot']}" not in col:
            raise GaitError(f"{path}: missing signal grf_{spec['foot']}")
    t = col["t"]
    dt = float(meta.get("dt", t[1] - t[0] if len(t) > 1 else 0.01))
    return Rollout(
        dt=dt,
        joint_angles={k[2:]: v for k, v in col.items() if k.startswith("q_")},
        grf={k[4:]: v for k, v in col.items() if k.startswith("grf_")},
        activations=np.stack([v for k, v in col.items() if k.startswith("a_")], axis=1)
        if any(k.startswith("a_") for k in col) else np.zeros((len(t), 0)),
        com_x=col["com_x"],
        com_vx=col["com_vx"],
        body_weight=float(meta["body_weight"]),
        legs=legs,
        meta=meta,
    )
