"""Piecewise-linear height-field terrains.

Terrains are immutable knot lists ``(x, y)``; the profile is extended flat
beyond both ends. Randomized terrains use numpy's PCG64 bit generator so a
seed reproduces the same knots on every platform.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

FLAT = "flat"
SLOPED_TILES = "sloped_tiles"

DEFAULT_RUN_IN = 5.0


@dataclass(frozen=True)
class Terrain:
    xs: np.ndarray
    ys: np.ndarray
    kind: str = FLAT
    start_x: float = 0.0
    slopes_deg: tuple[float, ...] = field(default=())

    def __post_init__(self):
        xs = np.ascontiguousarray(self.xs, dtype=np.float64)
        ys = np.ascontiguousarray(self.ys, dtype=np.float64)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
            raise ValueError("terrain needs at least two (x, y) knots of equal length")
        if np.any(np.diff(xs) <= 0.0):
            raise ValueError("terrain knots must be strictly increasing in x")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    def knots(self) -> list[tuple[float, float]]:
        return [(float(x), float(y)) for x, y in zip(self.xs, self.ys)]

    def height(self, x: float) -> float:
        return height_and_normal(self, x)[0]


def flat() -> Terrain:
    """Level ground at height zero."""
    return Terrain(np.array([-1.0, 1.0]), np.zeros(2), kind=FLAT)


def sloped_tiles(
    seed: int,
    n_tiles: int = 10,
    tile_length: float = 1.0,
    max_slope: float = 5.0,
    run_in: float = DEFAULT_RUN_IN,
) -> Terrain:
    """Flat run-in on ``[-run_in, 0]`` followed by tiles of random slope.

    Each tile's slope (degrees) is drawn independently and uniformly from
    ``[-max_slope, max_slope]``; heights accumulate so the profile stays
    continuous. ``start_x`` marks the beginning of the run-in.
    """
    if n_tiles < 1:
        raise ValueError("n_tiles must be >= 1")
    if tile_length <= 0.0:
        raise ValueError("tile_length must be positive")
    if max_slope < 0.0:
        raise ValueError("max_slope must be non-negative")

    rng = np.random.Generator(np.random.PCG64(seed))
    slopes = rng.uniform(-max_slope, max_slope, size=n_tiles)

    xs = [-run_in, 0.0] if run_in > 0.0 else [0.0]
    ys = [0.0] * len(xs)
    for k, slope in enumerate(slopes):
        xs.append((k + 1) * tile_length)
        ys.append(ys[-1] + math.tan(math.radians(slope)) * tile_length)
    return Terrain(
        np.array(xs),
        np.array(ys),
        kind=SLOPED_TILES,
        start_x=-run_in,
        slopes_deg=tuple(float(s) for s in slopes),
    )


def height_and_normal(terrain: Terrain, x: float) -> tuple[float, np.ndarray]:
    """Height at ``x`` and the unit surface normal (pointing up)."""
    y, slope = _height_slope(terrain.xs, terrain.ys, x)
    norm = math.hypot(slope, 1.0)
    return y, np.array([-slope / norm, 1.0 / norm])


def _height_slope(xs: np.ndarray, ys: np.ndarray, x: float) -> tuple[float, float]:
    if x <= xs[0]:
        return float(ys[0]), 0.0
    if x >= xs[-1]:
        return float(ys[-1]), 0.0
    i = int(np.searchsorted(xs, x, side="right")) - 1
    slope = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])
    return float(ys[i] + slope * (x - xs[i])), float(slope)


def to_csv(terrain: Terrain, path, meta: dict | None = None) -> None:
    """Write the knots as ``x,y`` rows under ``#`` comment lines."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# kind={terrain.kind}\n")
        if meta:
            fh.write(f"# meta={json.dumps(meta, sort_keys=True)}\n")
        fh.write("x,y\n")
        for x, y in terrain.knots():
            fh.write(f"{x!r},{y!r}\n")
