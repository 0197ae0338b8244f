"""Performance-gated schedule for the effort weight alpha.

Once per finished training episode the smoothed task return is compared to
a threshold. Newly good performance shrinks the adaptation step; sustained
good performance raises alpha by one step; poor performance lowers it
(never below zero).
"""

from __future__ import annotations

import base64
import json
import math
import struct
import zlib
from dataclasses import dataclass, field, replace

DEFAULT_THRESHOLD = 1000.0
DEFAULT_SMOOTHING = 0.8
DEFAULT_DELTA = 9e-4
DEFAULT_DECAY = 0.9

SNAPSHOT_VERSION = 1
_PACK = struct.Struct("<B4d")  # version, r_mean, alpha, delta, c_mean


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class AdaptConfig:
    threshold: float = DEFAULT_THRESHOLD
    smoothing: float = DEFAULT_SMOOTHING
    delta: float = DEFAULT_DELTA
    decay: float = DEFAULT_DECAY

    def __post_init__(self):
        if not 0.0 <= self.smoothing < 1.0:
            raise ValueError("smoothing must lie in [0, 1)")
        if not 0.0 <= self.decay <= 1.0:
            raise ValueError("decay must lie in [0, 1]")
        if not self.delta > 0.0:
            raise ValueError("delta must be positive")
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")


@dataclass(frozen=True)
class AdaptState:
    r_mean: float = 0.0
    alpha: float = 0.0
    delta: float = DEFAULT_DELTA
    c_mean: float = 0.0
    last_branch: str = field(default="", compare=False)

    @classmethod
    def initial(cls, cfg: AdaptConfig) -> "AdaptState":
        return cls(delta=cfg.delta)


# branch labels
NEWLY_HIGH = "newly_high"  # shrink the step
HIGH_FOR_LONG = "high_for_long"  # raise alpha
TOO_LOW = "too_low"  # lower alpha


def update(state: AdaptState, episode_return: float, cfg: AdaptConfig) -> AdaptState:
    """Feed one episode's task return and return the next state."""
    if not math.isfinite(episode_return):
        raise ValueError(f"episode return must be finite, got {episode_return!r}")
    b = cfg.smoothing
    r_mean = b * state.r_mean + (1.0 - b) * episode_return
    alpha, delta = state.alpha, state.delta
    high = r_mean > cfg.threshold
    if high and state.c_mean < 0.5:
        delta = cfg.decay * delta
        branch = NEWLY_HIGH
    elif high:
        alpha = alpha + delta
        branch = HIGH_FOR_LONG
    else:
        alpha = max(0.0, alpha - delta)
        branch = TOO_LOW
    c_target = 1.0 if high else 0.0
    c_mean = b * state.c_mean + (1.0 - b) * c_target
    return AdaptState(r_mean=r_mean, alpha=alpha, delta=delta, c_mean=c_mean,
                      last_branch=branch)


def disabled(state: AdaptState) -> AdaptState:
    """State used by the no-adapt ablation: alpha pinned to zero."""
    return replace(state, alpha=0.0)


def snapshot(state: AdaptState) -> str:
    """Canonical text encoding ``<base64 payload>:<crc32 hex>``.

    The payload is ``struct.pack("<B4d", version, r_mean, alpha, delta,
    c_mean)``. The fresh default state encodes as
    ``AQAAAAAAAAAAAAAAAAAAAACSy39Iv31NPwAAAAAAAAAA:d9096e48``.
    """
    raw = _PACK.pack(SNAPSHOT_VERSION, state.r_mean, state.alpha, state.delta, state.c_mean)
    return f"{base64.b64encode(raw).decode('ascii')}:{zlib.crc32(raw):08x}"


def restore(blob: str) -> AdaptState:
    try:
        body, crc = blob.split(":")
        raw = base64.b64decode(body, validate=True)
        if f"{zlib.crc32(raw):08x}" != crc:
            raise SnapshotError("checksum mismatch")
        version, r_mean, alpha, delta, c_mean = _PACK.unpack(raw)
    except SnapshotError:
        raise
    except (ValueError, struct.error) as exc:
        raise SnapshotError(f"corrupt adapt snapshot: {exc}") from exc
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    return AdaptState(r_mean=r_mean, alpha=alpha, delta=delta, c_mean=c_mean)


def to_json(state: AdaptState) -> str:
    return json.dumps({"r_mean": state.r_mean, "alpha": state.alpha, "delta": state.delta,
                       "c_mean": state.c_mean})
