"""Cross-device clock offset math, frame mapping, and exposure scheduling.

The capture rig propagates a hardware clock through depth cameras in a daisy
chain and bridges to a phone over the network, so synchronization reduces to
three composable clock offsets plus nearest-frame matching with a skew cap.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityExceeded, NegativeRoundTrip

# Frames at or above this skew are dropped (boundary inclusive).
DEFAULT_MAX_SKEW_S = 0.033
# Stricter preset: one 60 Hz phone frame period.
STRICT_MAX_SKEW_S = 1.0 / 60.0


@dataclass(frozen=True)
class ClockOffsets:
    """Pairwise clock offsets along the device chain, in seconds."""

    k_to_w: float
    w_to_i: float
    i_to_a: float

    def __post_init__(self):
        if not all(np.isfinite([self.k_to_w, self.w_to_i, self.i_to_a])):
            raise ValueError("offsets must be finite")


@dataclass(frozen=True)
class ExposureParams:
    """Depth-camera exposure timing in microseconds."""

    pulse_us: float = 160.0
    idle_us: float = 1450.0
    exposures_per_frame: int = 9

    def __post_init__(self):
        if self.pulse_us <= 0:
            raise ValueError("pulse width must be positive")
        if self.idle_us < 0:
            raise ValueError("idle interval must be non-negative")
        if self.exposures_per_frame < 1:
            raise ValueError("need at least one exposure per frame")


@dataclass
class FrameMapping:
    """Closest-frame matches (kinect idx, iphone idx, signed skew seconds)."""

    pairs: list[tuple[int, int, float]] = field(default_factory=list)
    rejected: list[int] = field(default_factory=list)
    max_skew: float = DEFAULT_MAX_SKEW_S

    def __post_init__(self):
        for k, _, skew in self.pairs:
            if abs(skew) >= self.max_skew:
                raise ValueError(f"pair for frame {k} violates the skew cap")
        seen = {k for k, _, _ in self.pairs}
        if len(seen) != len(self.pairs):
            raise ValueError("a kinect frame is mapped more than once")


def offset_round_trip(t_w_send: float, t_i_recv: float, t_round: float) -> float:
    """Workstation->phone clock offset from one message round trip.

    The one-way latency is taken as half the round trip.
    """
    if t_round < 0:
        raise NegativeRoundTrip(f"round trip {t_round} is negative")
    return t_i_recv - t_w_send - t_round / 2.0


def compose_offsets(offsets: ClockOffsets) -> float:
    """Total depth-camera -> phone-SDK clock offset."""
    return offsets.k_to_w + offsets.w_to_i + offsets.i_to_a


def map_frames(
    kinect_ts,
    iphone_ts,
    offset_k_to_a: float,
    max_skew: float = DEFAULT_MAX_SKEW_S,
) -> FrameMapping:
    """Map each kinect frame to the closest iphone frame, rejecting skew >= max_skew.

    Both timestamp lists must be sorted ascending. Ties break toward the
    earlier iphone frame.
    """
    kinect_ts = [float(t) for t in kinect_ts]
    iphone_ts = [float(t) for t in iphone_ts]
    if kinect_ts != sorted(kinect_ts) or iphone_ts != sorted(iphone_ts):
        raise ValueError("timestamp lists must be sorted ascending")
    mapping = FrameMapping(max_skew=max_skew)
    if not iphone_ts:
        mapping.rejected = list(range(len(kinect_ts)))
        return mapping
    for k_idx, t_k in enumerate(kinect_ts):
        target = t_k + offset_k_to_a
        j = bisect.bisect_left(iphone_ts, target)
        best = None
        for cand in (j - 1, j):
            if 0 <= cand < len(iphone_ts):
                skew = iphone_ts[cand] - target
                # strict < keeps the earlier frame on exact ties
                if best is None or abs(skew) < abs(best[1]):
                    best = (cand, skew)
        if abs(best[1]) >= max_skew:
            mapping.rejected.append(k_idx)
        else:
            mapping.pairs.append((k_idx, best[0], best[1]))
    return mapping


def max_sync_devices(params: ExposureParams) -> int:
    """Device count bound for the daisy chain: master plus one device per
    whole pulse width that fits in the idle interval."""
    return int(params.idle_us // params.pulse_us) + 1


def schedule_exposures(
    n_devices: int, params: ExposureParams, frame_period_us: float
) -> list[float]:
    """Per-device trigger delays (us) so no two IR pulses overlap.

    Device k fires pulse_us later than device k-1; every exposure of every
    device is checked for pairwise half-open interval overlap within one
    frame period.
    """
    cap = max_sync_devices(params)
    if n_devices > cap:
        raise CapacityExceeded(f"{n_devices} devices exceed the bound of {cap}")
    if n_devices < 1:
        raise ValueError("need at least one device")
    delays = [k * params.pulse_us for k in range(n_devices)]
    intervals = exposure_intervals(delays, params)
    if intervals and intervals[-1][1] > frame_period_us:
        raise ValueError("exposure pattern exceeds the frame period")
    if has_overlap(intervals):
        raise CapacityExceeded("schedule produced overlapping pulses")
    return delays


def exposure_intervals(delays, params: ExposureParams) -> list[tuple[float, float]]:
    """All half-open pulse intervals [start, end) for one frame, sorted."""
    cycle = params.pulse_us + params.idle_us
    out = []
    for d in delays:
        for e in range(params.exposures_per_frame):
            start = d + e * cycle
            out.append((start, start + params.pulse_us))
    out.sort()
    return out


def has_overlap(intervals) -> bool:
    """Exhaustive overlap check over sorted half-open intervals."""
    for (s0, e0), (s1, _) in zip(intervals, intervals[1:]):
        if s1 < e0:
            return True
    return False


def simulate_round_trip(
    true_offset: float,
    base_delay: float,
    rng: np.random.Generator | None = None,
    jitter: float = 0.0,
    t_w_send: float = 0.0,
) -> tuple[float, float, float]:
    """Simulate one sync round trip between two clocks.

    The receiving clock runs `true_offset` ahead of the sender; each one-way
    leg takes base_delay plus an independent jitter drawn from [0, jitter].
    Returns (t_w_send, t_i_recv, t_round) for offset_round_trip.
    """
    if rng is None or jitter == 0.0:
        u_out = u_back = 0.0
    else:
        u_out = float(rng.uniform(0.0, jitter))
        u_back = float(rng.uniform(0.0, jitter))
    t_i_recv = t_w_send + base_delay + u_out + true_offset
    t_round = 2 * base_delay + u_out + u_back
    return t_w_send, t_i_recv, t_round
