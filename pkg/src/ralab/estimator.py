"""Per-device uplink traffic estimation at the base station.

During an initial observation phase the device stays connected and the base
station timestamps its uplink packets. Once ``r_threshold`` packets arrived
(or an observation timer expires first) the device is classified as
``periodic`` or ``event`` from the variance of its inter-reception times.
Periodic devices additionally get a period/margin estimate via least
squares and a preferred transmission-slot class. After classification the
estimate is refreshed from the preamble times of successful accesses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import core


@dataclass
class TrafficEstimate:
    """Classification outcome plus the quantities the grant rule needs."""

    kind: str                     # "periodic" or "event"
    period_ms: float = 0.0        # regression slope
    intercept_ms: float = 0.0     # regression intercept
    margin_ms: float = 0.0        # mean absolute residual
    diff_variance: float = 0.0    # classification statistic
    preferred_offset: int = 1     # transmission slot class for periodic devices
    anchor_ms: float = 0.0        # fitted reception time of the newest sample

    def __post_init__(self) -> None:
        if self.kind not in ("periodic", "event"):
            raise ValueError(f"kind must be 'periodic' or 'event', got {self.kind!r}")
        if self.kind == "periodic" and (self.period_ms < 0 or self.margin_ms < 0):
            raise ValueError("periodic estimate needs period_ms >= 0 and margin_ms >= 0")


@dataclass
class EstimatorState:
    """Observation state for one device."""

    phase: str = "initial"            # "initial" or "post"
    times: list[float] = field(default_factory=list)
    intercept_ms: float = 0.0
    period_ms: float = 0.0
    margin_ms: float = 0.0
    estimate: TrafficEstimate | None = None
    temp_time: float | None = None    # preamble time pending the access outcome
    window: int = 0                   # sample cap after classification (0 = none)
    guard_ms: float = 0.0             # schedule-quantization width of the gate
    ticks: list[int] = field(default_factory=list)  # period number per sample
    anchor_tick: int = 0              # period number of the current anchor

    @property
    def r(self) -> int:
        return len(self.times)


def linear_regression(times, xs=None) -> tuple[float, float]:
    """Ordinary least squares of ``times`` against sample positions.

    Positions default to the sample index 0..r-1 (consecutive
    observations); pass ``xs`` when samples carry their own position
    numbers, e.g. period counts with gaps.  Returns ``(intercept,
    slope)``; the slope is the period estimate.
    """
    r = len(times)
    if r < 2:
        raise ValueError("linear_regression needs at least 2 samples")
    if xs is None:
        xs = range(r)
    elif len(xs) != r:
        raise ValueError("xs must match times in length")
    sx = math.fsum(xs)
    sxx = math.fsum(x * x for x in xs)
    sy = math.fsum(times)
    sxy = math.fsum(x * t for x, t in zip(xs, times))
    denom = r * sxx - sx * sx
    if denom == 0:
        raise ValueError("sample positions must not all coincide")
    slope = (r * sxy - sx * sy) / denom
    intercept = (sy - slope * sx) / r
    return intercept, slope


def margin_value(times, intercept: float, slope: float, xs=None) -> float:
    """Mean absolute regression residual (the grant-window margin)."""
    r = len(times)
    if r < 2:
        raise ValueError("margin_value needs at least 2 samples")
    if xs is None:
        xs = range(r)
    elif len(xs) != r:
        raise ValueError("xs must match times in length")
    return math.fsum(abs(t - (intercept + x * slope)) for x, t in zip(xs, times)) / r


def successive_difference_variance(times) -> float:
    """Population variance of successive differences of ``times``.

    Zero for an exactly periodic series regardless of its length, large for
    bursty arrivals; this is the classification statistic.
    """
    if len(times) < 3:
        return 0.0
    diffs = [b - a for a, b in zip(times, times[1:])]
    mean = math.fsum(diffs) / len(diffs)
    return math.fsum((d - mean) ** 2 for d in diffs) / len(diffs)


def preferred_offset(times, t_p: int, t_tti: float = core.DEFAULT_T_TTI_MS) -> int:
    """Transmission-slot class that contains most of the observed times.

    Each time maps to its frame slot ``s = floor(time / t_tti) mod 10`` and
    then to the slot class covering ``s``; the most frequent class wins,
    smallest index on ties. Frame slot 0 is outside every class when
    ``t_p = 3`` and counts toward class 1.
    """
    if t_p not in (1, 2, 3):
        raise ValueError(f"t_p must be in {{1, 2, 3}}, got {t_p!r}")
    if t_p == 1:
        return 1
    tally = [0] * t_p
    for t in times:
        s = int(t / t_tti) % core.FRAME_LEN
        if t_p == 2:
            k = s % 2 + 1
        else:
            k = s % 3
            if k == 0:
                k = 3
            if s == 0:
                k = 1
        tally[k - 1] += 1
    best = max(range(t_p), key=lambda i: (tally[i], -i))
    return best + 1


def observe_uplink_packet(
    state: EstimatorState,
    now: float,
    t_up: float = core.UP_DATA_MS,
    t_tti: float = core.DEFAULT_T_TTI_MS,
) -> EstimatorState:
    """Record one uplink packet received at ``now`` during the initial phase.

    The stored value is the packet time shifted back by the uplink duration
    and forward by one slot, approximating when a preamble for this packet
    would have been received.
    """
    if state.phase != "initial":
        raise ValueError("observe_uplink_packet applies to the initial phase only")
    state.times.append(now - t_up + t_tti)
    if state.r >= 2:
        state.intercept_ms, state.period_ms = linear_regression(state.times)
        state.margin_ms = margin_value(state.times, state.intercept_ms, state.period_ms)
    return state


def classify_traffic_type(
    state: EstimatorState,
    r_threshold: int,
    var_threshold: float,
    t_p: int,
    t_tti: float = core.DEFAULT_T_TTI_MS,
    timer_expired: bool = False,
) -> TrafficEstimate:
    """Classify the device and end its initial phase.

    Call either when ``r == r_threshold`` or when the observation timer
    expires earlier; an expired timer always classifies as ``event``.
    """
    if state.phase != "initial":
        raise ValueError("device already classified")
    if timer_expired and state.r < r_threshold:
        est = TrafficEstimate(kind="event")
    else:
        if state.r != r_threshold:
            raise ValueError(
                f"classification needs r == r_threshold ({r_threshold}), have {state.r}"
            )
        sigma2 = successive_difference_variance(state.times)
        if sigma2 <= var_threshold:
            intercept, slope = linear_regression(state.times)
            est = TrafficEstimate(
                kind="periodic",
                period_ms=slope,
                intercept_ms=intercept,
                margin_ms=margin_value(state.times, intercept, slope),
                diff_variance=sigma2,
                preferred_offset=preferred_offset(state.times, t_p, t_tti),
                anchor_ms=intercept + (len(state.times) - 1) * slope,
            )
        else:
            est = TrafficEstimate(kind="event", diff_variance=sigma2)
    state.phase = "post"
    state.estimate = est
    state.window = max(r_threshold, 2)
    state.guard_ms = core.mean_class_stride_slots(t_p) * t_tti
    # The initial-phase samples are adjusted uplink times; after
    # classification the window tracks successful access times instead.
    # The two series sit on different lattices (an access happens a fixed
    # alignment gap after the packet it serves), so regressing across the
    # boundary would bias the slope while the window mixes them.  Start the
    # access-time series fresh; the classification fit stays in force until
    # the new series can support its own regression.
    state.times = []
    state.ticks = []
    state.anchor_tick = 0
    return est


def observe_twostep_attempt(
    state: EstimatorState, preamble_time: float, success: bool
) -> EstimatorState:
    """Fold the outcome of a two-step attempt into a periodic estimate.

    Only successful attempts contribute a sample (the preamble reception
    time); the sample window keeps the most recent ``state.window`` values
    so refreshing stays O(window).

    Samples pass a validation gate first: a success more than
    ``max(margin, guard)`` away from the nearest point of the fitted
    lattice was reached through retries, so its timing reflects the
    failure-recovery procedure rather than the device's traffic pattern.
    Feeding it into the regression would drag the schedule model behind
    the device's real schedule, and since later grants depend on the
    model, one late sample could otherwise delay every subsequent access.
    Off-schedule successes therefore advance the anchor along the lattice
    and leave the fit untouched.  The guard is one mean class stride:
    on-schedule accesses land within the schedule quantization, while
    retry delays start at the response-window expiry, several slots later.

    Each accepted sample carries the number of periods elapsed since the
    anchor, so accesses that skip periods (failed or rejected cycles) keep
    the regression aligned with the device's schedule.
    """
    if state.phase != "post":
        raise ValueError("observe_twostep_attempt applies after classification")
    est = state.estimate
    if est is None or est.kind != "periodic":
        raise ValueError("attempt tracking applies to periodic devices only")
    if not success:
        state.temp_time = None
        return state
    state.temp_time = None
    if (state.times or est.anchor_ms) and est.period_ms > 0:
        elapsed = max(0, round((preamble_time - est.anchor_ms) / est.period_ms))
        lattice = est.anchor_ms + elapsed * est.period_ms
        if abs(preamble_time - lattice) > max(est.margin_ms, state.guard_ms):
            est.anchor_ms = lattice
            state.anchor_tick += elapsed
            return state
        tick = state.anchor_tick + elapsed
    else:
        tick = state.anchor_tick + 1 if state.times else 0
    state.times.append(preamble_time)
    state.ticks.append(tick)
    if state.window and len(state.times) > state.window:
        drop = len(state.times) - state.window
        del state.times[:drop]
        del state.ticks[:drop]
        base = state.ticks[0]
        state.ticks = [k - base for k in state.ticks]
        tick -= base
    if len(state.times) >= 2:
        state.intercept_ms, state.period_ms = linear_regression(state.times, state.ticks)
        state.margin_ms = margin_value(
            state.times, state.intercept_ms, state.period_ms, state.ticks
        )
        est.period_ms = state.period_ms
        est.intercept_ms = state.intercept_ms
        est.margin_ms = state.margin_ms
        est.anchor_ms = state.intercept_ms + tick * state.period_ms
    else:
        # a single access sample cannot support a regression: anchor on it
        # directly and keep the classification-time period and margin
        est.anchor_ms = preamble_time
    state.anchor_tick = tick
    return state
