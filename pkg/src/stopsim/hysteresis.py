"""Scalar stop and play hysteresis operators on piecewise-linear signals.

The stop operator drives an internal state z through the characteristic
interval [a, b]: strictly inside, z follows increments of the input
one-for-one; at a bound it sticks until the input pulls it back in.  For a
piecewise-linear input the projection recursion

    z[k+1] = clamp(z[k] + (v[k+1] - v[k]), a, b)

is exact, not a discretization.  The play operator is the complementary
part, play = v - stop + (z0 - v[0]), so the two add back to the input up to
the initialization offset.

All evaluation runs in offset coordinates w = z - v.  One step is then a
pure clamp of the carried w against the moving bounds a - v[k], b - v[k]:
a selection among already-rounded floats, with no arithmetic on the state.
Consequently inserting collinear breakpoints or splitting a signal at a grid
point reproduces the one-pass results bit for bit, which the z-form
recursion (regrouped increment sums) does not achieve in floating point.

The directional derivative of the stop obeys the one-sided rule of the
clamp: the derivative state passes through unchanged while the base state is
strictly interior, is reset to the bound's own rate when the base state sits
strictly outside a moving bound, and takes the one-sided max/min exactly at
a bound.  Tie predicates are evaluated on the same w values the base
recursion uses, so the derivative pass takes bitwise the same branches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError, InvalidConfigError, InvalidSignalError

__all__ = [
    "PiecewiseLinearSignal",
    "HysteresisConfig",
    "HysteresisOutput",
    "DerivativeState",
    "StopCursor",
    "DerivativeCursor",
    "stop_evaluate",
    "play_evaluate",
    "stop_directional_derivative",
    "stop_concatenate",
]


def _signal_array(x, name):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise InvalidSignalError(f"{name} must be one-dimensional")
    return arr


@dataclass(frozen=True)
class PiecewiseLinearSignal:
    """Scalar time series; values are interpolated linearly between grid points."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = _signal_array(self.times, "times")
        values = _signal_array(self.values, "values")
        if times.size == 0:
            raise InvalidSignalError("signal needs at least one grid point")
        if times.size != values.size:
            raise InvalidSignalError(
                f"times and values must have equal length ({times.size} != {values.size})"
            )
        if not np.all(np.isfinite(times)) or not np.all(np.isfinite(values)):
            raise InvalidSignalError("signal entries must be finite")
        if times.size > 1 and not np.all(times[1:] > times[:-1]):
            raise InvalidSignalError("times must be strictly increasing")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.times.size


@dataclass(frozen=True)
class HysteresisConfig:
    """Characteristic interval [a, b] and initial state z0."""

    a: float
    b: float
    z0: float

    def __post_init__(self):
        for name in ("a", "b", "z0"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidConfigError(f"hysteresis {name} must be finite")
            object.__setattr__(self, name, value)
        if not self.a < self.b:
            raise InvalidConfigError(f"require a < b, got a={self.a}, b={self.b}")
        if not (self.a <= self.z0 <= self.b):
            raise InvalidConfigError(
                f"z0={self.z0} must lie in [{self.a}, {self.b}]"
            )


class StopCursor:
    """Running state of the stop recursion; supports split-and-continue.

    Carries the offset w = z - v.  ``advance`` performs one clamp step and
    returns the new stop value.  Continuing a signal through a cursor is
    bitwise identical to evaluating it in one pass.
    """

    __slots__ = ("cfg", "w", "v", "z")

    def __init__(self, cfg: HysteresisConfig, v0: float):
        self.cfg = cfg
        w = cfg.z0 - v0
        # rounding keeps w inside [a - v0, b - v0]; clamp anyway so the
        # invariant is structural rather than a rounding argument
        lo = cfg.a - v0
        hi = cfg.b - v0
        if w < lo:
            w = lo
        elif w > hi:
            w = hi
        self.w = w
        self.v = v0
        self.z = cfg.z0

    @classmethod
    def restore(cls, cfg: HysteresisConfig, w: float, v: float, z: float) -> "StopCursor":
        cur = cls.__new__(cls)
        cur.cfg = cfg
        cur.w = w
        cur.v = v
        cur.z = z
        return cur

    def advance(self, v_next: float) -> float:
        cfg = self.cfg
        lo = cfg.a - v_next
        hi = cfg.b - v_next
        w = self.w
        if w <= lo:
            w = lo
        elif w >= hi:
            w = hi
        self.w = w
        self.v = v_next
        z = w + v_next
        # final selection keeps the reported value inside [a, b] exactly
        if z < cfg.a:
            z = cfg.a
        elif z > cfg.b:
            z = cfg.b
        self.z = z
        return z


class DerivativeCursor:
    """Stop recursion advanced jointly with its one-sided directional derivative.

    The derivative state is carried as omega = zeta - h so scaling the
    direction rescales every branch outcome without re-rounding the base
    path; the reported derivative is zeta = omega + h.
    """

    __slots__ = ("cfg", "w", "v", "z", "omega", "zeta")

    def __init__(self, cfg: HysteresisConfig, v0: float, h0: float):
        base = StopCursor(cfg, v0)
        self.cfg = cfg
        self.w = base.w
        self.v = base.v
        self.z = base.z
        self.omega = -h0  # zeta starts at 0: the initial state does not move
        self.zeta = 0.0

    def advance(self, v_next: float, h_next: float):
        cfg = self.cfg
        lo = cfg.a - v_next
        hi = cfg.b - v_next
        w = self.w
        omega = self.omega
        if w < lo:
            w = lo
            omega = -h_next
        elif w == lo:
            w = lo
            neg = -h_next
            if neg > omega:
                omega = neg
        elif w > hi:
            w = hi
            omega = -h_next
        elif w == hi:
            w = hi
            neg = -h_next
            if neg < omega:
                omega = neg
        self.w = w
        self.v = v_next
        self.omega = omega
        z = w + v_next
        if z < cfg.a:
            z = cfg.a
        elif z > cfg.b:
            z = cfg.b
        self.z = z
        zeta = omega + h_next
        self.zeta = zeta
        return z, zeta


@dataclass(frozen=True)
class HysteresisOutput:
    """Stop and play signals plus the continuation state for concatenation.

    ``resume_offset``/``resume_input`` are the internal offset w and the last
    input value; ``play_offset`` is z0 - v[0].  They let a later
    ``stop_concatenate`` reproduce the one-pass bit pattern, which cannot be
    recovered from the rounded stop values alone.
    """

    stop: PiecewiseLinearSignal
    play: PiecewiseLinearSignal
    cfg: HysteresisConfig
    resume_offset: float
    resume_input: float
    play_offset: float


@dataclass(frozen=True)
class DerivativeState:
    """Stop values along the base signal and the directional derivative."""

    base_stop: np.ndarray
    derivative: np.ndarray

    def __post_init__(self):
        base = np.asarray(self.base_stop, dtype=float)
        der = np.asarray(self.derivative, dtype=float)
        if base.shape != der.shape:
            raise GridMismatchError("base_stop and derivative must share a grid")
        if der.size and der[0] != 0.0:
            raise InvalidConfigError("derivative must start at 0")
        base.setflags(write=False)
        der.setflags(write=False)
        object.__setattr__(self, "base_stop", base)
        object.__setattr__(self, "derivative", der)


def stop_evaluate(v: PiecewiseLinearSignal, cfg: HysteresisConfig) -> HysteresisOutput:
    """Evaluate stop and play along ``v``.

    The stop starts at z0 and is confined to [a, b]; the play is
    v - stop + (z0 - v[0]), zero at the first grid point by construction.
    """
    values = v.values
    n = values.size
    cur = StopCursor(cfg, values[0])
    stop = np.empty(n)
    stop[0] = cfg.z0
    for k in range(1, n):
        stop[k] = cur.advance(values[k])
    play_offset = cfg.z0 - values[0]
    play = (values - stop) + play_offset
    return HysteresisOutput(
        stop=PiecewiseLinearSignal(v.times, stop),
        play=PiecewiseLinearSignal(v.times, play),
        cfg=cfg,
        resume_offset=cur.w,
        resume_input=cur.v,
        play_offset=play_offset,
    )


def play_evaluate(v: PiecewiseLinearSignal, cfg: HysteresisConfig) -> PiecewiseLinearSignal:
    """The play component of the decomposition; see ``stop_evaluate``."""
    return stop_evaluate(v, cfg).play


def stop_directional_derivative(
    v: PiecewiseLinearSignal, h: PiecewiseLinearSignal, cfg: HysteresisConfig
) -> DerivativeState:
    """One-sided directional derivative of the stop at ``v`` in direction ``h``.

    Returns the base stop values and the derivative signal zeta with
    zeta[0] = 0.  The recursion differentiates each clamp step one-sidedly,
    so the result is the limit of (stop(v + lam*h) - stop(v))/lam as
    lam decreases to 0 from above.
    """
    if not np.array_equal(v.times, h.times):
        raise GridMismatchError("direction must share the base signal's time grid")
    values = v.values
    rates = h.values
    n = values.size
    cur = DerivativeCursor(cfg, values[0], rates[0])
    stop = np.empty(n)
    zeta = np.empty(n)
    stop[0] = cfg.z0
    zeta[0] = 0.0
    for k in range(1, n):
        stop[k], zeta[k] = cur.advance(values[k], rates[k])
    return DerivativeState(base_stop=stop, derivative=zeta)


def stop_concatenate(
    prefix: HysteresisOutput, v_tail: PiecewiseLinearSignal, cfg: HysteresisConfig
) -> HysteresisOutput:
    """Continue a previous evaluation over ``v_tail``.

    The tail's first grid point must coincide with the prefix's last (same
    timestamp, same input value); the concatenated output is bitwise equal
    to evaluating the joined signal in one pass.  A single-point tail
    returns the prefix unchanged.
    """
    if cfg != prefix.cfg:
        raise InvalidConfigError("concatenation config differs from the prefix's")
    if v_tail.times[0] != prefix.stop.times[-1]:
        raise GridMismatchError(
            f"tail must start at the prefix's final timestamp "
            f"({v_tail.times[0]} != {prefix.stop.times[-1]})"
        )
    if v_tail.values[0] != prefix.resume_input:
        raise GridMismatchError(
            f"tail must start at the prefix's final input value "
            f"({v_tail.values[0]} != {prefix.resume_input})"
        )
    if len(v_tail) == 1:
        return prefix

    cur = StopCursor.restore(
        cfg, prefix.resume_offset, prefix.resume_input, prefix.stop.values[-1]
    )
    tail_values = v_tail.values
    n = tail_values.size
    stop_tail = np.empty(n - 1)
    for k in range(1, n):
        stop_tail[k - 1] = cur.advance(tail_values[k])
    play_tail = (tail_values[1:] - stop_tail) + prefix.play_offset

    times = np.concatenate([prefix.stop.times, v_tail.times[1:]])
    stop = np.concatenate([prefix.stop.values, stop_tail])
    play = np.concatenate([prefix.play.values, play_tail])
    return HysteresisOutput(
        stop=PiecewiseLinearSignal(times, stop),
        play=PiecewiseLinearSignal(times, play),
        cfg=cfg,
        resume_offset=cur.w,
        resume_input=cur.v,
        play_offset=prefix.play_offset,
    )
