"""Stable subordinator, its discretised inverse, and time-changed solutions."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, GridMismatch, HorizonNotReached, InvalidIndex, OutOfRange
from .noise import (QUANTUM, STREAM_SUBORDINATOR, check_seed, generate_brownian, quantize,
                    stream_key, uniforms)
from .scheme import solve_truncated_em

DEFAULT_ALPHA_S = 0.9
DEFAULT_MAX_STEPS = 10 ** 9
# walk values must stay below 128 for quantized sums to be exact
MAX_HORIZON = 32.0


@dataclass(frozen=True)
class SubordinatorSpec:
    alpha_s: float = DEFAULT_ALPHA_S
    kind: str = "stable"

    def __post_init__(self):
        if self.kind != "stable":
            raise ConfigError(f"only stable subordinators are supported, got {self.kind!r}")
        _check_alpha(self.alpha_s)

    def laplace_exponent(self, lam):
        return np.asarray(lam, dtype=np.float64) ** self.alpha_s


def _check_alpha(alpha_s):
    if not 0.0 < alpha_s < 1.0:
        raise InvalidIndex(f"stability index must lie in (0, 1), got {alpha_s}")


def stable_from_uniforms(alpha_s, dt, u1, u2):
    """Kanter's representation of a positive stable variable.

    With U uniform on (0, pi) and W standard exponential,

        sin(a U) / sin(U)**(1/a) * (sin((1-a) U) / W)**((1-a)/a)

    has Laplace transform exp(-lam**a); multiplying by dt**(1/a) gives
    exp(-dt lam**a).
    """
    a = alpha_s
    u = math.pi * np.asarray(u1)
    w = -np.log(np.asarray(u2))
    xi = np.sin(a * u) / np.sin(u) ** (1.0 / a) * (np.sin((1.0 - a) * u) / w) ** ((1.0 - a) / a)
    return dt ** (1.0 / a) * xi


def stable_increments(alpha_s, dt, base_seed, path_index, start, count):
    """Increments ``start .. start+count-1`` of one subordinator stream."""
    _check_alpha(alpha_s)
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    key = stream_key(base_seed, STREAM_SUBORDINATOR, path_index)
    u = uniforms(key, 2 * int(start), 2 * int(count))
    return stable_from_uniforms(alpha_s, dt, u[0::2], u[1::2])


def sample_stable_increment(alpha_s, dt, rng_key):
    """One increment addressed by ``rng_key = (base_seed, path_index, step)``."""
    base_seed, path_index, step = rng_key
    return float(stable_increments(alpha_s, dt, base_seed, path_index, step, 1)[0])


@dataclass(frozen=True)
class SubordinatorPath:
    """Walk D(t_i), i = 0..n, with values[0] = 0 and values[-1] > horizon."""

    dt: float
    values: np.ndarray
    horizon: float

    @property
    def n_steps(self):
        return len(self.values) - 1

    def inverse(self):
        return InverseSubordinatorPath(self.values, self.dt, self.horizon)


@dataclass(frozen=True)
class InverseSubordinatorPath:
    """E(t) = i*dt on [D(t_i), D(t_{i+1})): a right-continuous staircase."""

    jump_times: np.ndarray
    dt: float
    horizon: float

    def index(self, t):
        """The integer level i with E(t) = i*dt (vectorised)."""
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0) or np.any(t > self.horizon):
            raise OutOfRange(f"query outside [0, {self.horizon}]")
        return np.searchsorted(self.jump_times, t, side="right") - 1

    def __call__(self, t):
        return self.index(t) * self.dt


def _cap(horizon):
    # any increment beyond 2*horizon ends the walk the same way
    return 2.0 * horizon


def _check_horizon(horizon):
    if not 0 < horizon <= MAX_HORIZON:
        raise ConfigError(f"horizon must lie in (0, {MAX_HORIZON}], got {horizon}")


def walk_increments(alpha_s, dt, horizon, base_seed, path_index, start, count):
    """Quantized, capped increments as used inside walks.

    Rounding to the noise quantum makes every partial sum exact, so block-summed
    coarse walks reproduce fine walk values bit-for-bit.  Capping at 2*horizon
    cannot change E on [0, horizon].
    """
    xi = stable_increments(alpha_s, dt, base_seed, path_index, start, count)
    return np.clip(quantize(xi), QUANTUM, _cap(horizon))


def simulate_subordinator(spec, dt, horizon, base_seed, path_index,
                          max_steps=DEFAULT_MAX_STEPS, align=1):
    """Accumulate increments until the walk passes ``horizon``.

    The walk is extended to a length divisible by ``align`` so that it can be
    coarsened by any divisor of ``align``.
    """
    _check_horizon(horizon)
    check_seed(base_seed)
    align = int(align)
    parts = [np.zeros(1)]
    total, last, chunk = 0, 0.0, 1 << 14
    n_cross = None
    while n_cross is None:
        if total + chunk > max_steps:
            chunk = max_steps - total
            if chunk <= 0:
                raise HorizonNotReached(f"walk did not pass {horizon} within {max_steps} steps")
        vals = last + np.cumsum(walk_increments(spec.alpha_s, dt, horizon, base_seed,
                                                path_index, total, chunk))
        parts.append(vals)
        if vals[-1] > horizon:
            n_cross = total + int(np.argmax(vals > horizon)) + 1
        total += chunk
        last = float(vals[-1])
        chunk = min(chunk * 2, 1 << 20)
    keep = -(-n_cross // align) * align
    if keep > total:
        parts.append(last + np.cumsum(walk_increments(spec.alpha_s, dt, horizon, base_seed,
                                                      path_index, total, keep - total)))
    values = np.concatenate(parts)[:keep + 1]
    return SubordinatorPath(float(dt), values, float(horizon))


def coarsen_subordinator(path, factor):
    """Every ``factor``-th walk value: the walk of block-summed increments."""
    factor = int(factor)
    if factor < 1 or path.n_steps % factor:
        raise GridMismatch(f"factor {factor} does not divide {path.n_steps} walk steps")
    return SubordinatorPath(path.dt * factor, path.values[::factor].copy(), path.horizon)


def subordinator_from_increments(increments, dt, horizon):
    """Walk from explicit increments (test hook); must pass ``horizon``."""
    inc = np.asarray(increments, dtype=np.float64).ravel()
    if inc.size == 0 or np.any(~np.isfinite(inc)) or np.any(inc <= 0):
        raise ConfigError("subordinator increments must be positive and finite")
    values = np.concatenate([[0.0], np.cumsum(inc)])
    if not values[-1] > horizon:
        raise HorizonNotReached(f"given increments reach {values[-1]}, not past {horizon}")
    return SubordinatorPath(float(dt), values, float(horizon))


def load_increments(path):
    """Read one increment per line (blank lines and '#' comments ignored)."""
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                try:
                    out.append(float(line))
                except ValueError as exc:
                    raise ConfigError(f"{path}: not a number: {line!r}") from exc
    return np.array(out)


def invert_subordinator(path, t):
    """E_dt(t) = (min{n : D(t_n) > t} - 1) * dt."""
    if not 0 <= t <= path.horizon:
        raise OutOfRange(f"t={t} outside [0, {path.horizon}]")
    n = int(np.searchsorted(path.values, t, side="right"))
    if n >= len(path.values):
        raise OutOfRange(f"walk does not pass t={t}")
    return (n - 1) * path.dt


@dataclass(frozen=True)
class TimeChangedPath:
    times: np.ndarray
    clock: np.ndarray            # E_dt at each output time
    states: np.ndarray           # x_dt(E_dt(t)), shape (len(times), d)
    subordinator: SubordinatorPath
    dual: object                 # TrajectoryGrid of the dual SDE


def dual_problem(problem, length):
    """The problem on Brownian time [t0, t0 + length]."""
    return replace(problem, T=problem.t0 + length)


def solve_time_changed(problem, policy, dt, horizon, base_seed, path_index, output_times,
                       alpha_s=DEFAULT_ALPHA_S, subordinator=None, backend=None):
    """x_dt(E_dt(t)) at ``output_times``.

    The subordinator walk is simulated first because it fixes how
    far in Brownian time the dual SDE must be solved.  W and D come from
    disjoint key spaces, so they are independent.  ``subordinator`` injects an
    explicit walk instead.
    """
    times = np.asarray(output_times, dtype=np.float64)
    if subordinator is None:
        subordinator = simulate_subordinator(SubordinatorSpec(alpha_s), dt, horizon,
                                             base_seed, path_index)
    elif not math.isclose(subordinator.dt, dt):
        raise GridMismatch(f"injected walk has dt={subordinator.dt}, run uses {dt}")
    levels = subordinator.inverse().index(times)
    n_steps = int(levels.max()) + 1
    brownian = generate_brownian(problem.m, dt, n_steps, base_seed, path_index, problem.t0)
    dual = solve_truncated_em(dual_problem(problem, n_steps * dt), policy, dt, brownian,
                              backend=backend)
    return TimeChangedPath(times, levels * dt, dual.states[levels], subordinator, dual)
