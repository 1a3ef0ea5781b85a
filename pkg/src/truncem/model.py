"""SDE problem definitions, built-in examples and assumption probes.

Coefficients are vectorised callables.  ``drift(t, x)`` takes a scalar time
and states of shape ``(..., d)`` and returns ``(..., d)``; ``diffusion(t, x)``
returns the full ``(..., d, m)`` matrix whose column ``r`` is the coefficient
of ``dW^r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, NumericOverflow, UnknownProblem
from .noise import STREAM_PROBE, stream_key, uniforms

_T_SLACK = 1e-12


@dataclass(frozen=True)
class SdeProblem:
    name: str
    d: int
    m: int
    drift: Callable
    diffusion: Callable
    t0: float
    T: float
    x0: tuple
    beta: float = 0.0
    gamma: float = 1.0
    alpha: float = 1.0
    # f(u) = K * u**power dominates |drift| v |diffusion| for u >= 1
    dominating: tuple = (1.0, 1.0)
    # (kernel name, parameter tuple) for the compiled stepping loop
    kernel: Optional[tuple] = None
    exact_solution: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise ConfigError("state and noise dimensions must be >= 1")
        if not self.T > self.t0:
            raise ConfigError(f"horizon T={self.T} must exceed t0={self.t0}")
        x0 = tuple(float(v) for v in np.atleast_1d(self.x0))
        if len(x0) != self.d or not all(math.isfinite(v) for v in x0):
            raise ConfigError(f"x0 must be {self.d} finite numbers")
        object.__setattr__(self, "x0", x0)

    @property
    def x0_array(self):
        return np.array(self.x0)

    @property
    def expected_rate(self):
        """min(gamma, alpha, 1/2): the strong order before the epsilon loss."""
        return min(self.gamma, self.alpha, 0.5)


def _check_time(problem, t):
    lo, hi = problem.t0, problem.T
    slack = _T_SLACK * max(1.0, abs(hi))
    if not lo - slack <= t <= hi + slack:
        raise ConfigError(f"t={t} outside [{lo}, {hi}]")


def _check_state(problem, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (problem.d,):
        raise ConfigError(f"state must have length {problem.d}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ConfigError("state must be finite")
    return x


def evaluate_drift(problem, t, x):
    _check_time(problem, t)
    x = _check_state(problem, x)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.asarray(problem.drift(t, x), dtype=np.float64)
    if not np.all(np.isfinite(out)):
        norm = float(np.linalg.norm(x))
        raise NumericOverflow(f"non-finite drift at t={t}, |x|={norm}", t=t, norm=norm)
    return out


def evaluate_diffusion(problem, t, x, r):
    """Column ``r`` (1-based) of the diffusion matrix."""
    if not 1 <= r <= problem.m:
        raise ConfigError(f"channel r={r} outside 1..{problem.m}")
    _check_time(problem, t)
    x = _check_state(problem, x)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.asarray(problem.diffusion(t, x), dtype=np.float64)[:, r - 1]
    if not np.all(np.isfinite(out)):
        norm = float(np.linalg.norm(x))
        raise NumericOverflow(f"non-finite diffusion at t={t}, |x|={norm}", t=t, norm=norm)
    return out


# --- built-in problems -------------------------------------------------------
#
# Arithmetic is spelled out as repeated products, in the same order as the
# compiled kernels, so both backends round identically.

def _holder(s, exponent):
    return math.pow(s, exponent) if s > 0.0 else 0.0


def _example1_drift(t, x):
    tf = _holder(t * (1.0 - t), 0.25)
    return tf * x * x - 2.0 * x * x * x * x * x


def _example1_diffusion(t, x):
    tf = _holder(t * (1.0 - t), 0.25)
    return (tf * x * x)[..., None]


def _example2_drift(t, x):
    tf = _holder((t - 1.0) * (2.0 - t), 0.2)
    return tf * x * x - 2.0 * x * x * x * x * x


def _example2_diffusion(t, x):
    tf = _holder((t - 1.0) * (2.0 - t), 0.4)
    return (tf * x * x)[..., None]


def _tc2d_drift(t, x):
    y1 = x[..., 0]
    y2 = x[..., 1]
    return np.stack([-2.0 * y1 * y1 * y1 * y1, -2.0 * y2 * y2 * y2 * y2], axis=-1)


def _tc2d_diffusion(t, x):
    y1 = x[..., 0]
    y2 = x[..., 1]
    return np.stack([y2 * y2, y1 * y1], axis=-1)[..., None]


def _gbm(a, b, x0, T):
    def drift(t, x):
        return a * x

    def diffusion(t, x):
        return (b * x)[..., None]

    def exact(t, w):
        # closed form on the same Brownian path, w = W(t) - W(0)
        return x0 * np.exp((a - 0.5 * b * b) * t + b * np.asarray(w))

    return SdeProblem(
        name="gbm", d=1, m=1, drift=drift, diffusion=diffusion, t0=0.0, T=T, x0=(x0,),
        beta=0.0, gamma=1.0, alpha=1.0,
        dominating=(max(abs(a), abs(b), 1e-12), 1.0),
        kernel=("gbm", (a, b)), exact_solution=exact,
        params={"a": a, "b": b},
    )


def _ou(theta, sigma, x0, T):
    def drift(t, x):
        return -theta * x

    def diffusion(t, x):
        return np.full(np.shape(x) + (1,), sigma)

    return SdeProblem(
        name="ou", d=1, m=1, drift=drift, diffusion=diffusion, t0=0.0, T=T, x0=(x0,),
        beta=0.0, gamma=1.0, alpha=1.0,
        dominating=(abs(theta) + abs(sigma) + 1e-12, 1.0),
        kernel=("ou", (theta, sigma)),
        params={"theta": theta, "sigma": sigma},
    )


def gbm_second_moment(problem, t):
    a, b = problem.params["a"], problem.params["b"]
    return problem.x0[0] ** 2 * math.exp((2 * a + b * b) * (t - problem.t0))


def ou_moments(problem, t):
    """Mean and variance of the OU state at time t."""
    th, s = problem.params["theta"], problem.params["sigma"]
    h = t - problem.t0
    mean = problem.x0[0] * math.exp(-th * h)
    var = s * s * (1 - math.exp(-2 * th * h)) / (2 * th) if th else s * s * h
    return mean, var


BUILTIN_NAMES = ("example1", "example2", "timechanged2d", "gbm", "ou")


def builtin_problem(name, **overrides):
    """Construct one of the shipped problems.

    ``gbm`` accepts ``a``, ``b``, ``x0``, ``T``; ``ou`` accepts ``theta``,
    ``sigma``, ``x0``, ``T``; ``timechanged2d`` accepts ``T`` (its dual SDE
    is autonomous, so the window only bounds where probes sample).
    """
    if name == "example1":
        _no_overrides(name, overrides)
        return SdeProblem(
            name=name, d=1, m=1, drift=_example1_drift, diffusion=_example1_diffusion,
            t0=0.0, T=1.0, x0=(2.0,), beta=4.0, gamma=0.25, alpha=0.25,
            dominating=(3.0, 5.0), kernel=("example1", ()),
        )
    if name == "example2":
        _no_overrides(name, overrides)
        return SdeProblem(
            name=name, d=1, m=1, drift=_example2_drift, diffusion=_example2_diffusion,
            t0=1.0, T=2.0, x0=(2.0,), beta=4.0, gamma=0.2, alpha=0.4,
            dominating=(3.0, 5.0), kernel=("example2", ()),
        )
    if name == "timechanged2d":
        T = float(overrides.pop("T", 1.0))
        _no_overrides(name, overrides)
        return SdeProblem(
            name=name, d=2, m=1, drift=_tc2d_drift, diffusion=_tc2d_diffusion,
            t0=0.0, T=T, x0=(1.0, 2.0), beta=3.0, gamma=1.0, alpha=1.0,
            dominating=(3.0, 4.0), kernel=("timechanged2d", ()),
        )
    if name == "gbm":
        args = {"a": 0.1, "b": 0.2, "x0": 1.0, "T": 1.0}
        args.update(_known(name, overrides, args))
        return _gbm(float(args["a"]), float(args["b"]), float(args["x0"]), float(args["T"]))
    if name == "ou":
        args = {"theta": 1.0, "sigma": 0.5, "x0": 1.0, "T": 1.0}
        args.update(_known(name, overrides, args))
        return _ou(float(args["theta"]), float(args["sigma"]), float(args["x0"]), float(args["T"]))
    raise UnknownProblem(f"unknown problem {name!r}; choose from {', '.join(BUILTIN_NAMES)}")


def _no_overrides(name, overrides):
    if overrides:
        raise ConfigError(f"problem {name!r} takes no parameters, got {sorted(overrides)}")


def _known(name, overrides, allowed):
    bad = set(overrides) - set(allowed)
    if bad:
        raise ConfigError(f"problem {name!r} has no parameters {sorted(bad)}")
    return overrides


# --- assumption probes -------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str          # "monotone" or "growth"
    t: float
    x: tuple
    y: tuple
    lhs: float
    rhs: float


@dataclass(frozen=True)
class AssumptionProbeReport:
    samples_tested: int
    violations: list
    max_ratio: float

    @property
    def ok(self):
        return not self.violations


def _monotone_ratio(problem, t, x, y, q):
    dx = x - y
    lhs = np.sum(dx * (problem.drift(t, x) - problem.drift(t, y)), axis=-1)
    ds = problem.diffusion(t, x) - problem.diffusion(t, y)
    lhs = lhs + 0.5 * (q - 1.0) * np.sum(ds * ds, axis=(-2, -1))
    return lhs, np.sum(dx * dx, axis=-1)


def _growth_ratio(problem, t, x, q):
    lhs = np.sum(x * problem.drift(t, x), axis=-1)
    s = problem.diffusion(t, x)
    lhs = lhs + 0.5 * (q - 1.0) * np.sum(s * s, axis=(-2, -1))
    return lhs, 1.0 + np.sum(x * x, axis=-1)


GROWTH_FACTOR = 1.5


def probe_monotonicity(problem, q=4.0, n_samples=10_000, box_radius=5.0, rng_seed=0):
    """Sample the one-sided Lipschitz and Khasminskii-type conditions.

    Points ``(t, x, y)`` are drawn uniformly from ``[t0, T] x box x box``.
    ``max_ratio`` is the largest sampled value of

        [(x-y).(mu(x)-mu(y)) + (q-1)/2 sum_r |s_r(x)-s_r(y)|^2] / |x-y|^2
        [x.mu(x) + (q-1)/2 sum_r |s_r(x)|^2] / (1 + |x|^2)

    A finite box always gives finite ratios, so unboundedness is judged along
    rays: each sample is rescaled so that its larger point (for the growth
    condition: x) sits on the box boundary, then doubled.  If the ratio is positive at the doubled point and
    exceeds ``GROWTH_FACTOR`` times its (positive part) value at the boundary,
    the ratio grows at least linearly in |x| and the sample is recorded as a
    violation with ``lhs`` the numerator and ``rhs`` the bound implied by the
    boundary ratio, both at the doubled point.  Sub-linear growth of the ratio
    goes unnoticed.
    """
    if not q > 2:
        raise ConfigError(f"q must exceed 2, got {q}")
    n = int(n_samples)
    if n < 1:
        raise ConfigError("n_samples must be >= 1")
    if not box_radius > 0:
        raise ConfigError("box_radius must be positive")
    d = problem.d
    key_t = stream_key(rng_seed, STREAM_PROBE, 0, 0)
    key_x = stream_key(rng_seed, STREAM_PROBE, 0, 1)
    key_y = stream_key(rng_seed, STREAM_PROBE, 0, 2)
    ts = problem.t0 + (problem.T - problem.t0) * uniforms(key_t, 0, n)
    xs = box_radius * (2.0 * uniforms(key_x, 0, n * d) - 1.0).reshape(n, d)
    ys = box_radius * (2.0 * uniforms(key_y, 0, n * d) - 1.0).reshape(n, d)

    violations = []
    max_ratio = -math.inf
    with np.errstate(all="ignore"):
        for i in range(n):
            t, x, y = float(ts[i]), xs[i], ys[i]
            big = max(np.linalg.norm(x), np.linalg.norm(y))
            s = box_radius / big if big > 0 else 0.0
            # rows: sample, boundary-scaled, doubled; the pair is scaled
            # jointly, the growth condition scales x alone
            px = np.stack([x, s * x, 2 * s * x])
            py = np.stack([y, s * y, 2 * s * y])
            nx = np.linalg.norm(x)
            sx = box_radius / nx if nx > 0 else 0.0
            gx = np.stack([x, sx * x, 2 * sx * x])
            lhs_m, norm_m = _monotone_ratio(problem, t, px, py, q)
            lhs_g, norm_g = _growth_ratio(problem, t, gx, q)
            ratio_m = lhs_m / np.where(norm_m > 0, norm_m, 1.0)
            ratio_g = lhs_g / norm_g
            max_ratio = max(max_ratio, float(ratio_g[0]))
            if norm_m[0] > 0:
                max_ratio = max(max_ratio, float(ratio_m[0]))
            checks = []
            if big > 0 and norm_m[1] > 0:
                checks.append(("monotone", px[2], py[2], ratio_m[1], lhs_m[2], norm_m[2]))
            if nx > 0:
                checks.append(("growth", gx[2], gx[2], ratio_g[1], lhs_g[2], norm_g[2]))
            for kind, vx, vy, ratio_a, lhs_b, norm_b in checks:
                rhs = GROWTH_FACTOR * max(float(ratio_a), 0.0) * float(norm_b)
                if lhs_b > 0 and lhs_b > rhs:
                    violations.append(Violation(kind, t, tuple(map(float, vx)), tuple(map(float, vy)),
                                                float(lhs_b), rhs))
    return AssumptionProbeReport(n, violations, float(max_ratio))
