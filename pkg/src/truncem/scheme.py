"""Truncation machinery and the truncated Euler-Maruyama integrator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import kernels
from ._pykernels import em_rows, truncate_rows
from .errors import ConfigError, GridMismatch, InvalidStepSize, NumericOverflow
from .noise import block_sum, integer_ratio, n_grid_steps

TRUNCATED = "truncated"
CLASSICAL = "classical"


@dataclass(frozen=True)
class TruncationPolicy:
    """Dominating function ``f`` with its inverse and the schedule Delta**-epsilon.

    ``h_hat`` bounds Delta**(1/4) * kappa(Delta); it never enters the
    computation and is kept only so a policy records the full construction.
    """

    f: Callable[[float], float]
    f_inverse: Callable[[float], float]
    epsilon: float = 0.1
    h_hat: float = 1.0
    mode: str = TRUNCATED
    kappa_floor: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.epsilon < 0.25:
            raise ConfigError(f"epsilon must lie in (0, 1/4), got {self.epsilon}")
        if not self.h_hat >= 1.0:
            raise ConfigError(f"h_hat must be >= 1, got {self.h_hat}")
        if self.mode not in (TRUNCATED, CLASSICAL):
            raise ConfigError(f"mode must be {TRUNCATED!r} or {CLASSICAL!r}, got {self.mode!r}")
        if not self.kappa_floor >= 0.0:
            raise ConfigError(f"kappa_floor must be >= 0, got {self.kappa_floor}")

    def kappa(self, dt):
        # kappa_floor = f(1) keeps the radius >= 1; off by default
        return max(dt ** (-self.epsilon), self.kappa_floor)


def power_policy(coeff, power, epsilon=0.1, mode=TRUNCATED, h_hat=1.0, kappa_floor=0.0):
    """Policy with f(u) = coeff * u**power."""
    coeff, power = float(coeff), float(power)

    def f(u):
        return coeff * u ** power

    def f_inverse(v):
        return (v / coeff) ** (1.0 / power)

    return TruncationPolicy(f, f_inverse, epsilon, h_hat, mode, kappa_floor)


DEFAULT_EPSILON = {"timechanged2d": 0.01}


def default_policy(problem, epsilon=None, mode=TRUNCATED, kappa_floor=0.0):
    """The power-law policy from the problem's dominating bound."""
    if epsilon is None:
        epsilon = DEFAULT_EPSILON.get(problem.name, 0.1)
    coeff, power = problem.dominating
    return power_policy(coeff, power, epsilon, mode, kappa_floor=kappa_floor)


def truncation_radius(policy, dt):
    """f^{-1}(kappa(dt)); infinite in classical mode."""
    if not 0.0 < dt <= 1.0:
        raise InvalidStepSize(f"step size must lie in (0, 1], got {dt}")
    if policy.mode == CLASSICAL:
        return math.inf
    return float(policy.f_inverse(policy.kappa(dt)))


def truncate_state(x, radius):
    """(|x| ^ radius) x/|x| with 0 mapped to 0."""
    if not radius > 0:
        raise ConfigError(f"radius must be positive, got {radius}")
    x = np.asarray(x, dtype=np.float64)
    return truncate_rows(x.reshape(1, -1), radius).reshape(x.shape).copy()


def step_truncated_em(problem, policy, t_k, x_k, step_len, dW, dt_nominal=None):
    """One step from ``x_k`` at ``t_k``.

    The truncation radius belongs to the nominal step size ``dt_nominal``
    (default ``step_len``), so a short final step keeps the run's radius.
    """
    x_k = np.asarray(x_k, dtype=np.float64).reshape(1, problem.d)
    dW = np.asarray(dW, dtype=np.float64).reshape(1, problem.m)
    if step_len == 0:
        return x_k[0].copy()
    radius = truncation_radius(policy, dt_nominal if dt_nominal is not None else step_len)
    with np.errstate(all="ignore"):
        out = em_rows(problem, t_k, x_k, step_len, dW, radius)[0]
    if not np.all(np.isfinite(out)):
        norm = float(np.linalg.norm(x_k))
        raise NumericOverflow(f"non-finite state after step at t={t_k}", t=t_k, norm=norm)
    return out


@dataclass(frozen=True)
class StepPlan:
    """How a step size ``dt`` lays over a finer noise grid of size ``fine_dt``."""

    dt: float
    factor: int          # fine steps per full step
    n_full: int          # number of full steps
    sliver: float        # length of the final short step, 0 if none
    sliver_fine: int     # fine steps in the final short step

    @property
    def n_steps(self):
        return self.n_full + (1 if self.sliver_fine else 0)

    @property
    def fine_steps(self):
        return self.n_full * self.factor + self.sliver_fine

    def step_lengths(self):
        h = np.full(self.n_steps, self.dt)
        if self.sliver_fine:
            h[-1] = self.sliver
        return h


def plan_steps(length, dt, fine_dt):
    factor = integer_ratio(dt, fine_dt)
    n_full, sliver = n_grid_steps(length, dt)
    sliver_fine = 0
    if sliver > 0:
        sliver_fine, left = n_grid_steps(sliver, fine_dt)
        if left > 0 or sliver_fine == 0:
            raise GridMismatch(f"final step {sliver} is not a multiple of the noise step {fine_dt}")
    return StepPlan(float(dt), factor, n_full, float(sliver), sliver_fine)


def coarse_increments(fine, plan, axis=-2):
    """Increments for ``plan`` from fine increments along ``axis``."""
    fine = np.moveaxis(np.asarray(fine), axis, -1)
    full = plan.n_full * plan.factor
    parts = [block_sum(fine[..., :full], plan.factor)]
    if plan.sliver_fine:
        parts.append(block_sum(fine[..., full:full + plan.sliver_fine], plan.sliver_fine))
    return np.moveaxis(np.concatenate(parts, axis=-1), -1, axis)


@dataclass(frozen=True)
class TrajectoryGrid:
    t_grid: np.ndarray
    states: np.ndarray
    dt: float
    policy_snapshot: tuple            # (epsilon, radius)
    fine_times: Optional[np.ndarray] = None
    fine_states: Optional[np.ndarray] = None

    def step_process(self, t):
        """x-bar(t): the state at the last grid node not after ``t``."""
        k = np.searchsorted(self.t_grid, t, side="right") - 1
        return self.states[np.clip(k, 0, len(self.t_grid) - 1)]


def grid_times(problem, plan):
    k = np.arange(plan.n_full + 1)
    t = problem.t0 + k * plan.dt
    if plan.sliver_fine:
        t = np.append(t, problem.T)
    t[-1] = problem.T
    return t


def solve_truncated_em(problem, policy, dt, path, emit_continuous=False, backend=None):
    """Run the scheme over [t0, T] on the noise of ``path``.

    ``path.dt`` must divide ``dt``; the solver sums blocks of fine increments.
    With ``emit_continuous`` and a finer path, the continuous version is also
    returned at every fine time, with coefficients frozen at the last node.
    """
    plan = plan_steps(problem.T - problem.t0, dt, path.dt)
    if path.channels != problem.m:
        raise GridMismatch(f"path has {path.channels} channels, problem needs {problem.m}")
    if path.n_steps < plan.fine_steps:
        raise GridMismatch(f"path covers {path.n_steps} fine steps, need {plan.fine_steps}")
    radius = truncation_radius(policy, dt)
    fine = path.increments.T[None, :plan.fine_steps, :]           # (1, N_fine, m)
    dW = np.ascontiguousarray(coarse_increments(fine, plan, axis=1))
    x = problem.x0_array.reshape(1, -1).copy()
    traj = np.empty((1, plan.n_steps + 1, problem.d))
    kernels.advance(problem, x, dW, problem.t0, dt, 0, plan.step_lengths(), radius,
                    traj=traj, backend=backend)
    states = traj[0]
    bad = ~np.all(np.isfinite(states), axis=1)
    t_grid = grid_times(problem, plan)
    if bad.any():
        k = int(np.argmax(bad))
        prev = states[k - 1] if k else states[0]
        raise NumericOverflow(f"non-finite state at step {k} (t={t_grid[k]})",
                              t=float(t_grid[k]), norm=float(np.linalg.norm(prev)), step=k)
    fine_times = fine_states = None
    if emit_continuous and plan.factor > 1:
        fine_times, fine_states = continuous_version(problem, plan, t_grid, states,
                                                     fine[0], path.dt, radius)
    return TrajectoryGrid(t_grid, states, float(dt), (policy.epsilon, radius),
                          fine_times, fine_states)


def frozen_coefficients(problem, t, x, radius):
    """Drift (n, d) and diffusion (n, d, m) at the truncated rows of ``x``."""
    xt = truncate_rows(x, radius)
    return problem.drift(t, xt), problem.diffusion(t, xt)


def continuous_version(problem, plan, t_grid, states, fine, fine_dt, radius):
    """x_Delta at the fine times of every step, coefficients frozen at the node.

    ``fine`` holds the fine increments, shape (N_fine, m).  Returns times and
    states including every grid node.
    """
    times, out = [], []
    start = 0
    for k in range(plan.n_steps):
        n_sub = plan.factor if k < plan.n_full else plan.sliver_fine
        mu, sig = frozen_coefficients(problem, t_grid[k], states[k:k + 1], radius)
        w = np.cumsum(fine[start:start + n_sub - 1], axis=0)        # W(t_k + j*fine_dt) - W(t_k)
        j = np.arange(1, n_sub)[:, None]
        sub = states[k] + mu[0] * (j * fine_dt) + w @ sig[0].T
        times.append(t_grid[k])
        times.extend(t_grid[k] + j[:, 0] * fine_dt)
        out.append(states[k:k + 1])
        out.append(sub)
        start += n_sub
    times.append(t_grid[-1])
    out.append(states[-1:])
    return np.asarray(times), np.concatenate(out, axis=0)
