"""Strong error estimation on coupled paths, moment sweeps and rate regression.

Every path draws its finest noise once (Brownian increments at ``dt_ref`` and,
for time-changed runs, the subordinator walk at ``dt_ref``); coarser step
sizes use block sums of the same increments.  Paths are processed in batches
of fixed composition, so the worker count never changes any number, and
per-path errors are reduced in path-index order.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import ConfigError, EstimatorDegenerate, GridMismatch, InvalidData
from .noise import block_sum, brownian_block, check_seed, integer_ratio
from .scheme import (StepPlan, coarse_increments, frozen_coefficients, grid_times, plan_steps,
                     truncation_radius)
from .subordination import (SubordinatorPath, SubordinatorSpec, coarsen_subordinator,
                            simulate_subordinator)

log = logging.getLogger(__name__)

BATCH_SIZE = 100
CHUNK_TARGET = 1 << 15


@dataclass(frozen=True)
class ErrorRow:
    dt: float
    error: float
    stderr: float
    n_paths: int
    n_failed: int


@dataclass(frozen=True)
class ErrorReport:
    rows: list
    q_bar: float
    regression: Optional[tuple] = None     # (slope, intercept, r_squared)
    meta: dict = field(default_factory=dict)

    @property
    def slope(self):
        return self.regression[0] if self.regression else math.nan


def regress_rate(rows):
    """Least squares of log(error) on log(dt): (slope, intercept, r_squared)."""
    rows = list(rows)
    if len(rows) < 2:
        raise InvalidData("need at least two (dt, error) rows")
    dt = np.array([r[0] for r in rows], dtype=np.float64)
    err = np.array([r[1] for r in rows], dtype=np.float64)
    if not (np.all(np.isfinite(dt)) and np.all(np.isfinite(err))) or np.any(dt <= 0) or np.any(err <= 0):
        raise InvalidData("step sizes and errors must be positive and finite")
    x, y = np.log(dt), np.log(err)
    xc, yc = x - x.mean(), y - y.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise InvalidData("need at least two distinct step sizes")
    slope = float(xc @ yc) / sxx
    intercept = float(y.mean() - slope * x.mean())
    ss_tot = float(yc @ yc)
    resid = y - (intercept + slope * x)
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return slope, intercept, r2


def _summarise(dt, per_path, n_paths, q_bar):
    ok = np.isfinite(per_path)
    n_ok = int(ok.sum())
    n_failed = n_paths - n_ok
    if n_ok == 0:
        raise EstimatorDegenerate(f"all {n_paths} paths failed at dt={dt}")
    if n_failed:
        log.warning("dt=%g: %d of %d paths overflowed and were excluded", dt, n_failed, n_paths)
    vals = per_path[ok]
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / math.sqrt(n_ok)) if n_ok > 1 else math.nan
    return ErrorRow(float(dt), mean, stderr, int(n_paths), int(n_failed))


def _report(rows, q_bar, meta):
    usable = [(r.dt, r.error) for r in rows if math.isfinite(r.error) and r.error > 0]
    regression = None
    if len(usable) >= 2 and len({d for d, _ in usable}) >= 2:
        regression = regress_rate(usable)
    return ErrorReport(rows, float(q_bar), regression, meta)


def _chunk_len(factors):
    base = 1
    for k in factors:
        base = base * k // math.gcd(base, k)
    return base * max(1, CHUNK_TARGET // base)


def _run_batches(fn, n_paths, workers):
    starts = list(range(0, n_paths, BATCH_SIZE))
    batches = [np.arange(s, min(s + BATCH_SIZE, n_paths)) for s in starts]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            results = list(pool.map(fn, batches))
    else:
        results = [fn(b) for b in batches]
    return results


def _validate(dts, dt_ref, q_bar, n_paths, base_seed):
    if not dts:
        raise ConfigError("need at least one step size")
    if not q_bar >= 1:
        raise ConfigError(f"q_bar must be >= 1, got {q_bar}")
    if int(n_paths) < 2:
        raise ConfigError("need at least two paths")
    check_seed(base_seed)
    for dt in list(dts) + [dt_ref]:
        if not 0 < dt <= 1:
            raise ConfigError(f"step sizes must lie in (0, 1], got {dt}")
    return [integer_ratio(dt, dt_ref) for dt in dts]


def _check_coupling(fine, coarse_inc, plan):
    # shared-grid partial sums of the coarse and fine noise must agree exactly
    w_fine = np.sum(fine[:, :plan.fine_steps], axis=1)
    w_coarse = np.sum(coarse_inc, axis=1)
    if not np.array_equal(w_fine, w_coarse):
        raise RuntimeError("coarse noise is not an exact block sum of the fine noise")


def strong_error_sweep(problem, policy, dts, dt_ref, q_bar=1.0, n_paths=1000, base_seed=0,
                       time_changed=False, alpha_s=0.9, oracle="reference", horizon=None,
                       subordinator_increments=None, workers=1, backend=None):
    """Estimate E|x_ref(T) - x_dt(T)|^q_bar for every dt in ``dts``.

    ``oracle="exact"`` compares with ``problem.exact_solution`` evaluated on
    the same Brownian path instead of the ``dt_ref`` run.  ``time_changed``
    compares x_dt(E_dt(horizon)) with x_ref(E_ref(horizon)); an injected walk
    (``subordinator_increments`` at ``dt_ref``) replaces the random one.
    """
    dts = [float(d) for d in dts]
    factors = _validate(dts, dt_ref, q_bar, n_paths, base_seed)
    n_paths = int(n_paths)
    if oracle not in ("reference", "exact"):
        raise ConfigError(f"oracle must be 'reference' or 'exact', got {oracle!r}")
    if oracle == "exact":
        if problem.exact_solution is None:
            raise ConfigError(f"problem {problem.name!r} has no closed-form solution")
        if time_changed:
            raise ConfigError("the exact oracle is not available for time-changed runs")
    meta = {"problem": problem.name, "dt_ref": float(dt_ref), "oracle": oracle,
            "epsilon": policy.epsilon, "mode": policy.mode, "seed": int(base_seed),
            "time_changed": bool(time_changed)}
    if time_changed:
        horizon = float(problem.T - problem.t0 if horizon is None else horizon)
        meta.update(alpha_s=alpha_s, horizon=horizon)
        fn = _time_changed_batch(problem, policy, dts, factors, dt_ref, q_bar, base_seed,
                                 alpha_s, horizon, subordinator_increments, backend)
    else:
        fn = _classical_batch(problem, policy, dts, factors, dt_ref, q_bar, base_seed,
                              oracle, backend)
    results = _run_batches(fn, n_paths, workers)
    per_level = np.concatenate(results, axis=1)
    rows = [_summarise(dt, per_level[i], n_paths, q_bar) for i, dt in enumerate(dts)]
    return _report(rows, q_bar, meta)


def _pathwise(x, ref, q_bar):
    with np.errstate(all="ignore"):
        e = np.sqrt(np.sum((x - ref) ** 2, axis=-1)) ** q_bar
    e[~np.isfinite(e)] = np.nan
    return e


def _classical_batch(problem, policy, dts, factors, dt_ref, q_bar, base_seed, oracle, backend):
    length = problem.T - problem.t0
    ref_plan = plan_steps(length, dt_ref, dt_ref)
    if ref_plan.sliver_fine:
        raise GridMismatch(f"T - t0 = {length} is not a multiple of dt_ref = {dt_ref}")
    n_fine = ref_plan.n_full
    plans = [plan_steps(length, dt, dt_ref) for dt in dts]
    levels = list(plans)
    if oracle == "reference":
        levels.append(ref_plan)
    radii = [truncation_radius(policy, p.dt) for p in levels]
    chunk = _chunk_len([p.factor for p in levels])
    d, m = problem.d, problem.m

    def run(paths):
        n = len(paths)
        xs = [np.tile(problem.x0_array, (n, 1)) for _ in levels]
        w_total = np.zeros((n, m))
        done = [0] * len(levels)           # coarse steps taken per level
        for s in range(0, n_fine, chunk):
            L = min(chunk, n_fine - s)
            fine = brownian_block(base_seed, paths, m, dt_ref, s, L)
            w_total += np.sum(fine, axis=1)
            for i, plan in enumerate(levels):
                # chunks are multiples of every factor, so only the last one
                # can end in a short step
                n_full, tail = divmod(L, plan.factor)
                piece = StepPlan(plan.dt, plan.factor, n_full, plan.sliver, tail)
                dW = np.ascontiguousarray(coarse_increments(fine, piece, axis=1))
                if s == 0:
                    _check_coupling(fine, dW, piece)
                kernels.advance(problem, xs[i], dW, problem.t0, plan.dt, done[i],
                                piece.step_lengths(), radii[i], backend=backend)
                done[i] += dW.shape[1]
        if oracle == "exact":
            ref = problem.exact_solution(length, w_total)
        else:
            ref = xs[-1]
        return np.stack([_pathwise(xs[i], ref, q_bar) for i in range(len(plans))])

    return run


def _time_changed_batch(problem, policy, dts, factors, dt_ref, q_bar, base_seed,
                        alpha_s, horizon, sub_increments, backend):
    spec = SubordinatorSpec(alpha_s)
    all_factors = factors + [1]
    all_dts = dts + [dt_ref]
    chunk = _chunk_len(all_factors)
    align = chunk
    radii = [truncation_radius(policy, dt) for dt in all_dts]
    injected = None
    if sub_increments is not None:
        inc = np.asarray(sub_increments, dtype=np.float64)
        n_inc = -(-len(inc) // align) * align
        inc = np.concatenate([inc, np.full(n_inc - len(inc), inc[-1])]) if n_inc > len(inc) else inc
        values = np.concatenate([[0.0], np.cumsum(inc)])
        if not values[-1] > horizon:
            raise ConfigError("injected subordinator does not pass the horizon")
        injected = SubordinatorPath(float(dt_ref), values, horizon)
    m = problem.m

    def run(paths):
        n = len(paths)
        levels = np.empty((len(all_dts), n), dtype=np.int64)
        for j, p in enumerate(paths):
            walk = injected or simulate_subordinator(spec, dt_ref, horizon, base_seed, p,
                                                     align=align)
            for i, k in enumerate(all_factors):
                coarse = coarsen_subordinator(walk, k)
                levels[i, j] = coarse.inverse().index(horizon)
        # fine Brownian steps needed to reach every level's node
        need = int(max((levels[i] * k).max() for i, k in enumerate(all_factors)))
        n_fine = max(chunk, -(-need // chunk) * chunk)
        xs = [np.tile(problem.x0_array, (n, 1)) for _ in all_dts]
        rec = [np.full((n, problem.d), np.nan) for _ in all_dts]
        done = [0] * len(all_dts)
        for s in range(0, n_fine, chunk):
            fine = brownian_block(base_seed, paths, m, dt_ref, s, chunk)
            for i, k in enumerate(all_factors):
                dW = block_sum(fine, k, axis=1)
                if s == 0:
                    _check_coupling(fine, dW, StepPlan(all_dts[i], k, chunk // k, 0.0, 0))
                h = np.full(dW.shape[1], all_dts[i])
                kernels.advance(problem, xs[i], dW, problem.t0, all_dts[i], done[i], h, radii[i],
                                record_idx=levels[i], recorded=rec[i], backend=backend)
                done[i] += dW.shape[1]
        return np.stack([_pathwise(rec[i], rec[-1], q_bar) for i in range(len(dts))])

    return run


def moment_sweep(problem, policy, dts, p=2.0, n_paths=1000, base_seed=0, backend=None):
    """[(dt, max_k mean |x_dt(t_k)|^p)] on paths coupled through the finest dt."""
    dts = [float(d) for d in dts]
    if not p >= 2:
        raise ConfigError(f"p must be >= 2, got {p}")
    base = min(dts)
    _validate(dts, base, 2.0, n_paths, base_seed)
    length = problem.T - problem.t0
    base_plan = plan_steps(length, base, base)
    paths = np.arange(int(n_paths))
    fine = brownian_block(base_seed, paths, problem.m, base, 0, base_plan.fine_steps)
    out = []
    for dt in dts:
        states = _all_states(problem, policy, dt, base, fine, backend)
        with np.errstate(all="ignore"):
            mom = np.sqrt(np.sum(states * states, axis=-1)) ** p     # (n, nodes)
        ok = np.all(np.isfinite(mom), axis=1)
        if not ok.any():
            raise EstimatorDegenerate(f"all paths failed at dt={dt}")
        if not ok.all():
            log.warning("dt=%g: %d of %d paths overflowed and were excluded", dt, (~ok).sum(), len(ok))
        out.append((dt, float(np.max(np.mean(mom[ok], axis=0)))))
    return out


def _all_states(problem, policy, dt, fine_dt, fine, backend):
    plan = plan_steps(problem.T - problem.t0, dt, fine_dt)
    dW = np.ascontiguousarray(coarse_increments(fine, plan, axis=1))
    n = fine.shape[0]
    x = np.tile(problem.x0_array, (n, 1))
    traj = np.empty((n, plan.n_steps + 1, problem.d))
    kernels.advance(problem, x, dW, problem.t0, dt, 0, plan.step_lengths(),
                    truncation_radius(policy, dt), traj=traj, backend=backend)
    return traj


def step_gap_estimate(problem, policy, dt, n_paths=1000, base_seed=0, p_bar=2.0, backend=None):
    """max over interval midpoints of mean |x_dt(mid) - xbar_dt(mid)|^p_bar.

    Noise lives on a grid of dt/2; the continuous version at a midpoint adds
    the frozen coefficients times the first half-step of time and noise.
    Only full steps contribute midpoints.
    """
    if not p_bar > 0:
        raise ConfigError(f"p_bar must be positive, got {p_bar}")
    check_seed(base_seed)
    half = dt / 2.0
    length = problem.T - problem.t0
    plan = plan_steps(length, dt, half)
    paths = np.arange(int(n_paths))
    fine = brownian_block(base_seed, paths, problem.m, half, 0, plan.fine_steps)
    states = _all_states(problem, policy, dt, half, fine, backend)
    radius = truncation_radius(policy, dt)
    t_grid = grid_times(problem, plan)
    best = 0.0
    with np.errstate(all="ignore"):
        for k in range(plan.n_full):
            mu, sig = frozen_coefficients(problem, t_grid[k], states[:, k], radius)
            gap = mu * half + np.einsum("ndm,nm->nd", sig, fine[:, 2 * k])
            g = np.sqrt(np.sum(gap * gap, axis=-1)) ** p_bar
            g = g[np.isfinite(g)]
            if g.size:
                best = max(best, float(np.mean(g)))
    return best
