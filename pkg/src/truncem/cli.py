"""Command-line front end: ``truncem {rates,timechanged,moments,probe,simulate}``.

Every option can also come from a JSON document given with ``--config``;
explicit flags win over the document, and ``TRUNCEM_SEED`` in the
environment wins over the document's seed but not over ``--seed``.

Exit codes: 0 success, 2 invalid configuration, 3 estimator or numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .errorlab import moment_sweep, strong_error_sweep
from .errors import ConfigError, TruncEMError
from .model import BUILTIN_NAMES, builtin_problem, probe_monotonicity
from .noise import check_seed, generate_brownian, seed_from_env
from .scheme import CLASSICAL, TRUNCATED, default_policy, solve_truncated_em
from .subordination import (MAX_HORIZON, SubordinatorSpec, load_increments, simulate_subordinator,
                            solve_time_changed, subordinator_from_increments)

log = logging.getLogger("truncem")

COMMANDS = ("rates", "timechanged", "moments", "probe", "simulate")

EXIT_OK, EXIT_CONFIG, EXIT_ESTIMATOR = 0, 2, 3


@dataclass
class ExperimentConfig:
    command: str
    problem: str = "example1"
    dts: list = field(default_factory=lambda: [1e-1, 1e-2, 1e-3])
    ref_dt: float = 1e-5
    dt: float = 1e-3
    epsilon: Optional[float] = None
    mode: str = TRUNCATED
    kappa_floor: float = 0.0
    q: float = 1.0
    p: float = 2.0
    paths: int = 1000
    seed: int = 0
    alpha_s: float = 0.9
    horizon: Optional[float] = None
    oracle: str = "reference"
    samples: int = 10_000
    box_radius: float = 5.0
    path_index: int = 0
    workers: int = 1
    emit_paths: bool = False
    emit_continuous: bool = False
    noise_dt: Optional[float] = None
    subordinator_file: Optional[str] = None
    out: Optional[str] = None

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.problem not in BUILTIN_NAMES:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {', '.join(BUILTIN_NAMES)}")
        self.dts = _float_list(self.dts, "dts")
        for name in ("ref_dt", "dt", "q", "p", "alpha_s", "box_radius", "kappa_floor"):
            setattr(self, name, _number(getattr(self, name), name))
        for name in ("epsilon", "horizon", "noise_dt"):
            if getattr(self, name) is not None:
                setattr(self, name, _number(getattr(self, name), name))
        for name in ("paths", "samples", "path_index", "workers"):
            setattr(self, name, _integer(getattr(self, name), name))
        self.seed = check_seed(_integer(self.seed, "seed"))
        if any(not 0 < d <= 1 for d in self.dts + [self.ref_dt, self.dt]):
            raise ConfigError("step sizes must lie in (0, 1]")
        if self.epsilon is not None and not 0 < self.epsilon < 0.25:
            raise ConfigError(f"epsilon must lie in (0, 1/4), got {self.epsilon}")
        if self.mode not in (TRUNCATED, CLASSICAL):
            raise ConfigError(f"mode must be truncated or classical, got {self.mode!r}")
        if self.kappa_floor < 0:
            raise ConfigError("--kappa-floor must be >= 0")
        if self.q < 1:
            raise ConfigError("--q must be >= 1")
        if self.command == "probe" and not self.q > 2:
            raise ConfigError("probe needs --q > 2")
        if self.p < 2:
            raise ConfigError("--p must be >= 2")
        if self.paths < 2:
            raise ConfigError("--paths must be >= 2")
        if self.samples < 1 or self.box_radius <= 0:
            raise ConfigError("--samples must be >= 1 and --box-radius positive")
        if self.workers < 1 or self.path_index < 0:
            raise ConfigError("--workers must be >= 1 and --path-index >= 0")
        if not 0 < self.alpha_s < 1:
            raise ConfigError(f"--alpha-s must lie in (0, 1), got {self.alpha_s}")
        if self.horizon is not None and not 0 < self.horizon <= MAX_HORIZON:
            raise ConfigError(f"--horizon must lie in (0, {MAX_HORIZON}]")
        if self.oracle not in ("reference", "exact"):
            raise ConfigError("--oracle must be reference or exact")
        if self.noise_dt is not None and not 0 < self.noise_dt <= self.dt:
            raise ConfigError("--noise-dt must lie in (0, dt]")
        if self.subordinator_file is not None and not Path(self.subordinator_file).is_file():
            raise ConfigError(f"subordinator file {self.subordinator_file!r} not found")
        if self.out is None:
            self.out = f"{self.problem}_{self.command}"
        return self


def _float_list(value, name):
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected a comma-separated list of numbers") from exc
    if not out:
        raise ConfigError(f"{name}: empty list")
    return out


def _number(value, name):
    try:
        out = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: not a number: {value!r}") from exc
    if not math.isfinite(out):
        raise ConfigError(f"{name}: must be finite")
    return out


def _integer(value, name):
    try:
        out = int(value, 0) if isinstance(value, str) else int(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: not an integer: {value!r}") from exc
    if isinstance(value, float) and value != out:
        raise ConfigError(f"{name}: not an integer: {value!r}")
    return out


# --- output helpers -------------------------------------------------------------

def fmt(x):
    """Round-trip decimal text for floats."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, rows, comments=()):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
        for c in comments:
            fh.write(f"# {c}\n")
    return path


def regression_lines(report):
    if report.regression is None:
        return ["slope=nan", "intercept=nan", "r2=nan"]
    slope, intercept, r2 = report.regression
    return [f"slope={fmt(slope)}", f"intercept={fmt(intercept)}", f"r2={fmt(r2)}"]


def write_report(report, prefix):
    rows = [(r.dt, r.error, r.stderr, r.n_paths, r.n_failed) for r in report.rows]
    lines = regression_lines(report)
    csv = write_csv(f"{prefix}_errors.csv", ["dt", "error", "stderr", "n_paths", "n_failed"],
                    rows, lines)
    rate = Path(f"{prefix}_rate.txt")
    rate.write_text("\n".join(lines) + "\n")
    return [csv, str(rate)]


# --- commands -------------------------------------------------------------------

def _problem_and_policy(cfg, **overrides):
    problem = builtin_problem(cfg.problem, **overrides)
    return problem, default_policy(problem, cfg.epsilon, cfg.mode, cfg.kappa_floor)


def run_rates(cfg):
    problem, policy = _problem_and_policy(cfg)
    report = strong_error_sweep(problem, policy, cfg.dts, cfg.ref_dt, cfg.q, cfg.paths, cfg.seed,
                                oracle=cfg.oracle, workers=cfg.workers)
    files = write_report(report, cfg.out)
    _announce(report)
    return files


def run_timechanged(cfg):
    horizon = cfg.horizon if cfg.horizon is not None else 1.0
    extra = {"T": horizon} if cfg.problem == "timechanged2d" else {}
    problem, policy = _problem_and_policy(cfg, **extra)
    injected = load_increments(cfg.subordinator_file) if cfg.subordinator_file else None
    report = strong_error_sweep(problem, policy, cfg.dts, cfg.ref_dt, cfg.q, cfg.paths, cfg.seed,
                                time_changed=True, alpha_s=cfg.alpha_s, horizon=horizon,
                                subordinator_increments=injected, workers=cfg.workers)
    files = write_report(report, cfg.out)
    if cfg.emit_paths:
        files += emit_sample_paths(cfg, problem, policy, horizon)
    _announce(report)
    return files


def emit_sample_paths(cfg, problem, policy, horizon):
    """One path of D, E and every component of y = x(E) on the finest dt."""
    dt = min(cfg.dts)
    sub = None
    if cfg.subordinator_file:
        sub = subordinator_from_increments(load_increments(cfg.subordinator_file), dt, horizon)
    else:
        sub = simulate_subordinator(SubordinatorSpec(cfg.alpha_s), dt, horizon, cfg.seed,
                                    cfg.path_index)
    n = int(round(horizon / dt))
    times = np.minimum(np.arange(n + 1) * dt, horizon)
    sol = solve_time_changed(problem, policy, dt, horizon, cfg.seed, cfg.path_index, times,
                             alpha_s=cfg.alpha_s, subordinator=sub)
    p = cfg.out
    files = [write_csv(f"{p}_D.csv", ["t", "D"],
                       zip(np.arange(sub.n_steps + 1) * dt, sub.values)),
             write_csv(f"{p}_E.csv", ["t", "E"], zip(times, sol.clock))]
    for c in range(problem.d):
        files.append(write_csv(f"{p}_y{c + 1}.csv", ["t", f"y{c + 1}"],
                               zip(times, sol.states[:, c])))
    return files


def run_moments(cfg):
    problem, policy = _problem_and_policy(cfg)
    rows = moment_sweep(problem, policy, cfg.dts, cfg.p, cfg.paths, cfg.seed)
    vals = [v for _, v in rows]
    spread = max(vals) / min(vals) if min(vals) > 0 else math.inf
    path = write_csv(f"{cfg.out}_moments.csv", ["dt", "moment"], rows,
                     [f"p={fmt(cfg.p)}", f"max_over_min={fmt(spread)}"])
    print(f"moments p={cfg.p}: " + ", ".join(f"dt={d:g}: {v:.6g}" for d, v in rows))
    return [path]


def run_probe(cfg):
    problem = builtin_problem(cfg.problem)
    rep = probe_monotonicity(problem, cfg.q, cfg.samples, cfg.box_radius, cfg.seed)
    d = problem.d
    header = (["kind", "t"] + [f"x{i + 1}" for i in range(d)] + [f"y{i + 1}" for i in range(d)]
              + ["lhs", "rhs"])
    path = Path(f"{cfg.out}_probe.csv")
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for v in rep.violations:
            fh.write(",".join([v.kind] + [fmt(z) for z in (v.t, *v.x, *v.y, v.lhs, v.rhs)]) + "\n")
        fh.write(f"# samples_tested={rep.samples_tested}\n")
        fh.write(f"# violations={len(rep.violations)}\n")
        fh.write(f"# max_ratio={fmt(rep.max_ratio)}\n")
    print(f"probe {cfg.problem} q={cfg.q}: {rep.samples_tested} samples, "
          f"{len(rep.violations)} violations, max ratio {rep.max_ratio:.6g}")
    return [str(path)]


def run_simulate(cfg):
    problem, policy = _problem_and_policy(cfg)
    noise_dt = cfg.noise_dt or cfg.dt
    length = problem.T - problem.t0
    n_noise = int(math.ceil(length / noise_dt - 1e-9))
    path = generate_brownian(problem.m, noise_dt, n_noise, cfg.seed, cfg.path_index, problem.t0)
    traj = solve_truncated_em(problem, policy, cfg.dt, path, emit_continuous=cfg.emit_continuous)
    cols = ["t"] + [f"x{i + 1}" for i in range(problem.d)]
    files = [write_csv(f"{cfg.out}_trajectory.csv", cols,
                       ([t, *x] for t, x in zip(traj.t_grid, traj.states)))]
    if traj.fine_times is not None:
        files.append(write_csv(f"{cfg.out}_continuous.csv", cols,
                               ([t, *x] for t, x in zip(traj.fine_times, traj.fine_states))))
    return files


RUNNERS = {"rates": run_rates, "timechanged": run_timechanged, "moments": run_moments,
           "probe": run_probe, "simulate": run_simulate}


def _announce(report):
    for r in report.rows:
        print(f"dt={r.dt:g}  error={r.error:.6g} +- {r.stderr:.2g}  failed={r.n_failed}/{r.n_paths}")
    print("  ".join(regression_lines(report)))


# --- argument handling ----------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="truncem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with option values; flags override it")
        p.add_argument("--problem", choices=BUILTIN_NAMES)
        p.add_argument("--seed", help="unsigned 64-bit seed (env TRUNCEM_SEED)")
        p.add_argument("--out", help="output path prefix")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    def solver(p):
        p.add_argument("--epsilon", type=float, help="kappa(dt) = dt**-epsilon")
        p.add_argument("--mode", choices=(TRUNCATED, CLASSICAL))
        p.add_argument("--kappa-floor", dest="kappa_floor", type=float,
                       help="lower bound on kappa(dt); 0 (default) disables it")
        return p

    def sweep(p):
        p.add_argument("--dts", help="comma-separated step sizes")
        p.add_argument("--ref-dt", dest="ref_dt", type=float)
        p.add_argument("--paths", type=int)
        p.add_argument("--q", type=float, help="error exponent q_bar")
        p.add_argument("--workers", type=int)
        return p

    p = sweep(solver(common(sub.add_parser("rates", help="strong error sweep and rate"))))
    p.add_argument("--oracle", choices=("reference", "exact"))

    p = sweep(solver(common(sub.add_parser("timechanged", help="time-changed error sweep"))))
    p.add_argument("--alpha-s", dest="alpha_s", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--emit-paths", dest="emit_paths", action="store_true", default=None)
    p.add_argument("--path-index", dest="path_index", type=int)
    p.add_argument("--subordinator-file", dest="subordinator_file",
                   help="walk increments at --ref-dt, one per line")

    p = solver(common(sub.add_parser("moments", help="max-over-grid p-th moments")))
    p.add_argument("--dts")
    p.add_argument("--paths", type=int)
    p.add_argument("--p", type=float)

    p = common(sub.add_parser("probe", help="sample the structural assumptions"))
    p.add_argument("--q", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--box-radius", dest="box_radius", type=float)

    p = solver(common(sub.add_parser("simulate", help="dump one trajectory")))
    p.add_argument("--dt", type=float)
    p.add_argument("--noise-dt", dest="noise_dt", type=float, help="finer Brownian grid")
    p.add_argument("--path-index", dest="path_index", type=int)
    p.add_argument("--emit-continuous", dest="emit_continuous", action="store_true", default=None)
    return parser


def resolve_config(args, environ_seed=None):
    values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        known = {f.name for f in fields(ExperimentConfig)} - {"command"}
        extra = {k.replace("-", "_") for k in doc} - known
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")
        values.update({k.replace("-", "_"): v for k, v in doc.items()})
    if environ_seed is not None:
        values["seed"] = environ_seed
    for key, val in vars(args).items():
        if key in ("command", "config", "verbose") or val is None:
            continue
        values[key] = val
    return ExperimentConfig(command=args.command, **values).validate()


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = resolve_config(args, seed_from_env())
    except ConfigError as exc:
        print(f"truncem: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        files = RUNNERS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"truncem: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TruncEMError as exc:
        print(f"truncem: failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR
    for f in files:
        log.info("wrote %s", f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
