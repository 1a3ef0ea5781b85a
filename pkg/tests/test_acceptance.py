"""Acceptance criteria 1-9, one test each, at the stated tolerances.

Every test prints a single ``criterion N [PASS|FAIL] ...`` line (visible in
``pytest -v`` output) before asserting.
"""

import math

import numpy as np
import pytest

from truncem.cli import main
from truncem.errorlab import moment_sweep, regress_rate, step_gap_estimate
from truncem.model import builtin_problem
from truncem.noise import stream_key, uniforms
from truncem.scheme import default_policy, truncate_state, truncation_radius
from truncem.subordination import (SubordinatorSpec, coarsen_subordinator, invert_subordinator,
                                   simulate_subordinator, stable_increments)

# pinned protocol and tolerances
EX_DTS = "1e-1,1e-2,1e-3"
EX_REF = "1e-5"
EX1_BAND = (0.17, 0.33)
EX2_BAND = (0.12, 0.28)
TC_DTS = "1e-2,1e-3,1e-4"
TC_REF = "1e-6"
TC_BAND = (0.35, 0.65)
GBM_BAND = (0.4, 0.6)
N_INVARIANT = 10_000
N_WALKS = 1000
LAPLACE_DRAWS = 10 ** 6
LAPLACE_RTOL = 0.01
MOMENT_FACTOR = 3.0
GAP_BAND = (0.7, 1.3)


@pytest.fixture
def report(capsys):
    def emit(n, title, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
        return ok
    return emit


def slope_of(prefix):
    for line in open(f"{prefix}_errors.csv"):
        if line.startswith("# slope="):
            return float(line.split("=", 1)[1])
    raise AssertionError("no slope line")


def run_cli(argv):
    code = main(argv)
    assert code == 0, f"exit code {code}"


EX1_ARGS = ["rates", "--problem", "example1", "--dts", EX_DTS, "--ref-dt", EX_REF,
            "--paths", "1000", "--q", "1", "--epsilon", "0.1", "--seed", "42"]
EX2_ARGS = ["rates", "--problem", "example2", "--dts", EX_DTS, "--ref-dt", EX_REF,
            "--paths", "1000", "--q", "1", "--epsilon", "0.1", "--seed", "42"]
TC_ARGS = ["timechanged", "--problem", "timechanged2d", "--dts", TC_DTS, "--ref-dt", TC_REF,
           "--paths", "100", "--q", "1", "--epsilon", "0.01", "--alpha-s", "0.9", "--seed", "7"]
GBM_ARGS = ["rates", "--problem", "gbm", "--oracle", "exact",
            "--dts", ",".join(repr(2.0 ** -k) for k in range(3, 8)), "--ref-dt", repr(2.0 ** -7),
            "--paths", "1000", "--q", "1", "--seed", "3"]


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    """The CLI acceptance runs, each done once with a single worker."""
    out = tmp_path_factory.mktemp("acceptance")
    cache = {}

    def get(name, argv):
        if name not in cache:
            prefix = str(out / name)
            run_cli(argv + ["--workers", "1", "--out", prefix])
            cache[name] = prefix
        return cache[name]
    get.dir = out
    return get


def test_criterion_1_example1_rate(runs, report):
    slope = slope_of(runs("ex1", EX1_ARGS))
    ok = EX1_BAND[0] <= slope <= EX1_BAND[1]
    report(1, "example1 rate", ok, f"slope={slope:.5f}, band {EX1_BAND}")
    assert ok


def test_criterion_2_example2_rate(runs, report):
    slope = slope_of(runs("ex2", EX2_ARGS))
    ok = EX2_BAND[0] <= slope <= EX2_BAND[1]
    report(2, "example2 rate", ok, f"slope={slope:.5f}, band {EX2_BAND}")
    assert ok


def test_criterion_3_time_changed_rate(runs, report):
    slope = slope_of(runs("tc", TC_ARGS))
    ok = TC_BAND[0] <= slope <= TC_BAND[1]
    report(3, "time-changed rate", ok, f"slope={slope:.5f}, band {TC_BAND}")
    assert ok


def test_criterion_4_gbm_exact_oracle(runs, report):
    prefix = runs("gbm", GBM_ARGS)
    rows = np.loadtxt(f"{prefix}_errors.csv", delimiter=",", skiprows=1, comments="#")
    slope = slope_of(prefix)
    err = dict(zip(rows[:, 0], rows[:, 1]))
    ok = GBM_BAND[0] <= slope <= GBM_BAND[1] and err[2.0 ** -7] < err[2.0 ** -3]
    report(4, "GBM exact oracle", ok,
           f"slope={slope:.5f}, e(2^-7)={err[2.0 ** -7]:.3g} < e(2^-3)={err[2.0 ** -3]:.3g}")
    assert ok


def test_criterion_5_truncation_invariants(report):
    failures = {"norm": 0, "idempotent": 0, "direction": 0, "identity": 0, "coefficient": 0}
    worst = 0.0
    for pi, name in enumerate(["example1", "example2"]):
        prob = builtin_problem(name)
        pol = default_policy(prob, epsilon=0.1)
        for di, dt in enumerate([1e-1, 1e-2, 1e-3]):
            radius = truncation_radius(pol, dt)
            kappa = pol.kappa(dt)
            u = uniforms(stream_key(5, 3, pi, di), 0, 3 * N_INVARIANT).reshape(3, -1)
            ts = prob.t0 + (prob.T - prob.t0) * u[0]
            # half the states outside the ball, half inside
            xs = np.where(u[2] < 0.5, -1.0, 1.0) * 5.0 * radius * u[1]
            for t, x in zip(ts, xs):
                x = np.array([x])
                y = truncate_state(x, radius)
                if abs(y[0]) > radius:
                    failures["norm"] += 1
                if not np.array_equal(truncate_state(y, radius), y):
                    failures["idempotent"] += 1
                if x[0] != 0 and np.sign(y[0]) != np.sign(x[0]):
                    failures["direction"] += 1
                if abs(x[0]) <= radius and not np.array_equal(y, x):
                    failures["identity"] += 1
                mu = abs(prob.drift(float(t), y)[0])
                sig = abs(prob.diffusion(float(t), y)[0, 0])
                if max(mu, sig) > kappa:
                    failures["coefficient"] += 1
                    worst = max(worst, max(mu, sig) / kappa)
    total = sum(failures.values())
    detail = ", ".join(f"{k}={v}" for k, v in failures.items())
    report(5, "truncation invariants", total == 0,
           f"{6 * N_INVARIANT} samples; failures {detail}; worst |coef|/kappa={worst:.4f}")
    assert total == 0


def _linear_scan(values, dt, t):
    for n, v in enumerate(values):
        if v > t:
            return (n - 1) * dt
    raise AssertionError("walk does not pass t")


def test_criterion_6_inverse_subordinator(report):
    fine_dt, factor, horizon = 1e-3, 10, 1.0
    bad_formula = bad_sandwich = bad_monotone = bad_level = 0
    n_queries = 0
    for p in range(N_WALKS):
        alpha = (0.5, 0.7, 0.9)[p % 3]
        walk = simulate_subordinator(SubordinatorSpec(alpha), fine_dt, horizon, 11, p, align=factor)
        coarse = coarsen_subordinator(walk, factor)
        u = uniforms(stream_key(11, 4, p), 0, 4)
        inside = walk.values[(walk.values > 0) & (walk.values <= horizon)]
        ts = np.sort(np.concatenate([horizon * u, inside[:2], [0.0, horizon]]))
        prev = -1.0
        for t in ts:
            n_queries += 1
            e_f = invert_subordinator(walk, t)
            e_c = invert_subordinator(coarse, t)
            if e_f != _linear_scan(walk.values, fine_dt, t) or e_c != _linear_scan(coarse.values, coarse.dt, t):
                bad_formula += 1
            if abs(e_c - e_f) > coarse.dt:
                bad_sandwich += 1
            if e_f < prev:
                bad_monotone += 1
            prev = e_f
            for e, dt in ((e_f, fine_dt), (e_c, coarse.dt)):
                if abs(e / dt - round(e / dt)) > 1e-9:
                    bad_level += 1
    total = bad_formula + bad_sandwich + bad_monotone + bad_level
    report(6, "inverse subordinator", total == 0,
           f"{N_WALKS} walks, {n_queries} queries; formula={bad_formula}, sandwich={bad_sandwich}, "
           f"monotone={bad_monotone}, level={bad_level}")
    assert total == 0


def test_criterion_7_laplace_transform(report):
    lines, ok = [], True
    for alpha in (0.5, 0.7, 0.9):
        xi = stable_increments(alpha, 1.0, 2024, 0, 0, LAPLACE_DRAWS)
        est = float(np.mean(np.exp(-xi)))
        rel = abs(est / math.exp(-1.0) - 1)
        ok &= rel <= LAPLACE_RTOL
        lines.append(f"a={alpha}: {est:.5f} (rel {rel:.2e})")
    report(7, "stable Laplace transform", ok, "; ".join(lines) + f", target {math.exp(-1):.5f}")
    assert ok


def test_criterion_8_worker_determinism(runs, report):
    same = {}
    for name, argv in (("ex1", EX1_ARGS), ("tc", TC_ARGS), ("gbm", GBM_ARGS)):
        base = runs(name, argv)
        other = str(runs.dir / f"{name}_w4")
        run_cli(argv + ["--workers", "4", "--out", other])
        same[name] = open(f"{base}_errors.csv", "rb").read() == open(f"{other}_errors.csv", "rb").read()
    ok = all(same.values())
    report(8, "determinism across workers", ok,
           ", ".join(f"{k}: {'identical' if v else 'DIFFERENT'}" for k, v in same.items()))
    assert ok


def test_criterion_9_moment_and_gap_checks(report):
    prob = builtin_problem("example1")
    pol = default_policy(prob, epsilon=0.1)
    dts = [1e-1, 1e-2, 1e-3]
    moments = [v for _, v in moment_sweep(prob, pol, dts, p=2, n_paths=1000, base_seed=9)]
    spread = max(moments) / min(moments)
    gaps = [step_gap_estimate(prob, pol, dt, n_paths=1000, base_seed=9, p_bar=2) for dt in dts]
    slope = regress_rate(list(zip(dts, gaps)))[0]
    ok = spread <= MOMENT_FACTOR and GAP_BAND[0] <= slope <= GAP_BAND[1]
    report(9, "moment bound and step gap", ok,
           f"moment max/min={spread:.4f} (<= {MOMENT_FACTOR}), gap slope={slope:.4f}, band {GAP_BAND}")
    assert ok
