import math

import numpy as np
import pytest

from truncem.errors import ConfigError, NumericOverflow, UnknownProblem
from truncem.model import (SdeProblem, builtin_problem, evaluate_diffusion, evaluate_drift,
                           gbm_second_moment, ou_moments, probe_monotonicity)


def test_example1_values():
    p = builtin_problem("example1")
    t, x = 0.5, 1.5
    h = (t * (1 - t)) ** 0.25
    assert evaluate_drift(p, t, [x])[0] == pytest.approx(h * x ** 2 - 2 * x ** 5)
    assert evaluate_diffusion(p, t, [x], 1)[0] == pytest.approx(h * x ** 2)
    assert p.expected_rate == 0.25 and p.x0 == (2.0,)


def test_example2_values():
    p = builtin_problem("example2")
    t, x = 1.3, -0.7
    s = (t - 1) * (2 - t)
    assert evaluate_drift(p, t, [x])[0] == pytest.approx(s ** 0.2 * x ** 2 - 2 * x ** 5)
    assert evaluate_diffusion(p, t, [x], 1)[0] == pytest.approx(s ** 0.4 * x ** 2)
    assert p.expected_rate == pytest.approx(0.2)


def test_time_factor_vanishes_at_endpoints():
    p = builtin_problem("example1")
    assert evaluate_diffusion(p, 0.0, [3.0], 1)[0] == 0.0
    assert evaluate_diffusion(p, 1.0, [3.0], 1)[0] == 0.0


def test_timechanged2d_values():
    p = builtin_problem("timechanged2d", T=2.0)
    assert p.T == 2.0 and (p.d, p.m) == (2, 1)
    np.testing.assert_allclose(evaluate_drift(p, 0.3, [1.0, -2.0]), [-2.0, -32.0])
    np.testing.assert_allclose(evaluate_diffusion(p, 0.3, [1.0, -2.0], 1), [4.0, 1.0])


def test_evaluation_errors():
    p = builtin_problem("example1")
    with pytest.raises(ConfigError):
        evaluate_drift(p, 1.5, [1.0])
    with pytest.raises(ConfigError):
        evaluate_diffusion(p, 0.5, [1.0], 2)
    with pytest.raises(NumericOverflow):
        evaluate_drift(p, 0.5, [1e100])


def test_unknown_problem_and_overrides():
    with pytest.raises(UnknownProblem):
        builtin_problem("nope")
    with pytest.raises(ConfigError):
        builtin_problem("example1", a=1.0)


def test_problem_validation():
    f = lambda t, x: x
    with pytest.raises(ConfigError):
        SdeProblem("bad", 1, 1, f, f, 1.0, 0.5, (0.0,))
    with pytest.raises(ConfigError):
        SdeProblem("bad", 1, 1, f, f, 0.0, 1.0, (0.0, 1.0))


def test_closed_form_moments():
    g = builtin_problem("gbm")
    assert gbm_second_moment(g, 1.0) == pytest.approx(math.exp(2 * 0.1 + 0.04))
    ou = builtin_problem("ou")
    mean, var = ou_moments(ou, 1.0)
    assert mean == pytest.approx(ou.x0[0] * math.exp(-1))
    assert var == pytest.approx(0.25 * (1 - math.exp(-2)) / 2)


@pytest.mark.parametrize("name", ["example1", "example2"])
@pytest.mark.parametrize("q", [3.0, 4.0, 6.0])
def test_probe_clean_on_builtin_examples(name, q):
    rep = probe_monotonicity(builtin_problem(name), q=q, n_samples=2000)
    assert rep.ok and rep.samples_tested == 2000


def test_probe_flags_cubic_growth():
    cubic = SdeProblem("cubic", 1, 1, lambda t, x: x ** 3,
                       lambda t, x: np.zeros(np.shape(x) + (1,)), 0.0, 1.0, (1.0,))
    rep = probe_monotonicity(cubic, q=4.0, n_samples=500)
    assert len([v for v in rep.violations if v.kind == "growth"]) == 500
    assert {v.kind for v in rep.violations} == {"growth", "monotone"}


def test_probe_zero_coefficients():
    zero = SdeProblem("zero", 1, 1, lambda t, x: 0 * x,
                      lambda t, x: np.zeros(np.shape(x) + (1,)), 0.0, 1.0, (1.0,))
    rep = probe_monotonicity(zero, n_samples=200)
    assert rep.ok and rep.max_ratio == 0.0


def test_probe_rejects_small_q():
    with pytest.raises(ConfigError):
        probe_monotonicity(builtin_problem("gbm"), q=2.0)
