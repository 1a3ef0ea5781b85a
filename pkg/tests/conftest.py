import numpy as np
import pytest

from truncem.model import SdeProblem


def make_problem(drift_const=0.0, sigma=0.0, x0=1.5, d=1, T=1.0):
    """Constant-coefficient problem (pure Python kernels)."""

    def drift(t, x):
        return np.full_like(np.asarray(x, dtype=float), drift_const)

    def diffusion(t, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape + (1,), sigma)

    return SdeProblem("const", d, 1, drift, diffusion, 0.0, T, (x0,) * d,
                      dominating=(1.0 + abs(drift_const) + abs(sigma), 1.0))


@pytest.fixture
def zero_problem():
    return make_problem()


@pytest.fixture
def tmp_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("TRUNCEM_SEED", raising=False)
    return tmp_path
