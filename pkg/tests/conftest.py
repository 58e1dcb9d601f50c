import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from simba.autodiff import Tensor

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of the scalar function ``f`` at ``x`` (mutated and restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max absolute deviation scaled by the largest numeric entry.

    The scale is floored at 1e-3 so gradients that are exactly zero are judged
    against an absolute tolerance well above the O(h^2) difference noise.
    """
    scale = max(float(np.abs(numeric).max(initial=0.0)), 1e-3)
    return float(np.abs(analytic - numeric).max(initial=0.0)) / scale


def check_grad(fn, *inputs, seed=0, h=1e-5):
    """Max relative error of every input gradient of ``sum(fn(*inputs) * R)``."""
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    out_shape = fn(*[Tensor(x) for x in inputs]).shape
    R = np.random.default_rng(seed).normal(size=out_shape)

    def loss_value():
        return float((fn(*[Tensor(x) for x in inputs]).data * R).sum())

    ts = [Tensor(x, requires_grad=True) for x in inputs]
    (fn(*ts) * Tensor(R)).sum().backward()
    worst = 0.0
    for t, x in zip(ts, inputs):
        worst = max(worst, rel_err(t.grad, numeric_grad(loss_value, x, h)))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance summary ----------------------------------------------------

def pytest_configure(config):
    config.acceptance_results = {}


@pytest.fixture
def acceptance(request):
    """Record ``(number, passed, detail)``; the lines are printed at the end of the run."""

    def record(number: int, passed: bool, detail: str) -> None:
        request.config.acceptance_results[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "acceptance_results", {})
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
