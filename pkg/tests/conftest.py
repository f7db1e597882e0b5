"""Shared fixtures and the measurement-noise convention self-test."""

import numpy as np
import pytest

from lqgent import FeedbackConfig, PhysicalParams
from lqgent.trajectory import draw_wiener, trajectory_rng


@pytest.fixture(scope="session", autouse=True)
def wiener_convention_self_test():
    """Assert E[dW^2] = dt/2 before anything else runs.

    This half-variance convention is the one place a silent factor-of-two
    inconsistency could slip between the measurement-noise intensity and the
    sampled increments, so the sampler is checked statistically up front.
    """
    dt = 0.01
    n = 200_000
    rng = trajectory_rng(seed=123456, index=0)
    dw = draw_wiener(rng, n, dt)
    var = dw.var(axis=0, ddof=1)
    # ~14 sigma band for the variance estimate: fails only on real bugs
    bound = 14.0 * (dt / 2.0) * np.sqrt(2.0 / n)
    assert np.all(np.abs(var - dt / 2.0) < bound), (
        f"Wiener increments have variance {var}, expected {dt / 2.0}"
    )
    assert abs(dw.mean()) < 10.0 * np.sqrt(dt / 2.0 / (2 * n))


@pytest.fixture()
def fig2_params():
    """Baseline operating point: Gba/W0 = 0.05, Gth/Gba = 0.05, Q = 1e10, eta = 1."""
    return PhysicalParams(
        omega0=1.0,
        g=0.0,
        gamma=1e-10,
        gamma_th=0.05 * 0.05,
        gamma_ba=0.05,
        eta=1.0,
        q1=3.0,
        q2=1.0,
    )


@pytest.fixture()
def fb_independent():
    return FeedbackConfig.independent(0.1)


@pytest.fixture()
def fb_single():
    return FeedbackConfig.single(0.1)
