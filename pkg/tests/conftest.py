from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from app import create_app
from app.cohort import CohortParams
from app.inference import McmcConfig
from app.simulate import ScenarioConfig, prepare_base_cohort, simulate_dataset


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="roda os testes marcados como slow")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: checagens estatísticas longas (use --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="precisa de --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture()
def app(tmp_path, monkeypatch):
    monkeypatch.setenv("LAB_JOBS", "1")
    app = create_app(
        {
            "TESTING": True,
            "SQLALCHEMY_DATABASE_URI": "sqlite://",
            "LAB_OUT_DIR": str(tmp_path / "out"),
        }
    )
    yield app


@pytest.fixture()
def runner(app):
    return app.test_cli_runner()


@pytest.fixture(scope="session")
def base_cohort():
    """Default base cohort and its treatment-model fit."""
    return prepare_base_cohort(CohortParams())


@pytest.fixture(scope="session")
def strong_dataset(base_cohort):
    base, fit = base_cohort
    scenario = ScenarioConfig(tau=2.0, confounding_level=1, iv_strength="strong", seed=20150)
    return simulate_dataset(base, scenario, 1, treatment_fit=fit).records


@pytest.fixture(scope="session")
def weak_dataset(base_cohort):
    base, fit = base_cohort
    scenario = ScenarioConfig(tau=2.0, confounding_level=3, iv_strength="weak", seed=20150)
    return simulate_dataset(base, scenario, 1, treatment_fit=fit).records


@pytest.fixture()
def quick_mcmc():
    return McmcConfig(chains=2, iterations=1500, burn_in=500)


def _window_frame(n_below: int, n_above: int, *, h: float = 0.05, seed: int = 0, jump: float = -2.0, sd: float = 0.5):
    """Records inside +-h with a linear outcome and a known gap at the threshold."""
    gen = np.random.default_rng(seed)
    x_b = -gen.uniform(0.0, h, n_below)
    x_a = gen.uniform(1e-6, h, n_above)
    xc = np.concatenate([x_b, x_a])
    above = xc > 0
    y = 3.7 + np.where(above, jump + 6.0 * xc, 8.0 * xc) + gen.normal(0.0, sd, xc.size)
    t = np.where(above, gen.random(xc.size) < 0.9, gen.random(xc.size) < 0.1).astype(int)
    return pd.DataFrame({"risk_centered": xc, "y_sim3": y, "t_hat": t})


@pytest.fixture()
def window_frame():
    return _window_frame
