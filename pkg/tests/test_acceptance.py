"""Long simulation checks over 100 replicates. Run with ``pytest --runslow``."""

from __future__ import annotations

import numpy as np
import pytest

from app.inference import freq_ate, window
from app.numerics import RngStream, ols_fit
from app.simulate import ScenarioConfig, simulate_dataset, strip_effects
from app.study import StudyConfig, aggregate, run_study


pytestmark = pytest.mark.slow

REPLICATES = 100


def _cell_table(iv: str, level: int, h: float, estimators: str = "freq,wip,sip,late-unct,late-flex,late-cnst"):
    config = StudyConfig.model_validate(
        {
            "iv_strengths": iv,
            "confounding_levels": str(level),
            "taus": "2",
            "bandwidths": str(h),
            "estimators": estimators,
            "replicates": REPLICATES,
        }
    )
    results = run_study(config, jobs=-1)
    return results, aggregate(results).set_index("estimator")


def test_strong_low_confounding_recovers_the_effect():
    _, table = _cell_table("strong", 1, 0.25)
    for name in ("freq", "wip", "sip"):
        assert -2.3 <= table.loc[name, "point"] <= -1.7, name
    for name in ("late-unct", "late-flex", "late-cnst"):
        assert -2.5 <= table.loc[name, "point"] <= -1.9, name


def test_strong_high_confounding_attenuates_ate_only():
    _, table = _cell_table("strong", 3, 0.05, "freq,wip,sip,late-unct")
    for name in ("freq", "wip", "sip"):
        assert -1.3 < table.loc[name, "point"] < -0.4, name
    assert -2.6 <= table.loc["late-unct", "point"] <= -1.7


def test_weak_high_confounding_blows_up_unconstrained_late():
    results, _ = _cell_table("weak", 3, 0.05, "late-unct")
    flags = [row.unstable for row in results.rows if row.status == "ok"]
    assert len(flags) >= 0.8 * REPLICATES
    assert np.mean(flags) >= 0.8


def test_constrained_denominator_moderates_late():
    _, table = _cell_table("weak", 3, 0.25, "late-unct,late-cnst")
    assert abs(table.loc["late-cnst", "point"]) < abs(table.loc["late-unct", "point"])


def test_simulator_null_and_injected_effect(base_cohort):
    base, fit = base_cohort
    within = 0
    scenario = ScenarioConfig(tau=2.0, confounding_level=1, iv_strength="strong", seed=31)
    for replicate in range(1, REPLICATES + 1):
        y_sim1 = strip_effects(base, RngStream.for_replicate(31, replicate))
        design = np.column_stack([np.ones(len(base)), base["t"], base["z"]]).astype(float)
        refit = ols_fit(design, y_sim1)
        within += bool(np.all(np.abs(refit.coefficients[1:]) < 3 * refit.standard_errors[1:]))

        records = simulate_dataset(base, scenario, replicate, treatment_fit=fit).records
        treated = records["t_hat"] == 1
        diff = (records["y_sim3"] - records["y_sim2"])[treated]
        assert abs(diff.mean() + 2.0) <= 3 * 0.5 / np.sqrt(treated.sum())
    assert within >= 95


@pytest.mark.parametrize("h", [0.05, 0.25])
def test_stripped_outcome_has_no_jump_at_threshold(base_cohort, h):
    base, _ = base_cohort
    within = 0
    for replicate in range(1, REPLICATES + 1):
        frame = base.assign(y_sim1=strip_effects(base, RngStream.for_replicate(31, replicate)))
        summary = freq_ate(window(frame, h, outcome="y_sim1", treatment="t"))
        se = (summary.upper - summary.lower) / (2 * 1.959964)
        within += abs(summary.point) <= 3 * se
    assert within >= 95
