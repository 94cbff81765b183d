from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from app.cohort import CohortParams, generate_cohort
from app.errors import DataError, ParameterDomainError
from app.numerics import GlmFit, RngStream, ols_fit
from app.simulate import (
    DATASET_COLUMNS,
    ScenarioConfig,
    assign_treatment,
    distort_outcome,
    inject_effect,
    simulate_dataset,
    strip_effects,
    treatment_design,
)


def _strip_design(cohort: pd.DataFrame) -> np.ndarray:
    return np.column_stack([np.ones(len(cohort)), cohort["t"], cohort["z"]]).astype(float)


def test_strip_effects_removes_treatment_and_threshold_association(base_cohort):
    base, _ = base_cohort
    y_sim1 = strip_effects(base, RngStream(1, 5))
    refit = ols_fit(_strip_design(base), y_sim1)
    assert abs(refit.coefficients[1]) < 3 * refit.standard_errors[1]
    assert abs(refit.coefficients[2]) < 3 * refit.standard_errors[2]
    assert y_sim1.mean() == pytest.approx(base["ldl"].mean(), abs=0.01)


def test_strip_effects_without_noise_flattens_a_linear_outcome(base_cohort):
    base, _ = base_cohort
    exact = base.assign(ldl=3.0 + 0.5 * base["t"] + 0.2 * base["z"])
    y_sim1 = strip_effects(exact, RngStream(1), noise_sd=0.0)
    assert np.allclose(y_sim1, exact["ldl"].mean(), atol=1e-9)


def test_assign_treatment_strong_threshold(base_cohort):
    base, fit = base_cohort
    t_hat, p_hat = assign_treatment(base, 4.0, 10.0, RngStream(2), fit=fit)
    above = base["z"].to_numpy() == 1
    assert t_hat[above].mean() > 0.95
    assert t_hat[above].mean() - t_hat[~above].mean() > 0.5
    assert np.all((p_hat >= 0) & (p_hat <= 1))


def test_assign_treatment_matches_expected_jump(base_cohort):
    base, fit = base_cohort
    t_hat, p_hat = assign_treatment(base, -2.0, 4.0, RngStream(3), fit=fit)
    above = base["z"].to_numpy() == 1
    observed = t_hat[above].mean() - t_hat[~above].mean()
    expected = p_hat[above].mean() - p_hat[~above].mean()
    assert observed == pytest.approx(expected, abs=0.01)
    assert observed < 0.3


def test_assign_treatment_coin_flip_without_signal(base_cohort):
    base, _ = base_cohort
    flat = GlmFit(
        coefficients=np.zeros(6),
        covariance=1e-12 * np.eye(6),
        converged=True,
        iterations=0,
        log_likelihood=0.0,
    )
    t_hat, _ = assign_treatment(base, 0.0, 0.0, RngStream(4), fit=flat)
    assert t_hat.mean() == pytest.approx(0.5, abs=0.02)


def test_distort_outcome_is_identity_for_constant_outcome(base_cohort):
    base, _ = base_cohort
    y = np.full(len(base), 3.7)
    t_hat = base["t"].to_numpy()
    assert np.allclose(distort_outcome(y, t_hat, base), y, atol=1e-8)


def test_distort_outcome_is_small_for_unrelated_residuals(base_cohort):
    base, _ = base_cohort
    gen = np.random.default_rng(0)
    y = gen.normal(3.7, 0.9, len(base))
    t_hat = base["t"].to_numpy()
    residuals = ols_fit(np.column_stack([np.ones(len(base)), t_hat]), y).residuals
    shift = distort_outcome(y, t_hat, base) - y
    assert shift.std() < residuals.std()


def test_distort_outcome_rejects_length_mismatch(base_cohort):
    base, _ = base_cohort
    with pytest.raises(DataError):
        distort_outcome(np.zeros(3), np.zeros(3), base)


def test_inject_effect_mean_and_spread():
    n = 10_000
    t_hat = np.zeros(n)
    t_hat[:1000] = 1
    y2 = np.full(n, 4.0)
    y3 = inject_effect(y2, t_hat, 2.0, RngStream(6))
    diff = y3 - y2
    assert diff[t_hat == 1].mean() == pytest.approx(-2.0, abs=0.05)
    assert abs(diff[t_hat == 0].mean()) <= 3 * 0.5 / np.sqrt((t_hat == 0).sum())
    assert diff[t_hat == 0].std() == pytest.approx(0.5, abs=0.02)

    null = inject_effect(y2, t_hat, 0.0, RngStream(6)) - y2
    assert null.std() == pytest.approx(0.5, abs=0.02)


def test_inject_effect_rejects_non_finite_tau():
    with pytest.raises(DataError):
        inject_effect(np.zeros(3), np.zeros(3), float("inf"), RngStream(1))


def test_simulate_dataset_is_deterministic(base_cohort):
    base, fit = base_cohort
    scenario = ScenarioConfig(tau=2.0, confounding_level=2, iv_strength="strong", seed=77)
    a = simulate_dataset(base, scenario, 3, treatment_fit=fit)
    b = simulate_dataset(base, scenario, 3, treatment_fit=fit)
    pd.testing.assert_frame_equal(a.records, b.records)
    assert list(a.records.columns) == DATASET_COLUMNS
    assert a.true_tau == -2.0
    assert a.provenance["ldl_hdl_correlation"] == pytest.approx(0.5, abs=0.02)


def test_simulated_effect_is_injected_on_treated(strong_dataset):
    treated = strong_dataset["t_hat"] == 1
    diff = strong_dataset["y_sim3"] - strong_dataset["y_sim2"]
    bound = 3 * 0.5 / np.sqrt(treated.sum())
    assert diff[treated].mean() == pytest.approx(-2.0, abs=bound)
    assert (strong_dataset["true_tau"] == -2.0).all()


def test_confounding_direction_follows_level(base_cohort):
    base, fit = base_cohort
    positive = simulate_dataset(base, ScenarioConfig(confounding_level=1, seed=5), 1, treatment_fit=fit).records
    negative = simulate_dataset(base, ScenarioConfig(confounding_level=3, seed=5), 1, treatment_fit=fit).records
    assert np.corrcoef(positive["hdl"], positive["t_hat"])[0, 1] > 0
    assert np.corrcoef(negative["hdl"], negative["t_hat"])[0, 1] < 0


def test_replicate_index_must_be_positive(base_cohort):
    base, fit = base_cohort
    with pytest.raises(DataError):
        simulate_dataset(base, ScenarioConfig(), 0, treatment_fit=fit)


def test_treatment_design_column_order():
    cohort = generate_cohort(CohortParams(n=20, seed=3))
    design = treatment_design(cohort)
    assert design.shape == (20, 6)
    assert np.array_equal(design[:, 5], cohort["z"].to_numpy(dtype=float))


def test_untreated_get_zero_mean_noise(strong_dataset):
    untreated = strong_dataset["t_hat"] == 0
    diff = (strong_dataset["y_sim3"] - strong_dataset["y_sim2"])[untreated]
    assert abs(diff.mean()) <= 3 * 0.5 / np.sqrt(untreated.sum())
    assert diff.std() == pytest.approx(0.5, abs=0.05)


def test_negative_noise_sd_is_a_domain_error(base_cohort):
    base, _ = base_cohort
    with pytest.raises(ParameterDomainError):
        strip_effects(base, RngStream(1), noise_sd=-0.1)
    with pytest.raises(ParameterDomainError):
        inject_effect(np.zeros(3), np.zeros(3), 2.0, RngStream(1), noise_sd=-0.5)


def _treated_share(base, p_hat, h):
    xc = base["risk_centered"].to_numpy()
    below = (xc >= -h) & (xc <= 0)
    above = (xc > 0) & (xc <= h)
    return p_hat[below].mean(), p_hat[above].mean()


def test_strong_low_confounding_is_near_sharp(base_cohort):
    base, fit = base_cohort
    _, p_hat = assign_treatment(base, 4.0, 10.0, RngStream(11), fit=fit)
    p_below, p_above = _treated_share(base, p_hat, 0.05)
    assert p_below < 0.06
    assert p_above - p_below >= 0.9


def test_strong_high_confounding_is_partial(base_cohort):
    base, fit = base_cohort
    _, p_hat = assign_treatment(base, -2.0, 10.0, RngStream(12), fit=fit)
    p_below, p_above = _treated_share(base, p_hat, 0.05)
    assert p_below < 0.05
    assert 0.2 < p_above - p_below < 0.8


def test_weak_high_confounding_keeps_some_treatment(base_cohort):
    base, fit = base_cohort
    t_hat, p_hat = assign_treatment(base, -2.0, 4.0, RngStream(13), fit=fit)
    narrow_below, narrow_above = _treated_share(base, p_hat, 0.05)
    wide_below, wide_above = _treated_share(base, p_hat, 0.25)
    assert 0.0 < narrow_above - narrow_below < 0.05
    assert wide_above - wide_below > 0.025
    assert t_hat.sum() >= 50
