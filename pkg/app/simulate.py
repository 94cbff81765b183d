"""Two-part simulation: strip pre-existing effects, assign treatment with a
chosen confounding level and instrument strength, distort the outcome and
inject a known treatment effect."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import pandas as pd
from pydantic import Field
from scipy.special import expit

from .cohort import COHORT_COLUMNS, CohortParams, generate_cohort, set_ldl_hdl_correlation
from .config import LabModel
from .errors import ConvergenceError, DataError, NumericError, SeparationError
from .numerics import GlmFit, Normal, RngStream, bernoulli_vector, draw, logistic_fit, ols_fit


logger = logging.getLogger(__name__)

# level -> (ldl-hdl correlation, hdl log-odds coefficient)
CONFOUNDING_LEVELS: dict[int, tuple[float, float]] = {
    1: (0.18, 4.0),
    2: (0.5, 4.0),
    3: (0.18, -2.0),
    4: (0.5, -2.0),
}
# iv strength -> threshold log-odds coefficient
IV_STRENGTHS: dict[str, float] = {"strong": 10.0, "weak": 4.0}

STRIP_NOISE_SD = 0.1
EFFECT_NOISE_SD = 0.5

SIMULATION_CHAIN = 0
RETRY_CHAIN = 1

# columns of logit(p) = a3 + a4*age + a5*d + a6*x^c + a7*h + a8*z
TREATMENT_TERMS = ("intercept", "age", "diabetes", "risk_centered", "hdl", "z")
_HDL_TERM = TREATMENT_TERMS.index("hdl")
_Z_TERM = TREATMENT_TERMS.index("z")

DATASET_COLUMNS = COHORT_COLUMNS + ["t_hat", "p_hat", "y_sim1", "y_sim2", "y_sim3", "true_tau"]


class ScenarioConfig(LabModel):
    tau: float = Field(2.0, ge=0.0, allow_inf_nan=False)
    confounding_level: int = Field(1, ge=1, le=4)
    iv_strength: Literal["strong", "weak"] = "strong"
    bandwidth: float = Field(0.05, gt=0.0, allow_inf_nan=False)
    replicates: int = Field(1, ge=1)
    seed: int = Field(20150, ge=0)

    @property
    def correlation(self) -> float:
        return CONFOUNDING_LEVELS[self.confounding_level][0]

    @property
    def hdl_coef(self) -> float:
        return CONFOUNDING_LEVELS[self.confounding_level][1]

    @property
    def threshold_coef(self) -> float:
        return IV_STRENGTHS[self.iv_strength]

    @property
    def label(self) -> str:
        return f"{self.iv_strength}-L{self.confounding_level}-tau{self.tau:g}"


@dataclass(frozen=True)
class SimulatedDataset:
    records: pd.DataFrame
    scenario: ScenarioConfig
    replicate: int
    true_tau: float
    provenance: dict = field(default_factory=dict)


def treatment_design(cohort: pd.DataFrame) -> np.ndarray:
    n = len(cohort)
    return np.column_stack(
        [
            np.ones(n),
            cohort["age"].to_numpy(dtype=float),
            cohort["diabetes"].to_numpy(dtype=float),
            cohort["risk_centered"].to_numpy(dtype=float),
            cohort["hdl"].to_numpy(dtype=float),
            cohort["z"].to_numpy(dtype=float),
        ]
    )


def fit_treatment_model(cohort: pd.DataFrame) -> GlmFit:
    return logistic_fit(treatment_design(cohort), cohort["t"].to_numpy(dtype=float))


def strip_effects(cohort: pd.DataFrame, rng: RngStream, noise_sd: float = STRIP_NOISE_SD) -> np.ndarray:
    """Residuals of y ~ 1 + t + z re-centred on a noisy copy of the mean."""
    y = cohort["ldl"].to_numpy(dtype=float)
    design = np.column_stack(
        [np.ones(len(y)), cohort["t"].to_numpy(dtype=float), cohort["z"].to_numpy(dtype=float)]
    )
    fit = ols_fit(design, y)
    w = draw(Normal(float(y.mean()), noise_sd), rng, len(y))
    return fit.residuals + w


def assign_treatment(
    cohort: pd.DataFrame,
    hdl_coef: float,
    threshold_coef: float,
    rng: RngStream,
    fit: GlmFit | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Redraw the treatment-model coefficients from N(alpha_hat, Sigma), overwrite
    the hdl and threshold coefficients and draw t_hat ~ Bernoulli(p_hat)."""
    fit = fit if fit is not None else fit_treatment_model(cohort)
    coefficients = rng.generator.multivariate_normal(fit.coefficients, fit.covariance, method="cholesky")
    coefficients[_HDL_TERM] = hdl_coef
    coefficients[_Z_TERM] = threshold_coef
    p_hat = expit(treatment_design(cohort) @ coefficients)
    return bernoulli_vector(p_hat, rng), p_hat


def distort_outcome(y_sim1, t_hat, cohort: pd.DataFrame) -> np.ndarray:
    y_sim1 = np.asarray(y_sim1, dtype=float)
    t_hat = np.asarray(t_hat, dtype=float)
    if not len(y_sim1) == len(t_hat) == len(cohort):
        raise DataError("Tamanhos incompatíveis entre y_sim1, t_hat e a coorte.")
    n = len(y_sim1)
    residuals = ols_fit(np.column_stack([np.ones(n), t_hat]), y_sim1).residuals
    covariates = np.column_stack(
        [
            np.ones(n),
            cohort["age"].to_numpy(dtype=float),
            cohort["diabetes"].to_numpy(dtype=float),
            cohort["risk_centered"].to_numpy(dtype=float),
        ]
    )
    residual_fit = ols_fit(covariates, residuals)
    perturbed = residual_fit.fitted + residual_fit.prediction_se(covariates)
    return y_sim1 + perturbed


def inject_effect(y_sim2, t_hat, tau: float, rng: RngStream, noise_sd: float = EFFECT_NOISE_SD) -> np.ndarray:
    """Untreated get N(0, sd^2) noise, treated get N(-|tau|, sd^2)."""
    if not np.isfinite(tau):
        raise DataError(f"tau precisa ser finito (recebido {tau}).")
    y_sim2 = np.asarray(y_sim2, dtype=float)
    t_hat = np.asarray(t_hat, dtype=float)
    v_control = draw(Normal(0.0, noise_sd), rng, len(y_sim2))
    v_treated = draw(Normal(-abs(tau), noise_sd), rng, len(y_sim2))
    return y_sim2 + (1.0 - t_hat) * v_control + t_hat * v_treated


def prepare_base_cohort(params: CohortParams) -> tuple[pd.DataFrame, GlmFit]:
    """Base cohort plus its treatment-model fit; regenerates once on separation."""
    cohort = generate_cohort(params, RngStream(params.seed, 0))
    try:
        return cohort, fit_treatment_model(cohort)
    except (SeparationError, ConvergenceError) as exc:
        logger.warning("Ajuste do modelo de tratamento falhou (%s); gerando nova coorte base", exc)
    cohort = generate_cohort(params, RngStream(params.seed, 1))
    return cohort, fit_treatment_model(cohort)


def _run_stages(base, scenario, fit, rng):
    augmented = set_ldl_hdl_correlation(base, scenario.correlation, rng)
    y_sim1 = strip_effects(augmented, rng)
    t_hat, p_hat = assign_treatment(augmented, scenario.hdl_coef, scenario.threshold_coef, rng, fit=fit)
    y_sim2 = distort_outcome(y_sim1, t_hat, augmented)
    y_sim3 = inject_effect(y_sim2, t_hat, scenario.tau, rng)
    return augmented, y_sim1, t_hat, p_hat, y_sim2, y_sim3


def simulate_dataset(
    base: pd.DataFrame,
    scenario: ScenarioConfig,
    replicate: int,
    treatment_fit: GlmFit | None = None,
) -> SimulatedDataset:
    """Run every stage for one replicate on its own substream.

    The treatment model is fitted on the base cohort (before the hdl
    augmentation). A numeric failure in the random stages is retried once on a
    fresh substream.
    """
    if replicate < 1:
        raise DataError(f"Replicata precisa ser >= 1 (recebido {replicate}).")
    fit = treatment_fit if treatment_fit is not None else fit_treatment_model(base)

    rng = RngStream.for_replicate(scenario.seed, replicate, SIMULATION_CHAIN)
    retried = False
    try:
        augmented, y_sim1, t_hat, p_hat, y_sim2, y_sim3 = _run_stages(base, scenario, fit, rng)
    except NumericError as exc:
        logger.warning("Replicata %d: %s; repetindo com substream nova", replicate, exc)
        rng = RngStream.for_replicate(scenario.seed, replicate, RETRY_CHAIN)
        retried = True
        augmented, y_sim1, t_hat, p_hat, y_sim2, y_sim3 = _run_stages(base, scenario, fit, rng)

    true_tau = -abs(scenario.tau)
    records = augmented.copy()
    records["t_hat"] = t_hat
    records["p_hat"] = p_hat
    records["y_sim1"] = y_sim1
    records["y_sim2"] = y_sim2
    records["y_sim3"] = y_sim3
    records["true_tau"] = true_tau

    negative = int(np.sum(y_sim3 < 0.0))
    if negative:
        logger.info("Replicata %d: %d valor(es) negativos de y_sim3 mantidos", replicate, negative)
    provenance = {
        "scenario": scenario.label,
        "replicate": replicate,
        "seed": scenario.seed,
        "stream_id": rng.stream_id,
        "retried": retried,
        "ldl_hdl_correlation": float(np.corrcoef(records["ldl"], records["hdl"])[0, 1]),
        "hdl_coef": scenario.hdl_coef,
        "threshold_coef": scenario.threshold_coef,
        "treatment_fit": [float(c) for c in fit.coefficients],
        "n_treated": int(t_hat.sum()),
        "negative_outcomes": negative,
    }
    return SimulatedDataset(
        records=records[DATASET_COLUMNS],
        scenario=scenario,
        replicate=replicate,
        true_tau=true_tau,
        provenance=provenance,
    )
