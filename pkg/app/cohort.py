"""Synthetic base cohort (males over 50) standing in for the primary-care extract."""

from __future__ import annotations

import logging

import numpy as np
import pandas as pd
from pydantic import Field, model_validator
from scipy import stats
from scipy.special import expit, logit

from .config import LabModel
from .errors import DataError, ParameterDomainError
from .numerics import Bernoulli, Normal, RngStream, Uniform, bernoulli_vector, draw


logger = logging.getLogger(__name__)

THRESHOLD = 0.2
MAX_ABS_CORRELATION = 0.95
HDL_FLOOR = 0.2  # mmol/l; keeps blended hdl positive

COHORT_COLUMNS = ["id", "age", "diabetes", "hdl", "ldl", "risk", "risk_centered", "z", "t"]
INT_COLUMNS = ("id", "diabetes", "z", "t")


class CohortParams(LabModel):
    n: int = Field(5720, ge=1)
    seed: int = Field(20150, ge=0)

    age_min: float = Field(50.0, ge=50.0)
    age_max: float = 85.0
    diabetes_prevalence: float = Field(0.15, gt=0.0, lt=1.0)

    hdl_mean: float = Field(0.97, gt=0.0)
    hdl_sd: float = Field(0.3, gt=0.0)
    hdl_min: float = Field(0.5, gt=0.0)
    hdl_max: float = 3.0

    # risk = expit(logit(risk_median) + age_coef*std(age) + diabetes_coef*(d - prevalence) + noise)
    risk_median: float = Field(0.18, gt=0.0, lt=1.0)
    risk_age_coef: float = 0.35
    risk_diabetes_coef: float = 0.3
    risk_noise_sd: float = Field(0.5, ge=0.0)

    ldl_intercept: float = Field(3.7, gt=0.0)
    ldl_slope: float = 0.0
    ldl_noise_sd: float = Field(0.9, ge=0.0)
    ldl_hdl_correlation: float = Field(0.18, gt=-1.0, lt=1.0)

    # historical prescription: expit(intercept + z_coef*z + risk_coef*std(x^c) + hdl_coef*(h - mean h))
    treat_intercept: float = -4.0
    treat_z_coef: float = 1.5
    treat_risk_coef: float = 3.5
    treat_hdl_coef: float = 5.0

    @model_validator(mode="after")
    def _check_ranges(self) -> "CohortParams":
        if self.age_max <= self.age_min:
            raise ValueError("age_max precisa ser maior que age_min")
        if not self.hdl_min < self.hdl_mean < self.hdl_max:
            raise ValueError("exige hdl_min < hdl_mean < hdl_max")
        return self


def standardized_age(params: CohortParams, age: np.ndarray) -> np.ndarray:
    """Age standardized with the analytic moments of Uniform(age_min, age_max)."""
    center = (params.age_min + params.age_max) / 2.0
    scale = (params.age_max - params.age_min) / np.sqrt(12.0)
    return (np.asarray(age, dtype=float) - center) / scale


def risk_score(params: CohortParams, age, diabetes, noise) -> np.ndarray:
    """10-year risk from covariates and a standard-normal noise term."""
    lp = (
        logit(params.risk_median)
        + params.risk_age_coef * standardized_age(params, age)
        + params.risk_diabetes_coef * (np.asarray(diabetes, dtype=float) - params.diabetes_prevalence)
        + params.risk_noise_sd * np.asarray(noise, dtype=float)
    )
    return expit(lp)


def _standardize(values: np.ndarray) -> np.ndarray:
    sd = values.std()
    if sd == 0.0:
        return np.zeros_like(values)
    return (values - values.mean()) / sd


def generate_cohort(params: CohortParams, rng: RngStream | None = None) -> pd.DataFrame:
    if abs(params.ldl_hdl_correlation) >= MAX_ABS_CORRELATION:
        raise ParameterDomainError(
            f"Correlação LDL–HDL inviável: |{params.ldl_hdl_correlation}| >= {MAX_ABS_CORRELATION}."
        )
    rng = rng or RngStream(params.seed, 0)
    n = params.n

    age = draw(Uniform(params.age_min, params.age_max), rng, n)
    diabetes = draw(Bernoulli(params.diabetes_prevalence), rng, n)
    lower = (params.hdl_min - params.hdl_mean) / params.hdl_sd
    upper = (params.hdl_max - params.hdl_mean) / params.hdl_sd
    hdl = stats.truncnorm.rvs(
        lower, upper, loc=params.hdl_mean, scale=params.hdl_sd, size=n, random_state=rng.generator
    )

    risk = risk_score(params, age, diabetes, draw(Normal(0.0, 1.0), rng, n))
    risk_centered = risk - THRESHOLD
    z = (risk > THRESHOLD).astype(np.int64)
    ldl = params.ldl_intercept + params.ldl_slope * risk_centered + draw(Normal(0.0, params.ldl_noise_sd), rng, n)

    cohort = pd.DataFrame(
        {
            "id": np.arange(1, n + 1, dtype=np.int64),
            "age": age,
            "diabetes": diabetes,
            "hdl": hdl,
            "ldl": ldl,
            "risk": risk,
            "risk_centered": risk_centered,
            "z": z,
            "t": np.zeros(n, dtype=np.int64),
        },
        columns=COHORT_COLUMNS,
    )

    if ldl.std() > 0.0:
        cohort = set_ldl_hdl_correlation(cohort, params.ldl_hdl_correlation, rng)
    else:
        logger.warning("ldl sem variância; correlação LDL–HDL não aplicada")

    hdl = cohort["hdl"].to_numpy()
    p_treat = expit(
        params.treat_intercept
        + params.treat_z_coef * z
        + params.treat_risk_coef * _standardize(risk_centered)
        + params.treat_hdl_coef * (hdl - hdl.mean())
    )
    cohort["t"] = bernoulli_vector(p_treat, rng)
    logger.info(
        "Coorte gerada: n=%d, z=1 em %.1f%%, tratados %.1f%%",
        n,
        100.0 * z.mean(),
        100.0 * cohort["t"].mean(),
    )
    return cohort


def set_ldl_hdl_correlation(cohort: pd.DataFrame, target_r: float, rng: RngStream) -> pd.DataFrame:
    """Replace hdl by a blend of standardized ldl and fresh noise.

    The noise is made exactly orthogonal to ldl, so the sample correlation
    equals ``target_r`` and the hdl sample mean/sd are kept (up to the
    positivity floor).
    """
    if abs(target_r) >= MAX_ABS_CORRELATION:
        raise ParameterDomainError(f"Correlação alvo inviável: |{target_r}| >= {MAX_ABS_CORRELATION}.")
    ldl = cohort["ldl"].to_numpy(dtype=float)
    hdl = cohort["hdl"].to_numpy(dtype=float)
    if len(ldl) < 3 or not np.isfinite(ldl.std()) or ldl.std() == 0.0:
        raise DataError("Variância de ldl degenerada: não é possível ajustar a correlação LDL–HDL.")

    u = _standardize(ldl)
    noise = rng.generator.standard_normal(len(u))
    noise -= noise.mean()
    noise -= (noise @ u / len(u)) * u
    noise /= noise.std()

    blend = target_r * u + np.sqrt(1.0 - target_r**2) * noise
    updated = cohort.copy()
    updated["hdl"] = np.clip(hdl.mean() + hdl.std() * blend, HDL_FLOOR, None)
    return updated


def validate_cohort(cohort: pd.DataFrame) -> pd.DataFrame:
    """Schema and threshold-rule checks for a cohort read from disk."""
    missing = [col for col in COHORT_COLUMNS if col not in cohort.columns]
    if missing:
        raise DataError(f"Coluna(s) ausente(s) na coorte: {', '.join(missing)}")
    if cohort.empty:
        raise DataError("Coorte vazia.")
    risk = cohort["risk"].to_numpy(dtype=float)
    if np.any((risk <= 0.0) | (risk >= 1.0)):
        raise DataError("Escore de risco fora de (0, 1).")
    expected_z = (risk > THRESHOLD).astype(np.int64)
    if np.any(cohort["z"].to_numpy() != expected_z):
        raise DataError("Coluna z inconsistente com risk > 0.2.")
    return cohort
