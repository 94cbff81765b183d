from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from .cohort import THRESHOLD
from .errors import ConfigError, DataError, ParameterDomainError
from .inference import _Z975, freq_ate, window


logger = logging.getLogger(__name__)

DEFAULT_BIN_WIDTH = 0.01
WEAK_A1_DIFFERENCE = 0.3
JUMP_FLAG_SE = 2.0
CONTINUITY_COVARIATES = ("age", "hdl", "diabetes")
_ASSIGNMENT_COLUMNS = ("risk", "risk_centered")


@dataclass(frozen=True)
class BinnedSummary:
    bin_width: float
    edges: np.ndarray  # risk-score units, len(counts) + 1
    midpoints: np.ndarray
    mean_outcome: np.ndarray
    treated_proportion: np.ndarray
    counts: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "bin_mid": self.midpoints,
                "mean_y": self.mean_outcome,
                "prop_treated": self.treated_proportion,
                "count": self.counts,
            }
        )


def binned_summary(
    data: pd.DataFrame,
    bin_width: float = DEFAULT_BIN_WIDTH,
    *,
    outcome: str = "y_sim3",
    treatment: str = "t_hat",
) -> BinnedSummary:
    """Per-bin outcome mean and treated share on a grid anchored at the threshold.

    Bin k covers k*w < x^c <= (k+1)*w, so x^c = 0 closes the last bin below.
    Empty bins inside the populated range are kept with count 0.
    """
    if not np.isfinite(bin_width) or bin_width <= 0:
        raise ParameterDomainError(f"Largura de bin precisa ser > 0 (recebido {bin_width}).")
    missing = [col for col in ("risk_centered", outcome, treatment) if col not in data.columns]
    if missing:
        raise DataError(f"Coluna(s) ausente(s) no dataset: {', '.join(missing)}")
    if data.empty:
        raise DataError("Dataset vazio: nada para agrupar em bins.")

    xc = data["risk_centered"].to_numpy(dtype=float)
    index = np.ceil(xc / bin_width).astype(np.int64) - 1
    frame = pd.DataFrame(
        {
            "bin": index,
            "y": data[outcome].to_numpy(dtype=float),
            "t": data[treatment].to_numpy(dtype=float),
        }
    )
    grouped = frame.groupby("bin").agg(mean_y=("y", "mean"), prop_treated=("t", "mean"), count=("y", "size"))
    full = np.arange(index.min(), index.max() + 1)
    grouped = grouped.reindex(full)
    counts = grouped["count"].fillna(0).to_numpy(dtype=np.int64)

    edges = THRESHOLD + bin_width * np.arange(full[0], full[-1] + 2)
    return BinnedSummary(
        bin_width=float(bin_width),
        edges=edges,
        midpoints=(edges[:-1] + edges[1:]) / 2.0,
        mean_outcome=grouped["mean_y"].to_numpy(dtype=float),
        treated_proportion=grouped["prop_treated"].to_numpy(dtype=float),
        counts=counts,
    )


@dataclass(frozen=True)
class AssociationReport:
    h: float
    n_b: int
    s_b: int
    n_a: int
    s_a: int
    difference: float
    se: float
    lower: float
    upper: float
    label: str  # "weak" | "strong"
    design: str  # "sharp" | "fuzzy"
    corrected: bool

    def to_dict(self) -> dict:
        return asdict(self)


def check_a1(
    data: pd.DataFrame,
    h: float,
    *,
    weak_below: float = WEAK_A1_DIFFERENCE,
    outcome: str = "y_sim3",
    treatment: str = "t_hat",
) -> AssociationReport:
    """Treated-share gap across the threshold inside the same window the estimators use."""
    win = window(data, h, outcome=outcome, treatment=treatment)
    n_b, s_b, n_a, s_a = win.n_b, win.s_b, win.n_a, win.s_a
    difference = s_a / n_a - s_b / n_b

    corrected = s_b in (0, n_b) or s_a in (0, n_a)
    if corrected:
        p_b = (s_b + 0.5) / (n_b + 1.0)
        p_a = (s_a + 0.5) / (n_a + 1.0)
    else:
        p_b, p_a = s_b / n_b, s_a / n_a
    se = float(np.sqrt(p_a * (1.0 - p_a) / n_a + p_b * (1.0 - p_b) / n_b))

    return AssociationReport(
        h=float(h),
        n_b=n_b,
        s_b=s_b,
        n_a=n_a,
        s_a=s_a,
        difference=float(difference),
        se=se,
        lower=float(difference - _Z975 * se),
        upper=float(difference + _Z975 * se),
        label="weak" if difference < weak_below else "strong",
        design="sharp" if s_b == 0 and s_a == n_a else "fuzzy",
        corrected=corrected,
    )


@dataclass(frozen=True)
class ContinuityReport:
    covariate: str
    h: float
    jump: float
    se: float
    lower: float
    upper: float
    flagged: bool

    def to_dict(self) -> dict:
        return asdict(self)


def covariate_continuity(data: pd.DataFrame, covariate: str, h: float) -> ContinuityReport:
    """Local-linear jump of a baseline covariate at the threshold; flags |jump| > 2 SE."""
    if covariate in _ASSIGNMENT_COLUMNS:
        raise ConfigError(f"'{covariate}' é a própria variável de atribuição; escolha entre {', '.join(CONTINUITY_COVARIATES)}.")
    if covariate not in CONTINUITY_COVARIATES:
        raise ConfigError(f"Covariável não suportada: '{covariate}'. Válidas: {', '.join(CONTINUITY_COVARIATES)}")
    if covariate not in data.columns:
        raise DataError(f"Coluna ausente no dataset: {covariate}")

    win = window(data, h, outcome=covariate, treatment=covariate)
    summary = freq_ate(win, estimator=f"continuity:{covariate}")
    se = (summary.upper - summary.lower) / (2.0 * _Z975)
    flagged = abs(summary.point) > JUMP_FLAG_SE * se
    if flagged:
        logger.warning("Possível descontinuidade em %s no limiar (salto %.3f, EP %.3f)", covariate, summary.point, se)
    return ContinuityReport(
        covariate=covariate,
        h=float(h),
        jump=summary.point,
        se=float(se),
        lower=summary.lower,
        upper=summary.upper,
        flagged=bool(flagged),
    )
