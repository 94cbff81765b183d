"""RD estimators: frequentist local-linear ATE, Bayesian ATE (wip/sip priors),
Bayesian treatment-probability jump (unc/fix/fdp priors) and their LATE ratios."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import pandas as pd
from pydantic import Field, model_validator
from scipy import linalg, stats
from scipy.special import betaln, expit, xlog1py, xlogy

from .config import LabModel
from .errors import ConfigError, DataError, ParameterDomainError
from .numerics import (
    STREAM_STRIDE,
    Beta,
    RngStream,
    effective_sample_size,
    equal_tailed_interval,
    monte_carlo_se,
    ols_fit,
    split_rhat,
)
from .samplers import RandomWalkStep, metropolis_step, slice_sample


logger = logging.getLogger(__name__)

MIN_SIDE = 30
MIN_FREQ_SIDE = 3
MIN_DRAWS = 1000
UNSTABLE_WIDTH = 10.0
NONFINITE_TOLERANCE = 0.001
RHAT_WARNING = 1.1
_Z975 = float(stats.norm.ppf(0.975))

ESTIMATORS = ("freq", "wip", "sip", "late-unct", "late-flex", "late-cnst")
# LATE variant -> (ATE prior, denominator prior)
LATE_VARIANTS = {
    "late-unct": ("sip", "unc"),
    "late-flex": ("sip", "fdp"),
    "late-cnst": ("sip", "fix"),
}
# stream offsets inside a replicate; chain j of a sampler uses offset + j
SAMPLER_STREAMS = {"wip": 16, "sip": 32, "unc": 48, "fix": 64, "fdp": 80}
MAX_CHAINS = 16


# --- windows -----------------------------------------------------------------


@dataclass(frozen=True)
class BandwidthWindow:
    h: float
    x_below: np.ndarray
    y_below: np.ndarray
    t_below: np.ndarray
    x_above: np.ndarray
    y_above: np.ndarray
    t_above: np.ndarray
    warnings: tuple[str, ...] = ()
    mcse: float | None = None

    @property
    def n_b(self) -> int:
        return int(self.x_below.size)

    @property
    def n_a(self) -> int:
        return int(self.x_above.size)

    @property
    def s_b(self) -> int:
        return int(self.t_below.sum())

    @property
    def s_a(self) -> int:
        return int(self.t_above.sum())

    @classmethod
    def empty(cls, h: float = 0.05) -> "BandwidthWindow":
        """Window with no records: samplers then draw from the prior."""
        nothing = np.zeros(0)
        return cls(h, nothing, nothing, nothing, nothing, nothing, nothing)


def window(
    data: pd.DataFrame,
    h: float,
    *,
    outcome: str = "y_sim3",
    treatment: str = "t_hat",
    min_side: int = MIN_SIDE,
) -> BandwidthWindow:
    """Records with -h <= x^c <= 0 (below) and 0 < x^c <= h (above)."""
    if not np.isfinite(h) or h <= 0:
        raise ParameterDomainError(f"Bandwidth precisa ser > 0 (recebido {h}).")
    missing = [col for col in ("risk_centered", outcome, treatment) if col not in data.columns]
    if missing:
        raise DataError(f"Coluna(s) ausente(s) no dataset: {', '.join(missing)}")

    xc = data["risk_centered"].to_numpy(dtype=float)
    below = (xc >= -h) & (xc <= 0.0)
    above = (xc > 0.0) & (xc <= h)
    if not below.any():
        raise DataError(f"Janela h={h:g}: lado abaixo do limiar (below) está vazio.")
    if not above.any():
        raise DataError(f"Janela h={h:g}: lado acima do limiar (above) está vazio.")

    y = data[outcome].to_numpy(dtype=float)
    t = data[treatment].to_numpy(dtype=float)
    warnings = []
    for side, count in (("below", int(below.sum())), ("above", int(above.sum()))):
        if count < min_side:
            warnings.append(f"amostra pequena no lado {side}: {count} < {min_side}")
            logger.warning("Janela h=%g: %s", h, warnings[-1])
    return BandwidthWindow(
        h=float(h),
        x_below=xc[below],
        y_below=y[below],
        t_below=t[below],
        x_above=xc[above],
        y_above=y[above],
        t_above=t[above],
        warnings=tuple(warnings),
    )


# --- summaries ---------------------------------------------------------------


@dataclass(frozen=True)
class EstimateSummary:
    estimator: str
    point: float
    lower: float
    upper: float
    ess: float | None = None
    rhat: float | None = None
    unstable: bool = False
    n_draws: int = 0
    n_nonfinite: int = 0
    prob_negative: float | None = None
    warnings: tuple[str, ...] = ()
    mcse: float | None = None

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def with_warnings(self, extra) -> "EstimateSummary":
        if not extra:
            return self
        return EstimateSummary(**{**self.__dict__, "warnings": self.warnings + tuple(extra)})


def _is_unstable(point: float, lower: float, upper: float) -> bool:
    if not (np.isfinite(point) and np.isfinite(lower) and np.isfinite(upper)):
        return True
    return (upper - lower) > UNSTABLE_WIDTH or not (lower <= point <= upper)


def summarize(draws, estimator: str) -> EstimateSummary:
    """Posterior mean, equal-tailed 95% interval, ESS and split R-hat."""
    chains = np.asarray(draws, dtype=float)
    if chains.ndim == 1:
        chains = chains[None, :]
    total = int(chains.size)
    if total < MIN_DRAWS:
        raise ConfigError(f"{estimator}: {total} draws retidos; mínimo {MIN_DRAWS}.")

    finite = np.isfinite(chains)
    n_nonfinite = int(total - finite.sum())
    warnings: list[str] = []
    if n_nonfinite:
        values = chains[finite]
        message = f"{n_nonfinite} draw(s) não finitos excluídos dos momentos ({n_nonfinite / total:.2%})"
        warnings.append(message)
        logger.warning("%s: %s", estimator, message)
        ess = effective_sample_size(values) if values.size else 0.0
        mcse = monte_carlo_se(values) if values.size > 1 else None
        rhat = None
    else:
        values = chains.ravel()
        ess = effective_sample_size(chains)
        mcse = monte_carlo_se(chains)
        rhat = split_rhat(chains) if chains.shape[0] > 1 or chains.shape[1] >= 4 else None

    if values.size == 0:
        return EstimateSummary(estimator, float("nan"), float("nan"), float("nan"), 0.0, None, True, total, n_nonfinite, None, tuple(warnings))

    point = float(values.mean())
    lower, upper = equal_tailed_interval(values)
    if rhat is not None and np.isfinite(rhat) and rhat > RHAT_WARNING:
        warnings.append(f"R-hat dividido {rhat:.3f} > {RHAT_WARNING}")
        logger.warning("%s: possível falta de convergência (R-hat %.3f)", estimator, rhat)
    unstable = _is_unstable(point, lower, upper) or n_nonfinite / total > NONFINITE_TOLERANCE
    return EstimateSummary(
        estimator=estimator,
        point=point,
        lower=lower,
        upper=upper,
        ess=float(ess),
        rhat=None if rhat is None or not np.isfinite(rhat) else float(rhat),
        unstable=bool(unstable),
        n_draws=total,
        n_nonfinite=n_nonfinite,
        prob_negative=float(np.mean(values < 0.0)),
        warnings=tuple(warnings),
        mcse=mcse if mcse is not None and np.isfinite(mcse) else None,
    )


# --- frequentist ATE ---------------------------------------------------------


def _side_design(x: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(x.size), x])


def freq_ate(win: BandwidthWindow, estimator: str = "freq") -> EstimateSummary:
    """Intercept gap of separate local-linear fits, normal-quantile CI."""
    for side, count in (("below", win.n_b), ("above", win.n_a)):
        if count < MIN_FREQ_SIDE:
            raise DataError(f"{estimator}: lado {side} com {count} registro(s); mínimo {MIN_FREQ_SIDE}.")
    fit_b = ols_fit(_side_design(win.x_below), win.y_below)
    fit_a = ols_fit(_side_design(win.x_above), win.y_above)
    point = float(fit_a.coefficients[0] - fit_b.coefficients[0])
    se = float(np.hypot(fit_a.standard_errors[0], fit_b.standard_errors[0]))
    lower, upper = point - _Z975 * se, point + _Z975 * se
    return EstimateSummary(
        estimator=estimator,
        point=point,
        lower=lower,
        upper=upper,
        unstable=_is_unstable(point, lower, upper),
        warnings=win.warnings,
    )


# --- priors and MCMC settings ------------------------------------------------


class AtePrior(LabModel):
    kind: Literal["wip", "sip"]
    m0: float = 3.7
    s0: float = Field(0.5, gt=0.0)
    m1b: float = 8.0
    s1b: float = Field(0.75, gt=0.0)
    m1a: float = 6.0
    s1a: float = Field(1.0, gt=0.0)
    phi_mean: float = 0.0
    phi_variance: float = Field(2.0, gt=0.0)  # variance, not sd
    sigma_upper: float = Field(5.0, gt=0.0)

    @classmethod
    def wip(cls, **overrides) -> "AtePrior":
        return cls(**{"kind": "wip", "phi_mean": 0.0, "phi_variance": 2.0, **overrides})

    @classmethod
    def sip(cls, **overrides) -> "AtePrior":
        return cls(**{"kind": "sip", "phi_mean": -2.0, "phi_variance": 1.0, **overrides})

    @property
    def mean_vector(self) -> np.ndarray:
        # order: beta0b, phi, beta1b, beta1a
        return np.array([self.m0, self.phi_mean, self.m1b, self.m1a])

    @property
    def precision_diagonal(self) -> np.ndarray:
        return 1.0 / np.array([self.s0**2, self.phi_variance, self.s1b**2, self.s1a**2])


class DenomPrior(LabModel):
    kind: Literal["unc", "fix", "fdp"]
    unc_a: float = Field(1.0, gt=0.0)
    unc_b: float = Field(1.0, gt=0.0)
    alpha_b_low: float = Field(1.0, gt=0.0)
    alpha_b_high: float = 100000.0
    nu_low: float = Field(200.0, ge=0.0)
    nu_high: float = 10000.0
    fdp_mean_above: float = 2.0
    fdp_mean_below: float = -2.0
    fdp_sd: float = Field(1.0, gt=0.0)

    @model_validator(mode="after")
    def _check_supports(self) -> "DenomPrior":
        if self.alpha_b_high <= self.alpha_b_low or self.nu_high <= self.nu_low:
            raise ValueError("suportes uniformes de alpha_b e nu precisam ter largura positiva")
        return self


class McmcConfig(LabModel):
    chains: int = Field(2, ge=1, le=MAX_CHAINS)
    iterations: int = Field(12500, ge=1)
    burn_in: int = Field(2500, ge=0)
    thin: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_lengths(self) -> "McmcConfig":
        if self.burn_in >= self.iterations:
            raise ValueError("burn_in precisa ser menor que iterations")
        return self

    @property
    def kept(self) -> int:
        return len(range(self.burn_in, self.iterations, self.thin))

    def keeps(self, iteration: int) -> bool:
        return iteration >= self.burn_in and (iteration - self.burn_in) % self.thin == 0


@dataclass(frozen=True)
class PosteriorDraws:
    """Aligned draws, each parameter shaped (chains, kept)."""

    params: dict[str, np.ndarray]
    chains: int
    burn_in: int
    thin: int
    seed: int
    stream_id: int
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def pooled(self, name: str) -> np.ndarray:
        return self.params[name].ravel()

    def to_frame(self) -> pd.DataFrame:
        """Long format: iteration, parameter, value (chains stacked)."""
        frames = []
        for name, values in self.params.items():
            pooled = values.ravel()
            frames.append(pd.DataFrame({"iteration": np.arange(pooled.size), "parameter": name, "value": pooled}))
        return pd.concat(frames, ignore_index=True)


def _stack(per_chain: list[dict[str, np.ndarray]]) -> dict[str, np.ndarray]:
    return {name: np.vstack([chain[name] for chain in per_chain]) for name in per_chain[0]}


# --- Bayesian ATE ------------------------------------------------------------


def _ate_chain(win: BandwidthWindow, prior: AtePrior, mcmc: McmcConfig, gen: np.random.Generator) -> dict[str, np.ndarray]:
    x = np.concatenate([win.x_below, win.x_above])
    y = np.concatenate([win.y_below, win.y_above])
    n = y.size
    is_above = np.concatenate([np.zeros(win.n_b), np.ones(win.n_a)])
    design = np.column_stack([np.ones(n), is_above, x * (1.0 - is_above), x * is_above])
    xtx = design.T @ design
    xty = design.T @ y
    yty = float(y @ y)

    prior_precision = np.diag(prior.precision_diagonal)
    prior_shift = prior.precision_diagonal * prior.mean_vector
    upper = prior.sigma_upper
    width = min(1.0, upper / 4.0)

    def log_sigma(sigma: float, ssr: float) -> float:
        if not 0.0 < sigma < upper:
            return -np.inf
        return -n * np.log(sigma) - ssr / (2.0 * sigma * sigma)

    theta = prior.mean_vector.copy()
    sigma = min(1.0, upper / 2.0)
    kept = mcmc.kept
    out_theta = np.empty((kept, 4))
    out_sigma = np.empty(kept)
    k = 0
    for iteration in range(mcmc.iterations):
        tau = 1.0 / (sigma * sigma)
        chol = np.linalg.cholesky(tau * xtx + prior_precision)
        centre = linalg.solve_triangular(chol, tau * xty + prior_shift, lower=True)
        theta = linalg.solve_triangular(chol.T, centre + gen.standard_normal(4), lower=False)

        ssr = max(yty - 2.0 * theta @ xty + theta @ xtx @ theta, 0.0)
        sigma, _ = slice_sample(sigma, lambda s: log_sigma(s, ssr), gen, width=width, lower=0.0, upper=upper)

        if mcmc.keeps(iteration):
            out_theta[k] = theta
            out_sigma[k] = sigma
            k += 1

    beta0b, phi = out_theta[:, 0], out_theta[:, 1]
    return {
        "beta0b": beta0b,
        "phi": phi,
        "beta1b": out_theta[:, 2],
        "beta1a": out_theta[:, 3],
        "sigma": out_sigma,
        "beta0a": beta0b + phi,
        "delta_beta": phi.copy(),
    }


def sample_ate(win: BandwidthWindow, prior: AtePrior, mcmc: McmcConfig, rng: RngStream) -> PosteriorDraws:
    """Metropolis-within-Gibbs for the shared-sigma local-linear model.

    (beta0b, phi, beta1b, beta1a) | sigma is a joint normal block; sigma is
    slice-sampled on (0, sigma_upper). Chain j runs on ``rng.split(j)``.
    """
    per_chain = [_ate_chain(win, prior, mcmc, rng.split(j).generator) for j in range(mcmc.chains)]
    return PosteriorDraws(
        params=_stack(per_chain),
        chains=mcmc.chains,
        burn_in=mcmc.burn_in,
        thin=mcmc.thin,
        seed=rng.seed,
        stream_id=rng.stream_id,
        meta={"model": prior.kind, "n_b": win.n_b, "n_a": win.n_a, "h": win.h},
    )


# --- Bayesian denominator ----------------------------------------------------


def beta_logpdf(x: float, a: float, b: float) -> float:
    return float(xlogy(a - 1.0, x) + xlog1py(b - 1.0, -x) - betaln(a, b))


def _unc_chain(win, prior: DenomPrior, mcmc: McmcConfig, gen) -> dict[str, np.ndarray]:
    kept = mcmc.kept
    pi_b = Beta(prior.unc_a + win.s_b, prior.unc_b + win.n_b - win.s_b).sample(gen, kept)
    pi_a = Beta(prior.unc_a + win.s_a, prior.unc_b + win.n_a - win.s_a).sample(gen, kept)
    return {"pi_a": pi_a, "pi_b": pi_b}


def _fix_chain(win, prior: DenomPrior, mcmc: McmcConfig, gen) -> dict[str, np.ndarray]:
    n_b, s_b, n_a, s_a = win.n_b, win.s_b, win.n_a, win.s_a
    b_shape = n_b + 1.0  # second shape of the pi_b prior tracks the window

    alpha_bounds = (prior.alpha_b_low, prior.alpha_b_high)
    nu_bounds = (prior.nu_low, prior.nu_high)
    alpha_b = min(prior.alpha_b_low + 1.0, prior.alpha_b_high)
    nu = prior.nu_low + 0.05 * (prior.nu_high - prior.nu_low)
    alpha_step = RandomWalkStep(scale=10.0)
    nu_step = RandomWalkStep(scale=0.05 * (prior.nu_high - prior.nu_low))

    kept = mcmc.kept
    out = {name: np.empty(kept) for name in ("pi_a", "pi_b", "alpha_b", "nu")}
    k = 0
    for iteration in range(mcmc.iterations):
        pi_b = Beta(alpha_b + s_b, b_shape + (n_b - s_b)).sample(gen, None)
        pi_a = Beta(alpha_b + nu + s_a, 1.0 + (n_a - s_a)).sample(gen, None)

        def log_alpha(a, nu=nu, pi_a=pi_a, pi_b=pi_b):
            return beta_logpdf(pi_b, a, b_shape) + beta_logpdf(pi_a, a + nu, 1.0)

        alpha_b, _ = metropolis_step(alpha_b, log_alpha, log_alpha(alpha_b), alpha_step, gen, alpha_bounds)

        def log_nu(v, alpha_b=alpha_b, pi_a=pi_a):
            return beta_logpdf(pi_a, alpha_b + v, 1.0)

        nu, _ = metropolis_step(nu, log_nu, log_nu(nu), nu_step, gen, nu_bounds)

        if iteration < mcmc.burn_in:
            alpha_step.tune()
            nu_step.tune()
        elif iteration == mcmc.burn_in:
            alpha_step.freeze()
            nu_step.freeze()
        if mcmc.keeps(iteration):
            out["pi_a"][k], out["pi_b"][k], out["alpha_b"][k], out["nu"][k] = pi_a, pi_b, alpha_b, nu
            k += 1
    return out


def _fdp_chain(win, prior: DenomPrior, mcmc: McmcConfig, gen) -> dict[str, np.ndarray]:
    def make_log_post(n: int, s: int, mean: float):
        def log_post(logit_pi: float) -> float:
            return s * logit_pi - n * np.logaddexp(0.0, logit_pi) - (logit_pi - mean) ** 2 / (2.0 * prior.fdp_sd**2)

        return log_post

    sides = {
        "a": (make_log_post(win.n_a, win.s_a, prior.fdp_mean_above), prior.fdp_mean_above),
        "b": (make_log_post(win.n_b, win.s_b, prior.fdp_mean_below), prior.fdp_mean_below),
    }
    state = {side: start for side, (_, start) in sides.items()}
    current = {side: log_post(state[side]) for side, (log_post, _) in sides.items()}
    steps = {side: RandomWalkStep(scale=prior.fdp_sd) for side in sides}

    kept = mcmc.kept
    out = {"pi_a": np.empty(kept), "pi_b": np.empty(kept)}
    k = 0
    for iteration in range(mcmc.iterations):
        for side, (log_post, _) in sides.items():
            state[side], current[side] = metropolis_step(state[side], log_post, current[side], steps[side], gen)
            if iteration < mcmc.burn_in:
                steps[side].tune()
            elif iteration == mcmc.burn_in:
                steps[side].freeze()
        if mcmc.keeps(iteration):
            out["pi_a"][k] = expit(state["a"])
            out["pi_b"][k] = expit(state["b"])
            k += 1
    return out


_DENOMINATOR_CHAINS = {"unc": _unc_chain, "fix": _fix_chain, "fdp": _fdp_chain}


def sample_denominator(win: BandwidthWindow, prior: DenomPrior, mcmc: McmcConfig, rng: RngStream) -> PosteriorDraws:
    """Posterior of (pi_a, pi_b) and delta_pi under the chosen prior family.

    An empty window gives prior draws.
    """
    chain_fn = _DENOMINATOR_CHAINS[prior.kind]
    per_chain = [chain_fn(win, prior, mcmc, rng.split(j).generator) for j in range(mcmc.chains)]
    params = _stack(per_chain)
    params["delta_pi"] = params["pi_a"] - params["pi_b"]
    return PosteriorDraws(
        params=params,
        chains=mcmc.chains,
        burn_in=mcmc.burn_in,
        thin=mcmc.thin,
        seed=rng.seed,
        stream_id=rng.stream_id,
        meta={"model": prior.kind, "n_b": win.n_b, "s_b": win.s_b, "n_a": win.n_a, "s_a": win.s_a},
    )


# --- LATE --------------------------------------------------------------------


def late(numerator: PosteriorDraws, denominator: PosteriorDraws, estimator: str = "late") -> tuple[PosteriorDraws, EstimateSummary]:
    """Per-draw ratio delta_beta / delta_pi, paired by index; no truncation."""
    delta_beta = numerator["delta_beta"]
    delta_pi = denominator["delta_pi"]
    if delta_beta.shape != delta_pi.shape:
        raise DataError(f"{estimator}: numerador {delta_beta.shape} e denominador {delta_pi.shape} com draws desalinhados.")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = delta_beta / delta_pi
    draws = PosteriorDraws(
        params={"late": ratio, "delta_beta": delta_beta, "delta_pi": delta_pi},
        chains=numerator.chains,
        burn_in=numerator.burn_in,
        thin=numerator.thin,
        seed=numerator.seed,
        stream_id=numerator.stream_id,
        meta={"numerator": numerator.meta.get("model"), "denominator": denominator.meta.get("model")},
    )
    return draws, summarize(ratio, estimator)


# --- prior predictive check --------------------------------------------------


@dataclass(frozen=True)
class PriorBand:
    x_centered: float
    side: str
    mean: float
    lower: float
    upper: float


def prior_predictive_band(prior: AtePrior, x_centered: float, side: Literal["below", "above"] = "below") -> PriorBand:
    """95% prior interval of the regression mean at ``x_centered``."""
    if side == "below":
        mean = prior.m0 + prior.m1b * x_centered
        variance = prior.s0**2 + (prior.s1b * x_centered) ** 2
    elif side == "above":
        mean = prior.m0 + prior.phi_mean + prior.m1a * x_centered
        variance = prior.s0**2 + prior.phi_variance + (prior.s1a * x_centered) ** 2
    else:
        raise ParameterDomainError(f"Lado inválido: {side}")
    half = _Z975 * np.sqrt(variance)
    return PriorBand(float(x_centered), side, float(mean), float(mean - half), float(mean + half))


# --- estimator suite ---------------------------------------------------------


@dataclass(frozen=True)
class EstimatorRun:
    summaries: dict[str, EstimateSummary]
    draws: dict[str, PosteriorDraws]


def parse_estimators(raw: str | list[str]) -> list[str]:
    names = [name.strip() for name in (raw.split(",") if isinstance(raw, str) else raw) if name.strip()]
    unknown = [name for name in names if name not in ESTIMATORS]
    if unknown:
        raise ConfigError(f"Estimador(es) desconhecido(s): {', '.join(unknown)}. Válidos: {', '.join(ESTIMATORS)}")
    if not names:
        raise ConfigError(f"Nenhum estimador informado. Válidos: {', '.join(ESTIMATORS)}")
    return list(dict.fromkeys(names))


def sampler_stream(seed: int, replicate: int, sampler: str) -> RngStream:
    return RngStream(seed, replicate * STREAM_STRIDE + SAMPLER_STREAMS[sampler])


def run_estimators(
    win: BandwidthWindow,
    estimators: list[str],
    mcmc: McmcConfig,
    *,
    seed: int,
    replicate: int = 1,
    ate_priors: dict[str, AtePrior] | None = None,
    denom_priors: dict[str, DenomPrior] | None = None,
) -> EstimatorRun:
    """Run the requested estimators on one window, sharing samplers between them.

    Each sampler owns a fixed substream of the replicate, so results do not
    depend on which other estimators were requested.
    """
    ate_priors = {"wip": AtePrior.wip(), "sip": AtePrior.sip(), **(ate_priors or {})}
    denom_priors = {kind: DenomPrior(kind=kind) for kind in ("unc", "fix", "fdp")} | (denom_priors or {})

    cache: dict[str, PosteriorDraws] = {}

    def draws_for(sampler: str) -> PosteriorDraws:
        if sampler not in cache:
            rng = sampler_stream(seed, replicate, sampler)
            if sampler in ate_priors:
                cache[sampler] = sample_ate(win, ate_priors[sampler], mcmc, rng)
            else:
                cache[sampler] = sample_denominator(win, denom_priors[sampler], mcmc, rng)
        return cache[sampler]

    summaries: dict[str, EstimateSummary] = {}
    draws: dict[str, PosteriorDraws] = {}
    for name in estimators:
        if name == "freq":
            summaries[name] = freq_ate(win, name)
        elif name in ("wip", "sip"):
            draws[name] = draws_for(name)
            summaries[name] = summarize(draws[name]["delta_beta"], name).with_warnings(win.warnings)
        else:
            numerator, denominator = LATE_VARIANTS[name]
            draws[name], summary = late(draws_for(numerator), draws_for(denominator), name)
            summaries[name] = summary.with_warnings(win.warnings)
    return EstimatorRun(summaries=summaries, draws=draws)
