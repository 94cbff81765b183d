from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import expit

from .errors import ConvergenceError, DataError, ParameterDomainError, RankDeficiencyError, SeparationError


logger = logging.getLogger(__name__)

# Replicate r, chain c -> stream id r * STREAM_STRIDE + c.
STREAM_STRIDE = 2**16
_UINT64_MAX = 2**64 - 1

CHOLESKY_JITTER = 1e-10
IRLS_TOLERANCE = 1e-8
IRLS_MAX_ITERATIONS = 100
SEPARATION_NORM = 1e3


class RngStream:
    """Philox stream keyed by (seed, stream id).

    Same key and same sequence of calls give bit-identical draws; distinct
    stream ids are independent SeedSequence children and share no state.
    A stream belongs to one task: split it instead of sharing it.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        seed = int(seed)
        stream_id = int(stream_id)
        if not 0 <= seed <= _UINT64_MAX:
            raise ParameterDomainError(f"Seed fora do intervalo de 64 bits sem sinal: {seed}")
        if not 0 <= stream_id <= _UINT64_MAX:
            raise ParameterDomainError(f"Stream id fora do intervalo de 64 bits sem sinal: {stream_id}")
        self.seed = seed
        self.stream_id = stream_id
        sequence = np.random.SeedSequence(seed, spawn_key=(stream_id,))
        self.generator = np.random.Generator(np.random.Philox(sequence))

    @classmethod
    def for_replicate(cls, seed: int, replicate: int, chain: int = 0) -> "RngStream":
        if not 0 <= chain < STREAM_STRIDE:
            raise ParameterDomainError(f"Índice de cadeia fora de [0, {STREAM_STRIDE}): {chain}")
        return cls(seed, int(replicate) * STREAM_STRIDE + int(chain))

    def split(self, offset: int) -> "RngStream":
        """Fresh stream at stream_id + offset (same seed)."""
        return RngStream(self.seed, self.stream_id + int(offset))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


# --- distributions -----------------------------------------------------------
#
# Algorithms are numpy's Generator ones: ziggurat normal, inverse-free uniform
# from 53-bit doubles, beta via the ratio of gammas (Johnk for small shapes),
# BTPE/inversion binomial. Bernoulli is a uniform comparison.


def _check_finite(**values: float) -> None:
    for name, value in values.items():
        if not np.isfinite(value):
            raise ParameterDomainError(f"Parâmetro '{name}' precisa ser finito (recebido {value}).")


@dataclass(frozen=True)
class Normal:
    mean: float
    sd: float

    def __post_init__(self):
        _check_finite(mean=self.mean, sd=self.sd)
        if self.sd < 0:
            raise ParameterDomainError(f"Normal: sd precisa ser >= 0 (recebido {self.sd}).")

    def sample(self, gen: np.random.Generator, size):
        return gen.normal(self.mean, self.sd, size)


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def __post_init__(self):
        _check_finite(low=self.low, high=self.high)
        if not self.low < self.high:
            raise ParameterDomainError(f"Uniform: exige low < high (recebido {self.low}, {self.high}).")

    def sample(self, gen: np.random.Generator, size):
        return gen.uniform(self.low, self.high, size)


@dataclass(frozen=True)
class Beta:
    a: float
    b: float

    def __post_init__(self):
        _check_finite(a=self.a, b=self.b)
        if self.a <= 0 or self.b <= 0:
            raise ParameterDomainError(f"Beta: formas precisam ser > 0 (recebido a={self.a}, b={self.b}).")

    def sample(self, gen: np.random.Generator, size):
        return gen.beta(self.a, self.b, size)


@dataclass(frozen=True)
class Binomial:
    n: int
    p: float

    def __post_init__(self):
        _check_finite(p=self.p)
        if int(self.n) != self.n or self.n < 0:
            raise ParameterDomainError(f"Binomial: n precisa ser inteiro >= 0 (recebido {self.n}).")
        if not 0.0 <= self.p <= 1.0:
            raise ParameterDomainError(f"Binomial: p precisa estar em [0, 1] (recebido {self.p}).")

    def sample(self, gen: np.random.Generator, size):
        return gen.binomial(int(self.n), self.p, size)


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self):
        _check_finite(p=self.p)
        if not 0.0 <= self.p <= 1.0:
            raise ParameterDomainError(f"Bernoulli: p precisa estar em [0, 1] (recebido {self.p}).")

    def sample(self, gen: np.random.Generator, size):
        return np.asarray(gen.random(size) < self.p).astype(np.int64)[()]


Distribution = Normal | Uniform | Beta | Binomial | Bernoulli


def draw(dist: Distribution, rng: RngStream, size: int | tuple[int, ...] | None = None):
    """One draw (size=None) or an array of draws from ``dist``."""
    if not isinstance(dist, (Normal, Uniform, Beta, Binomial, Bernoulli)):
        raise ParameterDomainError(f"Distribuição não suportada: {type(dist).__name__}")
    return dist.sample(rng.generator, size)


def bernoulli_vector(p: np.ndarray, rng: RngStream) -> np.ndarray:
    """Independent Bernoulli draws with per-element probabilities."""
    p = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ParameterDomainError("Probabilidades de Bernoulli precisam estar em [0, 1].")
    return (rng.generator.random(p.shape) < p).astype(np.int64)


# --- linear algebra ----------------------------------------------------------


def _spd_inverse(matrix: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via Cholesky.

    On factorisation failure the diagonal gets CHOLESKY_JITTER once.
    """
    p = matrix.shape[0]
    try:
        factor = linalg.cho_factor(matrix, lower=True, check_finite=True)
    except linalg.LinAlgError:
        logger.debug("Cholesky falhou; aplicando jitter %.0e", CHOLESKY_JITTER)
        factor = linalg.cho_factor(matrix + CHOLESKY_JITTER * np.eye(p), lower=True)
    inverse = linalg.cho_solve(factor, np.eye(p))
    return (inverse + inverse.T) / 2.0


def _as_design(design, response) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or y.ndim != 1:
        raise DataError("Desenho precisa ser matriz 2D e resposta um vetor.")
    if x.shape[0] != y.shape[0]:
        raise DataError(f"Linhas do desenho ({x.shape[0]}) diferem do tamanho da resposta ({y.shape[0]}).")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DataError("Desenho e resposta precisam ser finitos.")
    rank = int(np.linalg.matrix_rank(x)) if x.size else 0
    if rank < x.shape[1]:
        raise RankDeficiencyError(rank, x.shape[1])
    return x, y


@dataclass(frozen=True)
class LinearFit:
    coefficients: np.ndarray
    covariance: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    standard_errors: np.ndarray
    residual_variance: float

    def prediction_se(self, design) -> np.ndarray:
        """Standard error of the fitted mean at each design row."""
        x = np.atleast_2d(np.asarray(design, dtype=float))
        variance = np.einsum("ij,jk,ik->i", x, self.covariance, x)
        return np.sqrt(np.clip(variance, 0.0, None))


def ols_fit(design, response) -> LinearFit:
    x, y = _as_design(design, response)
    n, p = x.shape
    xtx_inv = _spd_inverse(x.T @ x)
    coefficients = xtx_inv @ (x.T @ y)
    fitted = x @ coefficients
    residuals = y - fitted
    # n == p leaves no residual degrees of freedom; the fit is exact.
    residual_variance = float(residuals @ residuals / (n - p)) if n > p else 0.0
    covariance = residual_variance * xtx_inv
    return LinearFit(
        coefficients=coefficients,
        covariance=covariance,
        residuals=residuals,
        fitted=fitted,
        standard_errors=np.sqrt(np.clip(np.diag(covariance), 0.0, None)),
        residual_variance=residual_variance,
    )


# --- logistic regression (IRLS) ---------------------------------------------


@dataclass(frozen=True)
class GlmFit:
    coefficients: np.ndarray
    covariance: np.ndarray
    converged: bool
    iterations: int
    log_likelihood: float
    trace: list[dict[str, float]] = field(default_factory=list)

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def logistic_log_likelihood(design, response, coefficients) -> float:
    eta = np.asarray(design, dtype=float) @ np.asarray(coefficients, dtype=float)
    y = np.asarray(response, dtype=float)
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def logistic_fit(
    design,
    response,
    *,
    tol: float = IRLS_TOLERANCE,
    max_iter: int = IRLS_MAX_ITERATIONS,
    max_norm: float = SEPARATION_NORM,
) -> GlmFit:
    """Maximum-likelihood logistic regression by Newton/IRLS from beta = 0.

    Stops when max |score| < tol. A coefficient norm or a standard error above
    ``max_norm`` is read as (quasi-)complete separation.
    """
    x, y = _as_design(design, response)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("Resposta binária precisa conter apenas 0 e 1.")

    beta = np.zeros(x.shape[1])
    trace: list[dict[str, float]] = []
    for iteration in range(max_iter + 1):
        mu = expit(x @ beta)
        score = x.T @ (y - mu)
        max_score = float(np.max(np.abs(score)))
        trace.append({"iteration": float(iteration), "max_score": max_score, "norm": float(np.linalg.norm(beta))})
        weights = mu * (1.0 - mu)
        information = (x * weights[:, None]).T @ x
        if max_score < tol:
            covariance = _spd_inverse(information)
            # Separated data also converge on the score with a vanishing information.
            if np.any(np.sqrt(np.clip(np.diag(covariance), 0.0, None)) > max_norm):
                raise SeparationError(
                    f"Separação detectada no IRLS: erro-padrão > {max_norm:g} na iteração {iteration}.",
                    trace,
                )
            return GlmFit(
                coefficients=beta,
                covariance=covariance,
                converged=True,
                iterations=iteration,
                log_likelihood=logistic_log_likelihood(x, y, beta),
                trace=trace,
            )
        if iteration == max_iter:
            break
        beta = beta + _spd_inverse(information) @ score
        if not np.all(np.isfinite(beta)) or np.linalg.norm(beta) > max_norm:
            trace.append({"iteration": float(iteration + 1), "max_score": float("nan"), "norm": float(np.linalg.norm(beta))})
            raise SeparationError(
                f"Separação detectada no IRLS: norma dos coeficientes > {max_norm:g} na iteração {iteration + 1}.",
                trace,
            )

    raise ConvergenceError(
        f"IRLS não convergiu em {max_iter} iterações (max |score| = {trace[-1]['max_score']:.3g}).",
        trace,
    )


# --- summary statistics ------------------------------------------------------


def equal_tailed_interval(draws, level: float = 0.95) -> tuple[float, float]:
    values = np.asarray(draws, dtype=float).ravel()
    tail = (1.0 - level) / 2.0
    lower, upper = np.quantile(values, [tail, 1.0 - tail])
    return float(lower), float(upper)


def _autocovariance(chain: np.ndarray) -> np.ndarray:
    n = chain.shape[0]
    centered = chain - chain.mean()
    size = 1 << int(np.ceil(np.log2(2 * n)))
    spectrum = np.fft.rfft(centered, n=size)
    return np.fft.irfft(spectrum * np.conjugate(spectrum), n=size)[:n] / n


def _as_chains(draws) -> np.ndarray:
    chains = np.asarray(draws, dtype=float)
    if chains.ndim == 1:
        chains = chains[None, :]
    if chains.ndim != 2:
        raise DataError("Draws precisam ter formato (cadeias, iterações).")
    return chains


def effective_sample_size(draws) -> float:
    """Multi-chain ESS with Geyer's initial positive sequence truncation."""
    chains = _as_chains(draws)
    m, n = chains.shape
    total = m * n
    if n < 4:
        return float(total)
    within = chains.var(axis=1, ddof=1)
    if np.all(within == 0.0):
        return float(total)

    acov = np.array([_autocovariance(chain) for chain in chains])
    w = float(np.mean(acov[:, 0] * n / (n - 1)))
    between = float(np.var(chains.mean(axis=1), ddof=1)) if m > 1 else 0.0
    var_plus = w * (n - 1) / n + between
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    pair_sum = 0.0
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0.0:
            break
        pair_sum += pair
        t += 2
    tau = max(-1.0 + 2.0 * pair_sum, 1.0 / np.log10(max(total, 10)))
    return float(total / tau)


def split_rhat(draws) -> float:
    """Split-chain potential scale reduction factor."""
    chains = _as_chains(draws)
    n = chains.shape[1] // 2
    if n < 2:
        return float("nan")
    halves = np.concatenate([chains[:, :n], chains[:, -n:]], axis=0)
    means = halves.mean(axis=1)
    w = float(np.mean(halves.var(axis=1, ddof=1)))
    b = n * float(np.var(means, ddof=1))
    if w == 0.0:
        return 1.0 if b == 0.0 else float("inf")
    var_hat = (n - 1) / n * w + b / n
    return float(np.sqrt(var_hat / w))


def monte_carlo_se(draws) -> float:
    chains = _as_chains(draws)
    ess = effective_sample_size(chains)
    return float(np.std(chains, ddof=1) / np.sqrt(ess))
