from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .errors import NumericError


TUNE_INTERVAL = 100
TARGET_ACCEPTANCE = (0.3, 0.5)


def slice_sample(
    x0: float,
    log_density: Callable[[float], float],
    gen: np.random.Generator,
    *,
    width: float,
    lower: float = -np.inf,
    upper: float = np.inf,
    log_density_x0: float | None = None,
    max_shrinks: int = 200,
) -> tuple[float, float]:
    """One univariate slice-sampling update with stepping out and shrinkage.

    The bracket never leaves (lower, upper); ``log_density`` must return -inf
    outside the support.
    """
    current = log_density(x0) if log_density_x0 is None else log_density_x0
    level = current + np.log(gen.random())

    offset = gen.random() * width
    left = max(x0 - offset, lower)
    right = min(x0 + (width - offset), upper)
    while left > lower and log_density(left) > level:
        left = max(left - width, lower)
    while right < upper and log_density(right) > level:
        right = min(right + width, upper)

    for _ in range(max_shrinks):
        proposal = left + gen.random() * (right - left)
        value = log_density(proposal)
        if value > level:
            return float(proposal), float(value)
        if proposal < x0:
            left = proposal
        else:
            right = proposal
    raise NumericError(f"Slice sampler encolheu {max_shrinks} vezes sem aceitar (x0={x0:.6g}).")


def reflect(value: float, low: float, high: float) -> float:
    """Fold ``value`` back into [low, high] by mirror reflection at the bounds."""
    span = high - low
    if span <= 0:
        raise NumericError(f"Suporte de largura nula: [{low}, {high}].")
    shifted = (value - low) % (2.0 * span)
    return low + (shifted if shifted <= span else 2.0 * span - shifted)


@dataclass
class RandomWalkStep:
    """Proposal scale tuned during burn-in towards the target acceptance band, then frozen."""

    scale: float
    accepted: int = 0
    proposed: int = 0
    frozen: bool = False

    def record(self, accepted: bool) -> None:
        self.proposed += 1
        self.accepted += int(accepted)

    @property
    def acceptance(self) -> float:
        return self.accepted / self.proposed if self.proposed else float("nan")

    def tune(self) -> None:
        if self.frozen or self.proposed < TUNE_INTERVAL:
            return
        rate = self.acceptance
        low, high = TARGET_ACCEPTANCE
        if rate < low:
            self.scale *= 0.7
        elif rate > high:
            self.scale *= 1.4
        self.accepted = self.proposed = 0

    def freeze(self) -> None:
        self.frozen = True
        self.accepted = self.proposed = 0


def metropolis_step(
    x: float,
    log_density: Callable[[float], float],
    current: float,
    step: RandomWalkStep,
    gen: np.random.Generator,
    bounds: tuple[float, float] | None = None,
) -> tuple[float, float]:
    """Gaussian random-walk Metropolis update, reflected into ``bounds`` when given.

    Reflection keeps the proposal symmetric, so no Hastings correction.
    """
    proposal = x + step.scale * gen.standard_normal()
    if bounds is not None:
        proposal = reflect(proposal, *bounds)
    value = log_density(proposal)
    accept = np.log(gen.random()) < value - current
    step.record(bool(accept))
    if accept:
        return float(proposal), float(value)
    return x, current
