"""Simulation-study harness: scenario grid x replicates, six estimators per
dataset, aggregation into table rows."""

from __future__ import annotations

import fnmatch
import logging
import math
from collections.abc import Callable, Iterable
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal, NamedTuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import Field, field_validator, model_validator

from .cohort import CohortParams
from .config import LabModel, split_list
from .errors import ConfigError, LabError
from .inference import (
    ESTIMATORS,
    AtePrior,
    McmcConfig,
    parse_estimators,
    run_estimators,
    window,
)
from .numerics import RngStream
from .simulate import SIMULATION_CHAIN, ScenarioConfig, simulate_dataset, prepare_base_cohort


logger = logging.getLogger(__name__)

TABLE_COLUMNS = [
    "iv",
    "confounding",
    "tau",
    "bandwidth",
    "estimator",
    "point",
    "lower",
    "upper",
    "sd_points",
    "frac_unstable",
    "n_ok",
]

CELL_COLUMNS = ["cell", "iv", "confounding", "tau", "bandwidth", "n_replicates", "n_failed", "n_unstable", "invalid"]

PRESETS: dict[str, dict] = {
    "paper-tables": {
        "iv_strengths": ["strong", "weak"],
        "confounding_levels": [1, 2, 3, 4],
        "taus": [2.0, 1.09, 0.5],
        "bandwidths": [0.05, 0.15, 0.25],
        "replicates": 100,
    },
    "smoke": {
        "iv_strengths": ["strong"],
        "confounding_levels": [1],
        "taus": [2.0],
        "bandwidths": [0.05, 0.25],
        "replicates": 5,
        "chains": 2,
        "iterations": 3000,
        "burn_in": 1000,
    },
}


class StudyConfig(LabModel):
    iv_strengths: list[Literal["strong", "weak"]] = Field(default_factory=lambda: ["strong", "weak"])
    confounding_levels: list[int] = Field(default_factory=lambda: [1, 2, 3, 4])
    taus: list[float] = Field(default_factory=lambda: [2.0, 1.09, 0.5])
    bandwidths: list[float] = Field(default_factory=lambda: [0.05, 0.15, 0.25])
    estimators: list[str] = Field(default_factory=lambda: list(ESTIMATORS))
    replicates: int = Field(100, ge=1)
    seed: int = Field(20150, ge=0)
    cohort_n: int = Field(5720, ge=10)
    failure_threshold: float = Field(0.2, ge=0.0, le=1.0)

    chains: int = Field(2, ge=1)
    iterations: int = Field(12500, ge=1)
    burn_in: int = Field(2500, ge=0)
    thin: int = Field(1, ge=1)

    # prior overrides; None keeps the estimator default
    m1a: float | None = None
    s1a: float | None = Field(None, gt=0.0)
    wip_phi_variance: float | None = Field(None, gt=0.0)
    sip_phi_variance: float | None = Field(None, gt=0.0)

    @field_validator("iv_strengths", "confounding_levels", "taus", "bandwidths", "estimators", mode="before")
    @classmethod
    def _split(cls, value):
        return split_list(value)

    @field_validator("confounding_levels")
    @classmethod
    def _check_levels(cls, value: list[int]) -> list[int]:
        bad = [level for level in value if level not in (1, 2, 3, 4)]
        if bad:
            raise ValueError(f"níveis de confundimento válidos são 1..4 (recebido {bad})")
        return value

    @field_validator("taus")
    @classmethod
    def _check_taus(cls, value: list[float]) -> list[float]:
        if any(not math.isfinite(tau) or tau < 0 for tau in value):
            raise ValueError("tau precisa ser finito e >= 0")
        return value

    @field_validator("bandwidths")
    @classmethod
    def _check_bandwidths(cls, value: list[float]) -> list[float]:
        if any(not math.isfinite(h) or h <= 0 for h in value):
            raise ValueError("bandwidths precisam ser > 0")
        return value

    @field_validator("estimators")
    @classmethod
    def _check_estimators(cls, value: list[str]) -> list[str]:
        try:
            return parse_estimators(value)
        except ConfigError as exc:
            raise ValueError(str(exc)) from exc

    @model_validator(mode="after")
    def _check_grid(self) -> "StudyConfig":
        for name in ("iv_strengths", "confounding_levels", "taus", "bandwidths"):
            if not getattr(self, name):
                raise ValueError(f"grade vazia: '{name}' sem valores")
        McmcConfig(chains=self.chains, iterations=self.iterations, burn_in=self.burn_in, thin=self.thin)
        return self

    @property
    def mcmc(self) -> McmcConfig:
        return McmcConfig(chains=self.chains, iterations=self.iterations, burn_in=self.burn_in, thin=self.thin)

    def ate_priors(self) -> dict[str, AtePrior]:
        shared = {key: value for key, value in (("m1a", self.m1a), ("s1a", self.s1a)) if value is not None}
        wip = {**shared, **({"phi_variance": self.wip_phi_variance} if self.wip_phi_variance else {})}
        sip = {**shared, **({"phi_variance": self.sip_phi_variance} if self.sip_phi_variance else {})}
        return {"wip": AtePrior.wip(**wip), "sip": AtePrior.sip(**sip)}


class Cell(NamedTuple):
    iv: str
    confounding: int
    tau: float
    bandwidth: float

    @property
    def label(self) -> str:
        return f"{self.iv}-L{self.confounding}-tau{self.tau:g}-h{self.bandwidth:g}"

    @property
    def scenario_key(self) -> tuple[str, int, float]:
        return (self.iv, self.confounding, self.tau)


def cells(config: StudyConfig, patterns: Iterable[str] | None = None) -> list[Cell]:
    """Grid cells in table order, optionally filtered by label globs."""
    grid = [
        Cell(iv, level, float(tau), float(h))
        for iv in config.iv_strengths
        for level in config.confounding_levels
        for tau in config.taus
        for h in config.bandwidths
    ]
    patterns = [p for p in (patterns or []) if p]
    if not patterns:
        return grid
    selected = [cell for cell in grid if any(fnmatch.fnmatchcase(cell.label, p) for p in patterns)]
    if not selected:
        raise ConfigError(f"Nenhuma célula corresponde a --cells {','.join(patterns)}.")
    return selected


@dataclass(frozen=True)
class ReplicateRow:
    iv: str
    confounding: int
    tau: float
    bandwidth: float
    replicate: int
    estimator: str
    point: float | None = None
    lower: float | None = None
    upper: float | None = None
    ess: float | None = None
    rhat: float | None = None
    unstable: bool = False
    status: str = "ok"  # ok | failed
    error: str | None = None
    seed: int = 0
    stream_id: int = 0

    @property
    def cell(self) -> Cell:
        return Cell(self.iv, self.confounding, self.tau, self.bandwidth)

    def to_dict(self) -> dict:
        return asdict(self)


class Unit(NamedTuple):
    iv: str
    confounding: int
    tau: float
    replicate: int


@dataclass
class StudyResults:
    rows: list[ReplicateRow]
    replicates: int
    seed: int
    failure_threshold: float = 0.2
    metadata: dict = field(default_factory=dict)

    def by_cell(self) -> dict[tuple[Cell, str], list[ReplicateRow]]:
        grouped: dict[tuple[Cell, str], list[ReplicateRow]] = {}
        for row in sorted(self.rows, key=lambda r: r.replicate):
            grouped.setdefault((row.cell, row.estimator), []).append(row)
        return grouped

    def invalid_cells(self) -> list[Cell]:
        failed: dict[Cell, set[int]] = {}
        seen: set[Cell] = set()
        for row in self.rows:
            seen.add(row.cell)
            if row.status != "ok":
                failed.setdefault(row.cell, set()).add(row.replicate)
        return [
            cell
            for cell in sorted(seen)
            if len(failed.get(cell, ())) / self.replicates > self.failure_threshold
        ]


def _failed_rows(unit: Unit, bandwidths, estimators, seed: int, stream_id: int, exc: Exception) -> list[ReplicateRow]:
    message = f"{type(exc).__name__}: {exc}"
    return [
        ReplicateRow(unit.iv, unit.confounding, unit.tau, h, unit.replicate, name, status="failed", error=message, seed=seed, stream_id=stream_id)
        for h in bandwidths
        for name in estimators
    ]


def run_unit(
    base: pd.DataFrame,
    treatment_fit,
    unit: Unit,
    bandwidths: list[float],
    config: StudyConfig,
    dataset_dir: str | None = None,
) -> list[ReplicateRow]:
    """Simulate one dataset and run every estimator at every requested bandwidth."""
    scenario = ScenarioConfig(
        tau=unit.tau,
        confounding_level=unit.confounding,
        iv_strength=unit.iv,
        bandwidth=bandwidths[0],
        replicates=config.replicates,
        seed=config.seed,
    )
    estimators = config.estimators
    stream_id = RngStream.for_replicate(config.seed, unit.replicate, SIMULATION_CHAIN).stream_id
    try:
        dataset = simulate_dataset(base, scenario, unit.replicate, treatment_fit=treatment_fit)
    except (LabError, np.linalg.LinAlgError) as exc:
        logger.warning("%s r%d: simulação falhou: %s", scenario.label, unit.replicate, exc)
        return _failed_rows(unit, bandwidths, estimators, config.seed, stream_id, exc)

    stream_id = dataset.provenance["stream_id"]
    if dataset_dir:
        path = Path(dataset_dir) / f"{scenario.label}-r{unit.replicate:03d}.csv"
        dataset.records.to_csv(path, index=False)

    rows: list[ReplicateRow] = []
    mcmc = config.mcmc
    priors = config.ate_priors()
    for h in bandwidths:
        try:
            win = window(dataset.records, h)
            run = run_estimators(win, estimators, mcmc, seed=config.seed, replicate=unit.replicate, ate_priors=priors)
        except (LabError, np.linalg.LinAlgError) as exc:
            logger.warning("%s h=%g r%d: estimação falhou: %s", scenario.label, h, unit.replicate, exc)
            rows.extend(_failed_rows(unit, [h], estimators, config.seed, stream_id, exc))
            continue
        for name in estimators:
            summary = run.summaries[name]
            rows.append(
                ReplicateRow(
                    iv=unit.iv,
                    confounding=unit.confounding,
                    tau=unit.tau,
                    bandwidth=h,
                    replicate=unit.replicate,
                    estimator=name,
                    point=summary.point,
                    lower=summary.lower,
                    upper=summary.upper,
                    ess=summary.ess,
                    rhat=summary.rhat,
                    unstable=summary.unstable,
                    seed=config.seed,
                    stream_id=stream_id,
                )
            )
    return rows


def plan_units(selected: list[Cell], replicates: int) -> dict[Unit, list[float]]:
    """One unit per (scenario, replicate); bandwidths of the selected cells ride along."""
    bandwidths: dict[tuple[str, int, float], list[float]] = {}
    for cell in selected:
        bandwidths.setdefault(cell.scenario_key, []).append(cell.bandwidth)
    return {
        Unit(*key, replicate): hs
        for key, hs in bandwidths.items()
        for replicate in range(1, replicates + 1)
    }


def run_study(
    config: StudyConfig,
    *,
    jobs: int = 1,
    cell_patterns: Iterable[str] | None = None,
    done: set[Unit] | None = None,
    on_rows: Callable[[list[ReplicateRow]], None] | None = None,
    dataset_dir: str | None = None,
) -> StudyResults:
    """Fan the (scenario, replicate) units out over a joblib pool.

    Every scenario with the same replicate index draws from the same substream
    (common random numbers across cells). ``on_rows`` is called as each unit
    finishes; units in ``done`` are skipped (the caller holds their rows).
    """
    selected = cells(config, cell_patterns)
    units = plan_units(selected, config.replicates)
    done = done or set()
    pending = [unit for unit in units if unit not in done]
    logger.info("Estudo: %d célula(s), %d unidade(s), %d pendente(s)", len(selected), len(units), len(pending))

    base, treatment_fit = prepare_base_cohort(CohortParams(n=config.cohort_n, seed=config.seed))
    if dataset_dir:
        Path(dataset_dir).mkdir(parents=True, exist_ok=True)

    rows: list[ReplicateRow] = []
    tasks = (delayed(run_unit)(base, treatment_fit, unit, units[unit], config, dataset_dir) for unit in pending)
    for unit_rows in Parallel(n_jobs=jobs, return_as="generator")(tasks):
        if on_rows is not None:
            on_rows(unit_rows)
        rows.extend(unit_rows)

    rows.sort(key=lambda r: (r.iv, r.confounding, r.tau, r.bandwidth, r.replicate, ESTIMATORS.index(r.estimator)))
    return StudyResults(
        rows=rows,
        replicates=config.replicates,
        seed=config.seed,
        failure_threshold=config.failure_threshold,
        metadata={"cells": [cell.label for cell in selected], "units": len(units)},
    )


def _finite(values: list[float]) -> np.ndarray:
    array = np.asarray(values, dtype=float)
    return array[np.isfinite(array)]


def _finite_mean(values: list[float]) -> float:
    finite = _finite(values)
    return float(finite.mean()) if finite.size else float("nan")


def aggregate(results: StudyResults) -> pd.DataFrame:
    """Mean point and mean interval endpoints per cell and estimator.

    Invalid cells (too many failed replicates) are left out; sd of points and
    the unstable share are extra columns.
    """
    invalid = set(results.invalid_cells())
    for cell in sorted(invalid):
        logger.warning("Célula %s inválida: mais de %.0f%% de replicatas falharam", cell.label, 100 * results.failure_threshold)

    records = []
    for (cell, estimator), rows in results.by_cell().items():
        if cell in invalid:
            continue
        ok = [row for row in rows if row.status == "ok"]
        points = [np.nan if row.point is None else row.point for row in ok]
        finite_points = _finite(points)
        records.append(
            {
                "iv": cell.iv,
                "confounding": cell.confounding,
                "tau": cell.tau,
                "bandwidth": cell.bandwidth,
                "estimator": estimator,
                "point": _finite_mean(points),
                "lower": _finite_mean([np.nan if row.lower is None else row.lower for row in ok]),
                "upper": _finite_mean([np.nan if row.upper is None else row.upper for row in ok]),
                "sd_points": float(np.std(finite_points, ddof=1)) if finite_points.size > 1 else 0.0,
                "frac_unstable": float(np.mean([row.unstable for row in ok])) if ok else float("nan"),
                "n_ok": len(ok),
            }
        )
    table = pd.DataFrame.from_records(records, columns=TABLE_COLUMNS)
    if table.empty:
        return table
    table["_order"] = table["estimator"].map(ESTIMATORS.index)
    iv_order = {"strong": 0, "weak": 1}
    table["_iv"] = table["iv"].map(iv_order)
    table = table.sort_values(["_iv", "confounding", "tau", "bandwidth", "_order"], ascending=[True, True, False, True, True])
    return table.drop(columns=["_order", "_iv"]).reset_index(drop=True)


def cell_summary(results: StudyResults) -> pd.DataFrame:
    """One line per cell: replicates seen, failed replicates, unstable rows and validity."""
    invalid = set(results.invalid_cells())
    grouped: dict[Cell, list[ReplicateRow]] = {}
    for row in results.rows:
        grouped.setdefault(row.cell, []).append(row)
    records = [
        {
            "cell": cell.label,
            "iv": cell.iv,
            "confounding": cell.confounding,
            "tau": cell.tau,
            "bandwidth": cell.bandwidth,
            "n_replicates": len({row.replicate for row in rows}),
            "n_failed": len({row.replicate for row in rows if row.status != "ok"}),
            "n_unstable": sum(row.unstable for row in rows if row.status == "ok"),
            "invalid": cell in invalid,
        }
        for cell, rows in sorted(grouped.items())
    ]
    return pd.DataFrame.from_records(records, columns=CELL_COLUMNS)


def cell_rows(results: StudyResults) -> dict[Cell, pd.DataFrame]:
    """Replicate rows of each cell, by replicate and estimator order."""
    grouped: dict[Cell, list[ReplicateRow]] = {}
    for row in results.rows:
        grouped.setdefault(row.cell, []).append(row)
    frames = {}
    for cell, rows in sorted(grouped.items()):
        rows = sorted(rows, key=lambda r: (r.replicate, ESTIMATORS.index(r.estimator)))
        frames[cell] = pd.DataFrame.from_records([row.to_dict() for row in rows])
    return frames
