from __future__ import annotations

from pathlib import Path

import click
import numpy as np
from flask import Flask, current_app

from .artifacts import RunManifest, read_table, write_csv, write_json
from .cohort import COHORT_COLUMNS, INT_COLUMNS, CohortParams, generate_cohort, validate_cohort
from .config import apply_overrides, build_model, env_flag, env_int, load_config_file, split_list
from .diagnostics import (
    CONTINUITY_COVARIATES,
    DEFAULT_BIN_WIDTH,
    WEAK_A1_DIFFERENCE,
    binned_summary,
    check_a1,
    covariate_continuity,
)
from .errors import ConfigError, LabError
from .extensions import db
from .inference import (
    ESTIMATORS,
    AtePrior,
    BandwidthWindow,
    McmcConfig,
    parse_estimators,
    prior_predictive_band,
    run_estimators,
    window,
)
from .ledger import finish_run, finished_units, load_rows, open_run, record_rows
from .numerics import RngStream
from .simulate import DATASET_COLUMNS, ScenarioConfig, fit_treatment_model, simulate_dataset
from .study import PRESETS, StudyConfig, StudyResults, aggregate, cell_rows, cell_summary, cells, plan_units, run_study


DEFAULT_SEED = 20150


class LabCommandError(click.ClickException):
    def __init__(self, message: str, exit_code: int = 1):
        super().__init__(message)
        self.exit_code = exit_code


def _click_error(exc: Exception) -> LabCommandError:
    if isinstance(exc, LabError):
        return LabCommandError(str(exc), exc.exit_code)
    # numpy linear-algebra failures are numeric failures too
    return LabCommandError(f"Falha numérica: {exc}", 4)


def _lab_options() -> dict:
    return click.get_current_context().find_root().meta.setdefault("lab", {})


def _seed(explicit: int | None = None) -> int:
    if explicit is not None:
        return explicit
    seed = _lab_options().get("seed")
    return DEFAULT_SEED if seed is None else seed


def _out_dir(*parts: str) -> Path:
    base = _lab_options().get("out") or current_app.config.get("LAB_OUT_DIR") or "out"
    return Path(base, *parts)


def _jobs() -> int:
    jobs = _lab_options().get("jobs")
    if jobs is None:
        jobs = env_int("LAB_JOBS", None)
    return -1 if jobs is None else jobs  # -1: one worker per logical core


def _entries(config_path: str | None, overrides: tuple[str, ...]):
    return apply_overrides(load_config_file(config_path), overrides)


def _load_cohort(path: str):
    cohort = read_table(path, COHORT_COLUMNS, what="Coorte")
    for col in INT_COLUMNS:
        cohort[col] = cohort[col].astype(np.int64)
    return validate_cohort(cohort[COHORT_COLUMNS])


def _load_dataset(path: str):
    return read_table(path, DATASET_COLUMNS, what="Dataset")


def _mcmc_options(f):
    defaults = McmcConfig()
    f = click.option("--thin", type=click.IntRange(min=1), default=defaults.thin, show_default=True)(f)
    f = click.option("--burn-in", "burn_in", type=click.IntRange(min=0), default=defaults.burn_in, show_default=True)(f)
    f = click.option("--iterations", type=click.IntRange(min=1), default=defaults.iterations, show_default=True)(f)
    f = click.option("--chains", type=click.IntRange(min=1), default=defaults.chains, show_default=True)(f)
    return f


def register_commands(app: Flask) -> None:
    @app.cli.group("lab")
    @click.option("--seed", type=click.IntRange(min=0), default=None, help="Semente única de toda a aleatoriedade.")
    @click.option("--jobs", type=int, default=None, help="Workers do estudo (padrão: LAB_JOBS ou núcleos lógicos).")
    @click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Diretório de saída.")
    @click.pass_context
    def lab(ctx: click.Context, seed: int | None, jobs: int | None, out_dir: str | None) -> None:
        """Laboratório de desenho de regressão descontínua (RD)."""
        ctx.find_root().meta["lab"] = {"seed": seed, "jobs": jobs, "out": out_dir}

    @lab.command("cohort")
    @click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
    @click.option("--set", "overrides", multiple=True, help="Sobrescreve chave=valor da configuração.")
    @click.option("--output", type=click.Path(dir_okay=False), default=None)
    def cmd_cohort(config_path: str | None, overrides: tuple[str, ...], output: str | None) -> None:
        """Gera a coorte base sintética (CSV)."""
        try:
            entries = _entries(config_path, overrides)
            params = build_model(CohortParams, entries, seed=_lab_options().get("seed"))
            manifest = RunManifest("cohort", params.model_dump(mode="json"), {"seed": params.seed})
            cohort = generate_cohort(params, RngStream(params.seed, 0))
        except (LabError, np.linalg.LinAlgError) as e:
            raise _click_error(e) from e

        path = Path(output) if output else _out_dir("cohort.csv")
        write_csv(cohort, path)
        manifest.inputs = [config_path] if config_path else []
        manifest.add_output(path)
        manifest.write(path.parent)

        corr = float(np.corrcoef(cohort["ldl"], cohort["hdl"])[0, 1])
        click.echo(f"Coorte: {len(cohort)} registro(s) -> {path}")
        click.echo(f"Corr(ldl, hdl) = {corr:.3f}; z=1 em {100 * cohort['z'].mean():.1f}%; tratados {100 * cohort['t'].mean():.1f}%")

    @lab.command("simulate")
    @click.option("--cohort", "cohort_path", type=click.Path(dir_okay=False), required=True)
    @click.option("--scenario", "scenario_path", type=click.Path(dir_okay=False), default=None)
    @click.option("--set", "overrides", multiple=True)
    @click.option("--out-dir", type=click.Path(file_okay=False), default=None)
    def cmd_simulate(cohort_path: str, scenario_path: str | None, overrides: tuple[str, ...], out_dir: str | None) -> None:
        """Simula datasets (um CSV por replicata) a partir de uma coorte."""
        try:
            scenario = build_model(ScenarioConfig, _entries(scenario_path, overrides), seed=_lab_options().get("seed"))
            cohort = _load_cohort(cohort_path)
            fit = fit_treatment_model(cohort)
            datasets = [simulate_dataset(cohort, scenario, r, treatment_fit=fit) for r in range(1, scenario.replicates + 1)]
        except (LabError, np.linalg.LinAlgError) as e:
            raise _click_error(e) from e

        target = Path(out_dir) if out_dir else _out_dir("datasets")
        manifest = RunManifest(
            "simulate",
            scenario.model_dump(mode="json"),
            {"seed": scenario.seed, "stream_ids": [d.provenance["stream_id"] for d in datasets]},
            inputs=[cohort_path] + ([scenario_path] if scenario_path else []),
        )
        for dataset in datasets:
            path = write_csv(dataset.records, target / f"{scenario.label}-r{dataset.replicate:03d}.csv")
            manifest.add_output(path)
            click.echo(
                f"r{dataset.replicate:03d}: {path.name} tratados={dataset.provenance['n_treated']} "
                f"corr={dataset.provenance['ldl_hdl_correlation']:.3f}"
                + (" (substream de reserva)" if dataset.provenance["retried"] else "")
            )
            if dataset.provenance["negative_outcomes"]:
                current_app.logger.warning("%s: %d valor(es) negativos de y_sim3", path.name, dataset.provenance["negative_outcomes"])
        manifest.add_output(write_json(target / "provenance.json", [d.provenance for d in datasets]))
        manifest.write(target)
        click.echo(f"{len(datasets)} dataset(s) em {target}")

    @lab.command("estimate")
    @click.option("--dataset", "dataset_path", type=click.Path(dir_okay=False), default=None)
    @click.option("--estimators", default=",".join(ESTIMATORS), show_default=True)
    @click.option("--bandwidth", type=click.FloatRange(min=0, min_open=True), default=0.05, show_default=True)
    @click.option("--replicate", type=click.IntRange(min=1), default=1, show_default=True, help="Replicata que define as substreams.")
    @_mcmc_options
    @click.option("--output", type=click.Path(dir_okay=False), default=None)
    @click.option("--dump-draws", type=click.Path(file_okay=False), default=None, help="Grava os draws em CSV.")
    @click.option("--prior-check", is_flag=True, help="Mostra a banda preditiva a priori do LDL no limiar.")
    @click.option("--prior-only", is_flag=True, help="Amostra apenas a priori (janela vazia).")
    def cmd_estimate(
        dataset_path: str | None,
        estimators: str,
        bandwidth: float,
        replicate: int,
        chains: int,
        iterations: int,
        burn_in: int,
        thin: int,
        output: str | None,
        dump_draws: str | None,
        prior_check: bool,
        prior_only: bool,
    ) -> None:
        """Estima ATE/LATE em um dataset simulado (JSON)."""
        seed = _seed()
        try:
            names = parse_estimators(estimators)
            mcmc = McmcConfig(chains=chains, iterations=iterations, burn_in=burn_in, thin=thin)
            if prior_only:
                if "freq" in names:
                    raise ConfigError("--prior-only não se aplica ao estimador freq.")
                win = BandwidthWindow.empty(bandwidth)
            else:
                if not dataset_path:
                    raise ConfigError("Informe --dataset (ou use --prior-only).")
                win = window(_load_dataset(dataset_path), bandwidth)
            run = run_estimators(win, names, mcmc, seed=seed, replicate=replicate)
        except ValueError as e:
            # pydantic errors on McmcConfig are ValueErrors as well
            raise _click_error(e if isinstance(e, LabError) else ConfigError(str(e))) from e
        except (LabError, np.linalg.LinAlgError) as e:
            raise _click_error(e) from e

        scenario = Path(dataset_path).stem if dataset_path else "prior"
        records = []
        for name in names:
            s = run.summaries[name]
            records.append(
                {
                    "scenario": scenario,
                    "bandwidth": bandwidth,
                    "estimator": name,
                    "point": s.point,
                    "lower": s.lower,
                    "upper": s.upper,
                    "ess": s.ess,
                    "mcse": s.mcse,
                    "rhat": s.rhat,
                    "unstable": s.unstable,
                    "prob_negative": s.prob_negative,
                    "seed": seed,
                    "n_b": win.n_b,
                    "n_a": win.n_a,
                    "warnings": list(s.warnings),
                }
            )
            if s.unstable:
                current_app.logger.warning("%s instável: IC (%.2f, %.2f)", name, s.lower, s.upper)
            click.echo(f"{name:<10} {s.point:8.3f}  ({s.lower:8.3f}, {s.upper:8.3f})" + ("  instável" if s.unstable else ""))

        path = Path(output) if output else _out_dir("results.json")
        write_json(path, records)
        manifest = RunManifest(
            "estimate",
            {"estimators": names, "bandwidth": bandwidth, "replicate": replicate, **mcmc.model_dump()},
            {"seed": seed},
            inputs=[dataset_path] if dataset_path else [],
            outputs=[str(path)],
        )

        if dump_draws:
            for name, draws in run.draws.items():
                manifest.add_output(write_csv(draws.to_frame(), Path(dump_draws) / f"draws-{name}.csv"))

        if prior_check:
            for prior in (AtePrior.wip(), AtePrior.sip()):
                for side in ("below", "above"):
                    band = prior_predictive_band(prior, 0.0, side)
                    click.echo(f"priori {prior.kind} {side}: média {band.mean:.2f}, 95% [{band.lower:.2f}; {band.upper:.2f}] mmol/l")
        manifest.write(path.parent)
        click.echo(f"{len(records)} registro(s) -> {path}")

    @lab.command("diagnose")
    @click.option("--dataset", "dataset_path", type=click.Path(dir_okay=False), required=True)
    @click.option("--bin-width", type=click.FloatRange(min=0, min_open=True), default=DEFAULT_BIN_WIDTH, show_default=True)
    @click.option("--bandwidth", type=click.FloatRange(min=0, min_open=True), default=0.05, show_default=True)
    @click.option("--covariates", default=",".join(CONTINUITY_COVARIATES), show_default=True)
    @click.option("--weak-below", type=click.FloatRange(0, 1), default=WEAK_A1_DIFFERENCE, show_default=True)
    @click.option("--out-dir", type=click.Path(file_okay=False), default=None)
    def cmd_diagnose(dataset_path: str, bin_width: float, bandwidth: float, covariates: str, weak_below: float, out_dir: str | None) -> None:
        """Diagnósticos: médias por bin, associação Z-T (A1) e continuidade de covariáveis (A4)."""
        try:
            data = _load_dataset(dataset_path)
            binned = binned_summary(data, bin_width)
            a1 = check_a1(data, bandwidth, weak_below=weak_below)
            continuity = [covariate_continuity(data, cov, bandwidth) for cov in split_list(covariates)]
        except (LabError, np.linalg.LinAlgError) as e:
            raise _click_error(e) from e

        target = Path(out_dir) if out_dir else _out_dir("diagnostics")
        manifest = RunManifest(
            "diagnose",
            {"bin_width": bin_width, "bandwidth": bandwidth, "covariates": covariates, "weak_below": weak_below},
            {},
            inputs=[dataset_path],
        )
        manifest.add_output(write_csv(binned.to_frame(), target / "binned.csv"))
        manifest.add_output(write_csv(data[["risk", "risk_centered", "y_sim3", "t_hat"]], target / "scatter.csv"))
        manifest.add_output(
            write_json(target / "report.json", {"a1": a1.to_dict(), "continuity": [c.to_dict() for c in continuity]})
        )
        manifest.write(target)

        click.echo(f"Bins: {len(binned.counts)} (largura {bin_width:g}), registros {int(binned.counts.sum())}")
        click.echo(
            f"A1: p_a - p_b = {a1.difference:.3f} ({a1.lower:.3f}, {a1.upper:.3f}) -> {a1.label}, desenho {a1.design}"
        )
        for c in continuity:
            flag = "  SUSPEITA (A4)" if c.flagged else ""
            click.echo(f"A4 {c.covariate}: salto {c.jump:.3f} (EP {c.se:.3f}){flag}")

    @lab.command("study")
    @click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None)
    @click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
    @click.option("--set", "overrides", multiple=True)
    @click.option("--replicates", type=click.IntRange(min=1), default=None)
    @click.option("--cells", "cell_patterns", default=None, help="Filtro de células (globs separados por vírgula).")
    @click.option("--resume", is_flag=True, help="Reaproveita replicatas já gravadas no ledger.")
    @click.option("--save-datasets/--no-save-datasets", default=None)
    @click.option("--out-dir", type=click.Path(file_okay=False), default=None)
    def cmd_study(
        preset: str | None,
        config_path: str | None,
        overrides: tuple[str, ...],
        replicates: int | None,
        cell_patterns: str | None,
        resume: bool,
        save_datasets: bool | None,
        out_dir: str | None,
    ) -> None:
        """Roda a grade de cenários x replicatas e agrega a tabela de resultados."""
        target = Path(out_dir) if out_dir else _out_dir("study")
        if save_datasets is None:
            save_datasets = env_flag("LAB_SAVE_DATASETS")
        patterns = split_list(cell_patterns) if cell_patterns else []
        try:
            config = build_model(
                StudyConfig,
                _entries(config_path, overrides),
                defaults=PRESETS.get(preset) if preset else None,
                seed=_lab_options().get("seed"),
                replicates=replicates,
            )
            jobs = _jobs()
            selected = cells(config, patterns)

            db.create_all()
            run = open_run(config, resume=resume)
            done = set()
            if resume:
                planned = plan_units(selected, config.replicates)
                done = finished_units(load_rows(run), planned, config.estimators)
                current_app.logger.info("Retomando: %d de %d unidade(s) já concluídas", len(done), len(planned))

            run_study(
                config,
                jobs=jobs,
                cell_patterns=patterns,
                done=done,
                on_rows=lambda rows: record_rows(run, rows),
                dataset_dir=str(target / "datasets") if save_datasets else None,
            )
            selected_set = set(selected)
            results = StudyResults(
                rows=[row for row in load_rows(run) if row.cell in selected_set],
                replicates=config.replicates,
                seed=config.seed,
                failure_threshold=config.failure_threshold,
            )
            table = aggregate(results)
            invalid = results.invalid_cells()
            finish_run(run)
        except (LabError, np.linalg.LinAlgError) as e:
            raise _click_error(e) from e

        table_path = write_csv(table, target / "table.csv")
        failures = [row.to_dict() for row in results.rows if row.status != "ok"]
        manifest = RunManifest(
            "study",
            {**config.model_dump(mode="json"), "preset": preset, "cells": patterns},
            {"seed": config.seed, "run_key": run.run_key},
            inputs=[config_path] if config_path else [],
            outputs=[str(table_path)],
        )
        manifest.add_output(write_csv(cell_summary(results), target / "cells.csv"))
        for cell, frame in cell_rows(results).items():
            manifest.add_output(write_csv(frame, target / "cells" / f"{cell.label}.csv"))
        manifest.add_output(write_json(target / "invalid_cells.json", [cell.label for cell in invalid]))
        if failures:
            manifest.add_output(write_json(target / "failures.json", failures))
        manifest.write(target)

        for cell in invalid:
            current_app.logger.warning("Célula inválida: %s", cell.label)
        unstable = int((table["frac_unstable"] > 0).sum()) if not table.empty else 0
        click.echo(f"Células: {len(selected)} ({len(invalid)} inválida(s)); linhas na tabela: {len(table)}")
        click.echo(f"Linhas com alguma replicata instável: {unstable}; falhas registradas: {len(failures)}")
        click.echo(f"Tabela -> {table_path}")
        click.echo(f"Ledger: execução {run.run_key[:12]}")
