"""Study ledger: per-replicate rows persisted as units finish, so ``--resume``
only recomputes what is missing."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from datetime import datetime

from .extensions import db
from .models import ReplicateResult, StudyRun
from .study import ReplicateRow, StudyConfig, Unit


logger = logging.getLogger(__name__)


def config_snapshot(config: StudyConfig) -> dict:
    return config.model_dump(mode="json")


def run_key(config: StudyConfig) -> str:
    payload = json.dumps(config_snapshot(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def open_run(config: StudyConfig, *, resume: bool, command: str = "study") -> StudyRun:
    """Ledger entry for this configuration; without ``resume`` old rows are discarded."""
    key = run_key(config)
    run = StudyRun.query.filter_by(run_key=key).first()
    if run is not None and not resume:
        logger.info("Execução %s reiniciada; descartando %d resultado(s) anteriores", key[:12], len(run.results))
        ReplicateResult.query.filter_by(run_id=run.id).delete()
        run.status = "running"
        run.finished_at = None
        db.session.commit()
        return run
    if run is None:
        if resume:
            logger.info("Nenhuma execução anterior para retomar (%s); iniciando do zero", key[:12])
        run = StudyRun(
            run_key=key,
            command=command,
            config_json=json.dumps(config_snapshot(config), sort_keys=True),
            base_seed=config.seed,
            replicates=config.replicates,
            status="running",
        )
        db.session.add(run)
        db.session.commit()
    return run


def _nullable(value):
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def record_rows(run: StudyRun, rows: list[ReplicateRow]) -> None:
    # a unit rerun after a narrower --cells pass replaces its earlier rows
    for iv, confounding, tau, bandwidth, replicate in {(r.iv, r.confounding, r.tau, r.bandwidth, r.replicate) for r in rows}:
        ReplicateResult.query.filter_by(
            run_id=run.id, iv=iv, confounding=confounding, tau=tau, bandwidth=bandwidth, replicate=replicate
        ).delete()
    for row in rows:
        db.session.add(
            ReplicateResult(
                run_id=run.id,
                iv=row.iv,
                confounding=row.confounding,
                tau=row.tau,
                bandwidth=row.bandwidth,
                replicate=row.replicate,
                estimator=row.estimator,
                point=_nullable(row.point),
                lower=_nullable(row.lower),
                upper=_nullable(row.upper),
                ess=_nullable(row.ess),
                rhat=_nullable(row.rhat),
                unstable=bool(row.unstable),
                status=row.status,
                error=row.error,
                seed=row.seed,
                stream_id=row.stream_id,
            )
        )
    db.session.commit()


def _as_float(value):
    return float("nan") if value is None else float(value)


def load_rows(run: StudyRun) -> list[ReplicateRow]:
    results = (
        ReplicateResult.query.filter_by(run_id=run.id)
        .order_by(ReplicateResult.replicate, ReplicateResult.id)
        .all()
    )
    return [
        ReplicateRow(
            iv=r.iv,
            confounding=r.confounding,
            tau=r.tau,
            bandwidth=r.bandwidth,
            replicate=r.replicate,
            estimator=r.estimator,
            point=_as_float(r.point) if r.status == "ok" else None,
            lower=_as_float(r.lower) if r.status == "ok" else None,
            upper=_as_float(r.upper) if r.status == "ok" else None,
            ess=r.ess,
            rhat=r.rhat,
            unstable=r.unstable,
            status=r.status,
            error=r.error,
            seed=r.seed,
            stream_id=r.stream_id,
        )
        for r in results
    ]


def finished_units(rows: list[ReplicateRow], planned: dict[Unit, list[float]], estimators: list[str]) -> set[Unit]:
    """Units whose every (bandwidth, estimator) row is already in the ledger."""
    present: dict[Unit, set[tuple[float, str]]] = {}
    for row in rows:
        present.setdefault(Unit(row.iv, row.confounding, row.tau, row.replicate), set()).add((row.bandwidth, row.estimator))
    return {
        unit
        for unit, bandwidths in planned.items()
        if {(h, name) for h in bandwidths for name in estimators} <= present.get(unit, set())
    }


def finish_run(run: StudyRun) -> None:
    run.status = "done"
    run.finished_at = datetime.utcnow()
    db.session.commit()
