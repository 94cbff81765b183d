from __future__ import annotations

import numpy as np
import pytest

from app.config import build_model, parse_key_values
from app.errors import ConfigError
from app.inference import ESTIMATORS
from app.study import (
    PRESETS,
    TABLE_COLUMNS,
    Cell,
    ReplicateRow,
    StudyConfig,
    StudyResults,
    Unit,
    aggregate,
    cell_rows,
    cell_summary,
    cells,
    plan_units,
    run_study,
)


def _row(replicate: int, point: float, *, estimator: str = "freq", status: str = "ok", unstable: bool = False, cell=("strong", 1, 2.0, 0.05)) -> ReplicateRow:
    iv, level, tau, h = cell
    if status != "ok":
        return ReplicateRow(iv, level, tau, h, replicate, estimator, status=status, error="NumericError: x")
    return ReplicateRow(iv, level, tau, h, replicate, estimator, point=point, lower=point - 1, upper=point + 1, unstable=unstable)


def _tiny_config(**overrides) -> StudyConfig:
    settings = {
        "iv_strengths": "strong",
        "confounding_levels": "1",
        "taus": "2",
        "bandwidths": "0.05",
        "replicates": 2,
        "seed": 3,
        "chains": 2,
        "iterations": 1200,
        "burn_in": 200,
    }
    settings.update(overrides)
    return StudyConfig.model_validate(settings)


def test_full_grid_has_72_cells_in_table_order():
    grid = cells(StudyConfig())
    assert len(grid) == 72
    assert grid[0] == Cell("strong", 1, 2.0, 0.05)
    assert grid[-1] == Cell("weak", 4, 0.5, 0.25)


def test_cell_patterns_select_labels():
    selected = cells(StudyConfig(), ["weak-L4-tau2-*"])
    assert [c.label for c in selected] == ["weak-L4-tau2-h0.05", "weak-L4-tau2-h0.15", "weak-L4-tau2-h0.25"]
    with pytest.raises(ConfigError):
        cells(StudyConfig(), ["medium-*"])


def test_plan_units_groups_bandwidths_per_scenario():
    selected = cells(StudyConfig(), ["strong-L1-tau2-*"])
    units = plan_units(selected, 3)
    assert list(units) == [Unit("strong", 1, 2.0, r) for r in (1, 2, 3)]
    assert units[Unit("strong", 1, 2.0, 1)] == [0.05, 0.15, 0.25]


def test_study_config_from_flat_entries():
    entries = parse_key_values("iv_strengths = strong,weak\nconfounding_levels = 1,3\nestimators = freq,sip\n")
    config = build_model(StudyConfig, entries, PRESETS["smoke"])
    assert config.iv_strengths == ["strong", "weak"]
    assert config.confounding_levels == [1, 3]
    assert config.estimators == ["freq", "sip"]
    assert config.replicates == 5


@pytest.mark.parametrize(
    "text",
    ["confounding_levels = 5\n", "bandwidths = 0.05,0\n", "estimators = freq,lat-unct\n", "iterations = 100\nburn_in = 100\n", "colour = red\n"],
)
def test_study_config_rejects_bad_values(text):
    with pytest.raises(ConfigError):
        build_model(StudyConfig, parse_key_values(text))


def test_prior_overrides_reach_ate_priors():
    config = StudyConfig(m1a=4.0, sip_phi_variance=0.25)
    priors = config.ate_priors()
    assert priors["sip"].m1a == 4.0 and priors["wip"].m1a == 4.0
    assert priors["sip"].phi_variance == 0.25
    assert priors["wip"].phi_variance == 2.0


def test_aggregate_averages_points_and_endpoints():
    results = StudyResults(rows=[_row(1, -1.0), _row(2, -3.0)], replicates=2, seed=1)
    table = aggregate(results)
    assert list(table.columns) == TABLE_COLUMNS
    row = table.iloc[0]
    assert row["point"] == -2.0
    assert row["lower"] == -3.0
    assert row["upper"] == -1.0
    assert row["sd_points"] == pytest.approx(np.sqrt(2.0))
    assert row["n_ok"] == 2


def test_aggregate_identical_replicates():
    results = StudyResults(rows=[_row(r, -1.5, unstable=(r == 1)) for r in (1, 2, 3, 4)], replicates=4, seed=1)
    row = aggregate(results).iloc[0]
    assert row["point"] == -1.5
    assert row["sd_points"] == 0.0
    assert row["frac_unstable"] == 0.25


def test_aggregate_ignores_row_order():
    rows = [_row(r, float(r), estimator=e) for r in range(1, 6) for e in ("freq", "sip")]
    forward = aggregate(StudyResults(rows=rows, replicates=5, seed=1))
    backward = aggregate(StudyResults(rows=rows[::-1], replicates=5, seed=1))
    assert forward.equals(backward)
    assert forward["estimator"].tolist() == ["freq", "sip"]


def test_aggregate_drops_cells_with_too_many_failures():
    bad = ("weak", 3, 2.0, 0.05)
    rows = [_row(r, -2.0) for r in range(1, 6)]
    rows += [_row(r, -2.0, cell=bad) for r in (1, 2, 3)]
    rows += [_row(r, 0.0, cell=bad, status="failed") for r in (4, 5)]
    results = StudyResults(rows=rows, replicates=5, seed=1)
    assert results.invalid_cells() == [Cell(*bad)]
    table = aggregate(results)
    assert table["iv"].tolist() == ["strong"]


def test_cell_summary_counts_failures_and_unstable_rows():
    bad = ("weak", 3, 2.0, 0.05)
    rows = [_row(r, -2.0, unstable=r == 1) for r in range(1, 6)]
    rows += [_row(r, -2.0, cell=bad) for r in (1, 2, 3)]
    rows += [_row(r, 0.0, cell=bad, status="failed") for r in (4, 5)]
    summary = cell_summary(StudyResults(rows=rows, replicates=5, seed=1)).set_index("cell")
    assert summary.loc["strong-L1-tau2-h0.05", "n_unstable"] == 1
    assert not summary.loc["strong-L1-tau2-h0.05", "invalid"]
    assert summary.loc["weak-L3-tau2-h0.05", "n_failed"] == 2
    assert summary.loc["weak-L3-tau2-h0.05", "n_replicates"] == 5
    assert summary.loc["weak-L3-tau2-h0.05", "invalid"]


def test_cell_rows_are_ordered_by_replicate_and_estimator():
    rows = [_row(2, -1.0, estimator="sip"), _row(1, -2.0, estimator="sip"), _row(2, -1.5), _row(1, -2.5)]
    frames = cell_rows(StudyResults(rows=rows, replicates=2, seed=1))
    frame = frames[Cell("strong", 1, 2.0, 0.05)]
    assert frame["replicate"].tolist() == [1, 1, 2, 2]
    assert frame["estimator"].tolist() == ["freq", "sip", "freq", "sip"]


def test_aggregate_keeps_cell_at_threshold():
    rows = [_row(r, -2.0) for r in range(1, 5)] + [_row(5, 0.0, status="failed")]
    table = aggregate(StudyResults(rows=rows, replicates=5, seed=1))
    assert table.iloc[0]["n_ok"] == 4


def test_aggregate_table_order():
    rows = [
        _row(1, -1.0, cell=("weak", 1, 2.0, 0.05)),
        _row(1, -1.0, cell=("strong", 2, 0.5, 0.05)),
        _row(1, -1.0, cell=("strong", 2, 2.0, 0.25)),
        _row(1, -1.0, cell=("strong", 2, 2.0, 0.05)),
    ]
    table = aggregate(StudyResults(rows=rows, replicates=1, seed=1))
    assert list(zip(table["iv"], table["tau"], table["bandwidth"])) == [
        ("strong", 2.0, 0.05),
        ("strong", 2.0, 0.25),
        ("strong", 0.5, 0.05),
        ("weak", 2.0, 0.05),
    ]


def test_run_study_bookkeeping(tmp_path):
    config = _tiny_config()
    batches = []
    results = run_study(config, jobs=1, on_rows=batches.append, dataset_dir=str(tmp_path))
    assert len(results.rows) == 2 * len(ESTIMATORS)
    assert len(batches) == 2
    assert all(row.status == "ok" for row in results.rows)
    assert sorted(p.name for p in tmp_path.glob("*.csv")) == ["strong-L1-tau2-r001.csv", "strong-L1-tau2-r002.csv"]

    table = aggregate(results)
    assert len(table) == len(ESTIMATORS)
    assert table["n_ok"].tolist() == [2] * len(ESTIMATORS)


def test_run_study_is_reproducible_and_skips_done_units():
    config = _tiny_config(estimators="freq,sip")
    first = run_study(config)
    second = run_study(config)
    assert [r.to_dict() for r in first.rows] == [r.to_dict() for r in second.rows]

    resumed = run_study(config, done={Unit("strong", 1, 2.0, 1)})
    assert {row.replicate for row in resumed.rows} == {2}
    assert [r.to_dict() for r in resumed.rows] == [r.to_dict() for r in first.rows if r.replicate == 2]


def test_run_study_records_failures_as_rows():
    config = _tiny_config(bandwidths="1e-07", estimators="freq")
    results = run_study(config)
    assert {row.status for row in results.rows} == {"failed"}
    assert all(row.error for row in results.rows)
    assert aggregate(results).empty
