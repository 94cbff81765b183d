import json
import os
import subprocess
import sys
import tempfile
from pathlib import Path


ROOT = Path(__file__).resolve().parent
SMOKE_JOBS = os.environ.get("SMOKE_JOBS", "2").strip() or "2"


def _run_cmd(args: list[str], env: dict, expect: int = 0) -> str:
    cmd = [sys.executable, "-m", "flask", "--app", str(ROOT / "run.py"), "lab", *args]
    p = subprocess.run(cmd, capture_output=True, text=True, timeout=600, env=env, cwd=ROOT)
    out = (p.stdout or "") + ("\n" + p.stderr if p.stderr else "")
    if p.returncode != expect:
        raise RuntimeError(f"Command exited {p.returncode} (expected {expect}): {' '.join(args)}\n{out}")
    return out


def _env(workdir: Path) -> dict:
    env = dict(os.environ)
    env["DATABASE_URL"] = f"sqlite:///{workdir / 'ledger.sqlite3'}"
    env["LOG_LEVEL"] = "WARNING"
    return env


def main() -> int:
    with tempfile.TemporaryDirectory(prefix="rdlab-smoke-") as tmp:
        work = Path(tmp)
        env = _env(work)
        out = work / "out"

        print("[1] Cohort")
        _run_cmd(["--seed", "7", "--out", str(out), "cohort"], env)
        cohort = out / "cohort.csv"
        lines = cohort.read_text(encoding="utf-8").splitlines()
        if lines[0] != "id,age,diabetes,hdl,ldl,risk,risk_centered,z,t":
            raise RuntimeError(f"Cohort header mismatch: {lines[0]}")
        if len(lines) != 5721:
            raise RuntimeError(f"Cohort should have 5720 records, got {len(lines) - 1}")
        if not (out / "manifest.json").is_file():
            raise RuntimeError("Cohort manifest missing")

        print("[1.1] Cohort config errors")
        bad = work / "bad.cfg"
        bad.write_text("n = 10\nbogus_key = 3\n", encoding="utf-8")
        text = _run_cmd(["cohort", "--config", str(bad), "--output", str(work / "x.csv")], env, expect=2)
        if "bogus_key" not in text:
            raise RuntimeError("Config error did not name the offending key")

        print("[2] Simulate")
        scenario = work / "scenario.cfg"
        scenario.write_text(
            "# strong IV, low confounding\ntau = 2\nconfounding_level = 1\niv_strength = strong\nbandwidth = 0.05\nreplicates = 2\n",
            encoding="utf-8",
        )
        _run_cmd(["--seed", "7", "simulate", "--cohort", str(cohort), "--scenario", str(scenario), "--out-dir", str(work / "ds")], env)
        datasets = sorted((work / "ds").glob("*.csv"))
        if len(datasets) != 2:
            raise RuntimeError(f"Expected 2 dataset files, got {len(datasets)}")
        first = datasets[0].read_bytes()

        print("[2.1] Simulate rerun is bit-identical")
        _run_cmd(["--seed", "7", "simulate", "--cohort", str(cohort), "--scenario", str(scenario), "--out-dir", str(work / "ds2")], env)
        if (work / "ds2" / datasets[0].name).read_bytes() != first:
            raise RuntimeError("Simulated dataset differs between identical runs")

        print("[2.2] Confounding level 5 is rejected")
        _run_cmd(["simulate", "--cohort", str(cohort), "--set", "confounding_level=5", "--out-dir", str(work / "ds3")], env, expect=2)

        print("[3] Estimate")
        results = work / "results.json"
        _run_cmd(
            [
                "--seed", "7", "estimate", "--dataset", str(datasets[0]),
                "--estimators", "freq,sip,late-unct", "--bandwidth", "0.05",
                "--chains", "2", "--iterations", "2000", "--burn-in", "500",
                "--output", str(results),
            ],
            env,
        )
        records = json.loads(results.read_text(encoding="utf-8"))
        if [r["estimator"] for r in records] != ["freq", "sip", "late-unct"]:
            raise RuntimeError(f"Unexpected estimator records: {records}")
        for key in ("scenario", "bandwidth", "point", "lower", "upper", "ess", "unstable", "seed"):
            if key not in records[0]:
                raise RuntimeError(f"Results JSON missing key {key}")

        print("[3.1] Estimate argument errors")
        _run_cmd(["estimate", "--dataset", str(datasets[0]), "--bandwidth", "0"], env, expect=2)
        text = _run_cmd(["estimate", "--dataset", str(datasets[0]), "--estimators", "freq,lat-unct"], env, expect=2)
        if "late-unct" not in text:
            raise RuntimeError("Estimator typo error did not list the valid estimators")
        _run_cmd(["estimate", "--dataset", str(work / "missing.csv")], env, expect=3)

        print("[4] Diagnose")
        _run_cmd(["diagnose", "--dataset", str(datasets[0]), "--out-dir", str(work / "diag")], env)
        report = json.loads((work / "diag" / "report.json").read_text(encoding="utf-8"))
        if report["a1"]["label"] != "strong":
            raise RuntimeError(f"Strong-IV dataset labelled {report['a1']['label']}")
        binned = (work / "diag" / "binned.csv").read_text(encoding="utf-8").splitlines()
        if binned[0] != "bin_mid,mean_y,prop_treated,count":
            raise RuntimeError(f"Binned header mismatch: {binned[0]}")

        print("[5] Smoke study (twice, same seed)")
        tables = []
        for run in ("a", "b"):
            run_env = _env(work / run)
            (work / run).mkdir()
            _run_cmd(["--seed", "11", "--jobs", SMOKE_JOBS, "study", "--preset", "smoke", "--out-dir", str(work / run / "study")], run_env)
            tables.append((work / run / "study" / "table.csv").read_bytes())
        if tables[0] != tables[1]:
            raise RuntimeError("Smoke study tables differ between identical runs")
        rows = tables[0].decode("utf-8").splitlines()
        if rows[0] != "iv,confounding,tau,bandwidth,estimator,point,lower,upper,sd_points,frac_unstable,n_ok":
            raise RuntimeError(f"Table header mismatch: {rows[0]}")
        if len(rows) != 1 + 2 * 6:
            raise RuntimeError(f"Expected 12 table rows, got {len(rows) - 1}")

        print("[5.1] Resume reproduces the table")
        _run_cmd(
            ["--seed", "11", "--jobs", SMOKE_JOBS, "study", "--preset", "smoke", "--resume", "--out-dir", str(work / "a" / "study")],
            _env(work / "a"),
        )
        if (work / "a" / "study" / "table.csv").read_bytes() != tables[0]:
            raise RuntimeError("Resumed study table differs from the uninterrupted run")

    print("OK: smoke test passed")
    return 0


if __name__ == "__main__":
    try:
        raise SystemExit(main())
    except Exception as e:
        print(f"FAIL: {e}")
        raise
