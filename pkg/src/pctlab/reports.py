"""Report files for experiment results.

Every emitter is deterministic: identical inputs yield byte-identical
files (sorted JSON keys, repr() floats in CSV, "\\n" line endings). A run
directory contains one epoch-series CSV and one final flip-report JSON per
repetition, a summary in the requested format, and ``artifacts.json``, a
complete machine-readable record that the ``report`` subcommand can
re-emit from without recomputing anything.
"""

from __future__ import annotations

import json
import os
from typing import List, Optional

from .config import document_from_experiment, experiment_from_document
from .flips import FlipReport
from .harness import (ComparisonTable, EpochMetrics, ExperimentResult,
                      FocalSweepTable, RunArtifacts, epoch_series_csv)
from .ensembles import SweepResult

FORMATS = ("csv", "json")


def _check_format(fmt: str) -> None:
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")


def _write(path: str, text: str) -> str:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def _json_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _epoch_to_dict(row: EpochMetrics) -> dict:
    return {"epoch": row.epoch, "er_train": row.er_train, "er_val": row.er_val,
            "nfr_val": row.nfr_val, "rel_nfr_val": row.rel_nfr_val,
            "nfr_train": row.nfr_train}


def _epoch_from_dict(d: dict) -> EpochMetrics:
    return EpochMetrics(int(d["epoch"]), float(d["er_train"]),
                        float(d["er_val"]), float(d["nfr_val"]),
                        None if d["rel_nfr_val"] is None else float(d["rel_nfr_val"]),
                        float(d["nfr_train"]))


def result_to_document(result: ExperimentResult) -> dict:
    config_doc = document_from_experiment(result.config)
    config_doc["output_dir"] = None  # destination is not part of the experiment
    return {
        "config": config_doc,
        "er_old": result.er_old,
        "old_param_count": result.old_param_count,
        "runs": [{
            "repetition": run.repetition,
            "seed": run.seed,
            "param_count": run.param_count,
            "epochs": [_epoch_to_dict(row) for row in run.epochs],
            "final": run.final.to_dict(),
        } for run in result.runs],
    }


def result_from_document(doc: dict) -> ExperimentResult:
    runs = [RunArtifacts(int(r["repetition"]), int(r["seed"]),
                         int(r["param_count"]),
                         [_epoch_from_dict(e) for e in r["epochs"]],
                         FlipReport.from_dict(r["final"]))
            for r in doc["runs"]]
    return ExperimentResult(experiment_from_document(doc["config"]),
                            float(doc["er_old"]), int(doc["old_param_count"]),
                            runs)


def load_result(path: str) -> ExperimentResult:
    with open(path, "r", encoding="utf-8") as fh:
        return result_from_document(json.load(fh))


def summary_csv(result: ExperimentResult) -> str:
    s = result.summary()
    rel = s["rel_nfr"]["median"]
    cells = [s["method"], repr(float(s["er_old"])),
             repr(float(s["er_new"]["median"])), repr(float(s["nfr"]["median"])),
             "" if rel is None else repr(float(rel)),
             str(s["new_param_count"])]
    return ("method,er_old,er_new,nfr,rel_nfr,n_params\n"
            + ",".join(cells) + "\n")


def write_experiment(result: ExperimentResult, out_dir: str,
                     fmt: str = "json") -> List[str]:
    """Emit the full artifact set for one experiment into ``out_dir``."""
    _check_format(fmt)
    os.makedirs(out_dir, exist_ok=True)
    files = []
    for run in result.runs:
        tag = f"rep{run.repetition:02d}"
        files.append(_write(os.path.join(out_dir, f"epochs_{tag}.csv"),
                            epoch_series_csv(run)))
        files.append(_write(os.path.join(out_dir, f"report_{tag}.json"),
                            run.final.to_json()))
    if fmt == "json":
        files.append(_write(os.path.join(out_dir, "summary.json"),
                            _json_dumps(result.summary())))
    else:
        files.append(_write(os.path.join(out_dir, "summary.csv"),
                            summary_csv(result)))
    files.append(_write(os.path.join(out_dir, "artifacts.json"),
                        _json_dumps(result_to_document(result))))
    return files


def _table_rows_to_json(header: List[str], rows: List[List]) -> str:
    return _json_dumps({"rows": [dict(zip(header, row)) for row in rows]})


def write_comparison(table: ComparisonTable, out_dir: str,
                     fmt: str = "csv") -> List[str]:
    _check_format(fmt)
    os.makedirs(out_dir, exist_ok=True)
    files = [_write(os.path.join(out_dir, "comparison.csv"), table.to_csv())]
    if fmt == "json":
        header = ["method", "er_old", "er_new", "nfr", "rel_nfr", "n_params"]
        rows = [[r.method, r.er_old, r.er_new, r.nfr, r.rel_nfr, r.param_count]
                for r in table.rows]
        files.append(_write(os.path.join(out_dir, "comparison.json"),
                            _table_rows_to_json(header, rows)))
    return files


def write_focal_sweep(table: FocalSweepTable, out_dir: str,
                      fmt: str = "csv") -> List[str]:
    _check_format(fmt)
    os.makedirs(out_dir, exist_ok=True)
    files = [_write(os.path.join(out_dir, "focal_sweep.csv"), table.to_csv())]
    if fmt == "json":
        header = ["alpha", "beta", "er_new", "nfr", "rel_nfr"]
        rows = [[r.alpha, r.beta, r.er_new, r.nfr, r.rel_nfr]
                for r in table.rows]
        files.append(_write(os.path.join(out_dir, "focal_sweep.json"),
                            _table_rows_to_json(header, rows)))
    return files


def write_ensemble_sweep(result: SweepResult, out_dir: str,
                         fmt: str = "csv") -> List[str]:
    _check_format(fmt)
    os.makedirs(out_dir, exist_ok=True)
    files = [_write(os.path.join(out_dir, "ensemble_sweep.csv"),
                    result.to_csv())]
    if fmt == "json":
        header = ["L", "er_old", "er_new", "nfr", "rel_nfr"]
        rows = [[r.size, r.er_old, r.er_new, r.nfr, r.rel_nfr]
                for r in result.rows]
        files.append(_write(os.path.join(out_dir, "ensemble_sweep.json"),
                            _table_rows_to_json(header, rows)))
    return files
