"""Batch execution of configured experiments with CSV outputs.

Every run writes ``metrics.csv``, ``traces.csv``, ``masks.csv`` (session
tasks only) and ``manifest.txt`` into the configured output directory.
Seeds execute independently (optionally in a process pool capped by the
``PLREG_THREADS`` environment variable) and rows are aggregated in seed
order, so outputs are byte-identical across reruns of the same config.
"""

from __future__ import annotations

import csv
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import data as da
from . import training as tr
from .config import ExperimentConfig, serialize_config
from .errors import ConfigError

GCD_METRICS_HEADER = ["task", "preset", "seed", "held_out_domain",
                      "acc_all", "acc_known", "acc_unknown",
                      "w_p1", "w_p2", "w_lreg"]
CIL_METRICS_HEADER = ["task", "preset", "seed", "session",
                      "session_acc", "avg_acc", "w_p1", "w_p2", "w_lreg"]
TRACE_HEADER = ["task", "seed", "held_out_domain", "session", "epoch",
                "l_p1", "l_p2", "l_lreg", "l_main", "l_plreg", "l_final"]
MASKS_HEADER = ["seed", "session", "dim_index", "normalized_importance", "binarized"]
SWEEP_HEADER = ["axis", "value", "seed", "acc_all", "acc_known", "acc_unknown",
                "avg_acc"]


def _fmt(x: float) -> str:
    return repr(float(x))


def worker_count(n_jobs: int) -> int:
    env = os.environ.get("PLREG_THREADS", "").strip()
    cap = int(env) if env else (os.cpu_count() or 1)
    if cap < 1:
        raise ConfigError(f"PLREG_THREADS must be >= 1, got {cap}")
    return max(1, min(cap, n_jobs))


def _trace_rows(task, seed, held_out, session, breakdowns):
    rows = []
    for epoch, bd in enumerate(breakdowns):
        rows.append([task, seed, held_out, session, epoch,
                     _fmt(bd.l_p1), _fmt(bd.l_p2), _fmt(bd.l_lreg),
                     _fmt(bd.l_main), _fmt(bd.l_plreg), _fmt(bd.l_final)])
    return rows


def run_seed(cfg: ExperimentConfig, seed: int) -> dict:
    """One full pipeline execution; returns plain row lists for aggregation."""
    spec = replace(cfg.spec, seed=seed)
    preset = cfg.preset or ""
    w = cfg.weights
    params = cfg.estimator_params(seed)
    out = {"metrics": [], "traces": [], "masks": []}

    if cfg.task == "gcd":
        samples = da.generate(spec)
        split = da.make_gcd_split(samples, spec.num_known, seed, spec=spec)
        res = tr.train_gcd(split, **params)
        met = res.metrics
        out["metrics"].append(["gcd", preset, seed, "",
                               _fmt(met.acc_all), _fmt(met.acc_known),
                               _fmt(met.acc_unknown),
                               _fmt(w.w_p1), _fmt(w.w_p2), _fmt(w.w_lreg)])
        out["traces"] += _trace_rows("gcd", seed, "", "", res.traces)

    elif cfg.task == "mdg_gcd":
        samples = da.generate(spec)
        held = None if cfg.held_out_domain == "all" else [int(cfg.held_out_domain)]
        results = tr.train_mdg_gcd(samples, spec.num_known,
                                   held_out_domains=held,
                                   eval_interval=cfg.eval_interval,
                                   val_fraction=cfg.val_fraction,
                                   split_seed=seed, **params)
        for res in results:
            met = res.metrics
            out["metrics"].append(["mdg_gcd", preset, seed, res.held_out_domain,
                                   _fmt(met.acc_all), _fmt(met.acc_known),
                                   _fmt(met.acc_unknown),
                                   _fmt(w.w_p1), _fmt(w.w_p2), _fmt(w.w_lreg)])
            out["traces"] += _trace_rows("mdg_gcd", seed, res.held_out_domain,
                                         "", res.traces)

    elif cfg.task == "cil":
        schedule = da.make_cil_schedule(spec, cfg.sessions, cfg.style, seed=seed)
        res = tr.train_cil(schedule, test_per_class=cfg.test_per_class,
                           data_seed=seed, **params)
        for session, acc in enumerate(res.metrics.per_session_acc):
            out["metrics"].append(["cil", preset, seed, session, _fmt(acc),
                                   _fmt(res.metrics.average),
                                   _fmt(w.w_p1), _fmt(w.w_p2), _fmt(w.w_lreg)])
        for session, trace in enumerate(res.traces):
            out["traces"] += _trace_rows("cil", seed, "", session, trace)
        for rep in res.mask_reports:
            for i in range(rep.normalized.shape[0]):
                out["masks"].append([seed, rep.session, i,
                                     _fmt(rep.normalized[i]),
                                     int(rep.binarized[i])])
    return out


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_manifest(out_dir: Path, cfg: ExperimentConfig, status: str,
                    notes: list[str]) -> None:
    lines = [f"version: plreg-{__version__}",
             f"status: {status}",
             f"timestamp: {datetime.now(timezone.utc).isoformat()}"]
    lines += notes
    lines.append("config:")
    lines.append(serialize_config(cfg))
    (out_dir / "manifest.txt").write_text("\n".join(lines))


def _collect(cfg: ExperimentConfig):
    """Run every seed, serially or in a process pool, in seed order."""
    workers = worker_count(len(cfg.seeds))
    if workers <= 1:
        return [run_seed(cfg, s) for s in cfg.seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_seed, [cfg] * len(cfg.seeds), cfg.seeds))


def execute(cfg: ExperimentConfig) -> int:
    """Run the configured task for every seed; returns a process exit code."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        per_seed = _collect(cfg)
    except Exception:
        _write_manifest(out_dir, cfg, "failed",
                        ["error: |", traceback.format_exc()])
        return 1
    metrics_header = CIL_METRICS_HEADER if cfg.task == "cil" else GCD_METRICS_HEADER
    _write_csv(out_dir / "metrics.csv", metrics_header,
               [row for res in per_seed for row in res["metrics"]])
    _write_csv(out_dir / "traces.csv", TRACE_HEADER,
               [row for res in per_seed for row in res["traces"]])
    if cfg.task == "cil":
        _write_csv(out_dir / "masks.csv", MASKS_HEADER,
                   [row for res in per_seed for row in res["masks"]])
    _write_manifest(out_dir, cfg, "ok", [])
    return 0


def _with_axis(cfg: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    if axis in ("w_p1", "w_p2", "w_lreg"):
        return replace(cfg, weights=replace(cfg.weights, **{axis: value}))
    if axis in ("lambda_infomax", "lambda_kd"):
        return replace(cfg, **{axis: value})
    raise ConfigError(f"sweep axis must be one of "
                      f"('w_p1', 'w_p2', 'w_lreg', 'lambda_infomax', 'lambda_kd'), "
                      f"got {axis!r}")


def sweep(cfg: ExperimentConfig, axis: str, values: list[float]) -> int:
    """Re-run the base config at each value of one weight axis.

    ``sweep.csv`` holds one row per (value, seed) plus a summary row per
    value with ``seed == "mean"``.
    """
    if not values:
        raise ConfigError("sweep requires at least one value")
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        sub = _with_axis(cfg, axis, value)
        per_seed = _collect(sub)
        cols = []  # numeric metric columns per seed
        for seed, res in zip(sub.seeds, per_seed):
            if cfg.task == "cil":
                avg = float(res["metrics"][0][5])
                numeric = [None, None, None, avg]
            else:
                accs = np.array([[float(r[4]), float(r[5]), float(r[6])]
                                 for r in res["metrics"]])
                mean = accs.mean(axis=0)  # over held-out domains if several
                numeric = [mean[0], mean[1], mean[2], None]
            cols.append(numeric)
            rows.append([axis, _fmt(value), seed]
                        + ["" if v is None else _fmt(v) for v in numeric])
        means = ["" if col[0] is None else _fmt(float(np.mean(col)))
                 for col in zip(*cols)]
        rows.append([axis, _fmt(value), "mean"] + means)
    _write_csv(out_dir / "sweep.csv", SWEEP_HEADER, rows)
    return 0


def export_masks(run_dir) -> int:
    """Re-shape a run's masks.csv into per-session text blocks."""
    run_dir = Path(run_dir)
    src = run_dir / "masks.csv"
    if not src.exists():
        raise ConfigError(f"{src} not found (export-masks needs a session-task run)")
    by_key: dict[tuple[str, str], list[tuple[int, str, str]]] = {}
    with open(src, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            key = (row["seed"], row["session"])
            by_key.setdefault(key, []).append(
                (int(row["dim_index"]), row["normalized_importance"],
                 row["binarized"]))
    lines = []
    for (seed, session), entries in sorted(by_key.items(),
                                           key=lambda kv: (int(kv[0][0]),
                                                           int(kv[0][1]))):
        entries.sort()
        lines.append(f"seed {seed} session {session} "
                     f"normalized: {' '.join(e[1] for e in entries)}")
        lines.append(f"seed {seed} session {session} "
                     f"binarized:  {' '.join(e[2] for e in entries)}")
    (run_dir / "masks_export.txt").write_text("\n".join(lines) + "\n")
    return 0
