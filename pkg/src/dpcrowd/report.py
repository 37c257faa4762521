"""Machine-readable result emission: summary CSV/JSON and per-timestamp traces.

Reports are byte-deterministic for a given config + seed: no wall clock,
fixed column order, and floats printed at 17 significant digits so every
value round-trips exactly.
"""

from __future__ import annotations

import csv
import json
from typing import Iterable

import numpy as np

from .config import config_to_flat
from .metrics import summarize
from .runners import RunResult

__all__ = [
    "SCHEMA_VERSION",
    "SUMMARY_COLUMNS",
    "TRACE_COLUMNS",
    "format_float",
    "summary_record",
    "write_summary_csv",
    "write_trace_csv",
    "json_payload",
    "write_json",
    "write_report",
]

SCHEMA_VERSION = 1

SUMMARY_COLUMNS = (
    "schema_version",
    "algorithm",
    "seed",
    "epsilon",
    "w",
    "rho",
    "m",
    "are",
    "ace",
    "packets",
    "bytes",
    "max_latency_ms",
    "broadcasts",
)

TRACE_COLUMNS = ("seed", "t", "are", "ace", "packets")


def format_float(value: float) -> str:
    """17 significant digits: enough that float(format_float(x)) == x."""
    return "%.17g" % float(value)


def _cell(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def summary_record(result: RunResult) -> dict:
    """Flatten one finished run into the fixed summary schema."""
    cfg = result.config
    stats = result.stats
    m = summarize(result.releases, result.truth)
    return {
        "schema_version": SCHEMA_VERSION,
        "algorithm": cfg.algorithm,
        "seed": cfg.seed,
        "epsilon": float(cfg.epsilon),
        "w": cfg.w,
        "rho": float(cfg.net.rho),
        "m": cfg.net.m,
        "are": m.are,
        "ace": m.ace,
        "packets": stats.packets,
        "bytes": stats.payload_bytes,
        "max_latency_ms": float(stats.max_latency_ms),
        "broadcasts": int(np.asarray(stats.broadcasts).sum()),
    }


def write_summary_csv(records: Iterable[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for rec in records:
            writer.writerow([_cell(rec[col]) for col in SUMMARY_COLUMNS])


def trace_rows(result: RunResult) -> list[tuple]:
    m = summarize(result.releases, result.truth)
    seed = result.config.seed
    rows = []
    for idx in range(len(m.are_trace)):
        rows.append(
            (
                seed,
                idx + 1,
                float(m.are_trace[idx]),
                float(m.ace_trace[idx]),
                int(result.stats.packets_by_t[idx]),
            )
        )
    return rows


def write_trace_csv(results: Iterable[RunResult], path) -> None:
    """Long-format per-timestamp trace, one block of rows per run."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for result in results:
            for row in trace_rows(result):
                writer.writerow([_cell(v) for v in row])


def json_payload(results: Iterable[RunResult]) -> dict:
    """Nested report: summary fields plus a full config echo per run."""
    reports = []
    for result in results:
        rec = summary_record(result)
        reports.append(
            {
                "algorithm": rec["algorithm"],
                "seed": rec["seed"],
                "epsilon": rec["epsilon"],
                "w": rec["w"],
                "rho": rec["rho"],
                "m": rec["m"],
                "metrics": {"are": rec["are"], "ace": rec["ace"]},
                "comm": {
                    "packets": rec["packets"],
                    "bytes": rec["bytes"],
                    "max_latency_ms": rec["max_latency_ms"],
                    "broadcasts": rec["broadcasts"],
                },
                "config": {k: _cell(v) for k, v in config_to_flat(result.config).items()},
            }
        )
    return {"schema_version": SCHEMA_VERSION, "reports": reports}


def write_json(results: Iterable[RunResult], path) -> None:
    payload = json_payload(results)
    with open(path, "w", newline="") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def write_report(results, fmt: str, path, trace_path=None) -> None:
    results = list(results)
    if fmt == "csv":
        write_summary_csv([summary_record(r) for r in results], path)
    elif fmt == "json":
        write_json(results, path)
    else:
        raise ValueError(f"unknown report format: {fmt!r}")
    if trace_path is not None:
        write_trace_csv(results, trace_path)
