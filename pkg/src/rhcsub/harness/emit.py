"""Serialization of experiment results to CSV or JSON.

Floats are written with ``repr`` (shortest round-trip form, '.' decimal), lines
end with '\\n' and files are UTF-8, so identical results give identical bytes.
Missing values are empty CSV cells and JSON ``null``.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from . import schemas as S

SWEEP_COLUMNS = ["model_index", "N", "stable", "gap", "normalized_gap"]
ADAPTIVE_COLUMNS = ["seed", "mode", "t", "epoch", "stage_cost", "cum_regret"]
IDENTIFY_COLUMNS = ["T", "median", "q25", "q75", "num_seeds"]
BOUND_COLUMNS = ["N", "e_hat", "g", "preconditions_met", "failed_conditions", "known_model_bound", "simplified_shape"]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, separators=(",", ":"))
    return str(v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def to_csv(result) -> str:
    if isinstance(result, S.SweepResult):
        return _csv(SWEEP_COLUMNS, ([getattr(r, c) for c in SWEEP_COLUMNS] for r in result.records))
    if isinstance(result, S.AdaptiveResult):
        rows = []
        for run in result.runs:
            for t, epoch, stage, cum in run.steps or []:
                rows.append([run.seed, run.mode, int(t), int(epoch), stage, cum])
        return _csv(ADAPTIVE_COLUMNS, rows)
    if isinstance(result, S.IdentifyResult):
        return _csv(IDENTIFY_COLUMNS, ([getattr(r, c) for c in IDENTIFY_COLUMNS] for r in result.rows))
    if isinstance(result, S.BoundResult):
        return _csv(BOUND_COLUMNS, ([getattr(r, c) for c in BOUND_COLUMNS] for r in result.rows))
    # scalar-style results: one (field, value) row each, matrices JSON-encoded
    data = result.model_dump(mode="json")
    return _csv(["field", "value"], data.items())


def to_json(result) -> str:
    return json.dumps(result.model_dump(mode="json"), indent=2, allow_nan=False) + "\n"


def render(result, format: str) -> str:
    if format == "csv":
        return to_csv(result)
    if format == "json":
        return to_json(result)
    raise ValueError(f"unknown format {format!r}")


def emit(result, path, format: str = "json") -> None:
    text = render(result, format)
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {format} output to {path}: {exc.strerror or exc}") from exc
