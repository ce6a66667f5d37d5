from __future__ import annotations
import json
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd
from rich.table import Table

SIGNIFICANT_DIGITS = 12

SUMMARY_COLUMNS = ["model", "point", "growth", "reconstruction", "signature", "cone_residual",
                   "fit_gap", "quartic_zero", "quartic_route_gap", "heldout", "verdict"]


def _round(x: float):
    if not math.isfinite(x):
        return None
    return float(f"{x:.{SIGNIFICANT_DIGITS}g}")


def clean(obj):
    """JSON-ready copy: numpy -> Python, floats to 12 significant digits, tuples -> lists."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _round(float(obj))
    return obj


def to_json(report: dict) -> str:
    """Byte-deterministic serialization for fixed inputs."""
    return json.dumps(clean(report), sort_keys=True, indent=2) + "\n"


def write_report(report: dict, out: str | Path | None) -> None:
    text = to_json(report)
    if out is None or str(out) == "-":
        sys.stdout.write(text)
        return
    p = Path(out)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")


def summary_frame(rows: list[dict]) -> pd.DataFrame:
    """One row per (model, point), in a stable order."""
    df = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
    if df.empty:
        return df
    return df.sort_values(["model", "point"], kind="mergesort").reset_index(drop=True)


def save_csv(df: pd.DataFrame, path: str | Path) -> None:
    """Write a CSV to disk. Complexity: O(N·M) bytes written."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(p, index=False)


def summary_table(df: pd.DataFrame, title: str = "corpus") -> Table:
    table = Table(title=title)
    for c in df.columns:
        table.add_column(c, justify="right" if c not in ("model", "verdict") else "left")
    for _, row in df.iterrows():
        cells = []
        for c in df.columns:
            v = row[c]
            if c == "verdict":
                cells.append("[green]pass[/green]" if v == "pass" else f"[red]{v}[/red]")
            elif isinstance(v, float):
                cells.append("" if pd.isna(v) else f"{v:.2e}")
            else:
                cells.append(str(v))
        table.add_row(*cells)
    return table
