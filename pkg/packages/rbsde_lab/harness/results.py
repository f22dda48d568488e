import logging
import os
import threading
from typing import Iterable, List, Optional

import pandas as pd
from pydantic import BaseModel, model_validator

from ..analysis.estimates import EstimateReport
from ..analysis.norms import NormEntry
from ..lattice import METHOD_SAMPLED

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["run_id", "scenario", "N", "quantity", "value", "stderr", "method", "level", "sweep", "note"]

# Method tag of values computed by a deterministic recursion
METHOD_EXACT = "exact"

_write_lock = threading.Lock()

class ResultRow(BaseModel):
    """One CSV row. Sampled values carry a standard error, exact values none."""
    run_id: str
    scenario: str
    N: int
    quantity: str
    value: float
    stderr: Optional[float] = None
    method: str = METHOD_EXACT
    level: Optional[float] = None
    sweep: Optional[int] = None
    note: str = ""

    @model_validator(mode="after")
    def check_stderr(self):
        if self.method == METHOD_SAMPLED and self.stderr is None:
            raise ValueError(f"Sampled value {self.quantity} needs a standard error")
        if self.method != METHOD_SAMPLED and self.stderr is not None:
            raise ValueError(f"Exact value {self.quantity} ({self.method}) must not carry a standard error")
        return self

def entry_row(run_id: str, scenario: str, N: int, entry: NormEntry, level: Optional[float] = None,
              sweep: Optional[int] = None, note: str = "") -> ResultRow:
    return ResultRow(run_id=run_id, scenario=scenario, N=N, quantity=entry.quantity, value=entry.value,
                     stderr=entry.stderr if entry.method == METHOD_SAMPLED else None, method=entry.method,
                     level=level, sweep=sweep, note=note)

def estimate_rows(run_id: str, N: int, report: EstimateReport) -> List[ResultRow]:
    """lhs, rhs and ratio rows of an estimate report"""
    sampled = report.method == METHOD_SAMPLED
    note = f"tau={report.stopping} p={report.p:g}"
    base = dict(run_id=run_id, scenario=report.scenario, N=N, level=report.level, note=note)
    rows = [
        ResultRow(quantity=f"{report.id}.lhs", value=report.lhs, method=report.method,
                  stderr=(report.lhs_stderr or 0.0) if sampled else None, **base),
        ResultRow(quantity=f"{report.id}.rhs", value=report.rhs, method=report.method,
                  stderr=(report.rhs_stderr or 0.0) if sampled else None, **base),
    ]
    # the ratio of two estimates has no standard error of its own
    rows.append(ResultRow(quantity=f"{report.id}.ratio", value=report.ratio,
                          method=METHOD_EXACT if not sampled else "ratio-of-sampled", **base))
    return rows

def rows_frame(rows: Iterable[ResultRow]) -> pd.DataFrame:
    records = [r.model_dump() for r in rows]
    df = pd.DataFrame.from_records(records, columns=CSV_COLUMNS)
    return df.astype({"N": "Int64", "sweep": "Int64"})

def write_csv(rows: Iterable[ResultRow], path: str) -> int:
    """
    Write rows with a fixed column order, '.' decimals and LF line endings.

    An empty row list gives a header-only file.

    Returns:
        Number of rows written
    """
    df = rows_frame(rows)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with _write_lock:
        df.to_csv(path, index=False, lineterminator="\n", float_format="%.17g", decimal=".")
    logger.info(f"Wrote {len(df)} rows to {path}")
    return len(df)

def read_csv(path: str) -> pd.DataFrame:
    return pd.read_csv(path, dtype={"run_id": str, "note": str}, keep_default_na=True)
