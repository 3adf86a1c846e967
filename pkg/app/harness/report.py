"""Table-shaped reports (rows × n references, mean±2σ) and sweep plot data."""
from __future__ import annotations

import logging
import math
import re
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

import pandas as pd

from ..errors import FormatError, ReportError
from ..schemas import CellResult, ReportRow, SweepCell
from ..utils.records import iter_records, write_records
from .protocols import N_VALUES

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
NA = "n/a"
_CELL = re.compile(r"^(-?\d+(?:\.\d+)?)±(\d+(?:\.\d+)?)$")


def format_cell(cell: Optional[CellResult], digits: int = 2) -> str:
    if cell is None:
        return NA
    return f"{cell.mean:.{digits}f}±{cell.dispersion:.{digits}f}"


def table_frame(rows: Sequence[ReportRow], ns: Sequence[int] = N_VALUES) -> pd.DataFrame:
    data = {f"n={n}": [format_cell(r.cells.get(n)) for r in rows] for n in ns}
    return pd.DataFrame(data, index=[r.label for r in rows])


def render_table(rows: Sequence[ReportRow], ns: Sequence[int] = N_VALUES) -> str:
    """Pipe-separated text table; one line per row, one column per n."""
    df = table_frame(rows, ns)
    header = ["row"] + list(df.columns)
    body = [[label] + list(values) for label, values in zip(df.index, df.values.tolist())]
    widths = [max(len(str(line[i])) for line in [header] + body) for i in range(len(header))]
    lines = [" | ".join(str(v).ljust(w) for v, w in zip(line, widths)).rstrip() for line in [header] + body]
    return "\n".join(lines) + "\n"


def parse_table(text: str) -> List[ReportRow]:
    """Inverse of :func:`render_table` at the printed precision."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty report table")
    header = [h.strip() for h in lines[0].split("|")]
    if header[0] != "row":
        raise FormatError("report table must start with a 'row' column")
    try:
        ns = [int(h.split("=", 1)[1]) for h in header[1:]]
    except (IndexError, ValueError) as exc:
        raise FormatError(f"bad column header {lines[0]!r}") from exc
    rows: List[ReportRow] = []
    for ln in lines[1:]:
        parts = [p.strip() for p in ln.split("|")]
        parts += [""] * (len(header) - len(parts))
        cells: Dict[int, Optional[CellResult]] = {}
        for n, raw in zip(ns, parts[1:]):
            if raw == NA:
                cells[n] = None
                continue
            m = _CELL.match(raw)
            if m is None:
                raise FormatError(f"bad cell {raw!r} in row {parts[0]!r}")
            cells[n] = CellResult(mean=float(m.group(1)), dispersion=float(m.group(2)))
        rows.append(ReportRow(label=parts[0], cells=cells))
    return rows


def table_csv(rows: Sequence[ReportRow]) -> pd.DataFrame:
    records = []
    for r in rows:
        for n, cell in sorted(r.cells.items()):
            records.append({
                "label": r.label,
                "n": n,
                "mean": None if cell is None else cell.mean,
                "dispersion": None if cell is None else cell.dispersion,
            })
    return pd.DataFrame.from_records(records, columns=["label", "n", "mean", "dispersion"])


def read_table_csv(path: PathLike) -> List[ReportRow]:
    df = pd.read_csv(path, float_precision="round_trip")
    missing = {"label", "n", "mean", "dispersion"} - set(df.columns)
    if missing:
        raise FormatError(f"{path}: missing columns {sorted(missing)}")
    rows: Dict[str, ReportRow] = {}
    for rec in df.to_dict(orient="records"):
        row = rows.setdefault(rec["label"], ReportRow(label=rec["label"]))
        mean = rec["mean"]
        if mean is None or (isinstance(mean, float) and math.isnan(mean)):
            row.cells[int(rec["n"])] = None
        else:
            row.cells[int(rec["n"])] = CellResult(mean=float(mean), dispersion=float(rec["dispersion"]))
    return list(rows.values())


def check_complete(rows: Sequence[ReportRow], expected: Iterable[str], ns: Sequence[int] = N_VALUES) -> None:
    """Every expected label must be present with a column for every n."""
    by_label = {r.label: r for r in rows}
    missing: List[str] = []
    for label in expected:
        row = by_label.get(label)
        if row is None:
            missing.append(label)
            continue
        missing.extend(f"{label}@n={n}" for n in ns if n not in row.cells)
    if missing:
        raise ReportError(missing)


def check_unique(rows: Sequence[ReportRow]) -> None:
    """Rows are keyed by label once written; a repeated label would drop a row."""
    seen: Dict[str, int] = {}
    for r in rows:
        seen[r.label] = seen.get(r.label, 0) + 1
    repeated = [label for label, count in seen.items() if count > 1]
    if repeated:
        raise ReportError(repeated, f"rows share a label: {', '.join(repeated)}")


def sweep_frame(cells: Sequence[SweepCell]) -> pd.DataFrame:
    return pd.DataFrame.from_records([c.model_dump() for c in cells],
                                     columns=["tier", "strategy", "caption_bleu", "translation_bleu", "paraphrase_bleu"])


def caption_count_frame(results: Mapping[int, CellResult]) -> pd.DataFrame:
    return pd.DataFrame.from_records(
        [{"k": k, "mean": c.mean, "dispersion": c.dispersion} for k, c in sorted(results.items())],
        columns=["k", "mean", "dispersion"],
    )


def write_rows(path: PathLike, rows: Sequence[ReportRow]) -> int:
    return write_records(path, rows)


def read_rows(path: PathLike) -> List[ReportRow]:
    return [ReportRow(**rec) for rec in iter_records(path)]


def write_report(out_dir: PathLike, rows: Sequence[ReportRow], expected: Optional[Iterable[str]] = None,
                 sweep: Optional[Sequence[SweepCell]] = None,
                 caption_counts: Optional[Mapping[int, CellResult]] = None,
                 ns: Sequence[int] = N_VALUES) -> Dict[str, Path]:
    """table.txt, table.csv and, when given, sweep.csv / caption_count.csv."""
    check_unique(rows)
    if expected is not None:
        check_complete(rows, expected, ns)
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    written: Dict[str, Path] = {}
    written["table"] = root / "table.txt"
    written["table"].write_text(render_table(rows, ns), encoding="utf-8")
    written["csv"] = root / "table.csv"
    table_csv(rows).to_csv(written["csv"], index=False)
    if sweep:
        written["sweep"] = root / "sweep.csv"
        sweep_frame(sweep).to_csv(written["sweep"], index=False)
    if caption_counts:
        written["caption_count"] = root / "caption_count.csv"
        caption_count_frame(caption_counts).to_csv(written["caption_count"], index=False)
    logger.info("report_written dir=%s files=%s", root, ",".join(sorted(written)))
    return written
