"""Write run artifacts: JSON report, CSV tables and plot-data matrices.

Column contracts are documented in docs/output_format.md. Every file is
written with a fixed float format, sorted JSON keys and no timing fields, so
identical inputs produce byte-identical outputs.
"""
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import pandas as pd
from pydantic import BaseModel

from engine.src.config_loader import ConfigLoader
from engine.src.models.reports import ClearingReport, ComparisonReport, EventTable

logger = logging.getLogger(__name__)

JSON_REPORT = "json-report"
CSV_TABLES = "csv-tables"
PLOT_DATA = "plot-data"
ALL_FORMATS = (JSON_REPORT, CSV_TABLES, PLOT_DATA)


def _report_settings() -> Tuple[str, int]:
    reports = ConfigLoader.get_config_value("reports", {})
    return reports.get("float_format", "%.10g"), int(reports.get("json_indent", 2))


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    float_format, _ = _report_settings()
    frame.to_csv(path, index=False, float_format=float_format, lineterminator="\n")
    return path


def write_json_report(report: BaseModel, out_dir: Path, name: str = "report.json") -> Path:
    _, indent = _report_settings()
    path = Path(out_dir) / name
    path.write_text(json.dumps(report.model_dump(mode="json"), indent=indent, sort_keys=True) + "\n", encoding="utf-8")
    return path


def prices_frame(reports: Sequence[Tuple[str, ClearingReport]]) -> pd.DataFrame:
    """Long table of energy, nodal, reserve and risk prices: formulation, price, key, value."""
    rows = []
    for name, report in reports:
        prices = report.prices
        rows.append((name, "lambda", "system", prices.lambda_system))
        rows.extend((name, "lambda_nodal", node, value) for node, value in prices.lambda_nodal.items())
        rows.extend((name, "chi", uid, value) for uid, value in prices.chi.items())
        if prices.mu is not None:
            rows.extend((name, "mu", str(w), value) for w, value in enumerate(prices.mu))
    return pd.DataFrame(rows, columns=["formulation", "price", "key", "value"])


def dispatch_frame(reports: Sequence[Tuple[str, ClearingReport]]) -> pd.DataFrame:
    """
    Power outputs and balancing participation factors.

    One row per producer with ``p_G`` taken from the first report, then one
    ``<formulation>_alpha_<unit>`` column per report and unit. A final ``chi``
    row carries the reserve prices under the matching columns.
    """
    first = reports[0][1]
    res_ids = list(first.prices.chi)
    columns = ["producer", "p_G"] + [f"{name}_alpha_{u}" for name, _ in reports for u in res_ids]
    rows = []
    for i, outcome in enumerate(first.producers):
        row = [outcome.producer, outcome.p_g]
        for _, report in reports:
            row.extend(report.producers[i].alpha[u] for u in res_ids)
        rows.append(row)
    chi_row: List = ["chi", None]
    for _, report in reports:
        chi_row.extend(report.prices.chi[u] for u in res_ids)
    rows.append(chi_row)
    return pd.DataFrame(rows, columns=columns)


def settlement_frame(reports: Sequence[Tuple[str, ClearingReport]]) -> pd.DataFrame:
    rows = []
    for name, report in reports:
        for outcome in report.producers:
            rows.append({
                "formulation": name,
                "producer": outcome.producer,
                "reserve_mw": outcome.reserve_mw,
                "t": outcome.t,
                "premium": outcome.premium,
                **outcome.settlement.model_dump(),
            })
    return pd.DataFrame(rows)


def event_probability_frames(events: EventTable) -> Dict[str, pd.DataFrame]:
    """Per producer: one row per event; one column per belief, then the common belief and mu."""
    frames = {}
    for gid, beliefs in events.beliefs.items():
        frame = _event_index_frame(events)
        for k, probs in enumerate(beliefs):
            frame[f"{gid}:{k}"] = list(probs)
        frame["common"] = list(events.common)
        if events.mu is not None:
            frame["mu"] = list(events.mu)
        frames[gid] = frame
    return frames


def trades_frame(report: ClearingReport, events: EventTable) -> pd.DataFrame:
    """Security positions, one row per event and one column per producer; positive means bought."""
    frame = _event_index_frame(events)
    for outcome in report.producers:
        if outcome.trades is not None:
            frame[outcome.producer] = list(outcome.trades)
    return frame


def _event_index_frame(events: EventTable) -> pd.DataFrame:
    return pd.DataFrame({"event": list(range(len(events.labels))), "label": list(events.labels)})


def write_artifacts(
    out_dir: Path,
    formats: Iterable[str],
    report: BaseModel,
    clearings: Sequence[Tuple[str, ClearingReport]],
    events: Optional[EventTable] = None,
    trades_from: Optional[ClearingReport] = None,
) -> List[Path]:
    """
    Write the requested formats for one run.

    Args:
        out_dir (Path): Output directory, created if missing.
        formats (Iterable[str]): Subset of ``ALL_FORMATS``.
        report (BaseModel): The report serialized as report.json.
        clearings (Sequence[Tuple[str, ClearingReport]]): Named clearing reports
            for the price, dispatch and settlement tables.
        events (Optional[EventTable]): Event probabilities for plot data.
        trades_from (Optional[ClearingReport]): Risk-trading clearing whose
            positions are written as plot data.

    Returns:
        List[Path]: Files written, in writing order.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    formats = set(formats)
    written: List[Path] = []
    if JSON_REPORT in formats:
        written.append(write_json_report(report, out_dir))
    if CSV_TABLES in formats and clearings:
        written.append(_write_csv(prices_frame(clearings), out_dir / "prices.csv"))
        written.append(_write_csv(dispatch_frame(clearings), out_dir / "dispatch.csv"))
        written.append(_write_csv(settlement_frame(clearings), out_dir / "settlement.csv"))
    if PLOT_DATA in formats and events is not None:
        written.append(_write_csv(_event_index_frame(events), out_dir / "events.csv"))
        for gid, frame in event_probability_frames(events).items():
            written.append(_write_csv(frame, out_dir / f"event_probabilities_{gid}.csv"))
        if trades_from is not None:
            written.append(_write_csv(trades_frame(trades_from, events), out_dir / "ads_trades.csv"))
    logger.info("artifacts written", extra={"out_dir": str(out_dir), "files": [p.name for p in written]})
    return written


def write_comparison_artifacts(out_dir: Path, formats: Iterable[str], report: ComparisonReport) -> List[Path]:
    return write_artifacts(
        out_dir,
        formats,
        report,
        [("rt", report.rt), ("no_rt", report.no_rt)],
        events=report.events,
        trades_from=report.rt,
    )
