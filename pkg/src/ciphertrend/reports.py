"""CSV, text and JSON outputs of local runs, plus the order log"""

import csv
import io
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import aiofiles
import orjson
import structlog

from .models import DecisionRecord, ErrorReport, OrderLogEntry, PriceSeries, StrategyConfig

logger = structlog.get_logger()

ORDER_LOG_HEADER = ("tick", "date", "trader_votes", "final_order")
SIGNAL_HEADER = ("index", "date", "value_plain", "value_decrypted")
MAPE_ROWS = (("WMA", "wma"), ("MACD", "macd"), ("Decision", "decision"))
SIGNAL_COLUMNS = (
    ("alpha", "wma_fast"),
    ("beta", "wma_slow"),
    ("theta", "theta"),
    ("gamma", "gamma"),
    ("m", "macd"),
)


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")
    return path


def signal_offsets(strategy: StrategyConfig) -> Dict[str, int]:
    """Price index of the first value of each indicator series"""
    n1, n2, n3 = strategy.windows
    return {"alpha": n1, "beta": n2, "theta": n2, "gamma": n2 + n3, "m": n2 + n3}


def _at(values: Optional[List[float]], j: int) -> str:
    if values is None or not 0 <= j < len(values):
        return ""
    return _fmt(values[j])


def macd_csv(
    prices: PriceSeries,
    strategy: StrategyConfig,
    plain: Dict[str, List[float]],
    decrypted: Optional[Dict[str, List[float]]] = None,
) -> str:
    """One row per price with a plain and a decrypted column per indicator

    Cells are blank before an indicator's first value; decrypted cells are
    blank on oracle runs.
    """
    offsets = signal_offsets(strategy)
    header = ["index", "date", "close"]
    for _, label in SIGNAL_COLUMNS:
        header += [f"{label}_plain", f"{label}_decrypted"]
    rows = []
    for i, close in enumerate(prices.closes):
        row = [i, prices.date_at(i), _fmt(close)]
        for name, _ in SIGNAL_COLUMNS:
            j = i - offsets[name]
            row.append(_at(plain[name], j))
            row.append(_at(decrypted[name] if decrypted else None, j))
        rows.append(row)
    return _csv_text(header, rows)


def signal_csv(
    prices: PriceSeries,
    offset: int,
    plain: Sequence[float],
    decrypted: Optional[Sequence[float]] = None,
) -> str:
    """Export of a single signal starting at price index `offset`"""
    rows = [
        (
            offset + j,
            prices.date_at(offset + j),
            _fmt(value),
            _fmt(decrypted[j]) if decrypted is not None else "",
        )
        for j, value in enumerate(plain)
    ]
    return _csv_text(SIGNAL_HEADER, rows)


def decisions_csv(records: Sequence[DecisionRecord]) -> str:
    header = ("index", "date", "o1", "o2", "o2hat_plain", "o2hat_decrypted", "order", "provenance")
    rows = [
        (
            r.index,
            r.date,
            r.o1,
            r.o2,
            _fmt(r.o2hat_plain),
            _fmt(r.o2hat_decrypted),
            r.order,
            r.provenance.value,
        )
        for r in records
    ]
    return _csv_text(header, rows)


def mape_csv(reports: Sequence[ErrorReport]) -> str:
    header = ("stage", "engine", "mape_signed_sum", "mape_normalized", "count", "excluded")
    rows = []
    for report in reports:
        for label, attr in MAPE_ROWS:
            result = getattr(report, attr)
            rows.append(
                (
                    label,
                    report.engine.value,
                    _fmt(result.signed_sum),
                    _fmt(result.normalized),
                    result.count,
                    result.excluded,
                )
            )
    return _csv_text(header, rows)


def agreement_csv(reports: Sequence[ErrorReport]) -> str:
    """Per-engine crossing agreement at the shared threshold"""
    header = ("engine", "threshold", "crossings", "matched", "missed", "spurious")
    rows = []
    for report in reports:
        a = report.agreement
        if a is None:
            continue
        rows.append(
            (
                report.engine.value,
                _fmt(report.threshold),
                a.crossings,
                a.matched,
                a.missed,
                a.spurious,
            )
        )
    return _csv_text(header, rows)


def timings_csv(reports: Sequence[ErrorReport]) -> str:
    header = ("stage", "engine", "seconds_per_quote")
    rows = [
        (stage.capitalize(), report.engine.value, f"{seconds:.6f}")
        for report in reports
        for stage, seconds in report.timings.items()
    ]
    return _csv_text(header, rows)


def report_text(reports: Sequence[ErrorReport], include_timings: bool = True) -> str:
    """Human-readable error table, agreement counts and timings"""
    lines = ["Percentage error against the plaintext oracle", ""]
    lines.append(f"{'Stage':<10}{'Engine':<11}{'MAPE':>16}{'Normalized':>16}{'Excluded':>10}")
    for report in reports:
        for label, attr in MAPE_ROWS:
            result = getattr(report, attr)
            lines.append(
                f"{label:<10}{report.engine.value:<11}"
                f"{result.signed_sum:>15.5f}%{result.normalized:>15.5f}%{result.excluded:>10}"
            )
    lines.append("")
    for report in reports:
        lines.append(f"[{report.engine.value}] levels consumed: {report.depth_consumed}")
        if report.threshold is not None:
            lines.append(f"[{report.engine.value}] threshold: {report.threshold!r}")
        if report.interval_violations:
            lines.append(
                f"[{report.engine.value}] approximation left its interval "
                f"{report.interval_violations} times"
            )
    agreed = [r for r in reports if r.agreement is not None]
    if agreed:
        lines.extend(["", "Crossing agreement"])
        lines.append(
            f"{'Engine':<11}{'crossings':>10}{'matched':>9}{'missed':>8}{'spurious':>10}"
        )
        for report in agreed:
            a = report.agreement
            lines.append(
                f"{report.engine.value:<11}{a.crossings:>10}{a.matched:>9}"
                f"{a.missed:>8}{a.spurious:>10}"
            )
    if include_timings:
        lines.extend(["", "Seconds per quote"])
        for report in reports:
            for stage, seconds in report.timings.items():
                lines.append(f"{stage.capitalize():<10}{report.engine.value:<11}{seconds:>12.6f}")
        for report in reports:
            lines.append(f"[{report.engine.value}] per-quote budget: {report.timing_band.value}")
    return "\n".join(lines) + "\n"


def report_json(reports: Sequence[ErrorReport]) -> bytes:
    payload = {"reports": [r.model_dump(mode="json") for r in reports]}
    return orjson.dumps(payload, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS)


def write_local_outputs(
    out: Path,
    prices: PriceSeries,
    strategy: StrategyConfig,
    plain: Dict[str, List[float]],
    decrypted: Optional[Dict[str, List[float]]],
    records: Sequence[DecisionRecord],
    reports: Sequence[ErrorReport],
    trace_csv: Optional[str] = None,
) -> List[Path]:
    """Write every local-run output under `out` and return the paths

    `plain` holds the oracle series; `decrypted` the primary engine's, or
    None when the primary engine is the oracle itself.
    """
    out = Path(out)
    macd_offset = signal_offsets(strategy)["m"]
    written = [
        _write(out / "macd.csv", macd_csv(prices, strategy, plain, decrypted)),
        _write(
            out / "macd_line.csv",
            signal_csv(prices, macd_offset, plain["m"], decrypted["m"] if decrypted else None),
        ),
        _write(out / "decisions.csv", decisions_csv(records)),
        _write(out / "report.csv", mape_csv(reports)),
        _write(out / "agreement.csv", agreement_csv(reports)),
        _write(out / "timings.csv", timings_csv(reports)),
        _write(out / "report.txt", report_text(reports)),
    ]
    json_path = out / "report.json"
    json_path.write_bytes(report_json(reports))
    written.append(json_path)
    if trace_csv is not None:
        written.append(_write(out / "trace.csv", trace_csv))
    logger.info("Reports written", out=str(out), files=len(written))
    return written


def order_log_row(entry: OrderLogEntry) -> List:
    return [entry.tick, entry.date, entry.votes_field(), entry.final_order]


def order_log_csv(entries: Sequence[OrderLogEntry]) -> str:
    return _csv_text(ORDER_LOG_HEADER, (order_log_row(e) for e in entries))


def write_order_log(path: Path, entries: Sequence[OrderLogEntry]) -> Path:
    return _write(Path(path), order_log_csv(entries))


class OrderLogWriter:
    """Appends order-log rows as ticks close so interrupted runs keep a valid prefix"""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._file = None
        self.rows = 0

    async def open(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file = await aiofiles.open(self.path, "w", encoding="utf-8", newline="")
        await self._file.write(_csv_text(ORDER_LOG_HEADER, []))
        await self._file.flush()

    async def append(self, entry: OrderLogEntry) -> None:
        if self._file is None:
            await self.open()
        text = _csv_text(ORDER_LOG_HEADER, [order_log_row(entry)])
        await self._file.write(text.split("\n", 1)[1])
        await self._file.flush()
        self.rows += 1

    async def close(self) -> None:
        if self._file is not None:
            await self._file.close()
            self._file = None

    async def __aenter__(self) -> "OrderLogWriter":
        await self.open()
        return self

    async def __aexit__(self, *exc) -> None:
        await self.close()
