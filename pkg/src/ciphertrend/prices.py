"""Daily close ingestion"""

import csv
import math
from datetime import date
from pathlib import Path
from typing import List, Union

import structlog
from pydantic import ValidationError

from .errors import ConfigError, DataError
from .models import PriceSeries

logger = structlog.get_logger()

DELIMITERS = {"csv": ",", "tsv": "\t"}

# synthetic: 200 closes shaped like AAPL in 2015, not a market record
SAMPLE_PATH = Path(__file__).resolve().parent / "data" / "aapl_2015.csv"


def load_prices(path: Union[str, Path], format: str = "csv", ticker: str = "AAPL") -> PriceSeries:
    """Read a `date,close` file into a validated PriceSeries

    Lines starting with `#` are comments and may appear anywhere.
    """
    if format not in DELIMITERS:
        raise ConfigError(f"Unsupported price format: {format}")
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"Cannot read {path}: {exc}") from exc

    numbered = [
        (n, text_line)
        for n, text_line in enumerate(text.splitlines(), start=1)
        if not text_line.lstrip().startswith("#")
    ]
    if not numbered:
        raise DataError(f"{path} is empty")
    numbers = [n for n, _ in numbered]
    rows = list(csv.reader([t for _, t in numbered], delimiter=DELIMITERS[format]))
    header = [h.strip().lower() for h in rows[0]]
    if header[:2] != ["date", "close"]:
        raise DataError("header must be 'date,close'", line=numbers[0])

    dates: List[date] = []
    closes: List[float] = []
    for line, row in zip(numbers[1:], rows[1:]):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < 2:
            raise DataError(f"expected 2 fields, got {len(row)}", line=line)
        try:
            day = date.fromisoformat(row[0].strip())
        except ValueError:
            raise DataError(f"invalid ISO date {row[0]!r}", line=line) from None
        try:
            close = float(row[1])
        except ValueError:
            raise DataError(f"invalid price {row[1]!r}", line=line) from None
        if not math.isfinite(close) or close <= 0:
            raise DataError(f"price must be positive, got {close}", line=line)
        if dates and day <= dates[-1]:
            raise DataError(f"date {day} does not follow {dates[-1]}", line=line)
        dates.append(day)
        closes.append(close)

    if not closes:
        raise DataError(f"{path} has no price rows")
    try:
        series = PriceSeries(ticker=ticker, dates=dates, closes=closes)
    except ValidationError as exc:
        raise DataError(exc.errors()[0]["msg"]) from exc
    logger.info("Loaded prices", path=str(path), count=len(series), ticker=ticker)
    return series
