"""Builders shared by several test modules"""

import math
from datetime import date, timedelta
from typing import List, Sequence

from ciphertrend.models import PriceSeries

TOY_LAYOUT = dict(
    ring_degree=64,
    first_bits=50,
    middle_bits=30,
    middle_count=10,
    last_bits=50,
    special_bits=55,
    scale_bits=30,
)


def make_prices(closes: Sequence[float], start: date = date(2015, 1, 2)) -> PriceSeries:
    """PriceSeries over consecutive calendar days"""
    dates = [start + timedelta(days=i) for i in range(len(closes))]
    return PriceSeries(dates=dates, closes=list(closes))


def write_price_file(path, rows: List[str], header: str = "date,close") -> None:
    path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")


def orders_agree_away_from_threshold(actual, expected, reference, tau, margin=0.01):
    """Orders match wherever the reference decision is not within margin*tau of +-tau"""
    for got, want, value in zip(actual, expected, reference):
        if abs(abs(value) - tau) <= margin * tau:
            continue
        if got != want:
            return False
    return True


def threshold_in_widest_gap(values: Sequence[float], floor: float = 0.01):
    """Geometric midpoint of the widest ratio gap between decision magnitudes

    Magnitudes below floor times the peak are ignored. Returns (tau, ratio) where
    ratio is how far apart the magnitudes on either side of tau are.
    """
    magnitudes = sorted({abs(v) for v in values})
    magnitudes = [v for v in magnitudes if v >= floor * magnitudes[-1]]
    low, high = max(zip(magnitudes, magnitudes[1:]), key=lambda pair: pair[1] / pair[0])
    return math.sqrt(low * high), high / low
