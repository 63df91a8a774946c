"""Aggregator and trader roles over length-prefixed frames"""

from .frames import Frame, FrameType, deserialize_frame, serialize_frame
from .server import AggregatorServer, serve_aggregator
from .trader import TraderWorker, trader_worker

__all__ = [
    "AggregatorServer",
    "Frame",
    "FrameType",
    "TraderWorker",
    "deserialize_frame",
    "serialize_frame",
    "serve_aggregator",
    "trader_worker",
]
