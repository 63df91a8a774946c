"""Trader worker: computes decisions blind, holding only public evaluation keys"""

import asyncio
from dataclasses import dataclass
from typing import Optional

import structlog
from pydantic import ValidationError
from tenacity import AsyncRetrying, RetryError, retry_if_exception_type, stop_after_attempt
from tenacity import wait_exponential

from .._version import __version__
from ..backends.he import HEBackend
from ..core.backend import CipherHandle
from ..core.scheme import PublicKeySet
from ..core.serialization import deserialize_public_key, deserialize_relin_key
from ..decision import DEFAULT_RELU, ReluPoly, decision_step
from ..errors import CiphertrendError, DepthExhaustedError, ProtocolError, TraderConnectError
from ..indicators import MacdStream
from ..keyring import fingerprint
from ..models import SchemeParams, StrategyConfig
from .frames import (
    DEFAULT_MAX_PAYLOAD,
    ERROR_DEPTH,
    ERROR_INTERNAL,
    ERROR_PROTOCOL,
    STATUS_SIGNAL,
    STATUS_WARMUP,
    FrameChannel,
    FrameType,
    decode_json,
    encode_json,
    pack_decision,
    parse_address,
    unpack_quote,
)

logger = structlog.get_logger()


@dataclass
class TraderSummary:
    trader_id: str
    quotes: int = 0
    signals: int = 0
    warmups: int = 0


class TraderWorker:
    """Connects to the aggregator and answers every QUOTE with a DECISION"""

    def __init__(
        self,
        addr: str,
        trader_id: str,
        poly: ReluPoly = DEFAULT_RELU,
        connect_attempts: int = 5,
        backoff: float = 0.2,
        max_payload: int = DEFAULT_MAX_PAYLOAD,
    ):
        self.host, self.port = parse_address(addr)
        self.trader_id = trader_id
        self.poly = poly
        self.connect_attempts = connect_attempts
        self.backoff = backoff
        self.max_payload = max_payload
        self.summary = TraderSummary(trader_id)
        self.params: Optional[SchemeParams] = None
        self.strategy: Optional[StrategyConfig] = None
        self.backend: Optional[HEBackend] = None
        self._expected_fingerprint: Optional[str] = None
        self._public = None
        self._relin = None
        self._stream: Optional[MacdStream] = None
        self.logger = logger.bind(component="trader", trader_id=trader_id)

    async def connect(self) -> FrameChannel:
        try:
            async for attempt in AsyncRetrying(
                stop=stop_after_attempt(self.connect_attempts),
                wait=wait_exponential(multiplier=self.backoff, max=5),
                retry=retry_if_exception_type(OSError),
                reraise=False,
            ):
                with attempt:
                    reader, writer = await asyncio.open_connection(self.host, self.port)
        except RetryError as exc:
            raise TraderConnectError(
                f"Cannot reach aggregator at {self.host}:{self.port} after "
                f"{self.connect_attempts} attempts: {exc.last_attempt.exception()}"
            ) from exc
        self.logger.info("Connected to aggregator", host=self.host, port=self.port)
        return FrameChannel(reader, writer, self.max_payload)

    async def run(self) -> TraderSummary:
        channel = await self.connect()
        try:
            await channel.send(
                FrameType.HELLO, encode_json({"trader_id": self.trader_id, "version": __version__})
            )
            await self._serve(channel)
        except DepthExhaustedError as exc:
            await channel.send_error(ERROR_DEPTH, str(exc))
            raise
        except ProtocolError as exc:
            await channel.send_error(ERROR_PROTOCOL, str(exc))
            raise
        except CiphertrendError as exc:
            await channel.send_error(ERROR_INTERNAL, str(exc))
            raise
        finally:
            await channel.close()
        self.logger.info(
            "Trader finished",
            quotes=self.summary.quotes,
            signals=self.summary.signals,
            warmups=self.summary.warmups,
        )
        return self.summary

    async def _serve(self, channel: FrameChannel) -> None:
        while True:
            frame = await channel.receive()
            if frame is None:
                raise ProtocolError("Aggregator closed the connection without BYE")
            if frame.type is FrameType.BYE:
                return
            if frame.type is FrameType.PARAMS:
                self._on_params(frame.payload)
            elif frame.type is FrameType.PUBKEY:
                self._public = deserialize_public_key(frame.payload, self._require_params())
                if fingerprint(self._public) != self._expected_fingerprint:
                    raise ProtocolError("Public key does not match the announced fingerprint")
            elif frame.type is FrameType.RELINKEY:
                self._relin = deserialize_relin_key(frame.payload, self._require_params())
            elif frame.type is FrameType.QUOTE:
                await self._on_quote(channel, frame.payload)
            elif frame.type is FrameType.ERROR:
                document = decode_json(frame.payload)
                raise ProtocolError(
                    f"Aggregator error: {document.get('message', '')}",
                    code=int(document.get("code", ERROR_PROTOCOL)),
                )
            else:
                raise ProtocolError(f"Unexpected {frame.type.name} frame")

    def _require_params(self) -> SchemeParams:
        if self.params is None:
            raise ProtocolError("Key frame before PARAMS")
        return self.params

    def _on_params(self, payload: bytes) -> None:
        if self.params is not None:
            raise ProtocolError("PARAMS sent twice")
        document = decode_json(payload)
        try:
            self.params = SchemeParams(**document["scheme"])
            self.strategy = StrategyConfig(**document["strategy"])
            self._expected_fingerprint = str(document["fingerprint"])
        except (KeyError, TypeError, ValidationError) as exc:
            raise ProtocolError(f"Invalid PARAMS payload: {exc}") from exc
        self.logger.info(
            "Parameters received",
            ring_degree=self.params.ring_degree,
            fingerprint=self._expected_fingerprint[:16],
        )

    def _ensure_backend(self) -> HEBackend:
        if self.backend is None:
            if self.params is None or self._public is None or self._relin is None:
                raise ProtocolError("QUOTE before PARAMS, PUBKEY and RELINKEY")
            keys = PublicKeySet(public=self._public, relin=self._relin)
            self.backend = HEBackend(self.params, keys=keys)
            self._stream = MacdStream.for_backend(self.backend, self.strategy.windows)
        return self.backend

    async def _on_quote(self, channel: FrameChannel, payload: bytes) -> None:
        backend = self._ensure_backend()
        tick, body = unpack_quote(payload)
        if tick != self.summary.quotes:
            raise ProtocolError(f"Expected quote for tick {self.summary.quotes}, got {tick}")
        quote = backend.import_handle(body)
        self.summary.quotes += 1
        value = await asyncio.to_thread(self._step, quote)
        if value is None:
            self.summary.warmups += 1
            await channel.send(FrameType.DECISION, pack_decision(tick, STATUS_WARMUP))
            return
        self.summary.signals += 1
        await channel.send(
            FrameType.DECISION, pack_decision(tick, STATUS_SIGNAL, backend.export_handle(value))
        )
        self.logger.debug("Decision sent", tick=tick)

    def _step(self, quote: CipherHandle) -> Optional[CipherHandle]:
        """Advance the MACD stream; a decision once enough quotes are held"""
        stream = self._stream
        latest = stream.push(quote)
        value = None
        if latest is not None and self.summary.quotes >= self.strategy.min_history:
            if len(stream.m) >= 2:
                value = decision_step(stream.ops, stream.m[-2], stream.m[-1], self.poly)
            else:
                value = stream.ops.zero_like(latest)
        stream.trim()
        self.backend.reset_trace()
        return value


async def trader_worker(addr: str, trader_id: str, **kwargs) -> TraderSummary:
    """Run one trader until the aggregator says BYE"""
    return await TraderWorker(addr, trader_id, **kwargs).run()
