"""Aggregator: owns per-trader keys, streams encrypted quotes, merges decisions"""

import asyncio
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import structlog

from ..aggregator import VoteAggregator
from ..core.serialization import serialize_public_key, serialize_relin_key
from ..decision import threshold_orders
from ..errors import CiphertrendError, ProtocolError, StartupError
from ..keyring import KeyRing, TraderKeys
from ..metrics import DECISIONS_TOTAL
from ..models import OrderLogEntry, PriceSeries, SchemeParams, StrategyConfig
from ..pipeline import WARMUP, Pipeline
from ..reports import OrderLogWriter
from .frames import (
    DEFAULT_MAX_PAYLOAD,
    ERROR_DUPLICATE,
    ERROR_PROTOCOL,
    STATUS_WARMUP,
    FrameChannel,
    FrameType,
    decode_json,
    encode_json,
    pack_quote,
    parse_address,
    unpack_decision,
)

logger = structlog.get_logger()

TIMEOUT = "timeout"
INVALID = "invalid"

# decrypted decisions beyond this magnitude mean the noise overwhelmed the value
DECRYPT_BOUND = 1e3


class _Disconnected:
    """Inbox marker: the trader's connection is gone"""

    def __init__(self, reason: str):
        self.reason = reason


@dataclass
class TraderSession:
    keys: TraderKeys
    channel: FrameChannel
    inbox: asyncio.Queue = field(default_factory=asyncio.Queue)
    pump: Optional[asyncio.Task] = None
    active: bool = True
    late: int = 0

    @property
    def trader_id(self) -> str:
        return self.keys.identity.trader_id


class AggregatorServer:
    """Three-party harness host: one key set and one quote stream per trader"""

    def __init__(
        self,
        addr: str,
        prices: PriceSeries,
        params: SchemeParams,
        strategy: Optional[StrategyConfig] = None,
        traders: int = 1,
        log_path: Optional[Union[str, Path]] = None,
        seed: Optional[int] = None,
        startup_timeout: float = 60.0,
        max_payload: int = DEFAULT_MAX_PAYLOAD,
    ):
        self.host, self.requested_port = parse_address(addr)
        self.prices = prices
        self.params = params
        self.strategy = strategy or StrategyConfig()
        self.expected = traders
        self.log_path = Path(log_path) if log_path is not None else None
        self.startup_timeout = startup_timeout
        self.max_payload = max_payload
        self.keyring = KeyRing(params, seed=seed)
        self.votes = VoteAggregator(self.strategy.vote_rule)
        self.sessions: Dict[str, TraderSession] = {}
        self.entries: List[OrderLogEntry] = []
        self.threshold: Optional[float] = self.strategy.threshold
        self._server: Optional[asyncio.AbstractServer] = None
        self._ready = asyncio.Event()
        self._streaming = False
        self.logger = logger.bind(component="aggregator")

    @property
    def port(self) -> int:
        if self._server is None:
            return self.requested_port
        return self._server.sockets[0].getsockname()[1]

    async def start(self) -> None:
        if self.expected < 1:
            raise StartupError("The aggregator needs at least one trader")
        try:
            self._server = await asyncio.start_server(
                self._accept, self.host, self.requested_port
            )
        except OSError as exc:
            raise StartupError(f"Cannot bind {self.host}:{self.requested_port}: {exc}") from exc
        self.logger.info("Aggregator listening", host=self.host, port=self.port)

    async def _accept(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        channel = FrameChannel(reader, writer, self.max_payload)
        try:
            frame = await asyncio.wait_for(channel.receive(), self.startup_timeout)
            if frame is None:
                raise ProtocolError("Trader closed before HELLO")
            if frame.type is not FrameType.HELLO:
                raise ProtocolError(f"Expected HELLO, got {frame.type.name}")
            trader_id = str(decode_json(frame.payload).get("trader_id", "")).strip()
            if not trader_id or len(trader_id) > 64:
                raise ProtocolError("HELLO carries no valid trader_id")
            if self._streaming or len(self.sessions) >= self.expected:
                raise ProtocolError("Aggregator is not accepting traders")
            if trader_id in self.keyring:
                await channel.send_error(ERROR_DUPLICATE, f"Duplicate trader id {trader_id}")
                await channel.close()
                return
            keys = self.keyring.issue(trader_id)
            try:
                await self._handshake(channel, keys)
            except BaseException:
                self.keyring.revoke(trader_id)
                raise
        except (ProtocolError, asyncio.TimeoutError, ConnectionError) as exc:
            self.logger.warning("Trader rejected", error=str(exc))
            await channel.send_error(ERROR_PROTOCOL, str(exc))
            await channel.close()
            return
        session = TraderSession(keys=keys, channel=channel)
        session.pump = asyncio.create_task(self._pump(session))
        self.sessions[trader_id] = session
        self.logger.info("Trader joined", trader_id=trader_id, connected=len(self.sessions))
        if len(self.sessions) >= self.expected:
            self._ready.set()

    async def _handshake(self, channel: FrameChannel, keys: TraderKeys) -> None:
        document = {
            "scheme": self.params.model_dump(mode="json"),
            "strategy": self.strategy.model_dump(mode="json"),
            "fingerprint": keys.identity.fingerprint,
            "trader_id": keys.identity.trader_id,
        }
        await channel.send(FrameType.PARAMS, encode_json(document))
        await channel.send(FrameType.PUBKEY, serialize_public_key(keys.material.public))
        await channel.send(FrameType.RELINKEY, serialize_relin_key(keys.material.relin))

    async def _pump(self, session: TraderSession) -> None:
        """Move a trader's frames into its inbox until the connection ends"""
        channel = session.channel
        try:
            while True:
                frame = await channel.receive()
                if frame is None:
                    await session.inbox.put(_Disconnected("connection closed"))
                    return
                if frame.type is FrameType.DECISION:
                    await session.inbox.put(unpack_decision(frame.payload))
                elif frame.type is FrameType.ERROR:
                    document = decode_json(frame.payload)
                    reason = f"trader error {document.get('code')}: {document.get('message')}"
                    await session.inbox.put(_Disconnected(reason))
                    return
                elif frame.type is FrameType.BYE:
                    await session.inbox.put(_Disconnected("trader said BYE"))
                    return
                else:
                    raise ProtocolError(f"Unexpected {frame.type.name} frame from trader")
        except ProtocolError as exc:
            await channel.send_error(ERROR_PROTOCOL, str(exc))
            await channel.close()
            await session.inbox.put(_Disconnected(str(exc)))
        except (ConnectionError, OSError) as exc:
            await session.inbox.put(_Disconnected(str(exc)))

    async def wait_for_traders(self) -> None:
        try:
            await asyncio.wait_for(self._ready.wait(), self.startup_timeout)
        except asyncio.TimeoutError:
            if not self.sessions:
                raise StartupError(
                    f"No trader connected within {self.startup_timeout:g} s"
                ) from None
            self.logger.warning(
                "Streaming with fewer traders than expected",
                connected=len(self.sessions),
                expected=self.expected,
            )

    def _resolve_threshold(self) -> float:
        if self.threshold is None:
            pipeline = Pipeline(self.params, self.strategy)
            self.threshold = pipeline.threshold_for(pipeline.run_oracle(self.prices))
            self.logger.info("Threshold calibrated", threshold=self.threshold)
        return self.threshold

    def _drop(self, session: TraderSession, reason: str) -> None:
        if session.active:
            session.active = False
            DECISIONS_TOTAL.labels(outcome="dropped").inc()
            self.logger.warning("Trader excluded", trader_id=session.trader_id, reason=reason)

    async def _send_quote(self, session: TraderSession, tick: int, quote: float) -> None:
        backend = session.keys.backend
        handle = await asyncio.to_thread(backend.b_encrypt, quote)
        await session.channel.send(FrameType.QUOTE, pack_quote(tick, backend.export_handle(handle)))
        backend.reset_trace()

    async def _await_decision(
        self, session: TraderSession, tick: int, deadline: float
    ) -> Tuple[Optional[str], Optional[int]]:
        loop = asyncio.get_running_loop()
        while True:
            remaining = deadline - loop.time()
            try:
                item = await asyncio.wait_for(session.inbox.get(), max(remaining, 0.0))
            except asyncio.TimeoutError:
                DECISIONS_TOTAL.labels(outcome="timeout").inc()
                self.logger.warning("Decision timed out", trader_id=session.trader_id, tick=tick)
                return TIMEOUT, None
            if isinstance(item, _Disconnected):
                self._drop(session, item.reason)
                return None, None
            got, status, body = item
            if got < tick:
                session.late += 1
                DECISIONS_TOTAL.labels(outcome="late").inc()
                continue
            if got > tick:
                self._drop(session, f"decision for future tick {got}")
                await session.channel.close()
                return None, None
            if status == STATUS_WARMUP:
                DECISIONS_TOTAL.labels(outcome="warmup").inc()
                return WARMUP, None
            return await self._open_decision(session, tick, body)

    async def _open_decision(
        self, session: TraderSession, tick: int, body: bytes
    ) -> Tuple[Optional[str], Optional[int]]:
        backend = session.keys.backend
        try:
            value = await asyncio.to_thread(backend.b_decrypt, backend.import_handle(body))
        except CiphertrendError as exc:
            self._drop(session, f"undecodable decision: {exc}")
            return None, None
        finally:
            backend.reset_trace()
        if not math.isfinite(value) or abs(value) > DECRYPT_BOUND:
            DECISIONS_TOTAL.labels(outcome="invalid").inc()
            self.logger.warning(
                "Decision failed to decode cleanly", trader_id=session.trader_id, tick=tick
            )
            return INVALID, None
        order = threshold_orders([value], self.threshold)[0]
        DECISIONS_TOTAL.labels(outcome="signal").inc()
        return str(order), order

    async def _tick(self, tick: int, quote: float) -> OrderLogEntry:
        active = [s for s in self.sessions.values() if s.active]
        if not active:
            raise ProtocolError("Every trader has left the session")
        sent = await asyncio.gather(
            *(self._send_quote(s, tick, quote) for s in active), return_exceptions=True
        )
        receiving = []
        for session, outcome in zip(active, sent):
            if isinstance(outcome, Exception):
                self._drop(session, f"send failed: {outcome}")
            else:
                receiving.append(session)

        deadline = asyncio.get_running_loop().time() + self.strategy.tick_timeout
        answers = await asyncio.gather(
            *(self._await_decision(s, tick, deadline) for s in receiving)
        )
        labels: Dict[str, str] = {}
        ballots: Dict[str, Optional[int]] = {}
        for session, (label, vote) in zip(receiving, answers):
            if label is None:
                continue
            labels[session.trader_id] = label
            ballots[session.trader_id] = vote
        final = self.votes.combine(ballots)
        return OrderLogEntry(
            tick=tick, date=self.prices.date_at(tick), votes=labels, final_order=final
        )

    async def stream(self) -> List[OrderLogEntry]:
        """Send every quote, collect one vote round per tick, return the order log"""
        self._resolve_threshold()
        self._streaming = True
        quotes = self.prices.normalized(self.strategy.normalization)
        writer = OrderLogWriter(self.log_path) if self.log_path is not None else None
        if writer is not None:
            await writer.open()
        try:
            for tick, quote in enumerate(quotes):
                entry = await self._tick(tick, quote)
                self.entries.append(entry)
                if writer is not None:
                    await writer.append(entry)
                self.logger.debug("Tick closed", tick=tick, final_order=entry.final_order)
        finally:
            if writer is not None:
                await writer.close()
        self.logger.info(
            "Stream finished",
            ticks=len(self.entries),
            traders=[i.trader_id for i in self.keyring.identities()],
        )
        return self.entries

    async def close(self) -> None:
        for session in self.sessions.values():
            if session.active:
                try:
                    await session.channel.send(FrameType.BYE)
                except (ConnectionError, OSError):
                    pass
            await session.channel.close()
            if session.pump is not None:
                session.pump.cancel()
        pumps = [s.pump for s in self.sessions.values() if s.pump is not None]
        await asyncio.gather(*pumps, return_exceptions=True)
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None

    async def run(self) -> List[OrderLogEntry]:
        try:
            await self.wait_for_traders()
            return await self.stream()
        finally:
            await self.close()


async def serve_aggregator(
    addr: str,
    prices: PriceSeries,
    params: SchemeParams,
    strategy: Optional[StrategyConfig] = None,
    **kwargs,
) -> List[OrderLogEntry]:
    """Bind, wait for traders, stream the whole series and return the order log"""
    server = AggregatorServer(addr, prices, params, strategy, **kwargs)
    await server.start()
    return await server.run()
