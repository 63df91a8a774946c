"""Aggregator and traders talking over loopback TCP"""

import asyncio
import inspect
import threading

import pytest

from ciphertrend.core.backend import EvaluationBackend
from ciphertrend.errors import ProtocolError, StartupError, TraderConnectError
from ciphertrend.models import Engine, StrategyConfig
from ciphertrend.net import trader as trader_module
from ciphertrend.net.frames import (
    ERROR_PROTOCOL,
    FrameChannel,
    FrameType,
    decode_json,
    encode_json,
)
from ciphertrend.net.server import AggregatorServer
from ciphertrend.net.trader import TraderSummary, TraderWorker, trader_worker
from ciphertrend.pipeline import WARMUP, Pipeline, local_order_log
from ciphertrend.reports import ORDER_LOG_HEADER
from tests.helpers import threshold_in_widest_gap

pytestmark = pytest.mark.integration

LOOPBACK = "127.0.0.1:0"


async def run_session(server, *trader_ids):
    await server.start()
    addr = f"127.0.0.1:{server.port}"
    workers = [trader_worker(addr, tid, connect_attempts=3, backoff=0.05) for tid in trader_ids]
    return await asyncio.gather(server.run(), *workers, return_exceptions=True)


@pytest.fixture
def pinned(small_params, short_prices) -> StrategyConfig:
    """Threshold pinned between decision magnitudes so noise cannot flip an order"""
    defaults = StrategyConfig()
    oracle = Pipeline(small_params, defaults).run_oracle(short_prices)
    first_signal = defaults.min_history - 1 - oracle.offset
    tau, ratio = threshold_in_widest_gap(oracle.o2hat[first_signal:])
    assert ratio > 1.2
    return StrategyConfig(threshold=tau)


class TestLoopback:
    """Full sessions on a single machine"""

    @pytest.mark.asyncio
    @pytest.mark.parametrize("trader_ids", [("alice",), ("alice", "bob")])
    async def test_session_matches_local_orders(
        self, small_params, short_prices, pinned, trader_ids
    ):
        server = AggregatorServer(
            LOOPBACK, short_prices, small_params, pinned, traders=len(trader_ids), seed=5
        )
        entries, *summaries = await run_session(server, *trader_ids)
        assert not isinstance(entries, Exception), entries
        assert all(isinstance(s, TraderSummary) for s in summaries), summaries
        assert server.threshold == pinned.threshold
        assert [e.tick for e in entries] == list(range(len(short_prices)))

        for entry in entries[: pinned.min_history - 1]:
            assert set(entry.votes) == set(trader_ids)
            assert set(entry.votes.values()) == {WARMUP}
            assert entry.final_order == 0
        for entry in entries[pinned.min_history - 1:]:
            assert set(entry.votes) == set(trader_ids)
            assert all(v in ("-1", "0", "1") for v in entry.votes.values())
        assert any(e.final_order != 0 for e in entries)

        local = Pipeline(small_params, pinned, seed=5).run(short_prices, Engine.HE)
        expected = local_order_log(short_prices, local, pinned.threshold, pinned.min_history)
        assert [(e.tick, e.date, e.final_order) for e in entries] == [
            (e.tick, e.date, e.final_order) for e in expected
        ]
        for got, want in zip(entries, expected):
            assert set(got.votes.values()) == {want.votes["local"]}
        for summary in summaries:
            assert summary.quotes == len(short_prices)
            assert summary.warmups == pinned.min_history - 1
            assert summary.signals == len(short_prices) - pinned.min_history + 1

    @pytest.mark.asyncio
    async def test_same_seed_same_order_log(self, small_params, short_prices, pinned):
        logs = []
        for _ in range(2):
            server = AggregatorServer(
                LOOPBACK, short_prices, small_params, pinned, traders=2, seed=11
            )
            entries, *summaries = await run_session(server, "alice", "bob")
            assert all(isinstance(s, TraderSummary) for s in summaries), summaries
            logs.append(entries)
        assert logs[0] == logs[1]
        assert any(e.final_order != 0 for e in logs[0])

    @pytest.mark.asyncio
    async def test_order_log_written_while_streaming(
        self, tmp_path, small_params, short_prices, strategy
    ):
        path = tmp_path / "order_log.csv"
        server = AggregatorServer(
            LOOPBACK, short_prices, small_params, strategy, log_path=path, seed=6
        )
        entries, _ = await run_session(server, "carol")
        lines = path.read_text().splitlines()
        assert lines[0] == "tick,date,trader_votes,final_order"
        assert len(lines) == len(entries) + 1
        assert lines[1] == f"0,{short_prices.date_at(0)},carol:warmup,0"

    @pytest.mark.asyncio
    async def test_cancelled_stream_keeps_partial_log(
        self, tmp_path, small_params, short_prices, strategy
    ):
        path = tmp_path / "order_log.csv"
        server = AggregatorServer(
            LOOPBACK, short_prices, small_params, strategy, log_path=path, seed=12
        )
        await server.start()
        worker = asyncio.create_task(
            trader_worker(f"127.0.0.1:{server.port}", "grace", connect_attempts=3, backoff=0.05)
        )
        streaming = asyncio.create_task(server.run())
        for _ in range(6000):
            if len(server.entries) >= 5 or streaming.done():
                break
            await asyncio.sleep(0.01)
        assert not streaming.done()
        streaming.cancel()
        with pytest.raises(asyncio.CancelledError):
            await streaming
        await asyncio.wait_for(asyncio.gather(worker, return_exceptions=True), 10)

        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(ORDER_LOG_HEADER)
        rows = lines[1:]
        assert 4 <= len(rows) <= len(server.entries) < len(short_prices)
        assert rows[0] == f"0,{short_prices.date_at(0)},grace:warmup,0"
        for tick, row in enumerate(rows):
            fields = row.split(",")
            assert len(fields) == 4
            assert int(fields[0]) == tick
            assert fields[3] in ("-1", "0", "1")

    @pytest.mark.asyncio
    async def test_duplicate_trader_id(self, small_params, short_prices, strategy):
        server = AggregatorServer(
            LOOPBACK, short_prices, small_params, strategy, traders=2, seed=7, startup_timeout=2.0
        )
        entries, first, second = await run_session(server, "dave", "dave")
        assert not isinstance(entries, Exception), entries
        outcomes = [first, second]
        rejected = [o for o in outcomes if isinstance(o, ProtocolError)]
        finished = [o for o in outcomes if isinstance(o, TraderSummary)]
        assert len(rejected) == 1 and len(finished) == 1
        assert rejected[0].code == 2
        assert all(set(e.votes) == {"dave"} for e in entries)


class TestStartup:
    """Failures before any quote is streamed"""

    @pytest.mark.asyncio
    async def test_zero_traders(self, small_params, short_prices):
        server = AggregatorServer(LOOPBACK, short_prices, small_params, traders=0)
        with pytest.raises(StartupError):
            await server.start()

    @pytest.mark.asyncio
    async def test_nobody_connects(self, small_params, short_prices):
        server = AggregatorServer(LOOPBACK, short_prices, small_params, startup_timeout=0.2)
        await server.start()
        with pytest.raises(StartupError):
            await server.run()

    @pytest.mark.asyncio
    async def test_quote_before_hello(self, small_params, short_prices):
        server = AggregatorServer(LOOPBACK, short_prices, small_params, startup_timeout=5.0)
        await server.start()
        try:
            reader, writer = await asyncio.open_connection("127.0.0.1", server.port)
            channel = FrameChannel(reader, writer)
            await channel.send(FrameType.QUOTE, b"\x00" * 8)
            reply = await channel.receive()
            assert reply.type is FrameType.ERROR
            assert decode_json(reply.payload)["code"] == ERROR_PROTOCOL
            await channel.close()
        finally:
            await server.close()
        assert server.sessions == {}

    @pytest.mark.asyncio
    async def test_failed_handshake_revokes_keys(self, small_params, short_prices, monkeypatch):
        server = AggregatorServer(LOOPBACK, short_prices, small_params, startup_timeout=5.0)

        async def broken(channel, keys):
            raise ConnectionError("reset during handshake")

        monkeypatch.setattr(server, "_handshake", broken)
        await server.start()
        try:
            reader, writer = await asyncio.open_connection("127.0.0.1", server.port)
            channel = FrameChannel(reader, writer)
            await channel.send(FrameType.HELLO, encode_json({"trader_id": "heidi"}))
            reply = await channel.receive()
            assert reply.type is FrameType.ERROR
            await channel.close()
        finally:
            await server.close()
        assert "heidi" not in server.keyring
        assert len(server.keyring) == 0
        assert server.sessions == {}

    @pytest.mark.asyncio
    async def test_unreachable_aggregator(self):
        worker = TraderWorker("127.0.0.1:1", "erin", connect_attempts=2, backoff=0.01)
        with pytest.raises(TraderConnectError):
            await worker.run()


class TestTraderBlindness:
    """Traders hold public material only"""

    def test_trader_never_decrypts(self):
        assert "decrypt" not in inspect.getsource(trader_module)

    @pytest.mark.asyncio
    async def test_trader_backend_is_public_only(self, small_params, short_prices, strategy):
        server = AggregatorServer(LOOPBACK, short_prices, small_params, strategy, seed=8)
        await server.start()
        worker = TraderWorker(f"127.0.0.1:{server.port}", "frank", connect_attempts=3)
        await asyncio.gather(server.run(), worker.run())
        assert worker.backend is not None
        assert not worker.backend.can_decrypt

    @pytest.mark.asyncio
    async def test_aggregator_crypto_leaves_event_loop(
        self, small_params, short_prices, strategy, monkeypatch
    ):
        loop_thread = threading.get_ident()
        calls = []
        for name in ("b_encrypt", "b_decrypt"):
            original = getattr(EvaluationBackend, name)

            def recording(self, *args, _original=original, _name=name, **kwargs):
                calls.append((_name, threading.get_ident()))
                return _original(self, *args, **kwargs)

            monkeypatch.setattr(EvaluationBackend, name, recording)
        server = AggregatorServer(LOOPBACK, short_prices, small_params, strategy, seed=9)
        entries, summary = await run_session(server, "ivan")
        assert isinstance(summary, TraderSummary), summary
        assert {name for name, _ in calls} == {"b_encrypt", "b_decrypt"}
        assert all(thread != loop_thread for _, thread in calls)
