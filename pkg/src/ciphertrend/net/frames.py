"""Length-prefixed frames exchanged between aggregator and traders

Header: u32 big-endian payload length, u8 type tag, u64 big-endian
sequence number, followed by exactly `length` payload bytes.
"""

import asyncio
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Dict, Optional, Tuple

import orjson
import structlog

from ..errors import FrameError, FrameTooLargeError, ProtocolError
from ..metrics import FRAMES_TOTAL

logger = structlog.get_logger()

HEADER = struct.Struct(">IBQ")
HEADER_SIZE = HEADER.size
DEFAULT_MAX_PAYLOAD = 64 * 1024 * 1024

TICK = struct.Struct(">Q")
DECISION_HEAD = struct.Struct(">QB")

STATUS_SIGNAL = 0
STATUS_WARMUP = 1

# codes carried in ERROR payloads
ERROR_PROTOCOL = 1
ERROR_DUPLICATE = 2
ERROR_DEPTH = 3
ERROR_INTERNAL = 4


class FrameType(IntEnum):
    HELLO = 1
    PUBKEY = 2
    RELINKEY = 3
    PARAMS = 4
    QUOTE = 5
    DECISION = 6
    BYE = 7
    ERROR = 8


@dataclass(frozen=True)
class Frame:
    type: FrameType
    seq: int
    payload: bytes = b""


def serialize_frame(frame: Frame, max_payload: int = DEFAULT_MAX_PAYLOAD) -> bytes:
    if len(frame.payload) > max_payload:
        raise FrameTooLargeError(f"Payload of {len(frame.payload)} bytes exceeds {max_payload}")
    if not 0 <= frame.seq < 2 ** 64:
        raise FrameError(f"Sequence number out of range: {frame.seq}")
    return HEADER.pack(len(frame.payload), int(frame.type), frame.seq) + frame.payload


def parse_header(
    header: bytes, max_payload: int = DEFAULT_MAX_PAYLOAD
) -> Tuple[int, FrameType, int]:
    if len(header) != HEADER_SIZE:
        raise FrameError(f"Truncated header: {len(header)} of {HEADER_SIZE} bytes")
    length, tag, seq = HEADER.unpack(header)
    try:
        frame_type = FrameType(tag)
    except ValueError:
        raise FrameError(f"Unknown frame tag {tag}") from None
    if length > max_payload:
        raise FrameTooLargeError(f"Declared payload of {length} bytes exceeds {max_payload}")
    return length, frame_type, seq


def deserialize_frame(buf: bytes, max_payload: int = DEFAULT_MAX_PAYLOAD) -> Frame:
    """Decode exactly one frame; any mismatch raises a FrameError"""
    buf = bytes(buf)
    length, frame_type, seq = parse_header(buf[:HEADER_SIZE], max_payload)
    body = buf[HEADER_SIZE:]
    if len(body) < length:
        raise FrameError(f"Truncated payload: {len(body)} of {length} bytes")
    if len(body) > length:
        raise FrameError(f"{len(body) - length} trailing bytes after frame")
    return Frame(frame_type, seq, body)


async def read_frame(
    reader: asyncio.StreamReader, max_payload: int = DEFAULT_MAX_PAYLOAD
) -> Optional[Frame]:
    """Next frame from the stream, or None on a clean end of stream"""
    try:
        header = await reader.readexactly(HEADER_SIZE)
    except asyncio.IncompleteReadError as exc:
        if not exc.partial:
            return None
        raise FrameError("Connection closed inside a frame header") from None
    length, frame_type, seq = parse_header(header, max_payload)
    try:
        payload = await reader.readexactly(length)
    except asyncio.IncompleteReadError:
        raise FrameError("Connection closed inside a frame payload") from None
    FRAMES_TOTAL.labels(direction="in", frame_type=frame_type.name).inc()
    return Frame(frame_type, seq, payload)


class FrameChannel:
    """One side of a connection: numbers outgoing frames, checks incoming order"""

    def __init__(
        self,
        reader: asyncio.StreamReader,
        writer: asyncio.StreamWriter,
        max_payload: int = DEFAULT_MAX_PAYLOAD,
    ):
        self.reader = reader
        self.writer = writer
        self.max_payload = max_payload
        self._next_seq = 1
        self._last_seen = 0

    async def send(self, frame_type: FrameType, payload: bytes = b"") -> None:
        frame = Frame(frame_type, self._next_seq, payload)
        self.writer.write(serialize_frame(frame, self.max_payload))
        self._next_seq += 1
        await self.writer.drain()
        FRAMES_TOTAL.labels(direction="out", frame_type=frame_type.name).inc()

    async def receive(self) -> Optional[Frame]:
        frame = await read_frame(self.reader, self.max_payload)
        if frame is None:
            return None
        if frame.seq <= self._last_seen:
            raise ProtocolError(
                f"Sequence number {frame.seq} does not follow {self._last_seen}"
            )
        self._last_seen = frame.seq
        return frame

    async def send_error(self, code: int, message: str) -> None:
        try:
            await self.send(FrameType.ERROR, encode_json({"code": code, "message": message}))
        except (ConnectionError, OSError):
            pass

    async def close(self) -> None:
        if self.writer.is_closing():
            return
        self.writer.close()
        try:
            await self.writer.wait_closed()
        except (ConnectionError, OSError):
            pass


def encode_json(document: Dict[str, Any]) -> bytes:
    return orjson.dumps(document, option=orjson.OPT_SORT_KEYS)


def decode_json(payload: bytes) -> Dict[str, Any]:
    try:
        document = orjson.loads(payload)
    except orjson.JSONDecodeError as exc:
        raise ProtocolError(f"Malformed control payload: {exc}") from exc
    if not isinstance(document, dict):
        raise ProtocolError("Control payload must be a JSON object")
    return document


def pack_quote(tick: int, ciphertext: bytes) -> bytes:
    return TICK.pack(tick) + ciphertext


def unpack_quote(payload: bytes) -> Tuple[int, bytes]:
    if len(payload) < TICK.size:
        raise ProtocolError("QUOTE payload shorter than its tick field")
    (tick,) = TICK.unpack_from(payload)
    return tick, payload[TICK.size:]


def pack_decision(tick: int, status: int, ciphertext: bytes = b"") -> bytes:
    return DECISION_HEAD.pack(tick, status) + ciphertext


def unpack_decision(payload: bytes) -> Tuple[int, int, bytes]:
    if len(payload) < DECISION_HEAD.size:
        raise ProtocolError("DECISION payload shorter than its header")
    tick, status = DECISION_HEAD.unpack_from(payload)
    body = payload[DECISION_HEAD.size:]
    if status == STATUS_WARMUP:
        if body:
            raise ProtocolError("Warm-up DECISION must not carry a ciphertext")
    elif status == STATUS_SIGNAL:
        if not body:
            raise ProtocolError("DECISION carries no ciphertext")
    else:
        raise ProtocolError(f"Unknown DECISION status {status}")
    return tick, status, body


def parse_address(addr: str) -> Tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise ProtocolError(f"Address must be host:port, got {addr!r}")
    return host, int(port)
