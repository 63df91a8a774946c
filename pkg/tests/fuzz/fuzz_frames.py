#!/usr/bin/env python3
"""
LibFuzzer harness for the frame decoder and the payload parsers behind it.

Feed raw bytes. A buffer that decodes as a frame must re-encode to itself;
its payload is then handed to the parser for its frame type. Only
ProtocolError (FrameError included) may escape the library.

Write the seed corpus, then fuzz:
    python tests/fuzz/fuzz_frames.py --write-corpus tests/fuzz/corpus/frames/
    python tests/fuzz/fuzz_frames.py tests/fuzz/corpus/frames/ -max_len=512
"""

import contextlib
import hashlib
import sys
from fractions import Fraction
from pathlib import Path
from typing import List

import numpy as np

try:
    import atheris
except ImportError:
    atheris = None

with atheris.instrument_imports() if atheris else contextlib.nullcontext():
    from ciphertrend.core.scheme import Ciphertext
    from ciphertrend.core.serialization import deserialize_ciphertext, serialize_ciphertext
    from ciphertrend.errors import FrameError, ProtocolError
    from ciphertrend.net.frames import (
        HEADER,
        STATUS_SIGNAL,
        STATUS_WARMUP,
        Frame,
        FrameType,
        decode_json,
        deserialize_frame,
        encode_json,
        pack_decision,
        pack_quote,
        serialize_frame,
        unpack_decision,
        unpack_quote,
    )

MAX_PAYLOAD = 4096

JSON_FRAMES = (FrameType.HELLO, FrameType.PARAMS, FrameType.ERROR)


def parse_payload(frame: Frame) -> None:
    if frame.type is FrameType.QUOTE:
        _, body = unpack_quote(frame.payload)
        deserialize_ciphertext(body)
    elif frame.type is FrameType.DECISION:
        _, status, body = unpack_decision(frame.payload)
        if status == STATUS_SIGNAL:
            deserialize_ciphertext(body)
    elif frame.type in JSON_FRAMES:
        decode_json(frame.payload)


def test_one_input(data: bytes) -> None:
    """Single fuzz iteration over one candidate frame"""
    try:
        frame = deserialize_frame(data, max_payload=MAX_PAYLOAD)
    except FrameError:
        return
    if serialize_frame(frame, MAX_PAYLOAD) != bytes(data):
        raise AssertionError(f"{frame.type.name} frame does not re-encode to its input")
    try:
        parse_payload(frame)
    except ProtocolError:
        pass


def _tiny_ciphertext() -> bytes:
    components = np.arange(2 * 4, dtype=np.uint64).reshape(2, 1, 4)
    return serialize_ciphertext(Ciphertext(components, 0, Fraction(2 ** 20)))


def seed_corpus() -> List[bytes]:
    """One well-formed frame per type plus the header edge cases"""
    ct = _tiny_ciphertext()
    frames = [
        Frame(FrameType.HELLO, 1, encode_json({"trader_id": "alice", "version": 1})),
        Frame(FrameType.PUBKEY, 2, b"CTRK"),
        Frame(FrameType.RELINKEY, 3, b"CTRK"),
        Frame(FrameType.PARAMS, 4, encode_json({"ring_degree": 4, "min_history": 45})),
        Frame(FrameType.QUOTE, 5, pack_quote(44, ct)),
        Frame(FrameType.DECISION, 6, pack_decision(44, STATUS_SIGNAL, ct)),
        Frame(FrameType.DECISION, 7, pack_decision(0, STATUS_WARMUP)),
        Frame(FrameType.BYE, 8),
        Frame(FrameType.ERROR, 9, encode_json({"code": 1, "message": "bad"})),
    ]
    seeds = [serialize_frame(frame) for frame in frames]
    seeds.append(HEADER.pack(MAX_PAYLOAD + 1, int(FrameType.QUOTE), 1))
    seeds.append(HEADER.pack(0, 0, 2 ** 64 - 1))
    return seeds


def write_corpus(directory: Path) -> int:
    directory.mkdir(parents=True, exist_ok=True)
    seeds = seed_corpus()
    for seed in seeds:
        (directory / hashlib.sha1(seed).hexdigest()).write_bytes(seed)
    return len(seeds)


def main() -> None:
    if len(sys.argv) == 3 and sys.argv[1] == "--write-corpus":
        print(f"wrote {write_corpus(Path(sys.argv[2]))} seeds")
        return
    if atheris is None:
        print("Install atheris: pip install -e '.[fuzz]'")
        sys.exit(1)
    atheris.Setup(sys.argv, test_one_input)
    atheris.Fuzz()


if __name__ == "__main__":
    main()
