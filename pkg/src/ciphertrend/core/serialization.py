"""Binary encoding of ciphertexts and public key material

Layout is frozen and documented in docs/wire-format.md. Multi-byte header
fields are big-endian; residue arrays are little-endian uint64.
"""

import struct
from fractions import Fraction
from typing import Optional, Tuple

import numpy as np

from ..errors import ProtocolError
from ..models import SchemeParams
from .scheme import Ciphertext, PublicKey, RelinKey

CIPHERTEXT_MAGIC = b"CTRC"
KEY_MAGIC = b"CTRK"
FORMAT_VERSION = 1

KEY_PUBLIC = 1
KEY_RELIN = 2

_CT_HEADER = struct.Struct(">4sBBBI")
_KEY_HEADER = struct.Struct(">4sBBIHH")
_LEN = struct.Struct(">H")
_WORD = np.dtype("<u8")


def _int_bytes(value: int) -> bytes:
    raw = value.to_bytes(max(1, (value.bit_length() + 7) // 8), "big")
    return _LEN.pack(len(raw)) + raw


def _read_int(buf: bytes, offset: int) -> Tuple[int, int]:
    if offset + _LEN.size > len(buf):
        raise ProtocolError("Truncated integer field")
    (length,) = _LEN.unpack_from(buf, offset)
    offset += _LEN.size
    if length == 0 or offset + length > len(buf):
        raise ProtocolError("Truncated integer field")
    return int.from_bytes(buf[offset:offset + length], "big"), offset + length


def _read_words(buf: bytes, offset: int, shape: Tuple[int, ...]) -> Tuple[np.ndarray, int]:
    count = int(np.prod(shape))
    end = offset + count * _WORD.itemsize
    if end > len(buf):
        raise ProtocolError("Truncated residue array")
    array = np.frombuffer(buf, dtype=_WORD, count=count, offset=offset)
    return array.astype(np.uint64).reshape(shape), end


def _check_residues(array: np.ndarray, moduli) -> None:
    bound = np.array([[q] for q in moduli], dtype=np.uint64)
    if np.any(array >= bound):
        raise ProtocolError("Residue not reduced modulo its prime")


def serialize_ciphertext(ct: Ciphertext) -> bytes:
    if ct.scale <= 0:
        raise ProtocolError("Ciphertext scale must be positive")
    header = _CT_HEADER.pack(CIPHERTEXT_MAGIC, FORMAT_VERSION, ct.size, ct.level, ct.degree)
    body = np.ascontiguousarray(ct.components, dtype=_WORD).tobytes()
    return header + _int_bytes(ct.scale.numerator) + _int_bytes(ct.scale.denominator) + body


def deserialize_ciphertext(buf: bytes, params: Optional[SchemeParams] = None) -> Ciphertext:
    if len(buf) < _CT_HEADER.size:
        raise ProtocolError("Truncated ciphertext header")
    magic, version, size, level, degree = _CT_HEADER.unpack_from(buf, 0)
    if magic != CIPHERTEXT_MAGIC:
        raise ProtocolError("Bad ciphertext magic")
    if version != FORMAT_VERSION:
        raise ProtocolError(f"Unsupported ciphertext version {version}")
    if size not in (2, 3):
        raise ProtocolError(f"Invalid component count {size}")
    if degree < 2 or degree & (degree - 1):
        raise ProtocolError(f"Invalid ring degree {degree}")
    if params is not None:
        if degree != params.ring_degree or level > len(params.moduli) - 1:
            raise ProtocolError("Ciphertext does not match scheme parameters")
    numerator, offset = _read_int(buf, _CT_HEADER.size)
    denominator, offset = _read_int(buf, offset)
    if numerator == 0 or denominator == 0:
        raise ProtocolError("Ciphertext scale must be positive")
    comps, end = _read_words(buf, offset, (size, level + 1, degree))
    if end != len(buf):
        raise ProtocolError("Trailing bytes after ciphertext")
    if params is not None:
        _check_residues(comps, params.moduli[: level + 1])
    comps.setflags(write=False)
    return Ciphertext(comps, level, Fraction(numerator, denominator))


def _serialize_key(kind: int, b: np.ndarray, a: np.ndarray) -> bytes:
    digits = b.shape[0] if b.ndim == 3 else 0
    rows, degree = b.shape[-2], b.shape[-1]
    header = _KEY_HEADER.pack(KEY_MAGIC, FORMAT_VERSION, kind, degree, digits, rows)
    data = np.ascontiguousarray(np.stack((b, a)), dtype=_WORD).tobytes()
    return header + data


def _deserialize_key(buf: bytes, kind: int, params: Optional[SchemeParams]):
    if len(buf) < _KEY_HEADER.size:
        raise ProtocolError("Truncated key header")
    magic, version, got_kind, degree, digits, rows = _KEY_HEADER.unpack_from(buf, 0)
    if magic != KEY_MAGIC or version != FORMAT_VERSION:
        raise ProtocolError("Bad key header")
    if got_kind != kind:
        raise ProtocolError(f"Expected key kind {kind}, got {got_kind}")
    if degree < 2 or degree & (degree - 1) or rows == 0:
        raise ProtocolError("Invalid key dimensions")
    shape = (2, rows, degree) if digits == 0 else (2, digits, rows, degree)
    data, end = _read_words(buf, _KEY_HEADER.size, shape)
    if end != len(buf):
        raise ProtocolError("Trailing bytes after key")
    if params is not None and degree != params.ring_degree:
        raise ProtocolError("Key does not match scheme parameters")
    data.setflags(write=False)
    return data[0], data[1]


def serialize_public_key(pk: PublicKey) -> bytes:
    return _serialize_key(KEY_PUBLIC, pk.b, pk.a)


def deserialize_public_key(buf: bytes, params: Optional[SchemeParams] = None) -> PublicKey:
    b, a = _deserialize_key(buf, KEY_PUBLIC, params)
    if params is not None:
        if b.shape[0] != len(params.moduli):
            raise ProtocolError("Public key does not cover the modulus chain")
        _check_residues(b, params.moduli)
        _check_residues(a, params.moduli)
    return PublicKey(b=b, a=a)


def serialize_relin_key(rlk: RelinKey) -> bytes:
    return _serialize_key(KEY_RELIN, rlk.b, rlk.a)


def deserialize_relin_key(buf: bytes, params: Optional[SchemeParams] = None) -> RelinKey:
    b, a = _deserialize_key(buf, KEY_RELIN, params)
    if b.ndim != 3:
        raise ProtocolError("Relinearization key needs a digit axis")
    if params is not None:
        primes = tuple(params.moduli) + (params.special_modulus,)
        if b.shape[0] != len(params.moduli) or b.shape[1] != len(primes):
            raise ProtocolError("Relinearization key does not match scheme parameters")
        _check_residues(b, primes)
        _check_residues(a, primes)
    return RelinKey(b=b, a=a)
