"""Symmetric-key primitives used by every other layer.

All keys are 16-byte strings (AES-128). The fixed-length PRF is the raw
block cipher; the variable-length PRF is CBC-MAC over the block cipher
with an 8-byte big-endian length prefix, which makes the encoding
prefix-free. Encryption is counter mode with nonces derived from cell
positions, so ciphertexts carry no stored nonce and have the same length
as the plaintext. One-time encryption uses the key itself as a pad for
short messages and zero-nonce counter mode for long ones.

Everything here is a pure function of its inputs and safe to call from
any number of workers; there is no shared mutable state. Preparing an
AES key schedule dominates the cost of small operations, so callers that
reuse a key should hold a BlockCipher; the bytes-keyed module functions
build a fresh schedule per call.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

KEY_LEN = 16
BLOCK_LEN = 16
ZERO_BLOCK = b"\x00" * BLOCK_LEN

# Domain tags keep counter blocks disjoint across the places a single key
# could conceivably be used for more than one encryption.
DOMAIN_PROJECTION_BLOB = 0x01
DOMAIN_PROJECTION_CHECK = 0x02
DOMAIN_SELECTION = 0x03
DOMAIN_CELL = 0x04

_MAX_CTR_BLOCKS = 1 << 24  # 3-byte in-message block counter
_OTE_PREFIX = b"\x00" * 13


class CryptoError(Exception):
    """Malformed input to a primitive (never a wrong-key signal)."""


@dataclass(frozen=True)
class CellPosition:
    """Deterministic nonce source: where in the table an encryption sits.

    Serializes to a fixed 13-byte prefix (tag, partition, row, slot, all
    big-endian); the remaining 3 bytes of the counter block count blocks
    within one message. Partition ids start at 1, so position prefixes
    never collide with the all-zero prefix used by one-time encryption.
    """

    domain: int
    partition: int
    row: int
    slot: int = 0

    def prefix(self) -> bytes:
        return struct.pack(">BIII", self.domain, self.partition, self.row, self.slot)


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise CryptoError("xor_bytes length mismatch")
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


class BlockCipher:
    """AES-128 under one key, with the key schedule prepared once."""

    __slots__ = ("key", "_raw")

    def __init__(self, key: bytes):
        if len(key) != KEY_LEN:
            raise CryptoError(f"key must be {KEY_LEN} bytes, got {len(key)}")
        self.key = key
        # ECB here is the raw block permutation; every mode this module
        # offers (PRF, CBC-MAC, CTR) is built from it explicitly.
        self._raw = Cipher(algorithms.AES(key), modes.ECB()).encryptor().update

    def prf(self, block: bytes) -> bytes:
        if len(block) != BLOCK_LEN:
            raise CryptoError(f"prf input must be {BLOCK_LEN} bytes, got {len(block)}")
        return self._raw(block)

    def prf_many(self, blocks: bytes) -> bytes:
        if len(blocks) % BLOCK_LEN:
            raise CryptoError("prf_many input must be a multiple of 16 bytes")
        return self._raw(blocks)

    def mac(self, data: bytes) -> bytes:
        """CBC-MAC with a length prefix: a PRF over arbitrary-length input."""
        buf = struct.pack(">Q", len(data)) + data
        rem = len(buf) % BLOCK_LEN
        if rem:
            buf += b"\x00" * (BLOCK_LEN - rem)
        raw = self._raw
        state = ZERO_BLOCK
        for off in range(0, len(buf), BLOCK_LEN):
            state = raw(xor_bytes(state, buf[off : off + BLOCK_LEN]))
        return state

    def keystream(self, prefix: bytes, length: int) -> bytes:
        nblocks = -(-length // BLOCK_LEN)
        if nblocks >= _MAX_CTR_BLOCKS:
            raise CryptoError("message too long for the 3-byte block counter")
        if nblocks == 1:
            return self._raw(prefix + b"\x00\x00\x00")[:length]
        blocks = b"".join(prefix + i.to_bytes(3, "big") for i in range(nblocks))
        return self._raw(blocks)[:length]

    def ctr(self, pos: CellPosition, data: bytes) -> bytes:
        """Counter-mode transform (its own inverse) at a cell position."""
        return xor_bytes(data, self.keystream(pos.prefix(), len(data)))

    def ote(self, msg: bytes) -> bytes:
        """One-time transform: pad for short messages, zero-nonce CTR after."""
        if len(msg) <= KEY_LEN:
            return xor_bytes(msg, self.key[: len(msg)])
        return xor_bytes(msg, self.keystream(_OTE_PREFIX, len(msg)))


def prf_block(key: bytes, block: bytes) -> bytes:
    """Fixed-length PRF: AES-128 of one 16-byte block."""
    return BlockCipher(key).prf(block)


def prf_blocks(key: bytes, blocks: bytes) -> bytes:
    """prf_block applied to each 16-byte block of `blocks` in one call."""
    return BlockCipher(key).prf_many(blocks)


def prf_var(key: bytes, data: bytes) -> bytes:
    """Variable-length PRF: CBC-MAC over AES with a length prefix.

    The 8-byte big-endian length prefix makes the padded encoding
    prefix-free, which is what makes CBC-MAC a PRF over arbitrary-length
    inputs. Output is 16 bytes and usable directly as a key.
    """
    return BlockCipher(key).mac(data)


def pack_block(*fields: int) -> bytes:
    """Pack small non-negative integers as big-endian u32s into one block.

    This is how fixed-width PRF inputs (partition and row ids, column and
    predicate indices, counters) are laid out; u32 per field is ample at
    the scale a single deployment handles.
    """
    if len(fields) > 4:
        raise CryptoError("pack_block holds at most four u32 fields")
    out = b"".join(struct.pack(">I", f) for f in fields)
    return out + b"\x00" * (BLOCK_LEN - len(out))


def enc(key: bytes, pos: CellPosition, msg: bytes) -> bytes:
    """Counter-mode encryption with a position-derived nonce.

    The caller must never reuse a (key, position) pair for a different
    message. No expansion: |ciphertext| == |message|.
    """
    return BlockCipher(key).ctr(pos, msg)


def dec(key: bytes, pos: CellPosition, ct: bytes) -> bytes:
    """Inverse of enc. A wrong key yields garbage bytes, not an error."""
    return BlockCipher(key).ctr(pos, ct)


def ote_enc(key: bytes, msg: bytes) -> bytes:
    """One-time encryption; the key must encrypt exactly one message, ever."""
    if len(msg) <= KEY_LEN:
        if len(key) != KEY_LEN:
            raise CryptoError(f"key must be {KEY_LEN} bytes, got {len(key)}")
        return xor_bytes(msg, key[: len(msg)])
    return BlockCipher(key).ote(msg)


def ote_dec(key: bytes, ct: bytes) -> bytes:
    return ote_enc(key, ct)


def secure_concat(parts: list[bytes] | tuple[bytes, ...]) -> bytes:
    """Injective, self-delimiting concatenation.

    Encodes the part count and each part's length as big-endian u32s, so
    distinct lists never collide. Used both as the PRF-input combiner and
    as the value combiner when conjunctions are merged.
    """
    out = [struct.pack(">I", len(parts))]
    for part in parts:
        out.append(struct.pack(">I", len(part)))
        out.append(part)
    return b"".join(out)


def split_concat(data: bytes) -> list[bytes]:
    """Decode secure_concat output; raises CryptoError on malformed input."""
    if len(data) < 4:
        raise CryptoError("truncated concatenation header")
    (count,) = struct.unpack_from(">I", data, 0)
    off = 4
    parts = []
    for _ in range(count):
        if off + 4 > len(data):
            raise CryptoError("truncated part length")
        (plen,) = struct.unpack_from(">I", data, off)
        off += 4
        if off + plen > len(data):
            raise CryptoError("truncated part body")
        parts.append(data[off : off + plen])
        off += plen
    if off != len(data):
        raise CryptoError("trailing bytes after concatenation")
    return parts


def hash_string(data: bytes) -> int:
    """SHA-256 of the input, read as a big-endian 256-bit integer."""
    return int.from_bytes(hashlib.sha256(data).digest(), "big")
