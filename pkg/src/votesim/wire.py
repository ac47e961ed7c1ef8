"""Canonical byte encodings shared by the simulator and the protocols.

Everything that is hashed, digested or compared byte-for-byte goes through
this module so that traces stay identical across runs and platforms.
"""

import hashlib
import json
from typing import Any

DIGEST_BITS = 256


def dumps(obj: Any) -> bytes:
    """Encode a JSON-compatible message payload to canonical bytes.

    Keys are sorted and separators fixed, so equal values always produce
    equal bytes.
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def loads(data: bytes) -> Any:
    return json.loads(data.decode())


def digest(data: bytes) -> str:
    """Lowercase hex SHA-256 of raw payload bytes."""
    return hashlib.sha256(data).hexdigest()


def ser_ints(*values: int) -> bytes:
    """Length-prefixed big-endian integer serialization.

    Each value is encoded as a 4-byte big-endian length followed by the
    minimal big-endian byte representation. Used wherever bit-exact bytes
    gate validity (ciphertexts, proofs, tokens, block hashing).
    """
    out = bytearray()
    for v in values:
        if v < 0:
            raise ValueError("ser_ints encodes non-negative integers only")
        body = v.to_bytes((v.bit_length() + 7) // 8 or 1, "big")
        out += len(body).to_bytes(4, "big")
        out += body
    return bytes(out)


def derive_seed(master: int, *labels: object) -> int:
    """Derive an independent 63-bit seed from a master seed and labels."""
    tag = "|".join([str(master)] + [str(x) for x in labels]).encode()
    return int.from_bytes(hashlib.sha256(tag).digest()[:8], "big") >> 1
