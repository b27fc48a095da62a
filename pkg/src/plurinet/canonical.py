"""Canonical JSON serialization shared by every signed record in the system.

One bit-exact wire form: UTF-8 JSON, object keys sorted bytewise ascending,
no insignificant whitespace, integers in minimal decimal form, hex strings
lowercase, absent optional fields omitted entirely. Signatures are computed
over the canonical bytes of a record with its ``signature`` key absent.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

ZERO_HASH = "0" * 64


class CanonicalError(ValueError):
    """Raised for values that have no canonical JSON form."""


def _check(value: Any) -> None:
    if value is None or isinstance(value, (str, bool, int)):
        return
    if isinstance(value, float):
        raise CanonicalError("floats have no canonical form; use integers")
    if isinstance(value, (list, tuple)):
        for item in value:
            _check(item)
        return
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise CanonicalError(f"non-string object key: {key!r}")
            _check(item)
        return
    raise CanonicalError(f"unsupported type for canonical JSON: {type(value).__name__}")


def canonical_json_bytes(value: Any) -> bytes:
    """Serialize a record to its canonical byte form."""
    _check(value)
    return json.dumps(
        value, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def parse_canonical(data: bytes) -> Any:
    return json.loads(data.decode("utf-8"))


def stable_json_bytes(value: Any) -> bytes:
    """Canonical formatting (sorted keys, no whitespace) without the integer
    restriction — for computed API/CLI output that may carry floats. Signed
    records always go through canonical_json_bytes instead."""
    return json.dumps(
        value, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def signing_bytes(record: dict) -> bytes:
    """Canonical bytes of a record with the signature field absent."""
    if "signature" in record:
        record = {k: v for k, v in record.items() if k != "signature"}
    return canonical_json_bytes(record)


def record_hash(record: dict) -> str:
    """Chain hash of a record: SHA-256 over its canonical bytes (signature absent)."""
    return sha256_hex(signing_bytes(record))


def is_hex(s: str, length: int) -> bool:
    if len(s) != length:
        return False
    return all(c in "0123456789abcdef" for c in s)
