"""The serializer is checked against a from-scratch reimplementation that
shares no code with the package (manual string building, manual escaping).
If both independently produce the same bytes for arbitrary documents, the
format is pinned down rather than self-consistent by accident.
"""

import random
import string

import pytest

from plurinet.canonical import (
    CanonicalError,
    canonical_json_bytes,
    parse_canonical,
    record_hash,
    sha256_hex,
    signing_bytes,
    stable_json_bytes,
)

# ---------------------------------------------------------------------------
# independent oracle

_ESCAPES = {
    '"': '\\"', "\\": "\\\\", "\b": "\\b", "\f": "\\f",
    "\n": "\\n", "\r": "\\r", "\t": "\\t",
}


def _oracle_string(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch in _ESCAPES:
            out.append(_ESCAPES[ch])
        elif ord(ch) < 0x20:
            out.append("\\u%04x" % ord(ch))
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def oracle_canonical(value) -> bytes:
    """Manual canonical JSON: sorted keys, no spaces, raw (non-ascii) UTF-8."""
    def enc(v) -> str:
        if v is None:
            return "null"
        if v is True:
            return "true"
        if v is False:
            return "false"
        if isinstance(v, int):
            return str(v)
        if isinstance(v, str):
            return _oracle_string(v)
        if isinstance(v, (list, tuple)):
            return "[" + ",".join(enc(i) for i in v) + "]"
        if isinstance(v, dict):
            parts = []
            for k in sorted(v):
                parts.append(_oracle_string(k) + ":" + enc(v[k]))
            return "{" + ",".join(parts) + "}"
        raise AssertionError(f"oracle got {type(v)}")
    return enc(value).encode("utf-8")


def random_doc(rng: random.Random, depth: int = 0):
    choices = ["int", "str", "bool", "null"]
    if depth < 3:
        choices += ["list", "dict", "dict"]
    kind = rng.choice(choices)
    if kind == "int":
        return rng.randint(-(10 ** 12), 10 ** 12)
    if kind == "str":
        alphabet = string.ascii_letters + string.digits + "_-:/ éλ→\n\t\"\\"
        return "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 20)))
    if kind == "bool":
        return rng.random() < 0.5
    if kind == "null":
        return None
    if kind == "list":
        return [random_doc(rng, depth + 1) for _ in range(rng.randint(0, 4))]
    return {
        "".join(rng.choice(string.ascii_lowercase + "_è") for _ in range(rng.randint(1, 8))):
            random_doc(rng, depth + 1)
        for _ in range(rng.randint(0, 5))
    }


# ---------------------------------------------------------------------------


def test_golden_document():
    doc = {
        "z": [1, 2, {"b": None, "a": True}],
        "a": "héllo\nworld",
        "n": -42,
        "empty": {},
    }
    expected = '{"a":"héllo\\nworld","empty":{},"n":-42,"z":[1,2,{"a":true,"b":null}]}'
    assert canonical_json_bytes(doc) == expected.encode("utf-8")


def test_matches_independent_oracle():
    rng = random.Random(0xC0FFEE)
    for _ in range(300):
        doc = random_doc(rng)
        assert canonical_json_bytes(doc) == oracle_canonical(doc)


def test_key_order_irrelevant():
    a = {"x": 1, "y": 2, "z": {"p": 3, "q": 4}}
    b = {"z": {"q": 4, "p": 3}, "y": 2, "x": 1}
    assert canonical_json_bytes(a) == canonical_json_bytes(b)


def test_fixpoint():
    rng = random.Random(7)
    for _ in range(100):
        doc = random_doc(rng)
        once = canonical_json_bytes(doc)
        again = canonical_json_bytes(parse_canonical(once))
        assert once == again


def test_floats_rejected():
    with pytest.raises(CanonicalError):
        canonical_json_bytes({"score": 1.5})
    with pytest.raises(CanonicalError):
        canonical_json_bytes([float("nan")])


def test_non_string_keys_rejected():
    with pytest.raises(CanonicalError):
        canonical_json_bytes({1: "a"})


def test_unsupported_types_rejected():
    with pytest.raises(CanonicalError):
        canonical_json_bytes({"x": b"bytes"})
    with pytest.raises(CanonicalError):
        canonical_json_bytes({"x": {1, 2}})


def test_stable_json_allows_floats():
    # computed output (scores, ranking) may carry floats; signed records never do
    assert stable_json_bytes({"v": 0.5}) == b'{"v":0.5}'


def test_signing_bytes_drops_signature_only():
    rec = {"b": 2, "signature": "ff" * 64, "a": 1}
    assert signing_bytes(rec) == b'{"a":1,"b":2}'
    assert signing_bytes({"a": 1, "b": 2}) == b'{"a":1,"b":2}'


def test_record_hash_is_sha256_of_signing_bytes():
    rec = {"seq": 3, "signature": "aa" * 64, "x": "y"}
    assert record_hash(rec) == sha256_hex(b'{"seq":3,"x":"y"}')


def test_record_hash_ignores_signature_value():
    base = {"seq": 1, "data": "d"}
    signed = dict(base, signature="ab" * 64)
    assert record_hash(base) == record_hash(signed)
