"""Append-only, hash-chained, signed content streams.

A stream is an index of published content: each entry commits to the SHA-256
of its payload bytes, never to the bytes themselves, so retrieval locations
can change without touching a single signature. Entries are chained by the
hash of the previous record's canonical bytes (signature field absent) and
individually signed by their author.

Two payload kinds carry their payload in-band as well as by hash, because
stream verification and moderation resolution must work from a stream file
alone: WRITER_UPDATE entries carry the replacement writer list, and
MOD_ACTION entries carry the moderation action record. In both cases the
entry's content_hash still equals SHA-256 of the canonical payload bytes.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .canonical import (
    ZERO_HASH,
    canonical_json_bytes,
    is_hex,
    parse_canonical,
    record_hash,
    sha256_hex,
    signing_bytes,
)
from .errors import ForkedStream, NotFound, UnauthorizedWriter, ValidationRejected
from .identity import Keypair, Principal, Signature, sign, verify

STREAM_KINDS = ("CONTENT", "MODERATION")
PAYLOAD_KINDS = ("POST", "REPLY", "EDIT", "TOMBSTONE", "MOD_ACTION", "WRITER_UPDATE")

MAX_NAME_BYTES = 256

# ValidationReport reason codes
BAD_SIGNATURE = "BAD_SIGNATURE"
BAD_CHAIN = "BAD_CHAIN"
BAD_SEQ = "BAD_SEQ"
UNAUTHORIZED_WRITER = "UNAUTHORIZED_WRITER"
FORK = "FORK"


def stream_id_for(owner_public_key: bytes, name: str) -> str:
    """StreamId = SHA-256(owner public key || 0x1F || name bytes), lowercase hex."""
    return sha256_hex(owner_public_key + b"\x1f" + name.encode("utf-8"))


@dataclass(frozen=True)
class GenesisRecord:
    stream_id: str
    owner: Principal
    stream_name: str
    stream_kind: str
    writers: tuple[Principal, ...]
    created_at: int
    scope: Optional[str] = None  # moderation streams may annotate one target stream
    signature: Optional[Signature] = None

    seq = 0
    prev_hash = ZERO_HASH

    def signing_record(self) -> dict:
        rec: dict = {
            "created_at": self.created_at,
            "owner": self.owner.public_hex,
            "prev_hash": self.prev_hash,
            "seq": self.seq,
            "stream_id": self.stream_id,
            "stream_kind": self.stream_kind,
            "stream_name": self.stream_name,
            "writers": sorted(w.public_hex for w in self.writers),
        }
        if self.scope is not None:
            rec["scope"] = self.scope
        return rec

    def to_record(self) -> dict:
        rec = self.signing_record()
        if self.signature is not None:
            rec["signature"] = self.signature.hex
        return rec

    @property
    def hash(self) -> str:
        return record_hash(self.signing_record())

    @classmethod
    def from_record(cls, rec: dict) -> "GenesisRecord":
        try:
            return cls(
                stream_id=rec["stream_id"],
                owner=Principal.from_public_hex(rec["owner"]),
                stream_name=rec["stream_name"],
                stream_kind=rec["stream_kind"],
                writers=tuple(Principal.from_public_hex(w) for w in rec["writers"]),
                created_at=rec["created_at"],
                scope=rec.get("scope"),
                signature=Signature.from_hex(rec["signature"]) if "signature" in rec else None,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationRejected(f"malformed genesis record: {exc}") from exc


@dataclass(frozen=True)
class ContentEntry:
    stream_id: str
    seq: int
    author: Principal
    timestamp: int
    payload_kind: str
    content_hash: str
    prev_hash: str
    reply_to: Optional[tuple[str, int]] = None
    writers: Optional[tuple[Principal, ...]] = None  # WRITER_UPDATE only
    action: Optional[dict] = None  # MOD_ACTION only, canonical action record
    signature: Optional[Signature] = None

    def signing_record(self) -> dict:
        rec: dict = {
            "author": self.author.public_hex,
            "content_hash": self.content_hash,
            "payload_kind": self.payload_kind,
            "prev_hash": self.prev_hash,
            "seq": self.seq,
            "stream_id": self.stream_id,
            "timestamp": self.timestamp,
        }
        if self.reply_to is not None:
            rec["reply_to"] = {"seq": self.reply_to[1], "stream_id": self.reply_to[0]}
        if self.writers is not None:
            rec["writers"] = sorted(w.public_hex for w in self.writers)
        if self.action is not None:
            rec["action"] = self.action
        return rec

    def to_record(self) -> dict:
        rec = self.signing_record()
        if self.signature is not None:
            rec["signature"] = self.signature.hex
        return rec

    @property
    def hash(self) -> str:
        return record_hash(self.signing_record())

    @property
    def ref(self) -> tuple[str, int]:
        return (self.stream_id, self.seq)

    def signature_valid(self) -> bool:
        if self.signature is None:
            return False
        return verify(self.author, signing_bytes(self.signing_record()), self.signature)

    @classmethod
    def from_record(cls, rec: dict) -> "ContentEntry":
        try:
            reply = rec.get("reply_to")
            writers = rec.get("writers")
            return cls(
                stream_id=rec["stream_id"],
                seq=rec["seq"],
                author=Principal.from_public_hex(rec["author"]),
                timestamp=rec["timestamp"],
                payload_kind=rec["payload_kind"],
                content_hash=rec["content_hash"],
                prev_hash=rec["prev_hash"],
                reply_to=(reply["stream_id"], reply["seq"]) if reply is not None else None,
                writers=tuple(Principal.from_public_hex(w) for w in writers)
                if writers is not None
                else None,
                action=rec.get("action"),
                signature=Signature.from_hex(rec["signature"]) if "signature" in rec else None,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationRejected(f"malformed entry record: {exc}") from exc


@dataclass(frozen=True)
class ForkEvidence:
    """Two validly signed records at the same (stream_id, seq) with different hashes."""

    a: ContentEntry
    b: ContentEntry

    def to_dict(self) -> dict:
        return {"a": self.a.to_record(), "b": self.b.to_record()}

    @classmethod
    def from_dict(cls, rec: dict) -> "ForkEvidence":
        return cls(ContentEntry.from_record(rec["a"]), ContentEntry.from_record(rec["b"]))


@dataclass(frozen=True)
class StreamState:
    genesis: GenesisRecord
    entries: tuple[ContentEntry, ...] = ()
    forked: bool = False
    fork_evidence: Optional[ForkEvidence] = None
    # Writer set in effect after the current head; derived, maintained incrementally.
    writer_set: frozenset[str] = field(default=frozenset(), compare=False)

    @property
    def head_seq(self) -> int:
        return self.entries[-1].seq if self.entries else 0

    @property
    def head_hash(self) -> str:
        return self.entries[-1].hash if self.entries else self.genesis.hash

    @property
    def stream_id(self) -> str:
        return self.genesis.stream_id

    def records(self) -> Iterator[dict]:
        yield self.genesis.to_record()
        for entry in self.entries:
            yield entry.to_record()


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    first_bad_seq: Optional[int] = None
    reasons: tuple[str, ...] = ()


def _initial_writer_set(genesis: GenesisRecord) -> frozenset[str]:
    return frozenset(w.public_hex for w in genesis.writers) | {genesis.owner.public_hex}


def _apply_writer_update(current: frozenset[str], entry: ContentEntry, owner: Principal) -> frozenset[str]:
    # The owner can never be locked out of their own stream.
    assert entry.writers is not None
    return frozenset(w.public_hex for w in entry.writers) | {owner.public_hex}


def writer_set_at(genesis: GenesisRecord, entries: Iterable[ContentEntry], seq: int) -> frozenset[str]:
    """Writer set in effect for the entry at `seq` (genesis writers mutated by
    prior owner-signed WRITER_UPDATE entries)."""
    current = _initial_writer_set(genesis)
    for entry in entries:
        if entry.seq >= seq:
            break
        if entry.payload_kind == "WRITER_UPDATE" and entry.author == genesis.owner:
            current = _apply_writer_update(current, entry, genesis.owner)
    return current


def create_stream(
    owner: Keypair,
    name: str,
    kind: str = "CONTENT",
    writers: Iterable[Principal] = (),
    created_at: Optional[int] = None,
    scope: Optional[str] = None,
) -> StreamState:
    if len(name.encode("utf-8")) > MAX_NAME_BYTES:
        raise ValidationRejected(f"stream name exceeds {MAX_NAME_BYTES} bytes")
    if kind not in STREAM_KINDS:
        raise ValidationRejected(f"unknown stream kind {kind!r}")
    writer_set = {w for w in writers}
    writer_set.add(owner.principal)
    genesis = GenesisRecord(
        stream_id=stream_id_for(owner.public_key, name),
        owner=owner.principal,
        stream_name=name,
        stream_kind=kind,
        writers=tuple(sorted(writer_set, key=lambda p: p.public_hex)),
        created_at=int(time.time()) if created_at is None else created_at,
        scope=scope,
    )
    signature = sign(owner, signing_bytes(genesis.signing_record()))
    genesis = replace(genesis, signature=signature)
    return StreamState(genesis=genesis, writer_set=_initial_writer_set(genesis))


def append(
    state: StreamState,
    author: Keypair,
    payload_kind: str,
    payload_bytes: Optional[bytes] = None,
    reply_to: Optional[tuple[str, int]] = None,
    timestamp: Optional[int] = None,
    writers: Optional[Iterable[Principal]] = None,
    action: Optional[dict] = None,
) -> tuple[StreamState, ContentEntry]:
    """Append one signed entry. Payload bytes are hashed, never stored here."""
    if state.forked:
        raise ForkedStream(f"stream {state.stream_id} is forked; appends refused")
    if payload_kind not in PAYLOAD_KINDS:
        raise ValidationRejected(f"unknown payload kind {payload_kind!r}")
    writer_set = state.writer_set or writer_set_at(state.genesis, state.entries, state.head_seq + 1)
    if author.public_hex not in writer_set:
        raise UnauthorizedWriter(
            f"{author.principal.encoded} is not a writer of stream {state.stream_id}"
        )

    entry_writers: Optional[tuple[Principal, ...]] = None
    entry_action: Optional[dict] = None
    if payload_kind == "WRITER_UPDATE":
        if writers is None:
            raise ValidationRejected("WRITER_UPDATE requires the replacement writer list")
        if author.principal != state.genesis.owner:
            raise UnauthorizedWriter("only the stream owner may update the writer set")
        new_set = {w for w in writers}
        new_set.add(state.genesis.owner)
        entry_writers = tuple(sorted(new_set, key=lambda p: p.public_hex))
        payload_bytes = canonical_json_bytes(
            {"writers": [w.public_hex for w in entry_writers]}
        )
    elif payload_kind == "MOD_ACTION":
        if action is None:
            raise ValidationRejected("MOD_ACTION requires an action record")
        entry_action = action
        payload_bytes = canonical_json_bytes(action)
    elif payload_kind == "TOMBSTONE":
        if reply_to is None:
            raise ValidationRejected("TOMBSTONE requires the target (stream_id, seq)")
        if reply_to[0] != state.stream_id or not 1 <= reply_to[1] <= state.head_seq:
            raise ValidationRejected("TOMBSTONE must reference an earlier seq in the same stream")
        payload_bytes = canonical_json_bytes({"tombstone_of": reply_to[1]})
    elif payload_bytes is None:
        raise ValidationRejected(f"{payload_kind} requires payload bytes")

    entry = ContentEntry(
        stream_id=state.stream_id,
        seq=state.head_seq + 1,
        author=author.principal,
        timestamp=int(time.time()) if timestamp is None else timestamp,
        payload_kind=payload_kind,
        content_hash=sha256_hex(payload_bytes),
        prev_hash=state.head_hash,
        reply_to=reply_to,
        writers=entry_writers,
        action=entry_action,
    )
    signature = sign(author, signing_bytes(entry.signing_record()))
    entry = replace(entry, signature=signature)

    next_writers = writer_set
    if payload_kind == "WRITER_UPDATE":
        next_writers = _apply_writer_update(writer_set, entry, state.genesis.owner)
    new_state = replace(state, entries=state.entries + (entry,), writer_set=next_writers)
    return new_state, entry


def _check_genesis(genesis: GenesisRecord, reasons: list[str]) -> bool:
    ok = True
    if genesis.stream_id != stream_id_for(genesis.owner.public_key, genesis.stream_name):
        reasons.append(BAD_CHAIN)
        ok = False
    if genesis.owner not in genesis.writers:
        reasons.append(UNAUTHORIZED_WRITER)
        ok = False
    if genesis.signature is None or not verify(
        genesis.owner, signing_bytes(genesis.signing_record()), genesis.signature
    ):
        reasons.append(BAD_SIGNATURE)
        ok = False
    return ok


def verify_stream(genesis: GenesisRecord, entries: Iterable[ContentEntry]) -> ValidationReport:
    """Check the whole chain: per entry, in order: seq continuity, prev_hash
    linkage, signature, writer authorization. Reports the first failing seq
    and the distinct set of reasons seen anywhere."""
    reasons: list[str] = []
    first_bad: Optional[int] = None

    def note(reason: str, seq: int) -> None:
        nonlocal first_bad
        if reason not in reasons:
            reasons.append(reason)
        if first_bad is None:
            first_bad = seq

    if not _check_genesis(genesis, reasons):
        first_bad = 0

    expected_seq = 1
    prev_hash = genesis.hash
    writer_set = _initial_writer_set(genesis)
    seen_seqs: set[int] = set()
    for entry in entries:
        entry_ok = True
        if entry.seq in seen_seqs:
            note(FORK, entry.seq)
            entry_ok = False
        seen_seqs.add(entry.seq)
        if entry.seq != expected_seq or entry.stream_id != genesis.stream_id:
            note(BAD_SEQ, entry.seq)
            entry_ok = False
        if entry.prev_hash != prev_hash:
            note(BAD_CHAIN, entry.seq)
            entry_ok = False
        if not entry.signature_valid():
            note(BAD_SIGNATURE, entry.seq)
            entry_ok = False
        if entry.author.public_hex not in writer_set:
            note(UNAUTHORIZED_WRITER, entry.seq)
            entry_ok = False
        if entry.payload_kind == "WRITER_UPDATE":
            if entry.author != genesis.owner:
                note(UNAUTHORIZED_WRITER, entry.seq)
                entry_ok = False
            elif entry.writers is not None and entry_ok:
                writer_set = _apply_writer_update(writer_set, entry, genesis.owner)
        prev_hash = entry.hash
        expected_seq = entry.seq + 1 if entry_ok else expected_seq + 1

    return ValidationReport(ok=not reasons, first_bad_seq=first_bad, reasons=tuple(reasons))


def extend_stream(
    state: StreamState, new_entries: Iterable[ContentEntry]
) -> tuple[StreamState, ValidationReport]:
    """Validate a continuation of an existing verified prefix and apply it.

    On any failure the returned state is the input state, untouched."""
    reasons: list[str] = []
    first_bad: Optional[int] = None
    prev_hash = state.head_hash
    expected_seq = state.head_seq + 1
    writer_set = state.writer_set or writer_set_at(state.genesis, state.entries, expected_seq)
    accepted: list[ContentEntry] = []

    for entry in new_entries:
        bad: list[str] = []
        if entry.seq != expected_seq or entry.stream_id != state.stream_id:
            bad.append(BAD_SEQ)
        if entry.prev_hash != prev_hash:
            bad.append(BAD_CHAIN)
        if not entry.signature_valid():
            bad.append(BAD_SIGNATURE)
        if entry.author.public_hex not in writer_set:
            bad.append(UNAUTHORIZED_WRITER)
        if entry.payload_kind == "WRITER_UPDATE" and entry.author != state.genesis.owner:
            bad.append(UNAUTHORIZED_WRITER)
        if bad:
            for reason in bad:
                if reason not in reasons:
                    reasons.append(reason)
            first_bad = entry.seq
            return state, ValidationReport(ok=False, first_bad_seq=first_bad, reasons=tuple(reasons))
        if entry.payload_kind == "WRITER_UPDATE" and entry.writers is not None:
            writer_set = _apply_writer_update(writer_set, entry, state.genesis.owner)
        accepted.append(entry)
        prev_hash = entry.hash
        expected_seq += 1

    new_state = replace(state, entries=state.entries + tuple(accepted), writer_set=writer_set)
    return new_state, ValidationReport(ok=True)


def detect_fork(a: ContentEntry, b: ContentEntry) -> Optional[ForkEvidence]:
    """Evidence iff both entries are validly signed for the same (stream_id, seq)
    but have different canonical hashes."""
    if a.stream_id != b.stream_id or a.seq != b.seq:
        return None
    if a.hash == b.hash:
        return None
    if not (a.signature_valid() and b.signature_valid()):
        return None
    return ForkEvidence(a=a, b=b)


def canonical_bytes(record: GenesisRecord | ContentEntry) -> bytes:
    """Canonical byte form of a record with the signature field absent (the
    signing input and the chain-hash input)."""
    return signing_bytes(record.signing_record())


# --- .csl file format: one canonical JSON record per line, genesis first ----


def dump_csl(state: StreamState) -> bytes:
    lines = [canonical_json_bytes(rec) for rec in state.records()]
    return b"\n".join(lines) + b"\n"


def parse_csl(data: bytes, repair: bool = False) -> tuple[GenesisRecord, list[ContentEntry], bool]:
    """Parse a stream log. With repair=True a trailing partial line (crash
    artifact) is dropped instead of failing; returns whether a repair happened."""
    raw_lines = data.split(b"\n")
    if raw_lines and raw_lines[-1] == b"":
        raw_lines.pop()
    records = []
    repaired = False
    for i, line in enumerate(raw_lines):
        try:
            records.append(parse_canonical(line))
        except ValueError:
            if repair and i == len(raw_lines) - 1:
                repaired = True
                break
            raise ValidationRejected(f"corrupt stream log at line {i + 1}")
    if not records:
        raise ValidationRejected("empty stream log")
    genesis = GenesisRecord.from_record(records[0])
    entries = [ContentEntry.from_record(rec) for rec in records[1:]]
    return genesis, entries, repaired


def load_state(genesis: GenesisRecord, entries: list[ContentEntry]) -> StreamState:
    return StreamState(
        genesis=genesis,
        entries=tuple(entries),
        writer_set=writer_set_at(genesis, entries, (entries[-1].seq + 1) if entries else 1),
    )


@dataclass
class AcceptResult:
    accepted: int = 0
    fork_detected: bool = False
    rejected: Optional[str] = None  # reason code when a batch was discarded


class StreamStore:
    """Node-local store of streams: serialized appends per stream, unlimited
    concurrent readers of committed states, optional .csl persistence."""

    def __init__(self, root: Optional[Path] = None):
        self.root = Path(root) if root is not None else None
        self._streams: dict[str, StreamState] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            self._load_all()

    # -- persistence ---------------------------------------------------------

    def _path(self, stream_id: str) -> Path:
        assert self.root is not None
        return self.root / f"{stream_id}.csl"

    def _fork_path(self, stream_id: str) -> Path:
        assert self.root is not None
        return self.root / f"{stream_id}.fork"

    def _load_all(self) -> None:
        assert self.root is not None
        for path in sorted(self.root.glob("*.csl")):
            data = path.read_bytes()
            genesis, entries, repaired = parse_csl(data, repair=True)
            report = verify_stream(genesis, entries)
            if not report.ok:
                raise ValidationRejected(
                    f"stream file {path.name} fails verification at seq "
                    f"{report.first_bad_seq}: {','.join(report.reasons)}"
                )
            state = load_state(genesis, entries)
            if repaired:
                # Rewrite the verified prefix so the partial line is gone.
                path.write_bytes(dump_csl(state))
            fork_path = self._fork_path(genesis.stream_id)
            if fork_path.exists():
                evidence = ForkEvidence.from_dict(parse_canonical(fork_path.read_bytes()))
                state = replace(state, forked=True, fork_evidence=evidence)
            self._streams[genesis.stream_id] = state

    def _persist_new(self, state: StreamState) -> None:
        if self.root is None:
            return
        path = self._path(state.stream_id)
        tmp = path.with_suffix(".csl.tmp")
        tmp.write_bytes(dump_csl(state))
        os.replace(tmp, path)

    def _persist_append(self, stream_id: str, entries: Iterable[ContentEntry]) -> None:
        if self.root is None:
            return
        with open(self._path(stream_id), "ab") as fh:
            for entry in entries:
                fh.write(canonical_json_bytes(entry.to_record()) + b"\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _persist_fork(self, stream_id: str, evidence: ForkEvidence) -> None:
        if self.root is None:
            return
        self._fork_path(stream_id).write_bytes(canonical_json_bytes(evidence.to_dict()))

    # -- access --------------------------------------------------------------

    def _lock_for(self, stream_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(stream_id, threading.Lock())

    def ids(self) -> list[str]:
        with self._registry_lock:
            return sorted(self._streams)

    def get(self, stream_id: str) -> Optional[StreamState]:
        with self._registry_lock:
            return self._streams.get(stream_id)

    def require(self, stream_id: str) -> StreamState:
        state = self.get(stream_id)
        if state is None:
            raise NotFound(f"unknown stream {stream_id}")
        return state

    def states(self) -> list[StreamState]:
        with self._registry_lock:
            return [self._streams[sid] for sid in sorted(self._streams)]

    # -- mutation ------------------------------------------------------------

    def add(self, state: StreamState) -> None:
        """Register a locally created or fully verified stream."""
        with self._lock_for(state.stream_id):
            existing = self._streams.get(state.stream_id)
            if existing is not None and existing.head_hash != state.head_hash:
                raise ValidationRejected(
                    f"stream {state.stream_id} already present with divergent state"
                )
            if existing is None:
                self._streams[state.stream_id] = state
                self._persist_new(state)

    def create(self, owner: Keypair, name: str, kind: str = "CONTENT",
               writers: Iterable[Principal] = (), created_at: Optional[int] = None,
               scope: Optional[str] = None) -> StreamState:
        state = create_stream(owner, name, kind, writers, created_at, scope)
        self.add(state)
        return state

    def append(self, stream_id: str, author: Keypair, payload_kind: str,
               payload_bytes: Optional[bytes] = None, **kwargs) -> ContentEntry:
        with self._lock_for(stream_id):
            state = self._streams.get(stream_id)
            if state is None:
                raise NotFound(f"unknown stream {stream_id}")
            new_state, entry = append(state, author, payload_kind, payload_bytes, **kwargs)
            self._streams[stream_id] = new_state
            self._persist_append(stream_id, [entry])
            return entry

    def accept(
        self,
        stream_id: str,
        genesis: Optional[GenesisRecord],
        entries: list[ContentEntry],
    ) -> AcceptResult:
        """Accept replicated records. The local head advances only past full
        validation; conflicting valid entries mark the stream forked."""
        with self._lock_for(stream_id):
            state = self._streams.get(stream_id)
            if state is None:
                if genesis is None:
                    return AcceptResult(rejected="NOT_FOUND")
                if genesis.stream_id != stream_id:
                    return AcceptResult(rejected="VALIDATION_REJECTED")
                report = verify_stream(genesis, entries)
                if not report.ok:
                    return AcceptResult(rejected="VALIDATION_REJECTED")
                state = load_state(genesis, entries)
                self._streams[stream_id] = state
                self._persist_new(state)
                return AcceptResult(accepted=len(entries))

            if genesis is not None and genesis.hash != state.genesis.hash:
                return AcceptResult(rejected="VALIDATION_REJECTED")
            if state.forked:
                return AcceptResult(fork_detected=True, rejected="FORKED_STREAM")

            # Ignore anything at or below our head; check overlaps for forks.
            overlap = [e for e in entries if 1 <= e.seq <= state.head_seq]
            for remote in overlap:
                local = state.entries[remote.seq - 1]
                evidence = detect_fork(local, remote)
                if evidence is not None:
                    state = replace(state, forked=True, fork_evidence=evidence)
                    self._streams[stream_id] = state
                    self._persist_fork(stream_id, evidence)
                    return AcceptResult(fork_detected=True)

            fresh = [e for e in entries if e.seq > state.head_seq]
            if not fresh:
                return AcceptResult(accepted=0)
            new_state, report = extend_stream(state, fresh)
            if not report.ok:
                return AcceptResult(rejected="VALIDATION_REJECTED")
            self._streams[stream_id] = new_state
            self._persist_append(stream_id, fresh)
            return AcceptResult(accepted=len(fresh))

    def mark_forked(self, stream_id: str, evidence: ForkEvidence) -> None:
        with self._lock_for(stream_id):
            state = self._streams.get(stream_id)
            if state is None or state.forked:
                return
            state = replace(state, forked=True, fork_evidence=evidence)
            self._streams[stream_id] = state
            self._persist_fork(stream_id, evidence)
