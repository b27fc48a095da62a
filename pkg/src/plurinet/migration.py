"""Lossless export/import of user state and storage-provider switching.

A bundle is a directory tree: `manifest.json` (canonical JSON), stream logs
under `streams/`, content-addressed blobs under `blobs/<hh>/<hash>`, and
`hints.jsonl`. The manifest digest covers everything except `created_at`, so
exporting frozen state twice yields the same digest. Signed entries are never
re-issued: switching providers only replicates bytes and issues fresh hints.
"""

from __future__ import annotations

import io
import tarfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .canonical import canonical_json_bytes, parse_canonical, sha256_hex
from .errors import BadDigest, NotFound, Refused, ValidationRejected
from .identity import Keypair
from .storage import BlobStore, HintRegistry, StorageHint, replicate
from .stream import (
    StreamState,
    StreamStore,
    dump_csl,
    load_state,
    parse_csl,
    verify_stream,
)

MANIFEST_NAME = "manifest.json"
STREAMS_DIR = "streams"
BLOBS_DIR = "blobs"
HINTS_NAME = "hints.jsonl"


@dataclass
class MigrationReport:
    streams_imported: int = 0
    entries_imported: int = 0
    blobs_imported: int = 0
    hints_issued: int = 0
    conflicts: list = field(default_factory=list)  # {"stream_id", "reason"}
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "blobs_imported": self.blobs_imported,
            "conflicts": list(self.conflicts),
            "entries_imported": self.entries_imported,
            "hints_issued": self.hints_issued,
            "streams_imported": self.streams_imported,
            "warnings": list(self.warnings),
        }


def manifest_digest(manifest: dict) -> str:
    """Digest over the canonical manifest, excluding the digest field itself
    and created_at (so frozen state exports reproducibly)."""
    body = {k: v for k, v in manifest.items() if k not in ("bundle_digest", "created_at")}
    return sha256_hex(canonical_json_bytes(body))


def referenced_hashes(streams: Iterable[StreamState]) -> list:
    return sorted({e.content_hash for state in streams for e in state.entries})


def export_bundle(
    streams: Sequence[StreamState],
    blob_lookup: Callable[[str], Optional[bytes]],
    hints: Sequence[StorageHint],
    out_dir: Path,
    created_at: Optional[int] = None,
    forums: Sequence[dict] = (),
) -> tuple[dict, list]:
    """Write a self-contained bundle; returns (manifest, warnings)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / STREAMS_DIR).mkdir(exist_ok=True)
    (out_dir / BLOBS_DIR).mkdir(exist_ok=True)
    warnings: list = []

    stream_rows = []
    for state in sorted(streams, key=lambda s: s.stream_id):
        (out_dir / STREAMS_DIR / f"{state.stream_id}.csl").write_bytes(dump_csl(state))
        stream_rows.append({
            "head_hash": state.head_hash,
            "head_seq": state.head_seq,
            "stream_id": state.stream_id,
        })

    exported_blobs = []
    for content_hash in referenced_hashes(streams):
        try:
            data = blob_lookup(content_hash)
        except Exception:
            data = None
        if data is None:
            warnings.append(f"blob {content_hash} unresolvable; exported metadata-only")
            continue
        if sha256_hex(data) != content_hash:
            warnings.append(f"blob {content_hash} failed verification; skipped")
            continue
        shard = out_dir / BLOBS_DIR / content_hash[:2]
        shard.mkdir(exist_ok=True)
        (shard / content_hash[2:]).write_bytes(data)
        exported_blobs.append(content_hash)

    with open(out_dir / HINTS_NAME, "wb") as fh:
        for hint in hints:
            fh.write(canonical_json_bytes(hint.to_record()) + b"\n")

    manifest: dict = {
        "blobs": exported_blobs,
        "created_at": int(time.time()) if created_at is None else created_at,
        "forums": list(forums),
        "streams": stream_rows,
    }
    manifest["bundle_digest"] = manifest_digest(manifest)
    (out_dir / MANIFEST_NAME).write_bytes(canonical_json_bytes(manifest))
    return manifest, warnings


def read_manifest(bundle_dir: Path) -> dict:
    path = Path(bundle_dir) / MANIFEST_NAME
    if not path.exists():
        raise BadDigest("bundle has no manifest")
    try:
        manifest = parse_canonical(path.read_bytes())
    except ValueError as exc:
        raise BadDigest(f"unreadable manifest: {exc}") from exc
    if manifest.get("bundle_digest") != manifest_digest(manifest):
        raise BadDigest("bundle digest mismatch")
    return manifest


def _verify_bundle(bundle_dir: Path, manifest: dict) -> dict[str, StreamState]:
    """Full verification before any mutation: every listed blob present with
    the right hash, every stream file valid with the manifested head."""
    bundle_dir = Path(bundle_dir)
    for content_hash in manifest["blobs"]:
        path = bundle_dir / BLOBS_DIR / content_hash[:2] / content_hash[2:]
        if not path.exists() or sha256_hex(path.read_bytes()) != content_hash:
            raise BadDigest(f"bundle blob {content_hash} missing or corrupt")
    states: dict[str, StreamState] = {}
    for row in manifest["streams"]:
        sid = row["stream_id"]
        path = bundle_dir / STREAMS_DIR / f"{sid}.csl"
        if not path.exists():
            raise BadDigest(f"bundle stream {sid} missing")
        genesis, entries, _ = parse_csl(path.read_bytes())
        report = verify_stream(genesis, entries)
        state = load_state(genesis, entries)
        if not report.ok or state.stream_id != sid or state.head_hash != row["head_hash"] \
                or state.head_seq != row["head_seq"]:
            raise BadDigest(f"bundle stream {sid} fails verification")
        states[sid] = state
    return states


def import_bundle(
    bundle_dir: Path,
    stream_store: StreamStore,
    blob_store: Optional[BlobStore] = None,
    hint_registry: Optional[HintRegistry] = None,
) -> MigrationReport:
    """Idempotent import: identical data skipped, divergent data reported as
    conflict and never merged, nothing local deleted or overwritten."""
    bundle_dir = Path(bundle_dir)
    manifest = read_manifest(bundle_dir)
    states = _verify_bundle(bundle_dir, manifest)
    report = MigrationReport()

    for sid, state in sorted(states.items()):
        local = stream_store.get(sid)
        if local is None:
            stream_store.add(state)
            report.streams_imported += 1
            report.entries_imported += len(state.entries)
            continue
        if local.genesis.hash != state.genesis.hash:
            report.conflicts.append({"reason": "DIVERGENT_GENESIS", "stream_id": sid})
            continue
        if local.head_seq >= state.head_seq:
            # Bundle must be a prefix of local history, else it is a fork.
            if state.head_seq == 0 or (
                local.entries[state.head_seq - 1].hash == state.head_hash
            ):
                continue  # already have everything
            report.conflicts.append({"reason": "DIVERGENT_HISTORY", "stream_id": sid})
            continue
        result = stream_store.accept(sid, state.genesis, list(state.entries))
        if result.fork_detected or result.rejected:
            report.conflicts.append({
                "reason": result.rejected or "FORK",
                "stream_id": sid,
            })
        else:
            report.entries_imported += result.accepted

    if blob_store is not None:
        for content_hash in manifest["blobs"]:
            path = bundle_dir / BLOBS_DIR / content_hash[:2] / content_hash[2:]
            if blob_store.has(content_hash):
                continue
            try:
                blob_store.put(path.read_bytes())
                report.blobs_imported += 1
            except Refused:
                report.warnings.append(f"store refuses blob {content_hash}")

    hints_path = bundle_dir / HINTS_NAME
    if hint_registry is not None and hints_path.exists():
        for line in hints_path.read_bytes().splitlines():
            if line:
                hint_registry.add(StorageHint.from_record(parse_canonical(line)))

    return report


def switch_provider(
    state: StreamState,
    old_store: BlobStore,
    new_store: BlobStore,
    issuer: Keypair,
    hint_registry: Optional[HintRegistry] = None,
    issued_at: Optional[int] = None,
) -> MigrationReport:
    """Replicate every blob a stream references to the new store and issue
    fresh hints for the verified copies. Signatures are untouched; after this,
    resolution succeeds with the old store offline."""
    report = MigrationReport()
    if old_store.store_id == new_store.store_id:
        report.warnings.append("old and new store are the same; nothing to do")
        return report
    for content_hash in referenced_hashes([state]):
        try:
            if replicate(content_hash, old_store, new_store,
                         stream_id=state.stream_id):
                report.blobs_imported += 1
        except Refused:
            report.warnings.append(f"new store refuses blob {content_hash}")
            continue
        except NotFound:
            report.warnings.append(f"blob {content_hash} unresolvable from old store")
            continue
        hint = StorageHint.issue(issuer, content_hash, new_store.url, issued_at)
        if hint_registry is not None:
            hint_registry.add(hint)
        report.hints_issued += 1
    return report


# ---------------------------------------------------------------------------
# deterministic tar framing (for HTTP export/import)


def bundle_to_tar(bundle_dir: Path) -> bytes:
    bundle_dir = Path(bundle_dir)
    paths = sorted(p for p in bundle_dir.rglob("*") if p.is_file())
    buffer = io.BytesIO()
    with tarfile.open(fileobj=buffer, mode="w") as tar:
        for path in paths:
            info = tarfile.TarInfo(name=str(path.relative_to(bundle_dir)))
            data = path.read_bytes()
            info.size = len(data)
            info.mtime = 0
            info.uid = info.gid = 0
            info.uname = info.gname = ""
            info.mode = 0o644
            tar.addfile(info, io.BytesIO(data))
    return buffer.getvalue()


def tar_to_bundle(data: bytes, dest_dir: Path) -> Path:
    dest_dir = Path(dest_dir)
    dest_dir.mkdir(parents=True, exist_ok=True)
    with tarfile.open(fileobj=io.BytesIO(data), mode="r") as tar:
        for member in tar.getmembers():
            name = Path(member.name)
            if name.is_absolute() or ".." in name.parts or not member.isfile():
                raise ValidationRejected(f"unsafe bundle member {member.name!r}")
            target = dest_dir / name
            target.parent.mkdir(parents=True, exist_ok=True)
            extracted = tar.extractfile(member)
            assert extracted is not None
            target.write_bytes(extracted.read())
    return dest_dir
