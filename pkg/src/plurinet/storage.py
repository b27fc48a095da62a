"""Content-addressed blob stores with replication, advisory locators, and
operator refusal policies.

Blobs live under their own SHA-256; a hash locator (StorageHint) is advisory
and replaceable, so a provider switch never invalidates a single signature.
Every read is integrity-verified: a backend that returns bytes with the wrong
hash surfaces INTEGRITY_FAILURE, never silently wrong data.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Optional

from .canonical import canonical_json_bytes, parse_canonical, sha256_hex, signing_bytes
from .errors import IntegrityFailure, NotFound, Refused
from .identity import Keypair, Principal, Signature, sign, verify

BACKENDS = ("MEMORY", "FILESYSTEM", "REMOTE")

REFUSE_HASH = "HASH"
REFUSE_STREAM = "STREAM"
REFUSE_PRINCIPAL = "PRINCIPAL"


@dataclass(frozen=True)
class BlobStoreConfig:
    store_id: str
    backend: str
    location: str = ""

    def to_dict(self) -> dict:
        return {"backend": self.backend, "location": self.location, "store_id": self.store_id}

    @classmethod
    def from_dict(cls, rec: dict) -> "BlobStoreConfig":
        return cls(store_id=rec["store_id"], backend=rec["backend"], location=rec.get("location", ""))


@dataclass(frozen=True)
class StorageHint:
    """Signed, replaceable advisory record mapping a content hash to a location."""

    content_hash: str
    store_url: str
    issued_by: Principal
    issued_at: int
    signature: Optional[Signature] = None

    def signing_record(self) -> dict:
        return {
            "content_hash": self.content_hash,
            "issued_at": self.issued_at,
            "issued_by": self.issued_by.public_hex,
            "store_url": self.store_url,
        }

    def to_record(self) -> dict:
        rec = self.signing_record()
        if self.signature is not None:
            rec["signature"] = self.signature.hex
        return rec

    def signature_valid(self) -> bool:
        if self.signature is None:
            return False
        return verify(self.issued_by, signing_bytes(self.signing_record()), self.signature)

    @classmethod
    def issue(cls, issuer: Keypair, content_hash: str, store_url: str,
              issued_at: Optional[int] = None) -> "StorageHint":
        hint = cls(
            content_hash=content_hash,
            store_url=store_url,
            issued_by=issuer.principal,
            issued_at=int(time.time()) if issued_at is None else issued_at,
        )
        return replace(hint, signature=sign(issuer, signing_bytes(hint.signing_record())))

    @classmethod
    def from_record(cls, rec: dict) -> "StorageHint":
        return cls(
            content_hash=rec["content_hash"],
            store_url=rec["store_url"],
            issued_by=Principal.from_public_hex(rec["issued_by"]),
            issued_at=rec["issued_at"],
            signature=Signature.from_hex(rec["signature"]) if "signature" in rec else None,
        )


@dataclass(frozen=True)
class Refusal:
    kind: str  # HASH | STREAM | PRINCIPAL
    value: str  # content hash, stream id, or encoded principal
    added_at: int = 0

    def to_dict(self) -> dict:
        return {"added_at": self.added_at, "kind": self.kind, "value": self.value}


@dataclass
class Attribution:
    """Provenance supplied at put time; enables refusal by stream or principal."""

    stream_id: Optional[str] = None
    author: Optional[str] = None  # encoded principal


class BlobStore:
    """Base store: content addressing, refusal policy, attribution tracking."""

    def __init__(self, config: BlobStoreConfig):
        self.config = config
        self._lock = threading.RLock()
        self._refusals: list[Refusal] = []
        self._attribution: dict[str, list[Attribution]] = {}

    @property
    def store_id(self) -> str:
        return self.config.store_id

    @property
    def url(self) -> str:
        raise NotImplementedError

    # backend primitives ------------------------------------------------------

    def _read(self, content_hash: str) -> Optional[bytes]:
        raise NotImplementedError

    def _write(self, content_hash: str, data: bytes) -> None:
        raise NotImplementedError

    def _delete(self, content_hash: str) -> None:
        raise NotImplementedError

    def _list(self) -> list[str]:
        raise NotImplementedError

    # refusal policy ----------------------------------------------------------

    def refusals(self) -> list[Refusal]:
        with self._lock:
            return list(self._refusals)

    def _refused_values(self, kind: str) -> set[str]:
        return {r.value for r in self._refusals if r.kind == kind}

    def _is_refused(self, content_hash: str, attribution: Optional[Attribution]) -> bool:
        if content_hash in self._refused_values(REFUSE_HASH):
            return True
        attrs = list(self._attribution.get(content_hash, ()))
        if attribution is not None:
            attrs.append(attribution)
        streams = self._refused_values(REFUSE_STREAM)
        principals = self._refused_values(REFUSE_PRINCIPAL)
        for attr in attrs:
            if attr.stream_id is not None and attr.stream_id in streams:
                return True
            if attr.author is not None and attr.author in principals:
                return True
        return False

    def refuse(self, kind: str, value: str, added_at: Optional[int] = None) -> None:
        """Add a refusal and delete any already-stored blob it matches."""
        if kind not in (REFUSE_HASH, REFUSE_STREAM, REFUSE_PRINCIPAL):
            raise ValueError(f"unknown refusal kind {kind!r}")
        with self._lock:
            refusal = Refusal(kind=kind, value=value,
                              added_at=int(time.time()) if added_at is None else added_at)
            self._refusals.append(refusal)
            self._persist_refusal(refusal)
            for content_hash in self._list():
                if self._is_refused(content_hash, None):
                    self._delete(content_hash)

    def _persist_refusal(self, refusal: Refusal) -> None:
        pass

    def _record_attribution(self, content_hash: str, attribution: Attribution) -> None:
        attrs = self._attribution.setdefault(content_hash, [])
        if all(a.stream_id != attribution.stream_id or a.author != attribution.author
               for a in attrs):
            attrs.append(attribution)
            self._persist_attribution(content_hash, attribution)

    def _persist_attribution(self, content_hash: str, attribution: Attribution) -> None:
        pass

    # public interface --------------------------------------------------------

    def put(self, data: bytes, stream_id: Optional[str] = None,
            author: Optional[str] = None) -> str:
        content_hash = sha256_hex(data)
        attribution = Attribution(stream_id=stream_id, author=author) \
            if stream_id or author else None
        with self._lock:
            if self._is_refused(content_hash, attribution):
                raise Refused(f"store {self.store_id} refuses {content_hash}")
            if self._read(content_hash) is None:
                self._write(content_hash, data)
            if attribution is not None:
                self._record_attribution(content_hash, attribution)
        return content_hash

    def get(self, content_hash: str) -> bytes:
        with self._lock:
            if self._is_refused(content_hash, None):
                raise NotFound(f"{content_hash} not found in store {self.store_id}")
            data = self._read(content_hash)
        if data is None:
            raise NotFound(f"{content_hash} not found in store {self.store_id}")
        if sha256_hex(data) != content_hash:
            raise IntegrityFailure(
                f"store {self.store_id} returned corrupt bytes for {content_hash}"
            )
        return data

    def has(self, content_hash: str) -> bool:
        try:
            self.get(content_hash)
            return True
        except (NotFound, IntegrityFailure):
            return False

    def list_hashes(self) -> list[str]:
        with self._lock:
            return sorted(self._list())

    def delete(self, content_hash: str) -> None:
        with self._lock:
            self._delete(content_hash)


class MemoryBlobStore(BlobStore):
    def __init__(self, config: Optional[BlobStoreConfig] = None):
        super().__init__(config or BlobStoreConfig(store_id="memory", backend="MEMORY"))
        self._blobs: dict[str, bytes] = {}

    @property
    def url(self) -> str:
        return f"mem:{self.store_id}"

    def _read(self, content_hash: str) -> Optional[bytes]:
        return self._blobs.get(content_hash)

    def _write(self, content_hash: str, data: bytes) -> None:
        self._blobs[content_hash] = data

    def _delete(self, content_hash: str) -> None:
        self._blobs.pop(content_hash, None)

    def _list(self) -> list[str]:
        return list(self._blobs)

    def corrupt(self, content_hash: str, data: bytes) -> None:
        """Test hook: plant wrong bytes under a hash."""
        self._blobs[content_hash] = data


class FilesystemBlobStore(BlobStore):
    """Blobs at <root>/<hh>/<rest-of-hash>; refusal list at <root>/refusals.jsonl."""

    def __init__(self, config: BlobStoreConfig):
        super().__init__(config)
        self.root = Path(config.location)
        self.root.mkdir(parents=True, exist_ok=True)
        self._load_sidecars()

    @property
    def url(self) -> str:
        return f"file:{self.root}"

    def _blob_path(self, content_hash: str) -> Path:
        return self.root / content_hash[:2] / content_hash[2:]

    def _read(self, content_hash: str) -> Optional[bytes]:
        path = self._blob_path(content_hash)
        if not path.exists():
            return None
        return path.read_bytes()

    def _write(self, content_hash: str, data: bytes) -> None:
        path = self._blob_path(content_hash)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(data)
        tmp.replace(path)

    def _delete(self, content_hash: str) -> None:
        path = self._blob_path(content_hash)
        if path.exists():
            path.unlink()

    def _list(self) -> list[str]:
        hashes = []
        for shard in self.root.iterdir():
            if shard.is_dir() and len(shard.name) == 2:
                for blob in shard.iterdir():
                    if not blob.name.endswith(".tmp"):
                        hashes.append(shard.name + blob.name)
        return hashes

    def _load_sidecars(self) -> None:
        refusal_path = self.root / "refusals.jsonl"
        if refusal_path.exists():
            for line in refusal_path.read_bytes().splitlines():
                if line:
                    rec = parse_canonical(line)
                    self._refusals.append(
                        Refusal(kind=rec["kind"], value=rec["value"], added_at=rec["added_at"])
                    )
        attr_path = self.root / "attributions.jsonl"
        if attr_path.exists():
            for line in attr_path.read_bytes().splitlines():
                if line:
                    rec = parse_canonical(line)
                    self._attribution.setdefault(rec["content_hash"], []).append(
                        Attribution(stream_id=rec.get("stream_id"), author=rec.get("author"))
                    )

    def _persist_refusal(self, refusal: Refusal) -> None:
        with open(self.root / "refusals.jsonl", "ab") as fh:
            fh.write(canonical_json_bytes(refusal.to_dict()) + b"\n")

    def _persist_attribution(self, content_hash: str, attribution: Attribution) -> None:
        rec: dict = {"content_hash": content_hash}
        if attribution.stream_id is not None:
            rec["stream_id"] = attribution.stream_id
        if attribution.author is not None:
            rec["author"] = attribution.author
        with open(self.root / "attributions.jsonl", "ab") as fh:
            fh.write(canonical_json_bytes(rec) + b"\n")


class RemoteBlobStore(BlobStore):
    """A peer node's /blobs endpoints exposed through the store interface."""

    def __init__(self, config: BlobStoreConfig):
        super().__init__(config)
        self.base_url = config.location.rstrip("/")

    @property
    def url(self) -> str:
        return self.base_url

    def _client(self):
        import httpx

        return httpx.Client(base_url=self.base_url, timeout=10.0)

    def _read(self, content_hash: str) -> Optional[bytes]:
        with self._client() as client:
            resp = client.get(f"/blobs/{content_hash}")
        if resp.status_code == 404:
            return None
        resp.raise_for_status()
        return resp.content

    def _write(self, content_hash: str, data: bytes) -> None:
        with self._client() as client:
            resp = client.post("/blobs", content=data)
        if resp.status_code == 403:
            raise Refused(f"remote store {self.base_url} refused blob")
        resp.raise_for_status()

    def _delete(self, content_hash: str) -> None:
        raise NotImplementedError("remote stores are deleted by their operator")

    def _list(self) -> list[str]:
        return []


def open_store(config: BlobStoreConfig) -> BlobStore:
    if config.backend == "MEMORY":
        return MemoryBlobStore(config)
    if config.backend == "FILESYSTEM":
        return FilesystemBlobStore(config)
    if config.backend == "REMOTE":
        return RemoteBlobStore(config)
    raise ValueError(f"unknown store backend {config.backend!r}")


def replicate(content_hash: str, source: BlobStore, dest: BlobStore,
              stream_id: Optional[str] = None, author: Optional[str] = None) -> bool:
    """Copy one blob; no-op (False) when the destination already has it."""
    if dest.has(content_hash):
        return False
    data = source.get(content_hash)
    dest.put(data, stream_id=stream_id, author=author)
    return True


class StoreResolver:
    """Maps hint store_urls onto reachable stores. In-process stores register
    under their url; file: and http(s): urls are opened on demand."""

    def __init__(self) -> None:
        self._by_url: dict[str, BlobStore] = {}

    def register(self, store: BlobStore) -> None:
        self._by_url[store.url] = store

    def open(self, store_url: str) -> Optional[BlobStore]:
        if store_url in self._by_url:
            return self._by_url[store_url]
        try:
            if store_url.startswith("file:"):
                path = store_url[len("file:"):]
                return FilesystemBlobStore(
                    BlobStoreConfig(store_id=store_url, backend="FILESYSTEM", location=path)
                )
            if store_url.startswith("http://") or store_url.startswith("https://"):
                return RemoteBlobStore(
                    BlobStoreConfig(store_id=store_url, backend="REMOTE", location=store_url)
                )
        except Exception:
            return None
        return None


def resolve(
    content_hash: str,
    hints: Iterable[StorageHint],
    fallback_stores: Iterable[BlobStore] = (),
    resolver: Optional[StoreResolver] = None,
) -> Optional[bytes]:
    """Try hints newest-first, then fallback stores; first integrity-verified
    blob wins. A dead hint is a resolution miss, never an error."""
    ordered = sorted(
        (h for h in hints if h.content_hash == content_hash),
        key=lambda h: (-h.issued_at, h.store_url),
    )
    for hint in ordered:
        store = resolver.open(hint.store_url) if resolver is not None else None
        if store is None:
            continue
        try:
            return store.get(content_hash)
        except Exception:
            continue
    for store in fallback_stores:
        try:
            return store.get(content_hash)
        except Exception:
            continue
    return None


def gc_unreferenced(store: BlobStore, referenced: set[str]) -> list[str]:
    """Drop blobs referenced by no locally held stream. Manual, per store."""
    dropped = []
    for content_hash in store.list_hashes():
        if content_hash not in referenced:
            store.delete(content_hash)
            dropped.append(content_hash)
    return dropped


class HintRegistry:
    """Node-local set of storage hints, persisted as one record per line."""

    def __init__(self, path: Optional[Path] = None):
        self.path = path
        self._hints: list[StorageHint] = []
        self._lock = threading.Lock()
        if path is not None and path.exists():
            for line in path.read_bytes().splitlines():
                if line:
                    self._hints.append(StorageHint.from_record(parse_canonical(line)))

    def add(self, hint: StorageHint) -> None:
        with self._lock:
            key = (hint.content_hash, hint.store_url, hint.issued_at)
            if any((h.content_hash, h.store_url, h.issued_at) == key for h in self._hints):
                return
            self._hints.append(hint)
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "ab") as fh:
                    fh.write(canonical_json_bytes(hint.to_record()) + b"\n")

    def for_hash(self, content_hash: str) -> list[StorageHint]:
        with self._lock:
            return [h for h in self._hints if h.content_hash == content_hash]

    def all(self) -> list[StorageHint]:
        with self._lock:
            return list(self._hints)
