"""A node: streams, blob stores, hints, index cache, feeds, and migration,
wired together under one data directory. The daemon API and the CLI are both
thin layers over this class.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .aggregator import (
    ContentIndex,
    Feed,
    ForumConfig,
    ModeratorRanking,
    SubscriptionSet,
    assemble_follow_feed,
    assemble_forum_feed,
    feed_diff,
    rank_moderators,
)
from .canonical import canonical_json_bytes, parse_canonical, sha256_hex
from .errors import ConfigError, NotFound
from .identity import Keypair, generate_keypair
from .migration import MigrationReport, export_bundle, import_bundle, switch_provider
from .moderation import ContentionReport, ModAction, ModerationDiff, compare_streams
from .storage import (
    BlobStore,
    BlobStoreConfig,
    HintRegistry,
    StoreResolver,
    open_store,
    gc_unreferenced,
    resolve as resolve_blob,
)
from .stream import StreamState, StreamStore
from .sync import GossipReport, HttpPeer, LocalPeer, PeerClient, gossip_round, sync_stream

DEFAULT_LISTEN = "127.0.0.1:7997"


@dataclass(frozen=True)
class PeerAddress:
    endpoint: str  # URL for real peers, token for simulated ones
    node_id: Optional[str] = None  # hex public key, learned on first contact

    def to_dict(self) -> dict:
        rec: dict = {"endpoint": self.endpoint}
        if self.node_id is not None:
            rec["node_id"] = self.node_id
        return rec


def _check_keys(rec: Mapping, allowed: set, context: str) -> None:
    for key in rec:
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r} in {context}")


@dataclass(frozen=True)
class NodeConfig:
    data_dir: Optional[str] = None
    listen_addr: str = DEFAULT_LISTEN
    stores: tuple = ()  # BlobStoreConfig
    forums: tuple = ()  # ForumConfig
    default_mod_streams: tuple = ()  # (stream_id, locked)
    peers: tuple = ()  # PeerAddress

    @classmethod
    def from_dict(cls, rec: Mapping) -> "NodeConfig":
        _check_keys(rec, {"data_dir", "listen_addr", "stores", "forums",
                          "default_mod_streams", "peers"}, "config")
        stores = []
        for s in rec.get("stores", ()):
            _check_keys(s, {"store_id", "backend", "location"}, "store")
            stores.append(BlobStoreConfig.from_dict(s))
        forums = []
        for f in rec.get("forums", ()):
            _check_keys(f, {"forum_id", "content_streams", "moderator_streams",
                            "default_streams"}, "forum")
            forums.append(ForumConfig.from_dict(f))
        defaults = []
        for d in rec.get("default_mod_streams", ()):
            _check_keys(d, {"stream_id", "locked"}, "default_mod_streams")
            defaults.append((d["stream_id"], bool(d["locked"])))
        peers = []
        for p in rec.get("peers", ()):
            _check_keys(p, {"endpoint", "node_id"}, "peer")
            peers.append(PeerAddress(endpoint=p["endpoint"], node_id=p.get("node_id")))
        return cls(
            data_dir=rec.get("data_dir"),
            listen_addr=rec.get("listen_addr", DEFAULT_LISTEN),
            stores=tuple(stores),
            forums=tuple(forums),
            default_mod_streams=tuple(defaults),
            peers=tuple(peers),
        )

    @classmethod
    def from_file(cls, path: Path) -> "NodeConfig":
        try:
            rec = parse_canonical(Path(path).read_bytes())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"unreadable config {path}: {exc}") from exc
        return cls.from_dict(rec)

    def to_dict(self) -> dict:
        rec: dict = {
            "default_mod_streams": [
                {"locked": locked, "stream_id": sid}
                for sid, locked in self.default_mod_streams
            ],
            "forums": [f.to_dict() for f in self.forums],
            "listen_addr": self.listen_addr,
            "peers": [p.to_dict() for p in self.peers],
            "stores": [s.to_dict() for s in self.stores],
        }
        if self.data_dir is not None:
            rec["data_dir"] = self.data_dir
        return rec


class Node:
    def __init__(self, data_dir: Path, config: Optional[NodeConfig] = None):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.config = config or NodeConfig()
        self.streams = StreamStore(self.data_dir / "streams")
        self.hints = HintRegistry(self.data_dir / "hints.jsonl")
        self.resolver = StoreResolver()
        self.stores: list[BlobStore] = []
        store_configs = list(self.config.stores) or [
            BlobStoreConfig(store_id="local", backend="FILESYSTEM",
                            location=str(self.data_dir / "blobs"))
        ]
        for cfg in store_configs:
            store = open_store(cfg)
            self.stores.append(store)
            self.resolver.register(store)
        self.keypair = self._load_node_key()
        self._forums = {f.forum_id: self._with_defaults(f) for f in self.config.forums}
        self._index_lock = threading.Lock()
        self._index_cache: Optional[tuple[str, ContentIndex]] = None

    # -- identity ------------------------------------------------------------

    def _load_node_key(self) -> Keypair:
        path = self.data_dir / "node.key"
        if path.exists():
            return generate_keypair(bytes.fromhex(path.read_text().strip()))
        keypair = generate_keypair()
        path.write_text(keypair.seed.hex() + "\n")
        os.chmod(path, 0o600)
        return keypair

    @property
    def keys_dir(self) -> Path:
        path = self.data_dir / "keys"
        path.mkdir(exist_ok=True)
        return path

    def save_user_key(self, keypair: Keypair) -> Path:
        path = self.keys_dir / f"{keypair.principal.principal_id}.key"
        path.write_text(keypair.seed.hex() + "\n")
        os.chmod(path, 0o600)
        return path

    def load_user_key(self, ref: str) -> Keypair:
        """Accepts a principal id, a key-file path, or a raw seed hex."""
        candidate = self.keys_dir / f"{ref.removeprefix('ed25519:')}.key"
        if candidate.exists():
            return generate_keypair(bytes.fromhex(candidate.read_text().strip()))
        path = Path(ref)
        if path.exists():
            return generate_keypair(bytes.fromhex(path.read_text().strip()))
        try:
            seed = bytes.fromhex(ref)
        except ValueError:
            raise NotFound(f"no key found for {ref!r}")
        if len(seed) != 32:
            raise NotFound(f"no key found for {ref!r}")
        return generate_keypair(seed)

    # -- forums --------------------------------------------------------------

    def _with_defaults(self, forum: ForumConfig) -> ForumConfig:
        if forum.default_streams or not self.config.default_mod_streams:
            return forum
        return replace(forum, default_streams=tuple(self.config.default_mod_streams))

    def forum(self, forum_id: str) -> ForumConfig:
        if forum_id not in self._forums:
            raise NotFound(f"unknown forum {forum_id!r}")
        return self._forums[forum_id]

    def forums(self) -> list:
        return [self._forums[fid] for fid in sorted(self._forums)]

    def add_forum(self, forum: ForumConfig) -> None:
        self._forums[forum.forum_id] = self._with_defaults(forum)

    # -- blobs ---------------------------------------------------------------

    @property
    def primary_store(self) -> BlobStore:
        return self.stores[0]

    def store_by_id(self, store_id: str) -> BlobStore:
        for store in self.stores:
            if store.store_id == store_id:
                return store
        raise NotFound(f"unknown store {store_id!r}")

    def put_blob(self, data: bytes, stream_id: Optional[str] = None,
                 author: Optional[str] = None) -> str:
        return self.primary_store.put(data, stream_id=stream_id, author=author)

    def get_blob(self, content_hash: str) -> bytes:
        data = self.blob_lookup(content_hash)
        if data is None:
            raise NotFound(f"blob {content_hash} not found")
        return data

    def blob_lookup(self, content_hash: str) -> Optional[bytes]:
        """Local stores first, then hinted locations. Never raises."""
        return resolve_blob(
            content_hash,
            self.hints.for_hash(content_hash),
            fallback_stores=self.stores,
            resolver=self.resolver,
        )

    # -- index & feeds -------------------------------------------------------

    def _fingerprint(self) -> str:
        rows = [
            {"forked": s.forked, "head_hash": s.head_hash,
             "head_seq": s.head_seq, "stream_id": s.stream_id}
            for s in self.streams.states()
        ]
        return sha256_hex(canonical_json_bytes(rows))

    def index(self) -> ContentIndex:
        fingerprint = self._fingerprint()
        with self._index_lock:
            if self._index_cache is not None and self._index_cache[0] == fingerprint:
                return self._index_cache[1]
        built = ContentIndex().ingest(self.streams.states(), self.blob_lookup)
        with self._index_lock:
            self._index_cache = (fingerprint, built)
        return built

    def fetch(self, stream_id: str) -> Optional[StreamState]:
        return self.streams.get(stream_id)

    def forum_feed(self, forum_id: str, mods: Optional[Sequence[str]] = None,
                   disabled: Iterable[str] = (), as_user: Optional[str] = None) -> Feed:
        config = self.forum(forum_id)
        if mods is not None:
            config = replace(config, moderator_streams=tuple(mods))
        subs = SubscriptionSet(user=as_user, disabled_defaults=frozenset(disabled))
        return assemble_forum_feed(config, self.index(), subs, self.fetch)

    def raw_forum_feed(self, forum_id: str) -> Feed:
        config = replace(self.forum(forum_id), moderator_streams=(), default_streams=())
        return assemble_forum_feed(config, self.index(), SubscriptionSet(), self.fetch)

    def forum_diff(self, forum_id: str, mods: Optional[Sequence[str]] = None,
                   disabled: Iterable[str] = ()) -> ModerationDiff:
        moderated = self.forum_feed(forum_id, mods=mods, disabled=disabled)
        return feed_diff(moderated, self.raw_forum_feed(forum_id))

    def follow_feed(self, follows: Iterable[str], muted: Iterable[str] = ()) -> Feed:
        subs = SubscriptionSet(follows=frozenset(follows), muted=frozenset(muted))
        return assemble_follow_feed(subs, self.index(), self.fetch)

    def rank(self, candidates: Sequence[str], user_history: Sequence[ModAction] = (),
             now: Optional[float] = None) -> ModeratorRanking:
        return rank_moderators(candidates, self.index(), user_history, self.fetch, now=now)

    def compare(self, a: str, b: str,
                raw_streams: Optional[Sequence[str]] = None) -> ContentionReport:
        raw = self.index().content_entries(raw_streams)
        return compare_streams(self.streams.require(a), self.streams.require(b),
                               raw, self.fetch)

    # -- admin ---------------------------------------------------------------

    def refuse(self, store_id: str, kind: str, value: str) -> None:
        self.store_by_id(store_id).refuse(kind, value)

    def gc(self, store_id: Optional[str] = None) -> dict:
        referenced = {
            e.content_hash for s in self.streams.states() for e in s.entries
        }
        targets = [self.store_by_id(store_id)] if store_id else [
            s for s in self.stores if s.config.backend != "REMOTE"
        ]
        return {store.store_id: gc_unreferenced(store, referenced) for store in targets}

    def switch_provider(self, stream_id: str, old_store_id: str,
                        new_store_id: str) -> MigrationReport:
        state = self.streams.require(stream_id)
        return switch_provider(
            state,
            self.store_by_id(old_store_id),
            self.store_by_id(new_store_id),
            self.keypair,
            self.hints,
        )

    # -- migration -----------------------------------------------------------

    def export(self, out_dir: Path, stream_ids: Optional[Sequence[str]] = None,
               created_at: Optional[int] = None) -> tuple[dict, list]:
        states = (self.streams.states() if stream_ids is None
                  else [self.streams.require(sid) for sid in stream_ids])
        return export_bundle(
            states,
            self.blob_lookup,
            self.hints.all(),
            out_dir,
            created_at=created_at,
            forums=[f.to_dict() for f in self.forums()],
        )

    def import_from(self, bundle_dir: Path) -> MigrationReport:
        report = import_bundle(bundle_dir, self.streams, self.primary_store, self.hints)
        manifest_forums = []
        try:
            from .migration import read_manifest

            manifest_forums = read_manifest(bundle_dir).get("forums", [])
        except Exception:
            pass
        for rec in manifest_forums:
            try:
                forum = ForumConfig.from_dict(rec)
            except Exception:
                continue
            if forum.forum_id not in self._forums:
                self.add_forum(forum)
        return report

    # -- sync ----------------------------------------------------------------

    def peer_clients(self) -> dict:
        return {p.endpoint: HttpPeer(p.endpoint) for p in self.config.peers}

    def gossip(self) -> GossipReport:
        return gossip_round(self.streams, self.peer_clients())

    def sync_once(self, endpoint: str, stream_id: Optional[str] = None) -> list:
        peer: PeerClient = HttpPeer(endpoint)
        if stream_id is not None:
            return [sync_stream(self.streams, peer, stream_id)]
        ids = sorted(set(peer.stream_ids()) | set(self.streams.ids()))
        return [sync_stream(self.streams, peer, sid) for sid in ids]

    def local_peer(self) -> LocalPeer:
        return LocalPeer(self.streams, self.keypair)
