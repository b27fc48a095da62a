"""Plurinet: signed append-only content streams with composable moderation.

Content lives in per-author hash chains; moderation is expressed as separate
streams of signed annotations that readers combine however they like. Blobs
are content-addressed and portable across storage providers; nodes converge
through pull-based gossip.
"""

from .canonical import canonical_json_bytes, parse_canonical, sha256_hex
from .errors import (
    BadDigest,
    ConfigError,
    ForkedStream,
    IntegrityFailure,
    NotFound,
    PeerUnreachable,
    PlurinetError,
    Refused,
    SnapshotMismatch,
    UnauthorizedWriter,
    ValidationRejected,
)
from .identity import Keypair, Principal, generate_keypair, sign, verify
from .stream import (
    ContentEntry,
    GenesisRecord,
    StreamState,
    StreamStore,
    append,
    create_stream,
    detect_fork,
    stream_id_for,
    verify_stream,
)
from .moderation import (
    EffectivePolicy,
    ModAction,
    Target,
    apply_filter,
    combine,
    compare_streams,
    resolve,
)
from .aggregator import (
    ContentIndex,
    Feed,
    ForumConfig,
    SubscriptionSet,
    assemble_follow_feed,
    assemble_forum_feed,
    feed_diff,
    rank_moderators,
)
from .storage import (
    BlobStoreConfig,
    FilesystemBlobStore,
    MemoryBlobStore,
    RemoteBlobStore,
    StorageHint,
    StoreResolver,
    open_store,
    replicate,
)
from .storage import resolve as resolve_blob
from .sync import Simulation, SyncMessage, gossip_round, run_simulation, sync_stream
from .migration import export_bundle, import_bundle, switch_provider
from .node import Node, NodeConfig

__version__ = "0.1.0"

__all__ = [
    "BadDigest", "BlobStoreConfig", "ConfigError", "ContentEntry",
    "ContentIndex", "EffectivePolicy", "Feed", "FilesystemBlobStore",
    "ForkedStream", "ForumConfig", "GenesisRecord", "IntegrityFailure",
    "Keypair", "MemoryBlobStore", "ModAction", "Node", "NodeConfig",
    "NotFound", "PeerUnreachable", "PlurinetError", "Principal", "Refused",
    "RemoteBlobStore", "Simulation", "SnapshotMismatch", "StorageHint",
    "StoreResolver", "StreamState", "StreamStore", "SubscriptionSet",
    "SyncMessage", "Target", "UnauthorizedWriter", "ValidationRejected",
    "append", "apply_filter", "assemble_follow_feed", "assemble_forum_feed",
    "canonical_json_bytes", "combine", "compare_streams", "create_stream",
    "detect_fork", "export_bundle", "feed_diff", "generate_keypair",
    "gossip_round", "import_bundle", "open_store", "parse_canonical",
    "rank_moderators", "replicate", "resolve", "resolve_blob", "run_simulation",
    "sha256_hex", "sign", "stream_id_for", "switch_provider", "sync_stream",
    "verify", "verify_stream",
]
