"""Aggregation: cache and index verified streams, assemble content plus
chosen moderation into deterministic feeds, rank moderators, and account for
every removal.

Feeds are pure functions of an index snapshot: same snapshot + same
subscriptions + same configs => byte-identical feed, including the policy
digest and generated_at (which is derived from entry timestamps, not wall
clock).
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .canonical import canonical_json_bytes, sha256_hex
from .errors import SnapshotMismatch, ValidationRejected
from .moderation import (
    COMBINE_DENY_OVERRIDES,
    COMBINE_UNION,
    EMPTY_POLICY,
    MODE_ALLOW_LIST,
    MODE_DENY_LIST,
    EffectivePolicy,
    Fetcher,
    ModAction,
    ModerationDiff,
    Target,
    apply_filter,
    combine,
    entry_targets,
    resolve,
)
from .stream import ContentEntry, StreamState

CONTENT_KINDS = ("POST", "REPLY", "EDIT")

SECONDS_PER_DAY = 86400.0
RECENCY_HALF_LIFE_DAYS = 30.0
WEIGHT_AGREEMENT = 0.5
WEIGHT_COVERAGE = 0.3
WEIGHT_RECENCY = 0.2
AGREEMENT_PRIOR = 0.5


@dataclass(frozen=True)
class ForumConfig:
    """A Reddit-style forum: fixed content streams, a fixed moderator set
    unioned with deny-overrides, plus optional default (authority) streams
    that may be locked against reader disablement."""

    forum_id: str
    content_streams: tuple[str, ...]
    moderator_streams: tuple[str, ...] = ()
    default_streams: tuple[tuple[str, bool], ...] = ()  # (stream_id, locked)

    def __post_init__(self) -> None:
        if not self.content_streams:
            raise ValidationRejected("forum needs at least one content stream")

    def to_dict(self) -> dict:
        return {
            "content_streams": list(self.content_streams),
            "default_streams": [
                {"locked": locked, "stream_id": sid} for sid, locked in self.default_streams
            ],
            "forum_id": self.forum_id,
            "moderator_streams": list(self.moderator_streams),
        }

    @classmethod
    def from_dict(cls, rec: Mapping) -> "ForumConfig":
        return cls(
            forum_id=rec["forum_id"],
            content_streams=tuple(rec["content_streams"]),
            moderator_streams=tuple(rec.get("moderator_streams", ())),
            default_streams=tuple(
                (d["stream_id"], bool(d["locked"])) for d in rec.get("default_streams", ())
            ),
        )


@dataclass(frozen=True)
class SubscriptionSet:
    """A reader's view choices: followed allow-streams, muted content streams,
    and which (unlocked) default moderation streams they disabled."""

    user: Optional[str] = None  # encoded principal
    follows: frozenset = frozenset()
    muted: frozenset = frozenset()
    disabled_defaults: frozenset = frozenset()

    def __post_init__(self) -> None:
        if self.follows & self.muted:
            raise ValidationRejected("follows and muted must be disjoint")


@dataclass(frozen=True)
class FeedItem:
    entry: ContentEntry
    payload: Optional[bytes]
    unresolved: bool
    labels: tuple = ()  # sorted (label, source principal) pairs
    scores: tuple = ()  # sorted (score, source principal) pairs
    provenance: tuple = ()  # sorted stream ids whose actions touched this item
    revealed_by: tuple = ()  # allow sources (ALLOW_LIST / deny exemptions)

    def to_dict(self) -> dict:
        entry_rec = self.entry.to_record()
        payload_text: Optional[str]
        if self.payload is None:
            payload_text = None
        else:
            try:
                payload_text = self.payload.decode("utf-8")
            except UnicodeDecodeError:
                payload_text = None
        return {
            "entry": entry_rec,
            "labels": [[label, src] for label, src in self.labels],
            "payload": payload_text,
            "provenance": list(self.provenance),
            "revealed_by": list(self.revealed_by),
            "scores": [[score, src] for score, src in self.scores],
            "unresolved": self.unresolved,
        }


@dataclass(frozen=True)
class Feed:
    items: tuple
    generated_at: int
    policy_digest: str
    snapshot_id: str
    mode: str
    warnings: tuple = ()
    diff: ModerationDiff = field(default_factory=ModerationDiff)
    raw_count: int = 0
    forum_id: Optional[str] = None

    def refs(self) -> list:
        return [item.entry.ref for item in self.items]

    def to_dict(self) -> dict:
        rec = {
            "generated_at": self.generated_at,
            "hidden_count": len(self.diff.hidden),
            "items": [item.to_dict() for item in self.items],
            "mode": self.mode,
            "policy_digest": self.policy_digest,
            "raw_count": self.raw_count,
            "snapshot_id": self.snapshot_id,
            "warnings": list(self.warnings),
        }
        if self.forum_id is not None:
            rec["forum_id"] = self.forum_id
        return rec


class ContentIndex:
    """Index over verified entries: by author, stream, hash, and day bucket.

    Ingest is idempotent; rebuilding from the same streams yields an index
    with identical query results (compared via digest()). Payloads that fail
    to resolve are marked UNRESOLVED (payload None) and re-attempted on the
    next ingest.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._entries: dict[tuple, ContentEntry] = {}
        self._payloads: dict[str, Optional[bytes]] = {}
        self._by_author: dict[str, set] = {}
        self._by_hash: dict[str, set] = {}
        self._by_day: dict[int, set] = {}
        self._heads: dict[str, tuple] = {}  # stream_id -> (head_seq, head_hash)
        self._kinds: dict[str, str] = {}  # stream_id -> stream_kind

    # -- queries -------------------------------------------------------------

    @property
    def snapshot_id(self) -> str:
        with self._lock:
            heads = [
                {"head_hash": h, "head_seq": s, "stream_id": sid}
                for sid, (s, h) in sorted(self._heads.items())
            ]
        return sha256_hex(canonical_json_bytes(heads))

    def digest(self) -> str:
        """Content-sensitive digest for rebuild-equivalence checks."""
        with self._lock:
            body = {
                "entries": [
                    self._entries[ref].to_record() for ref in sorted(self._entries)
                ],
                "payloads": sorted(
                    [h, sha256_hex(p) if p is not None else None]
                    for h, p in self._payloads.items()
                ),
            }
        return sha256_hex(canonical_json_bytes(body))

    def stream_ids(self) -> list:
        with self._lock:
            return sorted(self._heads)

    def seq_range(self, stream_id: str) -> Optional[tuple]:
        with self._lock:
            refs = [seq for sid, seq in self._entries if sid == stream_id]
        if not refs:
            return None
        return (min(refs), max(refs))

    def entry(self, stream_id: str, seq: int) -> Optional[ContentEntry]:
        with self._lock:
            return self._entries.get((stream_id, seq))

    def payload(self, content_hash: str) -> Optional[bytes]:
        with self._lock:
            return self._payloads.get(content_hash)

    def refs_by_author(self, author_encoded: str) -> list:
        with self._lock:
            return sorted(self._by_author.get(author_encoded, ()))

    def refs_by_hash(self, content_hash: str) -> list:
        with self._lock:
            return sorted(self._by_hash.get(content_hash, ()))

    def refs_by_day(self, day: int) -> list:
        with self._lock:
            return sorted(self._by_day.get(day, ()))

    def content_entries(self, stream_ids: Optional[Iterable[str]] = None,
                        kinds: Sequence[str] = CONTENT_KINDS) -> list:
        """Entries of content kinds, ordered (timestamp desc, stream_id, seq)."""
        wanted = None if stream_ids is None else set(stream_ids)
        with self._lock:
            entries = [
                e for e in self._entries.values()
                if e.payload_kind in kinds and (wanted is None or e.stream_id in wanted)
            ]
        entries.sort(key=lambda e: (-e.timestamp, e.stream_id, e.seq))
        return entries

    def max_timestamp(self) -> int:
        with self._lock:
            return max((e.timestamp for e in self._entries.values()), default=0)

    # -- mutation ------------------------------------------------------------

    def ingest(self, streams: Iterable[StreamState],
               resolver: Optional[Callable[[str], Optional[bytes]]] = None) -> "ContentIndex":
        for state in streams:
            with self._lock:
                self._heads[state.stream_id] = (state.head_seq, state.head_hash)
                self._kinds[state.stream_id] = state.genesis.stream_kind
            for entry in state.entries:
                self._ingest_entry(entry, resolver)
        return self

    def _inband_payload(self, entry: ContentEntry) -> Optional[bytes]:
        if entry.payload_kind == "MOD_ACTION" and entry.action is not None:
            return canonical_json_bytes(entry.action)
        if entry.payload_kind == "WRITER_UPDATE" and entry.writers is not None:
            return canonical_json_bytes({"writers": [w.public_hex for w in entry.writers]})
        if entry.payload_kind == "TOMBSTONE" and entry.reply_to is not None:
            return canonical_json_bytes({"tombstone_of": entry.reply_to[1]})
        return None

    def _ingest_entry(self, entry: ContentEntry,
                      resolver: Optional[Callable[[str], Optional[bytes]]]) -> None:
        with self._lock:
            known = entry.ref in self._entries
            needs_payload = self._payloads.get(entry.content_hash) is None
        if known and not needs_payload:
            return
        payload = self._inband_payload(entry)
        if payload is None and resolver is not None:
            try:
                payload = resolver(entry.content_hash)
            except Exception:
                payload = None
        if payload is not None and sha256_hex(payload) != entry.content_hash:
            payload = None  # corrupt resolution is a miss, never wrong bytes
        with self._lock:
            self._entries[entry.ref] = entry
            if payload is not None or entry.content_hash not in self._payloads:
                self._payloads[entry.content_hash] = payload
            self._by_author.setdefault(entry.author.encoded, set()).add(entry.ref)
            self._by_hash.setdefault(entry.content_hash, set()).add(entry.ref)
            self._by_day.setdefault(entry.timestamp // 86400, set()).add(entry.ref)


# ---------------------------------------------------------------------------
# feed assembly


def _resolve_all(stream_ids: Sequence[str], fetch: Fetcher,
                 warnings: list) -> list[EffectivePolicy]:
    policies = []
    for sid in stream_ids:
        try:
            state = fetch(sid)
        except Exception as exc:
            warnings.append(f"moderation stream {sid} unavailable: {exc}")
            continue
        if state is None:
            warnings.append(f"moderation stream {sid} unavailable: not found")
            continue
        policies.append(resolve(state, fetch))
    return policies


def _build_items(visible: Sequence[ContentEntry], index: ContentIndex,
                 policy: EffectivePolicy, diff: ModerationDiff) -> tuple:
    items = []
    for entry in visible:
        keys = entry_targets(entry)
        labels: set = set()
        scores: set = set()
        provenance: set = set()
        for t in keys:
            labels.update(policy.labels.get(t, ()))
            scores.update(policy.scores.get(t, ()))
            provenance.update(policy.sources_for(t))
        payload = index.payload(entry.content_hash)
        revealed = diff.revealed_only_by.get(entry.ref, frozenset())
        items.append(FeedItem(
            entry=entry,
            payload=payload,
            unresolved=payload is None,
            labels=tuple(sorted(labels)),
            scores=tuple(sorted(scores, key=lambda p: (p[1], p[0]))),
            provenance=tuple(sorted(provenance)),
            revealed_by=tuple(sorted(revealed)),
        ))
    return tuple(items)


def effective_forum_streams(config: ForumConfig, subs: SubscriptionSet) -> list:
    """The moderator streams actually applied: configured moderators, locked
    defaults unconditionally, unlocked defaults unless the reader disabled
    them."""
    sids = list(config.moderator_streams)
    for sid, locked in config.default_streams:
        if locked or sid not in subs.disabled_defaults:
            sids.append(sid)
    return sids


def assemble_forum_feed(config: ForumConfig, index: ContentIndex,
                        subs: SubscriptionSet, fetch: Fetcher) -> Feed:
    warnings: list = []
    mod_sids = effective_forum_streams(config, subs)
    policies = _resolve_all(mod_sids, fetch, warnings)
    policy = combine(policies, COMBINE_DENY_OVERRIDES) if policies else EMPTY_POLICY

    known = set(index.stream_ids())
    for sid in config.content_streams:
        if sid not in known:
            warnings.append(f"content stream {sid} not in index")
    raw = index.content_entries(config.content_streams)
    visible, diff = apply_filter(policy, raw, MODE_DENY_LIST)
    items = _build_items(visible, index, policy, diff)
    return Feed(
        items=items,
        generated_at=index.max_timestamp(),
        policy_digest=policy.digest,
        snapshot_id=index.snapshot_id,
        mode=MODE_DENY_LIST,
        warnings=tuple(warnings) + tuple(policy.warnings),
        diff=diff,
        raw_count=len(raw),
        forum_id=config.forum_id,
    )


def assemble_follow_feed(subs: SubscriptionSet, index: ContentIndex,
                         fetch: Fetcher) -> Feed:
    warnings: list = []
    policies = _resolve_all(sorted(subs.follows), fetch, warnings)
    policy = combine(policies, COMBINE_UNION) if policies else EMPTY_POLICY
    raw = index.content_entries(None)
    visible, diff = apply_filter(policy, raw, MODE_ALLOW_LIST)
    if subs.muted:
        kept = []
        muted_hidden = list(diff.hidden)
        for entry in visible:
            if entry.stream_id in subs.muted:
                muted_hidden.append((entry.ref, frozenset({f"muted:{entry.stream_id}"})))
            else:
                kept.append(entry)
        visible = kept
        diff = ModerationDiff(
            hidden=tuple(muted_hidden),
            revealed_only_by=diff.revealed_only_by,
            label_summary=diff.label_summary,
        )
    items = _build_items(visible, index, policy, diff)
    return Feed(
        items=items,
        generated_at=index.max_timestamp(),
        policy_digest=policy.digest,
        snapshot_id=index.snapshot_id,
        mode=MODE_ALLOW_LIST,
        warnings=tuple(warnings) + tuple(policy.warnings),
        diff=diff,
        raw_count=len(raw),
    )


def feed_diff(feed_with: Feed, raw_feed: Feed) -> ModerationDiff:
    """Exactly the items in raw and not in the moderated feed, each with its
    responsible sources. Feeds must come from the same index snapshot."""
    if feed_with.snapshot_id != raw_feed.snapshot_id:
        raise SnapshotMismatch(
            f"feeds come from different snapshots "
            f"({feed_with.snapshot_id[:12]} vs {raw_feed.snapshot_id[:12]})"
        )
    present = set(feed_with.refs())
    source_map = dict(feed_with.diff.hidden)
    hidden = []
    for item in raw_feed.items:
        ref = item.entry.ref
        if ref not in present:
            hidden.append((ref, source_map.get(ref, frozenset({"unknown"}))))
    return ModerationDiff(
        hidden=tuple(hidden),
        revealed_only_by=feed_with.diff.revealed_only_by,
        label_summary=feed_with.diff.label_summary,
    )


# ---------------------------------------------------------------------------
# moderator ranking


@dataclass(frozen=True)
class ModeratorMetrics:
    stream_id: str
    coverage: float
    agreement: float
    recency_seconds: Optional[float]
    recency_score: float
    composite: float

    def to_dict(self) -> dict:
        return {
            "agreement": self.agreement,
            "composite": self.composite,
            "coverage": self.coverage,
            "recency_score": self.recency_score,
            "recency_seconds": self.recency_seconds,
            "stream_id": self.stream_id,
        }


@dataclass(frozen=True)
class ModeratorRanking:
    metrics: Mapping[str, ModeratorMetrics]
    order: tuple  # stream ids, best first; ties broken by StreamId ascending
    warnings: tuple = ()

    def to_dict(self) -> dict:
        return {
            "order": list(self.order),
            "ranking": [self.metrics[sid].to_dict() for sid in self.order],
            "warnings": list(self.warnings),
        }


def _action_matched(action: ModAction, policy: EffectivePolicy) -> bool:
    target = action.target
    if action.verb == "ALLOW":
        return target in policy.allow
    if action.verb == "DENY":
        return target in policy.deny
    if action.verb == "LABEL":
        return any(label == action.label for label, _src in policy.labels.get(target, ()))
    if action.verb == "SCORE":
        return target in policy.scores
    if action.verb == "INCLUDE_STREAM":
        return target.stream_id in policy.sources
    return target.stream_id not in policy.sources  # EXCLUDE_STREAM


def rank_moderators(candidates: Sequence[str], index: ContentIndex,
                    user_history: Sequence[ModAction], fetch: Fetcher,
                    now: Optional[float] = None) -> ModeratorRanking:
    if now is None:
        now = time.time()
    warnings: list = []
    raw = index.content_entries(None)
    metrics: dict[str, ModeratorMetrics] = {}
    for sid in candidates:
        try:
            state = fetch(sid)
        except Exception:
            state = None
        if state is None:
            warnings.append(f"candidate stream {sid} unavailable")
            metrics[sid] = ModeratorMetrics(sid, 0.0, AGREEMENT_PRIOR if not user_history
                                            else 0.0, None, 0.0,
                                            WEIGHT_AGREEMENT * (AGREEMENT_PRIOR
                                                                if not user_history else 0.0))
            continue
        policy = resolve(state, fetch)
        acted = policy.acted_targets()
        covered = sum(1 for e in raw if any(t in acted for t in entry_targets(e)))
        coverage = covered / len(raw) if raw else 0.0
        if user_history:
            matched = sum(1 for a in user_history if _action_matched(a, policy))
            agreement = matched / len(user_history)
        else:
            agreement = AGREEMENT_PRIOR
        action_times = [e.timestamp for e in state.entries if e.payload_kind == "MOD_ACTION"]
        if action_times:
            age_seconds = max(0.0, now - max(action_times))
            recency_score = math.exp(-(age_seconds / SECONDS_PER_DAY) / RECENCY_HALF_LIFE_DAYS)
            recency: Optional[float] = age_seconds
        else:
            recency = None
            recency_score = 0.0
        composite = (WEIGHT_AGREEMENT * agreement + WEIGHT_COVERAGE * coverage
                     + WEIGHT_RECENCY * recency_score)
        metrics[sid] = ModeratorMetrics(
            stream_id=sid,
            coverage=coverage,
            agreement=agreement,
            recency_seconds=recency,
            recency_score=recency_score,
            composite=composite,
        )
    order = tuple(sorted(metrics, key=lambda s: (-metrics[s].composite, s)))
    return ModeratorRanking(metrics=metrics, order=order, warnings=tuple(warnings))
