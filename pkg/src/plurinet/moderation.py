"""Moderation as data: signed streams of allow/deny/label/score actions, a
composition algebra over them (including streams-of-streams), and filter
application producing moderated views.

Resolution semantics, fixed here and relied on by the tests:

* Within one stream, later entries override earlier ones on the same
  (verb-class, target).  Verb classes: {ALLOW, DENY} | {LABEL} | {SCORE} |
  {INCLUDE_STREAM, EXCLUDE_STREAM}.
* INCLUDE_STREAM unions the included stream's resolved contributions into
  this one; a global visited set makes expansion cycle-safe — every edge to
  an already-visited stream is skipped with a warning.
* EXCLUDE_STREAM removes contributions *authored by* the excluded stream
  from the merged result (not contributions of streams it had included).
* Fetch failures and depth overruns degrade to warnings, never errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .canonical import canonical_json_bytes, sha256_hex
from .errors import ValidationRejected
from .stream import ContentEntry, StreamState

VERB_ALLOW = "ALLOW"
VERB_DENY = "DENY"
VERB_LABEL = "LABEL"
VERB_SCORE = "SCORE"
VERB_INCLUDE = "INCLUDE_STREAM"
VERB_EXCLUDE = "EXCLUDE_STREAM"
VERBS = (VERB_ALLOW, VERB_DENY, VERB_LABEL, VERB_SCORE, VERB_INCLUDE, VERB_EXCLUDE)

TARGET_ENTRY = "ENTRY"
TARGET_HASH = "HASH"
TARGET_PRINCIPAL = "PRINCIPAL"
TARGET_STREAM = "STREAM"

MODE_DENY_LIST = "DENY_LIST"
MODE_ALLOW_LIST = "ALLOW_LIST"

COMBINE_UNION = "UNION"
COMBINE_INTERSECTION = "INTERSECTION"
COMBINE_DENY_OVERRIDES = "DENY_OVERRIDES"

DEFAULT_DEPTH_LIMIT = 16

# sentinel "source" for items hidden because ALLOW_LIST mode defaults to hidden
ALLOW_LIST_MODE_SOURCE = "mode:allow_list"

MAX_LABEL_BYTES = 64
MAX_REASON_BYTES = 1024


def verb_class(verb: str) -> str:
    if verb in (VERB_ALLOW, VERB_DENY):
        return "VISIBILITY"
    if verb == VERB_LABEL:
        return "LABEL"
    if verb == VERB_SCORE:
        return "SCORE"
    if verb in (VERB_INCLUDE, VERB_EXCLUDE):
        return "COMPOSE"
    raise ValueError(f"unknown verb {verb!r}")


@dataclass(frozen=True, order=True)
class Target:
    """What a moderation action points at: an entry ref, a content hash,
    a principal, or (for INCLUDE/EXCLUDE) a moderation stream."""

    kind: str
    stream_id: str = ""
    seq: int = 0
    value: str = ""

    @classmethod
    def entry(cls, stream_id: str, seq: int) -> "Target":
        return cls(kind=TARGET_ENTRY, stream_id=stream_id, seq=seq)

    @classmethod
    def blob(cls, content_hash: str) -> "Target":
        return cls(kind=TARGET_HASH, value=content_hash)

    @classmethod
    def principal(cls, encoded: str) -> "Target":
        return cls(kind=TARGET_PRINCIPAL, value=encoded)

    @classmethod
    def stream(cls, stream_id: str) -> "Target":
        return cls(kind=TARGET_STREAM, stream_id=stream_id)

    def to_dict(self) -> dict:
        if self.kind == TARGET_ENTRY:
            return {"kind": self.kind, "seq": self.seq, "stream_id": self.stream_id}
        if self.kind == TARGET_HASH:
            return {"hash": self.value, "kind": self.kind}
        if self.kind == TARGET_PRINCIPAL:
            return {"kind": self.kind, "principal": self.value}
        return {"kind": self.kind, "stream_id": self.stream_id}

    @property
    def key(self) -> str:
        """Stable string form, used as a map key in canonical policy dumps."""
        return canonical_json_bytes(self.to_dict()).decode()

    @classmethod
    def from_dict(cls, rec: Mapping) -> "Target":
        kind = rec.get("kind")
        if kind == TARGET_ENTRY:
            return cls.entry(rec["stream_id"], rec["seq"])
        if kind == TARGET_HASH:
            return cls.blob(rec["hash"])
        if kind == TARGET_PRINCIPAL:
            return cls.principal(rec["principal"])
        if kind == TARGET_STREAM:
            return cls.stream(rec["stream_id"])
        raise ValidationRejected(f"unknown target kind {kind!r}")


@dataclass(frozen=True)
class ModAction:
    verb: str
    target: Target
    label: Optional[str] = None
    score: Optional[int] = None
    reason: Optional[str] = None

    def __post_init__(self) -> None:
        if self.verb not in VERBS:
            raise ValidationRejected(f"unknown verb {self.verb!r}")
        if self.verb == VERB_LABEL:
            if self.label is None:
                raise ValidationRejected("LABEL requires a label")
            if len(self.label.encode()) > MAX_LABEL_BYTES:
                raise ValidationRejected("label exceeds 64 bytes")
        elif self.label is not None:
            raise ValidationRejected(f"{self.verb} must not carry a label")
        if self.verb == VERB_SCORE:
            if self.score is None:
                raise ValidationRejected("SCORE requires a score")
            if not isinstance(self.score, int) or isinstance(self.score, bool):
                raise ValidationRejected("score must be an integer")
            if not -100 <= self.score <= 100:
                raise ValidationRejected("score outside [-100, 100]")
        elif self.score is not None:
            raise ValidationRejected(f"{self.verb} must not carry a score")
        if self.reason is not None and len(self.reason.encode()) > MAX_REASON_BYTES:
            raise ValidationRejected("reason exceeds 1024 bytes")
        if self.verb in (VERB_INCLUDE, VERB_EXCLUDE) and self.target.kind != TARGET_STREAM:
            raise ValidationRejected(f"{self.verb} target must be a stream")
        if self.verb not in (VERB_INCLUDE, VERB_EXCLUDE) and self.target.kind == TARGET_STREAM:
            raise ValidationRejected(f"{self.verb} cannot target a stream")

    def to_dict(self) -> dict:
        rec: dict = {"target": self.target.to_dict(), "verb": self.verb}
        if self.label is not None:
            rec["label"] = self.label
        if self.score is not None:
            rec["score"] = self.score
        if self.reason is not None:
            rec["reason"] = self.reason
        return rec

    @classmethod
    def from_dict(cls, rec: Mapping) -> "ModAction":
        return cls(
            verb=rec["verb"],
            target=Target.from_dict(rec["target"]),
            label=rec.get("label"),
            score=rec.get("score"),
            reason=rec.get("reason"),
        )


@dataclass(frozen=True)
class Contribution:
    """One surviving (post-LWW) action, tagged with where it came from."""

    stream_id: str
    seq: int
    author: str  # encoded principal of the signing entry author
    action: ModAction


@dataclass(frozen=True)
class EffectivePolicy:
    """Flattened result of resolving a moderation stream graph.

    allow/deny may overlap in raw form; conflict resolution happens only in
    apply_filter per mode.  `attribution` maps each target to the streams
    whose actions touched it — the per-item transparency record that the flat
    `sources` set cannot provide.
    """

    allow: frozenset = frozenset()
    deny: frozenset = frozenset()
    labels: Mapping[Target, frozenset] = field(default_factory=dict)
    scores: Mapping[Target, tuple] = field(default_factory=dict)
    sources: frozenset = frozenset()
    warnings: tuple = ()
    attribution: Mapping[Target, frozenset] = field(default_factory=dict)

    def acted_targets(self) -> frozenset:
        return frozenset(self.allow) | frozenset(self.deny) \
            | frozenset(self.labels) | frozenset(self.scores)

    def sources_for(self, target: Target) -> frozenset:
        return self.attribution.get(target, frozenset())

    def to_canonical_dict(self) -> dict:
        return {
            "allow": sorted(t.key for t in self.allow),
            "deny": sorted(t.key for t in self.deny),
            "labels": {
                t.key: sorted([label, source] for label, source in pairs)
                for t, pairs in self.labels.items()
            },
            "scores": {
                t.key: [[score, source] for score, source in pairs]
                for t, pairs in self.scores.items()
            },
            "sources": sorted(self.sources),
            "warnings": list(self.warnings),
        }

    @property
    def digest(self) -> str:
        return sha256_hex(canonical_json_bytes(self.to_canonical_dict()))

    def semantic_key(self) -> tuple:
        """Equality view for the algebra laws (order-free everywhere)."""
        return (
            self.allow,
            self.deny,
            tuple(sorted((t.key, pairs) for t, pairs in self.labels.items())),
            tuple(sorted((t.key, tuple(sorted(pairs))) for t, pairs in self.scores.items())),
            self.sources,
            tuple(sorted(set(self.warnings))),
        )


EMPTY_POLICY = EffectivePolicy()

Fetcher = Callable[[str], Optional[StreamState]]


def _no_fetch(stream_id: str) -> Optional[StreamState]:
    return None


def actions_of(state: StreamState) -> list[Contribution]:
    """Extract the stream's surviving actions after last-writer-wins, in seq
    order. Malformed action records are skipped (a bad payload must not take
    down resolution of the rest of the stream)."""
    last: dict[tuple[str, Target], Contribution] = {}
    for entry in state.entries:
        if entry.payload_kind != "MOD_ACTION" or entry.action is None:
            continue
        try:
            action = ModAction.from_dict(entry.action)
        except (ValidationRejected, KeyError, TypeError):
            continue
        contribution = Contribution(
            stream_id=entry.stream_id,
            seq=entry.seq,
            author=entry.author.encoded,
            action=action,
        )
        last[(verb_class(action.verb), action.target)] = contribution
    return sorted(last.values(), key=lambda c: c.seq)


def _expand(
    state: StreamState,
    fetch: Fetcher,
    depth: int,
    depth_limit: int,
    visited: set,
    warnings: list,
) -> tuple[list, set]:
    sid = state.stream_id
    visited.add(sid)
    own = actions_of(state)
    merged = [c for c in own if verb_class(c.action.verb) != "COMPOSE"]
    sources = {sid}
    excluded: set[str] = set()
    for contribution in own:
        if verb_class(contribution.action.verb) != "COMPOSE":
            continue
        target_sid = contribution.action.target.stream_id
        if contribution.action.verb == VERB_EXCLUDE:
            excluded.add(target_sid)
            continue
        if target_sid in visited:
            warnings.append(f"cycle: stream {target_sid} already visited, skipped")
            continue
        if depth + 1 > depth_limit:
            warnings.append(f"depth limit {depth_limit} reached at stream {target_sid}")
            continue
        try:
            sub = fetch(target_sid)
        except Exception as exc:
            warnings.append(f"fetch failed for stream {target_sid}: {exc}")
            continue
        if sub is None:
            warnings.append(f"fetch failed for stream {target_sid}: not found")
            continue
        sub_contributions, sub_sources = _expand(
            sub, fetch, depth + 1, depth_limit, visited, warnings
        )
        merged.extend(sub_contributions)
        sources |= sub_sources
    if excluded:
        merged = [c for c in merged if c.stream_id not in excluded]
        sources -= excluded
    return merged, sources


def _materialize(contributions: Sequence[Contribution], sources: set,
                 warnings: Sequence[str]) -> EffectivePolicy:
    allow: set[Target] = set()
    deny: set[Target] = set()
    labels: dict[Target, set] = {}
    scores: dict[Target, set] = {}
    attribution: dict[Target, set] = {}
    for c in contributions:
        target = c.action.target
        attribution.setdefault(target, set()).add(c.stream_id)
        if c.action.verb == VERB_ALLOW:
            allow.add(target)
        elif c.action.verb == VERB_DENY:
            deny.add(target)
        elif c.action.verb == VERB_LABEL:
            labels.setdefault(target, set()).add((c.action.label, c.author))
        elif c.action.verb == VERB_SCORE:
            scores.setdefault(target, set()).add((c.action.score, c.author))
    return EffectivePolicy(
        allow=frozenset(allow),
        deny=frozenset(deny),
        labels={t: frozenset(pairs) for t, pairs in labels.items()},
        scores={t: tuple(sorted(pairs, key=lambda p: (p[1], p[0])))
                for t, pairs in scores.items()},
        sources=frozenset(sources),
        warnings=tuple(warnings),
        attribution={t: frozenset(s) for t, s in attribution.items()},
    )


def resolve(root: StreamState, fetch: Fetcher = _no_fetch,
            depth_limit: int = DEFAULT_DEPTH_LIMIT) -> EffectivePolicy:
    if depth_limit < 1:
        raise ValueError("depth_limit must be >= 1")
    visited: set[str] = set()
    warnings: list[str] = []
    contributions, sources = _expand(root, fetch, 1, depth_limit, visited, warnings)
    return _materialize(contributions, sources, warnings)


# ---------------------------------------------------------------------------
# combination algebra


def _merge_pair_maps(maps: Iterable[Mapping[Target, Iterable]],
                     keep: Optional[set] = None) -> dict[Target, set]:
    out: dict[Target, set] = {}
    for mapping in maps:
        for target, pairs in mapping.items():
            if keep is not None and target not in keep:
                continue
            out.setdefault(target, set()).update(pairs)
    return out


def combine(policies: Sequence[EffectivePolicy], combinator: str) -> EffectivePolicy:
    if combinator not in (COMBINE_UNION, COMBINE_INTERSECTION, COMBINE_DENY_OVERRIDES):
        raise ValueError(f"unknown combinator {combinator!r}")
    if not policies:
        return EMPTY_POLICY

    if combinator == COMBINE_INTERSECTION:
        allow = frozenset.intersection(*[frozenset(p.allow) for p in policies])
        deny = frozenset.intersection(*[frozenset(p.deny) for p in policies])
        label_keep = set.intersection(*[set(p.labels) for p in policies])
        score_keep = set.intersection(*[set(p.scores) for p in policies])
        labels = _merge_pair_maps((p.labels for p in policies), keep=label_keep)
        scores = _merge_pair_maps((p.scores for p in policies), keep=score_keep)
    else:
        allow = frozenset().union(*[p.allow for p in policies])
        deny = frozenset().union(*[p.deny for p in policies])
        labels = _merge_pair_maps(p.labels for p in policies)
        scores = _merge_pair_maps(p.scores for p in policies)
        if combinator == COMBINE_DENY_OVERRIDES:
            allow = allow - deny

    attribution = _merge_pair_maps(p.attribution for p in policies)
    sources = frozenset().union(*[p.sources for p in policies])
    warnings = tuple(sorted({w for p in policies for w in p.warnings}))
    return EffectivePolicy(
        allow=allow,
        deny=deny,
        labels={t: frozenset(pairs) for t, pairs in labels.items()},
        scores={t: tuple(sorted(pairs, key=lambda p: (p[1], p[0])))
                for t, pairs in scores.items()},
        sources=sources,
        warnings=warnings,
        attribution={t: frozenset(s) for t, s in attribution.items()},
    )


# ---------------------------------------------------------------------------
# filter application


@dataclass(frozen=True)
class ModerationDiff:
    """Accounting for every removal: no silent moderation."""

    hidden: tuple = ()  # ((stream_id, seq), frozenset of responsible sources)
    revealed_only_by: Mapping[tuple, frozenset] = field(default_factory=dict)
    label_summary: Mapping[str, int] = field(default_factory=dict)

    def hidden_refs(self) -> set:
        return {ref for ref, _ in self.hidden}

    def to_dict(self) -> dict:
        return {
            "hidden": [
                {"seq": seq, "sources": sorted(sources), "stream_id": sid}
                for (sid, seq), sources in self.hidden
            ],
            "label_summary": dict(sorted(self.label_summary.items())),
            "revealed_only_by": [
                {"seq": seq, "sources": sorted(sources), "stream_id": sid}
                for (sid, seq), sources in sorted(self.revealed_only_by.items())
            ],
        }


def entry_targets(entry: ContentEntry) -> tuple:
    """The three ways a policy can hit an entry: by ref, by hash, by author."""
    return (
        Target.entry(entry.stream_id, entry.seq),
        Target.blob(entry.content_hash),
        Target.principal(entry.author.encoded),
    )


def apply_filter(policy: EffectivePolicy, raw: Sequence[ContentEntry],
                 mode: str) -> tuple[list, ModerationDiff]:
    if mode not in (MODE_DENY_LIST, MODE_ALLOW_LIST):
        raise ValueError(f"unknown filter mode {mode!r}")
    visible: list[ContentEntry] = []
    hidden: list = []
    revealed: dict[tuple, frozenset] = {}
    label_counts: dict[str, int] = {}
    for entry in raw:
        keys = entry_targets(entry)
        denied = [t for t in keys if t in policy.deny]
        allowed = [t for t in keys if t in policy.allow]
        for t in keys:
            for label, _source in policy.labels.get(t, ()):
                label_counts[label] = label_counts.get(label, 0) + 1
        ref = (entry.stream_id, entry.seq)
        if mode == MODE_DENY_LIST:
            if denied and not allowed:
                sources = frozenset().union(
                    *[policy.sources_for(t) for t in denied]
                ) or frozenset({"unknown"})
                hidden.append((ref, sources))
            else:
                visible.append(entry)
                if denied and allowed:
                    revealed[ref] = frozenset().union(
                        *[policy.sources_for(t) for t in allowed]
                    )
        else:  # ALLOW_LIST
            if allowed and not denied:
                visible.append(entry)
                revealed[ref] = frozenset().union(
                    *[policy.sources_for(t) for t in allowed]
                )
            elif denied:
                sources = frozenset().union(
                    *[policy.sources_for(t) for t in denied]
                ) or frozenset({"unknown"})
                hidden.append((ref, sources))
            else:
                hidden.append((ref, frozenset({ALLOW_LIST_MODE_SOURCE})))
    diff = ModerationDiff(
        hidden=tuple(hidden),
        revealed_only_by=revealed,
        label_summary=label_counts,
    )
    return visible, diff


# ---------------------------------------------------------------------------
# contention reporting


@dataclass(frozen=True)
class ContentionReport:
    """Where two moderation streams agree, disagree, and act alone."""

    contentions: tuple = ()  # refs hidden by exactly one of the two
    agreements: tuple = ()  # refs hidden by both
    only_a: tuple = ()  # targets acted on by a alone
    only_b: tuple = ()
    warnings: tuple = ()

    def to_dict(self) -> dict:
        return {
            "agreements": [{"seq": s, "stream_id": sid} for sid, s in self.agreements],
            "contentions": [{"seq": s, "stream_id": sid} for sid, s in self.contentions],
            "only_a": [t.to_dict() for t in self.only_a],
            "only_b": [t.to_dict() for t in self.only_b],
            "warnings": list(self.warnings),
        }


def compare_streams(a: StreamState, b: StreamState, raw: Sequence[ContentEntry],
                    fetch: Fetcher = _no_fetch) -> ContentionReport:
    policy_a = resolve(a, fetch)
    policy_b = resolve(b, fetch)
    _, diff_a = apply_filter(policy_a, raw, MODE_DENY_LIST)
    _, diff_b = apply_filter(policy_b, raw, MODE_DENY_LIST)
    hidden_a = diff_a.hidden_refs()
    hidden_b = diff_b.hidden_refs()
    acted_a = policy_a.acted_targets()
    acted_b = policy_b.acted_targets()
    return ContentionReport(
        contentions=tuple(sorted(hidden_a ^ hidden_b)),
        agreements=tuple(sorted(hidden_a & hidden_b)),
        only_a=tuple(sorted(acted_a - acted_b)),
        only_b=tuple(sorted(acted_b - acted_a)),
        warnings=tuple(policy_a.warnings) + tuple(policy_b.warnings),
    )
