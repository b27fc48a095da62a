"""Node-to-node stream synchronization: pull-based anti-entropy over signed
head exchange, plus a deterministic single-threaded network simulator for
convergence, partition, and equivocation testing.

Safety reduces entirely to stream verification: a node's accepted state always
passes verify_stream, no matter what a peer sends. Fork evidence rides along
with head responses so equivocation flags propagate to every syncing node.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Protocol, Sequence

from .canonical import canonical_json_bytes, parse_canonical, signing_bytes
from .errors import PeerUnreachable, ValidationRejected
from .identity import Keypair, generate_keypair, sign, verify_hex
from .stream import (
    ContentEntry,
    ForkEvidence,
    GenesisRecord,
    StreamStore,
    append,
    detect_fork,
    load_state,
)

KIND_HEAD_REQUEST = "HEAD_REQUEST"
KIND_HEAD_RESPONSE = "HEAD_RESPONSE"
KIND_ENTRIES_REQUEST = "ENTRIES_REQUEST"
KIND_ENTRIES_RESPONSE = "ENTRIES_RESPONSE"
KIND_ANNOUNCE = "ANNOUNCE"

MESSAGE_KINDS = (
    KIND_HEAD_REQUEST,
    KIND_HEAD_RESPONSE,
    KIND_ENTRIES_REQUEST,
    KIND_ENTRIES_RESPONSE,
    KIND_ANNOUNCE,
)

# responses carry authority, so they must be signed; requests are public reads
SIGNED_KINDS = (KIND_HEAD_RESPONSE, KIND_ENTRIES_RESPONSE, KIND_ANNOUNCE)


@dataclass(frozen=True)
class SyncMessage:
    kind: str
    sender: str = ""  # hex public key of the sending node
    stream_id: Optional[str] = None
    from_seq: Optional[int] = None
    to_seq: Optional[int] = None
    head_seq: Optional[int] = None  # None in a HEAD_RESPONSE = stream unknown
    head_hash: Optional[str] = None
    forked: bool = False
    fork_evidence: Optional[dict] = None
    genesis: Optional[dict] = None
    entries: tuple = ()  # raw entry records
    stream_ids: tuple = ()  # ANNOUNCE payload
    signature: Optional[str] = None

    def signing_record(self) -> dict:
        rec: dict = {"kind": self.kind, "sender": self.sender}
        if self.stream_id is not None:
            rec["stream_id"] = self.stream_id
        if self.from_seq is not None:
            rec["from_seq"] = self.from_seq
        if self.to_seq is not None:
            rec["to_seq"] = self.to_seq
        if self.head_seq is not None:
            rec["head_seq"] = self.head_seq
        if self.head_hash is not None:
            rec["head_hash"] = self.head_hash
        if self.forked:
            rec["forked"] = True
        if self.fork_evidence is not None:
            rec["fork_evidence"] = self.fork_evidence
        if self.genesis is not None:
            rec["genesis"] = self.genesis
        if self.entries:
            rec["entries"] = list(self.entries)
        if self.stream_ids:
            rec["stream_ids"] = list(self.stream_ids)
        return rec

    def to_record(self) -> dict:
        rec = self.signing_record()
        if self.signature is not None:
            rec["signature"] = self.signature
        return rec

    def signed(self, keypair: Keypair) -> "SyncMessage":
        msg = replace(self, sender=keypair.public_hex, signature=None)
        sig = sign(keypair, signing_bytes(msg.signing_record()))
        return replace(msg, signature=sig.hex)

    def signature_valid(self) -> bool:
        if self.kind not in SIGNED_KINDS:
            return True
        if self.signature is None or not self.sender:
            return False
        return verify_hex(self.sender, signing_bytes(self.signing_record()), self.signature)

    @classmethod
    def from_record(cls, rec: Mapping) -> "SyncMessage":
        if rec.get("kind") not in MESSAGE_KINDS:
            raise ValidationRejected(f"unknown sync message kind {rec.get('kind')!r}")
        return cls(
            kind=rec["kind"],
            sender=rec.get("sender", ""),
            stream_id=rec.get("stream_id"),
            from_seq=rec.get("from_seq"),
            to_seq=rec.get("to_seq"),
            head_seq=rec.get("head_seq"),
            head_hash=rec.get("head_hash"),
            forked=bool(rec.get("forked", False)),
            fork_evidence=rec.get("fork_evidence"),
            genesis=rec.get("genesis"),
            entries=tuple(rec.get("entries", ())),
            stream_ids=tuple(rec.get("stream_ids", ())),
            signature=rec.get("signature"),
        )


def head_response(store: StreamStore, keypair: Keypair, stream_id: str) -> SyncMessage:
    state = store.get(stream_id)
    if state is None:
        msg = SyncMessage(kind=KIND_HEAD_RESPONSE, stream_id=stream_id)
    else:
        msg = SyncMessage(
            kind=KIND_HEAD_RESPONSE,
            stream_id=stream_id,
            head_seq=state.head_seq,
            head_hash=state.head_hash,
            forked=state.forked,
            fork_evidence=state.fork_evidence.to_dict() if state.fork_evidence else None,
        )
    return msg.signed(keypair)


def entries_response(store: StreamStore, keypair: Keypair, stream_id: str,
                     from_seq: int, to_seq: int) -> SyncMessage:
    state = store.get(stream_id)
    if state is None:
        msg = SyncMessage(kind=KIND_ENTRIES_RESPONSE, stream_id=stream_id,
                          from_seq=from_seq, to_seq=to_seq)
        return msg.signed(keypair)
    lo = max(1, from_seq)
    hi = min(state.head_seq, to_seq)
    entries = tuple(
        canonical_record(e) for e in state.entries[lo - 1:hi] if lo <= hi
    ) if lo <= hi else ()
    msg = SyncMessage(
        kind=KIND_ENTRIES_RESPONSE,
        stream_id=stream_id,
        from_seq=from_seq,
        to_seq=to_seq,
        genesis=state.genesis.to_record() if from_seq <= 0 else None,
        entries=entries,
    )
    return msg.signed(keypair)


def canonical_record(entry: ContentEntry) -> dict:
    return entry.to_record()


def announce(store: StreamStore, keypair: Keypair) -> SyncMessage:
    return SyncMessage(kind=KIND_ANNOUNCE, stream_ids=tuple(store.ids())).signed(keypair)


class PeerClient(Protocol):
    """Transport-agnostic view of a remote node's sync surface."""

    def head(self, stream_id: str) -> SyncMessage: ...

    def entries(self, stream_id: str, from_seq: int, to_seq: int) -> SyncMessage: ...

    def stream_ids(self) -> Sequence[str]: ...


class LocalPeer:
    """In-process peer over another StreamStore; the reference transport."""

    def __init__(self, store: StreamStore, keypair: Keypair):
        self.store = store
        self.keypair = keypair

    def head(self, stream_id: str) -> SyncMessage:
        return head_response(self.store, self.keypair, stream_id)

    def entries(self, stream_id: str, from_seq: int, to_seq: int) -> SyncMessage:
        return entries_response(self.store, self.keypair, stream_id, from_seq, to_seq)

    def stream_ids(self) -> Sequence[str]:
        return announce(self.store, self.keypair).stream_ids


class HttpPeer:
    """Peer over the node HTTP API."""

    def __init__(self, base_url: str, client=None):
        self.base_url = base_url.rstrip("/")
        self._client = client

    def _get(self, path: str) -> dict:
        import httpx

        try:
            if self._client is not None:
                resp = self._client.get(path)
            else:
                with httpx.Client(base_url=self.base_url, timeout=10.0) as client:
                    resp = client.get(path)
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise PeerUnreachable(f"peer {self.base_url}: {exc}") from exc
        return parse_canonical(resp.content)

    def _post(self, path: str, body: dict) -> dict:
        import httpx

        try:
            if self._client is not None:
                resp = self._client.post(path, content=canonical_json_bytes(body))
            else:
                with httpx.Client(base_url=self.base_url, timeout=10.0) as client:
                    resp = client.post(path, content=canonical_json_bytes(body))
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise PeerUnreachable(f"peer {self.base_url}: {exc}") from exc
        return parse_canonical(resp.content)

    def head(self, stream_id: str) -> SyncMessage:
        return SyncMessage.from_record(self._get(f"/sync/head/{stream_id}"))

    def entries(self, stream_id: str, from_seq: int, to_seq: int) -> SyncMessage:
        body = SyncMessage(kind=KIND_ENTRIES_REQUEST, stream_id=stream_id,
                           from_seq=from_seq, to_seq=to_seq).to_record()
        return SyncMessage.from_record(self._post("/sync/entries", body))

    def stream_ids(self) -> Sequence[str]:
        return SyncMessage.from_record(self._get("/sync/streams")).stream_ids


@dataclass
class SyncResult:
    stream_id: str
    new_entries: int = 0
    fork_detected: bool = False
    error: Optional[str] = None

    def to_dict(self) -> dict:
        rec: dict = {
            "fork_detected": self.fork_detected,
            "new_entries": self.new_entries,
            "stream_id": self.stream_id,
        }
        if self.error is not None:
            rec["error"] = self.error
        return rec


def _entries_from(msg: SyncMessage) -> list:
    return [ContentEntry.from_record(rec) for rec in msg.entries]


def _adopt_fork_evidence(store: StreamStore, stream_id: str, head: SyncMessage) -> bool:
    """Verify and adopt a peer's fork evidence; True if the stream is now
    flagged locally."""
    if head.fork_evidence is None:
        return False
    try:
        evidence = ForkEvidence.from_dict(head.fork_evidence)
    except ValidationRejected:
        return False
    if detect_fork(evidence.a, evidence.b) is None or evidence.a.stream_id != stream_id:
        return False
    store.mark_forked(stream_id, evidence)
    return True


def sync_stream(store: StreamStore, peer: PeerClient, stream_id: str) -> SyncResult:
    """Pull one stream from a peer. Local head advances only past full
    validation; overlap mismatches produce fork evidence, never merges."""
    head = peer.head(stream_id)
    if head.kind != KIND_HEAD_RESPONSE or not head.signature_valid():
        return SyncResult(stream_id, error="VALIDATION_REJECTED")
    if head.head_seq is None:
        return SyncResult(stream_id)  # peer does not hold this stream

    if head.forked and _adopt_fork_evidence(store, stream_id, head):
        return SyncResult(stream_id, fork_detected=True)

    local = store.get(stream_id)
    if local is None:
        resp = peer.entries(stream_id, 0, head.head_seq)
        if not resp.signature_valid() or resp.genesis is None:
            return SyncResult(stream_id, error="VALIDATION_REJECTED")
        genesis = GenesisRecord.from_record(resp.genesis)
        result = store.accept(stream_id, genesis, _entries_from(resp))
        return SyncResult(stream_id, new_entries=result.accepted,
                          fork_detected=result.fork_detected, error=result.rejected)

    if local.forked:
        return SyncResult(stream_id, fork_detected=True)

    if head.head_seq > local.head_seq:
        resp = peer.entries(stream_id, local.head_seq + 1, head.head_seq)
        if not resp.signature_valid():
            return SyncResult(stream_id, error="VALIDATION_REJECTED")
        result = store.accept(stream_id, None, _entries_from(resp))
        if result.rejected == "VALIDATION_REJECTED" and local.head_seq >= 1:
            # Continuation did not attach: maybe divergence at or below our
            # head. Pull the overlapping entry and check for equivocation.
            overlap = peer.entries(stream_id, local.head_seq, local.head_seq)
            if overlap.signature_valid():
                check = store.accept(stream_id, None, _entries_from(overlap))
                if check.fork_detected:
                    return SyncResult(stream_id, fork_detected=True)
        return SyncResult(stream_id, new_entries=result.accepted,
                          fork_detected=result.fork_detected, error=result.rejected)

    # Peer at or behind our head: their head entry must match ours byte for
    # byte, or someone equivocated.
    if head.head_seq >= 1:
        local_hash = (local.entries[head.head_seq - 1].hash
                      if head.head_seq <= local.head_seq else None)
        if local_hash is not None and head.head_hash != local_hash:
            resp = peer.entries(stream_id, head.head_seq, head.head_seq)
            if resp.signature_valid():
                result = store.accept(stream_id, None, _entries_from(resp))
                if result.fork_detected:
                    return SyncResult(stream_id, fork_detected=True)
    return SyncResult(stream_id)


@dataclass
class GossipReport:
    synced: dict = field(default_factory=dict)  # peer label -> list of SyncResult
    unreachable: list = field(default_factory=list)

    @property
    def new_entries(self) -> int:
        return sum(r.new_entries for results in self.synced.values() for r in results)

    def to_dict(self) -> dict:
        return {
            "new_entries": self.new_entries,
            "synced": {
                label: [r.to_dict() for r in results]
                for label, results in sorted(self.synced.items())
            },
            "unreachable": sorted(self.unreachable),
        }


def gossip_round(store: StreamStore, peers: Mapping[str, PeerClient]) -> GossipReport:
    """One anti-entropy round: pull every stream either side knows from each
    peer. Idempotent when converged (zero transfers)."""
    report = GossipReport()
    for label in sorted(peers):
        peer = peers[label]
        try:
            remote_ids = list(peer.stream_ids())
        except PeerUnreachable:
            report.unreachable.append(label)
            continue
        results = []
        for stream_id in sorted(set(remote_ids) | set(store.ids())):
            try:
                results.append(sync_stream(store, peer, stream_id))
            except PeerUnreachable:
                report.unreachable.append(label)
                break
        report.synced[label] = results
    return report


# ---------------------------------------------------------------------------
# deterministic network simulator


def link_key(a: str, b: str) -> str:
    return f"{min(a, b)}|{max(a, b)}"


@dataclass(frozen=True)
class SimNetConfig:
    rng_seed: int
    topology: Mapping[str, tuple]  # node -> neighbor names
    latency: Mapping[str, int] = field(default_factory=dict)  # link key -> ticks
    loss: Mapping[str, float] = field(default_factory=dict)  # link key -> probability
    partitions: tuple = ()  # (from_tick, to_tick, frozenset of link keys)

    def link_latency(self, a: str, b: str) -> int:
        return int(self.latency.get(link_key(a, b), 1))

    def link_loss(self, a: str, b: str) -> float:
        return float(self.loss.get(link_key(a, b), 0.0))

    def is_cut(self, a: str, b: str, tick: int) -> bool:
        key = link_key(a, b)
        return any(start <= tick < end and key in links
                   for start, end, links in self.partitions)

    def to_dict(self) -> dict:
        return {
            "latency": dict(self.latency),
            "loss": dict(self.loss),
            "partitions": [
                {"from_tick": s, "links": sorted(links), "to_tick": e}
                for s, e, links in self.partitions
            ],
            "rng_seed": self.rng_seed,
            "topology": {n: list(ns) for n, ns in self.topology.items()},
        }

    @classmethod
    def from_dict(cls, rec: Mapping) -> "SimNetConfig":
        return cls(
            rng_seed=rec["rng_seed"],
            topology={n: tuple(ns) for n, ns in rec["topology"].items()},
            latency=dict(rec.get("latency", {})),
            loss=dict(rec.get("loss", {})),
            partitions=tuple(
                (p["from_tick"], p["to_tick"], frozenset(p["links"]))
                for p in rec.get("partitions", ())
            ),
        )


class SimNode:
    def __init__(self, name: str):
        self.name = name
        seed = hashlib.sha256(b"sim-node:" + name.encode()).digest()
        self.keypair = generate_keypair(seed)
        self.store = StreamStore(root=None)
        self.known: set[str] = set()  # stream ids heard of via ANNOUNCE

    def head_hash(self, stream_id: str) -> Optional[str]:
        state = self.store.get(stream_id)
        return state.head_hash if state is not None else None


class Simulation:
    """Single-threaded tick simulator. All nondeterminism flows from one
    seeded RNG consumed in event order, so identical (config, script) pairs
    produce byte-identical traces."""

    def __init__(self, config: SimNetConfig, script: Sequence[Mapping]):
        import random

        self.config = config
        self.rng = random.Random(config.rng_seed)
        self.nodes = {name: SimNode(name) for name in sorted(config.topology)}
        self.script = sorted(script, key=lambda a: (a["tick"], a.get("node", ""), a.get("op", "")))
        self.trace: list[bytes] = []
        self._queue: list = []  # (tick, event_id, kind, payload)
        self._event_id = 0
        self._streams_by_name: dict[str, str] = {}  # "node/name" -> stream id

    # -- plumbing ------------------------------------------------------------

    def _emit(self, record: dict) -> None:
        self.trace.append(canonical_json_bytes(record))

    def _push(self, tick: int, kind: str, payload: dict) -> None:
        self._event_id += 1
        heapq.heappush(self._queue, (tick, self._event_id, kind, payload))

    def _send(self, tick: int, src: str, dst: str, message: SyncMessage) -> None:
        rec = {
            "event": "SEND", "from": src, "kind": message.kind,
            "tick": tick, "to": dst,
        }
        if message.stream_id is not None:
            rec["stream_id"] = message.stream_id
        self._emit(rec)
        if self.config.is_cut(src, dst, tick):
            self._emit({"cause": "partition", "event": "DROP", "from": src,
                        "kind": message.kind, "tick": tick, "to": dst})
            return
        if self.rng.random() < self.config.link_loss(src, dst):
            self._emit({"cause": "loss", "event": "DROP", "from": src,
                        "kind": message.kind, "tick": tick, "to": dst})
            return
        deliver_at = tick + self.config.link_latency(src, dst)
        self._push(deliver_at, "deliver", {"from": src, "to": dst, "message": message})

    # -- script actions ------------------------------------------------------

    def _stream_id_of(self, label: str) -> str:
        if label in self._streams_by_name:
            return self._streams_by_name[label]
        return label  # raw stream id

    def _run_action(self, tick: int, action: Mapping) -> None:
        op = action["op"]
        node = self.nodes[action["node"]]
        self._emit({"event": "ACTION", "node": node.name, "op": op, "tick": tick})
        if op == "create":
            name = action["name"]
            kind = action.get("kind", "CONTENT")
            state = node.store.create(node.keypair, name, kind, created_at=tick)
            label = f"{node.name}/{name}"
            self._streams_by_name[label] = state.stream_id
            node.known.add(state.stream_id)
        elif op == "append":
            sid = self._stream_id_of(action["stream"])
            node.store.append(
                sid, node.keypair, action.get("kind", "POST"),
                action["payload"].encode(), timestamp=tick,
            )
        elif op == "fork_append":
            # Equivocation fixture: sign an alternative entry at the current
            # head seq (same prefix) and plant it directly in another node's
            # store, as if delivered out of band.
            sid = self._stream_id_of(action["stream"])
            state = node.store.require(sid)
            if not state.entries:
                raise ValidationRejected("fork_append needs at least one entry")
            base = load_state(state.genesis, list(state.entries[:-1]))
            _, alt = append(base, node.keypair, "POST",
                            action["payload"].encode(), timestamp=tick)
            victim = self.nodes[action["deliver_to"]]
            result = victim.store.accept(
                sid, state.genesis, list(state.entries[:-1]) + [alt]
            )
            victim.known.add(sid)
            self._emit({"event": "INJECT", "fork_detected": result.fork_detected,
                        "node": victim.name, "stream_id": sid, "tick": tick})
        elif op == "gossip":
            self._gossip(tick, node)
        else:
            raise ValidationRejected(f"unknown script op {op!r}")

    def _gossip(self, tick: int, node: SimNode) -> None:
        node.known.update(node.store.ids())
        for neighbor in sorted(self.config.topology[node.name]):
            if node.known:
                msg = SyncMessage(kind=KIND_ANNOUNCE,
                                  stream_ids=tuple(sorted(node.known)))
                self._send(tick, node.name, neighbor, msg.signed(node.keypair))
            for sid in sorted(node.known):
                self._send(tick, node.name, neighbor,
                           SyncMessage(kind=KIND_HEAD_REQUEST, stream_id=sid,
                                       sender=node.keypair.public_hex))

    # -- message handling ----------------------------------------------------

    def _deliver(self, tick: int, src: str, dst: str, message: SyncMessage) -> None:
        rec = {"event": "DELIVER", "from": src, "kind": message.kind,
               "tick": tick, "to": dst}
        if message.stream_id is not None:
            rec["stream_id"] = message.stream_id
        self._emit(rec)
        if not message.signature_valid():
            self._emit({"event": "BAD_MESSAGE", "from": src, "kind": message.kind,
                        "node": dst, "tick": tick})
            return
        node = self.nodes[dst]
        if message.kind == KIND_ANNOUNCE:
            fresh = [sid for sid in message.stream_ids if sid not in node.known
                     and node.store.get(sid) is None]
            node.known.update(message.stream_ids)
            for sid in fresh:
                self._send(tick, dst, src,
                           SyncMessage(kind=KIND_HEAD_REQUEST, stream_id=sid,
                                       sender=node.keypair.public_hex))
        elif message.kind == KIND_HEAD_REQUEST:
            self._send(tick, dst, src,
                       head_response(node.store, node.keypair, message.stream_id))
        elif message.kind == KIND_HEAD_RESPONSE:
            self._handle_head(tick, node, src, message)
        elif message.kind == KIND_ENTRIES_REQUEST:
            self._send(tick, dst, src,
                       entries_response(node.store, node.keypair, message.stream_id,
                                        message.from_seq or 0, message.to_seq or 0))
        elif message.kind == KIND_ENTRIES_RESPONSE:
            self._handle_entries(tick, node, message)

    def _handle_head(self, tick: int, node: SimNode, src: str,
                     message: SyncMessage) -> None:
        sid = message.stream_id
        if message.head_seq is None:
            return
        if message.forked and _adopt_fork_evidence(node.store, sid, message):
            self._emit({"event": "FORK", "node": node.name, "stream_id": sid,
                        "tick": tick})
            return
        local = node.store.get(sid)
        if local is None:
            self._send(tick, node.name, src,
                       SyncMessage(kind=KIND_ENTRIES_REQUEST, stream_id=sid,
                                   from_seq=0, to_seq=message.head_seq,
                                   sender=node.keypair.public_hex))
            return
        if local.forked:
            return
        if message.head_seq > local.head_seq:
            self._send(tick, node.name, src,
                       SyncMessage(kind=KIND_ENTRIES_REQUEST, stream_id=sid,
                                   from_seq=local.head_seq + 1,
                                   to_seq=message.head_seq,
                                   sender=node.keypair.public_hex))
        elif 1 <= message.head_seq <= local.head_seq:
            if local.entries[message.head_seq - 1].hash != message.head_hash:
                self._send(tick, node.name, src,
                           SyncMessage(kind=KIND_ENTRIES_REQUEST, stream_id=sid,
                                       from_seq=message.head_seq,
                                       to_seq=message.head_seq,
                                       sender=node.keypair.public_hex))

    def _handle_entries(self, tick: int, node: SimNode, message: SyncMessage) -> None:
        sid = message.stream_id
        genesis = GenesisRecord.from_record(message.genesis) if message.genesis else None
        try:
            entries = _entries_from(message)
        except ValidationRejected:
            self._emit({"event": "BAD_MESSAGE", "kind": message.kind,
                        "node": node.name, "tick": tick})
            return
        result = node.store.accept(sid, genesis, entries)
        if result.fork_detected:
            self._emit({"event": "FORK", "node": node.name, "stream_id": sid,
                        "tick": tick})
        elif result.rejected:
            self._emit({"event": "REJECT", "node": node.name, "reason": result.rejected,
                        "stream_id": sid, "tick": tick})
        elif result.accepted:
            node.known.add(sid)
            self._emit({"event": "ACCEPT", "new_entries": result.accepted,
                        "node": node.name, "stream_id": sid, "tick": tick})

    # -- main loop -----------------------------------------------------------

    def run(self, until_tick: Optional[int] = None) -> list:
        for action in self.script:
            self._push(action["tick"], "action", dict(action))
        while self._queue:
            tick, _eid, kind, payload = heapq.heappop(self._queue)
            if until_tick is not None and tick > until_tick:
                break
            if kind == "action":
                self._run_action(tick, payload)
            else:
                self._deliver(tick, payload["from"], payload["to"], payload["message"])
        return self.trace


def run_simulation(config: SimNetConfig, script: Sequence[Mapping],
                   until_tick: Optional[int] = None) -> Simulation:
    for action in script:
        if "tick" not in action or "op" not in action or "node" not in action:
            raise ValidationRejected("script actions need tick, node, op")
        if action["node"] not in config.topology:
            raise ValidationRejected(f"unknown node {action['node']!r} in script")
    sim = Simulation(config, script)
    sim.run(until_tick)
    return sim


def trace_bytes(sim: Simulation) -> bytes:
    return b"\n".join(sim.trace) + b"\n" if sim.trace else b""


def load_scenario(data: bytes) -> tuple[SimNetConfig, list]:
    rec = parse_canonical(data)
    return SimNetConfig.from_dict(rec), list(rec.get("script", ()))
