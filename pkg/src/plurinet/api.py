"""The daemon HTTP API: one wire surface for peers, remote stores, and the
web UI. All JSON bodies use canonical formatting (sorted keys, no
whitespace); reads are public; writes carry their own signatures — the
daemon holds no user secrets.
"""

from __future__ import annotations

import tempfile
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Query, Request, Response
from fastapi.middleware.cors import CORSMiddleware

from .canonical import parse_canonical, stable_json_bytes
from .errors import ForkedStream, NotFound, PlurinetError, ValidationRejected
from .migration import bundle_to_tar, tar_to_bundle
from .node import Node
from .stream import ContentEntry, GenesisRecord
from .sync import announce, entries_response, head_response


class CanonicalResponse(Response):
    media_type = "application/json"

    def render(self, content) -> bytes:
        return stable_json_bytes(content)


def _csv(value: Optional[str]) -> list:
    if not value:
        return []
    return [part for part in value.split(",") if part]


def build_app(node: Node) -> FastAPI:
    app = FastAPI(title="plurinet", version="0.1.0",
                  default_response_class=CanonicalResponse)
    # The web UI is typically served from a different origin than the daemon
    # it talks to; everything here is public reads or self-signed writes, so a
    # wildcard is safe (no cookies, no ambient credentials).
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @app.exception_handler(PlurinetError)
    async def _domain_error(_request: Request, exc: PlurinetError) -> CanonicalResponse:
        return CanonicalResponse(exc.to_dict(), status_code=exc.http_status)

    # -- health & discovery --------------------------------------------------

    @app.get("/health")
    def health() -> dict:
        return {
            "node": node.keypair.principal.encoded,
            "ok": True,
            "public_key": node.keypair.public_hex,
            "streams": len(node.streams.ids()),
        }

    @app.get("/forums")
    def forums() -> dict:
        return {"forums": [f.to_dict() for f in node.forums()]}

    # -- streams -------------------------------------------------------------

    @app.get("/streams/{stream_id}")
    def stream_info(stream_id: str) -> dict:
        state = node.streams.require(stream_id)
        info = {
            "forked": state.forked,
            "genesis": state.genesis.to_record(),
            "head_hash": state.head_hash,
            "head_seq": state.head_seq,
            "kind": state.genesis.stream_kind,
            "stream_id": state.stream_id,
        }
        if state.fork_evidence is not None:
            info["fork_evidence"] = state.fork_evidence.to_dict()
        return info

    @app.get("/streams/{stream_id}/entries")
    def stream_entries(stream_id: str,
                       frm: Optional[int] = Query(None, alias="from"),
                       to: Optional[int] = None) -> dict:
        state = node.streams.require(stream_id)
        lo = 1 if frm is None else max(1, frm)
        hi = state.head_seq if to is None else min(state.head_seq, to)
        entries = [e.to_record() for e in state.entries[lo - 1:hi]] if lo <= hi else []
        return {"entries": entries, "from": lo, "stream_id": stream_id, "to": hi}

    @app.post("/streams/{stream_id}/entries")
    async def post_entry(stream_id: str, request: Request) -> dict:
        try:
            record = parse_canonical(await request.body())
        except ValueError as exc:
            raise ValidationRejected(f"unreadable entry record: {exc}") from exc
        if not isinstance(record, dict):
            raise ValidationRejected("entry record must be an object")
        if record.get("seq") == 0:
            genesis = GenesisRecord.from_record(record)
            result = node.streams.accept(stream_id, genesis, [])
        else:
            entry = ContentEntry.from_record(record)
            result = node.streams.accept(stream_id, None, [entry])
        if result.rejected == "NOT_FOUND":
            raise NotFound(f"unknown stream {stream_id} (send the genesis first)")
        if result.rejected == "FORKED_STREAM":
            raise ForkedStream(f"stream {stream_id} is forked; appends refused")
        if result.rejected is not None:
            raise ValidationRejected(f"entry rejected for stream {stream_id}")
        return {
            "accepted": result.accepted,
            "fork_detected": result.fork_detected,
            "stream_id": stream_id,
        }

    # -- blobs ---------------------------------------------------------------

    @app.get("/blobs/{content_hash}")
    def get_blob(content_hash: str) -> Response:
        data = node.get_blob(content_hash)
        return Response(content=data, media_type="application/octet-stream")

    @app.post("/blobs")
    async def post_blob(request: Request, stream_id: Optional[str] = None,
                        author: Optional[str] = None) -> dict:
        data = await request.body()
        content_hash = node.put_blob(data, stream_id=stream_id, author=author)
        return {"content_hash": content_hash}

    # -- sync ----------------------------------------------------------------

    @app.get("/sync/head/{stream_id}")
    def sync_head(stream_id: str) -> dict:
        return head_response(node.streams, node.keypair, stream_id).to_record()

    @app.post("/sync/entries")
    async def sync_entries(request: Request) -> dict:
        try:
            rec = parse_canonical(await request.body())
        except ValueError as exc:
            raise ValidationRejected(f"unreadable sync request: {exc}") from exc
        stream_id = rec.get("stream_id")
        if not stream_id:
            raise ValidationRejected("sync request needs stream_id")
        return entries_response(
            node.streams, node.keypair, stream_id,
            int(rec.get("from_seq", 0)), int(rec.get("to_seq", 0)),
        ).to_record()

    @app.get("/sync/streams")
    def sync_streams() -> dict:
        return announce(node.streams, node.keypair).to_record()

    # -- feeds ---------------------------------------------------------------

    @app.get("/feeds/forum/{forum_id}")
    def forum_feed(forum_id: str, mods: Optional[str] = None,
                   disabled: Optional[str] = None,
                   as_user: Optional[str] = None) -> dict:
        mod_list = _csv(mods) if mods is not None else None
        return node.forum_feed(forum_id, mods=mod_list,
                               disabled=_csv(disabled), as_user=as_user).to_dict()

    @app.get("/feeds/follow")
    def follow_feed(subs: Optional[str] = None, muted: Optional[str] = None) -> dict:
        return node.follow_feed(_csv(subs), muted=_csv(muted)).to_dict()

    @app.get("/feeds/diff")
    def feeds_diff(forum: str, against: str = "raw", mods: Optional[str] = None,
                   disabled: Optional[str] = None) -> dict:
        if against != "raw":
            raise ValidationRejected("only diffs against the raw feed are supported")
        mod_list = _csv(mods) if mods is not None else None
        diff = node.forum_diff(forum, mods=mod_list, disabled=_csv(disabled))
        body = diff.to_dict()
        body["forum_id"] = forum
        body["hidden_count"] = len(diff.hidden)
        return body

    # -- moderation services -------------------------------------------------

    @app.get("/moderators/rank")
    def moderators_rank(candidates: str, now: Optional[float] = None) -> dict:
        return node.rank(_csv(candidates), now=now).to_dict()

    @app.get("/mod/compare")
    def mod_compare(a: str, b: str, streams: Optional[str] = None) -> dict:
        raw_streams = _csv(streams) or None
        return node.compare(a, b, raw_streams).to_dict()

    # -- admin ---------------------------------------------------------------

    @app.post("/admin/refuse")
    async def admin_refuse(request: Request) -> dict:
        rec = parse_canonical(await request.body())
        node.refuse(rec["store_id"], rec["kind"], rec["value"])
        return {"ok": True, "store_id": rec["store_id"]}

    @app.post("/admin/switch-provider")
    async def admin_switch(request: Request) -> dict:
        rec = parse_canonical(await request.body())
        report = node.switch_provider(rec["stream_id"], rec["old_store"], rec["new_store"])
        return report.to_dict()

    # -- migration -----------------------------------------------------------

    @app.get("/export")
    def export(streams: Optional[str] = None) -> Response:
        stream_ids = _csv(streams) or None
        with tempfile.TemporaryDirectory() as tmp:
            node.export(Path(tmp), stream_ids=stream_ids)
            data = bundle_to_tar(Path(tmp))
        return Response(content=data, media_type="application/x-tar")

    @app.post("/import")
    async def import_(request: Request) -> dict:
        data = await request.body()
        with tempfile.TemporaryDirectory() as tmp:
            tar_to_bundle(data, Path(tmp))
            report = node.import_from(Path(tmp))
        return report.to_dict()

    return app


def serve(node: Node, listen_addr: Optional[str] = None) -> None:
    """Run the daemon until interrupted."""
    import uvicorn

    addr = listen_addr or node.config.listen_addr
    host, _, port = addr.rpartition(":")
    uvicorn.run(build_app(node), host=host or "127.0.0.1", port=int(port),
                log_level="warning")
