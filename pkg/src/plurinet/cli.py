"""Command-line surface. Every daemon mutation is reachable here and vice
versa; `--json` makes outputs machine-readable (stable canonical formatting).

Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional

from .canonical import parse_canonical, stable_json_bytes
from .errors import PlurinetError, ValidationRejected
from .identity import Principal, generate_keypair
from .migration import bundle_to_tar, tar_to_bundle
from .moderation import ModAction, Target
from .node import Node, NodeConfig
from .stream import parse_csl, verify_stream
from .sync import load_scenario, run_simulation

DEFAULT_DATA_DIR = "~/.plurinet"


def _data_dir(args: argparse.Namespace) -> Path:
    raw = args.data_dir or os.environ.get("PLURINET_DATA_DIR") or DEFAULT_DATA_DIR
    return Path(raw).expanduser()


def _config_path(args: argparse.Namespace) -> Optional[Path]:
    raw = args.config or os.environ.get("PLURINET_CONFIG")
    if raw:
        return Path(raw).expanduser()
    fallback = _data_dir(args) / "config.json"
    return fallback if fallback.exists() else None


def _node(args: argparse.Namespace) -> Node:
    path = _config_path(args)
    config = NodeConfig.from_file(path) if path is not None else None
    return Node(_data_dir(args), config)


def _emit(args: argparse.Namespace, record: dict, human: str) -> None:
    if args.json:
        sys.stdout.write(stable_json_bytes(record).decode() + "\n")
    else:
        print(human)


def _csv(value: Optional[str]) -> list:
    if value is None:
        return []
    return [part for part in value.split(",") if part]


def parse_target(spec: str) -> Target:
    kind, sep, rest = spec.partition(":")
    if not sep:
        raise ValidationRejected(
            f"bad target {spec!r}; use entry:<stream>:<seq>, hash:<hex>, "
            f"principal:<id>, or stream:<id>"
        )
    kind = kind.lower()
    if kind == "entry":
        sid, sep2, seq = rest.rpartition(":")
        if not sep2:
            raise ValidationRejected("entry target needs entry:<stream>:<seq>")
        return Target.entry(sid, int(seq))
    if kind == "hash":
        return Target.blob(rest)
    if kind == "principal":
        encoded = rest if rest.startswith("ed25519:") else f"ed25519:{rest}"
        return Target.principal(encoded)
    if kind == "stream":
        return Target.stream(rest)
    raise ValidationRejected(f"unknown target kind {kind!r}")


def _parse_reply_to(spec: Optional[str]) -> Optional[tuple]:
    if spec is None:
        return None
    sid, sep, seq = spec.rpartition(":")
    if not sep:
        raise ValidationRejected("reply-to needs <stream_id>:<seq>")
    return (sid, int(seq))


# ---------------------------------------------------------------------------
# subcommand implementations


def cmd_keygen(args: argparse.Namespace) -> int:
    node = _node(args)
    seed = bytes.fromhex(args.seed) if args.seed else None
    keypair = generate_keypair(seed)
    path = node.save_user_key(keypair)
    _emit(args, {
        "key_file": str(path),
        "principal": keypair.principal.encoded,
        "public_key": keypair.public_hex,
    }, f"{keypair.principal.encoded}\nkey file: {path}")
    return 0


def cmd_stream_create(args: argparse.Namespace) -> int:
    node = _node(args)
    key = node.load_user_key(args.key)
    writers = [Principal.from_public_hex(w) for w in args.writer or []]
    state = node.streams.create(key, args.name, args.kind, writers, scope=args.scope)
    _emit(args, {
        "head_seq": state.head_seq,
        "kind": state.genesis.stream_kind,
        "stream_id": state.stream_id,
    }, state.stream_id)
    return 0


def cmd_stream_append(args: argparse.Namespace) -> int:
    node = _node(args)
    key = node.load_user_key(args.key)
    if args.payload_file:
        payload = Path(args.payload_file).read_bytes()
    elif args.payload is not None:
        payload = args.payload.encode()
    else:
        raise ValidationRejected("need --payload or --payload-file")
    node.put_blob(payload, stream_id=args.stream, author=key.principal.encoded)
    entry = node.streams.append(
        args.stream, key, args.kind, payload,
        reply_to=_parse_reply_to(args.reply_to),
        timestamp=args.timestamp,
    )
    _emit(args, {
        "content_hash": entry.content_hash,
        "seq": entry.seq,
        "stream_id": entry.stream_id,
    }, f"appended seq {entry.seq} ({entry.content_hash})")
    return 0


def cmd_stream_cat(args: argparse.Namespace) -> int:
    path = Path(args.target)
    if path.exists():
        genesis, entries, _ = parse_csl(path.read_bytes())
        records = [genesis.to_record()] + [e.to_record() for e in entries]
    else:
        state = _node(args).streams.require(args.target)
        records = list(state.records())
    if args.json:
        sys.stdout.write(stable_json_bytes({"records": records}).decode() + "\n")
    else:
        for rec in records:
            sys.stdout.write(stable_json_bytes(rec).decode() + "\n")
    return 0


def cmd_stream_verify(args: argparse.Namespace) -> int:
    genesis, entries, _ = parse_csl(Path(args.file).read_bytes())
    report = verify_stream(genesis, entries)
    record = {
        "first_bad_seq": report.first_bad_seq,
        "ok": report.ok,
        "reasons": list(report.reasons),
    }
    if report.ok:
        _emit(args, record, f"ok: {len(entries)} entries verify")
        return 0
    _emit(args, record,
          f"INVALID at seq {report.first_bad_seq}: {', '.join(report.reasons)}")
    return 1


def _mod_action(args: argparse.Namespace, verb: str) -> int:
    node = _node(args)
    key = node.load_user_key(args.key)
    target = parse_target(args.target)
    action = ModAction(
        verb=verb,
        target=target,
        label=getattr(args, "label", None),
        score=getattr(args, "score", None),
        reason=args.reason,
    )
    entry = node.streams.append(args.stream, key, "MOD_ACTION", action=action.to_dict())
    _emit(args, {
        "seq": entry.seq,
        "stream_id": entry.stream_id,
        "verb": verb,
    }, f"{verb} recorded at seq {entry.seq}")
    return 0


def cmd_mod_compare(args: argparse.Namespace) -> int:
    node = _node(args)
    report = node.compare(args.a, args.b, _csv(args.streams) or None)
    human = (f"contentions: {len(report.contentions)}  "
             f"agreements: {len(report.agreements)}  "
             f"only-a: {len(report.only_a)}  only-b: {len(report.only_b)}")
    _emit(args, report.to_dict(), human)
    return 0


def _print_feed(args: argparse.Namespace, feed) -> None:
    if args.json:
        sys.stdout.write(stable_json_bytes(feed.to_dict()).decode() + "\n")
        return
    print(f"# {feed.mode} feed — {len(feed.items)} visible, "
          f"{len(feed.diff.hidden)} hidden, policy {feed.policy_digest[:12]}")
    for item in feed.items:
        entry = item.entry
        text = "<unresolved>" if item.unresolved else (item.payload or b"").decode(
            "utf-8", "replace")
        labels = f" [{','.join(l for l, _ in item.labels)}]" if item.labels else ""
        print(f"{entry.timestamp} {entry.stream_id[:8]}#{entry.seq} "
              f"{entry.author.encoded[:20]}…{labels}: {text}")


def cmd_feed_forum(args: argparse.Namespace) -> int:
    node = _node(args)
    mods = _csv(args.mods) if args.mods is not None else None
    feed = node.forum_feed(args.forum_id, mods=mods, disabled=_csv(args.disabled))
    _print_feed(args, feed)
    return 0


def cmd_feed_follow(args: argparse.Namespace) -> int:
    node = _node(args)
    feed = node.follow_feed(_csv(args.subs), muted=_csv(args.muted))
    _print_feed(args, feed)
    return 0


def cmd_feed_diff(args: argparse.Namespace) -> int:
    node = _node(args)
    mods = _csv(args.mods) if args.mods is not None else None
    diff = node.forum_diff(args.forum, mods=mods, disabled=_csv(args.disabled))
    record = diff.to_dict()
    record["hidden_count"] = len(diff.hidden)
    _emit(args, record, f"{len(diff.hidden)} hidden items")
    return 0


def cmd_store_add(args: argparse.Namespace) -> int:
    config_path = _config_path(args) or _data_dir(args) / "config.json"
    if config_path.exists():
        rec = parse_canonical(config_path.read_bytes())
    else:
        rec = {}
    stores = list(rec.get("stores", []))
    if any(s.get("store_id") == args.store_id for s in stores):
        raise ValidationRejected(f"store {args.store_id!r} already configured")
    stores.append({
        "backend": args.backend,
        "location": args.location or "",
        "store_id": args.store_id,
    })
    rec["stores"] = stores
    NodeConfig.from_dict(rec)  # validate before writing
    config_path.parent.mkdir(parents=True, exist_ok=True)
    config_path.write_bytes(stable_json_bytes(rec))
    _emit(args, {"config": str(config_path), "store_id": args.store_id},
          f"store {args.store_id} added to {config_path}")
    return 0


def cmd_store_refuse(args: argparse.Namespace) -> int:
    node = _node(args)
    store_id = args.store_id or node.primary_store.store_id
    node.refuse(store_id, args.kind, args.value)
    _emit(args, {"kind": args.kind, "store_id": store_id, "value": args.value},
          f"{store_id} now refuses {args.kind} {args.value}")
    return 0


def cmd_store_gc(args: argparse.Namespace) -> int:
    node = _node(args)
    dropped = node.gc(args.store_id)
    total = sum(len(v) for v in dropped.values())
    _emit(args, {"dropped": {k: sorted(v) for k, v in dropped.items()}},
          f"dropped {total} unreferenced blobs")
    return 0


def cmd_sync_once(args: argparse.Namespace) -> int:
    node = _node(args)
    results = node.sync_once(args.peer, args.stream)
    record = {"results": [r.to_dict() for r in results]}
    new = sum(r.new_entries for r in results)
    forks = sum(1 for r in results if r.fork_detected)
    _emit(args, record, f"synced {len(results)} streams: {new} new entries, {forks} forks")
    return 0


def cmd_sync_gossip(args: argparse.Namespace) -> int:
    node = _node(args)
    report = node.gossip()
    _emit(args, report.to_dict(),
          f"gossip: {report.new_entries} new entries, "
          f"{len(report.unreachable)} unreachable peers")
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    node = _node(args)
    out = Path(args.out)
    stream_ids = _csv(args.streams) or None
    if out.suffix == ".tar":
        with tempfile.TemporaryDirectory() as tmp:
            manifest, warnings = node.export(Path(tmp), stream_ids,
                                             created_at=args.created_at)
            out.write_bytes(bundle_to_tar(Path(tmp)))
    else:
        manifest, warnings = node.export(out, stream_ids, created_at=args.created_at)
    _emit(args, {
        "bundle_digest": manifest["bundle_digest"],
        "out": str(out),
        "streams": len(manifest["streams"]),
        "warnings": warnings,
    }, f"exported {len(manifest['streams'])} streams to {out}\n"
       f"bundle digest {manifest['bundle_digest']}")
    return 0


def cmd_import(args: argparse.Namespace) -> int:
    node = _node(args)
    bundle = Path(args.bundle)
    if bundle.is_file():
        with tempfile.TemporaryDirectory() as tmp:
            tar_to_bundle(bundle.read_bytes(), Path(tmp))
            report = node.import_from(Path(tmp))
    else:
        report = node.import_from(bundle)
    _emit(args, report.to_dict(),
          f"imported {report.streams_imported} streams, "
          f"{report.entries_imported} entries, {report.blobs_imported} blobs; "
          f"{len(report.conflicts)} conflicts")
    return 0


def cmd_switch_provider(args: argparse.Namespace) -> int:
    node = _node(args)
    report = node.switch_provider(args.stream, args.old, args.new)
    _emit(args, report.to_dict(),
          f"replicated {report.blobs_imported} blobs, "
          f"issued {report.hints_issued} hints; {len(report.warnings)} warnings")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from .api import serve

    node = _node(args)
    serve(node, args.listen)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    config, script = load_scenario(Path(args.scenario).read_bytes())
    sim = run_simulation(config, script)
    trace = b"\n".join(sim.trace) + b"\n" if sim.trace else b""
    if args.out:
        Path(args.out).write_bytes(trace)
        heads = {
            name: {sid: node.head_hash(sid) for sid in node.store.ids()}
            for name, node in sim.nodes.items()
        }
        _emit(args, {"events": len(sim.trace), "heads": heads, "trace": args.out},
              f"{len(sim.trace)} events written to {args.out}")
    else:
        sys.stdout.buffer.write(trace)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    # Shared options are attached both to the root parser and to every leaf
    # subcommand so they may appear on either side of the subcommand name.
    # SUPPRESS keeps a subparser from overwriting a value the root parser
    # already set (subparsers copy their whole namespace over the root's).
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data-dir", default=argparse.SUPPRESS,
                        help="node data directory "
                        "(default: $PLURINET_DATA_DIR or ~/.plurinet)")
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="node config file (default: $PLURINET_CONFIG)")
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS,
                        help="machine-readable output")

    parser = argparse.ArgumentParser(
        prog="plurinet",
        description="Signed content streams, composable moderation, and "
                    "portable storage.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("keygen", help="generate a signing keypair", parents=[common])
    p.add_argument("--seed", help="32-byte seed hex (deterministic keys)")
    p.set_defaults(func=cmd_keygen)

    stream = sub.add_parser("stream", help="stream operations").add_subparsers(
        dest="stream_command")
    p = stream.add_parser("create", parents=[common])
    p.add_argument("--key", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--kind", default="CONTENT", choices=["CONTENT", "MODERATION"])
    p.add_argument("--writer", action="append", help="additional writer public key hex")
    p.add_argument("--scope", help="stream this moderation stream annotates")
    p.set_defaults(func=cmd_stream_create)
    p = stream.add_parser("append", parents=[common])
    p.add_argument("--key", required=True)
    p.add_argument("--stream", required=True)
    p.add_argument("--payload")
    p.add_argument("--payload-file")
    p.add_argument("--kind", default="POST",
                   choices=["POST", "REPLY", "EDIT", "TOMBSTONE"])
    p.add_argument("--reply-to", help="<stream_id>:<seq>")
    p.add_argument("--timestamp", type=int)
    p.set_defaults(func=cmd_stream_append)
    p = stream.add_parser("cat", parents=[common])
    p.add_argument("target", help="stream id or .csl file")
    p.set_defaults(func=cmd_stream_cat)
    p = stream.add_parser("verify", parents=[common])
    p.add_argument("file", help=".csl file")
    p.set_defaults(func=cmd_stream_verify)

    mod = sub.add_parser("mod", help="moderation actions").add_subparsers(
        dest="mod_command")
    for verb, extra in [("allow", {}), ("deny", {}), ("label", {"label": True}),
                        ("score", {"score": True}), ("include", {}), ("exclude", {})]:
        p = mod.add_parser(verb, parents=[common])
        p.add_argument("--key", required=True)
        p.add_argument("--stream", required=True, help="moderation stream id")
        p.add_argument("--target", required=True,
                       help="entry:<stream>:<seq> | hash:<hex> | "
                            "principal:<id> | stream:<id>")
        if extra.get("label"):
            p.add_argument("--label", required=True)
        if extra.get("score"):
            p.add_argument("--score", required=True, type=int)
        p.add_argument("--reason")
        verb_name = {"include": "INCLUDE_STREAM", "exclude": "EXCLUDE_STREAM"}.get(
            verb, verb.upper())
        p.set_defaults(func=lambda a, v=verb_name: _mod_action(a, v))
    p = mod.add_parser("compare", parents=[common])
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--streams", help="restrict raw set to these content streams")
    p.set_defaults(func=cmd_mod_compare)

    feed = sub.add_parser("feed", help="assemble feeds").add_subparsers(
        dest="feed_command")
    p = feed.add_parser("forum", parents=[common])
    p.add_argument("forum_id")
    p.add_argument("--mods", help="override applied moderator streams (csv)")
    p.add_argument("--disabled", help="disabled default streams (csv)")
    p.set_defaults(func=cmd_feed_forum)
    p = feed.add_parser("follow", parents=[common])
    p.add_argument("--subs", required=True, help="followed allow-streams (csv)")
    p.add_argument("--muted", help="muted content streams (csv)")
    p.set_defaults(func=cmd_feed_follow)
    p = feed.add_parser("diff", parents=[common])
    p.add_argument("--forum", required=True)
    p.add_argument("--mods")
    p.add_argument("--disabled")
    p.set_defaults(func=cmd_feed_diff)

    store = sub.add_parser("store", help="blob store admin").add_subparsers(
        dest="store_command")
    p = store.add_parser("add", parents=[common])
    p.add_argument("--store-id", required=True)
    p.add_argument("--backend", required=True,
                   choices=["MEMORY", "FILESYSTEM", "REMOTE"])
    p.add_argument("--location")
    p.set_defaults(func=cmd_store_add)
    p = store.add_parser("refuse", parents=[common])
    p.add_argument("--store-id")
    p.add_argument("--kind", required=True, choices=["HASH", "STREAM", "PRINCIPAL"])
    p.add_argument("--value", required=True)
    p.set_defaults(func=cmd_store_refuse)
    p = store.add_parser("gc", parents=[common])
    p.add_argument("--store-id")
    p.set_defaults(func=cmd_store_gc)

    sync = sub.add_parser("sync", help="peer synchronization").add_subparsers(
        dest="sync_command")
    p = sync.add_parser("once", parents=[common])
    p.add_argument("--peer", required=True, help="peer base URL")
    p.add_argument("--stream")
    p.set_defaults(func=cmd_sync_once)
    p = sync.add_parser("gossip", parents=[common])
    p.set_defaults(func=cmd_sync_gossip)

    p = sub.add_parser("export", help="write a migration bundle", parents=[common])
    p.add_argument("--out", required=True, help="bundle directory or .tar path")
    p.add_argument("--streams", help="restrict to these stream ids (csv)")
    p.add_argument("--created-at", type=int)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("import", help="import a migration bundle", parents=[common])
    p.add_argument("--bundle", required=True, help="bundle directory or .tar file")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("switch-provider", help="move a stream's blobs to a new store", parents=[common])
    p.add_argument("--stream", required=True)
    p.add_argument("--old", required=True, help="old store id")
    p.add_argument("--new", required=True, help="new store id")
    p.set_defaults(func=cmd_switch_provider)

    p = sub.add_parser("serve", help="run the node daemon", parents=[common])
    p.add_argument("--listen", help="host:port")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", help="run a sync scenario file", parents=[common])
    p.add_argument("scenario")
    p.add_argument("--out", help="write trace here instead of stdout")
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    for attr, missing in (("data_dir", None), ("config", None), ("json", False)):
        if not hasattr(args, attr):
            setattr(args, attr, missing)
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except PlurinetError as exc:
        if args.json:
            sys.stdout.write(stable_json_bytes(exc.to_dict()).decode() + "\n")
        else:
            print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
