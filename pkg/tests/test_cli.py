"""CLI end-to-end runs through main(): every command family, exit codes,
--json canonical output, target spec parsing."""

import json

import pytest

from plurinet.canonical import sha256_hex, stable_json_bytes
from plurinet.cli import main, parse_target
from plurinet.errors import ValidationRejected
from plurinet.moderation import Target
from plurinet.node import Node
from plurinet.sync import SimNetConfig


@pytest.fixture
def home(tmp_path, monkeypatch):
    data = tmp_path / "home"
    monkeypatch.setenv("PLURINET_DATA_DIR", str(data))
    monkeypatch.delenv("PLURINET_CONFIG", raising=False)
    return data


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv, "--json")
    return code, json.loads(out) if out.strip() else None, err


SEED_A = "11" * 32
SEED_B = "22" * 32


def _keygen(capsys, seed=SEED_A):
    code, body, _ = run_json(capsys, "keygen", "--seed", seed)
    assert code == 0
    return body["principal"]


def _make_stream(capsys, principal, name="posts", kind="CONTENT"):
    code, body, _ = run_json(capsys, "stream", "create", "--key", principal,
                             "--name", name, "--kind", kind)
    assert code == 0
    return body["stream_id"]


def _post(capsys, principal, sid, text, ts):
    code, body, _ = run_json(capsys, "stream", "append", "--key", principal,
                             "--stream", sid, "--payload", text,
                             "--timestamp", str(ts))
    assert code == 0
    return body


# ---------------------------------------------------------------------------


def test_parse_target_specs():
    sid = "ab" * 32
    assert parse_target(f"entry:{sid}:4") == Target.entry(sid, 4)
    assert parse_target("hash:" + "cd" * 32) == Target.blob("cd" * 32)
    assert parse_target("principal:" + "ee" * 32) == Target.principal("ed25519:" + "ee" * 32)
    assert parse_target("principal:ed25519:" + "ee" * 32) == Target.principal(
        "ed25519:" + "ee" * 32)
    assert parse_target(f"stream:{sid}") == Target.stream(sid)
    for bad in ("nonsense", "orbit:x", "entry:no-seq"):
        with pytest.raises(ValidationRejected):
            parse_target(bad)


def test_keygen_deterministic_and_human_output(home, capsys):
    p1 = _keygen(capsys, SEED_A)
    p2 = _keygen(capsys, SEED_A)
    assert p1 == p2 and p1.startswith("ed25519:")
    code, out, _ = run(capsys, "keygen", "--seed", SEED_B)
    assert code == 0 and "ed25519:" in out and "key file:" in out


def test_global_flags_work_on_either_side(home, capsys, tmp_path):
    explicit = tmp_path / "elsewhere"
    code, body, _ = run_json(capsys, "--data-dir", str(explicit), "keygen",
                             "--seed", SEED_A)
    assert code == 0
    assert (explicit / "keys").exists()
    assert not (home / "keys").exists()


def test_stream_lifecycle(home, capsys):
    principal = _keygen(capsys)
    sid = _make_stream(capsys, principal)
    for i in range(3):
        body = _post(capsys, principal, sid, f"hello {i}", 100 + i)
        assert body["seq"] == i + 1

    code, out, _ = run(capsys, "stream", "cat", sid, "--json")
    records = json.loads(out)["records"]
    assert len(records) == 4 and records[0]["seq"] == 0

    # non-json cat prints one canonical record per line
    code, out, _ = run(capsys, "stream", "cat", sid)
    lines = [l for l in out.splitlines() if l]
    assert len(lines) == 4
    assert json.loads(lines[1])["seq"] == 1


def test_verify_command_exit_codes(home, capsys, tmp_path):
    principal = _keygen(capsys)
    sid = _make_stream(capsys, principal)
    _post(capsys, principal, sid, "check me", 5)
    csl = home / "streams" / f"{sid}.csl"
    assert csl.exists()

    code, body, _ = run_json(capsys, "stream", "verify", str(csl))
    assert code == 0 and body["ok"] is True

    # flip a byte inside the entry
    tampered = tmp_path / "tampered.csl"
    lines = csl.read_bytes().splitlines()
    rec = json.loads(lines[1])
    rec["timestamp"] += 1
    lines[1] = stable_json_bytes(rec)
    tampered.write_bytes(b"\n".join(lines) + b"\n")
    code, body, _ = run_json(capsys, "stream", "verify", str(tampered))
    assert code == 1
    assert body["ok"] is False and body["first_bad_seq"] == 1

    code, out, err = run(capsys, "stream", "verify", str(tampered))
    assert code == 1 and "INVALID at seq 1" in out


def test_moderation_and_feeds(home, capsys):
    author = _keygen(capsys, SEED_A)
    moderator = _keygen(capsys, SEED_B)
    posts = _make_stream(capsys, author, "posts")
    for i in range(3):
        _post(capsys, author, posts, f"post {i}", 100 + i)
    mods = _make_stream(capsys, moderator, "mods", kind="MODERATION")

    code, body, _ = run_json(capsys, "mod", "deny", "--key", moderator,
                             "--stream", mods, "--target", f"entry:{posts}:2",
                             "--reason", "off topic")
    assert code == 0 and body["verb"] == "DENY"
    code, body, _ = run_json(capsys, "mod", "label", "--key", moderator,
                             "--stream", mods, "--target", f"entry:{posts}:1",
                             "--label", "news")
    assert code == 0

    # forum feed requires a config with the forum
    config = {
        "forums": [{
            "forum_id": "main",
            "content_streams": [posts],
            "moderator_streams": [mods],
        }],
    }
    (home / "config.json").write_bytes(stable_json_bytes(config))

    code, feed, _ = run_json(capsys, "feed", "forum", "main")
    assert code == 0
    seqs = [item["entry"]["seq"] for item in feed["items"]]
    assert 2 not in seqs and len(seqs) == 2
    labeled = [item for item in feed["items"] if item["labels"]]
    assert labeled and labeled[0]["labels"][0][0] == "news"

    code, diff, _ = run_json(capsys, "feed", "diff", "--forum", "main")
    assert code == 0 and diff["hidden_count"] == 1

    code, feed, _ = run_json(capsys, "feed", "forum", "main", "--mods", "")
    assert len(feed["items"]) == 3

    # human-readable feed has a summary header
    code, out, _ = run(capsys, "feed", "forum", "main")
    assert code == 0 and "2 visible, 1 hidden" in out

    code, follow, _ = run_json(capsys, "feed", "follow", "--subs", mods)
    assert code == 0  # deny-only stream allows nothing
    assert follow["items"] == []

    code, cmp_body, _ = run_json(capsys, "mod", "compare", "--a", mods, "--b", mods)
    assert code == 0 and cmp_body["contentions"] == []


def test_store_commands(home, capsys):
    author = _keygen(capsys)
    sid = _make_stream(capsys, author)
    body = _post(capsys, author, sid, "keep me", 5)

    code, add_body, _ = run_json(capsys, "store", "add", "--store-id", "cold",
                                 "--backend", "FILESYSTEM", "--location",
                                 str(home / "cold"))
    assert code == 0
    config = json.loads((home / "config.json").read_text())
    assert [s["store_id"] for s in config["stores"]] == ["cold"]

    code, _, _ = run_json(capsys, "store", "add", "--store-id", "cold",
                          "--backend", "MEMORY")
    assert code == 1  # duplicate id

    # refusing the stored hash deletes the blob from the (now configured) store
    code, refuse_body, _ = run_json(capsys, "store", "refuse", "--kind", "HASH",
                                    "--value", body["content_hash"])
    assert code == 0 and refuse_body["store_id"] == "cold"

    code, gc_body, _ = run_json(capsys, "store", "gc")
    assert code == 0 and gc_body["dropped"] == {"cold": []}


def test_export_import_round_trip(home, capsys, tmp_path, monkeypatch):
    author = _keygen(capsys)
    sid = _make_stream(capsys, author)
    _post(capsys, author, sid, "travels", 5)

    out_dir = tmp_path / "bundle"
    code, body, _ = run_json(capsys, "export", "--out", str(out_dir),
                             "--created-at", "1")
    assert code == 0 and body["streams"] == 1
    digest = body["bundle_digest"]

    tar_path = tmp_path / "bundle.tar"
    code, body, _ = run_json(capsys, "export", "--out", str(tar_path),
                             "--created-at", "1")
    assert code == 0 and body["bundle_digest"] == digest
    assert tar_path.exists()

    other_home = tmp_path / "other"
    monkeypatch.setenv("PLURINET_DATA_DIR", str(other_home))
    code, report, _ = run_json(capsys, "import", "--bundle", str(tar_path))
    assert code == 0
    assert report["streams_imported"] == 1 and report["conflicts"] == []
    assert Node(other_home).streams.get(sid) is not None

    code, report, _ = run_json(capsys, "import", "--bundle", str(out_dir))
    assert code == 0 and report["streams_imported"] == 0


def test_switch_provider_command(home, capsys):
    author = _keygen(capsys)
    sid = _make_stream(capsys, author)
    body = _post(capsys, author, sid, "movable", 5)

    config = {"stores": [
        {"store_id": "old", "backend": "FILESYSTEM", "location": str(home / "old")},
        {"store_id": "new", "backend": "FILESYSTEM", "location": str(home / "new")},
    ]}
    (home / "config.json").write_bytes(stable_json_bytes(config))
    # re-append so the blob lands in the configured primary store
    body = _post(capsys, author, sid, "movable two", 6)

    code, report, _ = run_json(capsys, "switch-provider", "--stream", sid,
                               "--old", "old", "--new", "new")
    assert code == 0 and report["hints_issued"] >= 1
    assert (home / "new" / body["content_hash"][:2]
            / body["content_hash"][2:]).exists()


def test_simulate_command(home, capsys, tmp_path):
    scenario = {
        **SimNetConfig(rng_seed=4, topology={"a": ("b",), "b": ("a",)}).to_dict(),
        "script": [
            {"tick": 1, "node": "a", "op": "create", "name": "feed"},
            {"tick": 2, "node": "a", "op": "append", "stream": "a/feed",
             "payload": "hi"},
            {"tick": 10, "node": "a", "op": "gossip"},
            {"tick": 20, "node": "b", "op": "gossip"},
        ],
    }
    path = tmp_path / "scenario.json"
    path.write_bytes(stable_json_bytes(scenario))

    code, out, _ = run(capsys, "simulate", str(path))
    assert code == 0
    events = [json.loads(line) for line in out.splitlines() if line]
    assert events[0]["event"] == "ACTION"

    trace_path = tmp_path / "trace.log"
    code, body, _ = run_json(capsys, "simulate", str(path), "--out", str(trace_path))
    assert code == 0 and body["events"] == len(events)
    assert trace_path.read_text().splitlines() == [json.dumps(e, sort_keys=True,
                                                              separators=(",", ":"))
                                                   for e in events]
    heads = body["heads"]
    (sid,) = heads["a"].keys()
    assert heads["a"][sid] == heads["b"][sid] is not None


def test_error_paths_and_exit_codes(home, capsys):
    # usage error: unknown command
    code, _, err = run(capsys, "frobnicate")
    assert code == 2

    # bare invocation prints usage
    code, _, err = run(capsys)
    assert code == 2 and "usage" in err

    # domain error, human: message on stderr, exit 1
    code, out, err = run(capsys, "stream", "cat", "ff" * 32)
    assert code == 1 and "error [NOT_FOUND]" in err and out == ""

    # domain error, json: envelope on stdout, exit 1
    code, body, err = run_json(capsys, "stream", "cat", "ff" * 32)
    assert code == 1 and body["code"] == "NOT_FOUND"

    # config errors surface the offending key
    (home / "config.json").write_text('{"node_name":"x"}')
    code, body, _ = run_json(capsys, "feed", "follow", "--subs", "x")
    assert code == 1 and body["code"] == "CONFIG_ERROR"
    assert "node_name" in body["message"]
