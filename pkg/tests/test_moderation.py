"""Moderation algebra: resolution of (possibly cyclic) stream graphs,
combinators, filter application, and contention reports. Randomized cases are
checked against the brute-force reference in mod_oracle; fixed cases pin the
documented semantics.
"""

import random

import pytest

from plurinet.moderation import (
    EMPTY_POLICY,
    EffectivePolicy,
    ModAction,
    Target,
    actions_of,
    apply_filter,
    combine,
    compare_streams,
    entry_targets,
    resolve,
)
from plurinet.errors import ValidationRejected
from plurinet.stream import append, create_stream

from conftest import keypair_for
from mod_oracle import (
    build_mod_graph,
    build_posts,
    oracle_filter,
    oracle_label_summary,
    oracle_resolve,
    policy_as_plain,
)

P1 = Target.principal("ed25519:" + "11" * 32)
P2 = Target.principal("ed25519:" + "22" * 32)
P3 = Target.principal("ed25519:" + "33" * 32)


def mod_stream(label, actions, owner=None):
    """Build a MODERATION stream from a list of ModAction."""
    owner = owner or keypair_for(label + "-owner")
    state = create_stream(owner, label, "MODERATION", created_at=1)
    for i, action in enumerate(actions):
        state, _ = append(state, owner, "MOD_ACTION", action=action.to_dict(),
                          timestamp=10 + i)
    return state


def fetch_from(*states):
    by_id = {s.stream_id: s for s in states}
    return by_id.get


# ---------------------------------------------------------------------------
# ModAction validation


def test_verb_field_matrix():
    ModAction(verb="DENY", target=P1)
    ModAction(verb="LABEL", target=P1, label="spam")
    ModAction(verb="SCORE", target=P1, score=-5)
    ModAction(verb="INCLUDE_STREAM", target=Target.stream("ab" * 32))
    with pytest.raises(ValidationRejected):
        ModAction(verb="LABEL", target=P1)  # label missing
    with pytest.raises(ValidationRejected):
        ModAction(verb="DENY", target=P1, label="sneaky")
    with pytest.raises(ValidationRejected):
        ModAction(verb="SCORE", target=P1)  # score missing
    with pytest.raises(ValidationRejected):
        ModAction(verb="ALLOW", target=P1, score=3)
    with pytest.raises(ValidationRejected):
        ModAction(verb="MUTE", target=P1)


def test_bounds():
    with pytest.raises(ValidationRejected):
        ModAction(verb="SCORE", target=P1, score=101)
    with pytest.raises(ValidationRejected):
        ModAction(verb="SCORE", target=P1, score=True)
    with pytest.raises(ValidationRejected):
        ModAction(verb="LABEL", target=P1, label="x" * 65)
    with pytest.raises(ValidationRejected):
        ModAction(verb="DENY", target=P1, reason="r" * 1025)
    ModAction(verb="LABEL", target=P1, label="x" * 64)
    ModAction(verb="SCORE", target=P1, score=100)
    ModAction(verb="SCORE", target=P1, score=-100)


def test_stream_targets_only_for_compose_verbs():
    with pytest.raises(ValidationRejected):
        ModAction(verb="DENY", target=Target.stream("ab" * 32))
    with pytest.raises(ValidationRejected):
        ModAction(verb="INCLUDE_STREAM", target=P1)


def test_action_roundtrip():
    action = ModAction(verb="LABEL", target=Target.entry("cd" * 32, 7),
                       label="satire", reason="obviously")
    assert ModAction.from_dict(action.to_dict()) == action


# ---------------------------------------------------------------------------
# resolve: fixed semantics


def test_two_denies():
    policy = resolve(mod_stream("two-denies",
                                [ModAction(verb="DENY", target=P1),
                                 ModAction(verb="DENY", target=P2)]))
    assert policy.deny == frozenset({P1, P2})
    assert policy.allow == frozenset()


def test_later_entry_wins_within_stream():
    policy = resolve(mod_stream("flip",
                                [ModAction(verb="DENY", target=P1),
                                 ModAction(verb="ALLOW", target=P1)]))
    assert policy.allow == frozenset({P1})
    assert policy.deny == frozenset()


def test_later_label_replaces_earlier_same_target():
    s = mod_stream("relabel", [ModAction(verb="LABEL", target=P1, label="spam"),
                               ModAction(verb="LABEL", target=P1, label="satire")])
    policy = resolve(s)
    (pairs,) = policy.labels.values()
    assert {label for label, _ in pairs} == {"satire"}


def test_include_merges_and_records_sources():
    b = mod_stream("incl-b", [ModAction(verb="DENY", target=P3)])
    a = mod_stream("incl-a", [ModAction(verb="INCLUDE_STREAM", target=Target.stream(b.stream_id)),
                              ModAction(verb="DENY", target=P1)])
    policy = resolve(a, fetch_from(b))
    assert policy.deny == frozenset({P1, P3})
    assert policy.sources == frozenset({a.stream_id, b.stream_id})
    assert policy.warnings == ()
    assert policy.sources_for(P3) == frozenset({b.stream_id})


def test_mutual_includes_terminate_with_one_warning():
    owner_a, owner_b = keypair_for("cyc-a"), keypair_for("cyc-b")
    a0 = create_stream(owner_a, "cycle-a", "MODERATION", created_at=1)
    b0 = create_stream(owner_b, "cycle-b", "MODERATION", created_at=1)
    a, _ = append(a0, owner_a, "MOD_ACTION", timestamp=2,
                  action=ModAction(verb="INCLUDE_STREAM",
                                   target=Target.stream(b0.stream_id)).to_dict())
    b, _ = append(b0, owner_b, "MOD_ACTION", timestamp=2,
                  action=ModAction(verb="INCLUDE_STREAM",
                                   target=Target.stream(a0.stream_id)).to_dict())
    policy = resolve(a, fetch_from(a, b))
    assert policy.sources == frozenset({a.stream_id, b.stream_id})
    assert len([w for w in policy.warnings if "cycle" in w]) == 1


def test_self_include_is_a_cycle():
    owner = keypair_for("self-incl")
    s0 = create_stream(owner, "selfie", "MODERATION", created_at=1)
    s, _ = append(s0, owner, "MOD_ACTION", timestamp=2,
                  action=ModAction(verb="INCLUDE_STREAM",
                                   target=Target.stream(s0.stream_id)).to_dict())
    policy = resolve(s, fetch_from(s))
    assert len([w for w in policy.warnings if "cycle" in w]) == 1


def test_unreachable_include_degrades_to_warning():
    a = mod_stream("dead-incl",
                   [ModAction(verb="INCLUDE_STREAM", target=Target.stream("ff" * 32)),
                    ModAction(verb="DENY", target=P1)])
    policy = resolve(a)  # no fetcher at all
    assert policy.deny == frozenset({P1})
    assert any("fetch failed" in w for w in policy.warnings)


def test_depth_limit_truncates_with_warning():
    chain = []
    prev_sid = None
    for i in reversed(range(6)):  # build leaf-first so includes point onward
        actions = [ModAction(verb="DENY", target=Target.blob(("%02x" % i) * 32))]
        if prev_sid is not None:
            actions.insert(0, ModAction(verb="INCLUDE_STREAM", target=Target.stream(prev_sid)))
        s = mod_stream(f"chain-{i}", actions)
        chain.append(s)
        prev_sid = s.stream_id
    root = chain[-1]
    fetch = fetch_from(*chain)
    full = resolve(root, fetch)
    assert len(full.deny) == 6 and not full.warnings
    clipped = resolve(root, fetch, depth_limit=3)
    assert len(clipped.deny) == 3
    assert any("depth limit" in w for w in clipped.warnings)
    with pytest.raises(ValueError):
        resolve(root, fetch, depth_limit=0)


def test_exclude_strips_contributions_and_sources():
    c = mod_stream("excl-c", [ModAction(verb="DENY", target=P3)])
    b = mod_stream("excl-b", [ModAction(verb="INCLUDE_STREAM", target=Target.stream(c.stream_id)),
                              ModAction(verb="DENY", target=P2)])
    a = mod_stream("excl-a", [ModAction(verb="INCLUDE_STREAM", target=Target.stream(b.stream_id)),
                              ModAction(verb="EXCLUDE_STREAM", target=Target.stream(c.stream_id)),
                              ModAction(verb="DENY", target=P1)])
    policy = resolve(a, fetch_from(b, c))
    # c's deny is stripped even though it arrived transitively through b
    assert policy.deny == frozenset({P1, P2})
    assert policy.sources == frozenset({a.stream_id, b.stream_id})


def test_exclude_overrides_earlier_include_of_same_stream():
    b = mod_stream("flip-b", [ModAction(verb="DENY", target=P2)])
    a = mod_stream("flip-a", [ModAction(verb="INCLUDE_STREAM", target=Target.stream(b.stream_id)),
                              ModAction(verb="EXCLUDE_STREAM", target=Target.stream(b.stream_id))])
    policy = resolve(a, fetch_from(b))
    assert policy.deny == frozenset()
    assert policy.sources == frozenset({a.stream_id})


def test_actions_of_skips_malformed_payloads():
    owner = keypair_for("malformed")
    s = create_stream(owner, "bad-actions", "MODERATION", created_at=1)
    s, _ = append(s, owner, "MOD_ACTION", action={"verb": "EXPLODE"}, timestamp=2)
    s, _ = append(s, owner, "MOD_ACTION",
                  action=ModAction(verb="DENY", target=P1).to_dict(), timestamp=3)
    survivors = actions_of(s)
    assert len(survivors) == 1
    assert survivors[0].action.verb == "DENY"


# ---------------------------------------------------------------------------
# combine


def _pol(allow=(), deny=()):
    return EffectivePolicy(allow=frozenset(allow), deny=frozenset(deny),
                           sources=frozenset({"s"}))


def test_union_of_deny_sets():
    out = combine([_pol(deny=[P1, P2]), _pol(deny=[P2, P3])], "UNION")
    assert out.deny == frozenset({P1, P2, P3})


def test_intersection_of_deny_sets():
    out = combine([_pol(deny=[P1, P2]), _pol(deny=[P2, P3])], "INTERSECTION")
    assert out.deny == frozenset({P2})


def test_deny_overrides_drops_contested_allow():
    out = combine([_pol(allow=[P1]), _pol(deny=[P1])], "DENY_OVERRIDES")
    assert out.allow == frozenset()
    assert out.deny == frozenset({P1})


def test_combine_empty_and_unknown():
    assert combine([], "UNION") == EMPTY_POLICY
    with pytest.raises(ValueError):
        combine([_pol()], "XOR")


def test_union_laws_random_policies():
    rng = random.Random(99)
    pool = [Target.principal("ed25519:" + ("%02x" % i) * 32) for i in range(8)]

    def rand_policy():
        return EffectivePolicy(
            allow=frozenset(rng.sample(pool, rng.randint(0, 4))),
            deny=frozenset(rng.sample(pool, rng.randint(0, 4))),
            sources=frozenset({f"s{rng.randint(0, 3)}"}),
        )

    for _ in range(100):
        a, b, c = rand_policy(), rand_policy(), rand_policy()
        ab = combine([a, b], "UNION")
        ba = combine([b, a], "UNION")
        assert ab.semantic_key() == ba.semantic_key()
        left = combine([combine([a, b], "UNION"), c], "UNION")
        right = combine([a, combine([b, c], "UNION")], "UNION")
        assert left.semantic_key() == right.semantic_key()
        assert combine([a, a], "UNION").semantic_key() == combine([a], "UNION").semantic_key()


# ---------------------------------------------------------------------------
# apply_filter


def _posts(label="filter-posts", n=10):
    states = build_posts(random.Random(label), label, max_posts=n)
    entries = [e for s in states for e in s.entries]
    records = [e.to_record() for e in entries]
    return entries, records


def test_empty_policy_identity():
    entries, _ = _posts()
    visible, diff = apply_filter(EMPTY_POLICY, entries, "DENY_LIST")
    assert visible == list(entries)
    assert diff.hidden == ()
    visible, diff = apply_filter(EMPTY_POLICY, entries, "ALLOW_LIST")
    assert visible == []
    assert all(s == frozenset({"mode:allow_list"}) for _, s in diff.hidden)


def test_deny_author_hides_their_entries_with_sources():
    entries, _ = _posts("authored", 20)
    victim = entries[0].author
    mod = mod_stream("author-block",
                     [ModAction(verb="DENY", target=Target.principal(victim.encoded))])
    policy = resolve(mod)
    visible, diff = apply_filter(policy, entries, "DENY_LIST")
    for e in visible:
        assert e.author != victim
    hidden_refs = diff.hidden_refs()
    for e in entries:
        if e.author == victim:
            assert e.ref in hidden_refs
    # transparency: every removal names the responsible stream
    for _, sources in diff.hidden:
        assert mod.stream_id in sources


def test_allow_exemption_beats_deny_in_deny_list_mode():
    entries, _ = _posts("exempt", 15)
    victim = entries[0]
    mod = mod_stream("exempted",
                     [ModAction(verb="DENY", target=Target.principal(victim.author.encoded)),
                      ModAction(verb="ALLOW", target=Target.entry(*victim.ref))])
    policy = resolve(mod)
    visible, diff = apply_filter(policy, entries, "DENY_LIST")
    assert victim in visible
    assert victim.ref in diff.revealed_only_by
    assert mod.stream_id in diff.revealed_only_by[victim.ref]


def test_filter_soundness_and_order():
    entries, records = _posts("sound", 30)
    mods, root_sid, _ = build_mod_graph(random.Random(4), "sound-mods", records)
    policy = resolve(mods[root_sid], mods.get)
    for mode in ("DENY_LIST", "ALLOW_LIST"):
        visible, diff = apply_filter(policy, entries, mode)
        vis_refs = [e.ref for e in visible]
        hid_refs = [ref for ref, _ in diff.hidden]
        assert set(vis_refs) & set(hid_refs) == set()
        assert vis_refs + hid_refs and len(vis_refs) + len(hid_refs) == len(entries)
        # order of raw preserved within each half
        positions = {e.ref: i for i, e in enumerate(entries)}
        assert vis_refs == sorted(vis_refs, key=positions.__getitem__)
        assert hid_refs == sorted(hid_refs, key=positions.__getitem__)


def test_monotonicity_deny_list():
    entries, _ = _posts("mono", 25)
    base_targets = [Target.entry(*entries[i].ref) for i in (1, 3)]
    bigger_targets = base_targets + [Target.principal(entries[0].author.encoded)]
    small = EffectivePolicy(deny=frozenset(base_targets))
    big = EffectivePolicy(deny=frozenset(bigger_targets))
    vis_small, _ = apply_filter(small, entries, "DENY_LIST")
    vis_big, _ = apply_filter(big, entries, "DENY_LIST")
    assert {e.ref for e in vis_big} <= {e.ref for e in vis_small}


def test_filter_does_not_mutate_inputs():
    entries, _ = _posts("pure", 10)
    before = [e.to_record() for e in entries]
    apply_filter(EffectivePolicy(deny=frozenset({Target.entry(*entries[0].ref)})),
                 entries, "DENY_LIST")
    assert [e.to_record() for e in entries] == before
    with pytest.raises(ValueError):
        apply_filter(EMPTY_POLICY, entries, "GREY_LIST")


# ---------------------------------------------------------------------------
# randomized equivalence against the reference implementation


@pytest.mark.parametrize("seed", range(40))
def test_resolve_and_filter_match_reference(seed):
    rng = random.Random(1000 + seed)
    post_states = build_posts(rng, f"ref-{seed}")
    entries = [e for s in post_states for e in s.entries]
    records = [e.to_record() for e in entries]
    mods, root, table = build_mod_graph(rng, f"ref-{seed}", records)

    policy = resolve(mods[root], mods.get)
    expected = oracle_resolve(root, table)
    got = policy_as_plain(policy)
    assert got["allow"] == expected["allow"]
    assert got["deny"] == expected["deny"]
    assert got["labels"] == expected["labels"]
    assert got["scores"] == expected["scores"]
    assert got["sources"] == expected["sources"]
    assert got["attribution"] == expected["attribution"]
    assert len([w for w in policy.warnings if "cycle" in w]) == len(expected["cycle_hits"])
    assert len([w for w in policy.warnings if "fetch failed" in w]) == len(expected["fetch_misses"])

    for mode in ("DENY_LIST", "ALLOW_LIST"):
        visible, diff = apply_filter(policy, entries, mode)
        want_vis, want_hid = oracle_filter(expected["allow"], expected["deny"], records, mode)
        assert [e.ref for e in visible] == want_vis
        assert [ref for ref, _ in diff.hidden] == want_hid
        assert dict(diff.label_summary) == oracle_label_summary(expected["labels"], records)


# ---------------------------------------------------------------------------
# compare_streams


def test_compare_reflexive():
    entries, _ = _posts("cmp-self", 10)
    a = mod_stream("cmp-a", [ModAction(verb="DENY", target=Target.entry(*entries[0].ref))])
    report = compare_streams(a, a, entries)
    assert report.contentions == ()
    assert len(report.agreements) == 1


def test_compare_disjoint_denies():
    entries, _ = _posts("cmp-disjoint", 10)
    e1, e2 = entries[0], entries[1]
    a = mod_stream("cmp-d-a", [ModAction(verb="DENY", target=Target.entry(*e1.ref))])
    b = mod_stream("cmp-d-b", [ModAction(verb="DENY", target=Target.entry(*e2.ref))])
    report = compare_streams(a, b, entries)
    assert set(report.contentions) == {e1.ref, e2.ref}
    assert report.agreements == ()
    assert len(report.only_a) == 1 and len(report.only_b) == 1


@pytest.mark.parametrize("seed", range(10))
def test_compare_equals_symmetric_difference(seed):
    rng = random.Random(7000 + seed)
    post_states = build_posts(rng, f"cmp-{seed}", max_posts=25)
    entries = [e for s in post_states for e in s.entries]
    records = [e.to_record() for e in entries]
    mods_a, root_a, table_a = build_mod_graph(rng, f"cmp-{seed}-a", records, max_streams=2)
    mods_b, root_b, table_b = build_mod_graph(rng, f"cmp-{seed}-b", records, max_streams=2)
    fetch = {**mods_a, **mods_b}.get
    report = compare_streams(mods_a[root_a], mods_b[root_b], entries, fetch)
    pa, pb = oracle_resolve(root_a, table_a), oracle_resolve(root_b, table_b)
    _, hid_a = oracle_filter(pa["allow"], pa["deny"], records, "DENY_LIST")
    _, hid_b = oracle_filter(pb["allow"], pb["deny"], records, "DENY_LIST")
    assert set(report.contentions) == set(hid_a) ^ set(hid_b)
    assert set(report.agreements) == set(hid_a) & set(hid_b)


def test_entry_targets_shape(alice):
    s = create_stream(alice, "targets", created_at=1)
    s, e = append(s, alice, "POST", b"x", timestamp=2)
    ref_t, hash_t, who_t = entry_targets(e)
    assert ref_t == Target.entry(s.stream_id, 1)
    assert hash_t == Target.blob(e.content_hash)
    assert who_t == Target.principal(alice.principal.encoded)
