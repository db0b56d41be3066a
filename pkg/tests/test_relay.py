import itertools
import random

import pytest

from molsync.protocol import Chat, Policy, Rotation, SERVER_ID, Welcome
from molsync.relay import (
    DROP_NO_LINKS,
    DROP_ORIGIN_EXCLUDED,
    ERR_NOT_LINKED,
    ERR_PEER_NOT_FOUND,
    ERR_SELF_CONNECT,
    ERR_SERVER_FULL,
    ERR_UNSUPPORTED_KIND,
    PeerRegistry,
    RelayCore,
)

from conftest import make_envelope


def make_core(n_peers=0, seed=0, **kw):
    core = RelayCore(id_seed=seed, **kw)
    ids = []
    for _ in range(n_peers):
        pid, _ = core.handle_hello(Policy(), now_ms=0)
        ids.append(pid)
    return core, ids


def link(core, a, b):
    outs = core.handle_connect(a, b, now_ms=0)
    assert outs[0][1].kind == "connect_ok"
    return outs


def test_hello_assigns_seeded_id():
    core, _ = make_core(seed=42)
    pid, welcome = core.handle_hello(Policy(), now_ms=5)
    assert pid == "nBRNtp3FaBNfBMoh"
    assert welcome.kind == "welcome"
    assert welcome.sender == SERVER_ID
    assert welcome.to == pid
    assert welcome.payload.peer_id == pid


def test_two_hellos_get_distinct_ids():
    core, ids = make_core(n_peers=2)
    assert len(set(ids)) == 2


def test_peer_cap_yields_server_full():
    core, ids = make_core(n_peers=2, max_peers=2)
    pid, err = core.handle_hello(Policy(), now_ms=0)
    assert pid is None
    assert err.kind == "error"
    assert err.payload.code == ERR_SERVER_FULL


def test_connect_links_and_notifies_target():
    core, (a, b) = make_core(n_peers=2)
    outs = core.handle_connect(b, a, now_ms=1)
    kinds = [(r, env.kind) for r, env in outs]
    assert kinds == [(b, "connect_ok"), (a, "peer_joined")]
    assert outs[1][1].payload.peer == b
    assert core.registry.linked(a, b)


def test_connect_is_idempotent():
    core, (a, b) = make_core(n_peers=2)
    link(core, b, a)
    outs = core.handle_connect(b, a, now_ms=2)
    # connect_ok again, but no duplicate peer_joined
    assert [env.kind for _, env in outs] == ["connect_ok"]
    assert core.registry.link_pairs() == {tuple(sorted((a, b)))}


def test_connect_to_unknown_peer():
    core, (a,) = make_core(n_peers=1)
    outs = core.handle_connect(a, "Z" * 16, now_ms=0)
    assert outs[0][1].payload.code == ERR_PEER_NOT_FOUND


def test_self_connect_rejected():
    core, (a,) = make_core(n_peers=1)
    outs = core.handle_connect(a, a, now_ms=0)
    assert outs[0][1].payload.code == ERR_SELF_CONNECT


def test_extra_pairwise_link_besides_star():
    core, (a, b, c, d) = make_core(n_peers=4)
    link(core, b, a)
    link(core, c, a)
    link(core, d, a)
    link(core, c, d)
    assert core.registry.links_of(c) == (a, d)
    assert core.registry.link_pairs() == {
        tuple(sorted(p)) for p in [(a, b), (a, c), (a, d), (c, d)]
    }


def test_broadcast_routes_to_all_links_except_origin():
    core, (a, b, c) = make_core(n_peers=3)
    link(core, b, a)
    link(core, c, a)
    e = make_envelope("chat", Chat(text="hi all"), sender=a, to="*")
    decision = core.route(e)
    assert sorted(decision.recipients) == sorted((b, c))
    assert a not in decision.recipients
    assert decision.drop_reason is None


def test_spoke_broadcast_reaches_only_master():
    core, (a, b, c) = make_core(n_peers=3)
    link(core, b, a)
    link(core, c, a)
    e = make_envelope("chat", Chat(text="hi"), sender=b, to="*")
    assert core.route(e).recipients == (a,)


def test_broadcast_without_links_is_dropped():
    core, (a,) = make_core(n_peers=1)
    e = make_envelope("chat", Chat(text="hello?"), sender=a, to="*")
    decision = core.route(e)
    assert decision.recipients == ()
    assert decision.drop_reason == DROP_NO_LINKS


def test_unicast_to_self_excluded():
    core, (a,) = make_core(n_peers=1)
    e = make_envelope("chat", Chat(text="me"), sender=a, to=a)
    assert core.route(e).drop_reason == DROP_ORIGIN_EXCLUDED


def test_unicast_requires_link():
    core, (a, b) = make_core(n_peers=2)
    e = make_envelope("chat", Chat(text="psst"), sender=a, to=b)
    assert core.route(e).drop_reason == DROP_NO_LINKS
    outs = core.handle_frame(e, now_ms=0)
    assert outs[0][1].payload.code == ERR_NOT_LINKED


def test_unicast_to_vanished_peer_reports_not_found():
    core, (a, b) = make_core(n_peers=2)
    link(core, b, a)
    core.handle_disconnect(b, now_ms=1)
    e = make_envelope("chat", Chat(text="gone"), sender=a, to=b)
    outs = core.handle_frame(e, now_ms=2)
    assert outs[0][1].payload.code == ERR_PEER_NOT_FOUND


def test_disconnect_notifies_all_partners_and_unlinks():
    core, (a, b, c) = make_core(n_peers=3)
    link(core, b, a)
    link(core, c, a)
    outs = core.handle_disconnect(a, now_ms=3)
    assert sorted(r for r, _ in outs) == sorted((b, c))
    assert all(env.kind == "peer_left" and env.payload.peer == a for _, env in outs)
    assert a not in core.registry
    assert core.registry.links_of(b) == ()


def test_disconnect_of_unlinked_peer_is_silent():
    core, (a,) = make_core(n_peers=1)
    assert core.handle_disconnect(a, now_ms=0) == []


def test_clients_may_not_send_server_kinds():
    core, (a,) = make_core(n_peers=1)
    e = make_envelope("welcome", Welcome(peer_id=a), sender=a, to="*")
    outs = core.handle_frame(e, now_ms=0)
    assert outs[0][1].payload.code == ERR_UNSUPPORTED_KIND


def test_registry_links_always_subset_of_peers_and_symmetric():
    rng = random.Random(5)
    core, ids = make_core(n_peers=8)
    alive = set(ids)
    for _ in range(300):
        op = rng.random()
        if op < 0.5 and len(alive) >= 2:
            x, y = rng.sample(sorted(alive), 2)
            core.handle_connect(x, y, now_ms=0)
        elif op < 0.7 and alive:
            x = rng.choice(sorted(alive))
            core.handle_disconnect(x, now_ms=0)
            alive.discard(x)
        else:
            pid, _ = core.handle_hello(Policy(), now_ms=0)
            if pid:
                alive.add(pid)
        for x, y in core.registry.link_pairs():
            assert x in core.registry and y in core.registry
            assert core.registry.linked(x, y) and core.registry.linked(y, x)


def test_message_conservation_for_broadcasts():
    """A broadcast from a peer with k links produces exactly k deliveries."""
    core, ids = make_core(n_peers=6)
    rng = random.Random(11)
    for x, y in itertools.combinations(ids, 2):
        if rng.random() < 0.4:
            core.handle_connect(x, y, now_ms=0)
    for sender in ids:
        k = len(core.registry.links_of(sender))
        e = make_envelope("rotation", Rotation(q=(1.0, 0.0, 0.0, 0.0)), sender=sender, to="*")
        outs = core.handle_frame(e, now_ms=0)
        assert len(outs) == k
        assert all(env is e for _, env in outs)  # payload untouched, same object
        assert all(r != sender for r, _ in outs)


def test_fifo_order_preserved_in_route_output():
    core, (a, b) = make_core(n_peers=2)
    link(core, a, b)
    first = make_envelope("chat", Chat(text="1"), sender=a, to=b, seq=1)
    second = make_envelope("chat", Chat(text="2"), sender=a, to=b, seq=2)
    outs = core.handle_frame(first, 0) + core.handle_frame(second, 0)
    assert [env.payload.text for _, env in outs] == ["1", "2"]


def test_unregistered_sender_is_ignored():
    core, _ = make_core()
    e = make_envelope("chat", Chat(text="ghost"), sender="G" * 16, to="*")
    assert core.handle_frame(e, now_ms=0) == []
