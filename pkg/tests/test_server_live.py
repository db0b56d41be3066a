"""Integration tests against a real WebSocket relay on the loopback."""
import json
import urllib.request

import pytest
from websockets.sync.client import connect as ws_connect

from molsync.protocol import (
    Chat,
    Command,
    Connect,
    Envelope,
    Hello,
    Policy,
    Rotation,
    SERVER_ID,
    decode_envelope,
    encode_envelope,
)
from molsync.server import OutboundQueue, RelayServer

from conftest import make_envelope


@pytest.fixture()
def server():
    srv = RelayServer(bind="127.0.0.1", port=0, id_seed=42)
    srv.start_background()
    yield srv
    srv.shutdown()


def raw_join(server):
    """Open a raw socket, say hello, return (conn, peer_id)."""
    conn = ws_connect(server.url, open_timeout=5)
    hello = Envelope(kind="hello", sender=SERVER_ID, to="*", seq=1, ts=0,
                     payload=Hello(policy=Policy()))
    conn.send(encode_envelope(hello).decode())
    welcome = decode_envelope(conn.recv(timeout=5))
    assert welcome.kind == "welcome"
    return conn, welcome.payload.peer_id


def test_healthz(server):
    host, port = server.address
    with urllib.request.urlopen(f"http://{host}:{port}/healthz", timeout=5) as resp:
        assert resp.status == 200
        assert resp.read() == b"ok\n"


def test_unknown_path_is_404(server):
    host, port = server.address
    with pytest.raises(urllib.error.HTTPError) as err:
        urllib.request.urlopen(f"http://{host}:{port}/nope", timeout=5)
    assert err.value.code == 404


def test_seeded_server_assigns_golden_id(server):
    conn, peer_id = raw_join(server)
    assert peer_id == "nBRNtp3FaBNfBMoh"
    conn.close()


def test_two_joins_get_distinct_ids(server):
    c1, id1 = raw_join(server)
    c2, id2 = raw_join(server)
    assert id1 != id2
    c1.close()
    c2.close()


def test_connect_then_routed_chat_with_fifo(server):
    c1, id1 = raw_join(server)
    c2, id2 = raw_join(server)
    # peer 2 links to peer 1
    c2.send(encode_envelope(
        make_envelope("connect", Connect(target=id1), sender=id2, to=id1)
    ).decode())
    ok = decode_envelope(c2.recv(timeout=5))
    assert ok.kind == "connect_ok" and ok.payload.peer == id1
    joined = decode_envelope(c1.recv(timeout=5))
    assert joined.kind == "peer_joined" and joined.payload.peer == id2

    for i in range(20):
        c2.send(encode_envelope(
            make_envelope("chat", Chat(text=f"msg {i}"), sender=id2, to="*", seq=i + 10)
        ).decode())
    texts = [decode_envelope(c1.recv(timeout=5)).payload.text for i in range(20)]
    assert texts == [f"msg {i}" for i in range(20)]
    c1.close()
    c2.close()


def test_unlinked_unicast_gets_not_linked_error(server):
    c1, id1 = raw_join(server)
    c2, id2 = raw_join(server)
    c1.send(encode_envelope(
        make_envelope("chat", Chat(text="psst"), sender=id1, to=id2)
    ).decode())
    err = decode_envelope(c1.recv(timeout=5))
    assert err.kind == "error" and err.payload.code == "not_linked"
    c1.close()
    c2.close()


def test_spoofed_sender_is_rejected(server):
    c1, id1 = raw_join(server)
    forged = make_envelope("chat", Chat(text="evil"), sender="Z" * 16, to="*")
    c1.send(encode_envelope(forged).decode())
    err = decode_envelope(c1.recv(timeout=5))
    assert err.kind == "error" and err.payload.code == "from_mismatch"
    c1.close()


def test_undecodable_frame_gets_typed_error_and_connection_survives(server):
    c1, id1 = raw_join(server)
    c1.send("this is not an envelope")
    err = decode_envelope(c1.recv(timeout=5))
    assert err.kind == "error" and err.payload.code == "decode_error"
    # connection still usable: a unicast to an unknown peer draws a reply
    c1.send(encode_envelope(
        make_envelope("chat", Chat(text="still here"), sender=id1, to="Y" * 16)
    ).decode())
    err2 = decode_envelope(c1.recv(timeout=5))
    assert err2.kind == "error" and err2.payload.code == "peer_not_found"
    c1.close()


def test_disconnect_notifies_link_partners(server):
    c1, id1 = raw_join(server)
    c2, id2 = raw_join(server)
    c2.send(encode_envelope(
        make_envelope("connect", Connect(target=id1), sender=id2, to=id1)
    ).decode())
    decode_envelope(c2.recv(timeout=5))
    decode_envelope(c1.recv(timeout=5))
    c2.close()
    left = decode_envelope(c1.recv(timeout=5))
    assert left.kind == "peer_left" and left.payload.peer == id2
    c1.close()


def test_server_full():
    srv = RelayServer(bind="127.0.0.1", port=0, max_peers=2, id_seed=1)
    srv.start_background()
    try:
        c1, _ = raw_join(srv)
        c2, _ = raw_join(srv)
        c3 = ws_connect(srv.url, open_timeout=5)
        hello = Envelope(kind="hello", sender=SERVER_ID, to="*", seq=1, ts=0,
                         payload=Hello())
        c3.send(encode_envelope(hello).decode())
        err = decode_envelope(c3.recv(timeout=5))
        assert err.kind == "error" and err.payload.code == "server_full"
        c1.close()
        c2.close()
        c3.close()
    finally:
        srv.shutdown()


def test_hello_must_come_first():
    srv = RelayServer(bind="127.0.0.1", port=0)
    srv.start_background()
    try:
        conn = ws_connect(srv.url, open_timeout=5)
        conn.send(encode_envelope(
            make_envelope("chat", Chat(text="too soon"), sender="A" * 16, to="*")
        ).decode())
        err = decode_envelope(conn.recv(timeout=5))
        assert err.kind == "error" and err.payload.code == "decode_error"
        conn.close()
    finally:
        srv.shutdown()


def test_outbound_queue_drops_snapshots_first():
    q = OutboundQueue(cap=4)
    rot = make_envelope("rotation", Rotation(q=(1.0, 0.0, 0.0, 0.0)), seq=1)
    cmds = [make_envelope("command", Command(script=f"cmd {i}"), seq=i + 2) for i in range(4)]
    q.push(rot)
    for c in cmds[:3]:
        q.push(c)
    assert len(q.items) == 4
    # full: pushing a command evicts the queued rotation, never a command
    assert q.push(cmds[3])
    kinds = [e.kind for e in q.items]
    assert kinds == ["command"] * 4
    assert q.dropped_snapshots == 1
    # full of undroppables: a new snapshot is the one discarded
    assert not q.push(rot)
    assert q.dropped_snapshots == 2
    # undroppable kinds may exceed the cap rather than be lost
    extra = make_envelope("chat", Chat(text="keep me"), seq=99)
    assert q.push(extra)
    assert len(q.items) == 5
