"""Regenerate tests/fixtures/envelopes.json, the wire fixtures shared by the
Python suite and the frontend tests. Run from the repo root:

    python3 tools/gen_wire_fixtures.py
"""
from __future__ import annotations

import json
from pathlib import Path

from molsync.protocol import (
    Chat,
    Command,
    Connect,
    ConnectOk,
    Envelope,
    ErrorInfo,
    FileAck,
    FileChunk,
    FileManifest,
    Hello,
    PeerJoined,
    PeerLeft,
    Policy,
    Rotation,
    State,
    Welcome,
    digest_of,
    encode_envelope,
)

A = "aJ9rQ2xKfLm3NpT7"
B = "Zz0yX8wV6uS4qR1c"
FILE_ID = "f1e2d3c4b5a69788"


def env(kind, payload, sender=A, to="*", seq=1, ts=1722000000000):
    return Envelope(kind=kind, sender=sender, to=to, seq=seq, ts=ts, payload=payload)


FRAMES = [
    env("hello", Hello(policy=Policy(True, True, True, True, False, True)), seq=1),
    env("welcome", Welcome(peer_id=B), sender="0" * 16, to=A, seq=1),
    env("connect", Connect(target=B), to=B, seq=2),
    env("connect_ok", ConnectOk(peer=B), sender="0" * 16, to=A, seq=2),
    env("peer_joined", PeerJoined(peer=A), sender="0" * 16, to=B, seq=3),
    env("peer_left", PeerLeft(peer=A), sender="0" * 16, to=B, seq=4),
    env("rotation", Rotation(q=(0.92387953, 0.0, 0.38268343, 0.0)), seq=5),
    env(
        "state",
        State(
            q=(0.70710678, 0.0, 0.0, 0.70710678),
            zoom=137.5,
            center=(1.25, -2.5, 0.75),
        ),
        seq=6,
    ),
    env("state", State(q=(1.0, 0.0, 0.0, 0.0), zoom=100.0, center=(0.0, 0.0, 0.0),
                       hop=1), seq=7),
    env("command", Command(script="select all; spacefill 0.3"), seq=8),
    env("chat", Chat(text="hello éè molecular \U0001f9ea"), to=B, seq=9),
    env(
        "file_manifest",
        FileManifest(
            file_id=FILE_ID,
            name="structure.xyz",
            total_bytes=5,
            chunk_size=4,
            chunk_count=2,
            digest=digest_of(b"hello"),
        ),
        to=B,
        seq=10,
    ),
    env("file_chunk", FileChunk(file_id=FILE_ID, index=0, data=b"hell"), to=B, seq=11),
    env("file_chunk", FileChunk(file_id=FILE_ID, index=1, data=b"o"), to=B, seq=12),
    env("file_ack", FileAck(file_id=FILE_ID, ok=True), sender=B, to=A, seq=13),
    env("error", ErrorInfo(code="peer_not_found", message="no peer " + B),
        sender="0" * 16, to=A, seq=14),
]

INVALID = [
    {"wire": "not structured text", "code": "malformed"},
    {"wire": "[1,2,3]", "code": "malformed"},
    {"wire": '{"v":2,"kind":"chat","from":"' + A + '","to":"*","seq":1,"ts":0,"payload":{"text":"x"}}',
     "code": "unsupported_version"},
    {"wire": '{"v":1,"kind":"teleport","from":"' + A + '","to":"*","seq":1,"ts":0,"payload":{}}',
     "code": "unknown_kind"},
    {"wire": '{"v":1,"kind":"chat","from":"short","to":"*","seq":1,"ts":0,"payload":{"text":"x"}}',
     "code": "field_out_of_range"},
    {"wire": '{"v":1,"kind":"rotation","from":"' + A + '","to":"*","seq":1,"ts":0,"payload":{"q":[0,0,0,0],"hop":0}}',
     "code": "field_out_of_range"},
    {"wire": '{"v":1,"kind":"state","from":"' + A + '","to":"*","seq":1,"ts":0,"payload":{"q":[1,0,0,0],"zoom":0,"center":[0,0,0],"hop":0}}',
     "code": "field_out_of_range"},
    {"wire": '{"v":1,"kind":"chat","from":"' + A + '","to":"*","seq":-1,"ts":0,"payload":{"text":"x"}}',
     "code": "field_out_of_range"},
]


def main() -> None:
    frames = []
    for e in FRAMES:
        wire = encode_envelope(e).decode("utf-8")
        frames.append({"kind": e.kind, "wire": wire, "expect": json.loads(wire)})
    doc = {"frames": frames, "invalid": INVALID}
    out = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "envelopes.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out} ({len(frames)} frames, {len(INVALID)} invalid)")


if __name__ == "__main__":
    main()
