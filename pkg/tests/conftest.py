"""Shared fixtures and hypothesis strategies for wire-level tests."""
from __future__ import annotations

import math
import random

from hypothesis import strategies as st

from molsync.protocol import (
    ALPHABET,
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
)

PEER_A = "A" * 16
PEER_B = "B" * 16
PEER_C = "C" * 16
PEER_D = "D" * 16


def make_envelope(kind, payload, sender=PEER_A, to="*", seq=1, ts=0):
    return Envelope(kind=kind, sender=sender, to=to, seq=seq, ts=ts, payload=payload)


peer_ids = st.text(alphabet=ALPHABET, min_size=16, max_size=16)
addresses = st.one_of(st.just("*"), peer_ids)
seqs = st.integers(min_value=0, max_value=2**64 - 1)
timestamps = st.integers(min_value=-(2**62), max_value=2**62)
hops = st.sampled_from([0, 1])

finite_floats = st.floats(allow_nan=False, allow_infinity=False, width=64)
zooms = st.floats(
    min_value=1e-6, max_value=1e6, allow_nan=False, allow_infinity=False
)
centers = st.tuples(finite_floats, finite_floats, finite_floats)


@st.composite
def unit_quats(draw):
    """Random orientations, including near-axis and degenerate-ish inputs."""
    comps = [
        draw(st.floats(min_value=-1.0, max_value=1.0, allow_nan=False))
        for _ in range(4)
    ]
    n2 = sum(c * c for c in comps)
    if n2 < 1e-12:
        comps = [1.0, 0.0, 0.0, 0.0]
        n2 = 1.0
    s = 1.0 / math.sqrt(n2)
    return tuple(c * s for c in comps)


policies = st.builds(
    Policy,
    send_rotations=st.booleans(),
    send_states=st.booleans(),
    send_commands=st.booleans(),
    apply_rotations=st.booleans(),
    apply_states=st.booleans(),
    apply_commands=st.booleans(),
)

rotations = st.builds(Rotation, q=unit_quats(), hop=hops)
states = st.builds(State, q=unit_quats(), zoom=zooms, center=centers, hop=hops)
commands = st.builds(
    Command, script=st.text(max_size=300), hop=hops
)
chats = st.builds(Chat, text=st.text(max_size=500))


@st.composite
def file_manifests(draw):
    total = draw(st.integers(min_value=0, max_value=1 << 22))
    size = draw(st.integers(min_value=1, max_value=1 << 16))
    return FileManifest(
        file_id=draw(peer_ids),
        name=draw(st.text(max_size=80)),
        total_bytes=total,
        chunk_size=size,
        chunk_count=-(-total // size),
        digest=digest_of(draw(st.binary(max_size=8))),
    )


file_chunks = st.builds(
    FileChunk, file_id=peer_ids, index=st.integers(min_value=0, max_value=1 << 20),
    data=st.binary(max_size=2048),
)
file_acks = st.builds(FileAck, file_id=peer_ids, ok=st.booleans(), error=st.text(max_size=60))
errors = st.builds(ErrorInfo, code=st.text(min_size=1, max_size=30), message=st.text(max_size=120))

payload_and_kind = st.one_of(
    st.tuples(st.just("hello"), st.builds(Hello, policy=policies)),
    st.tuples(st.just("welcome"), st.builds(Welcome, peer_id=peer_ids)),
    st.tuples(st.just("connect"), st.builds(Connect, target=peer_ids)),
    st.tuples(st.just("connect_ok"), st.builds(ConnectOk, peer=peer_ids)),
    st.tuples(st.just("peer_joined"), st.builds(PeerJoined, peer=peer_ids)),
    st.tuples(st.just("peer_left"), st.builds(PeerLeft, peer=peer_ids)),
    st.tuples(st.just("rotation"), rotations),
    st.tuples(st.just("state"), states),
    st.tuples(st.just("command"), commands),
    st.tuples(st.just("chat"), chats),
    st.tuples(st.just("file_manifest"), file_manifests()),
    st.tuples(st.just("file_chunk"), file_chunks),
    st.tuples(st.just("file_ack"), file_acks),
    st.tuples(st.just("error"), errors),
)


@st.composite
def envelopes(draw):
    kind, payload = draw(payload_and_kind)
    return Envelope(
        kind=kind,
        sender=draw(peer_ids),
        to=draw(addresses),
        seq=draw(seqs),
        ts=draw(timestamps),
        payload=payload,
    )


@st.composite
def update_envelopes(draw):
    """Only the kinds that mutate a viewer: rotation, state, command."""
    kind, payload = draw(
        st.one_of(
            st.tuples(st.just("rotation"), rotations),
            st.tuples(st.just("state"), states),
            st.tuples(st.just("command"), commands),
        )
    )
    return Envelope(
        kind=kind,
        sender=draw(peer_ids),
        to=draw(addresses),
        seq=draw(seqs),
        ts=draw(timestamps),
        payload=payload,
    )


def seeded_rng(seed: int = 0) -> random.Random:
    return random.Random(seed)
