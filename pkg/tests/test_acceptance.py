"""Acceptance suite: one test per release criterion, at pinned tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line per
criterion.
"""
import itertools
import math
import random
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings

from molsync.protocol import (
    Command,
    DecodeError,
    FileChunk,
    FileError,
    Policy,
    Rotation,
    State,
    ViewerModel,
    apply_update,
    chunk_file,
    compose_rotation,
    decode_envelope,
    digest_of,
    encode_envelope,
    from_axis_angle,
    gate_inbound,
    gate_outbound,
    reassemble,
)
from molsync.protocol.messages import KINDS
from molsync.protocol.quat import is_unit
from molsync.relay import RelayCore
from molsync.script import Action
from molsync.session import SessionCore
from molsync.sim import NetProfile, Scenario, ScenarioPeer, run_scenario

from conftest import commands, envelopes, make_envelope, rotations, states

TOL = 1e-9
FRAME_LIMIT = 512


def _pass(line):
    print(f"PASS: {line}")


# -- 1. subsecond propagation --------------------------------------------------


def test_subsecond_propagation_three_peer_star():
    """3-peer star, 100 ms +-20 ms, 0 loss, 50 rotations at 20 Hz:
    p95 apply latency < 1000 ms, cameras within 1e-9, runtime < 5 s."""
    started = time.monotonic()
    master_script = [
        Action(i * 50, "drag", from_axis_angle((0.0, 0.0, 1.0), math.radians(i + 1)))
        for i in range(50)
    ]
    scenario = Scenario(
        peers=[ScenarioPeer("M"), ScenarioPeer("S0"), ScenarioPeer("S1")],
        links=[("S0", "M"), ("S1", "M")],
        scripts={"M": master_script},
    )
    report = run_scenario(scenario, NetProfile(100.0, 20.0, 0.0, seed=7))
    elapsed = time.monotonic() - started
    assert report.overall.samples == 100
    assert report.overall.p95_ms < 1000.0
    assert report.converged  # pairwise camera fields within 1e-9, logs equal
    assert elapsed < 5.0
    _pass(
        f"subsecond propagation (p95={report.overall.p95_ms:g} ms, "
        f"converged, runtime {elapsed:.2f} s)"
    )


# -- 2. small payloads ----------------------------------------------------------


@given(rotations)
@settings(max_examples=500, deadline=None)
def test_rotation_frames_stay_small(payload):
    e = make_envelope("rotation", payload, seq=2**64 - 1, ts=2**62)
    assert len(encode_envelope(e)) <= FRAME_LIMIT


@given(states)
@settings(max_examples=500, deadline=None)
def test_state_frames_stay_small(payload):
    e = make_envelope("state", payload, seq=2**64 - 1, ts=2**62)
    assert len(encode_envelope(e)) <= FRAME_LIMIT


@given(commands)
@settings(max_examples=500, deadline=None)
def test_command_frames_of_session_scale_stay_small(payload):
    # collaborative traffic carries short scripts; 300 chars is generous
    if len(payload.script.encode("utf-8")) <= 300:
        e = make_envelope("command", payload, seq=2**64 - 1, ts=2**62)
        assert len(encode_envelope(e)) <= FRAME_LIMIT


def test_small_payloads_and_text_frames_end_to_end():
    master_script = [
        Action(i * 50, "drag", from_axis_angle((1.0, 2.0, -0.5), 0.03 * (i + 1)))
        for i in range(50)
    ] + [
        Action(2500, "set_zoom", 137.5),
        Action(2550, "command", "select all; spacefill 0.3; color chain"),
    ]
    scenario = Scenario(
        peers=[ScenarioPeer("M"), ScenarioPeer("S0"), ScenarioPeer("S1")],
        links=[("S0", "M"), ("S1", "M")],
        scripts={"M": master_script},
    )
    report = run_scenario(scenario, NetProfile(100.0, 20.0, seed=7))
    assert report.max_update_frame_bytes <= FRAME_LIMIT
    # every frame kind encodes to UTF-8 text; binary rides only inside
    # file_chunk payloads, base64-encoded
    sample = make_envelope(
        "file_chunk", FileChunk(file_id="F" * 16, index=0, data=bytes(range(256))), seq=9
    )
    encode_envelope(sample).decode("utf-8")
    _pass(
        f"small payloads (max update frame {report.max_update_frame_bytes} B <= 512, "
        "all frames UTF-8 text)"
    )


# -- 3. no amplification ----------------------------------------------------------


def _pump(core, sessions, first_deliveries):
    """Deliver synchronously until quiet; returns per-hop delivery counts."""
    hops = []
    frontier = first_deliveries
    while frontier:
        hops.append(len(frontier))
        next_frontier = []
        for recipient, env in frontier:
            replies = sessions[recipient].on_envelope(env, 0)
            for reply in replies:
                next_frontier.extend(core.handle_frame(reply, 0))
        frontier = next_frontier
        assert len(hops) <= 3, "delivery cascade exceeded two hops"
    return hops


def test_no_amplification_over_randomized_topologies():
    """Across 100 seeds: k-link broadcast = k deliveries; hub re-share adds
    at most (hub links - 1) more; nothing propagates beyond hop 2."""
    for seed in range(100):
        rng = random.Random(seed)
        n = rng.randint(2, 8)
        core = RelayCore(id_seed=seed)
        sessions = {}
        ids = []
        for i in range(n):
            s = SessionCore(hub=rng.random() < 0.5, rng=random.Random(seed * 100 + i))
            pid, welcome = core.handle_hello(Policy(), 0)
            s.on_envelope(welcome, 0)
            sessions[pid] = s
            ids.append(pid)
        for a, b in itertools.combinations(ids, 2):
            if rng.random() < 0.45:
                for recipient, env in core.handle_connect(a, b, 0):
                    sessions[recipient].on_envelope(env, 0)

        sender = rng.choice(ids)
        k = len(core.registry.links_of(sender))
        e = sessions[sender].local_drag(
            from_axis_angle((0.0, 1.0, 0.0), 0.5 + seed * 0.01), 0
        )
        deliveries = core.handle_frame(e[0], 0) if e else []
        assert len(deliveries) == k, f"seed {seed}: broadcast fan-out"

        hops = _pump(core, sessions, deliveries)
        if len(hops) > 1:
            hub_link_counts = [
                len(core.registry.links_of(r)) for r, _ in deliveries
                if sessions[r].hub
            ]
            assert hops[1] <= sum(max(0, c - 1) for c in hub_link_counts)
        assert len(hops) <= 2, f"seed {seed}: re-share exceeded hop 2"
    _pass("no amplification (100 random topologies <= 8 peers, hop limit 2)")


# -- 4. last-writer-wins oracle ------------------------------------------------------


def _state_env(origin, seq):
    return make_envelope(
        "state",
        State(
            q=from_axis_angle((0.0, 0.0, 1.0), 0.1 * seq),
            zoom=100.0 + seq,
            center=(float(seq), float(ord(origin[0])), 0.0),
        ),
        sender=origin,
        seq=seq,
    )


def test_lww_matches_bruteforce_composition_oracle():
    """All permutations of <= 5 states from <= 3 origins: applying everything
    equals applying only each origin's newest frame, exactly."""
    a, b, c = "A" * 16, "B" * 16, "C" * 16
    envelope_sets = [
        [_state_env(a, 1), _state_env(a, 2), _state_env(a, 3)],
        [_state_env(a, 1), _state_env(a, 2), _state_env(b, 1), _state_env(b, 2)],
        [_state_env(a, 1), _state_env(a, 5), _state_env(b, 3), _state_env(c, 2),
         _state_env(c, 7)],
        [_state_env(a, 2), _state_env(a, 2), _state_env(b, 1), _state_env(b, 4),
         _state_env(c, 1)],
    ]
    policy = Policy()
    checked = 0
    for envs in envelope_sets:
        newest = {}
        for e in envs:
            newest[e.sender] = max(newest.get(e.sender, 0), e.seq)
        for perm in itertools.permutations(envs):
            full = ViewerModel()
            for e in perm:
                full, _ = apply_update(full, e, policy)
            oracle = ViewerModel()
            seen = set()
            for e in perm:
                if e.seq == newest[e.sender] and (e.sender, e.seq) not in seen:
                    seen.add((e.sender, e.seq))
                    oracle, applied = apply_update(oracle, e, policy)
            assert full == oracle  # exact equality, dataclass-wide
            assert full.last_applied_seq == newest
            checked += 1
    _pass(f"LWW convergence oracle ({checked} permutations, exact equality)")


# -- 5. quaternion oracle ---------------------------------------------------------------


def _matrix(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def test_quaternion_composition_against_matrix_oracle():
    rng = random.Random(1234)
    worst = 0.0
    for _ in range(1000):
        q1 = _random_unit(rng)
        q2 = _random_unit(rng)
        composed = compose_rotation(q1, q2)
        assert is_unit(composed, TOL)
        err = np.abs(_matrix(composed) - _matrix(q2) @ _matrix(q1)).max()
        worst = max(worst, err)
        assert err <= TOL
    _pass(f"quaternion oracle (1000 pairs, worst matrix error {worst:.2e} <= 1e-9)")


def _random_unit(rng):
    q = [rng.gauss(0.0, 1.0) for _ in range(4)]
    n = math.sqrt(sum(v * v for v in q))
    return tuple(v / n for v in q)


# -- 6. file integrity ---------------------------------------------------------------------


def test_file_integrity_shuffle_duplicates_and_failures():
    rng = random.Random(2025)
    data = rng.randbytes(1 << 20)
    manifest, chunks = chunk_file(data, chunk_size=16384, rng=rng)
    assert manifest.chunk_count == 64

    delivery = chunks + chunks[::3]  # duplicates
    rng.shuffle(delivery)
    rebuilt = reassemble(manifest, delivery)
    assert rebuilt == data
    assert digest_of(rebuilt) == manifest.digest

    with pytest.raises(FileError) as missing:
        reassemble(manifest, chunks[:5] + chunks[6:])
    assert missing.value.code == "missing_chunks"
    assert missing.value.missing == [5]

    corrupted = list(chunks)
    corrupted[9] = FileChunk(
        file_id=manifest.file_id, index=9,
        data=bytes([corrupted[9].data[0] ^ 1]) + corrupted[9].data[1:],
    )
    with pytest.raises(FileError) as bad:
        reassemble(manifest, corrupted)
    assert bad.value.code == "digest_mismatch"

    with pytest.raises(FileError) as alien:
        reassemble(manifest, chunks + [FileChunk(file_id="Q" * 16, index=0, data=b"x")])
    assert alien.value.code == "unknown_file_id"
    _pass("file integrity (1 MiB, 64 chunks, shuffle+dup, typed failures)")


# -- 7. policy gating table -------------------------------------------------------------------


def test_policy_gating_exhaustive_with_bit_identical_skips():
    toggled = {"rotation": 0, "state": 1, "command": 2}
    for bits in itertools.product([False, True], repeat=6):
        p = Policy(*bits)
        for kind in sorted(KINDS):
            want_out = bits[toggled[kind]] if kind in toggled else True
            want_in = bits[3 + toggled[kind]] if kind in toggled else True
            assert gate_outbound(kind, p) is want_out
            assert gate_inbound(kind, p) is want_in

    base = ViewerModel()
    updates = {
        "rotation": make_envelope("rotation", Rotation(q=(0.0, 0.0, 0.0, 1.0)), seq=1),
        "state": make_envelope(
            "state", State(q=(0.0, 0.0, 1.0, 0.0), zoom=50.0, center=(1.0, 1.0, 1.0)),
            seq=1,
        ),
        "command": make_envelope("command", Command(script="wireframe"), seq=1),
    }
    off = {
        "rotation": Policy(apply_rotations=False),
        "state": Policy(apply_states=False),
        "command": Policy(apply_commands=False),
    }
    for kind, env in updates.items():
        gated_model, applied = apply_update(base, env, off[kind])
        assert not applied
        assert gated_model is base  # bit-identical: the very same object
        _, applied_on = apply_update(base, env, Policy())
        assert applied_on
    _pass("policy gating table (64 policies x 14 kinds; apply-off bit-identical)")


# -- 8. codec -------------------------------------------------------------------------------------


@given(envelopes())
@settings(max_examples=10_000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
def test_codec_roundtrip_ten_thousand_cases(e):
    assert decode_envelope(encode_envelope(e)) == e


def test_codec_malformed_corpus_yields_typed_errors():
    corpus = [
        b"not structured text",
        b"",
        b"\x80\x81\x82",
        b"[]",
        b"42",
        b'{"v":99,"kind":"chat","from":"' + b"A" * 16 + b'","to":"*","seq":1,"ts":0,"payload":{"text":"x"}}',
        b'{"v":1,"kind":"warp","from":"' + b"A" * 16 + b'","to":"*","seq":1,"ts":0,"payload":{}}',
        b'{"v":1,"kind":"rotation","from":"' + b"A" * 16 + b'","to":"*","seq":1,"ts":0,"payload":{"q":[9,9,9],"hop":0}}',
        b'{"v":1,"kind":"state","from":"' + b"A" * 16 + b'","to":"*","seq":1,"ts":0,"payload":{"q":[1,0,0,0],"zoom":-1,"center":[0,0,0],"hop":0}}',
        b'{"v":1,"kind":"chat","from":"nope","to":"*","seq":1,"ts":0,"payload":{"text":"x"}}',
    ]
    seen_codes = set()
    for data in corpus:
        with pytest.raises(DecodeError) as err:
            decode_envelope(data)
        seen_codes.add(err.value.code)
    assert seen_codes == {
        "malformed", "unknown_kind", "unsupported_version", "field_out_of_range"
    }
    _pass("codec (10^4 roundtrips + malformed corpus, all four error codes)")


# -- 9. determinism ---------------------------------------------------------------------------------


def test_simulation_reports_are_byte_identical_for_equal_seeds():
    script = [
        Action(i * 50, "drag", from_axis_angle((0.3, -0.2, 0.93), 0.02 * (i + 1)))
        for i in range(50)
    ] + [Action(2500, "command", "spin on"), Action(2600, "chat", "done")]
    scenario = Scenario(
        peers=[ScenarioPeer("M", hub=True), ScenarioPeer("S0"), ScenarioPeer("S1")],
        links=[("S0", "M"), ("S1", "M")],
        scripts={"M": script, "S0": [Action(1000, "set_zoom", 140.0)]},
    )
    profile = NetProfile(80.0, 25.0, 0.02, seed=99)
    first = run_scenario(scenario, profile)
    second = run_scenario(scenario, profile)
    assert first.to_json_bytes() == second.to_json_bytes()
    _pass("determinism (two seeded runs, byte-identical reports)")
