"""Headless peer session, independent of any transport.

A SessionCore owns one viewer model and decides which envelopes to emit in
response to local actions and received frames. It performs no I/O: every
method returns the envelopes to put on the wire, and the caller (live
WebSocket client or simulator) delivers them. One session is one logical
actor; callers must serialize access.

Local actions always update the local viewer first; whether anything is
transmitted is a separate decision made by the send gates and the
coalescer. A session in hub mode re-shares originals it applied to its
other links, marked hop=1 so a re-share is never re-shared.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from .protocol import (
    Chat,
    Coalescer,
    Command,
    Connect,
    Envelope,
    FileAck,
    Hello,
    Policy,
    Reassembly,
    ViewerModel,
    apply_update,
    chunk_file,
    gate_outbound,
)
from .protocol.filexfer import FileError
from .protocol.ids import BROADCAST
from .protocol.messages import (
    KIND_CHAT,
    KIND_COMMAND,
    KIND_CONNECT,
    KIND_CONNECT_OK,
    KIND_ERROR,
    KIND_FILE_ACK,
    KIND_FILE_CHUNK,
    KIND_FILE_MANIFEST,
    KIND_PEER_JOINED,
    KIND_PEER_LEFT,
    KIND_ROTATION,
    KIND_STATE,
    KIND_WELCOME,
    Rotation,
    State,
    UPDATE_KINDS,
)
from .protocol.quat import Quat


@dataclass
class SessionStats:
    """Monotone per-kind traffic counters."""

    sent: dict[str, int] = field(default_factory=dict)
    received: dict[str, int] = field(default_factory=dict)
    sent_bytes: int = 0
    received_bytes: int = 0
    decode_errors: int = 0

    def count_sent(self, kind: str, nbytes: int = 0) -> None:
        self.sent[kind] = self.sent.get(kind, 0) + 1
        self.sent_bytes += nbytes

    def count_received(self, kind: str, nbytes: int = 0) -> None:
        self.received[kind] = self.received.get(kind, 0) + 1
        self.received_bytes += nbytes


@dataclass(frozen=True)
class SessionEvent:
    """Something observable that happened inside the session."""

    at_ms: int
    kind: str  # applied | chat | file_received | file_failed | peer_event | error
    detail: dict


# Camera frames share one throttle lane; a pending full state outranks a
# pending rotation because it carries strictly more.
_PENDING_ROTATION = "rotation"
_PENDING_STATE = "state"


class SessionCore:
    def __init__(
        self,
        policy: Policy | None = None,
        hub: bool = False,
        max_rate_hz: float = 20.0,
        rng: random.Random | None = None,
    ):
        self.id: str | None = None
        self.policy = policy if policy is not None else Policy()
        self.model = ViewerModel()
        self.links: list[str] = []
        self.hub = hub
        self.stats = SessionStats()
        self.events: list[SessionEvent] = []
        self.chat_log: list[tuple[str, str]] = []
        self.received_files: dict[str, tuple[str, bytes]] = {}
        self._rng = rng if rng is not None else random.Random()
        self._seq = 0
        self._coalescer = Coalescer(max_rate=max_rate_hz)
        self._pending_kind: str | None = None
        self._reassemblies: dict[str, tuple[str, Reassembly]] = {}  # file_id -> (sender, asm)

    # -- emission helpers --------------------------------------------------

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _emit(self, kind: str, payload, now_ms: int, to: str = BROADCAST) -> Envelope:
        assert self.id is not None, "session has no id yet"
        e = Envelope(
            kind=kind, sender=self.id, to=to, seq=self._next_seq(), ts=now_ms,
            payload=payload,
        )
        self.stats.count_sent(kind)
        return e

    def _event(self, now_ms: int, kind: str, **detail) -> None:
        self.events.append(SessionEvent(at_ms=now_ms, kind=kind, detail=detail))

    # -- handshake and local actions ----------------------------------------

    def hello_payload(self) -> Hello:
        return Hello(policy=self.policy)

    def adopt_id(self, peer_id: str) -> None:
        self.id = peer_id

    def connect_to(self, target: str, now_ms: int) -> list[Envelope]:
        return [self._emit(KIND_CONNECT, Connect(target=target), now_ms, to=target)]

    def set_policy(self, policy: Policy) -> None:
        self.policy = policy

    def local_drag(self, orientation: Quat, now_ms: int) -> list[Envelope]:
        """Apply a drag locally; emit a throttled rotation if sending is on."""
        self.model = self.model.with_camera(orientation=orientation)
        return self._offer_camera(_PENDING_ROTATION, now_ms)

    def local_zoom(self, zoom: float, now_ms: int) -> list[Envelope]:
        self.model = self.model.with_camera(zoom=zoom)
        return self._offer_camera(_PENDING_STATE, now_ms)

    def local_center(self, center: tuple[float, float, float], now_ms: int) -> list[Envelope]:
        self.model = self.model.with_camera(center=center)
        return self._offer_camera(_PENDING_STATE, now_ms)

    def _offer_camera(self, wanted: str, now_ms: int) -> list[Envelope]:
        if self._pending_kind == _PENDING_STATE:
            wanted = _PENDING_STATE
        if not gate_outbound(wanted, self.policy):
            return []
        self._pending_kind = wanted
        self._coalescer, token = self._coalescer.offer(wanted, now_ms)
        if token is None:
            return []
        return self._emit_camera(wanted, now_ms)

    def _emit_camera(self, kind: str, now_ms: int) -> list[Envelope]:
        self._pending_kind = None
        if not gate_outbound(kind, self.policy):
            return []
        if kind == _PENDING_ROTATION:
            payload = Rotation(q=self.model.orientation)
            return [self._emit(KIND_ROTATION, payload, now_ms)]
        payload = State(
            q=self.model.orientation, zoom=self.model.zoom, center=self.model.center
        )
        return [self._emit(KIND_STATE, payload, now_ms)]

    def poll(self, now_ms: int) -> list[Envelope]:
        """Flush a held camera snapshot once the throttle interval expires."""
        if self._pending_kind is None:
            return []
        self._coalescer, token = self._coalescer.poll(now_ms)
        if token is None:
            return []
        return self._emit_camera(self._pending_kind, now_ms)

    def next_deadline_ms(self) -> int | None:
        if self._pending_kind is None:
            return None
        return self._coalescer.next_deadline_ms()

    def send_command(self, script: str, now_ms: int) -> list[Envelope]:
        """Run a viewer script locally and share it when sending is on."""
        payload = Command(script=script)  # size-checked before any emission
        self.model = replace(
            self.model, command_log=self.model.command_log + (script,)
        )
        if not gate_outbound(KIND_COMMAND, self.policy):
            return []
        return [self._emit(KIND_COMMAND, payload, now_ms)]

    def send_chat(self, text: str, now_ms: int) -> list[Envelope]:
        self.chat_log.append((self.id or "", text))
        return [self._emit(KIND_CHAT, Chat(text=text), now_ms)]

    def send_file(self, name: str, data: bytes, now_ms: int) -> list[Envelope]:
        """Explicitly share a file: one manifest, then every chunk in order."""
        manifest, chunks = chunk_file(data, name=name, rng=self._rng)
        out = [self._emit(KIND_FILE_MANIFEST, manifest, now_ms)]
        out.extend(self._emit(KIND_FILE_CHUNK, c, now_ms) for c in chunks)
        return out

    # -- receive path --------------------------------------------------------

    def on_envelope(self, e: Envelope, now_ms: int) -> list[Envelope]:
        """Handle one frame addressed to this peer; returns re-shares/acks."""
        self.stats.count_received(e.kind)
        if e.kind == KIND_WELCOME:
            self.adopt_id(e.payload.peer_id)
            return []
        if e.kind == KIND_CONNECT_OK:
            self._add_link(e.payload.peer)
            self._event(now_ms, "peer_event", event="linked", peer=e.payload.peer)
            return []
        if e.kind == KIND_PEER_JOINED:
            self._add_link(e.payload.peer)
            self._event(now_ms, "peer_event", event="joined", peer=e.payload.peer)
            return []
        if e.kind == KIND_PEER_LEFT:
            if e.payload.peer in self.links:
                self.links.remove(e.payload.peer)
            self._event(now_ms, "peer_event", event="left", peer=e.payload.peer)
            return []
        if e.kind in UPDATE_KINDS:
            return self._on_update(e, now_ms)
        if e.kind == KIND_CHAT:
            self.chat_log.append((e.sender, e.payload.text))
            self._event(now_ms, "chat", sender=e.sender, text=e.payload.text)
            return []
        if e.kind == KIND_FILE_MANIFEST:
            self._reassemblies[e.payload.file_id] = (e.sender, Reassembly(e.payload))
            return []
        if e.kind == KIND_FILE_CHUNK:
            return self._on_chunk(e, now_ms)
        if e.kind == KIND_FILE_ACK:
            self._event(
                now_ms, "file_ack", file_id=e.payload.file_id, ok=e.payload.ok,
                error=e.payload.error,
            )
            return []
        if e.kind == KIND_ERROR:
            self._event(now_ms, "error", code=e.payload.code, message=e.payload.message)
            return []
        # hello/welcome-class frames are never addressed to a peer
        self._event(now_ms, "error", code="unexpected_kind", message=e.kind)
        return []

    def _add_link(self, peer: str) -> None:
        if peer not in self.links:
            self.links.append(peer)

    def _on_update(self, e: Envelope, now_ms: int) -> list[Envelope]:
        self.model, applied = apply_update(self.model, e, self.policy)
        if applied:
            self._event(now_ms, "applied", frame=e.kind, sender=e.sender, seq=e.seq,
                        sent_ts=e.ts)
        if not (self.hub and applied and e.payload.hop == 0):
            return []
        out = []
        for link in self.links:
            if link == e.sender:
                continue
            reshared = replace(e.payload, hop=1)
            out.append(self._emit(e.kind, reshared, now_ms, to=link))
        return out

    def _on_chunk(self, e: Envelope, now_ms: int) -> list[Envelope]:
        file_id = e.payload.file_id
        entry = self._reassemblies.get(file_id)
        if entry is None:
            self._event(now_ms, "file_failed", file_id=file_id, error="unknown_file_id")
            return []
        sender, asm = entry
        try:
            asm.add(e.payload)
        except FileError as err:
            self._event(now_ms, "file_failed", file_id=file_id, error=err.code)
            del self._reassemblies[file_id]
            return [self._emit(KIND_FILE_ACK, FileAck(file_id, False, err.code), now_ms,
                               to=sender)]
        if not asm.complete:
            return []
        try:
            data = asm.finish()
        except FileError as err:
            self._event(now_ms, "file_failed", file_id=file_id, error=err.code)
            del self._reassemblies[file_id]
            return [self._emit(KIND_FILE_ACK, FileAck(file_id, False, err.code), now_ms,
                               to=sender)]
        # headless peers auto-accept; an interactive UI confirms first
        self.received_files[file_id] = (asm.manifest.name, data)
        self._event(now_ms, "file_received", file_id=file_id, name=asm.manifest.name,
                    size=len(data))
        del self._reassemblies[file_id]
        return [self._emit(KIND_FILE_ACK, FileAck(file_id, True), now_ms, to=sender)]
