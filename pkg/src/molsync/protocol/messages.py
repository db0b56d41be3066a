"""Envelope and payload types.

Every frame on the wire is one Envelope: a version, a kind, sender and
destination ids, a per-sender sequence number, a sender-local timestamp in
milliseconds and a kind-specific payload. Payload classes validate their
fields on construction so an Envelope built in-process is always encodable.

Scripts carried by command envelopes are opaque text: the protocol never
parses or executes them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

from .ids import BROADCAST, is_address, is_peer_id
from .policy import Policy
from .quat import Quat, canonical

PROTOCOL_VERSION = 1

MAX_SEQ = 2**64 - 1
MAX_COMMAND_BYTES = 65536
DEFAULT_CHUNK_SIZE = 16384
DIGEST_HEX_LEN = 64  # 32-byte hash, hex encoded

KIND_HELLO = "hello"
KIND_WELCOME = "welcome"
KIND_CONNECT = "connect"
KIND_CONNECT_OK = "connect_ok"
KIND_PEER_JOINED = "peer_joined"
KIND_PEER_LEFT = "peer_left"
KIND_ROTATION = "rotation"
KIND_STATE = "state"
KIND_COMMAND = "command"
KIND_CHAT = "chat"
KIND_FILE_MANIFEST = "file_manifest"
KIND_FILE_CHUNK = "file_chunk"
KIND_FILE_ACK = "file_ack"
KIND_ERROR = "error"

KINDS = frozenset(
    {
        KIND_HELLO,
        KIND_WELCOME,
        KIND_CONNECT,
        KIND_CONNECT_OK,
        KIND_PEER_JOINED,
        KIND_PEER_LEFT,
        KIND_ROTATION,
        KIND_STATE,
        KIND_COMMAND,
        KIND_CHAT,
        KIND_FILE_MANIFEST,
        KIND_FILE_CHUNK,
        KIND_FILE_ACK,
        KIND_ERROR,
    }
)

# Kinds that mutate the local viewer and take part in per-sender sequencing.
UPDATE_KINDS = frozenset({KIND_ROTATION, KIND_STATE, KIND_COMMAND})
# Kinds a peer originates for other peers (everything the server relays).
RELAYED_KINDS = UPDATE_KINDS | frozenset(
    {KIND_CHAT, KIND_FILE_MANIFEST, KIND_FILE_CHUNK, KIND_FILE_ACK}
)
# Snapshot kinds: losing one is harmless because the next one supersedes it.
SNAPSHOT_KINDS = frozenset({KIND_ROTATION, KIND_STATE})


def _check_vec3(v: tuple) -> tuple[float, float, float]:
    if len(v) != 3:
        raise ValueError(f"expected 3-vector, got {v!r}")
    out = tuple(float(c) for c in v)
    if not all(math.isfinite(c) for c in out):
        raise ValueError(f"non-finite vector {v!r}")
    return out  # type: ignore[return-value]


def _check_zoom(zoom: float) -> float:
    zoom = float(zoom)
    if not math.isfinite(zoom) or zoom <= 0.0:
        raise ValueError(f"zoom must be finite and > 0, got {zoom!r}")
    return zoom


def _check_hop(hop: int) -> int:
    if hop not in (0, 1):
        raise ValueError(f"hop must be 0 (original) or 1 (re-shared), got {hop!r}")
    return hop


@dataclass(frozen=True)
class Hello:
    policy: Policy = field(default_factory=Policy)


@dataclass(frozen=True)
class Welcome:
    peer_id: str

    def __post_init__(self):
        if not is_peer_id(self.peer_id):
            raise ValueError(f"bad peer id {self.peer_id!r}")


@dataclass(frozen=True)
class Connect:
    target: str

    def __post_init__(self):
        if not is_peer_id(self.target):
            raise ValueError(f"bad peer id {self.target!r}")


@dataclass(frozen=True)
class ConnectOk:
    peer: str

    def __post_init__(self):
        if not is_peer_id(self.peer):
            raise ValueError(f"bad peer id {self.peer!r}")


@dataclass(frozen=True)
class PeerJoined:
    peer: str

    def __post_init__(self):
        if not is_peer_id(self.peer):
            raise ValueError(f"bad peer id {self.peer!r}")


@dataclass(frozen=True)
class PeerLeft:
    peer: str

    def __post_init__(self):
        if not is_peer_id(self.peer):
            raise ValueError(f"bad peer id {self.peer!r}")


@dataclass(frozen=True)
class Rotation:
    """Orientation-only snapshot; the high-frequency frame during drags."""

    q: Quat
    hop: int = 0

    def __post_init__(self):
        object.__setattr__(self, "q", canonical(*self.q))
        object.__setattr__(self, "hop", _check_hop(self.hop))


@dataclass(frozen=True)
class State:
    """Full camera snapshot: orientation, zoom percent, center point."""

    q: Quat
    zoom: float
    center: tuple[float, float, float]
    hop: int = 0

    def __post_init__(self):
        object.__setattr__(self, "q", canonical(*self.q))
        object.__setattr__(self, "zoom", _check_zoom(self.zoom))
        object.__setattr__(self, "center", _check_vec3(self.center))
        object.__setattr__(self, "hop", _check_hop(self.hop))


@dataclass(frozen=True)
class Command:
    """Opaque viewer-script text, replayed verbatim on each peer."""

    script: str
    hop: int = 0

    def __post_init__(self):
        if not isinstance(self.script, str):
            raise ValueError("command script must be text")
        if len(self.script.encode("utf-8")) > MAX_COMMAND_BYTES:
            raise ValueError(f"command script exceeds {MAX_COMMAND_BYTES} bytes")
        object.__setattr__(self, "hop", _check_hop(self.hop))


@dataclass(frozen=True)
class Chat:
    text: str

    def __post_init__(self):
        if not isinstance(self.text, str):
            raise ValueError("chat text must be text")


@dataclass(frozen=True)
class FileManifest:
    file_id: str
    name: str
    total_bytes: int
    chunk_size: int
    chunk_count: int
    digest: str  # sha256 of the full content, hex

    def __post_init__(self):
        if not is_peer_id(self.file_id):
            raise ValueError(f"bad file id {self.file_id!r}")
        if not isinstance(self.name, str):
            raise ValueError("file name must be text")
        if self.total_bytes < 0:
            raise ValueError("total_bytes must be >= 0")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        expected = -(-self.total_bytes // self.chunk_size)
        if self.chunk_count != expected:
            raise ValueError(
                f"chunk_count {self.chunk_count} != ceil({self.total_bytes}/{self.chunk_size})"
            )
        if len(self.digest) != DIGEST_HEX_LEN or any(
            c not in "0123456789abcdef" for c in self.digest
        ):
            raise ValueError("digest must be 64 lowercase hex chars")


@dataclass(frozen=True)
class FileChunk:
    file_id: str
    index: int
    data: bytes

    def __post_init__(self):
        if not is_peer_id(self.file_id):
            raise ValueError(f"bad file id {self.file_id!r}")
        if self.index < 0:
            raise ValueError("chunk index must be >= 0")
        if not isinstance(self.data, bytes):
            raise ValueError("chunk data must be bytes")


@dataclass(frozen=True)
class FileAck:
    file_id: str
    ok: bool
    error: str = ""

    def __post_init__(self):
        if not is_peer_id(self.file_id):
            raise ValueError(f"bad file id {self.file_id!r}")


@dataclass(frozen=True)
class ErrorInfo:
    code: str
    message: str = ""


Payload = Union[
    Hello,
    Welcome,
    Connect,
    ConnectOk,
    PeerJoined,
    PeerLeft,
    Rotation,
    State,
    Command,
    Chat,
    FileManifest,
    FileChunk,
    FileAck,
    ErrorInfo,
]

PAYLOAD_TYPES: dict[str, type] = {
    KIND_HELLO: Hello,
    KIND_WELCOME: Welcome,
    KIND_CONNECT: Connect,
    KIND_CONNECT_OK: ConnectOk,
    KIND_PEER_JOINED: PeerJoined,
    KIND_PEER_LEFT: PeerLeft,
    KIND_ROTATION: Rotation,
    KIND_STATE: State,
    KIND_COMMAND: Command,
    KIND_CHAT: Chat,
    KIND_FILE_MANIFEST: FileManifest,
    KIND_FILE_CHUNK: FileChunk,
    KIND_FILE_ACK: FileAck,
    KIND_ERROR: ErrorInfo,
}

KIND_OF_PAYLOAD: dict[type, str] = {v: k for k, v in PAYLOAD_TYPES.items()}


@dataclass(frozen=True)
class Envelope:
    kind: str
    sender: str  # wire key "from"
    to: str  # peer id or "*"
    seq: int
    ts: int  # sender wall-clock, ms since epoch; diagnostics only
    payload: Payload
    version: int = PROTOCOL_VERSION

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if not is_peer_id(self.sender):
            raise ValueError(f"bad sender {self.sender!r}")
        if not is_address(self.to):
            raise ValueError(f"bad destination {self.to!r}")
        if not 0 <= self.seq <= MAX_SEQ:
            raise ValueError(f"seq out of range: {self.seq!r}")
        if not isinstance(self.ts, int) or abs(self.ts) >= 2**63:
            raise ValueError(f"bad timestamp {self.ts!r}")
        if type(self.payload) is not PAYLOAD_TYPES[self.kind]:
            raise ValueError(
                f"payload {type(self.payload).__name__} does not match kind {self.kind!r}"
            )


@dataclass(frozen=True)
class ViewState:
    """Absolute camera snapshot attributed to its origin, for coalescing."""

    orientation: Quat
    zoom: float
    center: tuple[float, float, float]
    seq: int
    origin: str

    def __post_init__(self):
        object.__setattr__(self, "orientation", canonical(*self.orientation))
        object.__setattr__(self, "zoom", _check_zoom(self.zoom))
        object.__setattr__(self, "center", _check_vec3(self.center))
        if not 0 <= self.seq <= MAX_SEQ:
            raise ValueError(f"seq out of range: {self.seq!r}")
        if not is_peer_id(self.origin):
            raise ValueError(f"bad origin {self.origin!r}")

    @classmethod
    def from_envelope(cls, e: Envelope) -> "ViewState":
        if e.kind != KIND_STATE:
            raise ValueError(f"not a state envelope: {e.kind}")
        p = e.payload
        return cls(p.q, p.zoom, p.center, e.seq, e.sender)
