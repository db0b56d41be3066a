"""Envelope codec.

Wire format: one UTF-8 JSON object per frame with keys, in this order:
``v``, ``kind``, ``from``, ``to``, ``seq``, ``ts``, ``payload``. Field order
is fixed so equal envelopes encode to identical bytes. ``to`` is a peer id
or ``"*"`` for broadcast. Binary chunk data travels base64-encoded inside
``file_chunk`` payloads; every frame is text.

Decoding accepts arbitrary bytes and raises DecodeError with a code that
distinguishes garbage (``malformed``), an unknown ``kind``
(``unknown_kind``), a version we do not speak (``unsupported_version``) and
structurally valid JSON whose fields violate the protocol
(``field_out_of_range``).
"""
from __future__ import annotations

import base64
import binascii
import json
import math
from typing import Any

from .ids import is_address, is_peer_id
from .messages import (
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
    KIND_CHAT,
    KIND_COMMAND,
    KIND_CONNECT,
    KIND_CONNECT_OK,
    KIND_ERROR,
    KIND_FILE_ACK,
    KIND_FILE_CHUNK,
    KIND_FILE_MANIFEST,
    KIND_HELLO,
    KIND_PEER_JOINED,
    KIND_PEER_LEFT,
    KIND_ROTATION,
    KIND_STATE,
    KIND_WELCOME,
    KINDS,
    MAX_SEQ,
    PROTOCOL_VERSION,
    PeerJoined,
    PeerLeft,
    Rotation,
    State,
    Welcome,
)
from .policy import Policy

MALFORMED = "malformed"
UNKNOWN_KIND = "unknown_kind"
UNSUPPORTED_VERSION = "unsupported_version"
FIELD_OUT_OF_RANGE = "field_out_of_range"


class DecodeError(ValueError):
    """Raised when bytes cannot be decoded into a valid Envelope."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def _payload_to_wire(e: Envelope) -> dict[str, Any]:
    p = e.payload
    kind = e.kind
    if kind == KIND_ROTATION:
        return {"q": list(p.q), "hop": p.hop}
    if kind == KIND_STATE:
        return {"q": list(p.q), "zoom": p.zoom, "center": list(p.center), "hop": p.hop}
    if kind == KIND_COMMAND:
        return {"script": p.script, "hop": p.hop}
    if kind == KIND_CHAT:
        return {"text": p.text}
    if kind == KIND_FILE_MANIFEST:
        return {
            "file_id": p.file_id,
            "name": p.name,
            "total_bytes": p.total_bytes,
            "chunk_size": p.chunk_size,
            "chunk_count": p.chunk_count,
            "digest": p.digest,
        }
    if kind == KIND_FILE_CHUNK:
        return {
            "file_id": p.file_id,
            "index": p.index,
            "data": base64.b64encode(p.data).decode("ascii"),
        }
    if kind == KIND_FILE_ACK:
        return {"file_id": p.file_id, "ok": p.ok, "error": p.error}
    if kind == KIND_ERROR:
        return {"code": p.code, "message": p.message}
    if kind == KIND_HELLO:
        return {"policy": p.policy.to_wire()}
    if kind == KIND_WELCOME:
        return {"peer_id": p.peer_id}
    if kind == KIND_CONNECT:
        return {"target": p.target}
    if kind == KIND_CONNECT_OK:
        return {"peer": p.peer}
    if kind == KIND_PEER_JOINED:
        return {"peer": p.peer}
    if kind == KIND_PEER_LEFT:
        return {"peer": p.peer}
    raise AssertionError(f"unhandled kind {kind}")


def encode_envelope(e: Envelope) -> bytes:
    """Encode a valid envelope to its exact wire bytes."""
    obj = {
        "v": e.version,
        "kind": e.kind,
        "from": e.sender,
        "to": e.to,
        "seq": e.seq,
        "ts": e.ts,
        "payload": _payload_to_wire(e),
    }
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def _want(obj: dict, key: str, types) -> Any:
    if key not in obj:
        raise DecodeError(FIELD_OUT_OF_RANGE, f"missing field {key!r}")
    v = obj[key]
    # bool is an int subtype in Python but not in the wire format
    if not isinstance(v, types) or (isinstance(v, bool) and types is not bool):
        raise DecodeError(FIELD_OUT_OF_RANGE, f"bad type for {key!r}")
    return v


def _want_int(obj: dict, key: str, lo: int, hi: int) -> int:
    v = _want(obj, key, int)
    if not lo <= v <= hi:
        raise DecodeError(FIELD_OUT_OF_RANGE, f"{key}={v!r} out of range")
    return v


def _want_float(obj: dict, key: str) -> float:
    v = _want(obj, key, (int, float))
    v = float(v)
    if not math.isfinite(v):
        raise DecodeError(FIELD_OUT_OF_RANGE, f"{key} is not finite")
    return v


def _want_floats(obj: dict, key: str, n: int) -> tuple[float, ...]:
    v = _want(obj, key, list)
    if len(v) != n or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v):
        raise DecodeError(FIELD_OUT_OF_RANGE, f"{key} must be a list of {n} numbers")
    out = tuple(float(c) for c in v)
    if not all(math.isfinite(c) for c in out):
        raise DecodeError(FIELD_OUT_OF_RANGE, f"{key} has non-finite entries")
    return out


def _want_str(obj: dict, key: str) -> str:
    return _want(obj, key, str)


def _want_peer_id(obj: dict, key: str) -> str:
    v = _want_str(obj, key)
    if not is_peer_id(v):
        raise DecodeError(FIELD_OUT_OF_RANGE, f"{key}={v!r} is not a peer id")
    return v


def _want_hop(obj: dict) -> int:
    return _want_int(obj, "hop", 0, 1)


def _payload_from_wire(kind: str, obj: Any):
    if not isinstance(obj, dict):
        raise DecodeError(FIELD_OUT_OF_RANGE, "payload must be an object")
    try:
        if kind == KIND_ROTATION:
            return Rotation(q=_want_floats(obj, "q", 4), hop=_want_hop(obj))
        if kind == KIND_STATE:
            return State(
                q=_want_floats(obj, "q", 4),
                zoom=_want_float(obj, "zoom"),
                center=_want_floats(obj, "center", 3),
                hop=_want_hop(obj),
            )
        if kind == KIND_COMMAND:
            return Command(script=_want_str(obj, "script"), hop=_want_hop(obj))
        if kind == KIND_CHAT:
            return Chat(text=_want_str(obj, "text"))
        if kind == KIND_FILE_MANIFEST:
            return FileManifest(
                file_id=_want_peer_id(obj, "file_id"),
                name=_want_str(obj, "name"),
                total_bytes=_want_int(obj, "total_bytes", 0, 2**63),
                chunk_size=_want_int(obj, "chunk_size", 1, 2**63),
                chunk_count=_want_int(obj, "chunk_count", 0, 2**63),
                digest=_want_str(obj, "digest"),
            )
        if kind == KIND_FILE_CHUNK:
            raw = _want_str(obj, "data")
            try:
                data = base64.b64decode(raw.encode("ascii"), validate=True)
            except (binascii.Error, UnicodeEncodeError) as exc:
                raise DecodeError(FIELD_OUT_OF_RANGE, f"bad chunk data: {exc}") from None
            return FileChunk(
                file_id=_want_peer_id(obj, "file_id"),
                index=_want_int(obj, "index", 0, 2**63),
                data=data,
            )
        if kind == KIND_FILE_ACK:
            return FileAck(
                file_id=_want_peer_id(obj, "file_id"),
                ok=_want(obj, "ok", bool),
                error=_want_str(obj, "error"),
            )
        if kind == KIND_ERROR:
            return ErrorInfo(code=_want_str(obj, "code"), message=_want_str(obj, "message"))
        if kind == KIND_HELLO:
            policy = obj.get("policy", {})
            if not isinstance(policy, dict):
                raise DecodeError(FIELD_OUT_OF_RANGE, "hello policy must be an object")
            return Hello(policy=Policy.from_wire(policy))
        if kind == KIND_WELCOME:
            return Welcome(peer_id=_want_peer_id(obj, "peer_id"))
        if kind == KIND_CONNECT:
            return Connect(target=_want_peer_id(obj, "target"))
        if kind == KIND_CONNECT_OK:
            return ConnectOk(peer=_want_peer_id(obj, "peer"))
        if kind == KIND_PEER_JOINED:
            return PeerJoined(peer=_want_peer_id(obj, "peer"))
        if kind == KIND_PEER_LEFT:
            return PeerLeft(peer=_want_peer_id(obj, "peer"))
    except ValueError as exc:
        if isinstance(exc, DecodeError):
            raise
        # Payload constructors validate domain rules (unit norm, zoom > 0,
        # script size, chunk arithmetic); surface those as range errors.
        raise DecodeError(FIELD_OUT_OF_RANGE, str(exc)) from None
    raise AssertionError(f"unhandled kind {kind}")


def decode_envelope(data: bytes | str) -> Envelope:
    """Decode wire bytes; raises DecodeError, never anything else."""
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(MALFORMED, f"not UTF-8: {exc}") from None
    else:
        text = data
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(MALFORMED, f"not JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise DecodeError(MALFORMED, "top level must be an object")

    version = obj.get("v")
    if not isinstance(version, int) or isinstance(version, bool):
        raise DecodeError(MALFORMED, "missing or non-integer version")
    if version != PROTOCOL_VERSION:
        raise DecodeError(UNSUPPORTED_VERSION, f"version {version} not supported")

    kind = obj.get("kind")
    if not isinstance(kind, str):
        raise DecodeError(MALFORMED, "missing kind")
    if kind not in KINDS:
        raise DecodeError(UNKNOWN_KIND, f"unknown kind {kind!r}")

    sender = _want_str(obj, "from")
    if not is_peer_id(sender):
        raise DecodeError(FIELD_OUT_OF_RANGE, f"from={sender!r} is not a peer id")
    to = _want_str(obj, "to")
    if not is_address(to):
        raise DecodeError(FIELD_OUT_OF_RANGE, f"to={to!r} is not a peer id or '*'")
    seq = _want_int(obj, "seq", 0, MAX_SEQ)
    ts = _want_int(obj, "ts", -(2**63) + 1, 2**63 - 1)
    if "payload" not in obj:
        raise DecodeError(FIELD_OUT_OF_RANGE, "missing payload")
    payload = _payload_from_wire(kind, obj["payload"])
    return Envelope(kind=kind, sender=sender, to=to, seq=seq, ts=ts, payload=payload)


def encoded_size(e: Envelope) -> int:
    return len(encode_envelope(e))
