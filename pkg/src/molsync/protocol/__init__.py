"""Pure protocol logic shared by the relay server, peers and the simulator."""

from .ids import ALPHABET, BROADCAST, ID_LENGTH, SERVER_ID, is_address, is_peer_id, new_peer_id
from .quat import IDENTITY, UNIT_TOL, canonical, compose_rotation, conjugate, from_axis_angle
from .policy import Policy, gate_inbound, gate_outbound, parse_policy
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
    PeerJoined,
    PeerLeft,
    Rotation,
    State,
    ViewState,
    Welcome,
)
from .codec import DecodeError, decode_envelope, encode_envelope, encoded_size
from .viewer import ViewerModel, apply_update, cameras_equal
from .coalesce import Coalescer, coalesce
from .filexfer import FileError, Reassembly, chunk_file, digest_of, reassemble

__all__ = [
    "ALPHABET",
    "BROADCAST",
    "ID_LENGTH",
    "SERVER_ID",
    "IDENTITY",
    "UNIT_TOL",
    "Chat",
    "Coalescer",
    "Command",
    "Connect",
    "ConnectOk",
    "DecodeError",
    "Envelope",
    "ErrorInfo",
    "FileAck",
    "FileChunk",
    "FileError",
    "FileManifest",
    "Hello",
    "PeerJoined",
    "PeerLeft",
    "Policy",
    "Reassembly",
    "Rotation",
    "State",
    "ViewState",
    "ViewerModel",
    "Welcome",
    "apply_update",
    "cameras_equal",
    "canonical",
    "chunk_file",
    "coalesce",
    "compose_rotation",
    "conjugate",
    "decode_envelope",
    "digest_of",
    "encode_envelope",
    "encoded_size",
    "from_axis_angle",
    "gate_inbound",
    "gate_outbound",
    "is_address",
    "is_peer_id",
    "new_peer_id",
    "parse_policy",
    "reassemble",
]
