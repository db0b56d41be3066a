"""Relay broker logic, independent of any transport.

The relay assigns ids, tracks which peers are linked, and forwards frames
along links. It is deliberately dumb: payloads are never modified or
interpreted, fan-out happens only here (receivers that re-share do so as
ordinary senders), and a frame from A reaches exactly A's link partners.
The live WebSocket server and the in-process simulator both drive this one
class, so routing behaves identically in both.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from .protocol import (
    ConnectOk,
    Envelope,
    ErrorInfo,
    PeerJoined,
    PeerLeft,
    Policy,
    SERVER_ID,
    Welcome,
    new_peer_id,
)
from .protocol.ids import BROADCAST
from .protocol.messages import (
    KIND_CONNECT,
    KIND_CONNECT_OK,
    KIND_ERROR,
    KIND_HELLO,
    KIND_PEER_JOINED,
    KIND_PEER_LEFT,
    KIND_WELCOME,
    RELAYED_KINDS,
)

DEFAULT_MAX_PEERS = 1024

DROP_NO_LINKS = "no_links"
DROP_ORIGIN_EXCLUDED = "origin_excluded"
DROP_GATED = "gated"

ERR_SERVER_FULL = "server_full"
ERR_PEER_NOT_FOUND = "peer_not_found"
ERR_SELF_CONNECT = "self_connect"
ERR_NOT_LINKED = "not_linked"
ERR_FROM_MISMATCH = "from_mismatch"
ERR_UNSUPPORTED_KIND = "unsupported_kind"


@dataclass(frozen=True)
class RouteDecision:
    recipients: tuple[str, ...]
    drop_reason: Optional[str] = None


@dataclass
class PeerInfo:
    policy: Policy
    joined_ms: int


@dataclass
class PeerRegistry:
    """Who is connected and who is linked to whom.

    Links are unordered pairs stored once; adjacency preserves insertion
    order so routing fan-out is deterministic.
    """

    peers: dict[str, PeerInfo] = field(default_factory=dict)
    _adjacency: dict[str, dict[str, None]] = field(default_factory=dict)

    def add_peer(self, peer_id: str, policy: Policy, now_ms: int) -> None:
        self.peers[peer_id] = PeerInfo(policy=policy, joined_ms=now_ms)
        self._adjacency[peer_id] = {}

    def remove_peer(self, peer_id: str) -> list[str]:
        """Drop the peer and all its links; returns former link partners."""
        partners = list(self._adjacency.pop(peer_id, {}))
        for other in partners:
            self._adjacency[other].pop(peer_id, None)
        self.peers.pop(peer_id, None)
        return partners

    def add_link(self, a: str, b: str) -> bool:
        """Record the unordered link {a, b}; False if it already existed."""
        if a not in self.peers or b not in self.peers:
            raise KeyError("both endpoints must be registered")
        if b in self._adjacency[a]:
            return False
        self._adjacency[a][b] = None
        self._adjacency[b][a] = None
        return True

    def linked(self, a: str, b: str) -> bool:
        return b in self._adjacency.get(a, {})

    def links_of(self, peer_id: str) -> tuple[str, ...]:
        return tuple(self._adjacency.get(peer_id, {}))

    def link_pairs(self) -> set[tuple[str, str]]:
        return {
            tuple(sorted((a, b)))
            for a, partners in self._adjacency.items()
            for b in partners
        }

    def __contains__(self, peer_id: str) -> bool:
        return peer_id in self.peers

    def __len__(self) -> int:
        return len(self.peers)


class RelayCore:
    """Registry plus the handlers the transport layer calls.

    Handlers return ``(recipient, envelope)`` pairs; the caller owns
    delivery. All methods must be invoked from a single serialized context
    (a lock around the core, or a single-threaded event loop).
    """

    def __init__(
        self,
        max_peers: int = DEFAULT_MAX_PEERS,
        id_seed: int | None = None,
    ):
        self.registry = PeerRegistry()
        self.max_peers = max_peers
        self._rng = random.Random(id_seed)
        self._seq = 0

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _server_envelope(self, kind: str, to: str, payload, now_ms: int) -> Envelope:
        return Envelope(
            kind=kind, sender=SERVER_ID, to=to, seq=self._next_seq(), ts=now_ms,
            payload=payload,
        )

    def make_error(self, to: str, code: str, message: str, now_ms: int) -> Envelope:
        """Server-originated error envelope; ``to`` may be "*" for a
        connection that has no id yet."""
        return self._server_envelope(KIND_ERROR, to, ErrorInfo(code, message), now_ms)

    def _error_to(self, peer: str, code: str, message: str, now_ms: int) -> tuple[str, Envelope]:
        return peer, self.make_error(peer, code, message, now_ms)

    def handle_hello(
        self, policy: Policy, now_ms: int
    ) -> tuple[Optional[str], Envelope]:
        """Allocate an id; returns (peer_id, welcome) or (None, error)."""
        if len(self.registry) >= self.max_peers:
            return None, self._server_envelope(
                KIND_ERROR,
                BROADCAST,
                ErrorInfo(ERR_SERVER_FULL, f"peer cap {self.max_peers} reached"),
                now_ms,
            )
        peer_id = new_peer_id(self._rng)
        while peer_id in self.registry:
            peer_id = new_peer_id(self._rng)
        self.registry.add_peer(peer_id, policy, now_ms)
        welcome = self._server_envelope(KIND_WELCOME, peer_id, Welcome(peer_id), now_ms)
        return peer_id, welcome

    def handle_connect(
        self, requester: str, target: str, now_ms: int
    ) -> list[tuple[str, Envelope]]:
        if requester == target:
            return [self._error_to(requester, ERR_SELF_CONNECT, "cannot link to yourself", now_ms)]
        if target not in self.registry:
            return [self._error_to(requester, ERR_PEER_NOT_FOUND, f"no peer {target}", now_ms)]
        created = self.registry.add_link(requester, target)
        out = [
            (
                requester,
                self._server_envelope(KIND_CONNECT_OK, requester, ConnectOk(target), now_ms),
            )
        ]
        if created:
            out.append(
                (
                    target,
                    self._server_envelope(KIND_PEER_JOINED, target, PeerJoined(requester), now_ms),
                )
            )
        return out

    def handle_disconnect(self, peer_id: str, now_ms: int) -> list[tuple[str, Envelope]]:
        partners = self.registry.remove_peer(peer_id)
        return [
            (
                p,
                self._server_envelope(KIND_PEER_LEFT, p, PeerLeft(peer_id), now_ms),
            )
            for p in partners
        ]

    def route(self, e: Envelope) -> RouteDecision:
        """Pick recipients for a relayed frame; origin is always excluded."""
        links = self.registry.links_of(e.sender)
        if e.to == BROADCAST:
            if not links:
                return RouteDecision((), DROP_NO_LINKS)
            return RouteDecision(links)
        if e.to == e.sender:
            return RouteDecision((), DROP_ORIGIN_EXCLUDED)
        if e.to not in links:
            return RouteDecision((), DROP_NO_LINKS)
        return RouteDecision((e.to,))

    def handle_frame(self, e: Envelope, now_ms: int) -> list[tuple[str, Envelope]]:
        """Dispatch one client frame; returns deliveries (and/or errors)."""
        if e.sender not in self.registry:
            return []
        if e.kind == KIND_CONNECT:
            return self.handle_connect(e.sender, e.payload.target, now_ms)
        if e.kind in RELAYED_KINDS:
            decision = self.route(e)
            if decision.drop_reason is None:
                return [(r, e) for r in decision.recipients]
            if e.to != BROADCAST and decision.drop_reason == DROP_NO_LINKS:
                if e.to not in self.registry:
                    return [self._error_to(e.sender, ERR_PEER_NOT_FOUND, f"no peer {e.to}", now_ms)]
                return [
                    self._error_to(e.sender, ERR_NOT_LINKED, f"not linked to {e.to}", now_ms)
                ]
            return []
        if e.kind == KIND_HELLO:
            return []  # transport handles hello at connection start
        return [
            self._error_to(
                e.sender, ERR_UNSUPPORTED_KIND, f"clients may not send {e.kind}", now_ms
            )
        ]
