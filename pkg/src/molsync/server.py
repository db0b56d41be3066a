"""WebSocket relay server.

One text frame per envelope on the single endpoint ``/ws``; ``/healthz``
answers a plain-text liveness probe. The registry (RelayCore) is a single
serialized authority guarded by one lock; delivery runs on a writer thread
per connection so one slow consumer never blocks the others. Each writer
queue is capped: when it overflows, queued camera snapshots are discarded
oldest-first (the next one supersedes them anyway) and commands, chat and
file frames are never dropped.

The first frame a client sends must be ``hello``; the server answers with
``welcome`` carrying the assigned peer id.
"""
from __future__ import annotations

import argparse
import http
import logging
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field

from websockets.exceptions import ConnectionClosed
from websockets.sync.server import ServerConnection, serve

from .protocol import DecodeError, Envelope, decode_envelope, encode_envelope
from .protocol.messages import KIND_HELLO, SNAPSHOT_KINDS
from .relay import ERR_FROM_MISMATCH, RelayCore

log = logging.getLogger("molsync.relay")

DEFAULT_PORT = 9473
DEFAULT_BIND = "127.0.0.1"
OUTBOUND_QUEUE_CAP = 256
PING_INTERVAL_S = 15.0
PING_TIMEOUT_S = 30.0  # two missed 15 s pings

ENV_PREFIX = "MOLSYNC_"


def now_ms() -> int:
    return int(time.time() * 1000)


# what actually sits in a send queue: (kind, frame text)
Frame = tuple[str, str]


@dataclass
class OutboundQueue:
    """Bounded per-connection send queue with snapshot-first eviction."""

    cap: int = OUTBOUND_QUEUE_CAP
    items: deque = field(default_factory=deque)
    dropped_snapshots: int = 0

    def push(self, frame: Frame) -> bool:
        """Queue a frame; returns False when a snapshot had to be discarded."""
        if len(self.items) >= self.cap:
            if not self._evict_snapshot():
                if frame[0] in SNAPSHOT_KINDS:
                    self.dropped_snapshots += 1
                    return False
                # command/chat/file may exceed the cap rather than be lost
        self.items.append(frame)
        return True

    def _evict_snapshot(self) -> bool:
        for i, queued in enumerate(self.items):
            if queued[0] in SNAPSHOT_KINDS:
                del self.items[i]
                self.dropped_snapshots += 1
                return True
        return False

    def pop_all(self) -> list[Frame]:
        out = list(self.items)
        self.items.clear()
        return out


class _ConnectionWriter:
    """Owns all sends for one connection, in arrival order."""

    def __init__(self, conn: ServerConnection):
        self.conn = conn
        self.queue = OutboundQueue()
        self._ready = threading.Condition()
        self._closed = False
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def send(self, e: Envelope) -> None:
        self.send_frame((e.kind, encode_envelope(e).decode("utf-8")))

    def send_frame(self, frame: Frame) -> None:
        with self._ready:
            if self._closed:
                return
            self.queue.push(frame)
            self._ready.notify()

    def close(self) -> None:
        with self._ready:
            self._closed = True
            self._ready.notify()

    def _run(self) -> None:
        while True:
            # pop under the lock; send outside it so a slow socket never
            # blocks producers
            with self._ready:
                while not self.queue.items and not self._closed:
                    self._ready.wait()
                if self._closed and not self.queue.items:
                    return
                batch = self.queue.pop_all()
            for _, text in batch:
                try:
                    self.conn.send(text)
                except (ConnectionClosed, OSError):
                    with self._ready:
                        self._closed = True
                    return


class RelayServer:
    def __init__(
        self,
        bind: str = DEFAULT_BIND,
        port: int = DEFAULT_PORT,
        max_peers: int = 1024,
        id_seed: int | None = None,
    ):
        self.core = RelayCore(max_peers=max_peers, id_seed=id_seed)
        self._lock = threading.Lock()
        self._writers: dict[str, _ConnectionWriter] = {}
        self._server = serve(
            self._handle,
            bind,
            port,
            process_request=self._process_request,
            ping_interval=PING_INTERVAL_S,
            ping_timeout=PING_TIMEOUT_S,
        )
        self.address = self._server.socket.getsockname()[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"ws://{host}:{port}/ws"

    # -- http ----------------------------------------------------------------

    def _process_request(self, conn: ServerConnection, request):
        if request.path == "/healthz":
            return conn.respond(http.HTTPStatus.OK, "ok\n")
        if request.path != "/ws":
            return conn.respond(http.HTTPStatus.NOT_FOUND, "unknown path\n")
        return None

    # -- websocket -----------------------------------------------------------

    def _deliver(self, deliveries: list[tuple[str, Envelope]], raw: str | None = None,
                 original: Envelope | None = None) -> None:
        """Queue deliveries; a routed original goes out as its exact
        received bytes (the relay never rewrites payloads)."""
        for peer_id, env in deliveries:
            writer = self._writers.get(peer_id)
            if writer is None:
                continue
            if raw is not None and env is original:
                writer.send_frame((env.kind, raw))
            else:
                writer.send(env)

    def _handle(self, conn: ServerConnection) -> None:
        writer = _ConnectionWriter(conn)
        peer_id: str | None = None
        try:
            peer_id = self._handshake(conn, writer)
            if peer_id is None:
                return
            for message in conn:
                self._on_frame(peer_id, message, writer)
        except (ConnectionClosed, OSError):
            pass
        finally:
            if peer_id is not None:
                with self._lock:
                    self._writers.pop(peer_id, None)
                    farewells = self.core.handle_disconnect(peer_id, now_ms())
                    self._deliver(farewells)
                log.info("peer %s left", peer_id)
            writer.close()

    def _handshake(self, conn: ServerConnection, writer: _ConnectionWriter) -> str | None:
        # handshake replies go out synchronously: on failure the handler
        # returns right away and a queued reply would race the close
        raw = conn.recv()
        try:
            hello = decode_envelope(raw)
        except DecodeError as exc:
            conn.send(encode_envelope(self._decode_error_envelope(exc)).decode("utf-8"))
            return None
        if hello.kind != KIND_HELLO:
            err = self._decode_error_envelope(None, "first frame must be hello")
            conn.send(encode_envelope(err).decode("utf-8"))
            return None
        with self._lock:
            peer_id, reply = self.core.handle_hello(hello.payload.policy, now_ms())
            if peer_id is not None:
                self._writers[peer_id] = writer
        conn.send(encode_envelope(reply).decode("utf-8"))
        if peer_id is None:
            return None
        log.info("peer %s joined", peer_id)
        return peer_id

    def _on_frame(self, peer_id: str, message, writer: _ConnectionWriter) -> None:
        try:
            e = decode_envelope(message)
        except DecodeError as exc:
            writer.send(self._decode_error_envelope(exc))
            return
        if e.sender != peer_id:
            with self._lock:
                err = self.core.make_error(
                    peer_id, ERR_FROM_MISMATCH, "from must be your assigned id", now_ms()
                )
            writer.send(err)
            return
        raw = message if isinstance(message, str) else message.decode("utf-8")
        with self._lock:
            deliveries = self.core.handle_frame(e, now_ms())
            self._deliver(deliveries, raw=raw, original=e)

    def _decode_error_envelope(self, exc: DecodeError | None, message: str = "") -> Envelope:
        code = exc.code if exc is not None else "malformed"
        with self._lock:
            return self.core.make_error("*", "decode_error", message or code, now_ms())

    # -- lifecycle -----------------------------------------------------------

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return t

    def shutdown(self) -> None:
        self._server.shutdown()


def _env_default(name: str, fallback):
    raw = os.environ.get(ENV_PREFIX + name)
    if raw is None:
        return fallback
    return type(fallback)(raw) if fallback is not None else raw


def build_arg_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="molsync-relay",
        description="Relay server for shared molecular-view sessions.",
    )
    p.add_argument("--bind", default=_env_default("BIND", DEFAULT_BIND))
    p.add_argument("--port", type=int, default=_env_default("PORT", DEFAULT_PORT))
    p.add_argument("--max-peers", type=int, default=_env_default("MAX_PEERS", 1024))
    p.add_argument(
        "--id-seed", type=int,
        default=os.environ.get(ENV_PREFIX + "ID_SEED"),
        help="seed the id generator (deterministic ids, for tests)",
    )
    p.add_argument("--log-level", default=_env_default("LOG_LEVEL", "info"))
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_arg_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    id_seed = int(args.id_seed) if args.id_seed is not None else None
    server = RelayServer(
        bind=args.bind, port=args.port, max_peers=args.max_peers, id_seed=id_seed
    )
    log.info("listening on %s (health: http://%s:%s/healthz)", server.url, *server.address)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        log.info("shutting down")
        server.shutdown()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
