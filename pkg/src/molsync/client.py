"""Live headless peer.

Wraps a SessionCore around a WebSocket connection and a small actor loop:
a reader thread pushes decoded frames into the inbox, the actor thread
interleaves them with local actions and coalescer deadlines, and every
frame that crosses the wire lands in the transcript. The transcript is the
ground truth scripted tests assert against.

Used as a library (PeerClient) or from the command line::

    molsync-peer --server ws://127.0.0.1:9473/ws --master <ID> --script demo.act
"""
from __future__ import annotations

import argparse
import json
import queue
import random
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from websockets.exceptions import ConnectionClosed
from websockets.sync.client import connect as ws_connect

from .protocol import DecodeError, Envelope, Policy, SERVER_ID, decode_envelope, encode_envelope
from .protocol.messages import KIND_ERROR, KIND_HELLO, KIND_WELCOME
from .script import Action, load_script
from .session import SessionCore


class PeerError(RuntimeError):
    pass


class PeerNotFound(PeerError):
    pass


@dataclass
class TranscriptEntry:
    at_ms: int
    direction: str  # "sent" | "received" | "event"
    kind: str
    detail: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"at_ms": self.at_ms, "dir": self.direction, "kind": self.kind,
             **self.detail},
            ensure_ascii=False,
            sort_keys=True,
        )


def _describe(e: Envelope) -> dict:
    detail: dict = {"from": e.sender, "to": e.to, "seq": e.seq, "ts": e.ts}
    if e.kind == "chat":
        detail["text"] = e.payload.text
    elif e.kind == "command":
        detail["script"] = e.payload.script
    elif e.kind == "error":
        detail["code"] = e.payload.code
    elif e.kind in ("file_manifest", "file_chunk"):
        detail["file_id"] = e.payload.file_id
    return detail


class PeerClient:
    """One live peer: connect, act, observe. Thread-safe entry points."""

    def __init__(
        self,
        server_url: str,
        policy: Policy | None = None,
        hub: bool = False,
        staging_dir: str | Path | None = None,
        on_transcript: Callable[[TranscriptEntry], None] | None = None,
    ):
        self.session = SessionCore(policy=policy, hub=hub, rng=random.Random())
        self.transcript: list[TranscriptEntry] = []
        self.staging_dir = Path(staging_dir) if staging_dir else None
        self._on_transcript = on_transcript
        self._t0 = time.monotonic()
        self._inbox: queue.Queue = queue.Queue()
        self._lock = threading.RLock()
        self._welcomed = threading.Event()
        self._connect_results: queue.Queue = queue.Queue()
        self._closed = threading.Event()
        self._ws = ws_connect(server_url)
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._actor = threading.Thread(target=self._actor_loop, daemon=True)
        self._reader.start()
        self._actor.start()
        # a client has no id before welcome; hello carries the reserved id
        self._send_now(
            Envelope(
                kind=KIND_HELLO, sender=SERVER_ID, to="*", seq=1, ts=self.now_ms(),
                payload=self.session.hello_payload(),
            )
        )
        if not self._welcomed.wait(timeout=10):
            raise PeerError("no welcome from server")

    # -- time and transcript --------------------------------------------------

    def now_ms(self) -> int:
        return int((time.monotonic() - self._t0) * 1000)

    def _record(self, direction: str, kind: str, detail: dict) -> None:
        entry = TranscriptEntry(self.now_ms(), direction, kind, detail)
        with self._lock:
            self.transcript.append(entry)
        if self._on_transcript:
            self._on_transcript(entry)

    # -- wire ------------------------------------------------------------------

    def _send_now(self, e: Envelope) -> None:
        data = encode_envelope(e)
        self.session.stats.sent_bytes += len(data)
        self._ws.send(data.decode("utf-8"))
        self._record("sent", e.kind, _describe(e))

    def _send_all(self, envelopes: list[Envelope]) -> None:
        for e in envelopes:
            self._send_now(e)

    def _read_loop(self) -> None:
        try:
            for message in self._ws:
                self._inbox.put(message)
        except (ConnectionClosed, OSError):
            pass
        finally:
            self._closed.set()
            self._inbox.put(None)  # wake the actor

    def _actor_loop(self) -> None:
        while not self._closed.is_set():
            deadline = self.session.next_deadline_ms()
            timeout = None
            if deadline is not None:
                timeout = max(0.0, (deadline - self.now_ms()) / 1000.0)
            try:
                message = self._inbox.get(timeout=timeout)
            except queue.Empty:
                message = None
            with self._lock:
                if message is not None:
                    self._on_message(message)
                self._send_all(self.session.poll(self.now_ms()))

    def _on_message(self, message) -> None:
        if message is None:
            return
        nbytes = len(message if isinstance(message, bytes) else message.encode("utf-8"))
        try:
            e = decode_envelope(message)
        except DecodeError:
            self.session.stats.decode_errors += 1
            self._record("event", "decode_error", {})
            return
        self.session.stats.received_bytes += nbytes
        self._record("received", e.kind, _describe(e))
        if e.kind == KIND_WELCOME:
            self.session.on_envelope(e, self.now_ms())
            self._welcomed.set()
            return
        if e.kind in ("connect_ok", KIND_ERROR):
            self._connect_results.put(e)
        before = len(self.session.events)
        replies = self.session.on_envelope(e, self.now_ms())
        for ev in self.session.events[before:]:
            self._record("event", ev.kind, dict(ev.detail))
            if ev.kind == "file_received" and self.staging_dir:
                self._stage_file(ev.detail["file_id"])
        self._send_all(replies)

    def _stage_file(self, file_id: str) -> None:
        name, data = self.session.received_files[file_id]
        self.staging_dir.mkdir(parents=True, exist_ok=True)
        safe = Path(name).name or file_id
        (self.staging_dir / f"{file_id}_{safe}").write_bytes(data)

    # -- public actions ----------------------------------------------------------

    @property
    def id(self) -> str:
        assert self.session.id is not None
        return self.session.id

    def connect_to(self, target: str, timeout: float = 10.0) -> None:
        """Link to *target*; raises PeerNotFound if the server rejects it."""
        while not self._connect_results.empty():  # stale replies from earlier attempts
            self._connect_results.get_nowait()
        with self._lock:
            self._send_all(self.session.connect_to(target, self.now_ms()))
        deadline = time.monotonic() + timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise PeerError(f"no reply to connect({target})")
            try:
                e = self._connect_results.get(timeout=remaining)
            except queue.Empty:
                continue
            if e.kind == "connect_ok" and e.payload.peer == target:
                return
            if e.kind == KIND_ERROR and e.payload.code == "peer_not_found":
                raise PeerNotFound(target)
            if e.kind == KIND_ERROR and e.payload.code == "self_connect":
                raise PeerError("cannot connect to yourself")

    def drag(self, orientation) -> None:
        with self._lock:
            self._send_all(self.session.local_drag(orientation, self.now_ms()))
        self._nudge()

    def set_zoom(self, zoom: float) -> None:
        with self._lock:
            self._send_all(self.session.local_zoom(zoom, self.now_ms()))
        self._nudge()

    def _nudge(self) -> None:
        # wake the actor so it recomputes its deadline; None is a no-op there
        self._inbox.put(None)

    def set_policy(self, policy: Policy) -> None:
        with self._lock:
            self.session.set_policy(policy)

    def send_command(self, script: str) -> None:
        with self._lock:
            self._send_all(self.session.send_command(script, self.now_ms()))

    def send_chat(self, text: str) -> None:
        with self._lock:
            self._send_all(self.session.send_chat(text, self.now_ms()))

    def send_file(self, path: str | Path) -> None:
        p = Path(path)
        data = p.read_bytes()
        with self._lock:
            self._send_all(self.session.send_file(p.name, data, self.now_ms()))

    def apply_action(self, action: Action) -> None:
        if action.verb == "connect":
            self.connect_to(str(action.arg))
        elif action.verb == "set_policy":
            self.set_policy(action.arg)
        elif action.verb == "drag":
            self.drag(action.arg)
        elif action.verb == "set_zoom":
            self.set_zoom(float(action.arg))
        elif action.verb == "command":
            self.send_command(str(action.arg))
        elif action.verb == "chat":
            self.send_chat(str(action.arg))
        elif action.verb == "send_file":
            self.send_file(str(action.arg))
        elif action.verb == "disconnect":
            self.close()

    def run_script(self, actions: list[Action]) -> list[TranscriptEntry]:
        """Execute *actions* at their timestamps against the wall clock."""
        start = self.now_ms()
        for action in actions:
            due = start + action.at_ms
            wait_s = (due - self.now_ms()) / 1000.0
            if wait_s > 0:
                time.sleep(wait_s)
            try:
                self.apply_action(action)
            except PeerError as exc:
                self._record("event", "action_error",
                             {"verb": action.verb, "error": str(exc)})
            if self._closed.is_set():
                break
        return self.transcript

    def wait_until(self, predicate: Callable[["PeerClient"], bool], timeout: float = 5.0) -> bool:
        """Poll until *predicate* holds; convenience for integration tests."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            with self._lock:
                if predicate(self):
                    return True
            time.sleep(0.005)
        return False

    def close(self) -> None:
        self._closed.set()
        self._inbox.put(None)
        try:
            self._ws.close()
        except OSError:
            pass


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="molsync-peer", description="Scriptable headless peer."
    )
    parser.add_argument("--server", required=True, help="ws://host:port/ws")
    parser.add_argument("--master", help="peer id to link to after joining")
    parser.add_argument("--script", help="action script file to execute")
    parser.add_argument("--hub", action="store_true", help="re-share applied originals")
    parser.add_argument(
        "--policy", default="1,1,1/1,1,1",
        help="send/apply triples as 0/1, e.g. 1,1,1/1,0,1",
    )
    parser.add_argument("--staging", default="received", help="directory for received files")
    args = parser.parse_args(argv)

    from .protocol import parse_policy

    client = PeerClient(
        args.server,
        policy=parse_policy(args.policy),
        hub=args.hub,
        staging_dir=args.staging,
        on_transcript=lambda entry: print(entry.to_json(), flush=True),
    )
    print(json.dumps({"peer_id": client.id}), flush=True)
    try:
        if args.master:
            client.connect_to(args.master)
        if args.script:
            client.run_script(load_script(args.script))
        else:
            while not client._closed.wait(timeout=1.0):
                pass
    except KeyboardInterrupt:
        pass
    except PeerError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1
    finally:
        client.close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
