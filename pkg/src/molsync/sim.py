"""Deterministic discrete-event simulator.

Wires scripted peer sessions to an in-process relay core through a modelled
network (mean latency, uniform jitter, optional loss and reordering) and
reports whether everyone converged, how long propagation took, and what
crossed the wire. Identical (scenario, profile) inputs produce
byte-identical reports: one seeded RNG drives every network draw, the event
queue breaks ties by insertion order, and the clock advances in whole
milliseconds.

Frames travel two legs, sender -> relay -> recipient, each drawing its own
latency. Unless the profile enables reordering, arrival times per directed
leg are clamped to be non-decreasing, which models the in-order delivery a
real WebSocket gives. Loss applies only to camera snapshots (rotation and
state) unless ``uniform_loss`` is set; commands, chat and files ride a
reliable channel, as they would in practice.
"""
from __future__ import annotations

import argparse
import heapq
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from .protocol import Policy, cameras_equal, encoded_size
from .protocol.messages import Envelope, SNAPSHOT_KINDS, UPDATE_KINDS
from .relay import RelayCore
from .script import Action, ScriptError, load_script
from .session import SessionCore, SessionEvent

DEFAULT_EVENT_BUDGET = 1_000_000
CONVERGENCE_TOL = 1e-9


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class NetProfile:
    one_way_latency_ms: float = 0.0
    jitter_ms: float = 0.0
    loss_rate: float = 0.0
    reorder: bool = False
    uniform_loss: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.one_way_latency_ms < 0 or self.jitter_ms < 0:
            raise ValueError("latency and jitter must be >= 0")
        if not 0.0 <= self.loss_rate < 1.0:
            raise ValueError("loss_rate must be in [0, 1)")

    def describe(self) -> str:
        return (
            f"lat={self.one_way_latency_ms:g},jit={self.jitter_ms:g},"
            f"loss={self.loss_rate:g},reorder={int(self.reorder)},"
            f"uniform_loss={int(self.uniform_loss)},seed={self.seed}"
        )


def parse_profile(text: str) -> NetProfile:
    """Parse ``lat=100,jit=20,loss=0,seed=7[,reorder=1][,uniform_loss=1]``."""
    kw: dict = {}
    keys = {
        "lat": ("one_way_latency_ms", float),
        "jit": ("jitter_ms", float),
        "loss": ("loss_rate", float),
        "seed": ("seed", int),
        "reorder": ("reorder", lambda v: bool(int(v))),
        "uniform_loss": ("uniform_loss", lambda v: bool(int(v))),
    }
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise ValueError(f"bad profile entry {part!r}")
        key, _, value = part.partition("=")
        if key.strip() not in keys:
            raise ValueError(f"unknown profile key {key!r}")
        name, cast = keys[key.strip()]
        kw[name] = cast(value.strip())
    return NetProfile(**kw)


@dataclass
class ScenarioPeer:
    alias: str
    hub: bool = False
    policy: Policy = field(default_factory=Policy)


@dataclass
class Scenario:
    """Peers, who links to whom at start, and each peer's timed actions."""

    peers: list[ScenarioPeer]
    links: list[tuple[str, str]]  # (initiator alias, target alias)
    scripts: dict[str, list[Action]]
    files: dict[str, bytes] = field(default_factory=dict)  # send_file payloads by path

    def aliases(self) -> list[str]:
        return [p.alias for p in self.peers]


def parse_scenario(text: str, base_dir: Path | None = None) -> Scenario:
    """Parse the scenario file format::

        peer A hub
        peer B
        link B A
        script A master.act

    Script paths resolve relative to the scenario file. ``send_file`` paths
    inside scripts resolve the same way and are read at parse time.
    """
    peers: list[ScenarioPeer] = []
    links: list[tuple[str, str]] = []
    scripts: dict[str, list[Action]] = {}
    files: dict[str, bytes] = {}
    base = base_dir or Path(".")
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        where = f"line {lineno}"
        if parts[0] == "peer":
            if len(parts) < 2 or len(parts) > 3 or (len(parts) == 3 and parts[2] != "hub"):
                raise ScriptError(f"{where}: expected 'peer <alias> [hub]'")
            alias = parts[1]
            if alias in seen:
                raise ScriptError(f"{where}: duplicate peer {alias!r}")
            seen.add(alias)
            peers.append(ScenarioPeer(alias=alias, hub=len(parts) == 3))
        elif parts[0] == "link":
            if len(parts) != 3:
                raise ScriptError(f"{where}: expected 'link <from> <to>'")
            links.append((parts[1], parts[2]))
        elif parts[0] == "script":
            if len(parts) != 3:
                raise ScriptError(f"{where}: expected 'script <alias> <path>'")
            script_path = base / parts[2]
            scripts[parts[1]] = load_script(script_path)
        else:
            raise ScriptError(f"{where}: unknown directive {parts[0]!r}")
    for a, b in links:
        if a not in seen or b not in seen:
            raise ScriptError(f"link {a} {b} references an undeclared peer")
    for alias in scripts:
        if alias not in seen:
            raise ScriptError(f"script for undeclared peer {alias!r}")
    scenario = Scenario(peers=peers, links=links, scripts=scripts, files=files)
    _load_script_files(scenario, base)
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    return parse_scenario(p.read_text(encoding="utf-8"), base_dir=p.parent)


def _load_script_files(scenario: Scenario, base: Path) -> None:
    for actions in scenario.scripts.values():
        for action in actions:
            if action.verb == "send_file":
                key = str(action.arg)
                if key not in scenario.files:
                    scenario.files[key] = (base / key).read_bytes()


@dataclass(frozen=True)
class LatencyStats:
    samples: int
    p50_ms: float
    p95_ms: float
    max_ms: float

    @classmethod
    def from_samples(cls, samples: list[int]) -> "LatencyStats":
        if not samples:
            return cls(0, 0.0, 0.0, 0.0)
        ordered = sorted(samples)
        return cls(
            samples=len(ordered),
            p50_ms=float(_nearest_rank(ordered, 0.50)),
            p95_ms=float(_nearest_rank(ordered, 0.95)),
            max_ms=float(ordered[-1]),
        )


def _nearest_rank(ordered: list[int], q: float) -> int:
    # smallest index i with (i+1)/n >= q; ceil via integers to avoid float drift
    n = len(ordered)
    i = -(-int(q * n * 10**6) // 10**6) - 1
    return ordered[min(max(i, 0), n - 1)]


@dataclass
class ScenarioReport:
    profile: NetProfile
    converged: bool
    convergence_time_ms: int
    duration_ms: int
    per_peer: dict[str, LatencyStats]
    overall: LatencyStats
    delivered: dict[str, int]
    dropped: dict[str, int]
    bytes_on_wire: int
    max_update_frame_bytes: int
    events_processed: int
    peer_ids: dict[str, str]

    def to_json_obj(self) -> dict:
        return {
            "profile": {
                "lat": self.profile.one_way_latency_ms,
                "jit": self.profile.jitter_ms,
                "loss": self.profile.loss_rate,
                "reorder": self.profile.reorder,
                "uniform_loss": self.profile.uniform_loss,
                "seed": self.profile.seed,
            },
            "converged": self.converged,
            "convergence_time_ms": self.convergence_time_ms,
            "duration_ms": self.duration_ms,
            "latency": {
                alias: {
                    "samples": s.samples, "p50_ms": s.p50_ms, "p95_ms": s.p95_ms,
                    "max_ms": s.max_ms,
                }
                for alias, s in sorted(self.per_peer.items())
            },
            "overall": {
                "samples": self.overall.samples, "p50_ms": self.overall.p50_ms,
                "p95_ms": self.overall.p95_ms, "max_ms": self.overall.max_ms,
            },
            "delivered": dict(sorted(self.delivered.items())),
            "dropped": dict(sorted(self.dropped.items())),
            "bytes_on_wire": self.bytes_on_wire,
            "max_update_frame_bytes": self.max_update_frame_bytes,
            "events_processed": self.events_processed,
            "peer_ids": dict(sorted(self.peer_ids.items())),
        }

    def to_json_bytes(self) -> bytes:
        return json.dumps(self.to_json_obj(), sort_keys=True, separators=(",", ":")).encode()


class _Network:
    """Latency/jitter/loss draws plus per-leg FIFO clamping."""

    def __init__(self, profile: NetProfile):
        self.profile = profile
        self.rng = random.Random(profile.seed)
        self._last_arrival: dict[tuple[str, str], int] = {}

    def lossy_kind(self, kind: str) -> bool:
        if self.profile.uniform_loss:
            return True
        return kind in SNAPSHOT_KINDS

    def leg(self, src: str, dst: str, now_ms: int, kind: str) -> int | None:
        """Arrival time for one leg, or None when the frame is lost."""
        p = self.profile
        if p.loss_rate > 0 and self.lossy_kind(kind):
            if self.rng.random() < p.loss_rate:
                return None
        delay = p.one_way_latency_ms
        if p.jitter_ms > 0:
            delay += self.rng.uniform(-p.jitter_ms, p.jitter_ms)
        arrival = now_ms + max(0, round(delay))
        if not p.reorder:
            key = (src, dst)
            arrival = max(arrival, self._last_arrival.get(key, 0))
            self._last_arrival[key] = arrival
        return arrival


class Simulation:
    def __init__(
        self,
        scenario: Scenario,
        profile: NetProfile,
        max_rate_hz: float = 20.0,
        event_budget: int = DEFAULT_EVENT_BUDGET,
    ):
        self.scenario = scenario
        self.profile = profile
        self.net = _Network(profile)
        self.core = RelayCore(id_seed=profile.seed)
        self.event_budget = event_budget
        self.now = 0
        self._heap: list[tuple[int, int, str, object]] = []
        self._order = 0
        self.sessions: dict[str, SessionCore] = {}
        self.alias_of: dict[str, str] = {}
        self.id_of: dict[str, str] = {}
        self._flush_tokens: dict[str, int] = {}
        self.latency_samples: dict[str, list[int]] = {}
        self.delivered: dict[str, int] = {}
        self.dropped: dict[str, int] = {}
        self.bytes_on_wire = 0
        self.max_update_frame_bytes = 0
        self.events_processed = 0
        self.last_update_send_ms = 0
        self.last_apply_ms = 0
        self._setup(scenario, max_rate_hz)

    # -- setup -----------------------------------------------------------------

    def _setup(self, scenario: Scenario, max_rate_hz: float) -> None:
        for sp in scenario.peers:
            session = SessionCore(
                policy=sp.policy, hub=sp.hub, max_rate_hz=max_rate_hz,
                rng=random.Random(self.profile.seed + len(self.sessions)),
            )
            peer_id, welcome = self.core.handle_hello(session.hello_payload().policy, 0)
            if peer_id is None:
                raise SimulationError("relay full during setup")
            session.on_envelope(welcome, 0)
            self.sessions[sp.alias] = session
            self.alias_of[peer_id] = sp.alias
            self.id_of[sp.alias] = peer_id
            self.latency_samples[sp.alias] = []
        # links are established before the clock starts; scripted connects
        # go through the modelled network instead
        for initiator, target in scenario.links:
            deliveries = self.core.handle_connect(
                self.id_of[initiator], self.id_of[target], 0
            )
            for recipient, env in deliveries:
                self.sessions[self.alias_of[recipient]].on_envelope(env, 0)
        for alias, actions in scenario.scripts.items():
            for action in actions:
                self._push(action.at_ms, "action", (alias, action))

    # -- event machinery ---------------------------------------------------------

    def _push(self, at_ms: int, tag: str, data) -> None:
        self._order += 1
        heapq.heappush(self._heap, (int(at_ms), self._order, tag, data))

    def run(self) -> ScenarioReport:
        while self._heap:
            self.events_processed += 1
            if self.events_processed > self.event_budget:
                raise SimulationError(self._budget_diagnostic())
            at_ms, _, tag, data = heapq.heappop(self._heap)
            self.now = at_ms
            if tag == "action":
                alias, action = data
                self._run_action(alias, action)
            elif tag == "uplink":
                self._arrive_at_relay(data)
            elif tag == "downlink":
                alias, env = data
                self._arrive_at_peer(alias, env)
            elif tag == "flush":
                alias, token = data
                self._run_flush(alias, token)
            else:  # pragma: no cover
                raise AssertionError(tag)
        return self._report()

    def _budget_diagnostic(self) -> str:
        pending = []
        for at_ms, _, tag, data in sorted(self._heap)[:10]:
            if tag == "downlink":
                alias, env = data
                pending.append(f"t={at_ms} {env.kind} {env.sender}->{alias}")
            elif tag == "uplink":
                pending.append(f"t={at_ms} {data.kind} {data.sender}->relay")
            else:
                pending.append(f"t={at_ms} {tag}")
        return (
            f"event budget {self.event_budget} exhausted at t={self.now}ms; "
            f"undelivered: {'; '.join(pending) or 'none'}"
        )

    # -- frames -------------------------------------------------------------------

    def _send_from(self, alias: str, envelopes: list[Envelope]) -> None:
        for e in envelopes:
            if e.kind in UPDATE_KINDS:
                self.last_update_send_ms = max(self.last_update_send_ms, self.now)
                self.max_update_frame_bytes = max(
                    self.max_update_frame_bytes, encoded_size(e)
                )
            arrival = self.net.leg(self.id_of[alias], "relay", self.now, e.kind)
            if arrival is None:
                self._drop(e.kind)
                continue
            self._push(arrival, "uplink", e)
        self._schedule_flush(alias)

    def _arrive_at_relay(self, e: Envelope) -> None:
        for recipient, env in self.core.handle_frame(e, self.now):
            alias = self.alias_of.get(recipient)
            if alias is None:
                self._drop(env.kind)
                continue
            arrival = self.net.leg("relay", recipient, self.now, env.kind)
            if arrival is None:
                self._drop(env.kind)
                continue
            self._push(arrival, "downlink", (alias, env))

    def _arrive_at_peer(self, alias: str, e: Envelope) -> None:
        session = self.sessions.get(alias)
        if session is None:
            self._drop(e.kind)
            return
        self.delivered[e.kind] = self.delivered.get(e.kind, 0) + 1
        self.bytes_on_wire += encoded_size(e)
        before = len(session.events)
        replies = session.on_envelope(e, self.now)
        for ev in session.events[before:]:
            if ev.kind == "applied":
                self.last_apply_ms = max(self.last_apply_ms, self.now)
                self.latency_samples[alias].append(self.now - ev.detail["sent_ts"])
        self._send_from(alias, replies)

    def _drop(self, kind: str) -> None:
        self.dropped[kind] = self.dropped.get(kind, 0) + 1

    # -- actions and timers ----------------------------------------------------------

    def _run_action(self, alias: str, action: Action) -> None:
        session = self.sessions.get(alias)
        if session is None:
            return
        try:
            self._dispatch_action(alias, session, action)
        except ValueError as exc:
            # action-level failure (oversize command, bad quaternion):
            # recorded, execution continues
            session.events.append(
                SessionEvent(self.now, "action_error",
                             {"verb": action.verb, "error": str(exc)})
            )

    def _dispatch_action(self, alias: str, session: SessionCore, action: Action) -> None:
        if action.verb == "connect":
            target = str(action.arg)
            if target.startswith("@"):
                target = self.id_of.get(target[1:], target)
            self._send_from(alias, session.connect_to(target, self.now))
        elif action.verb == "set_policy":
            session.set_policy(action.arg)
        elif action.verb == "drag":
            self._send_from(alias, session.local_drag(action.arg, self.now))
        elif action.verb == "set_zoom":
            self._send_from(alias, session.local_zoom(float(action.arg), self.now))
        elif action.verb == "command":
            self._send_from(alias, session.send_command(str(action.arg), self.now))
        elif action.verb == "chat":
            self._send_from(alias, session.send_chat(str(action.arg), self.now))
        elif action.verb == "send_file":
            data = self.scenario.files[str(action.arg)]
            name = Path(str(action.arg)).name
            self._send_from(alias, session.send_file(name, data, self.now))
        elif action.verb == "disconnect":
            self._disconnect(alias)
        else:  # pragma: no cover
            raise AssertionError(action.verb)

    def _disconnect(self, alias: str) -> None:
        peer_id = self.id_of[alias]
        self.sessions.pop(alias, None)
        for recipient, env in self.core.handle_disconnect(peer_id, self.now):
            other = self.alias_of.get(recipient)
            if other is None:
                continue
            arrival = self.net.leg("relay", recipient, self.now, env.kind)
            if arrival is not None:
                self._push(arrival, "downlink", (other, env))

    def _schedule_flush(self, alias: str) -> None:
        session = self.sessions.get(alias)
        if session is None:
            return
        deadline = session.next_deadline_ms()
        if deadline is None:
            return
        token = self._flush_tokens.get(alias, 0) + 1
        self._flush_tokens[alias] = token
        self._push(max(deadline, self.now), "flush", (alias, token))

    def _run_flush(self, alias: str, token: int) -> None:
        if self._flush_tokens.get(alias) != token:
            return  # superseded by a newer snapshot
        session = self.sessions.get(alias)
        if session is None:
            return
        self._send_from(alias, session.poll(self.now))

    # -- reporting ---------------------------------------------------------------------

    def _report(self) -> ScenarioReport:
        models = [
            (alias, s.model) for alias, s in sorted(self.sessions.items())
        ]
        converged = True
        for i in range(1, len(models)):
            if not cameras_equal(models[0][1], models[i][1], CONVERGENCE_TOL):
                converged = False
            if models[0][1].command_log != models[i][1].command_log:
                converged = False
        per_peer = {
            alias: LatencyStats.from_samples(samples)
            for alias, samples in sorted(self.latency_samples.items())
        }
        all_samples = [s for samples in self.latency_samples.values() for s in samples]
        return ScenarioReport(
            profile=self.profile,
            converged=converged,
            convergence_time_ms=max(0, self.last_apply_ms - self.last_update_send_ms),
            duration_ms=self.now,
            per_peer=per_peer,
            overall=LatencyStats.from_samples(all_samples),
            delivered=dict(self.delivered),
            dropped=dict(self.dropped),
            bytes_on_wire=self.bytes_on_wire,
            max_update_frame_bytes=self.max_update_frame_bytes,
            events_processed=self.events_processed,
            peer_ids=dict(self.id_of),
        )


def run_scenario(
    scenario: Scenario,
    profile: NetProfile,
    max_rate_hz: float = 20.0,
    event_budget: int = DEFAULT_EVENT_BUDGET,
) -> ScenarioReport:
    return Simulation(scenario, profile, max_rate_hz, event_budget).run()


SweepCell = Union[ScenarioReport, SimulationError]


def sweep(
    profiles: list[NetProfile],
    scenario: Scenario,
    max_rate_hz: float = 20.0,
    event_budget: int = DEFAULT_EVENT_BUDGET,
) -> list[SweepCell]:
    """One cell per profile; a failing cell carries its error, the sweep goes on."""
    if not profiles:
        raise ValueError("sweep needs at least one profile")
    cells: list[SweepCell] = []
    for p in profiles:
        try:
            cells.append(run_scenario(scenario, p, max_rate_hz, event_budget))
        except SimulationError as exc:
            cells.append(exc)
    return cells


_COLUMNS = (
    "profile", "converged", "conv_ms", "p50_ms", "p95_ms", "max_ms",
    "frames", "bytes", "drops",
)


def render_table(cells: list[SweepCell]) -> str:
    rows = [_COLUMNS]
    for cell in cells:
        if isinstance(cell, SimulationError):
            rows.append(("<failed>", "NO", "-", "-", "-", "-", "-", "-", str(cell)))
            continue
        rows.append(
            (
                cell.profile.describe(),
                "yes" if cell.converged else "NO",
                str(cell.convergence_time_ms),
                f"{cell.overall.p50_ms:g}",
                f"{cell.overall.p95_ms:g}",
                f"{cell.overall.max_ms:g}",
                str(sum(cell.delivered.values())),
                str(cell.bytes_on_wire),
                str(sum(cell.dropped.values())),
            )
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(_COLUMNS))]
    lines = []
    for row in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="molsync-sim",
        description="Deterministic network simulation of shared view sessions.",
    )
    parser.add_argument("--scenario", required=True, help="scenario file")
    parser.add_argument(
        "--profile", default="lat=0,jit=0,loss=0,seed=0",
        help='e.g. "lat=100,jit=20,loss=0,seed=7"',
    )
    parser.add_argument(
        "--sweep", help="semicolon-separated list of profiles, overrides --profile"
    )
    parser.add_argument("--out", help="write the machine-readable report here")
    parser.add_argument("--budget", type=int, default=DEFAULT_EVENT_BUDGET)
    args = parser.parse_args(argv)

    try:
        scenario = load_scenario(args.scenario)
        if args.sweep:
            profiles = [parse_profile(p) for p in args.sweep.split(";") if p.strip()]
        else:
            profiles = [parse_profile(args.profile)]
        cells = sweep(profiles, scenario, event_budget=args.budget)
    except (ScriptError, ValueError, OSError) as exc:
        print(f"error: {exc}")
        return 1
    print(render_table(cells))
    if args.out:
        payload = [
            c.to_json_obj() if isinstance(c, ScenarioReport) else {"error": str(c)}
            for c in cells
        ]
        doc = payload[0] if len(payload) == 1 else payload
        Path(args.out).write_text(
            json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    failed = any(isinstance(c, SimulationError) for c in cells)
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
