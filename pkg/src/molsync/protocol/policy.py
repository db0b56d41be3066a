"""Send/apply toggles.

Six independent flags: whether a peer transmits its rotations, full view
states and viewer commands, and whether it applies the ones it receives.
Chat and file transfer have no toggles and always pass.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Policy:
    send_rotations: bool = True
    send_states: bool = True
    send_commands: bool = True
    apply_rotations: bool = True
    apply_states: bool = True
    apply_commands: bool = True

    def to_wire(self) -> dict[str, bool]:
        return {
            "send_rotations": self.send_rotations,
            "send_states": self.send_states,
            "send_commands": self.send_commands,
            "apply_rotations": self.apply_rotations,
            "apply_states": self.apply_states,
            "apply_commands": self.apply_commands,
        }

    @classmethod
    def from_wire(cls, d: dict) -> "Policy":
        fields = (
            "send_rotations",
            "send_states",
            "send_commands",
            "apply_rotations",
            "apply_states",
            "apply_commands",
        )
        return cls(**{k: bool(d.get(k, True)) for k in fields})


def gate_outbound(kind: str, policy: Policy) -> bool:
    """True when an envelope of *kind* may leave this peer."""
    if kind == "rotation":
        return policy.send_rotations
    if kind == "state":
        return policy.send_states
    if kind == "command":
        return policy.send_commands
    return True


def gate_inbound(kind: str, policy: Policy) -> bool:
    """True when a received envelope of *kind* may touch the local viewer."""
    if kind == "rotation":
        return policy.apply_rotations
    if kind == "state":
        return policy.apply_states
    if kind == "command":
        return policy.apply_commands
    return True


def parse_policy(text: str) -> Policy:
    """Parse the CLI form ``r,s,c/r,s,c`` (send triple / apply triple, 0 or 1)."""
    try:
        send_part, apply_part = text.split("/")
        sr, ss, sc = (_bit(v) for v in send_part.split(","))
        ar, as_, ac = (_bit(v) for v in apply_part.split(","))
    except ValueError as exc:
        raise ValueError(f"bad policy string {text!r}, expected e.g. 1,1,1/1,0,1") from exc
    return Policy(sr, ss, sc, ar, as_, ac)


def _bit(v: str) -> bool:
    v = v.strip()
    if v not in ("0", "1"):
        raise ValueError(v)
    return v == "1"
