"""Line-oriented action scripts for driving a headless peer.

Format: one action per line, ``<at_ms> <verb> <args...>``. Blank lines and
``#`` comments are skipped. Timestamps must be non-decreasing. Verbs:

    100 connect nBRNtp3FaBNfBMoh
    150 set_policy 1,1,1/1,0,1
    200 drag 0.92387953 0 0.38268343 0
    300 set_zoom 140
    400 command spin on
    500 chat hello there
    600 send_file ./structure.xyz
    900 disconnect

In simulator scenarios a connect target may be written ``@alias`` and is
resolved to the id assigned to that scenario peer.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

from .protocol import parse_policy
from .protocol.policy import Policy

VERBS = (
    "connect",
    "set_policy",
    "drag",
    "set_zoom",
    "command",
    "chat",
    "send_file",
    "disconnect",
)


@dataclass(frozen=True)
class Action:
    at_ms: int
    verb: str
    # verb-specific argument: target str, Policy, quat tuple, float, text, path
    arg: Union[str, Policy, tuple, float, None] = None


class ScriptError(ValueError):
    pass


def parse_script(text: str, name: str = "<script>") -> list[Action]:
    actions: list[Action] = []
    last_ms = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{name}:{lineno}"
        parts = line.split(None, 2)
        if len(parts) < 2:
            raise ScriptError(f"{where}: expected '<at_ms> <verb> ...'")
        try:
            at_ms = int(parts[0])
        except ValueError:
            raise ScriptError(f"{where}: bad timestamp {parts[0]!r}") from None
        if at_ms < last_ms:
            raise ScriptError(f"{where}: timestamps must be non-decreasing")
        last_ms = at_ms
        verb = parts[1]
        rest = parts[2] if len(parts) > 2 else ""
        actions.append(_parse_action(at_ms, verb, rest, where))
    return actions


def _parse_action(at_ms: int, verb: str, rest: str, where: str) -> Action:
    if verb not in VERBS:
        raise ScriptError(f"{where}: unknown verb {verb!r}")
    if verb == "disconnect":
        return Action(at_ms, verb)
    if not rest:
        raise ScriptError(f"{where}: {verb} needs an argument")
    if verb == "connect":
        return Action(at_ms, verb, rest.strip())
    if verb == "set_policy":
        try:
            return Action(at_ms, verb, parse_policy(rest.strip()))
        except ValueError as exc:
            raise ScriptError(f"{where}: {exc}") from None
    if verb == "drag":
        comps = rest.split()
        if len(comps) != 4:
            raise ScriptError(f"{where}: drag needs 4 quaternion components")
        try:
            return Action(at_ms, verb, tuple(float(c) for c in comps))
        except ValueError:
            raise ScriptError(f"{where}: bad quaternion {rest!r}") from None
    if verb == "set_zoom":
        try:
            return Action(at_ms, verb, float(rest.strip()))
        except ValueError:
            raise ScriptError(f"{where}: bad zoom {rest!r}") from None
    if verb == "send_file":
        return Action(at_ms, verb, rest.strip())
    # command / chat take the rest of the line verbatim
    return Action(at_ms, verb, rest)


def load_script(path: str | Path) -> list[Action]:
    p = Path(path)
    return parse_script(p.read_text(encoding="utf-8"), name=str(p))
