"""Local visualization state and the rules for applying remote updates.

A ViewerModel is an immutable value; apply_update returns either the same
object (gated or stale input) or a new one. Staleness is last-writer-wins
per sender: each origin's envelopes carry a monotone sequence number and an
update numbered at or below the last applied one from that origin is a
silent no-op. Snapshots make this convergent: whatever order a set of
frames from one origin arrives in, the highest-numbered one ends up applied.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping

from .messages import (
    Envelope,
    KIND_COMMAND,
    KIND_ROTATION,
    KIND_STATE,
    UPDATE_KINDS,
)
from .policy import Policy, gate_inbound
from .quat import IDENTITY, Quat, canonical

DEFAULT_ZOOM = 100.0
ORIGIN_CENTER = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ViewerModel:
    orientation: Quat = IDENTITY
    zoom: float = DEFAULT_ZOOM
    center: tuple[float, float, float] = ORIGIN_CENTER
    last_applied_seq: Mapping[str, int] = field(default_factory=lambda: MappingProxyType({}))
    command_log: tuple[str, ...] = ()

    def with_camera(
        self,
        orientation: Quat | None = None,
        zoom: float | None = None,
        center: tuple[float, float, float] | None = None,
    ) -> "ViewerModel":
        return replace(
            self,
            orientation=canonical(*orientation) if orientation is not None else self.orientation,
            zoom=zoom if zoom is not None else self.zoom,
            center=center if center is not None else self.center,
        )

    def seq_for(self, origin: str) -> int:
        return self.last_applied_seq.get(origin, 0)

    def _bump(self, origin: str, seq: int) -> Mapping[str, int]:
        seqs = dict(self.last_applied_seq)
        seqs[origin] = seq
        return MappingProxyType(seqs)


def apply_update(
    model: ViewerModel, e: Envelope, policy: Policy
) -> tuple[ViewerModel, bool]:
    """Apply a rotation/state/command envelope to *model* under *policy*.

    Returns ``(model, False)`` unchanged when the kind is gated off or the
    envelope is stale for its sender; otherwise a new model and True.
    """
    if e.kind not in UPDATE_KINDS:
        return model, False
    if not gate_inbound(e.kind, policy):
        return model, False
    if e.seq <= model.seq_for(e.sender):
        return model, False

    seqs = model._bump(e.sender, e.seq)
    p = e.payload
    if e.kind == KIND_ROTATION:
        new = replace(model, orientation=p.q, last_applied_seq=seqs)
    elif e.kind == KIND_STATE:
        new = replace(
            model, orientation=p.q, zoom=p.zoom, center=p.center, last_applied_seq=seqs
        )
    elif e.kind == KIND_COMMAND:
        new = replace(
            model, command_log=model.command_log + (p.script,), last_applied_seq=seqs
        )
    else:  # pragma: no cover
        raise AssertionError(e.kind)
    return new, True


def cameras_equal(a: ViewerModel, b: ViewerModel, tol: float = 1e-9) -> bool:
    """True when every camera field (orientation, zoom, center) is within *tol*."""
    fields = (*a.orientation, a.zoom, *a.center)
    other = (*b.orientation, b.zoom, *b.center)
    return all(abs(x - y) <= tol for x, y in zip(fields, other))
