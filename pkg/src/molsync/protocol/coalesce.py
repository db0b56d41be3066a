"""Update coalescing.

During a drag a peer produces far more camera snapshots than anyone needs.
Only the newest pending snapshot matters (they are absolute), so the sender
keeps at most one and emits it when the throttle interval has elapsed since
the last emission. Intermediates are superseded in place, never queued.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, TypeVar

DEFAULT_MAX_RATE_HZ = 20.0

T = TypeVar("T")


def coalesce(
    pending: Sequence[T],
    max_rate: float,
    now_ms: int,
    last_emit_ms: int | None = None,
) -> Optional[T]:
    """Pick the at-most-one snapshot to emit from *pending* at *now_ms*.

    Emits the newest pending entry, and only when at least 1000/max_rate ms
    have passed since *last_emit_ms* (an idle channel emits immediately).
    """
    if max_rate <= 0:
        raise ValueError("max_rate must be > 0")
    if not pending:
        return None
    if last_emit_ms is not None and now_ms - last_emit_ms < 1000.0 / max_rate:
        return None
    return pending[-1]


@dataclass(frozen=True)
class Coalescer:
    """Throttle state for one sender; immutable, returns updated copies."""

    max_rate: float = DEFAULT_MAX_RATE_HZ
    last_emit_ms: int | None = None
    pending: object | None = None
    pending_since_ms: int | None = None

    @property
    def interval_ms(self) -> float:
        return 1000.0 / self.max_rate

    def offer(self, item: T, now_ms: int) -> tuple["Coalescer", Optional[T]]:
        """Submit a fresh snapshot; returns the emission, if due."""
        nxt = replace(self, pending=item, pending_since_ms=now_ms)
        return nxt.poll(now_ms)

    def poll(self, now_ms: int) -> tuple["Coalescer", Optional[T]]:
        """Emit the held snapshot when the interval has elapsed."""
        emit = coalesce(
            [self.pending] if self.pending is not None else [],
            self.max_rate,
            now_ms,
            self.last_emit_ms,
        )
        if emit is None:
            return self, None
        return (
            replace(self, last_emit_ms=now_ms, pending=None, pending_since_ms=None),
            emit,
        )

    def next_deadline_ms(self) -> int | None:
        """Time at which the held snapshot becomes emittable, if any."""
        if self.pending is None:
            return None
        if self.last_emit_ms is None:
            return self.pending_since_ms
        return self.last_emit_ms + math.ceil(self.interval_ms)
