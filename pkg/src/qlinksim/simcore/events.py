"""Deterministic discrete-event queue keyed on integer picoseconds."""
from __future__ import annotations

import enum
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any


class EventKind(enum.IntEnum):
    # Value doubles as the tiebreak priority at equal times: acknowledgements
    # land before emissions so freed qubits join the burst that starts then.
    ACK = 0
    CLASSICAL_DELIVERY = 1
    EMISSION_DUE = 2
    BSA_RESOLVE = 3
    RULE_EVALUATE = 4
    TIMEOUT = 5
    TRIAL_END = 6


@dataclass(order=True)
class Event:
    time: int
    priority: int
    sequence: int
    kind: EventKind = field(compare=False)
    payload: Any = field(compare=False, default=None)


class EventQueue:
    """Min-heap of events ordered by (time, kind priority, insertion sequence)."""

    def __init__(self):
        self._heap: list[Event] = []
        self._seq = itertools.count()
        self.now = 0
        self.processed = 0

    def schedule(self, time: int, kind: EventKind, payload=None) -> Event:
        time = int(time)
        if time < self.now:
            raise ValueError(f"event {kind.name} scheduled at {time} < now {self.now}")
        ev = Event(time, int(kind), next(self._seq), kind, payload)
        heapq.heappush(self._heap, ev)
        return ev

    def pop(self) -> Event:
        ev = heapq.heappop(self._heap)
        if ev.time < self.now:
            raise RuntimeError("event time went backwards")
        self.now = ev.time
        self.processed += 1
        return ev

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)
