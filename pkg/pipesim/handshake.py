"""
Four-signal handshake between neighbouring blocks.

A link buffers up to ``capacity`` finished results. One transfer walks the
signals in a fixed order:

    ready      the link holds a result (raised on push)
    ready_in   consumer is idle and can take a new input
    fetch      consumer starts reading the head result
    fetched    consumer acknowledges; the slot is freed

Signals raised out of order raise ProtocolError.
"""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Any, Deque, Dict


class ProtocolError(RuntimeError):
    """A handshake signal was raised out of order."""


class DeadlockError(RuntimeError):
    """No block can progress; ``link`` names the stalled producer → consumer pair."""

    def __init__(self, link: str, detail: str = ""):
        self.link = link
        message = f"deadlock on link {link}"
        super().__init__(f"{message}: {detail}" if detail else message)


@dataclass
class HandshakeState:
    ready: bool = False
    ready_in: bool = False
    fetch: bool = False
    fetched: bool = False

    def as_dict(self) -> Dict[str, bool]:
        return asdict(self)


@dataclass
class Link:
    producer: str
    consumer: str
    capacity: int = 1
    state: HandshakeState = field(default_factory=HandshakeState)
    slots: Deque[Any] = field(default_factory=deque)
    transfers: int = 0

    @property
    def name(self) -> str:
        return f"{self.producer} -> {self.consumer}"

    @property
    def occupancy(self) -> int:
        return len(self.slots)

    @property
    def has_space(self) -> bool:
        return len(self.slots) < self.capacity

    def push(self, item: Any) -> None:
        """Producer hands over a finished result and asserts ready."""
        if not self.has_space:
            raise ProtocolError(f"{self.name}: push into a full link ({self.capacity} slots)")
        self.slots.append(item)
        self.state.ready = True

    def raise_ready_in(self) -> None:
        if self.state.ready_in:
            raise ProtocolError(f"{self.name}: ready_in raised twice")
        self.state.ready_in = True

    def raise_fetch(self) -> None:
        if not (self.state.ready and self.state.ready_in):
            raise ProtocolError(f"{self.name}: fetch before ready and ready_in")
        if self.state.fetch:
            raise ProtocolError(f"{self.name}: fetch raised twice")
        self.state.fetch = True

    def raise_fetched(self) -> None:
        if not self.state.fetch:
            raise ProtocolError(f"{self.name}: fetched before fetch")
        self.state.fetched = True

    def release(self) -> Any:
        """Drop the signals, free the head slot and return its result."""
        if not self.state.fetched:
            raise ProtocolError(f"{self.name}: released before fetched")
        item = self.slots.popleft()
        self.state = HandshakeState(ready=bool(self.slots))
        self.transfers += 1
        return item
