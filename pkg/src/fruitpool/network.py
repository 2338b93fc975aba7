"""Synchronous message diffusion and the authenticated pool channel.

Everything diffused in round T is delivered to every party at the start of
round T+1.  The adversary may reorder deliveries (its messages first) and may
address its own messages to a subset of parties, but can never suppress an
honest sender's message.  Each recipient sees any given fruit or block at most
once over the whole execution; repeat copies (the per-round block-array echo)
are absorbed silently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Union

from .core import Block, Fruit
from .errors import ProtocolViolation

KIND_FRUIT = "fruit"
KIND_BLOCK = "block"
KIND_BLOCK_ARRAY = "blocks"

ORDER_CANONICAL = "canonical"
ORDER_ADVERSARY_FIRST = "adversary_first"

Payload = Union[Fruit, Block, tuple[Block, ...]]


@dataclass(frozen=True)
class Delivery:
    """One message as materialized into inboxes."""

    round_sent: int
    arrival_index: int
    sender: int
    kind: str
    payload: Payload
    recipients: Optional[frozenset[int]]  # None = everyone

    def reaches(self, party: int) -> bool:
        if self.recipients is None or party == self.sender:
            return True
        return party in self.recipients


class DiffuseBuffer:
    """Collects one round's outbound messages and materializes ordered,
    possibly adversarially re-ordered deliveries for the next round."""

    def __init__(self, n: int, corrupted: frozenset[int],
                 ordering: str = ORDER_CANONICAL):
        self.n = n
        self.corrupted = corrupted
        self.ordering = ordering
        self._outbox: list[tuple[int, int, str, Payload, Optional[frozenset[int]]]] = []
        self._send_seq = 0
        self._arrival_seq = 0
        self._round = 0

    def begin_round(self, rnd: int) -> None:
        self._round = rnd

    def diffuse(self, sender: int, kind: str, payload: Payload,
                recipients: Optional[Iterable[int]] = None) -> None:
        target: Optional[frozenset[int]] = None
        if recipients is not None:
            if sender not in self.corrupted:
                raise ProtocolViolation(
                    f"honest party {sender} may not address a subset"
                )
            target = frozenset(recipients)
        self._outbox.append((self._send_seq, sender, kind, payload, target))
        self._send_seq += 1

    def deliver_round(self) -> list[Delivery]:
        """Drain the buffer in delivery order, assigning arrival indices."""
        pending = self._outbox
        self._outbox = []
        if self.ordering == ORDER_ADVERSARY_FIRST and self.corrupted:
            pending.sort(key=lambda m: (m[1] not in self.corrupted, m[0]))
        deliveries = []
        for _, sender, kind, payload, target in pending:
            deliveries.append(
                Delivery(self._round, self._arrival_seq, sender, kind, payload, target)
            )
            self._arrival_seq += 1
        return deliveries


@dataclass(frozen=True)
class AuthMessage:
    sender: int
    payload: object


class AuthChannel:
    """Message authentication over a fixed edge set: a send goes through only
    if the directed pair is an edge; sender identity is bound by the engine."""

    def __init__(self, edges: Iterable[tuple[int, int]]):
        self.edges: set[tuple[int, int]] = set(edges)
        self._queues: dict[int, list[AuthMessage]] = {}
        self.dropped: list[tuple[int, int]] = []

    @classmethod
    def star(cls, leader: int, members: Iterable[int]) -> "AuthChannel":
        edges = []
        for m in members:
            if m != leader:
                edges.append((leader, m))
                edges.append((m, leader))
        return cls(edges)

    def add_edges(self, edges: Iterable[tuple[int, int]]) -> None:
        self.edges.update(edges)

    def send(self, sender: int, recipient: int, payload: object) -> bool:
        if (sender, recipient) not in self.edges:
            self.dropped.append((sender, recipient))
            return False
        self._queues.setdefault(recipient, []).append(AuthMessage(sender, payload))
        return True

    def drain(self, recipient: int) -> list[AuthMessage]:
        return self._queues.pop(recipient, [])
