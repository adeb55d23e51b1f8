"""Timer-free query/response failure detector for unknown mobile networks.

Each node runs two concurrent activities:

* a round loop that broadcasts a query carrying its ``suspected`` and
  ``mistake`` sets, waits for ``d - f`` distinct responses (its own included),
  then suspects every known node that did not answer;
* a query handler that merges the tagged information piggybacked on incoming
  queries and answers with a response.

This module is a pure state machine. It has no clock and performs no I/O; the
simulator in :mod:`manetfd.simnet` feeds it events and carries its messages.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, Hashable, Iterator, Mapping, NamedTuple, Set

NodeId = Hashable


class ConfigurationError(ValueError):
    """Raised when parameters cannot describe an f-covering network."""


class ProtocolError(RuntimeError):
    """Raised when round operations are called out of order."""


class TaggedEntry(NamedTuple):
    node: NodeId
    tag: int


class RoundStatus(enum.Enum):
    PENDING = "pending"
    SATISFIED = "satisfied"


@dataclass(frozen=True)
class QueryMsg:
    sender: NodeId
    round_id: int
    suspected: Mapping[NodeId, int]
    mistake: Mapping[NodeId, int]

    def suspected_entries(self) -> list[TaggedEntry]:
        return [TaggedEntry(n, c) for n, c in sorted(self.suspected.items())]

    def mistake_entries(self) -> list[TaggedEntry]:
        return [TaggedEntry(n, c) for n, c in sorted(self.mistake.items())]


@dataclass(frozen=True)
class ResponseMsg:
    sender: NodeId
    round_id: int


@dataclass
class FdState:
    """Failure-detector state of one node.

    ``suspected`` and ``mistake`` map a node id to its tag, so each id has at
    most one entry per set; inserting is the replace-by-key ``Add`` operation.
    """

    node: NodeId
    f: int
    d: int
    counter: int = 0
    suspected: Dict[NodeId, int] = field(default_factory=dict)
    mistake: Dict[NodeId, int] = field(default_factory=dict)
    known: Set[NodeId] = field(default_factory=set)
    rec_from: Set[NodeId] = field(default_factory=set)
    round_id: int = 0
    round_open: bool = False
    satisfied: bool = False

    @property
    def quorum(self) -> int:
        return self.d - self.f

    # -- task T1: the round loop -------------------------------------------

    def begin_round(self) -> QueryMsg:
        if self.round_open:
            raise ProtocolError(f"node {self.node!r}: round {self.round_id} still open")
        self.round_id += 1
        self.round_open = True
        self.satisfied = False
        self.rec_from = {self.node}
        return QueryMsg(self.node, self.round_id, dict(self.suspected), dict(self.mistake))

    def on_response(self, resp: ResponseMsg) -> RoundStatus:
        if not self.round_open:
            raise ProtocolError(f"node {self.node!r}: no open round")
        if resp.round_id == self.round_id:
            self.rec_from.add(resp.sender)
            if len(self.rec_from) >= self.quorum:
                self.satisfied = True
        return RoundStatus.SATISFIED if self.satisfied else RoundStatus.PENDING

    def harvest_response(self, resp: ResponseMsg) -> None:
        """Fold a late response into ``rec_from`` while the round is held open."""
        if not (self.round_open and self.satisfied):
            raise ProtocolError(f"node {self.node!r}: harvest outside a satisfied round")
        if resp.round_id == self.round_id:
            self.rec_from.add(resp.sender)

    def finish_round(self) -> None:
        if not (self.round_open and self.satisfied):
            raise ProtocolError(f"node {self.node!r}: round {self.round_id} not satisfied")
        for pj in sorted(self.known - self.rec_from):
            if pj in self.suspected:
                continue
            old = self.mistake.pop(pj, None)
            if old is not None:
                self.counter = max(self.counter, old + 1)
            self.suspected[pj] = self.counter
        self.counter += 1
        self.round_open = False
        self.satisfied = False

    def abandon_round(self) -> None:
        """Close the open round without drawing conclusions from it.

        Used when a node reattaches after moving: responses to its frozen
        query can no longer arrive.
        """
        self.round_open = False
        self.satisfied = False

    # -- task T2: query handling -------------------------------------------

    def handle_query(self, q: QueryMsg, mobility: bool = False) -> ResponseMsg:
        if q.sender != self.node:
            self.known.add(q.sender)
        suspected, mistake = self.suspected, self.mistake

        for px, cx in sorted(q.suspected.items()):
            current = suspected.get(px)
            if current is None:
                current = mistake.get(px)
            if current is not None and current >= cx:
                continue
            if px == self.node:
                self.counter = max(self.counter, cx + 1)
                mistake[px] = self.counter
            else:
                suspected[px] = cx
                mistake.pop(px, None)

        for px, cx in sorted(q.mistake.items()):
            if px in suspected:
                fresh = suspected[px] <= cx
            elif px in mistake:
                # strict, so relaying a mistake we already hold is a no-op
                fresh = mistake[px] < cx
            else:
                fresh = True
            if not fresh:
                continue
            mistake[px] = cx
            suspected.pop(px, None)
            if mobility and px != q.sender:
                self.known.discard(px)

        return ResponseMsg(self.node, q.round_id)

    # -- output ----------------------------------------------------------------

    def suspicions(self) -> Set[NodeId]:
        return set(self.suspected)

    def suspected_entries(self) -> Iterator[TaggedEntry]:
        return (TaggedEntry(n, c) for n, c in sorted(self.suspected.items()))

    def mistake_entries(self) -> Iterator[TaggedEntry]:
        return (TaggedEntry(n, c) for n, c in sorted(self.mistake.items()))

    def snapshot(self) -> dict:
        """Copy of the protocol variables (round bookkeeping excluded)."""
        return {
            "counter": self.counter,
            "suspected": dict(self.suspected),
            "mistake": dict(self.mistake),
            "known": frozenset(self.known),
        }


def fd_init(node: NodeId, f: int, d: int) -> FdState:
    if f < 0:
        raise ConfigurationError(f"f must be non-negative, got {f}")
    if d <= f + 1:
        raise ConfigurationError(
            f"range density d={d} must exceed f+1={f + 1} for an f-covering network"
        )
    return FdState(node=node, f=f, d=d)
