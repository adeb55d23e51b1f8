"""Gossip heartbeat failure detector used as the timer-based baseline.

Every ``delta`` seconds a node bumps its own heartbeat counter and broadcasts
its whole vector. Receivers keep the pointwise maximum and re-arm a ``theta``
timeout for every entry that grew. An expired timeout means suspicion.

Membership is learned lazily: an id is only ever suspected after it has
appeared in some received vector. Vectors are stored as numpy arrays over a
:class:`NodeIndex` (id -> slot); states sharing one index merge without any
per-entry Python work. A slot holding ``-1`` is an id the node has not heard of.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Hashable, Iterable, List, Mapping, Optional, Set

import numpy as np

from .fdcore import ConfigurationError

NodeId = Hashable
UNKNOWN = -1


class NodeIndex:
    """Append-only id -> array slot table."""

    def __init__(self, ids: Iterable[NodeId] = ()):
        self.ids: List[NodeId] = []
        self.slot: Dict[NodeId, int] = {}
        for i in ids:
            self.add(i)

    def add(self, node: NodeId) -> int:
        s = self.slot.get(node)
        if s is None:
            s = self.slot[node] = len(self.ids)
            self.ids.append(node)
        return s

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class HeartbeatMsg:
    sender: NodeId
    beats: np.ndarray
    index: NodeIndex

    @property
    def vector(self) -> Dict[NodeId, int]:
        ids = self.index.ids
        return {ids[k]: int(b) for k, b in enumerate(self.beats) if b != UNKNOWN}

    @classmethod
    def from_mapping(cls, sender: NodeId, vector: Mapping[NodeId, int],
                     index: Optional[NodeIndex] = None) -> "HeartbeatMsg":
        index = NodeIndex() if index is None else index
        for k in vector:
            index.add(k)
        beats = np.full(len(index), UNKNOWN, dtype=np.int64)
        for k, b in vector.items():
            beats[index.slot[k]] = b
        return cls(sender, beats, index)


class HbState:
    def __init__(self, node: NodeId, delta: float, theta: float, next_emit: float,
                 index: Optional[NodeIndex] = None):
        self.node = node
        self.delta = delta
        self.theta = theta
        self.next_emit = next_emit
        self.index = NodeIndex() if index is None else index
        self._me = self.index.add(node)
        self._beats = np.full(len(self.index), UNKNOWN, dtype=np.int64)
        self._deadlines = np.full(len(self.index), np.inf)
        self._beats[self._me] = 0

    def _fit(self, size: int) -> None:
        grow = size - len(self._beats)
        if grow > 0:
            self._beats = np.concatenate([self._beats, np.full(grow, UNKNOWN, dtype=np.int64)])
            self._deadlines = np.concatenate([self._deadlines, np.full(grow, np.inf)])

    @property
    def vector(self) -> Dict[NodeId, int]:
        ids = self.index.ids
        return {ids[k]: int(b) for k, b in enumerate(self._beats) if b != UNKNOWN}

    @property
    def deadlines(self) -> Dict[NodeId, float]:
        ids = self.index.ids
        return {ids[k]: float(t) for k, t in enumerate(self._deadlines) if np.isfinite(t)}

    def tick(self, now: float) -> Optional[HeartbeatMsg]:
        if now < self.next_emit:
            return None
        self._beats[self._me] += 1
        self.next_emit += self.delta
        # after a pause (e.g. while detached) skip missed slots rather than burst
        while self.next_emit <= now:
            self.next_emit += self.delta
        return HeartbeatMsg(self.node, self._beats.copy(), self.index)

    def receive(self, msg: HeartbeatMsg, now: float) -> List[NodeId]:
        """Merge ``msg`` and return the ids whose entry strictly increased."""
        if msg.index is not self.index:
            msg = HeartbeatMsg.from_mapping(msg.sender, msg.vector, self.index)
        other = msg.beats
        beats = self._beats
        if len(other) != len(beats) or len(beats) != len(self.index):
            self._fit(max(len(self.index), len(other)))
            beats = self._beats
            if len(other) < len(beats):
                pad = np.full(len(beats) - len(other), UNKNOWN, dtype=np.int64)
                other = np.concatenate([other, pad])
        newer = other > beats
        newer[self._me] = False
        idx = np.flatnonzero(newer)
        if idx.size == 0:
            return []
        beats[idx] = other[idx]
        self._deadlines[idx] = now + self.theta
        ids = self.index.ids
        return [ids[k] for k in idx.tolist()]

    def suspicions(self, now: float) -> Set[NodeId]:
        ids = self.index.ids
        return {ids[k] for k in np.flatnonzero(self._deadlines <= now).tolist() if k != self._me}

    def earliest_deadline(self, skip: Iterable[NodeId] = ()) -> Optional[float]:
        """Soonest pending expiry among ids not in ``skip``."""
        d = self._deadlines.copy()
        for n in skip:
            s = self.index.slot.get(n)
            if s is not None and s < len(d):
                d[s] = np.inf
        if d.size == 0:
            return None
        t = float(d.min())
        return t if np.isfinite(t) else None


def hb_init(node: NodeId, delta: float, theta: float, now: float = 0.0,
            index: Optional[NodeIndex] = None) -> HbState:
    if delta <= 0:
        raise ConfigurationError(f"gossip period must be positive, got {delta}")
    if theta <= delta:
        raise ConfigurationError(f"timeout theta={theta} must exceed period delta={delta}")
    return HbState(node, delta, theta, now, index)
