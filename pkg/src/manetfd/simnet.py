"""Seeded discrete-event simulation of failure detectors over a unit-disk network.

One :class:`Simulation` owns every node's protocol state and a single event
heap ordered by ``(time, seq)``; ``seq`` is a FIFO counter so equal-time
events keep their scheduling order and a run is reproducible from its seed.

Links are reliable. A broadcast reaches every neighbour that is up when it is
sent and still up when it arrives; crashed and moving nodes neither send nor
receive. One-hop delays are uniform on ``[0.5, 1.5] * delta_mean``.
"""
from __future__ import annotations

import heapq
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Set, Tuple

from .fdcore import ConfigurationError, FdState, RoundStatus, fd_init
from .heartbeat import HbState, NodeIndex, hb_init
from .topology import Point, Topology, in_range

log = logging.getLogger(__name__)

ASYNC = "async"
HEARTBEAT = "heartbeat"

UP, CRASHED, MOVING = "up", "crashed", "moving"

SUSPECT, UNSUSPECT = "suspect", "unsuspect"

# event kinds
DELIVER_QUERY = "deliver_query"
DELIVER_RESPONSE = "deliver_response"
DELIVER_HEARTBEAT = "deliver_heartbeat"
ROUND_START = "round_start"
HARVEST_END = "harvest_end"
HB_TICK = "hb_tick"
HB_CHECK = "hb_check"
CRASH = "crash"
MOVE_START = "move_start"
MOVE_END = "move_end"


@dataclass
class SimConfig:
    protocol: str = ASYNC
    delta_mean: float = 0.001
    round_delta: float = 1.0
    theta: float = 2.0
    duration: float = 60.0
    seed: int = 0
    f: int = 1
    d: Optional[int] = None
    mobility: bool = False
    rp_node: Optional[int] = None

    def validate(self) -> None:
        if self.protocol not in (ASYNC, HEARTBEAT):
            raise ConfigurationError(f"unknown protocol {self.protocol!r}")
        for name in ("delta_mean", "round_delta", "theta"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.duration < 0:
            raise ConfigurationError("duration must be non-negative")
        if self.protocol == HEARTBEAT and self.theta <= self.round_delta:
            raise ConfigurationError("theta must exceed the gossip period")


class Crash(NamedTuple):
    node: int
    time: float


class Move(NamedTuple):
    node: int
    start: float
    end: float
    destination: Point

    @classmethod
    def at_speed(cls, top: Topology, node: int, start: float, speed: float,
                 destination: Point) -> "Move":
        src = top.sites[node]
        dist = math.hypot(destination[0] - src.x, destination[1] - src.y)
        return cls(node, start, start + (dist / speed if dist else 0.0), Point(*destination))


class SuspicionRecord(NamedTuple):
    time: float
    observer: int
    target: int
    change: str


class RoundRecord(NamedTuple):
    time: float
    node: int
    round_id: int
    rec_from: frozenset
    neighbors: frozenset


@dataclass
class Witness:
    """Raw observations the behavioural validators consume.

    ``known_adds`` holds ``(time, holder, member)`` whenever ``member`` enters
    ``holder``'s known set. ``query_receipts`` holds ``(time, receiver,
    sender, epoch)`` for the first query from each sender within one
    connection epoch of the receiver (epochs advance on every reattach).
    ``range_changes`` holds ``(time, node, neighbor, joined)``.
    """

    f: int
    nodes: List[int]
    known_adds: List[Tuple[float, int, int]] = field(default_factory=list)
    query_receipts: List[Tuple[float, int, int, int]] = field(default_factory=list)
    queries_sent: Dict[int, int] = field(default_factory=dict)
    rounds: List[RoundRecord] = field(default_factory=list)
    range_changes: List[Tuple[float, int, int, bool]] = field(default_factory=list)
    reconnects: List[Tuple[float, int, int]] = field(default_factory=list)
    crashed: Dict[int, float] = field(default_factory=dict)


@dataclass
class RunResult:
    config: SimConfig
    nodes: List[int]
    timeline: List[SuspicionRecord]
    crashes: List[Crash]
    moves: List[Move]
    witness: Witness
    detach_states: Dict[int, List[dict]] = field(default_factory=dict)
    reattach_states: Dict[int, List[dict]] = field(default_factory=dict)
    events_processed: int = 0

    def log_lines(self) -> List[str]:
        return [f"{r.time:.9f} {r.change} {r.observer} {r.target}" for r in self.timeline]


class Simulation:
    def __init__(self, config: SimConfig, top: Topology,
                 schedule: Sequence = (), record_witness: bool = True):
        config.validate()
        self.config = config
        self.top = top
        self.rng = random.Random(config.seed)
        self.nodes = top.nodes
        self.positions: Dict[int, Point] = dict(top.sites)
        self.adj: Dict[int, List[int]] = {k: sorted(v) for k, v in top.adjacency.items()}
        self.status: Dict[int, str] = {k: UP for k in self.nodes}
        self.record_witness = record_witness
        self.witness = Witness(config.f, list(self.nodes))
        self.timeline: List[SuspicionRecord] = []
        self.heap: list = []
        self.seq = 0
        self.now = 0.0

        self.crashes = sorted((e for e in schedule if isinstance(e, Crash)), key=lambda e: (e.time, e.node))
        self.moves = sorted((e for e in schedule if isinstance(e, Move)), key=lambda e: (e.start, e.node))
        self._check_schedule(schedule)

        self.d = config.d if config.d is not None else top.density()
        self._lo = 0.5 * config.delta_mean
        self._span = config.delta_mean
        self.epoch: Dict[int, int] = {k: 0 for k in self.nodes}
        self._seen_q: Dict[int, Set[int]] = {k: set() for k in self.nodes}
        self.detach_states: Dict[int, List[dict]] = {}
        self.reattach_states: Dict[int, List[dict]] = {}

        self.fd: Dict[int, FdState] = {}
        self.hb: Dict[int, HbState] = {}
        self.hb_suspected: Dict[int, Set[int]] = {}
        self.hb_check_at: Dict[int, Optional[float]] = {}
        self._init_protocol()
        for c in self.crashes:
            self.push(c.time, CRASH, c.node)
        for m in self.moves:
            self.push(m.start, MOVE_START, m.node, m)
            self.push(m.end, MOVE_END, m.node, m)

    # -- setup -----------------------------------------------------------------

    def _check_schedule(self, schedule) -> None:
        known = set(self.nodes)
        horizon = self.config.duration
        for e in schedule:
            if not isinstance(e, (Crash, Move)):
                raise ConfigurationError(f"unsupported schedule entry {e!r}")
            if e.node not in known:
                raise ConfigurationError(f"schedule refers to unknown node {e.node!r}")
        for c in self.crashes:
            if not 0 <= c.time <= horizon:
                raise ConfigurationError(f"crash of {c.node} at {c.time} outside [0, {horizon}]")
        last_end: Dict[int, float] = {}
        for m in self.moves:
            if not (0 <= m.start <= m.end <= horizon):
                raise ConfigurationError(f"move of {m.node} [{m.start}, {m.end}] outside run")
            if m.node in last_end and m.start < last_end[m.node]:
                raise ConfigurationError(f"overlapping moves for node {m.node}")
            last_end[m.node] = m.end
        if self.config.rp_node is not None and self.config.rp_node not in known:
            raise ConfigurationError(f"rp_node {self.config.rp_node!r} is not in the topology")

    def _init_protocol(self) -> None:
        cfg = self.config
        period = cfg.round_delta
        if cfg.protocol == ASYNC:
            for k in self.nodes:
                self.fd[k] = fd_init(k, cfg.f, self.d)
            for k in self.nodes:
                self.push(self.rng.uniform(0.0, period), ROUND_START, k)
        else:
            index = NodeIndex(self.nodes)
            for k in self.nodes:
                start = self.rng.uniform(0.0, period)
                self.hb[k] = hb_init(k, period, cfg.theta, start, index)
                self.hb_suspected[k] = set()
                self.hb_check_at[k] = None
                self.push(start, HB_TICK, k)

    # -- event plumbing ------------------------------------------------------

    def push(self, time: float, kind: str, node: int, payload=None) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (time, self.seq, kind, node, payload))

    def delay(self) -> float:
        return self._lo + self._span * self.rng.random()

    def deliver_broadcast(self, sender: int, kind: str, msg) -> int:
        """Schedule one delivery per up neighbour of ``sender``; returns the count."""
        status = self.status
        count = 0
        for j in self.adj[sender]:
            if status[j] is UP:
                self.push(self.now + self.delay(), kind, j, msg)
                count += 1
        return count

    def run(self) -> RunResult:
        handlers = {
            DELIVER_QUERY: self._on_query,
            DELIVER_RESPONSE: self._on_response,
            DELIVER_HEARTBEAT: self._on_heartbeat,
            ROUND_START: self._on_round_start,
            HARVEST_END: self._on_harvest_end,
            HB_TICK: self._on_hb_tick,
            HB_CHECK: self._on_hb_check,
            CRASH: self._on_crash,
            MOVE_START: self._on_move_start,
            MOVE_END: self._on_move_end,
        }
        heap = self.heap
        horizon = self.config.duration
        processed = 0
        while heap and heap[0][0] <= horizon:
            time, _, kind, node, payload = heapq.heappop(heap)
            self.now = time
            handlers[kind](node, payload)
            processed += 1
        self.now = horizon
        log.debug("run seed=%s processed %d events", self.config.seed, processed)
        return RunResult(
            config=self.config,
            nodes=list(self.nodes),
            timeline=self.timeline,
            crashes=list(self.crashes),
            moves=list(self.moves),
            witness=self.witness,
            detach_states=self.detach_states,
            reattach_states=self.reattach_states,
            events_processed=processed,
        )

    def _record(self, observer: int, before: Set[int], after: Set[int]) -> None:
        now = self.now
        for t in sorted(after - before):
            self.timeline.append(SuspicionRecord(now, observer, t, SUSPECT))
        for t in sorted(before - after):
            self.timeline.append(SuspicionRecord(now, observer, t, UNSUSPECT))

    # -- asynchronous detector -------------------------------------------------

    def _start_round(self, node: int) -> None:
        q = self.fd[node].begin_round()
        if self.record_witness:
            self.witness.queries_sent[node] = self.witness.queries_sent.get(node, 0) + 1
        self.deliver_broadcast(node, DELIVER_QUERY, q)

    def _on_round_start(self, node: int, _payload) -> None:
        if self.status[node] is UP:
            self._start_round(node)

    def _on_query(self, node: int, q) -> None:
        if self.status[node] is not UP:
            return
        state = self.fd[node]
        before = set(state.suspected)
        had = q.sender in state.known
        resp = state.handle_query(q, self.config.mobility)
        if before.symmetric_difference(state.suspected):
            self._record(node, before, set(state.suspected))
        if self.record_witness:
            if not had and q.sender in state.known:
                self.witness.known_adds.append((self.now, node, q.sender))
            seen = self._seen_q[node]
            if q.sender not in seen:
                seen.add(q.sender)
                self.witness.query_receipts.append((self.now, node, q.sender, self.epoch[node]))
        if node == self.config.rp_node:
            lag = self._lo
        else:
            lag = self.delay()
        self.push(self.now + lag, DELIVER_RESPONSE, q.sender, resp)

    def _on_response(self, node: int, resp) -> None:
        if self.status[node] is not UP:
            return
        state = self.fd[node]
        if not state.round_open or resp.round_id != state.round_id:
            return
        if state.satisfied:
            state.harvest_response(resp)
        elif state.on_response(resp) is RoundStatus.SATISFIED:
            self.push(self.now + self.config.round_delta, HARVEST_END, node, state.round_id)

    def _on_harvest_end(self, node: int, round_id: int) -> None:
        if self.status[node] is not UP:
            return
        state = self.fd[node]
        if not state.round_open or state.round_id != round_id:
            return
        before = set(state.suspected)
        rec_from = frozenset(state.rec_from)
        state.finish_round()
        if before.symmetric_difference(state.suspected):
            self._record(node, before, set(state.suspected))
        if self.record_witness:
            self.witness.rounds.append(RoundRecord(
                self.now, node, round_id, rec_from, frozenset(self.adj[node])))
        self._start_round(node)

    # -- heartbeat baseline ----------------------------------------------------

    def _on_hb_tick(self, node: int, _payload) -> None:
        if self.status[node] is not UP:
            return
        state = self.hb[node]
        msg = state.tick(self.now)
        if msg is not None:
            self.deliver_broadcast(node, DELIVER_HEARTBEAT, msg)
        self.push(state.next_emit, HB_TICK, node)

    def _on_heartbeat(self, node: int, msg) -> None:
        if self.status[node] is not UP:
            return
        state = self.hb[node]
        refreshed = state.receive(msg, self.now)
        if not refreshed:
            return
        suspected = self.hb_suspected[node]
        cleared = suspected.intersection(refreshed)
        if cleared:
            self._record(node, set(suspected), suspected - cleared)
            suspected -= cleared
        if self.hb_check_at[node] is None:
            self._arm_check(node, self.now + state.theta)

    def _arm_check(self, node: int, at: float) -> None:
        self.hb_check_at[node] = at
        self.push(at, HB_CHECK, node, at)

    def _on_hb_check(self, node: int, at: float) -> None:
        if self.hb_check_at[node] != at:
            return
        self.hb_check_at[node] = None
        if self.status[node] is not UP:
            return
        self._hb_scan(node)

    def _hb_scan(self, node: int) -> None:
        state = self.hb[node]
        suspected = self.hb_suspected[node]
        now = self.now
        expired = state.suspicions(now)
        fresh = expired - suspected
        if fresh:
            self._record(node, set(suspected), suspected | fresh)
            suspected |= fresh
        nxt = state.earliest_deadline(suspected)
        if nxt is not None:
            self._arm_check(node, nxt)

    # -- faults and mobility ---------------------------------------------------

    def _on_crash(self, node: int, _payload) -> None:
        if self.status[node] is CRASHED:
            return
        was_up = self.status[node] is UP
        self.status[node] = CRASHED
        self.witness.crashed[node] = self.now
        if was_up:
            self._detach_links(node)

    def _detach_links(self, node: int) -> None:
        if self.record_witness:
            for j in self.adj[node]:
                self.witness.range_changes.append((self.now, j, node, False))

    def _on_move_start(self, node: int, move: Move) -> None:
        if self.status[node] is not UP:
            return
        self.status[node] = MOVING
        self._detach_links(node)
        for j in self.adj[node]:
            self.adj[j].remove(node)
        self.adj[node] = []
        if self.config.protocol == ASYNC:
            self.detach_states.setdefault(node, []).append(self.fd[node].snapshot())
        log.debug("t=%.3f node %d detached", self.now, node)

    def _on_move_end(self, node: int, move: Move) -> None:
        if self.status[node] is not MOVING:
            return
        self.positions[node] = move.destination
        r = self.top.radius
        nbrs = [j for j in self.nodes
                if j != node and self.status[j] is UP
                and in_range(self.positions[j], move.destination, r)]
        for j in nbrs:
            self.adj[j].append(node)
            self.adj[j].sort()
        self.adj[node] = sorted(nbrs)
        self.status[node] = UP
        self.epoch[node] += 1
        self._seen_q[node] = set()
        if self.record_witness:
            self.witness.reconnects.append((self.now, node, self.epoch[node]))
            for j in nbrs:
                self.witness.range_changes.append((self.now, j, node, True))
        log.debug("t=%.3f node %d reattached with %d neighbours", self.now, node, len(nbrs))
        if self.config.protocol == ASYNC:
            state = self.fd[node]
            self.reattach_states.setdefault(node, []).append(state.snapshot())
            state.abandon_round()
            self._start_round(node)
        else:
            self.push(self.now, HB_TICK, node)
            self.hb_check_at[node] = None
            self._hb_scan(node)


def run(config: SimConfig, top: Topology, schedule: Sequence = (),
        record_witness: bool = True) -> RunResult:
    return Simulation(config, top, schedule, record_witness).run()
